// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "mx4sim/cli/arm_summary.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mx4sim::cli {

MeanInterval t_interval(std::span<const double> values, double level) {
  MeanInterval out;
  const std::size_t n = values.size();
  if (n == 0) return out;
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (n < 2) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  const double se = std::sqrt(ss / (n - 1) / n);
  const boost::math::students_t dist(static_cast<double>(n - 1));
  const double t = boost::math::quantile(dist, 0.5 + level / 2.0);
  out.ci = ConfidenceInterval{out.mean - t * se, out.mean + t * se};
  return out;
}

MeanInterval paired_difference(std::span<const double> a,
                               std::span<const double> b, double level) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("paired_difference: size mismatch");
  }
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return t_interval(d, level);
}

OrderingVerdict ordering_verdict(
    const std::map<BackwardMode, std::vector<double>>& arms,
    const std::map<std::size_t, std::vector<double>>& ablation, double level) {
  OrderingVerdict v;
  const auto rht_sr = arms.find(BackwardMode::kMxfp4RhtSr);
  if (rht_sr != arms.end()) {
    const double ref = t_interval(rht_sr->second, level).mean;
    if (const auto e = arms.find(BackwardMode::kExact); e != arms.end()) {
      v.exact_close = t_interval(e->second, level).mean <= (1.0 + kExactMargin) * ref;
    }
    if (const auto m = arms.find(BackwardMode::kMxfp4); m != arms.end()) {
      const MeanInterval d = paired_difference(m->second, rht_sr->second, level);
      if (d.ci) v.mxfp4_separated = d.ci->low > 0.0;
    }
  }
  if (ablation.size() >= 2) {
    bool ok = true;
    bool determinable = true;
    for (auto it = std::next(ablation.begin()); it != ablation.end(); ++it) {
      const MeanInterval d = paired_difference(it->second, std::prev(it)->second, level);
      if (!d.ci) {
        determinable = false;
        break;
      }
      ok = ok && d.ci->low <= 0.0;
    }
    if (determinable) v.ablation_non_increasing = ok;
  }
  return v;
}

}  // namespace mx4sim::cli
