// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "mx4sim/cli/experiment_config.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

namespace mx4sim::cli {
namespace {

using nlohmann::json;

// Reads typed fields out of one JSON object and rejects leftovers.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <typename T>
  void read(const std::string& key, T& dst) {
    if (const json* v = find(key)) dst = convert<T>(*v, path_ + "." + key);
  }

  template <typename T>
  void read_list(const std::string& key, std::vector<T>& dst) {
    const json* v = find(key);
    if (v == nullptr) return;
    const std::string where = path_ + "." + key;
    if (!v->is_array()) throw ConfigError(where + ": expected an array");
    std::vector<T> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      out.push_back(convert<T>((*v)[i], where + "[" + std::to_string(i) + "]"));
    }
    dst = std::move(out);
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.contains(key)) {
        throw ConfigError(path_ + ": unknown key '" + key + "'");
      }
    }
  }

  template <typename T>
  static T convert(const json& v, const std::string& where) {
    if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError(where + ": expected a number");
      return v.get<double>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(where + ": expected a string");
      return v.get<std::string>();
    } else {
      static_assert(std::is_unsigned_v<T>);
      if (!v.is_number_unsigned()) {
        throw ConfigError(where + ": expected a non-negative integer");
      }
      return v.get<T>();
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

QuantAlgo parse_algo(const std::string& s, const std::string& where) {
  if (s == "reference") return QuantAlgo::kReference;
  if (s == "unbiased") return QuantAlgo::kUnbiased;
  throw ConfigError(where + ": expected 'reference' or 'unbiased', got '" + s + "'");
}

json to_json(const VarianceSweepConfig& c) {
  return {{"block_sizes", c.block_sizes},
          {"outlier_props", c.outlier_props},
          {"outlier_scale", c.outlier_scale},
          {"n_samples", c.n_samples},
          {"inner_draws", c.inner_draws},
          {"seed", c.seed},
          {"group_size", c.group_size},
          {"rht_g", c.rht_g},
          {"bootstrap_resamples", c.bootstrap_resamples},
          {"ci_level", c.ci_level}};
}

json base_to_json(const TrainConfig& c) {
  return {{"rht_g", c.rht_g},
          {"dims", c.dims},
          {"activation", std::string(to_string(c.activation))},
          {"teacher_dims", c.teacher_dims},
          {"noise",
           {{"label_sd", c.noise.label_sd},
            {"outlier_prob", c.noise.outlier_prob},
            {"outlier_sd", c.noise.outlier_sd}}},
          {"optim",
           {{"lr", c.optim.lr},
            {"beta1", c.optim.beta1},
            {"beta2", c.optim.beta2},
            {"eps", c.optim.eps},
            {"weight_decay", c.optim.weight_decay},
            {"warmup_fraction", c.optim.warmup_fraction}}},
          {"steps", c.steps},
          {"batch", c.batch},
          {"eval_batch", c.eval_batch}};
}

json to_json(const TrainPlan& p) {
  json j = base_to_json(p.base);
  json arms = json::array();
  for (BackwardMode m : p.arms) arms.push_back(std::string(to_string(m)));
  j["arms"] = arms;
  j["seeds"] = p.seeds;
  j["ablation_g"] = p.ablation_g;
  return j;
}

void read_variance(const json& j, VarianceSweepConfig& c) {
  Section s(j, "variance_sweep");
  s.read_list("block_sizes", c.block_sizes);
  s.read_list("outlier_props", c.outlier_props);
  s.read("outlier_scale", c.outlier_scale);
  s.read("n_samples", c.n_samples);
  s.read("inner_draws", c.inner_draws);
  s.read("seed", c.seed);
  s.read("group_size", c.group_size);
  s.read("rht_g", c.rht_g);
  s.read("bootstrap_resamples", c.bootstrap_resamples);
  s.read("ci_level", c.ci_level);
  s.finish();
}

void read_train(const json& j, TrainPlan& p) {
  Section s(j, "train");
  TrainConfig& c = p.base;
  s.read("rht_g", c.rht_g);
  s.read_list("dims", c.dims);
  std::string act(to_string(c.activation));
  s.read("activation", act);
  const auto parsed_act = parse_activation(act);
  if (!parsed_act) throw ConfigError("train.activation: unknown '" + act + "'");
  c.activation = *parsed_act;
  s.read_list("teacher_dims", c.teacher_dims);
  if (const json* n = s.find("noise")) {
    Section ns(*n, "train.noise");
    ns.read("label_sd", c.noise.label_sd);
    ns.read("outlier_prob", c.noise.outlier_prob);
    ns.read("outlier_sd", c.noise.outlier_sd);
    ns.finish();
  }
  if (const json* o = s.find("optim")) {
    Section os(*o, "train.optim");
    os.read("lr", c.optim.lr);
    os.read("beta1", c.optim.beta1);
    os.read("beta2", c.optim.beta2);
    os.read("eps", c.optim.eps);
    os.read("weight_decay", c.optim.weight_decay);
    os.read("warmup_fraction", c.optim.warmup_fraction);
    os.finish();
  }
  s.read("steps", c.steps);
  s.read("batch", c.batch);
  s.read("eval_batch", c.eval_batch);
  if (const json* a = s.find("arms")) {
    if (a->is_string()) {
      p.arms = parse_arms(a->get<std::string>());
    } else {
      std::vector<std::string> names;
      s.read_list("arms", names);
      p.arms.clear();
      for (const auto& n : names) {
        const auto m = parse_backward_mode(n);
        if (!m) throw ConfigError("train.arms: unknown arm '" + n + "'");
        p.arms.push_back(*m);
      }
    }
  }
  s.read_list("seeds", p.seeds);
  s.read_list("ablation_g", p.ablation_g);
  s.finish();
}

void validate(const ExperimentConfig& cfg) {
  try {
    cfg.variance_sweep.validate();
    cfg.train.base.validate();
    for (std::size_t g : cfg.train.ablation_g) {
      TrainConfig t = cfg.train.base;
      t.rht_g = g;
      t.validate();
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (cfg.train.arms.empty()) throw ConfigError("train.arms: must not be empty");
  if (cfg.train.seeds.empty()) throw ConfigError("train.seeds: must not be empty");
}

}  // namespace

std::string_view to_string(QuantAlgo algo) {
  return algo == QuantAlgo::kReference ? "reference" : "unbiased";
}

std::vector<BackwardMode> parse_arms(std::string_view text) {
  if (text == "all") {
    return {std::begin(kAllBackwardModes), std::end(kAllBackwardModes)};
  }
  std::vector<BackwardMode> arms;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    const std::string_view name = text.substr(start, comma - start);
    const auto m = parse_backward_mode(name);
    if (!m) throw ConfigError("unknown arm '" + std::string(name) + "'");
    arms.push_back(*m);
    start = comma + 1;
  }
  return arms;
}

ExperimentConfig parse_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  Section top(j, "config");
  if (const json* q = top.find("quantize")) {
    Section qs(*q, "quantize");
    std::string algo(to_string(cfg.quantize.algo));
    qs.read("algo", algo);
    cfg.quantize.algo = parse_algo(algo, "quantize.algo");
    qs.read("seed", cfg.quantize.seed);
    qs.finish();
  }
  if (const json* v = top.find("variance_sweep")) read_variance(*v, cfg.variance_sweep);
  if (const json* t = top.find("train")) read_train(*t, cfg.train);
  top.finish();
  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string dump_config(const ExperimentConfig& cfg) {
  const json j = {{"quantize",
                   {{"algo", std::string(to_string(cfg.quantize.algo))},
                    {"seed", cfg.quantize.seed}}},
                  {"variance_sweep", to_json(cfg.variance_sweep)},
                  {"train", to_json(cfg.train)}};
  return j.dump(2) + "\n";
}

std::string dump_variance_sweep(const VarianceSweepConfig& cfg) {
  return to_json(cfg).dump();
}

std::string dump_train_config(const TrainConfig& cfg) {
  json j = base_to_json(cfg);
  j["backward_mode"] = std::string(to_string(cfg.backward_mode));
  j["seed"] = cfg.seed;
  return j.dump();
}

}  // namespace mx4sim::cli
