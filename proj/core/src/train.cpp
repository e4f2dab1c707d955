// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "mx4sim/train.hpp"


#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "mx4sim/errors.hpp"
#include "mx4sim/hash.hpp"
#include "mx4sim/mx.hpp"

namespace mx4sim {

namespace {

constexpr std::uint64_t kTeacherTag = 0;
constexpr std::uint64_t kStudentTag = 1;
constexpr std::uint64_t kBatchTag = 2;
constexpr std::uint64_t kEvalIndex = ~std::uint64_t{0};

double activate(Activation a, double z) {
  return a == Activation::kTanh ? std::tanh(z) : (z > 0.0 ? z : 0.0);
}

// Derivative expressed through the pre-activation z and output y = act(z).
double activate_grad(Activation a, double z, double y) {
  return a == Activation::kTanh ? 1.0 - y * y : (z > 0.0 ? 1.0 : 0.0);
}

std::string join_dims(const std::vector<std::size_t>& dims) {
  std::string out;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(dims[i]);
  }
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string_view to_string(BackwardMode m) {
  switch (m) {
    case BackwardMode::kExact: return "EXACT";
    case BackwardMode::kMxfp4: return "MXFP4";
    case BackwardMode::kMxfp4Rht: return "MXFP4_RHT";
    case BackwardMode::kMxfp4Sr: return "MXFP4_SR";
    case BackwardMode::kMxfp4RhtSr: return "MXFP4_RHT_SR";
  }
  return "UNKNOWN";
}

std::optional<BackwardMode> parse_backward_mode(std::string_view s) {
  for (BackwardMode m : kAllBackwardModes) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

std::string_view to_string(Activation a) {
  return a == Activation::kTanh ? "tanh" : "relu";
}

std::optional<Activation> parse_activation(std::string_view s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "relu") return Activation::kRelu;
  return std::nullopt;
}

GemmMode gemm_mode(BackwardMode m, std::size_t rht_g) {
  GemmMode g;
  g.rht_g = rht_g;
  switch (m) {
    case BackwardMode::kExact:
      g.rounding = Rounding::kExact;
      break;
    case BackwardMode::kMxfp4:
      g.rounding = Rounding::kNearest;
      break;
    case BackwardMode::kMxfp4Rht:
      g.rounding = Rounding::kNearest;
      g.use_rht = true;
      break;
    case BackwardMode::kMxfp4Sr:
      g.rounding = Rounding::kStochastic;
      break;
    case BackwardMode::kMxfp4RhtSr:
      g.rounding = Rounding::kStochastic;
      g.use_rht = true;
      break;
  }
  return g;
}

// --- model ------------------------------------------------------------------

MlpModel MlpModel::init(std::vector<std::size_t> dims, Activation act,
                        const StreamKey& key) {
  if (dims.size() < 2) throw std::invalid_argument("MlpModel: need >= 2 dims");
  MlpModel model;
  model.dims = std::move(dims);
  model.activation = act;
  for (std::size_t l = 0; l + 1 < model.dims.size(); ++l) {
    const std::size_t in = model.dims[l];
    const std::size_t out = model.dims[l + 1];
    const CounterStream stream(key.with_domain(Domain::kData), l);
    const double sd = 1.0 / std::sqrt(static_cast<double>(in));
    LinearLayer layer{Matrix(out, in), std::vector<double>(out, 0.0)};
    for (std::size_t i = 0; i < out * in; ++i) {
      layer.w.data()[i] = sd * stream.normal(i);
    }
    model.layers.push_back(std::move(layer));
  }
  return model;
}

ForwardResult forward(const MlpModel& model, const Matrix& inputs) {
  if (inputs.cols() != model.dims.front()) {
    throw ShapeError("forward: input width does not match model");
  }
  ForwardResult res;
  Matrix h = inputs;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const LinearLayer& layer = model.layers[l];
    Matrix z = exact_gemm(h, layer.w.transposed());
    for (std::size_t r = 0; r < z.rows(); ++r) {
      auto row = z.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += layer.b[c];
    }
    res.cache.inputs.push_back(std::move(h));
    const bool last = l + 1 == model.layers.size();
    if (last) {
      h = z;
    } else {
      h = Matrix(z.rows(), z.cols());
      for (std::size_t i = 0; i < z.size(); ++i) {
        h.data()[i] = activate(model.activation, z.data()[i]);
      }
    }
    res.cache.pre.push_back(std::move(z));
  }
  res.output = std::move(h);
  return res;
}

std::vector<LayerGrad> backward(const MlpModel& model, const ForwardCache& cache,
                                const Matrix& dldy, const GemmMode& mode,
                                const StreamKey& key) {
  const std::size_t n_layers = model.layers.size();
  if (cache.inputs.size() != n_layers || cache.pre.size() != n_layers) {
    throw ShapeError("backward: cache does not match model");
  }
  std::vector<LayerGrad> grads(n_layers);
  Matrix g = dldy;
  for (std::size_t li = n_layers; li-- > 0;) {
    const LinearLayer& layer = model.layers[li];
    const StreamKey layer_key = key.fork(li);
    if (li == 0) {
      // The input gradient of the first layer is never used.
      grads[li].dw = estimate_gemm(g.transposed(), cache.inputs[0], mode,
                                   GemmKeys::from(layer_key.fork(1)));
      grads[li].db.assign(g.cols(), 0.0);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < g.cols(); ++c) grads[li].db[c] += g(r, c);
      }
      break;
    }
    GradPair gp = linear_backward(g, cache.inputs[li], layer.w, mode, layer_key);
    grads[li].dw = std::move(gp.dldw);
    grads[li].db = std::move(gp.dldb);
    // Back through the activation that produced this layer's input.
    const Matrix& z = cache.pre[li - 1];
    const Matrix& y = cache.inputs[li];
    g = std::move(gp.dldx);
    for (std::size_t i = 0; i < g.size(); ++i) {
      g.data()[i] *= activate_grad(model.activation, z.data()[i], y.data()[i]);
    }
  }
  return grads;
}

double mse_loss(const Matrix& output, const Matrix& target) {
  if (output.rows() != target.rows() || output.cols() != target.cols()) {
    throw ShapeError("mse_loss: shape mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < output.size(); ++i) {
    const double d = output.data()[i] - target.data()[i];
    acc += d * d;
  }
  return acc / static_cast<double>(output.size());
}

Matrix mse_grad(const Matrix& output, const Matrix& target) {
  if (output.rows() != target.rows() || output.cols() != target.cols()) {
    throw ShapeError("mse_grad: shape mismatch");
  }
  Matrix g(output.rows(), output.cols());
  const double scale = 2.0 / static_cast<double>(output.size());
  for (std::size_t i = 0; i < output.size(); ++i) {
    g.data()[i] = scale * (output.data()[i] - target.data()[i]);
  }
  return g;
}

// --- task -------------------------------------------------------------------

TeacherStudentTask::TeacherStudentTask(std::uint64_t seed,
                                       std::vector<std::size_t> teacher_dims,
                                       Activation act, double label_noise)
    : TeacherStudentTask(seed, std::move(teacher_dims), act,
                         TaskNoise{label_noise, 0.0, 0.0}) {}

TeacherStudentTask::TeacherStudentTask(std::uint64_t seed,
                                       std::vector<std::size_t> teacher_dims,
                                       Activation act, const TaskNoise& noise)
    : seed_(seed),
      teacher_(MlpModel::init(std::move(teacher_dims), act,
                              StreamKey{seed, Domain::kData, {kTeacherTag}})),
      noise_(noise) {
  auto& out_bias = teacher_.layers.back().b;
  const CounterStream stream(StreamKey{seed, Domain::kData, {kTeacherTag, 1}});
  for (std::size_t i = 0; i < out_bias.size(); ++i) {
    out_bias[i] = 0.5 * stream.normal(i);
  }
}

Batch TeacherStudentTask::make(std::uint64_t index, std::size_t size,
                               bool noisy) const {
  const std::size_t in = teacher_.dims.front();
  const StreamKey key{seed_, Domain::kData, {kBatchTag, index}};
  const CounterStream xs(key, 0);
  Batch b;
  b.inputs = Matrix(size, in);
  for (std::size_t i = 0; i < b.inputs.size(); ++i) {
    b.inputs.data()[i] = xs.normal(i);
  }
  b.targets = forward(teacher_, b.inputs).output;
  if (noisy && (noise_.label_sd > 0.0 || noise_.outlier_prob > 0.0)) {
    const CounterStream noise(key, 1);
    const CounterStream coin(key, 2);
    for (std::size_t i = 0; i < b.targets.size(); ++i) {
      const double sd = coin.uniform(i) < noise_.outlier_prob ? noise_.outlier_sd
                                                              : noise_.label_sd;
      b.targets.data()[i] += sd * noise.normal(i);
    }
  }
  return b;
}

Batch TeacherStudentTask::batch(std::uint64_t index, std::size_t size) const {
  return make(index, size, true);
}

Batch TeacherStudentTask::clean_batch(std::uint64_t index,
                                      std::size_t size) const {
  return make(index, size, false);
}

Batch teacher_student_task(const StreamKey& key, std::size_t batch,
                           std::size_t in_dim) {
  const TeacherStudentTask task(key.seed, {in_dim, 64, 32}, Activation::kTanh,
                                0.0);
  return task.batch(key.coords[0], batch);
}

// --- optimizer --------------------------------------------------------------

double learning_rate(const AdamWConfig& cfg, std::size_t step,
                     std::size_t total_steps) {
  const auto warmup = static_cast<std::size_t>(
      std::ceil(cfg.warmup_fraction * static_cast<double>(total_steps)));
  if (warmup == 0 || step >= warmup) return cfg.lr;
  return cfg.lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
}

AdamW::AdamW(const MlpModel& model, AdamWConfig cfg) : cfg_(cfg) {
  for (const LinearLayer& layer : model.layers) {
    LayerGrad zero{Matrix(layer.w.rows(), layer.w.cols()),
                   std::vector<double>(layer.b.size(), 0.0)};
    m_.push_back(zero);
    v_.push_back(std::move(zero));
  }
}

void AdamW::step(MlpModel& model, const std::vector<LayerGrad>& grads,
                 double lr) {
  if (grads.size() != model.layers.size()) {
    throw ShapeError("AdamW::step: gradient count does not match model");
  }
  t_ += 1;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  auto update = [&](std::span<double> param, std::span<const double> grad,
                    std::span<double> m, std::span<double> v, bool decay) {
    const double keep = 1.0 - lr * cfg_.weight_decay;
    for (std::size_t i = 0; i < param.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * grad[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      if (decay) param[i] *= keep;
      param[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  };
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    LinearLayer& layer = model.layers[l];
    update(layer.w.data(), grads[l].dw.data(), m_[l].dw.data(),
           v_[l].dw.data(), true);
    update(layer.b, grads[l].db, m_[l].db, v_[l].db, false);
  }
}

// --- training loop ----------------------------------------------------------

void TrainConfig::validate() const {
  if (dims.size() < 2 || teacher_dims.size() < 2) {
    throw std::invalid_argument("train: dims need at least input and output");
  }
  if (dims.front() != teacher_dims.front() || dims.back() != teacher_dims.back()) {
    throw std::invalid_argument("train: student and teacher in/out dims differ");
  }
  if (steps == 0 || batch == 0 || eval_batch == 0) {
    throw std::invalid_argument("train: steps and batch sizes must be positive");
  }
  if (!(noise.label_sd >= 0.0) || !(noise.outlier_sd >= 0.0) ||
      !(noise.outlier_prob >= 0.0 && noise.outlier_prob <= 1.0)) {
    throw std::invalid_argument("train: noise sds must be >= 0 and outlier_prob in [0, 1]");
  }
  if (backward_mode != BackwardMode::kExact) {
    for (std::size_t d : dims) {
      if (d % kMxBlockSize != 0) {
        throw std::invalid_argument("train: layer dims must be multiples of 32");
      }
    }
    if (batch % kMxBlockSize != 0) {
      throw std::invalid_argument("train: batch must be a multiple of 32");
    }
    const GemmMode mode = gemm_mode(backward_mode, rht_g);
    if (mode.use_rht) {
      // Reduction dims: output dims for dL/dx (hidden layers only), batch
      // for dL/dW.
      effective_rht_block(mode, batch);
      for (std::size_t l = 2; l < dims.size(); ++l) {
        effective_rht_block(mode, dims[l]);
      }
    }
  }
}

std::string canonical_config(const TrainConfig& cfg) {
  std::ostringstream os;
  os << "activation=" << to_string(cfg.activation) << '\n'
     << "backward_mode=" << to_string(cfg.backward_mode) << '\n'
     << "batch=" << cfg.batch << '\n'
     << "dims=" << join_dims(cfg.dims) << '\n'
     << "eval_batch=" << cfg.eval_batch << '\n'
     << "noise.label_sd=" << format_double(cfg.noise.label_sd) << '\n'
     << "noise.outlier_prob=" << format_double(cfg.noise.outlier_prob) << '\n'
     << "noise.outlier_sd=" << format_double(cfg.noise.outlier_sd) << '\n'
     << "optim.beta1=" << format_double(cfg.optim.beta1) << '\n'
     << "optim.beta2=" << format_double(cfg.optim.beta2) << '\n'
     << "optim.eps=" << format_double(cfg.optim.eps) << '\n'
     << "optim.lr=" << format_double(cfg.optim.lr) << '\n'
     << "optim.warmup_fraction=" << format_double(cfg.optim.warmup_fraction) << '\n'
     << "optim.weight_decay=" << format_double(cfg.optim.weight_decay) << '\n'
     << "rht_g=" << cfg.rht_g << '\n'
     << "seed=" << cfg.seed << '\n'
     << "steps=" << cfg.steps << '\n'
     << "teacher_dims=" << join_dims(cfg.teacher_dims) << '\n';
  return os.str();
}

std::string config_hash(const TrainConfig& cfg) {
  return git_blob_hash(canonical_config(cfg));
}

RunRecord train_run(const TrainConfig& cfg) {
  cfg.validate();
  RunRecord rec;
  rec.config = cfg;
  rec.config_hash = config_hash(cfg);
  rec.seed = cfg.seed;

  const TeacherStudentTask task(cfg.seed, cfg.teacher_dims, cfg.activation,
                                cfg.noise);
  MlpModel model = MlpModel::init(cfg.dims, cfg.activation,
                                  StreamKey{cfg.seed, Domain::kData, {kStudentTag}});
  AdamW opt(model, cfg.optim);
  const GemmMode mode = gemm_mode(cfg.backward_mode, cfg.rht_g);
  const Batch eval = task.clean_batch(kEvalIndex, cfg.eval_batch);
  rec.initial_eval_loss = mse_loss(forward(model, eval.inputs).output, eval.targets);

  rec.losses.reserve(cfg.steps);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const Batch batch = task.batch(step, cfg.batch);
    ForwardResult fwd = forward(model, batch.inputs);
    const double loss = mse_loss(fwd.output, batch.targets);
    rec.losses.push_back(loss);
    if (!std::isfinite(loss)) {
      rec.failed = true;
      rec.failure = "non-finite loss at step " + std::to_string(step);
      rec.final_eval_loss = loss;
      return rec;
    }
    const StreamKey step_key{cfg.seed, Domain::kDither, {step}};
    const auto grads = backward(model, fwd.cache,
                                mse_grad(fwd.output, batch.targets), mode,
                                step_key);
    opt.step(model, grads, learning_rate(cfg.optim, step, cfg.steps));
  }
  rec.final_eval_loss = mse_loss(forward(model, eval.inputs).output, eval.targets);
  if (!std::isfinite(rec.final_eval_loss)) {
    rec.failed = true;
    rec.failure = "non-finite held-out loss";
  }
  return rec;
}

}  // namespace mx4sim
