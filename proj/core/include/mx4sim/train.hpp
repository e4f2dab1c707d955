// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

// Toy teacher-student regression with a manually differentiated MLP. The
// forward pass is always full precision; only the two backward GEMMs of each
// linear layer go through the emulated MXFP4 path.

#ifndef MX4SIM_TRAIN_HPP_
#define MX4SIM_TRAIN_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mx4sim/matrix.hpp"
#include "mx4sim/qgemm.hpp"
#include "mx4sim/rng.hpp"

namespace mx4sim {

enum class Activation { kTanh, kRelu };

enum class BackwardMode { kExact, kMxfp4, kMxfp4Rht, kMxfp4Sr, kMxfp4RhtSr };

inline constexpr BackwardMode kAllBackwardModes[] = {
    BackwardMode::kExact, BackwardMode::kMxfp4, BackwardMode::kMxfp4Rht,
    BackwardMode::kMxfp4Sr, BackwardMode::kMxfp4RhtSr};

std::string_view to_string(BackwardMode m);
std::optional<BackwardMode> parse_backward_mode(std::string_view s);
std::string_view to_string(Activation a);
std::optional<Activation> parse_activation(std::string_view s);

GemmMode gemm_mode(BackwardMode m, std::size_t rht_g);

struct LinearLayer {
  Matrix w;               // out x in
  std::vector<double> b;  // out
};

struct MlpModel {
  std::vector<std::size_t> dims;  // in, hidden..., out
  Activation activation = Activation::kTanh;
  std::vector<LinearLayer> layers;

  // Weights N(0, 1/fan_in), biases zero.
  static MlpModel init(std::vector<std::size_t> dims, Activation act,
                       const StreamKey& key);
};

struct ForwardCache {
  std::vector<Matrix> inputs;  // input of each linear layer
  std::vector<Matrix> pre;     // pre-activation output of each linear layer
};

struct ForwardResult {
  Matrix output;
  ForwardCache cache;
};

// y = x W^T + b per layer with the activation between layers (none after
// the last). Throws ShapeError when inputs.cols() != dims.front().
ForwardResult forward(const MlpModel& model, const Matrix& inputs);

struct LayerGrad {
  Matrix dw;
  std::vector<double> db;
};

// Gradients for every layer given dL/d(output). Each linear layer uses
// linear_backward with a key forked from `key` by layer index; activation
// derivatives are exact.
std::vector<LayerGrad> backward(const MlpModel& model, const ForwardCache& cache,
                                const Matrix& dldy, const GemmMode& mode,
                                const StreamKey& key);

// Mean squared error over all entries and its gradient.
double mse_loss(const Matrix& output, const Matrix& target);
Matrix mse_grad(const Matrix& output, const Matrix& target);

struct Batch {
  Matrix inputs;
  Matrix targets;
};

// Label noise: N(0, label_sd^2), replaced by N(0, outlier_sd^2) with
// probability outlier_prob per target entry.
struct TaskNoise {
  double label_sd = 0.0;
  double outlier_prob = 0.0;
  double outlier_sd = 0.0;

  bool operator==(const TaskNoise&) const = default;
};

// Frozen random teacher network. Hidden biases are zero and the output bias
// is random, so a zero input maps to the output bias exactly.
class TeacherStudentTask {
 public:
  TeacherStudentTask(std::uint64_t seed, std::vector<std::size_t> teacher_dims,
                     Activation act, double label_noise);
  TeacherStudentTask(std::uint64_t seed, std::vector<std::size_t> teacher_dims,
                     Activation act, const TaskNoise& noise);

  // Inputs N(0, I); targets teacher(x) plus optional Gaussian label noise.
  // Deterministic in (seed, index).
  Batch batch(std::uint64_t index, std::size_t size) const;
  // Noise-free targets (held-out evaluation).
  Batch clean_batch(std::uint64_t index, std::size_t size) const;

  const MlpModel& teacher() const { return teacher_; }

 private:
  Batch make(std::uint64_t index, std::size_t size, bool noisy) const;

  std::uint64_t seed_;
  MlpModel teacher_;
  TaskNoise noise_;
};

// Teacher drawn from key.seed with dims {in_dim, 64, 32}; the batch index is
// key.coords[0].
Batch teacher_student_task(const StreamKey& key, std::size_t batch,
                           std::size_t in_dim);

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double warmup_fraction = 0.01;

  bool operator==(const AdamWConfig&) const = default;
};

// Linear warmup over ceil(warmup_fraction * total_steps) steps, then constant.
double learning_rate(const AdamWConfig& cfg, std::size_t step,
                     std::size_t total_steps);

// Decoupled weight decay on weight matrices (not biases):
//   w <- w (1 - lr * wd) - lr * m_hat / (sqrt(v_hat) + eps).
class AdamW {
 public:
  AdamW(const MlpModel& model, AdamWConfig cfg);
  void step(MlpModel& model, const std::vector<LayerGrad>& grads, double lr);
  std::size_t steps_taken() const { return t_; }

 private:
  AdamWConfig cfg_;
  std::size_t t_ = 0;
  std::vector<LayerGrad> m_;
  std::vector<LayerGrad> v_;
};

struct TrainConfig {
  BackwardMode backward_mode = BackwardMode::kMxfp4RhtSr;
  std::size_t rht_g = 64;
  std::vector<std::size_t> dims = {256, 256, 256, 32};
  Activation activation = Activation::kTanh;
  std::vector<std::size_t> teacher_dims = {256, 64, 32};
  TaskNoise noise{0.05, 0.03, 10.0};
  AdamWConfig optim;
  std::size_t steps = 400;
  std::size_t batch = 256;
  std::size_t eval_batch = 1024;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument on inconsistent shapes.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// Stable `key=value` text listing every field; the input of config_hash.
std::string canonical_config(const TrainConfig& cfg);
// Hex SHA-1 of the canonical text in git blob framing ("blob <n>\0...").
std::string config_hash(const TrainConfig& cfg);

struct RunRecord {
  TrainConfig config;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<double> losses;  // training loss per step
  double initial_eval_loss = 0.0;
  double final_eval_loss = 0.0;
  bool failed = false;
  std::string failure;
};

// AdamW training loop. Initialization and data order depend only on
// cfg.seed, so runs differing only in backward mode see identical batches.
// A non-finite loss stops the run and marks it failed.
RunRecord train_run(const TrainConfig& cfg);

}  // namespace mx4sim

#endif  // MX4SIM_TRAIN_HPP_
