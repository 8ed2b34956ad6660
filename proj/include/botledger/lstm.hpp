#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "botledger/core.hpp"

namespace botledger {

struct ModelConfig {
  std::size_t input_dim = kFeatureCount;
  std::size_t hidden_dim = 32;
  double dropout_p = 0.2;
  double l2_lambda = 1e-4;
  bool use_batchnorm = true;
  double bn_momentum = 0.1;
  std::uint64_t seed = 1;

  void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kProbClip = 1e-7;

// Single-layer LSTM with an input batch-norm stage and a sigmoid head.
// Gate blocks of w_x, w_h and b are stacked in the order i, f, g, o.
struct ModelParams {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  Matrix w_x;                // 4H x D
  Matrix w_h;                // 4H x H
  std::vector<double> b;     // 4H
  std::vector<double> bn_gamma, bn_beta, bn_running_mean, bn_running_var;  // D each
  std::vector<double> w_out;  // H
  double b_out = 0.0;

  static ModelParams zeros(std::size_t input_dim, std::size_t hidden_dim);

  // Trainable tensors in serialization order (running statistics excluded).
  std::vector<std::span<double>> trainable();
  std::vector<std::span<const double>> trainable() const;
  // Every tensor in file order: trainable ones interleaved with running stats.
  std::vector<std::span<double>> all_tensors();
  std::vector<std::span<const double>> all_tensors() const;

  bool operator==(const ModelParams&) const = default;
};

inline constexpr std::array<const char*, 7> kTrainableNames = {"w_x",     "w_h",   "b",    "bn_gamma",
                                                               "bn_beta", "w_out", "b_out"};
inline constexpr std::array<const char*, 9> kTensorNames = {
    "w_x", "w_h", "b", "bn_gamma", "bn_beta", "bn_running_mean", "bn_running_var", "w_out", "b_out"};

// Gradient sets reuse the parameter layout; running-stat slots stay zero.
using Gradients = ModelParams;

ModelParams init_params(const ModelConfig& cfg);

struct CellState {
  std::vector<double> h, c;
  std::vector<double> gates;  // 4H post-activation values: i, f, g, o
};

CellState cell_step(const ModelParams& params, std::span<const double> x_t, std::span<const double> h_prev,
                    std::span<const double> c_prev);

// Normalizes each column of `batch`. Training mode uses the batch moments and
// folds them into the running statistics with the given momentum.
Matrix batchnorm_forward(const Matrix& batch, ModelParams& params, bool training, double momentum);

enum class Mode { Training, Inference };
enum class Execution { Serial, Parallel };

struct SampleTrace {
  std::vector<double> xhat;   // T x D normalized inputs before gamma/beta
  std::vector<double> u;      // T x D cell inputs
  std::vector<double> gates;  // T x 4H
  std::vector<double> c;      // (T + 1) x H, row 0 is the zero initial state
  std::vector<double> h;      // (T + 1) x H
  std::vector<double> c_tanh; // T x H, tanh of c rows 1..T (filled by the parallel kernel)
  std::vector<double> mask;   // H, inverted-dropout multipliers
  std::vector<double> h_drop; // H
  double p = 0.5;
};

struct ForwardTrace {
  std::size_t window_length = 0;
  std::vector<SampleTrace> samples;
  std::vector<double> bn_mean, bn_var;  // statistics used for normalization
};

struct ForwardResult {
  std::vector<double> probabilities;
  ForwardTrace trace;  // sample traces are filled only in training mode
};

struct ForwardOptions {
  Mode mode = Mode::Inference;
  std::uint64_t dropout_seed = 0;
  Execution exec = Execution::Parallel;
};

using Batch = std::span<const Matrix* const>;

ForwardResult forward(const ModelParams& params, Batch batch, const ModelConfig& cfg, const ForwardOptions& opts);

// Mean binary cross-entropy (probabilities clipped to [1e-7, 1 - 1e-7]) plus
// l2_lambda times the squared norm of w_x, w_h and w_out.
double bce_loss(std::span<const double> probabilities, std::span<const Label> labels, const ModelParams& params,
                double l2_lambda);

Gradients backward(const ForwardTrace& trace, Batch batch, std::span<const Label> labels, const ModelParams& params,
                   const ModelConfig& cfg, Execution exec = Execution::Parallel);

// Folds batch moments into the running statistics.
void update_running_stats(ModelParams& params, std::span<const double> mean, std::span<const double> var,
                          double momentum);

struct AdamState {
  Gradients m, v;
  std::uint64_t step_count = 0;
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps_hat = 1e-8;

  static AdamState for_params(const ModelParams& p, double lr = 1e-3);
};

void adam_step(ModelParams& params, const Gradients& grads, AdamState& state);

struct TensorCheck {
  std::string name;
  std::size_t entries_checked = 0;
  double max_rel_error = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;
  double max_rel_error = 0.0;
  bool passed = true;
};

struct GradCheckOptions {
  std::size_t window_length = 4;
  std::size_t batch_size = 2;
  std::size_t max_entries_per_tensor = 0;  // 0 checks every entry
  // hook applied to the analytic gradients before comparison (fault injection)
  std::function<void(Gradients&)> corrupt;
};

// Central finite differences against backward() on a random batch with
// dropout disabled. Batch-norm runs in training mode; running statistics are
// not touched.
GradCheckReport gradient_check(ModelConfig cfg, std::uint64_t seed, double perturbation, double tolerance,
                               const GradCheckOptions& opts = {});

double sigmoid(double x);

}  // namespace botledger
