#include "botledger/lstm.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "botledger/random.hpp"
#include "lstm_kernels.hpp"

namespace botledger {

double sigmoid(double x) { return kernels::sigm(x); }

void ModelConfig::validate() const {
  if (input_dim < 1) throw UsageError("input_dim must be at least 1");
  if (hidden_dim < 1) throw UsageError("hidden_dim must be at least 1");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw UsageError("dropout must lie in [0, 1)");
  if (!(l2_lambda >= 0.0)) throw UsageError("l2 must be non-negative");
  if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) throw UsageError("batch-norm momentum must lie in (0, 1]");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"input_dim", c.input_dim},       {"hidden_dim", c.hidden_dim},
          {"dropout_p", c.dropout_p},       {"l2_lambda", c.l2_lambda},
          {"use_batchnorm", c.use_batchnorm}, {"bn_momentum", c.bn_momentum},
          {"seed", c.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.input_dim = j.at("input_dim").get<std::size_t>();
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.dropout_p = j.at("dropout_p").get<double>();
    c.l2_lambda = j.at("l2_lambda").get<double>();
    c.use_batchnorm = j.at("use_batchnorm").get<bool>();
    c.bn_momentum = j.at("bn_momentum").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(fmt::format("malformed model config: {}", ex.what()));
  }
  return c;
}

ModelParams ModelParams::zeros(std::size_t input_dim, std::size_t hidden_dim) {
  ModelParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.w_x = Matrix(4 * hidden_dim, input_dim);
  p.w_h = Matrix(4 * hidden_dim, hidden_dim);
  p.b.assign(4 * hidden_dim, 0.0);
  p.bn_gamma.assign(input_dim, 0.0);
  p.bn_beta.assign(input_dim, 0.0);
  p.bn_running_mean.assign(input_dim, 0.0);
  p.bn_running_var.assign(input_dim, 0.0);
  p.w_out.assign(hidden_dim, 0.0);
  return p;
}

std::vector<std::span<double>> ModelParams::trainable() {
  return {w_x.data(), w_h.data(), b, bn_gamma, bn_beta, w_out, std::span<double>(&b_out, 1)};
}

std::vector<std::span<const double>> ModelParams::trainable() const {
  return {w_x.data(), w_h.data(), b, bn_gamma, bn_beta, w_out, std::span<const double>(&b_out, 1)};
}

std::vector<std::span<double>> ModelParams::all_tensors() {
  return {w_x.data(), w_h.data(),      b,    bn_gamma, bn_beta, bn_running_mean, bn_running_var,
          w_out,      std::span<double>(&b_out, 1)};
}

std::vector<std::span<const double>> ModelParams::all_tensors() const {
  return {w_x.data(), w_h.data(),      b,    bn_gamma, bn_beta, bn_running_mean, bn_running_var,
          w_out,      std::span<const double>(&b_out, 1)};
}

ModelParams init_params(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t D = cfg.input_dim, H = cfg.hidden_dim;
  ModelParams p = ModelParams::zeros(D, H);
  Rng rng(derive_seed(cfg.seed, 0x1157));
  const double k = 1.0 / std::sqrt(static_cast<double>(H));
  for (double& w : p.w_x.data()) w = rng.uniform(-k, k);
  for (double& w : p.w_h.data()) w = rng.uniform(-k, k);
  for (std::size_t j = H; j < 2 * H; ++j) p.b[j] = 1.0;  // forget gate
  std::fill(p.bn_gamma.begin(), p.bn_gamma.end(), 1.0);
  std::fill(p.bn_running_var.begin(), p.bn_running_var.end(), 1.0);
  for (double& w : p.w_out) w = rng.uniform(-k, k);
  p.b_out = rng.uniform(-0.01, 0.01);
  return p;
}

CellState cell_step(const ModelParams& P, std::span<const double> x_t, std::span<const double> h_prev,
                    std::span<const double> c_prev) {
  const std::size_t D = P.input_dim, H = P.hidden_dim;
  if (x_t.size() != D || h_prev.size() != H || c_prev.size() != H)
    throw DataError("cell_step: shape mismatch");
  CellState out;
  out.gates.assign(4 * H, 0.0);
  out.h.assign(H, 0.0);
  out.c.assign(H, 0.0);
  for (std::size_t r = 0; r < 4 * H; ++r) {
    double a = P.b[r];
    for (std::size_t d = 0; d < D; ++d) a += P.w_x(r, d) * x_t[d];
    for (std::size_t k = 0; k < H; ++k) a += P.w_h(r, k) * h_prev[k];
    out.gates[r] = (r >= 2 * H && r < 3 * H) ? std::tanh(a) : sigmoid(a);
  }
  for (std::size_t k = 0; k < H; ++k) {
    out.c[k] = out.gates[H + k] * c_prev[k] + out.gates[k] * out.gates[2 * H + k];
    out.h[k] = out.gates[3 * H + k] * std::tanh(out.c[k]);
    if (!std::isfinite(out.c[k]) || !std::isfinite(out.h[k])) throw NumericError("numeric overflow");
  }
  return out;
}

namespace {

// Column means and biased variances over every row of every matrix, summed
// in a fixed order.
void batch_moments(Batch batch, std::size_t D, std::vector<double>& mean, std::vector<double>& var) {
  mean.assign(D, 0.0);
  var.assign(D, 0.0);
  std::size_t n = 0;
  for (const Matrix* m : batch) {
    for (std::size_t t = 0; t < m->rows(); ++t)
      for (std::size_t d = 0; d < D; ++d) mean[d] += (*m)(t, d);
    n += m->rows();
  }
  for (double& v : mean) v /= static_cast<double>(n);
  for (const Matrix* m : batch)
    for (std::size_t t = 0; t < m->rows(); ++t)
      for (std::size_t d = 0; d < D; ++d) {
        const double e = (*m)(t, d) - mean[d];
        var[d] += e * e;
      }
  for (double& v : var) v /= static_cast<double>(n);
}

}  // namespace

void update_running_stats(ModelParams& params, std::span<const double> mean, std::span<const double> var,
                          double momentum) {
  for (std::size_t d = 0; d < params.input_dim; ++d) {
    params.bn_running_mean[d] = (1.0 - momentum) * params.bn_running_mean[d] + momentum * mean[d];
    params.bn_running_var[d] = (1.0 - momentum) * params.bn_running_var[d] + momentum * var[d];
  }
}

Matrix batchnorm_forward(const Matrix& batch, ModelParams& params, bool training, double momentum) {
  const std::size_t D = params.input_dim;
  if (batch.cols() != D) throw DataError("batchnorm: feature count mismatch");
  std::vector<double> mean, var;
  if (training) {
    if (batch.rows() < 2) throw DataError("batch too small for batchnorm");
    const Matrix* one[] = {&batch};
    batch_moments(one, D, mean, var);
  } else {
    mean = params.bn_running_mean;
    var = params.bn_running_var;
  }
  Matrix out(batch.rows(), D);
  for (std::size_t d = 0; d < D; ++d) {
    const double inv = 1.0 / std::sqrt(var[d] + kBatchNormEps);
    for (std::size_t r = 0; r < batch.rows(); ++r)
      out(r, d) = params.bn_gamma[d] * ((batch(r, d) - mean[d]) * inv) + params.bn_beta[d];
  }
  if (training) update_running_stats(params, mean, var, momentum);
  return out;
}

ForwardResult forward(const ModelParams& params, Batch batch, const ModelConfig& cfg, const ForwardOptions& opts) {
  const std::size_t D = params.input_dim, H = params.hidden_dim;
  ForwardResult out;
  if (batch.empty()) return out;
  const std::size_t T = batch[0]->rows();
  for (const Matrix* m : batch)
    if (m->rows() != T || m->cols() != D || T == 0)
      throw DataError(fmt::format("dimension mismatch: expected {} x {} windows", T, D));

  const bool training = opts.mode == Mode::Training;
  kernels::Normalization norm;
  norm.enabled = cfg.use_batchnorm;
  if (norm.enabled) {
    if (training) {
      if (batch.size() * T < 2) throw DataError("batch too small for batchnorm");
      batch_moments(batch, D, out.trace.bn_mean, out.trace.bn_var);
    } else {
      out.trace.bn_mean = params.bn_running_mean;
      out.trace.bn_var = params.bn_running_var;
    }
    norm.mean = out.trace.bn_mean;
    norm.inv_std.resize(D);
    for (std::size_t d = 0; d < D; ++d) norm.inv_std[d] = 1.0 / std::sqrt(out.trace.bn_var[d] + kBatchNormEps);
  }

  std::vector<std::vector<double>> masks;
  if (training && cfg.dropout_p > 0.0) {
    const double keep = 1.0 - cfg.dropout_p;
    masks.resize(batch.size());
    for (std::size_t s = 0; s < batch.size(); ++s) {
      Rng rng(derive_seed(opts.dropout_seed, s));
      masks[s].resize(H);
      for (double& m : masks[s]) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
    }
  }

  out.trace.window_length = T;
  kernels::ForwardInputs in{params, batch, norm, masks, training};
  if (opts.exec == Execution::Serial)
    kernels::forward_serial(in, out);
  else
    kernels::forward_parallel(in, out);

  for (std::size_t s = 0; s < out.probabilities.size(); ++s) {
    double& p = out.probabilities[s];
    if (!std::isfinite(p)) throw NumericError("numeric overflow");
    p = std::clamp(p, kProbClip, 1.0 - kProbClip);
    if (training) out.trace.samples[s].p = p;
  }
  return out;
}

double bce_loss(std::span<const double> probabilities, std::span<const Label> labels, const ModelParams& params,
                double l2_lambda) {
  if (probabilities.size() != labels.size()) throw DataError("bce_loss: size mismatch");
  if (probabilities.empty()) throw DataError("bce_loss: empty batch");
  double sum = 0.0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const double p = std::clamp(probabilities[i], kProbClip, 1.0 - kProbClip);
    const double y = encode(labels[i]);
    sum += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
  }
  double loss = sum / static_cast<double>(probabilities.size());
  if (l2_lambda > 0.0) {
    double sq = 0.0;
    for (double w : params.w_x.data()) sq += w * w;
    for (double w : params.w_h.data()) sq += w * w;
    for (double w : params.w_out) sq += w * w;
    loss += l2_lambda * sq;
  }
  return loss;
}

Gradients backward(const ForwardTrace& trace, Batch batch, std::span<const Label> labels, const ModelParams& params,
                   const ModelConfig& cfg, Execution exec) {
  if (trace.samples.size() != batch.size() || labels.size() != batch.size())
    throw DataError("backward: trace, batch and labels must have the same length");
  Gradients g = exec == Execution::Serial
                    ? kernels::backward_serial(trace, labels, params, cfg.use_batchnorm)
                    : kernels::backward_parallel(trace, labels, params, cfg.use_batchnorm);
  if (cfg.l2_lambda > 0.0) {
    const double c = 2.0 * cfg.l2_lambda;
    auto add = [c](std::span<double> dst, std::span<const double> w) {
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += c * w[i];
    };
    add(g.w_x.data(), params.w_x.data());
    add(g.w_h.data(), params.w_h.data());
    add(g.w_out, params.w_out);
  }
  for (auto t : std::as_const(g).trainable())
    for (double v : t)
      if (!std::isfinite(v)) throw NumericError("gradient overflow");
  return g;
}

AdamState AdamState::for_params(const ModelParams& p, double lr) {
  AdamState s;
  s.m = ModelParams::zeros(p.input_dim, p.hidden_dim);
  s.v = ModelParams::zeros(p.input_dim, p.hidden_dim);
  s.lr = lr;
  return s;
}

void adam_step(ModelParams& params, const Gradients& grads, AdamState& state) {
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  auto p = params.trainable();
  auto g = grads.trainable();
  auto m = state.m.trainable();
  auto v = state.v.trainable();
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < p[i].size(); ++j) {
      const double gij = g[i][j];
      m[i][j] = state.beta1 * m[i][j] + (1.0 - state.beta1) * gij;
      v[i][j] = state.beta2 * v[i][j] + (1.0 - state.beta2) * gij * gij;
      const double mhat = m[i][j] / bc1;
      const double vhat = v[i][j] / bc2;
      p[i][j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps_hat);
    }
  }
}

GradCheckReport gradient_check(ModelConfig cfg, std::uint64_t seed, double perturbation, double tolerance,
                               const GradCheckOptions& opts) {
  cfg.dropout_p = 0.0;
  cfg.seed = seed;
  cfg.validate();
  if (cfg.hidden_dim > 10) throw UsageError("gradient_check is meant for small nets (hidden_dim <= 10)");

  Rng rng(derive_seed(seed, 0x6c68));
  ModelParams params = init_params(cfg);
  // move every tensor off its neat initial value so no gradient is trivially zero
  for (double& v : params.b) v += rng.uniform(-0.2, 0.2);
  for (double& v : params.bn_gamma) v = rng.uniform(0.5, 1.5);
  for (double& v : params.bn_beta) v = rng.uniform(-0.5, 0.5);
  params.b_out = rng.uniform(-0.2, 0.2);

  std::vector<Matrix> data;
  std::vector<Label> labels;
  for (std::size_t s = 0; s < opts.batch_size; ++s) {
    Matrix m(opts.window_length, cfg.input_dim);
    for (double& v : m.data()) v = rng.uniform();
    data.push_back(std::move(m));
    labels.push_back(s % 2 == 0 ? Label::Bot : Label::Normal);
  }
  std::vector<const Matrix*> batch;
  for (const auto& m : data) batch.push_back(&m);

  const ForwardOptions fopts{Mode::Training, 0, Execution::Serial};
  auto loss_at = [&](const ModelParams& p) {
    auto r = forward(p, batch, cfg, fopts);
    return bce_loss(r.probabilities, labels, p, cfg.l2_lambda);
  };

  auto fr = forward(params, batch, cfg, fopts);
  Gradients analytic = backward(fr.trace, batch, labels, params, cfg, Execution::Serial);
  if (opts.corrupt) opts.corrupt(analytic);

  GradCheckReport report;
  auto tensors = params.trainable();
  auto grads = std::as_const(analytic).trainable();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    TensorCheck tc;
    tc.name = kTrainableNames[i];
    const std::size_t n = tensors[i].size();
    std::vector<std::size_t> idx(n);
    for (std::size_t j = 0; j < n; ++j) idx[j] = j;
    if (opts.max_entries_per_tensor > 0) {
      const std::size_t keep = std::max<std::size_t>(opts.max_entries_per_tensor, 50);
      if (n > keep) {
        rng.shuffle(idx);
        idx.resize(keep);
      }
    }
    for (std::size_t j : idx) {
      double& w = tensors[i][j];
      const double saved = w;
      w = saved + perturbation;
      const double up = loss_at(params);
      w = saved - perturbation;
      const double down = loss_at(params);
      w = saved;
      const double numeric = (up - down) / (2.0 * perturbation);
      const double a = grads[i][j];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      tc.max_rel_error = std::max(tc.max_rel_error, rel);
      ++tc.entries_checked;
    }
    tc.passed = tc.max_rel_error < tolerance;
    report.passed = report.passed && tc.passed;
    report.max_rel_error = std::max(report.max_rel_error, tc.max_rel_error);
    report.tensors.push_back(std::move(tc));
  }
  return report;
}

}  // namespace botledger
