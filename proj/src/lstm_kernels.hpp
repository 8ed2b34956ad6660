#pragma once

// Batch kernels behind forward()/backward(). The serial versions are the
// reference implementation; the OpenMP versions must agree with them to
// rounding and are deterministic regardless of thread count.

#include "botledger/lstm.hpp"

namespace botledger::kernels {

struct Normalization {
  bool enabled = false;
  std::vector<double> mean, inv_std;  // D each
};

struct ForwardInputs {
  const ModelParams& params;
  Batch batch;
  const Normalization& norm;
  const std::vector<std::vector<double>>& masks;  // per sample, empty => no dropout
  bool keep_trace;
};

void forward_serial(const ForwardInputs& in, ForwardResult& out);
void forward_parallel(const ForwardInputs& in, ForwardResult& out);

// Gradients of the mean BCE term only; L2 and finiteness checks are applied
// by the caller.
Gradients backward_serial(const ForwardTrace& trace, std::span<const Label> labels, const ModelParams& params,
                          bool use_batchnorm);
Gradients backward_parallel(const ForwardTrace& trace, std::span<const Label> labels, const ModelParams& params,
                            bool use_batchnorm);

inline double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace botledger::kernels
