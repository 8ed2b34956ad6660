#include <cmath>

#include "lstm_kernels.hpp"

namespace botledger::kernels {

// Straightforward loops over the declared 4H x D / 4H x H layouts. Kept
// simple on purpose: this is what the parallel kernels are tested against.

void forward_serial(const ForwardInputs& in, ForwardResult& out) {
  const auto& P = in.params;
  const std::size_t D = P.input_dim, H = P.hidden_dim, G = 4 * H;
  const std::size_t B = in.batch.size();
  const std::size_t T = B ? in.batch[0]->rows() : 0;

  out.probabilities.assign(B, 0.0);
  if (in.keep_trace) out.trace.samples.assign(B, {});

  for (std::size_t s = 0; s < B; ++s) {
    const Matrix& x = *in.batch[s];
    SampleTrace tr;
    tr.xhat.assign(T * D, 0.0);
    tr.u.assign(T * D, 0.0);
    tr.gates.assign(T * G, 0.0);
    tr.c.assign((T + 1) * H, 0.0);
    tr.h.assign((T + 1) * H, 0.0);

    for (std::size_t t = 0; t < T; ++t) {
      double* xhat = &tr.xhat[t * D];
      double* u = &tr.u[t * D];
      for (std::size_t d = 0; d < D; ++d) {
        if (in.norm.enabled) {
          xhat[d] = (x(t, d) - in.norm.mean[d]) * in.norm.inv_std[d];
          u[d] = P.bn_gamma[d] * xhat[d] + P.bn_beta[d];
        } else {
          xhat[d] = x(t, d);
          u[d] = x(t, d);
        }
      }
      const double* h_prev = &tr.h[t * H];
      const double* c_prev = &tr.c[t * H];
      double* gates = &tr.gates[t * G];
      for (std::size_t r = 0; r < G; ++r) {
        double a = P.b[r];
        for (std::size_t d = 0; d < D; ++d) a += P.w_x(r, d) * u[d];
        for (std::size_t k = 0; k < H; ++k) a += P.w_h(r, k) * h_prev[k];
        gates[r] = (r >= 2 * H && r < 3 * H) ? std::tanh(a) : sigm(a);
      }
      double* c = &tr.c[(t + 1) * H];
      double* h = &tr.h[(t + 1) * H];
      for (std::size_t k = 0; k < H; ++k) {
        c[k] = gates[H + k] * c_prev[k] + gates[k] * gates[2 * H + k];
        h[k] = gates[3 * H + k] * std::tanh(c[k]);
      }
    }

    tr.mask = in.masks.empty() ? std::vector<double>(H, 1.0) : in.masks[s];
    tr.h_drop.assign(H, 0.0);
    double z = P.b_out;
    for (std::size_t k = 0; k < H; ++k) {
      tr.h_drop[k] = tr.h[T * H + k] * tr.mask[k];
      z += P.w_out[k] * tr.h_drop[k];
    }
    tr.p = sigm(z);
    out.probabilities[s] = tr.p;
    if (in.keep_trace) out.trace.samples[s] = std::move(tr);
  }
}

Gradients backward_serial(const ForwardTrace& trace, std::span<const Label> labels, const ModelParams& P,
                          bool use_batchnorm) {
  const std::size_t D = P.input_dim, H = P.hidden_dim, G = 4 * H;
  const std::size_t B = trace.samples.size();
  const std::size_t T = trace.window_length;
  Gradients g = ModelParams::zeros(D, H);

  std::vector<double> dh(H), dc(H), da(G), dh_prev(H), du(D);
  for (std::size_t s = 0; s < B; ++s) {
    const SampleTrace& tr = trace.samples[s];
    const double dz = (tr.p - encode(labels[s])) / static_cast<double>(B);
    g.b_out += dz;
    for (std::size_t k = 0; k < H; ++k) {
      g.w_out[k] += dz * tr.h_drop[k];
      dh[k] = dz * P.w_out[k] * tr.mask[k];
      dc[k] = 0.0;
    }
    for (std::size_t t = T; t-- > 0;) {
      const double* gates = &tr.gates[t * G];
      const double* c = &tr.c[(t + 1) * H];
      const double* c_prev = &tr.c[t * H];
      const double* h_prev = &tr.h[t * H];
      const double* u = &tr.u[t * D];
      for (std::size_t k = 0; k < H; ++k) {
        const double i = gates[k], f = gates[H + k], gg = gates[2 * H + k], o = gates[3 * H + k];
        const double tc = std::tanh(c[k]);
        const double dck = dc[k] + dh[k] * o * (1.0 - tc * tc);
        da[k] = dck * gg * i * (1.0 - i);
        da[H + k] = dck * c_prev[k] * f * (1.0 - f);
        da[2 * H + k] = dck * i * (1.0 - gg * gg);
        da[3 * H + k] = dh[k] * tc * o * (1.0 - o);
        dc[k] = dck * f;
      }
      for (std::size_t r = 0; r < G; ++r) {
        g.b[r] += da[r];
        for (std::size_t d = 0; d < D; ++d) g.w_x(r, d) += da[r] * u[d];
        for (std::size_t k = 0; k < H; ++k) g.w_h(r, k) += da[r] * h_prev[k];
      }
      for (std::size_t k = 0; k < H; ++k) {
        double acc = 0.0;
        for (std::size_t r = 0; r < G; ++r) acc += P.w_h(r, k) * da[r];
        dh_prev[k] = acc;
      }
      if (use_batchnorm) {
        const double* xhat = &tr.xhat[t * D];
        for (std::size_t d = 0; d < D; ++d) {
          double acc = 0.0;
          for (std::size_t r = 0; r < G; ++r) acc += P.w_x(r, d) * da[r];
          g.bn_gamma[d] += acc * xhat[d];
          g.bn_beta[d] += acc;
        }
      }
      dh.swap(dh_prev);
    }
  }
  return g;
}

}  // namespace botledger::kernels
