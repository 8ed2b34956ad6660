#include <algorithm>
#include <cmath>

#include "lstm_kernels.hpp"

namespace botledger::kernels {

namespace {

// tanh through exp, which is about twice as fast as std::tanh here; saturates
// cleanly to +-1 when exp overflows or underflows.
inline double tanh_exp(double x) { return 1.0 - 2.0 / (1.0 + std::exp(2.0 * x)); }

// AVX2 clones widen the axpy loops. FMA is left out so every clone rounds
// exactly like the baseline build.
#define BOTLEDGER_CLONES __attribute__((target_clones("avx2", "default")))

// Gate weights transposed so the forward inner loops are contiguous axpy
// updates over the 4H gate rows.
struct Packed {
  std::vector<double> wx_t;  // D x 4H
  std::vector<double> wh_t;  // H x 4H
};

Packed pack(const ModelParams& P) {
  const std::size_t D = P.input_dim, H = P.hidden_dim, G = 4 * H;
  Packed pk;
  pk.wx_t.resize(D * G);
  pk.wh_t.resize(H * G);
  for (std::size_t r = 0; r < G; ++r) {
    for (std::size_t d = 0; d < D; ++d) pk.wx_t[d * G + r] = P.w_x(r, d);
    for (std::size_t k = 0; k < H; ++k) pk.wh_t[k * G + r] = P.w_h(r, k);
  }
  return pk;
}

BOTLEDGER_CLONES void sample_forward(const ModelParams& P, const Packed& pk, const Matrix& x, const Normalization& norm,
                    const std::vector<double>* mask, SampleTrace& tr) {
  const std::size_t D = P.input_dim, H = P.hidden_dim, G = 4 * H;
  const std::size_t T = x.rows();
  tr.xhat.resize(T * D);
  tr.u.resize(T * D);
  tr.gates.resize(T * G);
  tr.c.assign((T + 1) * H, 0.0);
  tr.h.assign((T + 1) * H, 0.0);
  tr.c_tanh.resize(T * H);

  for (std::size_t t = 0; t < T; ++t) {
    double* xhat = &tr.xhat[t * D];
    double* u = &tr.u[t * D];
    const auto xr = x.row(t);
    if (norm.enabled) {
      for (std::size_t d = 0; d < D; ++d) {
        xhat[d] = (xr[d] - norm.mean[d]) * norm.inv_std[d];
        u[d] = P.bn_gamma[d] * xhat[d] + P.bn_beta[d];
      }
    } else {
      for (std::size_t d = 0; d < D; ++d) xhat[d] = u[d] = xr[d];
    }

    double* a = &tr.gates[t * G];
    for (std::size_t r = 0; r < G; ++r) a[r] = P.b[r];
    for (std::size_t d = 0; d < D; ++d) {
      const double* w = &pk.wx_t[d * G];
      const double ud = u[d];
      for (std::size_t r = 0; r < G; ++r) a[r] += w[r] * ud;
    }
    const double* h_prev = &tr.h[t * H];
    for (std::size_t k = 0; k < H; ++k) {
      const double* w = &pk.wh_t[k * G];
      const double hk = h_prev[k];
      for (std::size_t r = 0; r < G; ++r) a[r] += w[r] * hk;
    }
    for (std::size_t r = 0; r < 2 * H; ++r) a[r] = sigm(a[r]);
    for (std::size_t r = 2 * H; r < 3 * H; ++r) a[r] = tanh_exp(a[r]);
    for (std::size_t r = 3 * H; r < G; ++r) a[r] = sigm(a[r]);

    const double* c_prev = &tr.c[t * H];
    double* c = &tr.c[(t + 1) * H];
    double* h = &tr.h[(t + 1) * H];
    double* tc = &tr.c_tanh[t * H];
    for (std::size_t k = 0; k < H; ++k) {
      c[k] = a[H + k] * c_prev[k] + a[k] * a[2 * H + k];
      tc[k] = tanh_exp(c[k]);
      h[k] = a[3 * H + k] * tc[k];
    }
  }

  tr.mask = mask ? *mask : std::vector<double>(H, 1.0);
  tr.h_drop.resize(H);
  double z = P.b_out;
  for (std::size_t k = 0; k < H; ++k) {
    tr.h_drop[k] = tr.h[T * H + k] * tr.mask[k];
    z += P.w_out[k] * tr.h_drop[k];
  }
  tr.p = sigm(z);
}

BOTLEDGER_CLONES void sample_backward(const ModelParams& P, const SampleTrace& tr, std::size_t T, double dz, bool use_batchnorm,
                     Gradients& g) {
  const std::size_t D = P.input_dim, H = P.hidden_dim, G = 4 * H;
  std::vector<double> dh(H), dc(H, 0.0), dh_prev(H), tanh_c;
  std::vector<double> da(T * G);  // gate pre-activation gradients for every step
  const bool cached = tr.c_tanh.size() == T * H;
  if (!cached) {
    tanh_c.resize(T * H);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t k = 0; k < H; ++k) tanh_c[t * H + k] = std::tanh(tr.c[(t + 1) * H + k]);
  }
  const double* tcs = cached ? tr.c_tanh.data() : tanh_c.data();

  g.b_out += dz;
  for (std::size_t k = 0; k < H; ++k) {
    g.w_out[k] += dz * tr.h_drop[k];
    dh[k] = dz * P.w_out[k] * tr.mask[k];
  }
  // only the recurrent chain is sequential; weight gradients are summed after
  for (std::size_t t = T; t-- > 0;) {
    const double* gates = &tr.gates[t * G];
    const double* c_prev = &tr.c[t * H];
    const double* tc = &tcs[t * H];
    double* dat = &da[t * G];
    for (std::size_t k = 0; k < H; ++k) {
      const double i = gates[k], f = gates[H + k], gg = gates[2 * H + k], o = gates[3 * H + k];
      const double dck = dc[k] + dh[k] * o * (1.0 - tc[k] * tc[k]);
      dat[k] = dck * gg * i * (1.0 - i);
      dat[H + k] = dck * c_prev[k] * f * (1.0 - f);
      dat[2 * H + k] = dck * i * (1.0 - gg * gg);
      dat[3 * H + k] = dh[k] * tc[k] * o * (1.0 - o);
      dc[k] = dck * f;
    }
    if (t == 0) break;
    std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
    for (std::size_t r = 0; r < G; ++r) {
      const double dar = dat[r];
      const double* wh = &P.w_h.data()[r * H];
      for (std::size_t k = 0; k < H; ++k) dh_prev[k] += wh[k] * dar;
    }
    dh.swap(dh_prev);
  }

  double* gb = g.b.data();
  double* gx = g.w_x.data().data();
  double* gh = g.w_h.data().data();
  for (std::size_t t = 0; t < T; ++t) {
    const double* dat = &da[t * G];
    const double* u = &tr.u[t * D];
    const double* h_prev = &tr.h[t * H];
    for (std::size_t r = 0; r < G; ++r) {
      const double dar = dat[r];
      gb[r] += dar;
      double* gxr = gx + r * D;
      for (std::size_t d = 0; d < D; ++d) gxr[d] += dar * u[d];
      if (t == 0) continue;  // h_prev is the zero initial state
      double* ghr = gh + r * H;
      for (std::size_t k = 0; k < H; ++k) ghr[k] += dar * h_prev[k];
    }
  }
  if (use_batchnorm) {
    std::vector<double> du(D);
    for (std::size_t t = 0; t < T; ++t) {
      const double* dat = &da[t * G];
      std::fill(du.begin(), du.end(), 0.0);
      for (std::size_t r = 0; r < G; ++r) {
        const double* wx = &P.w_x.data()[r * D];
        for (std::size_t d = 0; d < D; ++d) du[d] += wx[d] * dat[r];
      }
      const double* xhat = &tr.xhat[t * D];
      for (std::size_t d = 0; d < D; ++d) {
        g.bn_gamma[d] += du[d] * xhat[d];
        g.bn_beta[d] += du[d];
      }
    }
  }
}

void add_into(Gradients& acc, const Gradients& g) {
  auto dst = acc.trainable();
  auto src = g.trainable();
  for (std::size_t i = 0; i < dst.size(); ++i)
    for (std::size_t j = 0; j < dst[i].size(); ++j) dst[i][j] += src[i][j];
}

}  // namespace

void forward_parallel(const ForwardInputs& in, ForwardResult& out) {
  const auto& P = in.params;
  const std::size_t B = in.batch.size();
  const Packed pk = pack(P);

  out.probabilities.assign(B, 0.0);
  std::vector<SampleTrace> traces(B);
  const auto n = static_cast<std::ptrdiff_t>(B);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t s = 0; s < n; ++s) {
    const std::vector<double>* mask = in.masks.empty() ? nullptr : &in.masks[s];
    sample_forward(P, pk, *in.batch[s], in.norm, mask, traces[s]);
    out.probabilities[s] = traces[s].p;
  }
  if (in.keep_trace) out.trace.samples = std::move(traces);
}

Gradients backward_parallel(const ForwardTrace& trace, std::span<const Label> labels, const ModelParams& P,
                            bool use_batchnorm) {
  const std::size_t B = trace.samples.size();
  std::vector<Gradients> per(B);
  const auto n = static_cast<std::ptrdiff_t>(B);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t s = 0; s < n; ++s) {
    per[s] = ModelParams::zeros(P.input_dim, P.hidden_dim);
    const double dz = (trace.samples[s].p - encode(labels[s])) / static_cast<double>(B);
    sample_backward(P, trace.samples[s], trace.window_length, dz, use_batchnorm, per[s]);
  }
  // fixed reduction order keeps the result independent of the thread count
  Gradients g = ModelParams::zeros(P.input_dim, P.hidden_dim);
  for (const auto& gs : per) add_into(g, gs);
  return g;
}

}  // namespace botledger::kernels
