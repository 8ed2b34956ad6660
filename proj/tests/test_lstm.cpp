#include "doctest.h"

#include <cmath>

#include "botledger/lstm.hpp"
#include "botledger/random.hpp"

using namespace botledger;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

ModelConfig small(std::size_t d, std::size_t h) {
  ModelConfig c;
  c.input_dim = d;
  c.hidden_dim = h;
  c.dropout_p = 0.0;
  c.l2_lambda = 0.0;
  return c;
}

std::vector<Matrix> random_windows(std::size_t n, std::size_t t, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Matrix> v;
  for (std::size_t i = 0; i < n; ++i) {
    Matrix m(t, d);
    for (auto& x : m.data()) x = rng.uniform();
    v.push_back(std::move(m));
  }
  return v;
}

std::vector<const Matrix*> ptrs(const std::vector<Matrix>& v) {
  std::vector<const Matrix*> p;
  for (const auto& m : v) p.push_back(&m);
  return p;
}

}  // namespace

TEST_CASE("init_params shapes and forget bias") {
  ModelConfig c;
  const auto p = init_params(c);
  CHECK(p.w_x.rows() == 128);
  CHECK(p.w_x.cols() == 9);
  CHECK(p.w_h.rows() == 128);
  CHECK(p.w_h.cols() == 32);
  CHECK(p.b.size() == 128);
  for (std::size_t j = 0; j < 32; ++j) {
    CHECK(p.b[32 + j] == 1.0);
    CHECK(p.b[j] == 0.0);
  }
  const double k = 1.0 / std::sqrt(32.0);
  for (double w : p.w_x.data()) CHECK(std::abs(w) <= k);
  CHECK(p.bn_gamma == std::vector<double>(9, 1.0));
  CHECK(p.bn_running_var == std::vector<double>(9, 1.0));
  CHECK(p.bn_running_mean == std::vector<double>(9, 0.0));
  CHECK(init_params(c) == p);
  c.seed = 2;
  CHECK_FALSE(init_params(c) == p);
}

TEST_CASE("config validation") {
  auto c = small(0, 3);
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = small(2, 3);
  c.dropout_p = 1.0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c.dropout_p = 0.5;
  const auto back = model_config_from_json(to_json(c));
  CHECK(back.dropout_p == 0.5);
  CHECK(back.input_dim == 2);
}

TEST_CASE("cell step with zero parameters") {
  auto p = ModelParams::zeros(3, 2);
  const std::vector<double> x{1, -2, 3}, h0(2, 0.0), c0(2, 0.0);
  const auto s = cell_step(p, x, h0, c0);
  CHECK(s.h == std::vector<double>{0, 0});
  CHECK(s.c == std::vector<double>{0, 0});
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(s.gates[j] == 0.5);
    CHECK(s.gates[2 + j] == 0.5);
    CHECK(s.gates[4 + j] == 0.0);
    CHECK(s.gates[6 + j] == 0.5);
  }
}

TEST_CASE("cell step hand example: forget bias carries the cell") {
  auto p = ModelParams::zeros(1, 1);
  p.b[1] = 1.0;
  const std::vector<double> x{0}, h0{0}, c0{1};
  const auto s = cell_step(p, x, h0, c0);
  const double c = sig(1.0);
  CHECK(s.c[0] == doctest::Approx(0.73106).epsilon(1e-5));
  CHECK(s.c[0] == doctest::Approx(c).epsilon(1e-14));
  CHECK(s.h[0] == doctest::Approx(0.311856).epsilon(1e-6));
  CHECK(s.h[0] == doctest::Approx(0.5 * std::tanh(c)).epsilon(1e-14));
}

TEST_CASE("batchnorm examples") {
  auto p = ModelParams::zeros(1, 1);
  p.bn_gamma = {1};
  p.bn_running_var = {1};
  Matrix m(2, 1);
  m(0, 0) = 2;
  m(1, 0) = 4;
  const auto y = batchnorm_forward(m, p, true, 0.1);
  CHECK(y(0, 0) == doctest::Approx(-1.0 / std::sqrt(1.0 + 1e-5)).epsilon(1e-14));
  CHECK(y(1, 0) == doctest::Approx(1.0 / std::sqrt(1.0 + 1e-5)).epsilon(1e-14));
  CHECK(p.bn_running_mean[0] == doctest::Approx(0.3));

  auto q = ModelParams::zeros(1, 1);
  q.bn_gamma = {1};
  q.bn_running_var = {1};
  const auto id = batchnorm_forward(m, q, false, 0.1);
  CHECK(id(0, 0) == doctest::Approx(2.0 / std::sqrt(1.0 + 1e-5)));

  q.bn_gamma = {0};
  q.bn_beta = {5};
  const auto five = batchnorm_forward(m, q, true, 0.1);
  CHECK(five(0, 0) == 5);
  CHECK(five(1, 0) == 5);

  CHECK_THROWS_AS(batchnorm_forward(Matrix(1, 1, 3.0), q, true, 0.1), DataError);
}

TEST_CASE("batchnorm inference maps the batch mean to beta") {
  auto p = ModelParams::zeros(2, 1);
  p.bn_gamma = {1, 1};
  p.bn_beta = {0.3, -0.7};
  p.bn_running_var = {1, 1};
  Matrix m(3, 2);
  m(0, 0) = 1, m(1, 0) = 4, m(2, 0) = 7;
  m(0, 1) = 0.5, m(1, 1) = 0.25, m(2, 1) = 0;
  for (int i = 0; i < 400; ++i) batchnorm_forward(m, p, true, 0.1);
  Matrix mean(1, 2);
  mean(0, 0) = 4;
  mean(0, 1) = 0.25;
  const auto y = batchnorm_forward(mean, p, false, 0.1);
  CHECK(y(0, 0) == doctest::Approx(0.3).epsilon(1e-9));
  CHECK(y(0, 1) == doctest::Approx(-0.7).epsilon(1e-9));
}

TEST_CASE("zero head gives probability one half") {
  auto c = small(9, 4);
  auto p = init_params(c);
  std::fill(p.w_out.begin(), p.w_out.end(), 0.0);
  p.b_out = 0;
  const auto w = random_windows(5, 6, 9, 1);
  const auto r = forward(p, ptrs(w), c, {Mode::Inference, 0, Execution::Parallel});
  for (double v : r.probabilities) CHECK(v == 0.5);
  CHECK(r.trace.samples.empty());
}

TEST_CASE("full chain on a one-unit network") {
  auto c = small(1, 1);
  c.use_batchnorm = false;
  auto p = ModelParams::zeros(1, 1);
  p.w_x.data()[0] = 1.0;  // i
  p.w_x.data()[2] = 1.0;  // g
  p.w_x.data()[3] = 1.0;  // o
  p.w_out = {2.0};
  p.b_out = -0.5;
  Matrix x(2, 1);
  x(0, 0) = 1.0;
  x(1, 0) = 0.5;
  // by hand: step 1 from zero state, step 2 with f = 0.5 and recurrent weights zero
  const double c1 = sig(1) * std::tanh(1), h1 = sig(1) * std::tanh(c1);
  const double c2 = 0.5 * c1 + sig(0.5) * std::tanh(0.5), h2 = sig(0.5) * std::tanh(c2);
  const double expected = sig(2.0 * h2 - 0.5);
  (void)h1;
  const std::vector<const Matrix*> b{&x};
  const auto r = forward(p, b, c, {Mode::Inference, 0, Execution::Serial});
  CHECK(r.probabilities[0] == doctest::Approx(expected).epsilon(1e-14));
  const auto rp = forward(p, b, c, {Mode::Inference, 0, Execution::Parallel});
  CHECK(rp.probabilities[0] == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("forward is deterministic and strictly inside (0, 1)") {
  auto c = small(9, 8);
  auto p = init_params(c);
  p.w_out.assign(8, 40.0);
  const auto w = random_windows(16, 12, 9, 2);
  const auto a = forward(p, ptrs(w), c, {Mode::Training, 3, Execution::Parallel});
  const auto b = forward(p, ptrs(w), c, {Mode::Training, 3, Execution::Parallel});
  CHECK(a.probabilities == b.probabilities);
  for (double v : a.probabilities) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  const auto bad = random_windows(1, 11, 9, 2);
  std::vector<const Matrix*> mixed{&w[0], &bad[0]};
  CHECK_THROWS_AS(forward(p, mixed, c, {}), DataError);
}

TEST_CASE("without dropout training and inference agree under the same statistics") {
  auto c = small(3, 5);
  auto p = init_params(c);
  const auto w = random_windows(6, 7, 3, 4);
  const auto tr = forward(p, ptrs(w), c, {Mode::Training, 9, Execution::Parallel});
  p.bn_running_mean = tr.trace.bn_mean;
  p.bn_running_var = tr.trace.bn_var;
  const auto inf = forward(p, ptrs(w), c, {Mode::Inference, 0, Execution::Parallel});
  for (std::size_t i = 0; i < w.size(); ++i)
    CHECK(inf.probabilities[i] == doctest::Approx(tr.probabilities[i]).epsilon(1e-13));
}

TEST_CASE("inverted dropout preserves the expected hidden state") {
  auto c = small(2, 8);
  c.use_batchnorm = false;
  c.dropout_p = 0.2;
  const auto p = init_params(c);
  const auto w = random_windows(1, 5, 2, 6);
  std::vector<double> mean(8, 0.0), h;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto r = forward(p, ptrs(w), c, {Mode::Training, static_cast<std::uint64_t>(i), Execution::Serial});
    const auto& s = r.trace.samples[0];
    for (std::size_t j = 0; j < 8; ++j) mean[j] += s.h_drop[j] / n;
    if (h.empty()) h.assign(s.h.end() - 8, s.h.end());
    for (double m : s.mask) CHECK((m == 0.0 || m == doctest::Approx(1.25)));
  }
  for (std::size_t j = 0; j < 8; ++j) CHECK(std::abs(mean[j] - h[j]) <= 0.02 * std::abs(h[j]));
}

TEST_CASE("bce loss examples") {
  auto p = ModelParams::zeros(1, 1);
  CHECK(bce_loss(std::vector<double>{0.5}, std::vector<Label>{Label::Bot}, p, 0) ==
        doctest::Approx(0.693147).epsilon(1e-6));
  CHECK(bce_loss(std::vector<double>{1 - 1e-7}, std::vector<Label>{Label::Bot}, p, 0) ==
        doctest::Approx(1e-7).epsilon(1e-3));
  CHECK(bce_loss(std::vector<double>{0.9, 0.2}, std::vector<Label>{Label::Bot, Label::Normal}, p, 0) ==
        doctest::Approx(0.164252).epsilon(1e-6));
  CHECK(std::isfinite(bce_loss(std::vector<double>{0.0}, std::vector<Label>{Label::Bot}, p, 0)));
  p.w_x.data()[1] = 2.0;
  p.w_out = {1.0};
  p.b = {9, 9, 9, 9};  // biases are not penalized
  CHECK(bce_loss(std::vector<double>{0.5}, std::vector<Label>{Label::Bot}, p, 0.1) ==
        doctest::Approx(std::log(2.0) + 0.1 * 5.0));
}

TEST_CASE("head gradients vanish when predictions equal labels") {
  auto c = small(2, 3);
  const auto p = init_params(c);
  const auto w = random_windows(4, 3, 2, 8);
  const std::vector<Label> y{Label::Bot, Label::Normal, Label::Bot, Label::Normal};
  auto r = forward(p, ptrs(w), c, {Mode::Training, 0, Execution::Serial});
  for (std::size_t i = 0; i < 4; ++i) r.trace.samples[i].p = encode(y[i]);
  const auto g = backward(r.trace, ptrs(w), y, p, c, Execution::Serial);
  for (double v : g.w_out) CHECK(v == 0.0);
  CHECK(g.b_out == 0.0);
}

TEST_CASE("l2 gradient is linear in lambda") {
  auto c = small(2, 3);
  const auto p = init_params(c);
  const auto w = random_windows(4, 3, 2, 8);
  const std::vector<Label> y{Label::Bot, Label::Normal, Label::Bot, Label::Normal};
  const auto r = forward(p, ptrs(w), c, {Mode::Training, 0, Execution::Serial});
  auto grad = [&](double l) {
    auto cc = c;
    cc.l2_lambda = l;
    return backward(r.trace, ptrs(w), y, p, cc, Execution::Serial);
  };
  const auto g0 = grad(0), g1 = grad(0.05), g2 = grad(0.1);
  for (std::size_t i = 0; i < g0.w_h.data().size(); ++i) {
    const double d1 = g1.w_h.data()[i] - g0.w_h.data()[i], d2 = g2.w_h.data()[i] - g0.w_h.data()[i];
    CHECK(d2 == doctest::Approx(2 * d1).epsilon(1e-10));
    CHECK(d1 == doctest::Approx(2 * 0.05 * p.w_h.data()[i]).epsilon(1e-10));
  }
  CHECK(g1.b == g0.b);
}

TEST_CASE("adam first step moves each parameter by about lr") {
  auto p = ModelParams::zeros(2, 2);
  const auto before = p;
  auto g = ModelParams::zeros(2, 2);
  auto state = AdamState::for_params(p, 1e-3);
  adam_step(p, g, state);
  CHECK(p == before);
  CHECK(state.step_count == 1);

  auto q = ModelParams::zeros(2, 2);
  auto gq = ModelParams::zeros(2, 2);
  Rng rng(1);
  for (auto t : gq.trainable())
    for (auto& v : t) v = rng.uniform(-3, 3);
  auto s2 = AdamState::for_params(q, 1e-3);
  auto s3 = s2;
  auto q3 = q;
  adam_step(q, gq, s2);
  const auto qt = q.trainable();
  const auto gt = gq.trainable();
  for (std::size_t k = 0; k < qt.size(); ++k)
    for (std::size_t i = 0; i < qt[k].size(); ++i) {
      const double gi = gt[k][i];
      CHECK(qt[k][i] == doctest::Approx(-1e-3 * gi / (std::abs(gi) + 1e-8)).epsilon(1e-12));
    }
  adam_step(q3, gq, s3);
  CHECK(q3 == q);
}

TEST_CASE("loss drops by ninety percent on a separable toy set") {
  auto c = small(2, 8);
  c.seed = 5;
  auto p = init_params(c);
  Rng rng(12);
  std::vector<Matrix> w;
  std::vector<Label> y;
  for (int i = 0; i < 32; ++i) {
    const bool bot = i % 2 == 0;
    Matrix m(4, 2);
    for (auto& v : m.data()) v = (bot ? 0.75 : 0.25) + rng.uniform(-0.2, 0.2);
    w.push_back(std::move(m));
    y.push_back(bot ? Label::Bot : Label::Normal);
  }
  auto state = AdamState::for_params(p, 0.01);
  double first = 0, last = 0;
  for (int step = 0; step < 200; ++step) {
    const auto r = forward(p, ptrs(w), c, {Mode::Training, 0, Execution::Parallel});
    last = bce_loss(r.probabilities, y, p, 0);
    if (step == 0) first = last;
    const auto g = backward(r.trace, ptrs(w), y, p, c);
    adam_step(p, g, state);
  }
  CHECK(last <= 0.1 * first);
}

TEST_CASE("gradient check passes on small nets") {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const auto r = gradient_check(small(2, 3), seed, 1e-5, 1e-4);
    CHECK(r.passed);
    CHECK(r.max_rel_error < 1e-4);
    CHECK(r.tensors.size() == 7);
  }
  auto nobn = small(3, 2);
  nobn.use_batchnorm = false;
  CHECK(gradient_check(nobn, 9, 1e-5, 1e-4).passed);
}

TEST_CASE("gradient check catches a corrupted recurrent gradient") {
  GradCheckOptions o;
  o.corrupt = [](Gradients& g) {
    for (auto& v : g.w_h.data()) v *= 2;
  };
  const auto r = gradient_check(small(2, 3), 1, 1e-5, 1e-4, o);
  CHECK_FALSE(r.passed);
  for (const auto& t : r.tensors) CHECK(t.passed == (t.name != std::string("w_h")));
  CHECK(gradient_check(small(2, 3), 1, 1e-5, 1.0).passed);
  CHECK(gradient_check(small(2, 3), 1, 1e-5, 1.0, o).passed);
  CHECK_THROWS_AS(gradient_check(small(2, 11), 1, 1e-5, 1e-4), UsageError);
}
