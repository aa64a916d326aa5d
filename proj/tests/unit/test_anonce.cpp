#include <doctest.h>

#include <cmath>
#include <random>

#include "lemo/adam.hpp"
#include "lemo/anonce.hpp"
#include "support/oracles.hpp"

using namespace lemo;

namespace {

std::vector<double> as_double(const std::vector<float>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_CASE("margin_dist") {
  CHECK(margin_dist(0.5, 1e-5) == doctest::Approx(0.49999).epsilon(1e-12));
  CHECK(margin_dist(0.0, 1e-5) == 0.0);
  CHECK(margin_dist(1e-5, 1e-5) == 0.0);
}

TEST_CASE("anonce_loss: symmetric logits give log 2") {
  Matrix protos(2, 2);
  protos.data = {1, 0, -1, 0};
  const Tensor3 z(2, 1, 1, 0.0f);
  const auto res = anonce_loss(z, make_bank(protos), {.tau = 0.1, .r = 1e-5, .n_pos = 1});
  CHECK(res.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("anonce_loss: saturated positive gives zero loss") {
  Matrix protos(2, 1);
  protos.data = {0.0f, 10.0f};
  const Tensor3 z(1, 1, 1, 0.0f);
  const auto res = anonce_loss(z, make_bank(protos), {.tau = 0.1, .r = 1e-5, .n_pos = 1});
  CHECK(res.loss <= 1e-12);
  CHECK(res.loss >= 0.0);
}

TEST_CASE("anonce_loss: matches the literal oracle and finite differences") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 24; ++trial) {
    const std::size_t d = 4 + trial % 13, hw = 2 + trial % 3, k = 3 + trial % 8;
    const std::size_t n_pos = 1 + trial % (k - 1);
    const Tensor3 z = oracle::random_tensor(rng, d, hw, hw, 0.3);
    const auto bank = make_bank(oracle::random_matrix(rng, k, d, 0.3));
    const LossConfig cfg{.tau = 0.1, .r = 1e-5, .n_pos = n_pos};
    const auto res = anonce_loss(z, bank, cfg);

    const auto zd = oracle::points_of(z);
    const auto pd = oracle::dense_of(bank.protos);
    const auto pos = oracle::positive_sets(zd, pd, n_pos);
    CHECK(res.loss == doctest::Approx(oracle::anonce_loss(zd, pd, pos, cfg.tau, cfg.r)).epsilon(1e-10));

    const auto fd_z = oracle::fd_gradient(zd, pd, n_pos, cfg.tau, cfg.r, true);
    const auto fd_p = oracle::fd_gradient(zd, pd, n_pos, cfg.tau, cfg.r, false);
    // fd_z is in points layout; compare against the points view of grad_z.
    const auto gz = oracle::points_of(res.grad_z);
    CHECK(oracle::rel_error(fd_z, gz.v) <= 1e-4);
    CHECK(oracle::rel_error(fd_p, as_double(res.grad_p.data)) <= 1e-4);
  }
}

TEST_CASE("anonce_loss: translation invariance and non-negativity") {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor3 z = oracle::random_tensor(rng, 6, 3, 3);
    auto bank = make_bank(oracle::random_matrix(rng, 5, 6));
    const auto base = anonce_loss(z, bank, {});
    CHECK(base.loss >= 0.0);
    const Matrix shift = oracle::random_matrix(rng, 1, 6, 0.5);
    for (std::size_t c = 0; c < 6; ++c) {
      for (auto& v : z.plane(c)) v += shift(0, c);
      for (std::size_t k = 0; k < 5; ++k) bank.protos(k, c) += shift(0, c);
    }
    CHECK(anonce_loss(z, bank, {}).loss == doctest::Approx(base.loss).epsilon(1e-4));
  }
}

TEST_CASE("anonce_loss: coincident points contribute zero gradient") {
  Matrix protos(3, 2);
  protos.data = {0, 0, 1, 0, 0, 1};
  Tensor3 z(2, 1, 1, 0.0f);
  const auto res = anonce_loss(z, make_bank(protos), {.tau = 0.5, .r = 0.0, .n_pos = 1});
  for (std::size_t c = 0; c < 2; ++c) CHECK(res.grad_p(0, c) == 0.0f);
  CHECK(std::isfinite(res.loss));
}

TEST_CASE("anonce_loss: errors") {
  const auto bank = init_decoupled_noise(3, 4, 0);
  CHECK_THROWS_AS(anonce_loss(Tensor3(5, 2, 2, 0.0f), bank, {}), DimensionError);
  CHECK_THROWS_AS(anonce_loss(Tensor3(4, 2, 2, 0.0f), bank, {.n_pos = 3}), ConfigError);
  CHECK_THROWS_AS(anonce_loss(Tensor3(4, 2, 2, 0.0f), bank, {.tau = 0.0}), ConfigError);
  Tensor3 bad(4, 2, 2, 0.0f);
  bad.data[5] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(anonce_loss(bad, bank, {.n_pos = 1}), NumericalError);
}

TEST_CASE("anonce_loss decreases under Adam on a frozen frame") {
  std::mt19937_64 rng(23);
  Tensor3 z = oracle::random_tensor(rng, 8, 3, 3);
  auto bank = make_bank(oracle::random_matrix(rng, 6, 8));
  AdamState z_opt(z.data.size());
  const AdamHyper hyper{.lr = 1e-2};
  const LossConfig cfg{.tau = 0.1, .r = 1e-5, .n_pos = 2};
  double prev = anonce_loss(z, bank, cfg).loss;
  const double first = prev;
  int increases = 0;
  for (int step = 0; step < 50; ++step) {
    const auto res = anonce_loss(z, bank, cfg);
    adam_step(z.data, res.grad_z.data, z_opt, hyper);
    adam_step(bank.protos.data, res.grad_p.data, bank.opt, hyper);
    const double now = anonce_loss(z, bank, cfg).loss;
    increases += now > prev + 1e-6;
    prev = now;
  }
  CHECK(increases <= 5);
  CHECK(prev < first);
}

TEST_CASE("adam_step: zero gradient, scalar trace and shrinking updates") {
  std::vector<float> p = {1.5f, -2.0f};
  AdamState st(2);
  adam_step(p, std::vector<float>{0.0f, 0.0f}, st, {});
  CHECK(p == std::vector<float>{1.5f, -2.0f});
  CHECK(st.t == 1);

  // One step with g = 1: m = 0.1, v = 0.001, m_hat = 1, v_hat = 1.
  std::vector<float> x = {0.5f};
  AdamState sx(1);
  const AdamHyper h{};
  adam_step(x, std::vector<float>{1.0f}, sx, h);
  const double m_hat = (1 - h.beta1) / (1 - h.beta1);
  const double v_hat = (1 - h.beta2) / (1 - h.beta2);
  CHECK(x[0] == doctest::Approx(0.5 - h.lr * m_hat / (std::sqrt(v_hat) + h.eps)).epsilon(1e-7));

  double m = 1 - h.beta1, v = 1 - h.beta2, prev_step = h.lr;
  for (int t = 2; t <= 3; ++t) {
    const float before = x[0];
    adam_step(x, std::vector<float>{0.0f}, sx, h);
    m *= h.beta1;
    v *= h.beta2;
    const double expect =
        h.lr * (m / (1 - std::pow(h.beta1, t))) / (std::sqrt(v / (1 - std::pow(h.beta2, t))) + h.eps);
    const double step = before - x[0];
    CHECK(step == doctest::Approx(expect).epsilon(1e-4));
    CHECK(step < prev_step);
    prev_step = step;
  }

  std::vector<float> w = {2.0f};
  AdamState sw(1);
  adam_step(w, std::vector<float>{0.0f}, sw, {.lr = 0.1, .weight_decay = 0.5});
  CHECK(w[0] == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));

  CHECK_THROWS_AS(adam_step(w, std::vector<float>{0.0f, 1.0f}, sw, {}), DimensionError);
}
