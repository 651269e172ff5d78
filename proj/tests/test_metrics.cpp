#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <map>

#include "onprox/metrics.hpp"
#include "onprox/stream.hpp"
#include "onprox/types.hpp"

using namespace onprox;

TEST_CASE("bound formulas: frozen arithmetic") {
  // (2/w^2)(T delta^2 + V) at T=100, w=10, delta=0.1, V=1.
  CHECK(bound_thm_regret_det(100, 10, 0.1, 1.0) == doctest::Approx(0.04).epsilon(1e-14));

  // 2 w^2 (g + 2M) / ((2 - eta L) eta delta^2) = 500 / 0.0019.
  CHECK(bound_thm_queries_det(10, 0.5, 1.0, 0.1, 1.0, 0.1) ==
        doctest::Approx(263157.89473684211).epsilon(1e-12));

  // 2 (T/w^2)(delta^2 + 7 sigma^2) + (6/w^2) V = 1.28 + 0.12.
  CHECK(bound_thm_regret_stoch(100, 10, 0.1, 0.3, 2.0) == doctest::Approx(1.4).epsilon(1e-14));

  // 2 w^2 (g + 2M) / ((1 - eta(L+1)) eta delta^2 - sigma^2) = 400 / 0.39.
  CHECK(bound_thm_queries_stoch(10, 0.0, 1.0, 0.2, 1.0, 2.0, 0.3) ==
        doctest::Approx(400.0 / 0.39).epsilon(1e-12));

  // Tail: (h + M) w^2 / (2 (eta(1-eta L) delta^2 - 2 sigma^2) K) = 8 / 11.4.
  CHECK(bound_tail_prob(1.0, 1.0, 2, 0.25, 1.0, 2.0, 0.3, 10) ==
        doctest::Approx(8.0 / 11.4).epsilon(1e-12));
}

TEST_CASE("bound formulas: parameter validation") {
  CHECK_THROWS_AS(bound_thm_queries_det(10, 0.0, 1.0, 1.5, 1.0, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(bound_thm_queries_stoch(10, 0.0, 1.0, 0.6, 1.0, 2.0, 0.3), ConfigError);
  // Positive-denominator requirement: eta fine, delta too small.
  try {
    bound_thm_queries_stoch(10, 0.0, 1.0, 0.2, 1.0, 0.3, 0.3);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::isfinite(e.min_delta));
    CHECK(e.min_delta > 0.3);
  }
}

TEST_CASE("bound monotonicity") {
  SplitMix64 rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    int T = 10 + int(rng.uniform() * 100);
    int w = 1 + int(rng.uniform() * 10);
    double delta = 0.05 + rng.uniform();
    double v = rng.uniform() * 50;
    double extra = rng.uniform() * 10;
    CHECK(bound_thm_regret_det(T, w, delta, v + extra) >= bound_thm_regret_det(T, w, delta, v));
    CHECK(bound_thm_regret_det(T + 5, w, delta, v) >= bound_thm_regret_det(T, w, delta, v));
    double sigma = rng.uniform();
    CHECK(bound_thm_regret_stoch(T, w, delta, sigma, v) >=
          bound_thm_regret_det(T, w, delta, v));  // 7 sigma^2 and 3x variation overhead
  }
}

TEST_CASE("local regret on the sign-flip stream: counting oracle") {
  const int T = 200;
  LossStream s = make_sign_flip_stream(T, 5);
  s.reveal_all();
  Regularizer g = Regularizer::box(-1.0, 1.0);
  std::vector<Vec> ones(T, Vec::Ones(1));

  int plus = 0;
  for (int t = 1; t <= T; ++t)
    if (s.grad(t, ones[0])[0] > 0) ++plus;

  // Playing x = +1 throughout with w=1: a +1 round pushes off the boundary
  // (unit residual), a -1 round is blocked by the box (zero residual). The
  // normalization makes the count eta-free.
  for (double eta : {0.5, 0.25, 0.9}) {
    double reg = local_regret(ones, s, g, 1, eta);
    CHECK(reg == doctest::Approx(double(plus)).epsilon(1e-12));
    CHECK(classical_regret(ones, s, g, eta) == doctest::Approx(reg).epsilon(1e-15));
  }
}

TEST_CASE("local regret: window smoothing on a hand-checked stream") {
  // f_t(x) = a_t x on the box [-1, 1], playing x = 0: residual of the window
  // mean is the clipped mean itself (eta-free at x = 0 for small eta steps
  // inside the box).
  const int T = 4;
  std::vector<double> a{1.0, -1.0, 1.0, 1.0};
  LossStream s(
      1, T, 1.0, 1.0, "fixed-signs",
      [a](int t, const Vec& x) { return a[t - 1] * x[0]; },
      [a](int t, const Vec&) { return Vec::Constant(1, a[t - 1]); });
  s.reveal_all();
  Regularizer g = Regularizer::box(-1.0, 1.0);
  std::vector<Vec> zeros(T, Vec::Zero(1));
  // w=2 means: t=1: 1/2, t=2: 0, t=3: 0, t=4: 1 -> squares sum = 1.25.
  double reg = local_regret(zeros, s, g, 2, 0.5);
  CHECK(reg == doctest::Approx(0.25 + 0.0 + 0.0 + 1.0).epsilon(1e-12));

  CHECK_THROWS_AS(local_regret(std::vector<Vec>(T + 1, Vec::Zero(1)), s, g, 1, 0.5),
                  std::out_of_range);
}

TEST_CASE("offline parameter recipe") {
  OfflineParams p = offline_params(0.04, 0.2, 0.0, 0.05);
  // w = ceil(2 sqrt((0.04 + 0 + 0.05)/0.04)) = ceil(3) = 3.
  CHECK(p.w == 3);
  CHECK(p.T == 6);
  // proof-side deterministic variant: ceil(sqrt(2 * 0.09 / 0.04)) = ceil(2.1213) = 3.
  CHECK(p.w_proof_det == 3);

  OfflineParams q = offline_params(0.05, 0.1, 0.1, 0.59);
  CHECK(q.w == int(std::ceil(2.0 * std::sqrt((0.01 + 0.07 + 0.59) / 0.05))));
  CHECK(q.T == 2 * q.w);
  CHECK_THROWS_AS(offline_params(0.0, 0.1, 0.1, 0.1), std::invalid_argument);

  double budget = offline_sfo_budget(q, 0.0, 1.0, 0.2, 1.0, 2.0, 0.3);
  CHECK(budget == doctest::Approx(q.T + q.w * (400.0 / 0.39) *
                                            (q.w * q.w) / 100.0)
                      .epsilon(1e-9));
}

TEST_CASE("t* sampling is uniform on {w..T}") {
  SplitMix64 rng(17);
  const int w = 3, T = 7, N = 50000;
  std::map<int, int> counts;
  for (int i = 0; i < N; ++i) {
    int t = sample_tstar(w, T, rng);
    REQUIRE(t >= w);
    REQUIRE(t <= T);
    counts[t]++;
  }
  const int buckets = T - w + 1;
  double expect = double(N) / buckets;
  double sd = std::sqrt(N * (1.0 / buckets) * (1.0 - 1.0 / buckets));
  CHECK(int(counts.size()) == buckets);
  for (const auto& [t, c] : counts) {
    CAPTURE(t);
    CHECK(std::abs(c - expect) <= 4.0 * sd);
  }
  CHECK_THROWS_AS(sample_tstar(5, 4, rng), std::invalid_argument);
}
