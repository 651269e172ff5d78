#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "onprox/stream.hpp"
#include "onprox/types.hpp"

using namespace onprox;

namespace {

// f_i(x) = i * 1'x: gradient is the constant vector i * ones.
LossStream ramp_stream(int n, int T) {
  return LossStream(
      n, T, 1.0, 1000.0, "ramp",
      [n](int t, const Vec& x) { return double(t) * x.sum(); },
      [n](int t, const Vec&) { return Vec::Constant(n, double(t)); },
      [n](SplitMix64& rng) { return rng.normal_vector(n); });
}

}  // namespace

TEST_CASE("sliding average: worked examples") {
  LossStream s = ramp_stream(2, 10);
  s.reveal_all();
  Vec x = Vec::Zero(2);

  // Full window at t=5, w=3: mean of gradients 3, 4, 5.
  Vec g = sliding_average_grad(s, 5, 3, x);
  CHECK(g[0] == doctest::Approx(4.0).epsilon(1e-15));

  // Early rounds zero-pad: t=1, w=3 averages {0, 0, grad f_1}.
  Vec g1 = sliding_average_grad(s, 1, 3, x);
  CHECK(g1[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  // t=2, w=5: (1 + 2)/5.
  Vec g2 = sliding_average_grad(s, 2, 5, x);
  CHECK(g2[0] == doctest::Approx(0.6).epsilon(1e-15));

  CHECK(sliding_average_value(s, 5, 3, Vec::Ones(2)) == doctest::Approx(8.0).epsilon(1e-15));
}

TEST_CASE("reveal protocol") {
  LossStream s = ramp_stream(2, 5);
  Vec x = Vec::Zero(2);
  CHECK_THROWS_AS(s.value(1, x), ProtocolError);  // nothing revealed yet
  s.reveal(2);
  CHECK(s.value(2, x) == 0.0);
  CHECK_THROWS_AS(s.grad(3, x), ProtocolError);
  CHECK_THROWS_AS(s.grad(6, x), std::invalid_argument);  // beyond the horizon
  CHECK(s.value(0, x) == 0.0);                           // t <= 0 is the zero function
  CHECK(s.grad(-3, x).norm() == 0.0);
  LossStream copy = s;  // copies share the reveal guard
  copy.reveal(4);
  CHECK_NOTHROW(s.grad(4, x));
}

TEST_CASE("sign flip stream: enumeration oracle") {
  const int T = 100;
  LossStream s = make_sign_flip_stream(T, 1);
  s.reveal_all();
  Vec zero = Vec::Zero(1), one = Vec::Ones(1);

  // Signs are +-1 and the loss is linear in x.
  int plus = 0;
  double mean = 0.0;
  std::vector<double> sign(T + 1, 0.0);
  for (int t = 1; t <= T; ++t) {
    double g = s.grad(t, zero)[0];
    CHECK(std::abs(g) == 1.0);
    CHECK(s.value(t, one) == doctest::Approx(g).epsilon(1e-15));
    sign[t] = g;
    mean += g / T;
    if (g > 0) ++plus;
  }
  CHECK(plus >= 30);
  CHECK(plus <= 70);
  CHECK(std::abs(mean) <= 4.0 / std::sqrt(double(T)));

  // w=1 variation on the all-zeros trajectory: first term contributes 1 and
  // every adjacent flip contributes 4.
  std::vector<Vec> xs(T, zero);
  double v = trajectory_variation(xs, s, 1);
  double v_enum = 0.0;
  for (int t = 1; t <= T; ++t) v_enum += (sign[t] - sign[t - 1]) * (sign[t] - sign[t - 1]);
  CHECK(v == doctest::Approx(v_enum).epsilon(1e-12));
  CHECK(v >= 120.0);
  CHECK(v <= 320.0);
  // Frozen from the enumeration above for seed 1 (regression pin).
  CHECK(v == doctest::Approx(189.0).epsilon(1e-12));
}

TEST_CASE("quadratic drift stream: finite differences and bounds") {
  QuadraticDriftOptions opt;
  opt.n = 6;
  opt.T = 40;
  opt.drift_period = 10.0;
  opt.seed = 3;
  LossStream s = make_quadratic_drift_stream(opt);
  s.reveal_all();
  SplitMix64 rng(5);

  for (int trial = 0; trial < 20; ++trial) {
    int t = 1 + int(rng.uniform() * opt.T);
    t = std::min(t, opt.T);
    Vec x = s.sample_domain(rng);
    Vec g = s.grad(t, x);
    const double h = 1e-6;
    for (int i = 0; i < opt.n; ++i) {
      Vec e = Vec::Zero(opt.n);
      e[i] = h;
      double fd = (s.value(t, x + e) - s.value(t, x - e)) / (2 * h);
      CHECK(g[i] == doctest::Approx(fd).epsilon(1e-6));
    }
    // |f_t| <= M on the box.
    CHECK(std::abs(s.value(t, x)) <= s.value_bound() + 1e-12);
  }

  // Smoothness: the stored L dominates every sampled gradient difference.
  for (int trial = 0; trial < 200; ++trial) {
    int t = 1 + int(rng.uniform() * opt.T);
    t = std::min(t, opt.T);
    Vec x = s.sample_domain(rng), y = s.sample_domain(rng);
    double lhs = (s.grad(t, x) - s.grad(t, y)).norm();
    CHECK(lhs <= 1.0001 * s.smoothness() * (x - y).norm() + 1e-12);
  }

  // Drift: functions actually change over rounds.
  Vec x0 = Vec::Zero(opt.n);
  CHECK((s.grad(1, x0) - s.grad(6, x0)).norm() > 1e-8);

  // period 0 freezes the stream.
  opt.drift_period = 0.0;
  LossStream frozen = make_quadratic_drift_stream(opt);
  frozen.reveal_all();
  Vec p = Vec::Constant(opt.n, 0.3);
  CHECK((frozen.grad(1, p) - frozen.grad(17, p)).norm() == 0.0);
}

TEST_CASE("trajectory variation boundary convention") {
  LossStream s = ramp_stream(1, 4);
  s.reveal_all();
  std::vector<Vec> xs(4, Vec::Zero(1));
  // w=2: terms are ||g_t - g_{t-2}||^2 with g_{<=0} = 0:
  // t=1: 1, t=2: 4, t=3: (3-1)^2, t=4: (4-2)^2.
  CHECK(trajectory_variation(xs, s, 2) == doctest::Approx(1 + 4 + 4 + 4).epsilon(1e-15));
  CHECK(variation_sup_estimate(s, 2, 50, 9) >= 0.0);
}

TEST_CASE("window state tracks the sliding average within the drift tolerance") {
  QuadraticDriftOptions opt;
  opt.n = 4;
  opt.T = 12;
  opt.seed = 11;
  LossStream s = make_quadratic_drift_stream(opt);
  s.reveal_all();
  const int w = 3;
  WindowState win(w, opt.n);
  SplitMix64 rng(2);
  long fallbacks = 0;

  Vec x = s.sample_domain(rng);
  for (int t = 1; t <= opt.T; ++t) {
    // Exact gradients as "samples": the O(1) incremental update may differ
    // from the direct in-order mean in the last ulp, never more.
    Vec sample_t = s.grad(t, x);
    const Vec& agg = win.slide(t, x, sample_t, [&] { return s.grad(t - w, x); }, &fallbacks);
    Vec direct = sliding_average_grad(s, t, w, x);
    CHECK((agg - direct).norm() <= 1e-12);
    CHECK(win.aggregate_drift(t) <= 1e-12);

    if (t % 4 == 0) {  // occasionally re-anchor, as the solver does
      x = s.sample_domain(rng);
      std::vector<Vec> samples;
      for (int i = t - w + 1; i <= t; ++i)
        samples.push_back(i >= 1 ? s.grad(i, x) : Vec::Zero(opt.n));
      const Vec& agg2 = win.refresh(t, x, samples);
      CHECK((agg2 - sliding_average_grad(s, t, w, x)).norm() == 0.0);
    }
  }
  CHECK(fallbacks == 0);

  // A slide at a fresh anchor without a refresh must hit the fallback.
  WindowState cold(w, opt.n);
  Vec y = Vec::Zero(opt.n);
  cold.refresh(5, y, {s.grad(3, y), s.grad(4, y), s.grad(5, y)});
  Vec other = Vec::Ones(opt.n);
  long uses = 0;
  cold.slide(6, other, s.grad(6, other), [&] { return s.grad(3, other); }, &uses);
  CHECK(uses == 1);
}

TEST_CASE("stationary stochastic stream") {
  QuadraticDriftOptions base_opt;
  base_opt.n = 5;
  base_opt.T = 1;
  base_opt.drift_period = 0.0;
  base_opt.seed = 21;
  LossStream base = make_quadratic_drift_stream(base_opt);
  base.reveal_all();

  SUBCASE("zero noise reproduces the base function") {
    LossStream s = make_stationary_stochastic_stream(base, 0.0, 50, 5, 1.0);
    s.reveal_all();
    SplitMix64 rng(3);
    Vec x = s.sample_domain(rng);
    for (int t : {1, 7, 50}) {
      CHECK(s.value(t, x) == doctest::Approx(base.value(1, x)).epsilon(1e-14));
      CHECK((s.grad(t, x) - base.grad(1, x)).norm() <= 1e-14);
    }
  }

  SUBCASE("noisy rounds are pure functions of (seed, t) with mean zero") {
    const double sigma = 0.7;
    const int T = 4000;
    LossStream s = make_stationary_stochastic_stream(base, sigma, T, 5, 1.0);
    s.reveal_all();
    Vec x = Vec::Constant(5, 0.2);

    // Re-querying a round re-derives the identical function.
    CHECK(s.value(17, x) == s.value(17, x));
    CHECK((s.grad(17, x) - s.grad(17, x)).norm() == 0.0);

    // The linear-noise gradients average back to the base gradient.
    Vec base_g = base.grad(1, x);
    Vec mean = Vec::Zero(5);
    double mean_sq = 0.0;
    for (int t = 1; t <= T; ++t) {
      Vec d = s.grad(t, x) - base_g;
      mean += d / T;
      mean_sq += d.squaredNorm() / T;
    }
    CHECK(mean.norm() <= 4.0 * sigma / std::sqrt(double(T)));
    CHECK(mean_sq == doctest::Approx(sigma * sigma).epsilon(0.1));
  }
}
