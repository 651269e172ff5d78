#include "onprox/stream.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

namespace onprox {

LossStream::LossStream(int n, int T, double L, double M, std::string descriptor, ValueFn value,
                       GradFn grad, SampleFn domain_sampler)
    : n_(n),
      T_(T),
      L_(L),
      M_(M),
      descriptor_(std::move(descriptor)),
      value_(std::move(value)),
      grad_(std::move(grad)),
      sample_(std::move(domain_sampler)),
      revealed_(std::make_shared<std::atomic<int>>(0)) {
  if (n_ < 1) throw std::invalid_argument("stream: dimension must be >= 1");
  if (T_ < 1) throw std::invalid_argument("stream: horizon must be >= 1");
  if (!(L_ > 0.0) || !std::isfinite(L_))
    throw std::invalid_argument("stream: smoothness constant must be positive and finite");
  if (!(M_ >= 0.0) || !std::isfinite(M_))
    throw std::invalid_argument("stream: value bound must be nonnegative and finite");
  if (!value_ || !grad_) throw std::invalid_argument("stream: value/grad closures required");
}

void LossStream::reveal(int t) const {
  if (t < 0 || t > T_)
    throw std::invalid_argument("stream: reveal(" + std::to_string(t) + ") outside [0, " +
                                std::to_string(T_) + "]");
  int cur = revealed_->load();
  while (cur < t && !revealed_->compare_exchange_weak(cur, t)) {
  }
}

void LossStream::check_query(int t, const Vec& x) const {
  if (x.size() != n_)
    throw std::invalid_argument("stream: query dimension " + std::to_string(x.size()) +
                                " != " + std::to_string(n_));
  if (t > T_)
    throw std::invalid_argument("stream: round " + std::to_string(t) + " beyond horizon " +
                                std::to_string(T_));
  if (t > revealed_->load())
    throw ProtocolError("stream '" + descriptor_ + "': round " + std::to_string(t) +
                        " queried but only " + std::to_string(revealed_->load()) +
                        " rounds revealed");
}

double LossStream::value(int t, const Vec& x) const {
  if (t <= 0) return 0.0;
  check_query(t, x);
  return value_(t, x);
}

Vec LossStream::grad(int t, const Vec& x) const {
  if (t <= 0) return Vec::Zero(n_);
  check_query(t, x);
  return grad_(t, x);
}

Vec LossStream::sample_domain(SplitMix64& rng) const {
  if (!sample_) throw std::logic_error("stream '" + descriptor_ + "': no domain sampler");
  return sample_(rng);
}

Vec sliding_average_grad(const LossStream& s, int t, int w, const Vec& x) {
  if (w < 1) throw std::invalid_argument("sliding_average_grad: w must be >= 1");
  if (t < 1) throw std::invalid_argument("sliding_average_grad: t must be >= 1");
  Vec acc = Vec::Zero(s.dimension());
  for (int i = std::max(1, t - w + 1); i <= t; ++i) acc += s.grad(i, x);
  return acc / static_cast<double>(w);
}

double sliding_average_value(const LossStream& s, int t, int w, const Vec& x) {
  if (w < 1) throw std::invalid_argument("sliding_average_value: w must be >= 1");
  if (t < 1) throw std::invalid_argument("sliding_average_value: t must be >= 1");
  double acc = 0.0;
  for (int i = std::max(1, t - w + 1); i <= t; ++i) acc += s.value(i, x);
  return acc / static_cast<double>(w);
}

double trajectory_variation(const std::vector<Vec>& xs, const LossStream& s, int w) {
  if (w < 1) throw std::invalid_argument("trajectory_variation: w must be >= 1");
  double acc = 0.0;
  for (std::size_t idx = 0; idx < xs.size(); ++idx) {
    const int t = static_cast<int>(idx) + 1;
    acc += (s.grad(t, xs[idx]) - s.grad(t - w, xs[idx])).squaredNorm();
  }
  return acc;
}

double variation_sup_estimate(const LossStream& s, int w, int num_points, std::uint64_t seed) {
  if (w < 1) throw std::invalid_argument("variation_sup_estimate: w must be >= 1");
  if (num_points < 1) throw std::invalid_argument("variation_sup_estimate: need >= 1 point");
  SplitMix64 rng = keyed_rng(seed, RngTag::domain, {static_cast<std::uint64_t>(w)});
  std::vector<Vec> pts;
  pts.reserve(num_points);
  for (int j = 0; j < num_points; ++j) pts.push_back(s.sample_domain(rng));
  double acc = 0.0;
  for (int t = 1; t <= s.horizon(); ++t) {
    double best = 0.0;
    for (const Vec& x : pts)
      best = std::max(best, (s.grad(t, x) - s.grad(t - w, x)).squaredNorm());
    acc += best;
  }
  return acc;
}

WindowState::WindowState(int w, int n)
    : w_(w), n_(n), agg_(Vec::Zero(n)), slots_(w), slot_round_(w, 0) {
  if (w < 1 || n < 1) throw std::invalid_argument("window state: w and n must be >= 1");
}

bool WindowState::slot_valid(int i, const Vec& anchor) const {
  if (i <= 0) return true;  // implicit zero estimate, anchor-free
  if (slot_round_[i % w_] != i) return false;
  return anchored_ && anchor_.size() == anchor.size() &&
         (anchor_.array() == anchor.array()).all();
}

const Vec& WindowState::slide(int t, const Vec& anchor, const Vec& sample_t,
                              const std::function<Vec()>& fallback, long* fallback_uses) {
  if (t < 1) throw std::invalid_argument("window state: slide needs t >= 1");
  const int old_i = t - w_;
  Vec old_est;
  if (old_i <= 0) {
    old_est = Vec::Zero(n_);
  } else if (slot_valid(old_i, anchor)) {
    old_est = slots_[old_i % w_];
  } else {
    if (!fallback) throw ProtocolError("window state: missing t-w estimate and no fallback");
    old_est = fallback();
    if (fallback_uses) ++*fallback_uses;
  }
  agg_ += (sample_t - old_est) / static_cast<double>(w_);
  slots_[t % w_] = sample_t;
  slot_round_[t % w_] = t;
  anchor_ = anchor;
  anchored_ = true;
  return agg_;
}

const Vec& WindowState::refresh(int t, const Vec& anchor, const std::vector<Vec>& samples) {
  if (static_cast<int>(samples.size()) != w_)
    throw std::invalid_argument("window state: refresh needs exactly w samples");
  agg_.setZero();
  for (int j = 0; j < w_; ++j) {
    const int i = t - w_ + 1 + j;
    if (i <= 0) continue;  // zero function, zero estimate
    slots_[i % w_] = samples[j];
    slot_round_[i % w_] = i;
    agg_ += samples[j];
  }
  agg_ /= static_cast<double>(w_);
  anchor_ = anchor;
  anchored_ = true;
  return agg_;
}

double WindowState::aggregate_drift(int t) const {
  Vec mean = Vec::Zero(n_);
  for (int j = 0; j < w_; ++j) {
    const int i = t - w_ + 1 + j;
    if (i <= 0) continue;
    if (!anchored_ || !slot_valid(i, anchor_)) return std::nan("");
    mean += slots_[i % w_];
  }
  mean /= static_cast<double>(w_);
  return (mean - agg_).lpNorm<Eigen::Infinity>();
}

LossStream make_sign_flip_stream(int T, std::uint64_t seed) {
  if (T < 1) throw std::invalid_argument("sign_flip: T must be >= 1");
  auto signs = std::make_shared<std::vector<double>>();
  signs->reserve(T + 1);
  signs->push_back(0.0);  // unused slot for t=0
  SplitMix64 rng = keyed_rng(seed, RngTag::stream_data, {});
  for (int t = 1; t <= T; ++t) signs->push_back(rng.uniform() < 0.5 ? -1.0 : 1.0);
  auto value = [signs](int t, const Vec& x) { return (*signs)[t] * x[0]; };
  auto grad = [signs](int t, const Vec&) { return Vec::Constant(1, (*signs)[t]); };
  auto sample = [](SplitMix64& r) { return Vec::Constant(1, r.uniform(-1.0, 1.0)); };
  return LossStream(1, T, /*L=*/1.0, /*M=*/1.0,
                    "sign_flip(T=" + std::to_string(T) + ",seed=" + std::to_string(seed) + ")",
                    value, grad, sample);
}

LossStream make_quadratic_drift_stream(const QuadraticDriftOptions& opts) {
  const int n = opts.n, T = opts.T;
  if (n < 1 || T < 1) throw std::invalid_argument("quadratic_drift: n and T must be >= 1");
  if (!(opts.box_radius > 0.0)) throw std::invalid_argument("quadratic_drift: box_radius > 0");
  SplitMix64 rng = keyed_rng(opts.seed, RngTag::stream_data, {});

  auto sym_random = [&](double scale) {
    Eigen::MatrixXd B(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) B(i, j) = rng.normal() * scale;
    return Eigen::MatrixXd(0.5 * (B + B.transpose()));
  };
  const double sc = 1.0 / std::sqrt(static_cast<double>(n));
  Eigen::MatrixXd A_base = sym_random(sc), A_drift = sym_random(0.5 * sc);
  Vec b_base = rng.normal_vector(n), b_drift = 0.5 * rng.normal_vector(n);
  const double phase_a = rng.uniform(0.0, 2.0 * M_PI), phase_b = rng.uniform(0.0, 2.0 * M_PI);
  const bool drifting = opts.drift_period > 0.0 && std::isfinite(opts.drift_period);

  auto As = std::make_shared<std::vector<Eigen::MatrixXd>>();
  auto bs = std::make_shared<std::vector<Vec>>();
  As->reserve(T + 1);
  bs->reserve(T + 1);
  As->push_back(Eigen::MatrixXd::Zero(n, n));  // t=0 slot, unused
  bs->push_back(Vec::Zero(n));
  double L = 0.0, M = 0.0;
  const double R = opts.box_radius * std::sqrt(static_cast<double>(n));
  for (int t = 1; t <= T; ++t) {
    const double sa = drifting ? std::sin(2.0 * M_PI * t / opts.drift_period + phase_a) : 0.0;
    const double sb = drifting ? std::sin(2.0 * M_PI * t / opts.drift_period + phase_b) : 0.0;
    As->push_back(A_base + sa * A_drift);
    bs->push_back(b_base + sb * b_drift);
    const double spectral_norm =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(As->back(), Eigen::EigenvaluesOnly)
            .eigenvalues()
            .cwiseAbs()
            .maxCoeff();
    L = std::max(L, spectral_norm);
    M = std::max(M, 0.5 * spectral_norm * R * R + bs->back().norm() * R);
  }
  L = std::max(L, 1e-12);

  auto value = [As, bs](int t, const Vec& x) {
    return 0.5 * x.dot((*As)[t] * x) + (*bs)[t].dot(x);
  };
  auto grad = [As, bs](int t, const Vec& x) { return Vec((*As)[t] * x + (*bs)[t]); };
  const double r = opts.box_radius;
  auto sample = [n, r](SplitMix64& rg) {
    Vec x(n);
    for (int i = 0; i < n; ++i) x[i] = rg.uniform(-r, r);
    return x;
  };
  std::string period = drifting ? std::to_string(opts.drift_period) : "inf";
  return LossStream(n, T, L, M,
                    "quadratic_drift(n=" + std::to_string(n) + ",T=" + std::to_string(T) +
                        ",period=" + period + ",seed=" + std::to_string(opts.seed) + ")",
                    value, grad, sample);
}

LossStream make_stationary_stochastic_stream(const LossStream& base, double sigma, int T,
                                             std::uint64_t seed, double domain_radius) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("stationary_stochastic: sigma must be >= 0");
  if (T < 1) throw std::invalid_argument("stationary_stochastic: T must be >= 1");
  base.reveal(1);  // the wrapped f is base's round 1; copies share the reveal state
  const int n = base.dimension();
  const double coord_sd = sigma / std::sqrt(static_cast<double>(n));
  auto xi = [seed, n, coord_sd](int t) {
    SplitMix64 rg = keyed_rng(seed, RngTag::stream_noise, {static_cast<std::uint64_t>(t)});
    return Vec(coord_sd * rg.normal_vector(n));
  };
  auto value = [base, xi](int t, const Vec& x) { return base.value(1, x) + xi(t).dot(x); };
  auto grad = [base, xi](int t, const Vec& x) { return Vec(base.grad(1, x) + xi(t)); };
  LossStream::SampleFn sample;
  if (base.has_domain_sampler())
    sample = [base](SplitMix64& rg) { return base.sample_domain(rg); };
  return LossStream(n, T, base.smoothness(), base.value_bound() + 5.0 * sigma * domain_radius,
                    "stationary_stochastic(base=" + base.descriptor() +
                        ",sigma=" + std::to_string(sigma) + ",seed=" + std::to_string(seed) + ")",
                    value, grad, sample);
}

}  // namespace onprox
