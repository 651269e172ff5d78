#pragma once

#include <cstdint>
#include <string>

#include "onprox/stream.hpp"
#include "onprox/types.hpp"

namespace onprox {

enum class NoiseKind { Exact, GaussianIsotropic, BallUniform };

// Noise law of a stochastic first-order oracle. Gaussian scales per-coordinate
// variance as sigma^2/n so E||noise||^2 = sigma^2 exactly; ball-uniform draws
// from the closed radius-sigma ball, which is simultaneously unbiased
// (symmetry), second-moment bounded (E||noise||^2 = sigma^2 n/(n+2) <=
// sigma^2), and hard-bounded (||noise|| <= sigma always).
struct NoiseModel {
  NoiseKind kind = NoiseKind::Exact;
  double sigma = 0.0;

  static NoiseModel exact() { return {NoiseKind::Exact, 0.0}; }
  static NoiseModel gaussian(double sigma);
  static NoiseModel ball(double sigma);

  // Same law with sigma <- sigma/factor (the solver queries at sigma/w).
  NoiseModel scaled(double factor) const;

  bool is_exact() const { return kind == NoiseKind::Exact || sigma == 0.0; }
  bool hard_bounded() const { return kind != NoiseKind::GaussianIsotropic || sigma == 0.0; }
  std::string descriptor() const;
};

struct GradientSample {
  Vec grad;
  int calls = 1;
};

// Seeded stochastic first-order oracle over a stream. Every draw is a pure
// function of (seed, player, t, k, i), so equal seeds and equal query indices
// give bitwise-identical samples regardless of thread interleaving. The oracle
// enforces the stochastic solver's window-reach contract: during round t only functions
// i in [t-w+1, t] may be sampled. Queries with i <= 0 are the identically-zero
// functions: they return an exact zero (no noise) but still count as calls, so
// call accounting stays exactly 1 + w per inner iteration.
class Sfo {
 public:
  Sfo(std::uint64_t seed, NoiseModel model, int player = 0);

  void begin_round(int t, int w);

  // Sample of grad f_i at x, taken during inner iteration k (k=0 is the
  // round's step-2 draw).
  GradientSample sample(const LossStream& stream, int i, int k, const Vec& x);

  long total_calls() const { return calls_; }
  const NoiseModel& model() const { return model_; }
  int player() const { return player_; }

 private:
  Vec noise(int i, int k, Eigen::Index n);

  std::uint64_t seed_;
  NoiseModel model_;
  int player_;
  int round_ = 0;
  int w_ = 0;
  long calls_ = 0;
};

}  // namespace onprox
