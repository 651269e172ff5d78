#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>

namespace onprox {

using Vec = Eigen::VectorXd;

// A stream was queried for a round that has not been revealed yet (or a game
// round before every player committed an action).
struct ProtocolError : std::logic_error {
  using std::logic_error::logic_error;
};

// Parameter combination rejected up front (e.g. the stochastic solver's
// noise/accuracy inequality). Carries the minimal admissible delta when the
// failed inequality is about delta.
struct ConfigError : std::invalid_argument {
  explicit ConfigError(const std::string& msg, double min_delta_ = std::nan(""))
      : std::invalid_argument(msg), min_delta(min_delta_) {}
  double min_delta;
};

// A runtime self-check failed (sufficient-decrease certificate, accounting
// identity). Indicates a bug, not a bad input.
struct InvariantError : std::logic_error {
  using std::logic_error::logic_error;
};

inline void ensure_finite(const Vec& v, const char* what) {
  if (!v.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite entries");
}

inline void ensure_same_size(const Vec& a, const Vec& b, const char* what) {
  if (a.size() != b.size())
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (" +
                                std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
}

// --- counter-based randomness ---------------------------------------------
//
// Every random draw in the project is a pure function of (seed, tag, indices).
// That keeps replications reproducible under any thread interleaving and lets
// a stochastic oracle re-produce "the same round-t function" without memoizing
// anything: re-deriving the key re-derives the stream.

inline std::uint64_t splitmix_next(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

enum class RngTag : std::uint64_t {
  stream_data = 1,   // per-stream static data (matrices, sign sequences)
  stream_noise = 2,  // per-round stochastic-stream perturbations
  oracle = 3,        // SFO noise draws
  demand = 4,        // OnTAP demand perturbations
  domain = 5,        // domain samplers (sup estimates, t* draws)
  experiment = 6,    // driver-level draws (initial points etc.)
};

// FNV-1a over the parts, then one avalanche round; order-sensitive.
inline std::uint64_t mix_key(std::uint64_t seed, RngTag tag,
                             std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto fold = [&h](std::uint64_t p) {
    for (int i = 0; i < 8; ++i) {
      h ^= (p >> (8 * i)) & 0xFFULL;
      h *= 0x100000001B3ULL;
    }
  };
  fold(seed);
  fold(static_cast<std::uint64_t>(tag));
  for (std::uint64_t p : parts) fold(p);
  std::uint64_t s = h;
  return splitmix_next(s);
}

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t state) : state_(state) {}

  std::uint64_t next() { return splitmix_next(state_); }

  // [0, 1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal, Box-Muller with spare caching
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log1p(-u1));  // log(1-u1), u1 in [0,1)
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  Vec normal_vector(Eigen::Index n) {
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

inline SplitMix64 keyed_rng(std::uint64_t seed, RngTag tag,
                            std::initializer_list<std::uint64_t> parts) {
  return SplitMix64(mix_key(seed, tag, parts));
}

}  // namespace onprox
