#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "onprox/regularizer.hpp"
#include "onprox/solver.hpp"
#include "onprox/stream.hpp"
#include "onprox/trace.hpp"
#include "onprox/types.hpp"

namespace onprox {

// m-player game over a joint smooth cost. Player i minimizes sign_i * f plus
// its own regularizer (sign -1 encodes the zero-sum/minimax opponent).
struct GameSpec {
  int players = 0;
  std::vector<int> dims;     // per-player block sizes (concatenated layout)
  std::vector<int> offsets;  // block offsets, offsets[i] = sum of dims[:i]
  std::vector<double> signs;
  std::function<double(const Vec&)> joint_value;       // f at a full profile
  std::function<Vec(int, const Vec&)> block_grad;      // partial grad of f, block i
  std::vector<Regularizer> regs;
  double L = 1.0;  // per-block smoothness bound (joint bound is valid)
  double M = 0.0;  // sup |f| over the product of domains

  int total_dim() const;
  void validate() const;
};

// Random symmetric quadratic f(x) = 0.5 x'Qx + b'x over per-player boxes
// [-box_radius, box_radius]^d. L = ||Q||_2 exactly; M analytic over the box.
GameSpec make_quadratic_game(std::vector<int> dims, std::uint64_t seed, double box_radius = 1.0,
                             bool zero_sum = false);

// Round-indexed frozen joint profiles, shared by the player streams.
class GameHistory {
 public:
  explicit GameHistory(int total_dim) : total_dim_(total_dim) {}
  void push(const Vec& profile);
  const Vec& at(int t) const;  // 1-based; throws ProtocolError if not yet pushed
  int rounds() const { return static_cast<int>(profiles_.size()); }

 private:
  int total_dim_;
  std::vector<Vec> profiles_;
};

using HistoryPtr = std::shared_ptr<GameHistory>;

// Player i's online loss: f_t^i(z) = sign_i * f(profile_t with block i := z).
// Rounds must be pushed to the history before they are revealed.
LossStream player_stream(const GameSpec& game, int i, HistoryPtr history, int T);

struct GameRunResult {
  std::vector<SolverTrace> traces;   // aligned by round
  std::vector<LossStream> streams;   // fully revealed after the run
  HistoryPtr history;
};

// Lock-step simultaneous play: each round all players commit their iterates,
// the round is revealed from the frozen profile, then every player runs its
// inner loop independently. solver is "alg1" or "alg2"; a capped player aborts
// the run with its partial trace tagged by player index.
GameRunResult run_simultaneous(const GameSpec& game, const std::string& solver, StepConfig cfg,
                               const NoiseModel& noise, std::uint64_t seed,
                               std::optional<std::vector<Vec>> starts = std::nullopt);

// Sum over players of ||P_eta(x_t^i; grad S^i_{t,w}(x_t^i))||^2 at round t
// (exact gradients from the frozen history).
double equilibrium_residual_sum(const GameRunResult& run, const GameSpec& game, int t,
                                double eta, int w);

// True iff every player's residual square at round t is <= epsilon.
bool equilibrium_check(const GameRunResult& run, const GameSpec& game, int t, double eta, int w,
                       double epsilon);

// Smallest t in [t_begin, T] where equilibrium_check passes; -1 if none.
int first_equilibrium_round(const GameRunResult& run, const GameSpec& game, double eta, int w,
                            double epsilon, int t_begin);

}  // namespace onprox
