#include "onprox/games.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace onprox {

int GameSpec::total_dim() const {
  int n = 0;
  for (int d : dims) n += d;
  return n;
}

void GameSpec::validate() const {
  if (players < 1) throw std::invalid_argument("game: need at least one player");
  if (static_cast<int>(dims.size()) != players || static_cast<int>(regs.size()) != players ||
      static_cast<int>(offsets.size()) != players || static_cast<int>(signs.size()) != players)
    throw std::invalid_argument("game: per-player field lengths must equal the player count");
  int off = 0;
  for (int i = 0; i < players; ++i) {
    if (dims[i] < 1) throw std::invalid_argument("game: player dimension must be >= 1");
    if (offsets[i] != off) throw std::invalid_argument("game: inconsistent block offsets");
    off += dims[i];
  }
  if (!joint_value || !block_grad) throw std::invalid_argument("game: cost closures required");
  if (!(L > 0.0)) throw std::invalid_argument("game: L must be > 0");
  if (!(M >= 0.0)) throw std::invalid_argument("game: M must be >= 0");
}

GameSpec make_quadratic_game(std::vector<int> dims, std::uint64_t seed, double box_radius,
                             bool zero_sum) {
  if (dims.empty()) throw std::invalid_argument("game: need at least one player");
  if (!(box_radius > 0.0)) throw std::invalid_argument("game: box_radius must be > 0");
  GameSpec game;
  game.players = static_cast<int>(dims.size());
  game.dims = dims;
  int off = 0;
  for (int d : dims) {
    game.offsets.push_back(off);
    off += d;
  }
  const int n = off;

  SplitMix64 rng = keyed_rng(seed, RngTag::stream_data, {0x6A6Du});
  Eigen::MatrixXd B(n, n);
  const double sc = 1.0 / std::sqrt(static_cast<double>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) B(i, j) = rng.normal() * sc;
  auto Q = std::make_shared<Eigen::MatrixXd>(0.5 * (B + B.transpose()));
  auto b = std::make_shared<Vec>(rng.normal_vector(n));

  const double spectral_norm = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(*Q, Eigen::EigenvaluesOnly)
                          .eigenvalues()
                          .cwiseAbs()
                          .maxCoeff();
  game.L = std::max(spectral_norm, 1e-9);
  const double R = box_radius * std::sqrt(static_cast<double>(n));
  game.M = 0.5 * game.L * R * R + b->norm() * R;

  game.joint_value = [Q, b](const Vec& x) { return 0.5 * x.dot(*Q * x) + b->dot(x); };
  auto offsets = game.offsets;
  auto gdims = game.dims;
  game.block_grad = [Q, b, offsets, gdims](int i, const Vec& x) {
    return Vec((*Q * x + *b).segment(offsets[i], gdims[i]));
  };
  for (int i = 0; i < game.players; ++i) {
    game.regs.push_back(Regularizer::box(-box_radius, box_radius));
    game.signs.push_back(zero_sum && i > 0 ? -1.0 : 1.0);
  }
  game.validate();
  return game;
}

void GameHistory::push(const Vec& profile) {
  if (profile.size() != total_dim_)
    throw std::invalid_argument("game history: profile dimension mismatch");
  profiles_.push_back(profile);
}

const Vec& GameHistory::at(int t) const {
  if (t < 1 || t > rounds())
    throw ProtocolError("game history: round " + std::to_string(t) + " not committed yet (" +
                        std::to_string(rounds()) + " rounds on record)");
  return profiles_[t - 1];
}

LossStream player_stream(const GameSpec& game, int i, HistoryPtr history, int T) {
  game.validate();
  if (i < 0 || i >= game.players) throw std::out_of_range("player_stream: bad player index");
  if (!history) throw std::invalid_argument("player_stream: null history");
  auto shared = std::make_shared<GameSpec>(game);  // streams may outlive the caller's copy
  const int off = game.offsets[i], d = game.dims[i];
  const double sign = game.signs[i];
  auto value = [shared, history, off, d, sign](int t, const Vec& z) {
    Vec full = history->at(t);
    full.segment(off, d) = z;
    return sign * shared->joint_value(full);
  };
  auto grad = [shared, history, off, d, sign, i](int t, const Vec& z) {
    Vec full = history->at(t);
    full.segment(off, d) = z;
    return Vec(sign * shared->block_grad(i, full));
  };
  return LossStream(d, T, game.L, game.M,
                    "game_player(" + std::to_string(i) + "/" + std::to_string(game.players) + ")",
                    value, grad);
}

GameRunResult run_simultaneous(const GameSpec& game, const std::string& solver, StepConfig cfg,
                               const NoiseModel& noise, std::uint64_t seed,
                               std::optional<std::vector<Vec>> starts) {
  game.validate();
  const bool stochastic = solver == "alg2";
  if (!stochastic && solver != "alg1")
    throw std::invalid_argument("run_simultaneous: solver must be alg1 or alg2");
  if (cfg.T < 1) throw ConfigError("run_simultaneous: cfg.T must be set (streams have no "
                                   "intrinsic horizon)");
  cfg = stochastic ? validate_config_alg2(cfg, noise, false) : validate_config_alg1(cfg);
  if (cfg.w > cfg.T) throw ConfigError("step config: w must be <= T");

  const int m = game.players;
  std::vector<Vec> x(m);
  if (starts) {
    if (static_cast<int>(starts->size()) != m)
      throw std::invalid_argument("run_simultaneous: need one start per player");
    x = *starts;
  } else {
    for (int i = 0; i < m; ++i) x[i] = game.regs[i].project_start(game.dims[i]);
  }
  for (int i = 0; i < m; ++i)
    if (!std::isfinite(game.regs[i].value(x[i])))
      throw std::invalid_argument("run_simultaneous: player " + std::to_string(i) +
                                  " start outside dom g");

  GameRunResult out;
  out.history = std::make_shared<GameHistory>(game.total_dim());
  std::vector<StepConfig> cfgs(m, cfg);
  std::vector<Sfo> oracles;
  std::vector<WindowState> wins;
  for (int i = 0; i < m; ++i) {
    out.streams.push_back(player_stream(game, i, out.history, cfg.T));
    SolverTrace tr;
    tr.solver = solver;
    tr.T = cfg.T;
    tr.w = cfg.w;
    tr.eta = cfg.eta;
    tr.delta = cfg.delta;
    tr.sigma = stochastic ? cfg.sigma : 0.0;
    tr.x1 = x[i];
    out.traces.push_back(std::move(tr));
    cfgs[i].max_inner = resolve_max_inner(cfg, game.regs[i], x[i], game.M, stochastic);
    if (stochastic) {
      oracles.emplace_back(seed, noise.scaled(cfg.w), i);
      wins.emplace_back(cfg.w, game.dims[i]);
    }
  }

  for (int t = 1; t <= cfg.T; ++t) {
    Vec profile(game.total_dim());
    for (int i = 0; i < m; ++i) profile.segment(game.offsets[i], game.dims[i]) = x[i];
    out.history->push(profile);
    for (int i = 0; i < m; ++i) out.streams[i].reveal(t);
    for (int i = 0; i < m; ++i) {
      try {
        if (stochastic)
          alg2_round(out.streams[i], game.regs[i], cfgs[i], t, x[i], oracles[i], wins[i],
                     out.traces[i]);
        else
          alg1_round(out.streams[i], game.regs[i], cfgs[i], t, x[i], out.traces[i], false);
      } catch (const CappedRunError& e) {
        throw CappedRunError("player " + std::to_string(i) + ": " + e.what(), e.partial);
      }
    }
  }
  return out;
}

double equilibrium_residual_sum(const GameRunResult& run, const GameSpec& game, int t,
                                double eta, int w) {
  if (run.traces.empty() || t < 1 || t > static_cast<int>(run.traces[0].rounds.size()))
    throw std::out_of_range("equilibrium: round out of range");
  double acc = 0.0;
  for (int i = 0; i < game.players; ++i) {
    const Vec& xi = run.traces[i].rounds[t - 1].x;
    acc += residual_norm_sq(game.regs[i], xi, sliding_average_grad(run.streams[i], t, w, xi),
                            eta);
  }
  return acc;
}

bool equilibrium_check(const GameRunResult& run, const GameSpec& game, int t, double eta, int w,
                       double epsilon) {
  if (run.traces.empty() || t < 1 || t > static_cast<int>(run.traces[0].rounds.size()))
    throw std::out_of_range("equilibrium: round out of range");
  for (int i = 0; i < game.players; ++i) {
    const Vec& xi = run.traces[i].rounds[t - 1].x;
    if (residual_norm_sq(game.regs[i], xi, sliding_average_grad(run.streams[i], t, w, xi),
                         eta) > epsilon)
      return false;
  }
  return true;
}

int first_equilibrium_round(const GameRunResult& run, const GameSpec& game, double eta, int w,
                            double epsilon, int t_begin) {
  const int T = run.traces.empty() ? 0 : static_cast<int>(run.traces[0].rounds.size());
  for (int t = std::max(1, t_begin); t <= T; ++t)
    if (equilibrium_check(run, game, t, eta, w, epsilon)) return t;
  return -1;
}

}  // namespace onprox
