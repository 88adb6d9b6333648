#pragma once

// Box-constrained fitting of AccParams to a measured leader/follower record.
//
// The objective is the time-averaged squared speed error between the
// simulated and measured follower over [tau, T], with the simulated follower
// pinned to the measurements on [0, tau]. It is minimized by a mesh adaptive
// direct search: each poll tries +/- the columns of a random orthonormal
// basis scaled by the mesh size, the mesh doubles on success and halves on
// failure. Before polling, a search step proposes the minimizer of a
// quadratic model fitted to cached evaluations around the incumbent. Several
// Latin-hypercube starts run concurrently.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "accsim/error.hpp"
#include "accsim/model.hpp"
#include "accsim/sim.hpp"

namespace accsim {

namespace detail {

inline double TrapezoidMeanSquare(std::span<const double> a, std::span<const double> b,
                                  double dt) {
  if (a.size() != b.size()) {
    throw LengthMismatch("series lengths differ: " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  if (a.size() < 2) throw LengthMismatch("error metrics need at least two samples");
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double e = a[k] - b[k];
    const double w = (k == 0 || k + 1 == a.size()) ? 0.5 : 1.0;
    acc += w * e * e;
  }
  return acc * dt / (dt * static_cast<double>(a.size() - 1));
}

}  // namespace detail

/// Time-averaged squared speed error (trapezoidal rule), (m/s)^2.
inline double MseSpeed(std::span<const double> simulated, std::span<const double> measured,
                       double dt) {
  return detail::TrapezoidMeanSquare(simulated, measured, dt);
}

/// Root of the time-averaged squared gap error, m.
inline double RmseSpacing(std::span<const double> simulated, std::span<const double> measured,
                          double dt) {
  return std::sqrt(detail::TrapezoidMeanSquare(simulated, measured, dt));
}

struct CalibrationConfig {
  ParamBounds bounds;
  int n_multistarts = 4;
  int max_evals = 3000;        // per start
  std::uint64_t rng_seed = 1;
  double sim_dt = 0.0;         // largest internal step, s; 0 uses the data spacing
  double train_fraction = 0.5; // leading share of a record used for training
  double mesh_tol = 1e-9;      // stop once the normalized mesh size drops below

  void Validate() const {
    bounds.Validate();
    if (n_multistarts < 1) throw Error("n_multistarts must be >= 1");
    if (max_evals < 100) throw Error("max_evals must be >= 100");
    if (!(sim_dt >= 0.0)) throw Error("sim_dt must be >= 0");
    if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
      throw Error("train_fraction must lie in (0, 1]");
    }
    if (!(mesh_tol > 0.0)) throw Error("mesh_tol must be > 0");
  }
};

/// Simulation of `params` against a record, with history taken from the
/// record on [t0, t0 + tau] rounded up to whole samples.
struct Replay {
  Trajectory simulated;
  std::size_t first;  // first simulated (non-history) sample
};

inline Replay ReplayRecord(const AccParams& params, const Trajectory& record,
                           double sim_dt = 0.0) {
  params.Validate();
  const std::size_t n = record.size();
  const auto hist = static_cast<std::size_t>(std::ceil(params.tau / record.dt - 1e-9));
  if (hist + 1 >= n) throw BadHistory("record is shorter than the delay window");
  std::vector<State> history(hist + 1);
  for (std::size_t k = 0; k <= hist; ++k) {
    history[k] = {record.space_gap[k], record.follower_speed[k]};
  }
  SimConfig cfg;
  cfg.dt = record.dt;
  if (sim_dt > 0.0) {
    cfg.min_substeps = std::max(1, static_cast<int>(std::ceil(record.dt / sim_dt - 1e-9)));
    cfg.max_substeps = std::max(cfg.max_substeps, cfg.min_substeps);
  }
  return {SimulateFollower(record.LeadSeries(), params, history, cfg), hist};
}

/// Calibration objective; +inf for candidates that cannot be simulated.
inline double Objective(const AccParams& candidate, const Trajectory& train,
                        double sim_dt = 0.0) {
  if (!candidate.IsValid()) return std::numeric_limits<double>::infinity();
  try {
    const Replay r = ReplayRecord(candidate, train, sim_dt);
    const std::span<const double> sim(r.simulated.follower_speed);
    const std::span<const double> meas(train.follower_speed);
    const double mse =
        MseSpeed(sim.subspan(r.first), meas.subspan(r.first), train.dt);
    return std::isfinite(mse) ? mse : std::numeric_limits<double>::infinity();
  } catch (const Error&) {
    return std::numeric_limits<double>::infinity();
  }
}

struct ScenarioError {
  std::string name;
  bool ok = false;
  double speed_rmse = 0.0;    // m/s
  double spacing_rmse = 0.0;  // m
  std::string error;          // set when !ok
};

struct NamedTrajectory {
  std::string name;
  Trajectory trajectory;
};

/// Speed and spacing RMSE of `params` on each scenario over [tau, T].
/// Failures are reported per scenario.
inline std::vector<ScenarioError> EvaluateTestErrors(const AccParams& params,
                                                     const std::vector<NamedTrajectory>& scenarios,
                                                     double sim_dt = 0.0) {
  std::vector<ScenarioError> out;
  for (const NamedTrajectory& sc : scenarios) {
    ScenarioError e;
    e.name = sc.name;
    try {
      sc.trajectory.Validate();
      const Replay r = ReplayRecord(params, sc.trajectory, sim_dt);
      const auto from = [&](const std::vector<double>& v) {
        return std::span<const double>(v).subspan(r.first);
      };
      e.speed_rmse = std::sqrt(MseSpeed(from(r.simulated.follower_speed),
                                        from(sc.trajectory.follower_speed), sc.trajectory.dt));
      e.spacing_rmse = RmseSpacing(from(r.simulated.space_gap), from(sc.trajectory.space_gap),
                                   sc.trajectory.dt);
      e.ok = true;
    } catch (const std::exception& ex) {
      e.error = ex.what();
    }
    out.push_back(std::move(e));
  }
  return out;
}

using ParamVector = std::array<double, kNumParams>;

struct StartDiagnostics {
  ParamVector start;  // normalized to the bounds box
  AccParams params;
  double objective = std::numeric_limits<double>::infinity();
  int evals = 0;
  bool mesh_converged = false;
  std::vector<double> incumbent;  // incumbent objective after every evaluation
};

struct CalibrationResult {
  AccParams params;
  double train_mse_speed = 0.0;    // (m/s)^2
  double train_rmse_spacing = 0.0; // m
  std::vector<ScenarioError> test_errors;
  int evals_used = 0;
  bool converged = false;
  std::size_t best_start = 0;
  double param_scatter = 0.0;  // spread of near-optimal starts, share of box width
  bool degenerate = false;     // near-optimal starts disagree on the parameters
  std::vector<StartDiagnostics> starts;
};

namespace detail {

/// Uniform double in [0, 1) from the top 53 bits.
inline double Uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::vector<ParamVector> LatinHypercube(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<ParamVector> pts(static_cast<std::size_t>(n));
  for (std::size_t d = 0; d < kNumParams; ++d) {
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    for (int i = n - 1; i > 0; --i) {
      const auto j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
      std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }
    for (int i = 0; i < n; ++i) {
      pts[static_cast<std::size_t>(i)][d] =
          (perm[static_cast<std::size_t>(i)] + Uniform01(rng)) / n;
    }
  }
  return pts;
}

/// Householder reflection of a random unit vector: an orthonormal basis.
inline std::array<ParamVector, kNumParams> RandomBasis(std::mt19937_64& rng) {
  ParamVector u;
  double norm = 0.0;
  while (norm < 1e-6) {
    norm = 0.0;
    for (double& x : u) {
      // Box-Muller keeps the direction isotropic.
      const double r = std::sqrt(-2.0 * std::log(1.0 - Uniform01(rng)));
      x = r * std::cos(2.0 * 3.141592653589793 * Uniform01(rng));
      norm += x * x;
    }
  }
  std::array<ParamVector, kNumParams> h;
  for (std::size_t i = 0; i < kNumParams; ++i) {
    for (std::size_t j = 0; j < kNumParams; ++j) {
      h[i][j] = (i == j ? 1.0 : 0.0) - 2.0 * u[i] * u[j] / norm;
    }
  }
  return h;
}

class MeshSearch {
 public:
  MeshSearch(const Trajectory& train, const CalibrationConfig& cfg)
      : train_(train), cfg_(cfg) {}

  AccParams Denormalize(const ParamVector& x) const {
    ParamVector p;
    for (std::size_t i = 0; i < kNumParams; ++i) {
      const Interval& b = cfg_.bounds[i];
      p[i] = b.lower + x[i] * b.width();
    }
    return FromArray(p);
  }

  StartDiagnostics Run(const ParamVector& start, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    StartDiagnostics diag;
    diag.start = start;
    ParamVector x = start;
    double fx = Evaluate(x, diag);
    double mesh = 0.125;
    constexpr double kMaxMesh = 0.5;
    ParamVector last_step{};
    bool have_step = false;

    while (diag.evals < cfg_.max_evals && mesh >= cfg_.mesh_tol) {
      bool improved = false;
      if (auto y = ModelMinimizer(x, mesh); y && *y != x) {
        const double fy = Evaluate(*y, diag);
        if (fy < fx) {
          for (std::size_t i = 0; i < kNumParams; ++i) last_step[i] = (*y)[i] - x[i];
          have_step = true;
          x = *y;
          fx = fy;
          improved = true;
        }
      }
      // Repeat the last successful displacement.
      if (!improved && have_step) {
        ParamVector y = Clamp(Add(x, last_step, 1.0));
        if (y != x) {
          const double fy = Evaluate(y, diag);
          if (fy < fx) {
            for (std::size_t i = 0; i < kNumParams; ++i) last_step[i] = y[i] - x[i];
            x = y;
            fx = fy;
            improved = true;
          } else {
            have_step = false;
          }
        }
      }
      if (!improved) {
        const auto basis = RandomBasis(rng);
        for (std::size_t d = 0; d < 2 * kNumParams && diag.evals < cfg_.max_evals; ++d) {
          const ParamVector& dir = basis[d / 2];
          const double sign = (d % 2 == 0) ? 1.0 : -1.0;
          ParamVector y = Clamp(Add(x, dir, sign * mesh));
          if (y == x) continue;
          const double fy = Evaluate(y, diag);
          if (fy < fx) {
            for (std::size_t i = 0; i < kNumParams; ++i) last_step[i] = y[i] - x[i];
            have_step = true;
            x = y;
            fx = fy;
            improved = true;
            break;
          }
        }
      }
      mesh = improved ? std::min(2.0 * mesh, kMaxMesh) : 0.5 * mesh;
    }
    diag.mesh_converged = mesh < cfg_.mesh_tol;
    diag.params = Denormalize(x);
    diag.objective = fx;
    return diag;
  }

 private:
  static ParamVector Add(const ParamVector& x, const ParamVector& d, double scale) {
    ParamVector y;
    for (std::size_t i = 0; i < kNumParams; ++i) y[i] = x[i] + scale * d[i];
    return y;
  }

  static ParamVector Clamp(ParamVector x) {
    for (double& v : x) v = std::clamp(v, 0.0, 1.0);
    return x;
  }

  /// Minimizer of a least-squares quadratic fit to the cached points
  /// nearest `x`, limited to a trust region; nullopt when the fit is unusable.
  std::optional<ParamVector> ModelMinimizer(const ParamVector& x, double mesh) const {
    constexpr std::size_t kTerms = 1 + kNumParams + kNumParams * (kNumParams + 1) / 2;
    constexpr std::size_t kPoints = 2 * kTerms;
    if (cache_.size() < kPoints) return std::nullopt;

    std::vector<std::pair<double, std::size_t>> by_dist;
    by_dist.reserve(cache_.size());
    for (std::size_t i = 0; i < cache_.size(); ++i) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < kNumParams; ++j) {
        const double d = cache_[i].first[j] - x[j];
        d2 += d * d;
      }
      by_dist.emplace_back(d2, i);
    }
    std::partial_sort(by_dist.begin(), by_dist.begin() + kPoints, by_dist.end());
    const double radius = std::sqrt(by_dist[kPoints - 1].first);
    if (!(radius > 0.0)) return std::nullopt;

    Eigen::MatrixXd a(kPoints, kTerms);
    Eigen::VectorXd b(kPoints);
    for (std::size_t r = 0; r < kPoints; ++r) {
      const auto& [px, pf] = cache_[by_dist[r].second];
      Eigen::Matrix<double, kNumParams, 1> d;
      for (std::size_t j = 0; j < kNumParams; ++j) d(j) = (px[j] - x[j]) / radius;
      std::size_t c = 0;
      a(r, c++) = 1.0;
      for (std::size_t j = 0; j < kNumParams; ++j) a(r, c++) = d(j);
      for (std::size_t j = 0; j < kNumParams; ++j) {
        for (std::size_t k = j; k < kNumParams; ++k) {
          a(r, c++) = (j == k ? 0.5 : 1.0) * d(j) * d(k);
        }
      }
      b(r) = pf;
    }
    const Eigen::VectorXd coef = a.colPivHouseholderQr().solve(b);
    if (!coef.allFinite()) return std::nullopt;
    Eigen::Matrix<double, kNumParams, 1> g;
    Eigen::Matrix<double, kNumParams, kNumParams> h;
    std::size_t c = 1;
    for (std::size_t j = 0; j < kNumParams; ++j) g(j) = coef(c++);
    for (std::size_t j = 0; j < kNumParams; ++j) {
      for (std::size_t k = j; k < kNumParams; ++k) {
        h(j, k) = coef(c);
        h(k, j) = coef(c);
        ++c;
      }
    }
    const Eigen::LDLT<Eigen::Matrix<double, kNumParams, kNumParams>> ldlt(h);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return std::nullopt;
    if ((ldlt.vectorD().array() <= 0.0).any()) return std::nullopt;
    Eigen::Matrix<double, kNumParams, 1> step = -ldlt.solve(g);
    const double limit = std::max(2.0, 4.0 * mesh / radius);
    if (step.norm() > limit) step *= limit / step.norm();
    ParamVector y;
    for (std::size_t j = 0; j < kNumParams; ++j) y[j] = x[j] + radius * step(j);
    return Clamp(y);
  }

  double Evaluate(const ParamVector& x, StartDiagnostics& diag) {
    const AccParams p = Denormalize(x);
    if (!cfg_.bounds.contains(p)) {
      throw std::logic_error("mesh search left the parameter box");
    }
    const double f = Objective(p, train_, cfg_.sim_dt);
    ++diag.evals;
    if (std::isfinite(f)) cache_.emplace_back(x, f);
    const double best = diag.incumbent.empty() ? f : std::min(diag.incumbent.back(), f);
    diag.incumbent.push_back(best);
    return f;
  }

  const Trajectory& train_;
  const CalibrationConfig& cfg_;
  std::vector<std::pair<ParamVector, double>> cache_;
};

}  // namespace detail

/// Leading `fraction` of a record, at least two samples.
inline Trajectory TrainingSplit(const Trajectory& record, double fraction) {
  const auto n = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(record.size())));
  return record.Slice(0, std::max<std::size_t>(n, 2));
}

/// Fits AccParams to `train`. Deterministic for a given (train, cfg).
inline CalibrationResult Calibrate(const Trajectory& train, const CalibrationConfig& cfg) {
  cfg.Validate();
  train.Validate();
  const auto starts = detail::LatinHypercube(cfg.n_multistarts, cfg.rng_seed);

  std::vector<StartDiagnostics> runs(starts.size());
  std::vector<std::exception_ptr> failures(starts.size());
  const unsigned n_threads =
      std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(),
                                      static_cast<unsigned>(starts.size())));
  auto work = [&](unsigned worker) {
    for (std::size_t s = worker; s < starts.size(); s += n_threads) {
      try {
        detail::MeshSearch search(train, cfg);
        runs[s] = search.Run(starts[s], cfg.rng_seed * 0x9E3779B97F4A7C15ull + s + 1);
      } catch (...) {
        failures[s] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  for (unsigned t = 1; t < n_threads; ++t) threads.emplace_back(work, t);
  work(0);
  for (auto& t : threads) t.join();
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  CalibrationResult out;
  std::size_t best = 0;
  for (std::size_t s = 0; s < runs.size(); ++s) {
    out.evals_used += runs[s].evals;
    if (runs[s].objective < runs[best].objective) best = s;
  }
  if (!std::isfinite(runs[best].objective)) {
    throw NoFeasibleCandidate("no start produced a finite objective");
  }
  out.best_start = best;
  out.params = runs[best].params;
  out.train_mse_speed = runs[best].objective;

  // Spread of the starts that reached (nearly) the same objective value.
  const double cutoff = runs[best].objective + std::max(1e-8, 0.01 * runs[best].objective);
  const ParamVector ref = ToArray(out.params);
  for (const StartDiagnostics& r : runs) {
    if (!(r.objective <= cutoff)) continue;
    const ParamVector x = ToArray(r.params);
    for (std::size_t i = 0; i < kNumParams; ++i) {
      const double w = cfg.bounds[i].width();
      if (w > 0.0) out.param_scatter = std::max(out.param_scatter, std::abs(x[i] - ref[i]) / w);
    }
  }
  constexpr double kScatterLimit = 0.05;
  out.degenerate = out.param_scatter > kScatterLimit;

  const Replay r = ReplayRecord(out.params, train, cfg.sim_dt);
  out.train_rmse_spacing =
      RmseSpacing(std::span<const double>(r.simulated.space_gap).subspan(r.first),
                  std::span<const double>(train.space_gap).subspan(r.first), train.dt);
  out.converged = runs[best].mesh_converged && !out.degenerate;
  out.starts = std::move(runs);
  return out;
}

}  // namespace accsim
