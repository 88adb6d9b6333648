#pragma once

// Time integration of the delayed car-following model for a single follower
// driven by a measured leader, and for a platoon of followers behind a
// scripted lead vehicle.
//
// The integrator is classical RK4 on a uniform internal grid (an integer
// number of substeps per output sample). Delayed states are read from a
// cubic Hermite interpolant of the stored solution, which keeps the scheme
// fourth order. Slope discontinuities of the lead input propagate through
// the delays; the grid is split at those times so that each RK4 step only
// sees smooth data.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "accsim/error.hpp"
#include "accsim/model.hpp"
#include "accsim/series.hpp"

namespace accsim {

/// Uniformly sampled leader/follower record.
struct Trajectory {
  double t0 = 0.0;
  double dt = 0.1;
  std::vector<double> lead_speed;      // m/s
  std::vector<double> follower_speed;  // m/s
  std::vector<double> space_gap;       // m

  std::size_t size() const { return follower_speed.size(); }
  double time(std::size_t k) const { return t0 + dt * static_cast<double>(k); }
  double t_end() const { return time(size() - 1); }

  SampledSeries LeadSeries() const { return {t0, dt, lead_speed}; }

  /// Samples [begin, end) as a new trajectory.
  Trajectory Slice(std::size_t begin, std::size_t end) const {
    end = std::min(end, size());
    Trajectory out;
    out.t0 = time(begin);
    out.dt = dt;
    auto cut = [&](const std::vector<double>& v) {
      return std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(begin),
                                 v.begin() + static_cast<std::ptrdiff_t>(end));
    };
    out.lead_speed = cut(lead_speed);
    out.follower_speed = cut(follower_speed);
    out.space_gap = cut(space_gap);
    return out;
  }

  void Validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw Error("trajectory dt must be > 0");
    if (!std::isfinite(t0)) throw Error("trajectory t0 must be finite");
    const std::size_t n = follower_speed.size();
    if (lead_speed.size() != n || space_gap.size() != n) {
      throw LengthMismatch("trajectory channels differ in length");
    }
    if (n < 2) throw Error("trajectory needs at least two samples");
    for (std::size_t k = 0; k < n; ++k) {
      if (!std::isfinite(lead_speed[k]) || !std::isfinite(follower_speed[k]) ||
          !std::isfinite(space_gap[k])) {
        throw Error("trajectory contains non-finite values");
      }
      if (lead_speed[k] < 0.0 || follower_speed[k] < 0.0) {
        throw Error("trajectory contains negative speeds");
      }
    }
  }
};

struct SimConfig {
  double dt = 0.1;             // output sample spacing, s
  double duration = 0.0;       // platoon horizon, s; 0 uses the lead profile span
  double speed_floor = 0.0;    // m/s
  double collision_gap = 0.0;  // m
  int min_substeps = 1;        // internal RK4 steps per output sample
  int max_substeps = 64;       // cap on the refinement that keeps h <= tau/4
  bool track_breakpoints = true;

  void Validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw Error("sim dt must be > 0");
    if (!(duration >= 0.0)) throw Error("sim duration must be >= 0");
    if (min_substeps < 1 || max_substeps < min_substeps) {
      throw Error("sim substep limits are inconsistent");
    }
  }
};

enum class EventKind { kDisengage, kCollision };

inline const char* ToString(EventKind kind) {
  return kind == EventKind::kDisengage ? "disengage" : "collision";
}

struct Event {
  EventKind kind;
  int vehicle;   // platoon index; 1 is the first follower
  double time;   // s
  double value;  // speed (m/s) for disengagement, gap (m) for collision
};

struct SimResult {
  double t0 = 0.0;
  double dt = 0.1;
  std::vector<std::vector<double>> speed;  // [vehicle][sample]; vehicle 0 leads
  std::vector<std::vector<double>> gap;    // [follower - 1][sample]
  std::vector<Event> events;

  std::size_t num_vehicles() const { return speed.size(); }
  std::size_t num_samples() const { return speed.empty() ? 0 : speed[0].size(); }
  double time(std::size_t k) const { return t0 + dt * static_cast<double>(k); }

  bool collided() const {
    return std::any_of(events.begin(), events.end(), [](const Event& e) {
      return e.kind == EventKind::kCollision;
    });
  }
};

namespace detail {

/// Cubic Hermite interpolant on [ta, tb], evaluated at t (may extrapolate).
inline double Hermite(double ta, double tb, double ya, double yb, double fa,
                      double fb, double t) {
  const double h = tb - ta;
  const double u = (t - ta) / h;
  const double u2 = u * u;
  const double u3 = u2 * u;
  return (2 * u3 - 3 * u2 + 1) * ya + (u3 - 2 * u2 + u) * h * fa +
         (-2 * u3 + 3 * u2) * yb + (u3 - u2) * h * fb;
}

struct ChainSetup {
  const SampledSeries* lead = nullptr;
  std::vector<AccParams> params;         // per follower
  std::vector<SampledSeries> pre_gap;    // per follower, read for t <= t_start
  std::vector<SampledSeries> pre_speed;  // per follower, read for t <= t_start
  std::vector<State> initial;            // per follower, at t_start
  double t_start = 0.0;
  std::size_t n_samples = 0;             // output samples, t_start included
  SimConfig cfg;
  std::vector<double> min_acc_speed;     // empty disables disengage events
  bool halt_on_collision = false;
};

struct ChainOutput {
  std::vector<std::vector<double>> gap;    // per follower
  std::vector<std::vector<double>> speed;  // per follower
  std::vector<Event> events;
};

/// Number of RK4 steps per output sample.
inline int SubstepsFor(const std::vector<AccParams>& params, const SimConfig& cfg) {
  int m = cfg.min_substeps;
  for (const AccParams& p : params) {
    if (p.tau > 0.0) {
      const double need = std::ceil(cfg.dt / (p.tau / 4.0) - 1e-9);
      if (need > m) m = static_cast<int>(std::min<double>(need, cfg.max_substeps));
    }
  }
  return std::max(1, std::min(m, cfg.max_substeps));
}

/// Times inside (t_start, t_end) where the solution loses smoothness:
/// input corners shifted by sums of up to `kMaxDepth` delays along the chain.
inline std::vector<double> Breakpoints(const ChainSetup& setup, double t_end) {
  constexpr int kMaxDepth = 3;
  std::vector<double> corners = setup.lead->CornerTimes();
  for (const auto& pre : setup.pre_gap) {
    const auto c = pre.CornerTimes();
    corners.insert(corners.end(), c.begin(), c.end());
  }
  for (const auto& pre : setup.pre_speed) {
    const auto c = pre.CornerTimes();
    corners.insert(corners.end(), c.begin(), c.end());
  }
  corners.push_back(setup.t_start);

  // Dense corners mean raw measured input; there is no smoothness to protect.
  const std::size_t input_samples = setup.lead->size();
  if (corners.size() > input_samples / 4 + 16) return {};

  struct Offset {
    double value;
    int depth;
  };
  std::vector<Offset> offsets = {{0.0, 0}};
  std::vector<Offset> level = offsets;
  for (const AccParams& p : setup.params) {
    if (p.tau <= 0.0) continue;
    std::vector<Offset> next = level;
    for (const Offset& o : level) {
      if (o.depth < kMaxDepth) next.push_back({o.value + p.tau, o.depth + 1});
    }
    level = std::move(next);
    offsets.insert(offsets.end(), level.begin(), level.end());
  }
  std::vector<double> shifts;
  for (const Offset& o : offsets) shifts.push_back(o.value);
  std::sort(shifts.begin(), shifts.end());
  shifts.erase(std::unique(shifts.begin(), shifts.end(),
                           [](double a, double b) { return std::abs(a - b) < 1e-12; }),
               shifts.end());

  std::vector<double> out;
  for (double c : corners) {
    for (double d : shifts) {
      const double t = c + d;
      if (t > setup.t_start && t < t_end) out.push_back(t);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end(),
                        [](double a, double b) { return std::abs(a - b) < 1e-12; }),
            out.end());
  return out;
}

class ChainIntegrator {
 public:
  explicit ChainIntegrator(const ChainSetup& setup)
      : setup_(setup), n_(setup.params.size()), dim_(2 * n_) {}

  ChainOutput Run() {
    const SimConfig& cfg = setup_.cfg;
    const int m = SubstepsFor(setup_.params, cfg);
    const double h = cfg.dt / m;
    const std::size_t n_samples = setup_.n_samples;
    const double t_end = setup_.t_start + cfg.dt * static_cast<double>(n_samples - 1);

    std::vector<double> breakpoints;
    if (cfg.track_breakpoints) breakpoints = Breakpoints(setup_, t_end);
    auto next_bp = breakpoints.begin();

    ChainOutput out;
    out.gap.assign(n_, {});
    out.speed.assign(n_, {});
    disengaged_.assign(n_, false);

    std::vector<double> y(dim_);
    for (std::size_t i = 0; i < n_; ++i) {
      y[2 * i] = setup_.initial[i].s;
      y[2 * i + 1] = std::max(setup_.initial[i].v, cfg.speed_floor);
    }
    times_.reserve(n_samples * static_cast<std::size_t>(m) + breakpoints.size() + 1);
    PushNode(setup_.t_start, y);
    if (Record(0, y, out)) return out;

    stage_.resize(dim_);
    for (auto& k : k_) k.resize(dim_);

    const std::size_t total = (n_samples - 1) * static_cast<std::size_t>(m);
    for (std::size_t step = 0; step < total; ++step) {
      const double ta = setup_.t_start + h * static_cast<double>(step);
      const double tb = setup_.t_start + h * static_cast<double>(step + 1);
      const double guard = 1e-9 * h;
      while (next_bp != breakpoints.end() && *next_bp <= ta + guard) ++next_bp;
      while (next_bp != breakpoints.end() && *next_bp < tb - guard) {
        Advance(*next_bp, y);
        ++next_bp;
      }
      Advance(tb, y);
      if ((step + 1) % static_cast<std::size_t>(m) == 0) {
        const std::size_t sample = (step + 1) / static_cast<std::size_t>(m);
        if (Record(sample, y, out)) break;
      }
    }
    return out;
  }

 private:
  std::size_t NodeCount() const { return times_.size(); }
  double NodeY(std::size_t j, std::size_t c) const { return ys_[j * dim_ + c]; }
  double NodeF(std::size_t j, std::size_t c) const { return fs_[j * dim_ + c]; }

  /// State component `c` (2i: gap of follower i, 2i+1: its speed) at time t.
  double Past(std::size_t c, double t) const {
    if (t <= setup_.t_start) {
      const std::size_t i = c / 2;
      return (c % 2 == 0) ? setup_.pre_gap[i].At(t) : setup_.pre_speed[i].At(t);
    }
    const std::size_t n = NodeCount();
    if (n == 1) return NodeY(0, c) + NodeF(0, c) * (t - times_[0]);
    std::size_t j;
    if (t >= times_.back()) {
      j = n - 2;
    } else {
      // Delayed reads trail the integration front, so search backwards.
      j = n - 2;
      if (times_[j] > t) {
        const auto it = std::upper_bound(times_.begin(), times_.end(), t);
        j = static_cast<std::size_t>(it - times_.begin()) - 1;
      }
    }
    return Hermite(times_[j], times_[j + 1], NodeY(j, c), NodeY(j + 1, c),
                   NodeF(j, c), NodeF(j + 1, c), t);
  }

  void Rhs(double t, const std::vector<double>& y, std::vector<double>& dy) const {
    const SampledSeries& lead = *setup_.lead;
    for (std::size_t i = 0; i < n_; ++i) {
      const AccParams& p = setup_.params[i];
      const double s = y[2 * i];
      const double v = y[2 * i + 1];
      const double v_lead = (i == 0) ? lead.At(t) : y[2 * i - 1];
      double s_delayed = s;
      double v_lead_delayed = v_lead;
      if (p.tau > 0.0) {
        const double td = t - p.tau;
        s_delayed = Past(2 * i, td);
        v_lead_delayed = (i == 0) ? lead.At(td) : Past(2 * i - 1, td);
      }
      dy[2 * i] = v_lead - v;
      dy[2 * i + 1] = Acceleration(s_delayed, v, v_lead_delayed, p);
    }
  }

  void PushNode(double t, const std::vector<double>& y) {
    std::vector<double> f(dim_);
    Rhs(t, y, f);
    times_.push_back(t);
    ys_.insert(ys_.end(), y.begin(), y.end());
    fs_.insert(fs_.end(), f.begin(), f.end());
  }

  void Advance(double t_next, std::vector<double>& y) {
    const std::size_t last = NodeCount() - 1;
    const double t = times_[last];
    const double h = t_next - t;
    for (std::size_t c = 0; c < dim_; ++c) k_[0][c] = NodeF(last, c);
    for (std::size_t c = 0; c < dim_; ++c) stage_[c] = y[c] + 0.5 * h * k_[0][c];
    Rhs(t + 0.5 * h, stage_, k_[1]);
    for (std::size_t c = 0; c < dim_; ++c) stage_[c] = y[c] + 0.5 * h * k_[1][c];
    Rhs(t + 0.5 * h, stage_, k_[2]);
    for (std::size_t c = 0; c < dim_; ++c) stage_[c] = y[c] + h * k_[2][c];
    Rhs(t_next, stage_, k_[3]);
    for (std::size_t c = 0; c < dim_; ++c) {
      y[c] += h / 6.0 * (k_[0][c] + 2.0 * k_[1][c] + 2.0 * k_[2][c] + k_[3][c]);
      if (!std::isfinite(y[c])) {
        throw NonFiniteState("state became non-finite at t=" + std::to_string(t_next));
      }
    }
    for (std::size_t i = 0; i < n_; ++i) {
      y[2 * i + 1] = std::max(y[2 * i + 1], setup_.cfg.speed_floor);
    }
    PushNode(t_next, y);
  }

  /// Stores sample `k`; returns true when integration must halt.
  bool Record(std::size_t k, const std::vector<double>& y, ChainOutput& out) {
    const double t = setup_.t_start + setup_.cfg.dt * static_cast<double>(k);
    bool halt = false;
    for (std::size_t i = 0; i < n_; ++i) {
      const double s = y[2 * i];
      const double v = y[2 * i + 1];
      out.gap[i].push_back(s);
      out.speed[i].push_back(v);
      const int vehicle = static_cast<int>(i) + 1;
      if (!setup_.min_acc_speed.empty() && !disengaged_[i] &&
          v < setup_.min_acc_speed[i]) {
        disengaged_[i] = true;
        out.events.push_back({EventKind::kDisengage, vehicle, t, v});
      }
      if (setup_.halt_on_collision && s <= setup_.cfg.collision_gap) {
        out.events.push_back({EventKind::kCollision, vehicle, t, s});
        halt = true;
      }
    }
    return halt;
  }

  const ChainSetup& setup_;
  std::size_t n_;
  std::size_t dim_;
  std::vector<double> times_;
  std::vector<double> ys_;
  std::vector<double> fs_;
  std::vector<double> stage_;
  std::vector<double> k_[4];
  std::vector<bool> disengaged_;
};

}  // namespace detail

/// Simulates one follower behind a recorded leader.
///
/// `history` holds measured (gap, speed) samples at `cfg.dt` starting at
/// `lead.t0`; integration starts at the last history sample, which must lie
/// at least `params.tau` after `lead.t0`. The returned trajectory spans the
/// lead record and reproduces the history samples verbatim.
inline Trajectory SimulateFollower(const SampledSeries& lead, const AccParams& params,
                                   std::span<const State> history,
                                   const SimConfig& cfg) {
  params.Validate();
  cfg.Validate();
  if (lead.size() < 2) throw Error("lead record needs at least two samples");
  if (history.empty()) throw BadHistory("history is empty");
  const double window = cfg.dt * static_cast<double>(history.size() - 1);
  if (window + 1e-9 * cfg.dt < params.tau) {
    throw BadHistory("history spans " + std::to_string(window) +
                     " s but the delay is " + std::to_string(params.tau) + " s");
  }
  const std::size_t n = SampleCount(lead.t_end() - lead.t0, cfg.dt);
  if (history.size() > n) throw BadHistory("history is longer than the lead record");

  detail::ChainSetup setup;
  setup.lead = &lead;
  setup.params = {params};
  SampledSeries pre_gap{lead.t0, cfg.dt, {}};
  SampledSeries pre_speed{lead.t0, cfg.dt, {}};
  for (const State& st : history) {
    pre_gap.values.push_back(st.s);
    pre_speed.values.push_back(st.v);
  }
  setup.pre_gap = {pre_gap};
  setup.pre_speed = {pre_speed};
  setup.initial = {history.back()};
  setup.t_start = lead.t0 + window;
  setup.n_samples = n - (history.size() - 1);
  setup.cfg = cfg;

  const detail::ChainOutput sim = detail::ChainIntegrator(setup).Run();

  Trajectory out;
  out.t0 = lead.t0;
  out.dt = cfg.dt;
  for (std::size_t k = 0; k < n; ++k) out.lead_speed.push_back(lead.At(out.time(k)));
  for (std::size_t k = 0; k + 1 < history.size(); ++k) {
    out.space_gap.push_back(history[k].s);
    out.follower_speed.push_back(history[k].v);
  }
  out.space_gap.insert(out.space_gap.end(), sim.gap[0].begin(), sim.gap[0].end());
  out.follower_speed.insert(out.follower_speed.end(), sim.speed[0].begin(),
                            sim.speed[0].end());
  return out;
}

/// Simulates followers `fleet[0..]` behind a lead vehicle driving `lead`.
/// Every follower starts in equilibrium at `init_speed` with a constant
/// history. Disengagement is recorded and the dynamics continue; a collision
/// (gap <= cfg.collision_gap) is recorded and ends the run.
inline SimResult SimulatePlatoon(const SampledSeries& lead,
                                 std::span<const VehicleSpec> fleet, double init_speed,
                                 const SimConfig& cfg) {
  cfg.Validate();
  if (fleet.empty()) throw Error("platoon needs at least one follower");
  if (lead.size() < 1) throw Error("lead profile is empty");
  if (!(init_speed >= 0.0)) throw Error("initial speed must be >= 0");

  const double span = cfg.duration > 0.0 ? cfg.duration : lead.t_end() - lead.t0;
  const std::size_t n = SampleCount(span, cfg.dt);
  if (n < 2) throw Error("platoon horizon shorter than one step");

  detail::ChainSetup setup;
  setup.lead = &lead;
  for (const VehicleSpec& spec : fleet) {
    spec.params.Validate();
    if (!(spec.min_acc_speed >= 0.0)) throw Error("min ACC speed must be >= 0");
    const double gap = EquilibriumGap(init_speed, spec.params);
    setup.params.push_back(spec.params);
    setup.pre_gap.push_back({lead.t0, cfg.dt, {gap}});
    setup.pre_speed.push_back({lead.t0, cfg.dt, {init_speed}});
    setup.initial.push_back({gap, init_speed});
    setup.min_acc_speed.push_back(spec.min_acc_speed);
  }
  setup.t_start = lead.t0;
  setup.n_samples = n;
  setup.cfg = cfg;
  setup.halt_on_collision = true;

  detail::ChainOutput sim = detail::ChainIntegrator(setup).Run();

  SimResult out;
  out.t0 = lead.t0;
  out.dt = cfg.dt;
  const std::size_t kept = sim.speed[0].size();
  std::vector<double> lead_speed;
  for (std::size_t k = 0; k < kept; ++k) lead_speed.push_back(lead.At(out.time(k)));
  out.speed.push_back(std::move(lead_speed));
  for (std::size_t i = 0; i < fleet.size(); ++i) {
    out.speed.push_back(std::move(sim.speed[i]));
    out.gap.push_back(std::move(sim.gap[i]));
  }
  out.events = std::move(sim.events);
  return out;
}

struct VehicleMetrics {
  double amplitude;  // baseline speed minus minimum speed, m/s
  double min_gap;    // m; +inf for the lead vehicle
  double min_speed;  // m/s
};

/// Per-vehicle disturbance metrics, lead vehicle first.
inline std::vector<VehicleMetrics> AmplificationMetrics(const SimResult& result,
                                                        double baseline_speed) {
  if (result.num_vehicles() == 0) throw Error("result has no vehicles");
  std::vector<VehicleMetrics> out;
  for (std::size_t i = 0; i < result.num_vehicles(); ++i) {
    const auto& v = result.speed[i];
    const double vmin = v.empty() ? baseline_speed : *std::min_element(v.begin(), v.end());
    double gmin = std::numeric_limits<double>::infinity();
    if (i > 0 && !result.gap[i - 1].empty()) {
      gmin = *std::min_element(result.gap[i - 1].begin(), result.gap[i - 1].end());
    }
    out.push_back({baseline_speed - vmin, gmin, vmin});
  }
  return out;
}

/// True when amplitudes never decrease from one follower to the next.
inline bool IsAmplifying(std::span<const VehicleMetrics> metrics) {
  for (std::size_t i = 2; i < metrics.size(); ++i) {
    if (metrics[i].amplitude < metrics[i - 1].amplitude) return false;
  }
  return metrics.size() >= 2;
}

}  // namespace accsim
