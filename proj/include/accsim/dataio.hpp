#pragma once

// Trajectory CSV ingest, scripted lead-vehicle speed profiles and CSV
// export of simulation results and stability maps.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "accsim/error.hpp"
#include "accsim/presets.hpp"
#include "accsim/series.hpp"
#include "accsim/sim.hpp"
#include "accsim/stability.hpp"

namespace accsim {

inline constexpr double MphToMps(double mph) { return mph * kMphToMps; }
inline constexpr double MpsToMph(double mps) { return mps / kMphToMps; }

enum class SpeedUnit { kMps, kMph };

// ---------------------------------------------------------------------------
// CSV helpers

namespace detail {

inline std::string_view Trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

inline std::vector<std::string_view> SplitCsv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(Trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

/// Parses a cell; empty cells and "nan" read as missing.
inline std::optional<double> ParseCell(std::string_view cell, std::size_t line_no) {
  if (cell.empty() || cell == "nan" || cell == "NaN" || cell == "NA") return std::nullopt;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) {
    throw Error("line " + std::to_string(line_no) + ": cannot parse '" + std::string(cell) +
                "' as a number");
  }
  if (!std::isfinite(value)) return std::nullopt;
  return value;
}

inline std::string FormatDouble(double x) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

inline std::ofstream OpenForWrite(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

inline void CheckWritten(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Trajectory ingest

/// Column names of a trajectory file. The unit of the speed columns comes
/// from a `# units=mph|mps` comment line unless `units` overrides it.
struct ColumnMap {
  std::string time = "time_s";
  std::string lead_speed = "lead_speed";
  std::string follower_speed = "follower_speed";
  std::string space_gap = "space_gap_m";
  std::optional<SpeedUnit> units;
};

struct RawChannel {
  std::vector<double> t;
  std::vector<double> y;
};

inline Trajectory ParseTrajectory(std::istream& in, const ColumnMap& columns,
                                  double target_dt) {
  if (!(target_dt > 0.0)) throw Error("target dt must be > 0");
  SpeedUnit units = SpeedUnit::kMps;
  std::vector<std::string> header;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::vector<std::optional<double>>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = detail::Trim(line);
    if (view.empty()) continue;
    if (view.front() == '#') {
      const std::size_t at = view.find("units=");
      if (at != std::string_view::npos) {
        std::string_view u = view.substr(at + 6);
        u = u.substr(0, u.find_first_of(" \t,;"));
        if (u == "mph") {
          units = SpeedUnit::kMph;
        } else if (u == "mps" || u == "m/s") {
          units = SpeedUnit::kMps;
        } else {
          throw Error("unknown speed unit '" + std::string(u) + "'");
        }
      }
      continue;
    }
    const auto cells = detail::SplitCsv(view);
    if (header.empty()) {
      for (auto c : cells) header.emplace_back(c);
      continue;
    }
    std::vector<std::optional<double>> row;
    for (auto c : cells) row.push_back(detail::ParseCell(c, line_no));
    row.resize(header.size());
    rows.push_back(std::move(row));
  }
  if (columns.units) units = *columns.units;

  auto column_index = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw MissingColumn("missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t ti = column_index(columns.time);
  const std::size_t idx[3] = {column_index(columns.lead_speed),
                              column_index(columns.follower_speed),
                              column_index(columns.space_gap)};

  RawChannel ch[3];
  double prev_t = -std::numeric_limits<double>::infinity();
  for (const auto& row : rows) {
    if (!row[ti]) continue;
    const double t = *row[ti];
    if (!(t > prev_t)) {
      throw NonMonotoneTime("time column is not strictly increasing at t=" +
                            detail::FormatDouble(t));
    }
    prev_t = t;
    for (int c = 0; c < 3; ++c) {
      if (row[idx[c]]) {
        double y = *row[idx[c]];
        if (c < 2 && units == SpeedUnit::kMph) y = MphToMps(y);
        ch[c].t.push_back(t);
        ch[c].y.push_back(y);
      }
    }
  }
  double start = -std::numeric_limits<double>::infinity();
  double end = std::numeric_limits<double>::infinity();
  for (const auto& c : ch) {
    if (c.t.empty()) throw EmptyOverlap("a channel has no samples");
    start = std::max(start, c.t.front());
    end = std::min(end, c.t.back());
  }
  if (!(end - start >= target_dt * (1.0 - 1e-9))) {
    throw EmptyOverlap("channels share less than one time step");
  }

  Trajectory out;
  out.t0 = start;
  out.dt = target_dt;
  const std::size_t n = SampleCount(end - start, target_dt);
  std::vector<double>* dst[3] = {&out.lead_speed, &out.follower_speed, &out.space_gap};
  for (int c = 0; c < 3; ++c) {
    dst[c]->reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
      dst[c]->push_back(InterpolateLinear(ch[c].t, ch[c].y, out.time(k)));
    }
  }
  return out;
}

/// Loads a trajectory CSV and resamples every channel onto a uniform grid
/// of spacing `target_dt` over the window all channels cover.
inline Trajectory LoadTrajectory(const std::string& path, const ColumnMap& columns,
                                 double target_dt) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return ParseTrajectory(in, columns, target_dt);
}

inline void SaveTrajectory(const Trajectory& traj, const std::string& path) {
  auto out = detail::OpenForWrite(path);
  out << "# units=mps\n";
  out << "time_s,lead_speed,follower_speed,space_gap_m\n";
  for (std::size_t k = 0; k < traj.size(); ++k) {
    out << detail::FormatDouble(traj.time(k)) << ',' << detail::FormatDouble(traj.lead_speed[k])
        << ',' << detail::FormatDouble(traj.follower_speed[k]) << ','
        << detail::FormatDouble(traj.space_gap[k]) << '\n';
  }
  detail::CheckWritten(out, path);
}

// ---------------------------------------------------------------------------
// Scripted lead profiles

enum class ScenarioKind {
  kOscillatory,
  kLowSpeedSteps,
  kHighSpeedSteps,
  kSpeedDips,
  kPlatoonDip,  // single dip from a cruise speed, as in the platoon test
};

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::kOscillatory;
  double ramp_rate = 1.0;    // m/s^2 between set points
  double hold_jitter = 0.0;  // s; each hold is extended by U[0, jitter]
  double dt = 0.1;           // s
  std::uint64_t seed = 0;    // jitter stream

  int oscillation_cycles = 4;  // high/low pairs in each half of kOscillatory

  // kPlatoonDip only.
  double base_speed = 22.4;
  double dip_depth = 2.7;
  double lead_in = 30.0;
  double dip_hold = 30.0;
  double recovery = 120.0;

  void Validate() const {
    if (!(ramp_rate > 0.0)) throw Error("ramp_rate must be > 0");
    if (!(dt > 0.0)) throw Error("scenario dt must be > 0");
    if (!(hold_jitter >= 0.0)) throw Error("hold_jitter must be >= 0");
    if (oscillation_cycles < 1) throw Error("oscillation_cycles must be >= 1");
    if (kind == ScenarioKind::kPlatoonDip &&
        !(dip_depth >= 0.0 && dip_depth <= base_speed)) {
      throw Error("dip depth must lie in [0, base_speed]");
    }
  }
};

struct SetPoint {
  double speed;  // m/s
  double hold;   // s
};

/// Set-point schedule of a scenario before jitter.
inline std::vector<SetPoint> Schedule(const ScenarioSpec& spec) {
  std::vector<SetPoint> out;
  switch (spec.kind) {
    case ScenarioKind::kOscillatory:
      for (int i = 0; i < spec.oscillation_cycles; ++i) {
        out.push_back({24.5, 30.0});
        out.push_back({21.9, 30.0});
      }
      for (int i = 0; i < spec.oscillation_cycles; ++i) {
        out.push_back({24.5, 30.0});
        out.push_back({20.1, 30.0});
      }
      out.push_back({24.5, 30.0});
      break;
    case ScenarioKind::kLowSpeedSteps:
      for (double v : {15.6, 17.9, 20.1, 22.4, 24.6, 24.6, 22.4, 20.1, 17.9, 15.6}) {
        out.push_back({v, 60.0});
      }
      break;
    case ScenarioKind::kHighSpeedSteps:
      for (double v : {29.1, 31.3, 33.5, 33.5, 31.3, 29.1}) out.push_back({v, 60.0});
      break;
    case ScenarioKind::kSpeedDips:
      out.push_back({24.6, 45.0});
      for (double d : {2.7, 2.7, 4.5, 4.5, 6.7, 6.7, 8.9, 8.9}) {
        out.push_back({24.6 - d, 5.0});
        out.push_back({24.6, 45.0});
      }
      break;
    case ScenarioKind::kPlatoonDip:
      out.push_back({spec.base_speed, spec.lead_in});
      out.push_back({spec.base_speed - spec.dip_depth, spec.dip_hold});
      out.push_back({spec.base_speed, spec.recovery});
      break;
  }
  return out;
}

/// Lead speed sampled at spec.dt: holds joined by ramps at spec.ramp_rate.
inline SampledSeries GenerateLeadProfile(const ScenarioSpec& spec) {
  spec.Validate();
  std::vector<SetPoint> plan = Schedule(spec);
  if (spec.hold_jitter > 0.0) {
    std::mt19937_64 rng(spec.seed);
    for (SetPoint& sp : plan) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      sp.hold += u * spec.hold_jitter;
    }
  }
  // Knots of the piecewise-linear speed profile.
  std::vector<double> kt = {0.0};
  std::vector<double> kv = {plan.front().speed};
  double t = 0.0;
  double v = plan.front().speed;
  for (const SetPoint& sp : plan) {
    if (sp.speed != v) {
      t += std::abs(sp.speed - v) / spec.ramp_rate;
      kt.push_back(t);
      kv.push_back(sp.speed);
      v = sp.speed;
    }
    t += sp.hold;
    kt.push_back(t);
    kv.push_back(v);
  }
  SampledSeries out{0.0, spec.dt, {}};
  const std::size_t n = SampleCount(t, spec.dt);
  out.values.reserve(n);
  for (std::size_t k = 0; k < n; ++k) out.values.push_back(InterpolateLinear(kt, kv, out.time(k)));
  return out;
}

// ---------------------------------------------------------------------------
// Exports

/// Writes `time_s,speed_0..speed_N,gap_1..gap_N`.
inline void ExportSim(const SimResult& result, const std::string& path) {
  auto out = detail::OpenForWrite(path);
  out << "time_s";
  for (std::size_t i = 0; i < result.num_vehicles(); ++i) out << ",speed_" << i;
  for (std::size_t i = 1; i < result.num_vehicles(); ++i) out << ",gap_" << i;
  out << '\n';
  for (std::size_t k = 0; k < result.num_samples(); ++k) {
    out << detail::FormatDouble(result.time(k));
    for (const auto& v : result.speed) out << ',' << detail::FormatDouble(v[k]);
    for (const auto& g : result.gap) out << ',' << detail::FormatDouble(g[k]);
    out << '\n';
  }
  detail::CheckWritten(out, path);
}

/// Writes `kind,vehicle,time_s,value`, one row per event in time order.
inline void ExportEvents(const SimResult& result, const std::string& path) {
  auto out = detail::OpenForWrite(path);
  out << "kind,vehicle,time_s,value\n";
  for (const Event& e : result.events) {
    out << ToString(e.kind) << ',' << e.vehicle << ',' << detail::FormatDouble(e.time) << ','
        << detail::FormatDouble(e.value) << '\n';
  }
  detail::CheckWritten(out, path);
}

/// Writes `k1,k2,verdict`, k1-major.
inline void ExportMap(const StabilityMap& map, const std::string& path) {
  auto out = detail::OpenForWrite(path);
  out << "k1,k2,verdict\n";
  for (std::size_t i = 0; i < map.k1_grid.size(); ++i) {
    for (std::size_t j = 0; j < map.k2_grid.size(); ++j) {
      out << detail::FormatDouble(map.k1_grid[i]) << ',' << detail::FormatDouble(map.k2_grid[j])
          << ',' << ToString(map.at(i, j)) << '\n';
    }
  }
  detail::CheckWritten(out, path);
}

}  // namespace accsim
