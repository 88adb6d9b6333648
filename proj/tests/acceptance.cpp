// Acceptance suite: one PASS/FAIL/SKIP line per criterion. Exits nonzero if
// any gating criterion fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "accsim/calib.hpp"
#include "accsim/dataio.hpp"
#include "accsim/presets.hpp"
#include "accsim/sim.hpp"
#include "accsim/stability.hpp"
#include "oracles.hpp"

using namespace accsim;

namespace {

struct Outcome {
  enum class Status { kPass, kFail, kSkip } status;
  std::string detail;
};

Outcome Pass(std::string d) { return {Outcome::Status::kPass, std::move(d)}; }
Outcome Fail(std::string d) { return {Outcome::Status::kFail, std::move(d)}; }
Outcome Check(bool ok, std::string d) { return ok ? Pass(std::move(d)) : Fail(std::move(d)); }

std::string Fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int failures = 0;

void Criterion(int id, const char* name, double time_limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out = Fail(std::string("exception: ") + e.what());
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (out.status == Outcome::Status::kPass && secs > time_limit_s) {
    out = Fail(out.detail + Fmt("; runtime %.2f s exceeds %.0f s", secs, time_limit_s));
  }
  const char* tag = out.status == Outcome::Status::kPass   ? "PASS"
                    : out.status == Outcome::Status::kSkip ? "SKIP"
                                                           : "FAIL";
  if (out.status == Outcome::Status::kFail) ++failures;
  std::printf("[%s] %d. %s: %s (%.2f s)\n", tag, id, name, out.detail.c_str(), secs);
  std::fflush(stdout);
}

Outcome PresetReplay() {
  double min_peak = 1e9;
  std::string bad;
  for (const Preset& p : kPresets) {
    const StringStabilityResult r = StringStability(p.params);
    min_peak = std::min(min_peak, r.peak_gain);
    if (r.stable || !(r.peak_gain > 1.0 + 1e-6)) bad += std::string(p.label) + " ";
  }
  return Check(bad.empty(), bad.empty() ? Fmt("14/14 string unstable, smallest peak gain %.4f", min_peak)
                                        : "classified stable: " + bad);
}

Outcome WorkedPoint() {
  const StringStabilityResult r = StringStability({0.2, 0.2, 1.5, 0.1, 10.0});
  return Check(!r.stable, Fmt("peak gain %.4f at %.4f rad/s", r.peak_gain, r.peak_omega));
}

Outcome DelayFreeBoundary() {
  const int n = 100;
  const Interval range{0.01, 1.0};
  const double th = 1.5;
  const StabilityMap map = ComputeStabilityMap(range, range, n, th, 0.0, 10.0);
  const double spacing = range.width() / (n - 1);
  // Change of the margin across one grid cell.
  const double band = th * th * spacing + 2.0 * th * spacing;
  int mismatches = 0;
  int excluded = 0;
  for (std::size_t i = 0; i < map.k1_grid.size(); ++i) {
    for (std::size_t j = 0; j < map.k2_grid.size(); ++j) {
      const double margin = map.k1_grid[i] * th * th + 2.0 * th * map.k2_grid[j] - 2.0;
      if (std::abs(margin) < band) {
        ++excluded;
        continue;
      }
      if ((map.at(i, j) == Verdict::kStringStable) != (margin > 0.0)) ++mismatches;
    }
  }
  return Check(mismatches == 0, Fmt("%d mismatches over %d cells (%d within one cell of the curve)",
                                    mismatches, n * n - excluded, excluded));
}

Outcome CalibrationRecovery() {
  const SampledSeries lead = oracle::OscillatoryProfile();
  const ParamBounds bounds;
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  double worst_rel = 0.0;
  double worst_obj = 0.0;
  bool deterministic = true;
  for (int i = 0; i < 5; ++i) {
    ParamVector x;
    for (std::size_t d = 0; d < kNumParams; ++d) x[d] = bounds[d].lower + u(rng) * bounds[d].width();
    const AccParams truth = FromArray(x);
    const Trajectory train = oracle::SyntheticRecord(truth, lead);
    CalibrationConfig cfg;
    cfg.rng_seed = 7 + static_cast<std::uint64_t>(i);
    const CalibrationResult r = Calibrate(train, cfg);
    const ParamVector got = ToArray(r.params);
    for (std::size_t d = 0; d < kNumParams; ++d) {
      worst_rel = std::max(worst_rel, std::abs(got[d] - x[d]) / std::abs(x[d]));
    }
    worst_obj = std::max(worst_obj, r.train_mse_speed);
    if (i == 0) {
      const CalibrationResult again = Calibrate(train, cfg);
      deterministic = again.params == r.params && again.train_mse_speed == r.train_mse_speed &&
                      again.evals_used == r.evals_used;
    }
  }
  return Check(worst_rel < 0.02 && worst_obj < 1e-6 && deterministic,
               Fmt("worst relative error %.2e, worst objective %.2e, repeat run %s", worst_rel,
                   worst_obj, deterministic ? "identical" : "DIFFERS"));
}

Outcome PlatoonAmplification() {
  const SampledSeries lead = oracle::DipProfile(2.7);
  const std::vector<VehicleSpec> fleet(7, *FindPreset("A/min"));
  const SimResult r = SimulatePlatoon(lead, fleet, 22.4, SimConfig{});
  const auto m = AmplificationMetrics(r, 22.4);
  bool increasing = true;
  for (std::size_t i = 2; i < m.size(); ++i) increasing = increasing && m[i].amplitude > m[i - 1].amplitude;
  const double ratio = m[7].amplitude / m[1].amplitude;
  return Check(increasing && ratio > 2.0,
               Fmt("amplitudes %s, a1 = %.3f, a7 = %.3f, a7/a1 = %.3f",
                   increasing ? "strictly increasing" : "NOT increasing", m[1].amplitude,
                   m[7].amplitude, ratio));
}

Outcome IntegratorConvergence() {
  const SampledSeries lead = oracle::DipProfile(2.7);
  const std::vector<VehicleSpec> fleet(7, *FindPreset("A/min"));
  const double ratio = oracle::ConvergenceRatio(lead, fleet, 22.4, 0.2);

  const std::vector<AccParams> params = {{0.2, 0.0, 1.5, 0.0, 10.0},
                                         {0.2, 0.2, 1.5, 0.0, 10.0},
                                         {0.5, 0.2, 2.0, 0.0, 10.0}};
  std::vector<VehicleSpec> free_fleet;
  for (const AccParams& p : params) free_fleet.push_back({"x", p, 0.0});
  const SimResult r = SimulatePlatoon(lead, free_fleet, 22.4, SimConfig{});
  const auto ref = oracle::DelayFreePlatoon(lead, params, 22.4, 0.1, r.num_samples(), 1e-3);
  double dev = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t k = 0; k < r.num_samples(); ++k) {
      dev = std::max(dev, std::abs(r.speed[i + 1][k] - ref[i][k]));
    }
  }
  return Check(ratio >= 8.0 && dev < 1e-6,
               Fmt("dt/(dt/2) error ratio %.2f, delay-free deviation %.2e m/s", ratio, dev));
}

Outcome StabilitySimulationConsistency() {
  const SampledSeries lead = oracle::DipProfile(2.7);
  SimConfig cfg;
  cfg.collision_gap = -std::numeric_limits<double>::infinity();  // measure, do not halt
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int stable_seen = 0, unstable_seen = 0, wrong = 0, draws = 0;
  std::string examples;
  while ((stable_seen < 20 || unstable_seen < 20) && draws < 200000) {
    ++draws;
    const AccParams p{0.01 + 0.99 * u(rng), u(rng), 0.1 + 2.9 * u(rng), u(rng), 5.0 + 10.0 * u(rng)};
    const StringStabilityResult s = StringStability(p);
    // Margin filter: keep clear-cut cases away from the boundary.
    AccParams slower = p;
    slower.tau += 0.2;
    bool use_stable = s.stable && LowFrequencyMargin(p) > 0.5 && stable_seen < 20 &&
                      StringStability(slower).stable;
    bool use_unstable = !s.stable && s.peak_gain > 1.05 && unstable_seen < 20;
    if (!use_stable && !use_unstable) continue;
    if (!PlantStability(p).stable) continue;
    const std::vector<VehicleSpec> fleet(10, VehicleSpec{"x", p, 0.0});
    const SimResult r = SimulatePlatoon(lead, fleet, 22.4, cfg);
    const auto m = AmplificationMetrics(r, 22.4);
    const bool attenuates = m[10].amplitude < m[1].amplitude;
    const bool amplifies = m[10].amplitude > m[1].amplitude;
    if (use_stable) {
      ++stable_seen;
      if (!attenuates) ++wrong;
    } else {
      ++unstable_seen;
      if (!amplifies) ++wrong;
    }
    if ((use_stable && !attenuates) || (use_unstable && !amplifies)) {
      examples += Fmt(" [%s k1=%.3f k2=%.3f th=%.3f tau=%.3f a1=%.3f a10=%.3f]",
                      use_stable ? "stable" : "unstable", p.k1, p.k2, p.th, p.tau,
                      m[1].amplitude, m[10].amplitude);
    }
  }
  return Check(stable_seen == 20 && unstable_seen == 20 && wrong == 0,
               Fmt("%d stable + %d unstable draws, %d misclassified", stable_seen, unstable_seen,
                   wrong) + examples);
}

Outcome DatasetReplay() {
  const char* path = std::getenv("ACCSIM_DATASET");
  if (path == nullptr || *path == '\0') {
    return {Outcome::Status::kSkip, "set ACCSIM_DATASET to an oscillatory A/min trajectory CSV"};
  }
  const Trajectory record = LoadTrajectory(path, ColumnMap{}, 0.1);
  CalibrationConfig cfg;
  const Trajectory train = TrainingSplit(record, cfg.train_fraction);
  const CalibrationResult r = Calibrate(train, cfg);
  const auto errs = EvaluateTestErrors(r.params, {{"oscillatory", record}});
  if (!errs[0].ok) return Fail(errs[0].error);
  const double e = errs[0].speed_rmse;
  return Check(e >= 0.201 / 2.0 && e <= 0.201 * 2.0,
               Fmt("speed RMSE %.3f m/s against 0.201 m/s", e));
}

}  // namespace

int main() {
  Criterion(1, "Preset string stability replay", 5.0, PresetReplay);
  Criterion(2, "Worked point (0.2, 0.2, 1.5, 0.1, 10)", 1.0, WorkedPoint);
  Criterion(3, "Delay-free analytic boundary, 100x100 map", 30.0, DelayFreeBoundary);
  Criterion(4, "Calibration recovery, 5 random parameter sets", 300.0, CalibrationRecovery);
  Criterion(5, "A/min platoon amplification", 5.0, PlatoonAmplification);
  Criterion(6, "Integrator self-convergence and delay-free oracle", 10.0, IntegratorConvergence);
  Criterion(7, "Stability vs simulation consistency", 120.0, StabilitySimulationConsistency);
  Criterion(8, "Public dataset error (optional)", 600.0, DatasetReplay);
  std::printf("%s\n", failures == 0 ? "ALL GATING CRITERIA PASSED"
                                    : Fmt("%d CRITERIA FAILED", failures).c_str());
  return failures == 0 ? 0 : 1;
}
