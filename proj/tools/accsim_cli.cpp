// accsim: command-line front end for simulation, calibration and stability
// analysis of delayed ACC car-following models.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "accsim/calib.hpp"
#include "accsim/dataio.hpp"
#include "accsim/presets.hpp"
#include "accsim/report.hpp"
#include "accsim/sim.hpp"
#include "accsim/stability.hpp"

namespace fs = std::filesystem;
using namespace accsim;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GlobalOptions {
  std::string out = ".";
  std::uint64_t seed = 1;
};

/// Explicit parameters given with --k1 ... --eta.
struct CustomParams {
  std::optional<double> k1, k2, th, tau, eta;
  double min_acc_speed = 0.0;

  void Register(CLI::App* app) {
    app->add_option("--k1", k1, "Gain on spacing error [1/s^2]");
    app->add_option("--k2", k2, "Gain on relative speed [1/s]");
    app->add_option("--th", th, "Time gap [s]");
    app->add_option("--tau", tau, "Sensor delay [s]");
    app->add_option("--eta", eta, "Jam gap [m]");
    app->add_option("--min-acc-speed", min_acc_speed,
                    "Minimum ACC speed of the custom vehicle [m/s]")
        ->capture_default_str();
  }

  bool given() const { return k1 || k2 || th || tau || eta; }

  VehicleSpec Resolve() const {
    const char* names[] = {"k1", "k2", "th", "tau", "eta"};
    const std::optional<double>* vals[] = {&k1, &k2, &th, &tau, &eta};
    for (int i = 0; i < 5; ++i) {
      if (!*vals[i]) throw UsageError(std::string("missing --") + names[i] + " for custom parameters");
    }
    const AccParams p{*k1, *k2, *th, *tau, *eta};
    auto check = [](bool ok, const char* key, const char* rule) {
      if (!ok) throw UsageError(std::string("--") + key + " violates " + rule);
    };
    check(std::isfinite(p.k1) && p.k1 > 0.0, "k1", "k1 > 0");
    check(std::isfinite(p.k2) && p.k2 >= 0.0, "k2", "k2 >= 0");
    check(std::isfinite(p.th) && p.th > 0.0, "th", "th > 0");
    check(std::isfinite(p.tau) && p.tau >= 0.0, "tau", "tau >= 0");
    check(std::isfinite(p.eta) && p.eta >= 0.0, "eta", "eta >= 0");
    check(min_acc_speed >= 0.0, "min-acc-speed", "min-acc-speed >= 0");
    return {"custom", p, min_acc_speed};
  }
};

VehicleSpec ResolveVehicle(const std::string& label, const CustomParams& custom) {
  if (label == "custom") return custom.Resolve();
  if (auto spec = FindPreset(label)) return *spec;
  throw UsageError("unknown preset '" + label + "'");
}

/// Parses "A/min×7,B/max*2,custom" into a follower list.
std::vector<VehicleSpec> ParseFleet(const std::string& text, const CustomParams& custom) {
  std::vector<VehicleSpec> fleet;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    std::string token = text.substr(start, comma == std::string::npos ? std::string::npos
                                                                       : comma - start);
    token.erase(0, token.find_first_not_of(' '));
    token.erase(token.find_last_not_of(' ') + 1);
    std::string label = token;
    int count = 1;
    std::size_t sep = std::string::npos;
    std::size_t sep_len = 0;
    if (auto p = token.rfind("\xC3\x97"); p != std::string::npos) {
      sep = p;
      sep_len = 2;
    } else if (auto q = token.rfind('*'); q != std::string::npos) {
      sep = q;
      sep_len = 1;
    } else if (auto x = token.rfind('x');
               x != std::string::npos && x + 1 < token.size() &&
               token.find_first_not_of("0123456789", x + 1) == std::string::npos) {
      sep = x;
      sep_len = 1;
    }
    if (sep != std::string::npos) {
      label = token.substr(0, sep);
      const std::string n = token.substr(sep + sep_len);
      try {
        std::size_t used = 0;
        count = std::stoi(n, &used);
        if (used != n.size()) throw std::invalid_argument(n);
      } catch (const std::exception&) {
        throw UsageError("fleet: bad vehicle count in '" + token + "'");
      }
      if (count < 1) throw UsageError("fleet: vehicle count must be >= 1 in '" + token + "'");
    }
    label.erase(label.find_last_not_of(' ') + 1);
    if (label.empty()) throw UsageError("fleet: empty entry in '" + text + "'");
    const VehicleSpec spec = ResolveVehicle(label, custom);
    fleet.insert(fleet.end(), static_cast<std::size_t>(count), spec);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return fleet;
}

/// Lead-profile options shared by simulate and amplify.
struct ScenarioOptions {
  std::string scenario = "dip:2.7";
  double ramp_rate = 1.0;
  double hold_jitter = 0.0;
  double base_speed = 22.4;
  double dip_hold = 30.0;
  int cycles = 4;

  void Register(CLI::App* app) {
    app->add_option("--scenario", scenario,
                    "Lead profile: dip:<depth>, oscillatory, low-steps, high-steps, "
                    "speed-dips or file:<trajectory.csv>")
        ->capture_default_str();
    app->add_option("--ramp-rate", ramp_rate, "Lead acceleration between set points [m/s^2]")
        ->capture_default_str();
    app->add_option("--hold-jitter", hold_jitter, "Random extension of each hold [s]")
        ->capture_default_str();
    app->add_option("--base-speed", base_speed, "Cruise speed of dip scenarios [m/s]")
        ->capture_default_str();
    app->add_option("--dip-hold", dip_hold, "Time the lead holds the dip speed [s]")
        ->capture_default_str();
    app->add_option("--cycles", cycles, "High/low cycles per half of the oscillatory profile")
        ->capture_default_str();
  }

  SampledSeries Build(double dt, std::uint64_t seed) const {
    if (scenario.rfind("file:", 0) == 0) {
      const Trajectory t = LoadTrajectory(scenario.substr(5), ColumnMap{}, dt);
      return {0.0, dt, t.lead_speed};
    }
    ScenarioSpec spec;
    spec.ramp_rate = ramp_rate;
    spec.hold_jitter = hold_jitter;
    spec.dt = dt;
    spec.seed = seed;
    spec.oscillation_cycles = cycles;
    spec.base_speed = base_speed;
    spec.dip_hold = dip_hold;
    if (scenario.rfind("dip:", 0) == 0) {
      spec.kind = ScenarioKind::kPlatoonDip;
      try {
        spec.dip_depth = std::stod(scenario.substr(4));
      } catch (const std::exception&) {
        throw UsageError("scenario: bad dip depth in '" + scenario + "'");
      }
    } else if (scenario == "oscillatory") {
      spec.kind = ScenarioKind::kOscillatory;
    } else if (scenario == "low-steps") {
      spec.kind = ScenarioKind::kLowSpeedSteps;
    } else if (scenario == "high-steps") {
      spec.kind = ScenarioKind::kHighSpeedSteps;
    } else if (scenario == "speed-dips") {
      spec.kind = ScenarioKind::kSpeedDips;
    } else {
      throw UsageError("scenario: unknown scenario '" + scenario + "'");
    }
    try {
      spec.Validate();
    } catch (const Error& e) {
      throw UsageError(std::string("scenario: ") + e.what());
    }
    return GenerateLeadProfile(spec);
  }
};

struct SimOptions {
  double dt = 0.1;
  double duration = 0.0;
  double speed_floor = 0.0;
  double collision_gap = 0.0;

  void Register(CLI::App* app) {
    app->add_option("--dt", dt, "Output sample spacing [s]")->capture_default_str();
    app->add_option("--duration", duration, "Horizon [s]; 0 uses the lead profile length")
        ->capture_default_str();
    app->add_option("--speed-floor", speed_floor, "Lowest follower speed [m/s]")
        ->capture_default_str();
    app->add_option("--collision-gap", collision_gap, "Gap that counts as a collision [m]")
        ->capture_default_str();
  }

  SimConfig Config() const {
    if (!(dt > 0.0)) throw UsageError("--dt must be > 0");
    if (!(duration >= 0.0)) throw UsageError("--duration must be >= 0");
    SimConfig cfg;
    cfg.dt = dt;
    cfg.duration = duration;
    cfg.speed_floor = speed_floor;
    cfg.collision_gap = collision_gap;
    return cfg;
  }
};

fs::path OutputDir(const GlobalOptions& g) {
  const fs::path dir(g.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + g.out + "'");
  return dir;
}

// ---------------------------------------------------------------------------

struct SimulateCmd {
  std::string fleet;
  std::optional<double> init;
  CustomParams custom;
  ScenarioOptions scenario;
  SimOptions sim;

  void Register(CLI::App* app) {
    app->add_option("--fleet", fleet, "Followers, e.g. A/min*7 or A/min*3,B/max*2,custom")
        ->required();
    app->add_option("--init", init, "Initial equilibrium speed [m/s]; default lead start");
    custom.Register(app);
    scenario.Register(app);
    sim.Register(app);
  }

  void Run(const GlobalOptions& g) const {
    const auto vehicles = ParseFleet(fleet, custom);
    const SimConfig cfg = sim.Config();
    const SampledSeries lead = scenario.Build(cfg.dt, g.seed);
    const double v0 = init.value_or(lead.values.front());
    const SimResult result = SimulatePlatoon(lead, vehicles, v0, cfg);
    const fs::path dir = OutputDir(g);
    ExportSim(result, (dir / "sim.csv").string());
    ExportEvents(result, (dir / "events.csv").string());
    WriteJson(AmplificationJson(result, v0), (dir / "amplification.json").string());

    Trajectory first;
    first.t0 = result.t0;
    first.dt = result.dt;
    first.lead_speed = result.speed[0];
    first.follower_speed = result.speed[1];
    first.space_gap = result.gap[0];
    SaveTrajectory(first, (dir / "trajectory.csv").string());
    std::cout << "simulated " << vehicles.size() << " followers, " << result.num_samples()
              << " samples, " << result.events.size() << " events -> " << dir.string() << '\n';
  }
};

struct CalibrateCmd {
  std::string train;
  std::vector<std::string> tests;
  std::string label = "vehicle";
  double dt = 0.1;
  double train_fraction = 0.5;
  int multistarts = 4;
  int max_evals = 3000;
  double sim_dt = 0.0;
  ParamBounds bounds;
  ColumnMap columns;
  std::string units;

  void Register(CLI::App* app) {
    app->add_option("--train", train, "Trajectory CSV used for training")->required();
    app->add_option("--test", tests, "Test scenario as name=path (repeatable)");
    app->add_option("--label", label, "Row label of the error table")->capture_default_str();
    app->add_option("--dt", dt, "Resampling step [s]")->capture_default_str();
    app->add_option("--train-fraction", train_fraction, "Leading share of --train to fit on")
        ->capture_default_str();
    app->add_option("--multistarts", multistarts, "Number of optimizer starts")
        ->capture_default_str();
    app->add_option("--max-evals", max_evals, "Objective evaluations per start")
        ->capture_default_str();
    app->add_option("--sim-dt", sim_dt, "Largest integration step [s]; 0 uses --dt")
        ->capture_default_str();
    Interval* boxes[] = {&bounds.k1, &bounds.k2, &bounds.th, &bounds.tau, &bounds.eta};
    for (std::size_t i = 0; i < kNumParams; ++i) {
      const std::string name = kParamNames[i];
      app->add_option("--" + name + "-min", boxes[i]->lower, "Lower bound of " + name)
          ->capture_default_str();
      app->add_option("--" + name + "-max", boxes[i]->upper, "Upper bound of " + name)
          ->capture_default_str();
    }
    app->add_option("--col-time", columns.time, "Time column")->capture_default_str();
    app->add_option("--col-lead", columns.lead_speed, "Lead speed column")->capture_default_str();
    app->add_option("--col-follower", columns.follower_speed, "Follower speed column")
        ->capture_default_str();
    app->add_option("--col-gap", columns.space_gap, "Space gap column")->capture_default_str();
    app->add_option("--units", units, "Override speed units (mph or mps)");
  }

  void Run(const GlobalOptions& g) const {
    for (std::size_t i = 0; i < kNumParams; ++i) {
      const Interval& b = bounds[i];
      const std::string name = kParamNames[i];
      if (!std::isfinite(b.lower) || b.lower < 0.0) {
        throw UsageError("--" + name + "-min must be finite and >= 0");
      }
      if (!std::isfinite(b.upper) || b.upper < b.lower) {
        throw UsageError("--" + name + "-max must be finite and >= --" + name + "-min");
      }
    }
    if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
      throw UsageError("--train-fraction must lie in (0, 1]");
    }
    if (multistarts < 1) throw UsageError("--multistarts must be >= 1");
    if (max_evals < 100) throw UsageError("--max-evals must be >= 100");
    if (!(dt > 0.0)) throw UsageError("--dt must be > 0");
    ColumnMap cols = columns;
    if (units == "mph") {
      cols.units = SpeedUnit::kMph;
    } else if (units == "mps") {
      cols.units = SpeedUnit::kMps;
    } else if (!units.empty()) {
      throw UsageError("--units must be mph or mps");
    }
    if (!fs::exists(train)) throw UsageError("--train file '" + train + "' does not exist");

    CalibrationConfig cfg;
    cfg.bounds = bounds;
    cfg.n_multistarts = multistarts;
    cfg.max_evals = max_evals;
    cfg.rng_seed = g.seed;
    cfg.sim_dt = sim_dt;
    cfg.train_fraction = train_fraction;

    const Trajectory record = LoadTrajectory(train, cols, dt);
    const Trajectory fit_on = TrainingSplit(record, train_fraction);
    CalibrationResult result = Calibrate(fit_on, cfg);

    std::vector<NamedTrajectory> scenarios;
    if (train_fraction < 1.0) {
      scenarios.push_back({"holdout", record.Slice(fit_on.size() - 1, record.size())});
    }
    for (const std::string& spec : tests) {
      const std::size_t eq = spec.find('=');
      if (eq == std::string::npos || eq == 0) {
        throw UsageError("--test expects name=path, got '" + spec + "'");
      }
      scenarios.push_back({spec.substr(0, eq), LoadTrajectory(spec.substr(eq + 1), cols, dt)});
    }
    result.test_errors = EvaluateTestErrors(result.params, scenarios, sim_dt);

    const fs::path dir = OutputDir(g);
    Json doc = ToJson(result);
    doc["label"] = label;
    doc["train_file"] = train;
    doc["train_fraction"] = train_fraction;
    WriteJson(doc, (dir / "calibration.json").string());
    ExportErrorTable(label, result, (dir / "errors.csv").string());
    std::printf("k1=%.6g k2=%.6g th=%.6g tau=%.6g eta=%.6g  train MSE=%.3e  converged=%s\n",
                result.params.k1, result.params.k2, result.params.th, result.params.tau,
                result.params.eta, result.train_mse_speed, result.converged ? "yes" : "no");
  }
};

struct StabilityCmd {
  std::string preset;
  CustomParams custom;
  int ring = 0;
  double omega_max = 0.0;
  int samples = 2000;
  double tol = 1e-6;

  void Register(CLI::App* app) {
    app->add_option("--preset", preset, "Preset label, or 'all' for every preset");
    custom.Register(app);
    app->add_option("--ring", ring, "Also analyze an N-vehicle ring road (N >= 2)");
    app->add_option("--omega-max", omega_max, "Sweep limit [rad/s]; 0 picks a default")
        ->capture_default_str();
    app->add_option("--samples", samples, "Frequency samples")->capture_default_str();
    app->add_option("--tol", tol, "Gain tolerance above 1")->capture_default_str();
  }

  Json Analyze1(const std::string& label, const AccParams& p) const {
    SweepOptions sweep{omega_max, samples, tol};
    Json doc = ToJson(accsim::Analyze(p, sweep));
    Json out{{"label", label}, {"params", ToJson(p)}};
    out.update(doc);
    if (ring >= 2) {
      const RingStabilityResult r = RingModeStability(p, ring);
      Json roots = Json::array();
      for (std::size_t k = 0; k < r.roots.size(); ++k) {
        roots.push_back({{"mode", k + 1}, {"re", r.roots[k].real()}, {"im", r.roots[k].imag()}});
      }
      out["ring"] = {{"vehicles", ring}, {"stable", r.stable}, {"modes", roots}};
    }
    return out;
  }

  void Run(const GlobalOptions& g) const {
    if (samples < 100) throw UsageError("--samples must be >= 100");
    if (ring == 1 || ring < 0) throw UsageError("--ring must be >= 2");
    if (!preset.empty() && custom.given()) {
      throw UsageError("--preset and explicit parameters are mutually exclusive");
    }
    Json doc;
    if (preset == "all") {
      doc = Json::array();
      for (const Preset& p : kPresets) doc.push_back(Analyze1(std::string(p.label), p.params));
    } else if (!preset.empty()) {
      doc = Analyze1(preset, ResolveVehicle(preset, custom).params);
    } else {
      doc = Analyze1("custom", custom.Resolve().params);
    }
    const fs::path dir = OutputDir(g);
    WriteJson(doc, (dir / "stability.json").string());
    auto line = [](const Json& d) {
      std::printf("%-8s string_stable=%s peak_gain=%.6f at %.4f rad/s  plant_stable=%s\n",
                  d["label"].get<std::string>().c_str(), d["string_stable"].get<bool>() ? "true" : "false",
                  d["peak_gain"].get<double>(), d["peak_omega"].get<double>(),
                  d["plant_stable"].get<bool>() ? "true" : "false");
    };
    if (doc.is_array()) {
      for (const auto& d : doc) line(d);
    } else {
      line(doc);
    }
  }
};

struct MapCmd {
  double tau = 0.0;
  double th = 1.5;
  double eta = 10.0;
  Interval k1{0.01, 1.0};
  Interval k2{0.01, 1.0};
  int resolution = 50;

  void Register(CLI::App* app) {
    app->add_option("--tau", tau, "Sensor delay [s]")->capture_default_str();
    app->add_option("--th", th, "Time gap [s]")->capture_default_str();
    app->add_option("--eta", eta, "Jam gap [m]")->capture_default_str();
    app->add_option("--k1-min", k1.lower, "Smallest k1")->capture_default_str();
    app->add_option("--k1-max", k1.upper, "Largest k1")->capture_default_str();
    app->add_option("--k2-min", k2.lower, "Smallest k2")->capture_default_str();
    app->add_option("--k2-max", k2.upper, "Largest k2")->capture_default_str();
    app->add_option("--resolution", resolution, "Grid points per axis")->capture_default_str();
  }

  void Run(const GlobalOptions& g) const {
    if (!(th > 0.0)) throw UsageError("--th must be > 0");
    if (!(tau >= 0.0)) throw UsageError("--tau must be >= 0");
    if (!(eta >= 0.0)) throw UsageError("--eta must be >= 0");
    if (!(k1.lower > 0.0) || k1.upper < k1.lower) throw UsageError("--k1-min/--k1-max must satisfy 0 < min <= max");
    if (!(k2.lower >= 0.0) || k2.upper < k2.lower) throw UsageError("--k2-min/--k2-max must satisfy 0 <= min <= max");
    if (resolution < 2) throw UsageError("--resolution must be >= 2");
    const StabilityMap map = ComputeStabilityMap(k1, k2, resolution, th, tau, eta);
    const fs::path dir = OutputDir(g);
    ExportMap(map, (dir / "map.csv").string());
    const auto stable = std::count(map.verdicts.begin(), map.verdicts.end(), Verdict::kStringStable);
    std::cout << "map " << resolution << "x" << resolution << ": " << stable
              << " string-stable cells -> " << (dir / "map.csv").string() << '\n';
  }
};

struct AmplifyCmd {
  std::string preset;
  CustomParams custom;
  int n_max = 15;
  ScenarioOptions scenario;
  SimOptions sim;

  void Register(CLI::App* app) {
    app->add_option("--preset", preset, "Preset label (or 'custom' with --k1 ...)")->required();
    app->add_option("--n-max", n_max, "Longest platoon (followers)")->capture_default_str();
    custom.Register(app);
    scenario.Register(app);
    sim.Register(app);
  }

  void Run(const GlobalOptions& g) const {
    if (n_max < 1) throw UsageError("--n-max must be >= 1");
    const VehicleSpec vehicle = ResolveVehicle(preset, custom);
    const SimConfig cfg = sim.Config();
    const SampledSeries lead = scenario.Build(cfg.dt, g.seed);
    const double v0 = lead.values.front();
    const fs::path dir = OutputDir(g);
    const std::string path = (dir / "amplify.csv").string();
    auto out = detail::OpenForWrite(path);
    out << "followers,amplitude,min_gap,min_speed,terminal,terminal_vehicle,terminal_time_s,"
           "terminal_value\n";
    int rows = 0;
    for (int n = 1; n <= n_max; ++n) {
      const std::vector<VehicleSpec> fleet(static_cast<std::size_t>(n), vehicle);
      const SimResult r = SimulatePlatoon(lead, fleet, v0, cfg);
      const auto m = AmplificationMetrics(r, v0);
      out << n << ',' << detail::FormatDouble(m.back().amplitude) << ','
          << detail::FormatDouble(m.back().min_gap) << ','
          << detail::FormatDouble(m.back().min_speed);
      ++rows;
      if (!r.events.empty()) {
        const Event& e = r.events.front();
        out << ',' << ToString(e.kind) << ',' << e.vehicle << ','
            << detail::FormatDouble(e.time) << ',' << detail::FormatDouble(e.value) << '\n';
        break;
      }
      out << ",none,,,\n";
    }
    detail::CheckWritten(out, path);
    std::cout << "amplify " << vehicle.label << ": " << rows << " platoon lengths -> " << path
              << '\n';
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Delayed ACC car-following models: simulation, calibration, stability"};
  app.require_subcommand(1);
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.set_config("--config", "", "TOML config file (keys as long option names; "
                                 "[subcommand] sections)");
  GlobalOptions global;
  app.add_option("--out", global.out, "Output directory")->capture_default_str();
  app.add_option("--seed", global.seed, "Random seed")->capture_default_str();

  SimulateCmd simulate;
  CalibrateCmd calibrate;
  StabilityCmd stability;
  MapCmd map;
  AmplifyCmd amplify;

  auto* sim_app = app.add_subcommand("simulate", "Simulate a platoon behind a lead profile");
  simulate.Register(sim_app);
  auto* cal_app = app.add_subcommand("calibrate", "Fit model parameters to a trajectory file");
  calibrate.Register(cal_app);
  auto* stab_app = app.add_subcommand("stability", "String and plant stability of parameters");
  stability.Register(stab_app);
  auto* map_app = app.add_subcommand("map", "String stability map over the (k1, k2) plane");
  map.Register(map_app);
  auto* amp_app = app.add_subcommand("amplify", "Disturbance growth versus platoon length");
  amplify.Register(amp_app);
  for (auto* sub : {sim_app, cal_app, stab_app, map_app, amp_app}) {
    sub->configurable();
    sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*sim_app) simulate.Run(global);
    if (*cal_app) calibrate.Run(global);
    if (*stab_app) stability.Run(global);
    if (*map_app) map.Run(global);
    if (*amp_app) amplify.Run(global);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
