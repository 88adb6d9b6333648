#pragma once

// JSON documents and CSV tables for reports written by the command-line tool.

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "accsim/calib.hpp"
#include "accsim/dataio.hpp"
#include "accsim/sim.hpp"
#include "accsim/stability.hpp"

namespace accsim {

using Json = nlohmann::ordered_json;

/// Non-finite numbers become null.
inline Json Number(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

inline Json ToJson(const AccParams& p) {
  return Json{{"k1", p.k1}, {"k2", p.k2}, {"th", p.th}, {"tau", p.tau}, {"eta", p.eta}};
}

inline Json ToJson(const StabilityReport& r) {
  return Json{{"plant_stable", r.plant_stable},
              {"rightmost_root", {{"re", r.rightmost_root.real()}, {"im", r.rightmost_root.imag()}}},
              {"string_stable", r.string_stable},
              {"peak_gain", r.peak_gain},
              {"peak_omega", r.peak_omega}};
}

inline Json ToJson(const CalibrationResult& r) {
  Json errors = Json::array();
  for (const ScenarioError& e : r.test_errors) {
    Json row{{"name", e.name}, {"ok", e.ok}};
    if (e.ok) {
      row["speed_rmse"] = e.speed_rmse;
      row["spacing_rmse"] = e.spacing_rmse;
    } else {
      row["error"] = e.error;
    }
    errors.push_back(row);
  }
  Json starts = Json::array();
  for (const StartDiagnostics& s : r.starts) {
    starts.push_back({{"params", ToJson(s.params)},
                      {"objective", Number(s.objective)},
                      {"evals", s.evals},
                      {"mesh_converged", s.mesh_converged}});
  }
  return Json{{"params", ToJson(r.params)},
              {"train", {{"mse_speed", r.train_mse_speed}, {"rmse_spacing", r.train_rmse_spacing}}},
              {"test_errors", errors},
              {"diagnostics",
               {{"evals_used", r.evals_used},
                {"converged", r.converged},
                {"best_start", r.best_start},
                {"param_scatter", r.param_scatter},
                {"degenerate", r.degenerate},
                {"starts", starts}}}};
}

inline Json ToJson(const Event& e) {
  return Json{{"kind", ToString(e.kind)}, {"vehicle", e.vehicle}, {"time_s", e.time},
              {"value", e.value}};
}

inline Json AmplificationJson(const SimResult& result, double baseline) {
  const auto metrics = AmplificationMetrics(result, baseline);
  Json vehicles = Json::array();
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    vehicles.push_back({{"vehicle", i},
                        {"amplitude", metrics[i].amplitude},
                        {"min_gap", Number(metrics[i].min_gap)},
                        {"min_speed", metrics[i].min_speed}});
  }
  Json events = Json::array();
  for (const Event& e : result.events) events.push_back(ToJson(e));
  return Json{{"baseline_speed", baseline},
              {"amplifying", IsAmplifying(metrics)},
              {"vehicles", vehicles},
              {"events", events}};
}

inline void WriteJson(const Json& doc, const std::string& path) {
  auto out = detail::OpenForWrite(path);
  out << doc.dump(2) << '\n';
  detail::CheckWritten(out, path);
}

/// One-row error table: train and test speed errors, then spacing errors.
inline void ExportErrorTable(const std::string& label, const CalibrationResult& r,
                             const std::string& path) {
  auto out = detail::OpenForWrite(path);
  out << "vehicle,train_speed";
  for (const auto& e : r.test_errors) out << ',' << e.name << "_speed";
  out << ",train_spacing";
  for (const auto& e : r.test_errors) out << ',' << e.name << "_spacing";
  out << '\n' << label << ',' << detail::FormatDouble(std::sqrt(r.train_mse_speed));
  for (const auto& e : r.test_errors) {
    out << ',' << (e.ok ? detail::FormatDouble(e.speed_rmse) : std::string("nan"));
  }
  out << ',' << detail::FormatDouble(r.train_rmse_spacing);
  for (const auto& e : r.test_errors) {
    out << ',' << (e.ok ? detail::FormatDouble(e.spacing_rmse) : std::string("nan"));
  }
  out << '\n';
  detail::CheckWritten(out, path);
}

}  // namespace accsim
