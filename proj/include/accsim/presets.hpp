#pragma once

// Calibrated parameters for the seven 2018 ACC vehicles at their minimum and
// maximum following settings. Make 1 vehicles (A-D) disengage below 25 mph.

#include <algorithm>
#include <array>
#include <optional>
#include <span>
#include <string_view>

#include "accsim/model.hpp"

namespace accsim {

inline constexpr double kMphToMps = 0.44704;
inline constexpr double kMake1MinAccSpeed = 25.0 * kMphToMps;  // 11.176 m/s

struct Preset {
  std::string_view label;
  AccParams params;
  double min_acc_speed;
};

inline constexpr std::array<Preset, 14> kPresets = {{
    {"A/min", {0.052, 0.338, 0.819, 0.948, 8.030}, kMake1MinAccSpeed},
    {"A/max", {0.012, 0.167, 2.054, 0.992, 5.960}, kMake1MinAccSpeed},
    {"B/min", {0.052, 0.190, 0.725, 0.468, 6.849}, kMake1MinAccSpeed},
    {"B/max", {0.022, 0.116, 2.020, 0.153, 8.210}, kMake1MinAccSpeed},
    {"C/min", {0.029, 0.269, 0.907, 0.368, 10.070}, kMake1MinAccSpeed},
    {"C/max", {0.018, 0.152, 1.986, 0.324, 13.814}, kMake1MinAccSpeed},
    {"D/min", {0.051, 0.280, 0.544, 0.284, 13.400}, kMake1MinAccSpeed},
    {"D/max", {0.022, 0.221, 1.853, 0.935, 14.956}, kMake1MinAccSpeed},
    {"E/min", {0.051, 0.165, 1.127, 0.419, 5.170}, 0.0},
    {"E/max", {0.053, 0.142, 1.785, 0.839, 9.370}, 0.0},
    {"F/min", {0.071, 0.191, 0.696, 0.582, 10.090}, 0.0},
    {"F/max", {0.041, 0.164, 1.734, 0.922, 6.033}, 0.0},
    {"G/min", {0.070, 0.253, 0.549, 0.993, 14.500}, 0.0},
    {"G/max", {0.046, 0.129, 1.764, 0.994, 5.131}, 0.0},
}};

inline std::optional<VehicleSpec> FindPreset(std::string_view label) {
  const auto it = std::find_if(kPresets.begin(), kPresets.end(),
                               [&](const Preset& p) { return p.label == label; });
  if (it == kPresets.end()) return std::nullopt;
  return VehicleSpec{std::string(it->label), it->params, it->min_acc_speed};
}

}  // namespace accsim
