#pragma once

// Linear constant-time-headway car-following model with sensor delay:
//
//   s'(t) = v_lead(t) - v(t)
//   v'(t) = k1 [s(t - tau) - eta - th v(t)] + k2 [v_lead(t - tau) - v(t)]

#include <array>
#include <cmath>
#include <string>
#include <utility>

#include "accsim/error.hpp"

namespace accsim {

struct AccParams {
  double k1 = 0.0;   // gain on spacing error, 1/s^2
  double k2 = 0.0;   // gain on relative velocity, 1/s
  double th = 0.0;   // desired effective time gap, s
  double tau = 0.0;  // sensor delay, s
  double eta = 0.0;  // jam space gap, m

  friend bool operator==(const AccParams&, const AccParams&) = default;

  bool IsValid() const {
    return std::isfinite(k1) && std::isfinite(k2) && std::isfinite(th) &&
           std::isfinite(tau) && std::isfinite(eta) && k1 > 0.0 &&
           k2 >= 0.0 && th > 0.0 && tau >= 0.0 && eta >= 0.0;
  }

  /// Throws InvalidParams naming the first violated field.
  void Validate() const {
    auto require = [](bool ok, const char* what) {
      if (!ok) throw InvalidParams(std::string("invalid parameter: ") + what);
    };
    require(std::isfinite(k1) && k1 > 0.0, "k1 must be finite and > 0");
    require(std::isfinite(k2) && k2 >= 0.0, "k2 must be finite and >= 0");
    require(std::isfinite(th) && th > 0.0, "th must be finite and > 0");
    require(std::isfinite(tau) && tau >= 0.0, "tau must be finite and >= 0");
    require(std::isfinite(eta) && eta >= 0.0, "eta must be finite and >= 0");
  }
};

/// Number of calibrated parameters; the order below is used wherever
/// parameters are handled as a flat vector.
inline constexpr std::size_t kNumParams = 5;
inline constexpr std::array<const char*, kNumParams> kParamNames = {
    "k1", "k2", "th", "tau", "eta"};

inline std::array<double, kNumParams> ToArray(const AccParams& p) {
  return {p.k1, p.k2, p.th, p.tau, p.eta};
}

inline AccParams FromArray(const std::array<double, kNumParams>& x) {
  return AccParams{x[0], x[1], x[2], x[3], x[4]};
}

struct Interval {
  double lower = 0.0;
  double upper = 0.0;

  double width() const { return upper - lower; }
  bool contains(double x) const { return x >= lower && x <= upper; }
};

/// Closed box on the five model parameters.
struct ParamBounds {
  Interval k1{0.0, 1.0};
  Interval k2{0.0, 1.0};
  Interval th{0.0, 3.0};
  Interval tau{0.0, 1.0};
  Interval eta{5.0, 15.0};

  const Interval& operator[](std::size_t i) const {
    switch (i) {
      case 0: return k1;
      case 1: return k2;
      case 2: return th;
      case 3: return tau;
      default: return eta;
    }
  }

  bool contains(const AccParams& p) const {
    const auto x = ToArray(p);
    for (std::size_t i = 0; i < kNumParams; ++i) {
      if (!(*this)[i].contains(x[i])) return false;
    }
    return true;
  }

  void Validate() const {
    for (std::size_t i = 0; i < kNumParams; ++i) {
      const Interval& b = (*this)[i];
      const std::string name = kParamNames[i];
      if (!std::isfinite(b.lower) || !std::isfinite(b.upper)) {
        throw InvalidParams("bounds for " + name + " must be finite");
      }
      if (b.lower < 0.0) {
        throw InvalidParams("lower bound for " + name + " must be >= 0");
      }
      if (b.lower > b.upper) {
        throw InvalidParams("lower bound for " + name +
                            " exceeds its upper bound");
      }
    }
  }
};

struct VehicleSpec {
  std::string label;
  AccParams params;
  double min_acc_speed = 0.0;  // m/s; 0 when ACC operates to standstill
};

struct State {
  double s = 0.0;  // space gap, m
  double v = 0.0;  // speed, m/s
};

/// Speed prescribed by the linear spacing policy; negative below the jam gap.
constexpr double SpacingPolicySpeed(double s, const AccParams& p) {
  return (s - p.eta) / p.th;
}

constexpr double Acceleration(double s_delayed, double v_now,
                              double v_lead_delayed, const AccParams& p) {
  return p.k1 * (s_delayed - p.eta - p.th * v_now) +
         p.k2 * (v_lead_delayed - v_now);
}

/// Gap at which a follower is in equilibrium at speed `v`.
constexpr double EquilibriumGap(double v, const AccParams& p) {
  return p.eta + p.th * v;
}

/// Uniform flow of `n_vehicles` on a ring of length `ring_length`.
inline State Equilibrium(double ring_length, int n_vehicles,
                         const AccParams& p) {
  if (n_vehicles < 1) throw InvalidParams("ring needs at least one vehicle");
  if (!(ring_length > 0.0)) throw InvalidParams("ring length must be > 0");
  const double s = ring_length / n_vehicles;
  const double v = SpacingPolicySpeed(s, p);
  if (v < 0.0) {
    throw InfeasibleEquilibrium("ring spacing " + std::to_string(s) +
                                " m is below the jam gap " +
                                std::to_string(p.eta) + " m");
  }
  return State{s, v};
}

}  // namespace accsim
