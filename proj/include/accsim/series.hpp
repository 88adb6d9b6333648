#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "accsim/error.hpp"

namespace accsim {

/// Uniformly sampled scalar signal, read as a piecewise-linear function.
/// Reads outside [t0, t_end()] hold the nearest end value.
struct SampledSeries {
  double t0 = 0.0;
  double dt = 0.1;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double t_end() const {
    return values.empty() ? t0 : t0 + dt * static_cast<double>(size() - 1);
  }
  double time(std::size_t k) const { return t0 + dt * static_cast<double>(k); }

  double At(double t) const {
    if (values.empty()) throw Error("sampling an empty series");
    if (values.size() == 1 || t <= t0) return values.front();
    const double u = (t - t0) / dt;
    const auto last = static_cast<double>(size() - 1);
    if (u >= last) return values.back();
    const auto k = static_cast<std::size_t>(u);
    const double w = u - static_cast<double>(k);
    return values[k] + w * (values[k + 1] - values[k]);
  }

  /// Sample times where the slope changes by more than `tol` (per sample).
  std::vector<double> CornerTimes(double tol = 1e-9) const {
    std::vector<double> out;
    for (std::size_t k = 1; k + 1 < size(); ++k) {
      const double d2 = values[k + 1] - 2.0 * values[k] + values[k - 1];
      if (std::abs(d2) > tol) out.push_back(time(k));
    }
    return out;
  }
};

/// Linear interpolation of irregular samples (t strictly increasing) at `t`.
inline double InterpolateLinear(const std::vector<double>& ts,
                                const std::vector<double>& ys, double t) {
  if (t <= ts.front()) return ys.front();
  if (t >= ts.back()) return ys.back();
  const auto it = std::upper_bound(ts.begin(), ts.end(), t);
  const auto j = static_cast<std::size_t>(it - ts.begin());
  const double w = (t - ts[j - 1]) / (ts[j] - ts[j - 1]);
  return ys[j - 1] + w * (ys[j] - ys[j - 1]);
}

/// Number of samples at spacing `dt` that fit in [0, span].
inline std::size_t SampleCount(double span, double dt) {
  return static_cast<std::size_t>(std::floor(span / dt + 1e-9)) + 1;
}

}  // namespace accsim
