#pragma once

// Linear stability of the delayed car-following model about equilibrium.
//
// String stability uses the head-to-tail transfer function
//
//   G(z) = (k1 + k2 z) e^{-tau z} / (z^2 + (k1 th + k2) z + k1 e^{-tau z})
//
// and checks sup_w |G(jw)| <= 1 on a frequency sweep. Plant stability and
// ring-road modes use the rightmost root of the characteristic function
//
//   D_w(z) = z^2 + (k1 th + k2) z + k1 e^{-tau z} - w (k1 + k2 z) e^{-tau z}
//
// where w = 0 for a single follower and w = exp(-i 2 pi k / N) for ring
// mode k. Roots come from a Chebyshev pseudospectral discretization of the
// delay interval followed by Newton polishing on D_w.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <exception>
#include <mutex>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "accsim/error.hpp"
#include "accsim/model.hpp"

namespace accsim {

using Complex = std::complex<double>;

/// Head-to-tail transfer function at complex frequency z.
inline Complex TransferFunction(const AccParams& p, Complex z) {
  const Complex delay = std::exp(-p.tau * z);
  const Complex num = (p.k1 + p.k2 * z) * delay;
  const Complex den = z * z + (p.k1 * p.th + p.k2) * z + p.k1 * delay;
  return num / den;
}

/// |G(j omega)|; exactly 1 at omega = 0.
inline double TransferGain(const AccParams& p, double omega) {
  if (omega == 0.0) return 1.0;
  return std::abs(TransferFunction(p, Complex(0.0, omega)));
}

/// Low-frequency string stability margin: |G(jw)|^2 = 1 - c w^2 + O(w^4)
/// near w = 0 with c proportional to this value. Negative means unstable.
inline double LowFrequencyMargin(const AccParams& p) {
  return p.k1 * p.th * (p.th - 2.0 * p.tau) + 2.0 * p.k2 * (p.th - p.tau) - 2.0;
}

struct SweepOptions {
  double omega_max = 0.0;  // rad/s; 0 picks 20 max(k1 th + k2, 1)
  int n_samples = 2000;
  double tol = 1e-6;
};

inline double DefaultOmegaMax(const AccParams& p) {
  return 20.0 * std::max(p.k1 * p.th + p.k2, 1.0);
}

struct StringStabilityResult {
  bool stable = false;
  double peak_gain = 0.0;
  double peak_omega = 0.0;
};

/// Sweeps |G(jw)| on a log grid over (0, omega_max] and refines the maximum
/// with a golden-section search between the neighbouring samples.
inline StringStabilityResult StringStability(const AccParams& p,
                                             const SweepOptions& opts = {}) {
  p.Validate();
  const double omega_max = opts.omega_max > 0.0 ? opts.omega_max : DefaultOmegaMax(p);
  if (opts.n_samples < 100) throw Error("frequency sweep needs at least 100 samples");
  const int n = opts.n_samples;
  const double log_lo = std::log(omega_max * 1e-5);
  const double log_hi = std::log(omega_max);

  std::vector<double> omegas(static_cast<std::size_t>(n));
  int best = 0;
  double best_gain = -1.0;
  for (int i = 0; i < n; ++i) {
    const double w = std::exp(log_lo + (log_hi - log_lo) * i / (n - 1));
    omegas[static_cast<std::size_t>(i)] = w;
    const double g = TransferGain(p, w);
    if (g > best_gain) {
      best_gain = g;
      best = i;
    }
  }

  double a = omegas[static_cast<std::size_t>(std::max(best - 1, 0))];
  double b = omegas[static_cast<std::size_t>(std::min(best + 1, n - 1))];
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double gc = TransferGain(p, c);
  double gd = TransferGain(p, d);
  for (int it = 0; it < 100 && (b - a) > 1e-12 * b; ++it) {
    if (gc > gd) {
      b = d;
      d = c;
      gd = gc;
      c = b - inv_phi * (b - a);
      gc = TransferGain(p, c);
    } else {
      a = c;
      c = d;
      gc = gd;
      d = a + inv_phi * (b - a);
      gd = TransferGain(p, d);
    }
  }
  StringStabilityResult out;
  out.peak_gain = best_gain;
  out.peak_omega = omegas[static_cast<std::size_t>(best)];
  const double w_ref = 0.5 * (a + b);
  const double g_ref = TransferGain(p, w_ref);
  if (g_ref > out.peak_gain) {
    out.peak_gain = g_ref;
    out.peak_omega = w_ref;
  }
  out.stable = out.peak_gain <= 1.0 + opts.tol;
  return out;
}

/// D_w(z) and its derivative for coupling factor w.
struct CharacteristicFunction {
  AccParams p;
  Complex w{0.0, 0.0};

  Complex operator()(Complex z) const {
    const Complex e = std::exp(-p.tau * z);
    return z * z + (p.k1 * p.th + p.k2) * z + e * (p.k1 - w * (p.k1 + p.k2 * z));
  }

  Complex Derivative(Complex z) const {
    const Complex e = std::exp(-p.tau * z);
    return 2.0 * z + (p.k1 * p.th + p.k2) - p.tau * e * (p.k1 - w * (p.k1 + p.k2 * z)) -
           e * w * p.k2;
  }
};

/// Candidate roots outside this box are treated as discretization artifacts.
struct SearchBox {
  double re_min = -100.0;
  double re_max = 100.0;
  double im_abs_max = 100.0;

  bool contains(Complex z) const {
    return z.real() >= re_min && z.real() <= re_max && std::abs(z.imag()) <= im_abs_max;
  }
};

struct RootOptions {
  SearchBox box;
  int order = 32;       // initial collocation order
  int max_order = 256;
  double tol = 1e-6;    // allowed drift of the rightmost root between orders
};

inline Complex NewtonPolish(const CharacteristicFunction& f, Complex z) {
  for (int it = 0; it < 60; ++it) {
    const Complex d = f.Derivative(z);
    if (d == Complex(0.0, 0.0)) break;
    const Complex step = f(z) / d;
    z -= step;
    if (std::abs(step) <= 1e-15 * (1.0 + std::abs(z))) break;
  }
  return z;
}

namespace detail {

/// Chebyshev differentiation matrix on x_j = cos(pi j / m), j = 0..m.
inline Eigen::MatrixXd ChebyshevDiff(int m) {
  Eigen::VectorXd x(m + 1);
  Eigen::VectorXd c(m + 1);
  for (int j = 0; j <= m; ++j) {
    x(j) = std::cos(std::numbers::pi * j / m);
    c(j) = ((j == 0 || j == m) ? 2.0 : 1.0) * ((j % 2 == 0) ? 1.0 : -1.0);
  }
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(m + 1, m + 1);
  for (int i = 0; i <= m; ++i) {
    for (int j = 0; j <= m; ++j) {
      if (i != j) d(i, j) = (c(i) / c(j)) / (x(i) - x(j));
    }
    d(i, i) = -d.row(i).sum();
  }
  return d;
}

/// Eigenvalues of the collocated solution operator generator for
///   x' = A0 x(t) + A1 x(t - tau),  x = (gap, speed) perturbation.
inline Eigen::VectorXcd CollocationSpectrum(const CharacteristicFunction& f, int m) {
  const AccParams& p = f.p;
  const double a = p.k1 * p.th + p.k2;
  Eigen::Matrix2cd a0;
  a0 << Complex(0.0), f.w - 1.0, Complex(0.0), Complex(-a);
  Eigen::Matrix2cd a1;
  a1 << Complex(0.0), Complex(0.0), Complex(p.k1), f.w * p.k2;

  const Eigen::MatrixXd d = ChebyshevDiff(m) * (2.0 / p.tau);
  const int n = 2 * (m + 1);
  Eigen::MatrixXcd gen = Eigen::MatrixXcd::Zero(n, n);
  gen.block(0, 0, 2, 2) = a0;
  gen.block(0, 2 * m, 2, 2) += a1;
  for (int i = 1; i <= m; ++i) {
    for (int j = 0; j <= m; ++j) {
      gen(2 * i, 2 * j) = d(i, j);
      gen(2 * i + 1, 2 * j + 1) = d(i, j);
    }
  }
  if (f.w.imag() == 0.0) {
    // Real generator: the real solver is several times cheaper.
    Eigen::EigenSolver<Eigen::MatrixXd> solver(gen.real(), false);
    return solver.eigenvalues();
  }
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> solver(gen, false);
  return solver.eigenvalues();
}

inline Complex RightmostAtOrder(const CharacteristicFunction& f, int m,
                                const SearchBox& box) {
  const Eigen::VectorXcd eig = CollocationSpectrum(f, m);
  std::vector<Complex> cand;
  for (Eigen::Index i = 0; i < eig.size(); ++i) {
    if (box.contains(eig(i))) cand.push_back(eig(i));
  }
  if (cand.empty()) throw DiscretizationUnconverged("no eigenvalue inside the search box");
  std::sort(cand.begin(), cand.end(),
            [](Complex x, Complex y) { return x.real() > y.real(); });
  constexpr std::size_t kPolished = 8;
  bool found = false;
  Complex best;
  for (std::size_t i = 0; i < std::min(kPolished, cand.size()); ++i) {
    const Complex z = NewtonPolish(f, cand[i]);
    if (std::abs(f(z)) > 1e-8 || !box.contains(z)) continue;
    // Conjugate pairs tie on the real part; prefer the upper one.
    const bool tie = found && std::abs(z.real() - best.real()) <= 1e-10 * (1.0 + std::abs(z));
    if (!found || (tie ? z.imag() > best.imag() : z.real() > best.real())) {
      best = z;
      found = true;
    }
  }
  if (!found) return cand.front();
  return best;
}

}  // namespace detail

/// Rightmost root of D_w. Delay-free systems are solved in closed form.
inline Complex RightmostRoot(const CharacteristicFunction& f, const RootOptions& opts = {}) {
  const AccParams& p = f.p;
  if (p.tau == 0.0) {
    // z^2 + b z + c = 0
    const Complex b = p.k1 * p.th + p.k2 - f.w * p.k2;
    const Complex c = p.k1 * (1.0 - f.w);
    const Complex disc = std::sqrt(b * b - 4.0 * c);
    const Complex r1 = (-b + disc) / 2.0;
    const Complex r2 = (-b - disc) / 2.0;
    return NewtonPolish(f, r1.real() >= r2.real() ? r1 : r2);
  }
  for (int m = opts.order; m <= opts.max_order; m *= 2) {
    const Complex coarse = detail::RightmostAtOrder(f, m, opts.box);
    const Complex fine = detail::RightmostAtOrder(f, m + m / 2, opts.box);
    if (std::abs(fine - coarse) <= opts.tol) return fine;
  }
  throw DiscretizationUnconverged("rightmost root did not settle up to collocation order " +
                                  std::to_string(opts.max_order));
}

struct PlantStabilityResult {
  bool stable = false;
  Complex rightmost_root;
};

inline PlantStabilityResult PlantStability(const AccParams& p, const RootOptions& opts = {}) {
  p.Validate();
  const Complex z = RightmostRoot(CharacteristicFunction{p, Complex(0.0, 0.0)}, opts);
  return {z.real() < 0.0, z};
}

struct RingStabilityResult {
  bool stable = false;
  std::vector<Complex> roots;  // roots[k - 1] is the rightmost root of mode k
};

/// Rightmost root of every non-translational mode k = 1..N-1 of an N-vehicle ring.
inline RingStabilityResult RingModeStability(const AccParams& p, int n_vehicles,
                                             const RootOptions& opts = {}) {
  p.Validate();
  if (n_vehicles < 2) throw Error("ring analysis needs at least two vehicles");
  RingStabilityResult out;
  out.stable = true;
  for (int k = 1; k < n_vehicles; ++k) {
    const double angle = -2.0 * std::numbers::pi * k / n_vehicles;
    const Complex w(std::cos(angle), std::sin(angle));
    const Complex z = RightmostRoot(CharacteristicFunction{p, w}, opts);
    out.roots.push_back(z);
    if (!(z.real() < 0.0)) out.stable = false;
  }
  return out;
}

struct StabilityReport {
  bool plant_stable = false;
  Complex rightmost_root;
  bool string_stable = false;
  double peak_gain = 0.0;
  double peak_omega = 0.0;
};

inline StabilityReport Analyze(const AccParams& p, const SweepOptions& sweep = {},
                               const RootOptions& roots = {}) {
  const StringStabilityResult s = StringStability(p, sweep);
  const PlantStabilityResult pl = PlantStability(p, roots);
  return {pl.stable, pl.rightmost_root, s.stable, s.peak_gain, s.peak_omega};
}

enum class Verdict { kStringStable, kStringUnstable, kPlantUnstable };

inline const char* ToString(Verdict v) {
  switch (v) {
    case Verdict::kStringStable: return "stable";
    case Verdict::kStringUnstable: return "string_unstable";
    case Verdict::kPlantUnstable: return "plant_unstable";
  }
  return "?";
}

struct StabilityMap {
  std::vector<double> k1_grid;
  std::vector<double> k2_grid;
  std::vector<Verdict> verdicts;  // row-major: index = i_k1 * k2_grid.size() + i_k2
  double th = 0.0;
  double tau = 0.0;
  double eta = 0.0;

  Verdict at(std::size_t i_k1, std::size_t i_k2) const {
    return verdicts[i_k1 * k2_grid.size() + i_k2];
  }
};

inline Verdict Classify(const AccParams& p, const SweepOptions& sweep = {},
                        const RootOptions& roots = {}) {
  if (StringStability(p, sweep).stable) return Verdict::kStringStable;
  return PlantStability(p, roots).stable ? Verdict::kStringUnstable
                                         : Verdict::kPlantUnstable;
}

inline std::vector<double> LinearGrid(Interval range, int n) {
  std::vector<double> g(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = range.lower + range.width() * i / (n - 1);
  return g;
}

/// Classifies every point of a resolution x resolution grid in the (k1, k2)
/// plane. Cells are evaluated on all hardware threads; output order is fixed.
inline StabilityMap ComputeStabilityMap(Interval k1_range, Interval k2_range, int resolution,
                                        double th, double tau, double eta,
                                        const SweepOptions& sweep = {},
                                        const RootOptions& roots = {}) {
  if (resolution < 2) throw Error("map resolution must be >= 2");
  if (!(k1_range.lower > 0.0) || !(k2_range.lower >= 0.0) ||
      k1_range.upper < k1_range.lower || k2_range.upper < k2_range.lower) {
    throw Error("map ranges must be non-empty with k1 > 0 and k2 >= 0");
  }
  StabilityMap map;
  map.k1_grid = LinearGrid(k1_range, resolution);
  map.k2_grid = LinearGrid(k2_range, resolution);
  map.th = th;
  map.tau = tau;
  map.eta = eta;
  const std::size_t cells = map.k1_grid.size() * map.k2_grid.size();
  map.verdicts.resize(cells);

  const unsigned n_threads = std::max(1u, std::thread::hardware_concurrency());
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&](unsigned worker) {
    try {
      for (std::size_t c = worker; c < cells; c += n_threads) {
        const AccParams p{map.k1_grid[c / map.k2_grid.size()],
                          map.k2_grid[c % map.k2_grid.size()], th, tau, eta};
        map.verdicts[c] = Classify(p, sweep, roots);
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  };
  std::vector<std::thread> threads;
  for (unsigned t = 1; t < n_threads; ++t) threads.emplace_back(work, t);
  work(0);
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
  return map;
}

}  // namespace accsim
