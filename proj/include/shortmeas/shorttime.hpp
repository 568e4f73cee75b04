#pragma once

// Time derivatives of the probe population P_e(tau) at tau = 0: exact values from
// the Heisenberg-picture generator, closed forms, and estimates from sampled data.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/SVD>

#include "shortmeas/diagnostics.hpp"
#include "shortmeas/dynamics.hpp"
#include "shortmeas/hilbert.hpp"
#include "shortmeas/models.hpp"

namespace shortmeas {

/// alpha|g> + beta|e>.
struct ProbeState {
  cplx alpha{1.0, 0.0};
  cplx beta{0.0, 0.0};

  static ProbeState from_amplitudes(cplx alpha, cplx beta) {
    const double norm = std::norm(alpha) + std::norm(beta);
    if (std::abs(norm - 1.0) > 1e-12)
      throw InvalidArgument(fmt::format("probe amplitudes have |alpha|^2 + |beta|^2 = {:.15g}", norm));
    return {alpha, beta};
  }

  /// (|g> + e^{i phi}|e>)/sqrt(2).
  static ProbeState plus(double phi) {
    const double h = std::sqrt(0.5);
    return {cplx(h, 0.0), std::polar(h, phi)};
  }

  /// |beta|^2 - |alpha|^2 = delta_p with relative phase phi.
  static ProbeState from_inversion(double delta_p, double phi) {
    if (!(std::abs(delta_p) <= 1.0)) throw InvalidArgument(fmt::format("population inversion {} outside [-1, 1]", delta_p));
    return {cplx(std::sqrt(0.5 * (1.0 - delta_p)), 0.0), std::polar(std::sqrt(0.5 * (1.0 + delta_p)), phi)};
  }

  double phase() const { return std::arg(beta) - std::arg(alpha); }
  double inversion() const { return std::norm(beta) - std::norm(alpha); }
  bool balanced(double tol = 1e-12) const { return std::abs(std::abs(alpha) - std::abs(beta)) <= tol; }

  QState state() const { return qubit_state(alpha, beta, Slot::probe); }
};

/// System qubit density matrix [[rho11, rho12], [conj(rho12), rho22]] in the {|1>, |2>} basis.
struct QubitDensity {
  double rho11 = 1.0;
  double rho22 = 0.0;
  cplx rho12{0.0, 0.0};

  static QubitDensity unchecked(double rho11, double rho22, cplx rho12) { return {rho11, rho22, rho12}; }

  static QubitDensity make(double rho11, double rho22, cplx rho12) {
    QubitDensity d{rho11, rho22, rho12};
    if (!d.is_physical())
      throw InvalidArgument(fmt::format("not a density matrix: rho11={}, rho22={}, rho12={}{:+}i", rho11, rho22,
                                        rho12.real(), rho12.imag()));
    return d;
  }

  /// c1|1> + c2|2>, normalized.
  static QubitDensity from_pure(cplx c1, cplx c2) {
    const double norm = std::norm(c1) + std::norm(c2);
    if (norm == 0.0) throw InvalidArgument("zero system state vector");
    return {std::norm(c1) / norm, std::norm(c2) / norm, c1 * std::conj(c2) / norm};
  }

  static QubitDensity from_matrix(const Matrix& m) {
    if (m.rows() != 2 || m.cols() != 2) throw InvalidArgument("qubit density matrix must be 2x2");
    return make(m(0, 0).real(), m(1, 1).real(), m(0, 1));
  }

  cplx rho21() const { return std::conj(rho12); }

  bool is_physical(double tol = 1e-12) const {
    return std::abs(rho11 + rho22 - 1.0) <= tol && rho11 >= -tol && rho22 >= -tol &&
           std::norm(rho12) <= rho11 * rho22 + tol;
  }

  double min_eigenvalue() const {
    const double mean = 0.5 * (rho11 + rho22);
    const double half_gap = std::sqrt(0.25 * (rho11 - rho22) * (rho11 - rho22) + std::norm(rho12));
    return mean - half_gap;
  }

  Matrix matrix() const {
    Matrix m(2, 2);
    m << rho11, rho12, std::conj(rho12), rho22;
    return m;
  }

  QState state(Slot slot = Slot::system) const { return QState::mixed(SpaceLayout::single(slot, 2), matrix(), 1e-10); }
};

enum class DerivativeMethod { exact_adjoint, closed_form, polynomial_fit };

constexpr std::string_view to_string(DerivativeMethod m) {
  switch (m) {
    case DerivativeMethod::exact_adjoint: return "exact-adjoint";
    case DerivativeMethod::closed_form: return "closed-form";
    case DerivativeMethod::polynomial_fit: return "polynomial-fit";
  }
  return "?";
}

struct DerivativeEstimate {
  int order = 0;
  double value = 0.0;
  std::optional<double> uncertainty;
};

struct FitMetadata {
  int degree = 0;
  double window_lo = 0.0;
  double window_hi = 0.0;
  std::size_t samples = 0;
  std::optional<long long> shots;  // per point, when uniform
  long long total_shots = 0;
  double condition_number = 0.0;
  double residual_rms = 0.0;
  int shrink_steps = 0;
  TimeUnit unit;
};

struct DerivativeReport {
  DerivativeMethod method = DerivativeMethod::exact_adjoint;
  TimeUnit unit;
  std::vector<DerivativeEstimate> derivatives;
  std::optional<FitMetadata> fit;

  const DerivativeEstimate& at(int order) const {
    for (const auto& d : derivatives)
      if (d.order == order) return d;
    throw InvalidArgument(fmt::format("report has no derivative of order {}", order));
  }
  double value(int order) const { return at(order).value; }
  std::optional<double> uncertainty(int order) const { return at(order).uncertainty; }
};

/// |e><e| of the probe, embedded in `layout`.
inline Operator probe_excited_projector(const SpaceLayout& layout) {
  return embed(qubit_operators(Slot::probe).excited, Slot::probe, layout);
}

/// One application of A^dag(X) = i[H, X] + D^dag(X).
inline Matrix adjoint_generator_apply(const Matrix& h, const LindbladGenerator* generator, const Matrix& x) {
  Matrix hx = h * x;
  Matrix out = kI * (hx - hx.adjoint());  // valid for Hermitian X: X H = (H X)^dag
  if (generator != nullptr && !generator->empty()) out += generator->apply_adjoint(x);
  return out;
}

/// d^k <O>/d tau^k at tau = 0 for k = 0..max_order, tau = coupling_scale * t.
inline std::vector<double> exact_derivatives(const QState& rho0, const Operator& h, const LindbladGenerator* generator,
                                             int max_order, double coupling_scale, const Operator& observable) {
  if (max_order < 0) throw InvalidArgument(fmt::format("derivative order {} is negative", max_order));
  if (max_order > 3) throw Unsupported(fmt::format("derivative order {} > 3 is not supported", max_order));
  if (!(coupling_scale > 0.0)) throw InvalidArgument(fmt::format("coupling scale must be positive, got {}", coupling_scale));
  require_same_layout(rho0.layout(), h.layout(), "exact derivative: state vs Hamiltonian");
  require_same_layout(rho0.layout(), observable.layout(), "exact derivative: state vs observable");
  if (generator) require_same_layout(rho0.layout(), generator->layout(), "exact derivative: state vs generator");
  if (!observable.is_hermitian()) throw InvalidArgument("exact derivative: observable is not Hermitian");

  const Matrix rho = rho0.density();
  Matrix x = observable.matrix();
  std::vector<double> out;
  double scale = 1.0;
  for (int k = 0; k <= max_order; ++k) {
    if (k > 0) {
      x = adjoint_generator_apply(h.matrix(), generator, x);
      x = 0.5 * (x + x.adjoint()).eval();
      scale *= coupling_scale;
    }
    out.push_back((rho.cwiseProduct(x.transpose())).sum().real() / scale);
  }
  return out;
}

/// d^k P_e/d tau^k at tau = 0 by nested application of the adjoint generator to |e><e|_probe.
inline double derivative_at_zero_exact(const QState& rho0, const Operator& h, const LindbladGenerator* generator,
                                       int order, double coupling_scale) {
  if (order < 1) throw InvalidArgument(fmt::format("derivative order must be >= 1, got {}", order));
  if (order > 3) throw Unsupported(fmt::format("derivative order {} > 3 is not supported", order));
  return exact_derivatives(rho0, h, generator, order, coupling_scale, probe_excited_projector(rho0.layout()))[order];
}

inline DerivativeReport exact_derivative_report(const QState& rho0, const Operator& h, const LindbladGenerator* generator,
                                                int max_order, TimeUnit unit) {
  const auto values =
      exact_derivatives(rho0, h, generator, max_order, unit.scale, probe_excited_projector(rho0.layout()));
  DerivativeReport r{DerivativeMethod::exact_adjoint, unit, {}, std::nullopt};
  for (int k = 0; k <= max_order; ++k) r.derivatives.push_back({k, values[k], std::nullopt});
  return r;
}

/// <X_{phi + pi/2}> on the mediator: dP_e/dtau at 0 for probe |+_phi>.
inline double first_derivative_quadrature(const QState& mediator, double phi) {
  const int cutoff = mediator.layout().dim(Slot::mediator);
  if (mediator.layout().size() != 1) throw InvalidArgument("first_derivative_quadrature expects a mediator-only state");
  const Operator x(mediator.layout(), quadrature(cutoff, phi + std::numbers::pi / 2).matrix());
  return expectation(mediator, x).real();
}

/// -1 + (delta/g_p) x_phi - (g_s/2g_p)(rho12 e^{i phi} + rho21 e^{-i phi}) for probe |+_phi>.
inline double second_derivative_resonant(const QubitDensity& rho_s, const ProbeState& probe, const ModelParams& p,
                                         double x_phi = 0.0) {
  if (!probe.balanced())
    warn(fmt::format("resonant closed form assumes |alpha| = |beta|; probe has inversion {:.3g}", probe.inversion()));
  const double phi = probe.phase();
  const double coherence = 2.0 * (rho_s.rho12 * std::polar(1.0, phi)).real();
  return -1.0 + (p.detuning() / p.g_p) * x_phi - (p.g_s / (2.0 * p.g_p)) * coherence;
}

/// (g^2/delta^2)(rho22 - rho11) in tau = g_p t, or (rho22 - rho11) in tau_eff = g_p^2 t / delta.
inline double second_derivative_dispersive(const QubitDensity& rho_s, const ModelParams& p, TimeUnitKind unit) {
  const double inversion = rho_s.rho22 - rho_s.rho11;
  switch (unit) {
    case TimeUnitKind::resonant: {
      const double ratio = p.g_p / p.detuning();
      return ratio * ratio * inversion;
    }
    case TimeUnitKind::dispersive: return inversion;
    default: throw InvalidArgument("dispersive second derivative is defined in tau or tau_eff only");
  }
}

/// (1/4)[(rho11 - rho22) + 2(1 + rho12 e^{i phi} + rho21 e^{-i phi})] in tau = Gamma t.
inline double second_derivative_collective(const QubitDensity& rho_s, double phi) {
  const double coherence = 2.0 * (rho_s.rho12 * std::polar(1.0, phi)).real();
  return 0.25 * ((rho_s.rho11 - rho_s.rho22) + 2.0 * (1.0 + coherence));
}

/// (gamma/g_p)(|alpha|^2 - |beta|^2)(nbar_a - nbar_b).
inline double third_derivative_bath_correction(const ProbeState& probe, const ModelParams& p) {
  return (p.bath_rate / p.g_p) * (std::norm(probe.alpha) - std::norm(probe.beta)) * (p.mediator_nbar - p.bath_nbar);
}

/// Bath-induced shift of the third derivative obtained from the adjoint generator for a
/// product state with Fock-diagonal mediator: (gamma/g_p)[2(|beta|^2 - |alpha|^2)(nbar_a - nbar_b) - d2/2],
/// where d2 is the second derivative without the bath.
inline double third_derivative_bath_shift(const ProbeState& probe, const ModelParams& p, double second_derivative) {
  return (p.bath_rate / p.g_p) *
         (2.0 * (std::norm(probe.beta) - std::norm(probe.alpha)) * (p.mediator_nbar - p.bath_nbar) -
          0.5 * second_derivative);
}

// ---------------------------------------------------------------------------
// Estimation from sampled series

struct FitWindow {
  double lo = 0.0;
  double hi = 0.0;
};

struct FitOptions {
  int degree = 4;
  std::optional<FitWindow> window;  // absent: start from the whole series and shrink
  double shrink_factor = 0.8;
  double term_ratio = 0.01;         // |c_deg T^deg| / |c_2 T^2| target of the auto window
  double max_condition = 1e10;
  std::optional<double> min_spacing;  // tau; warn below (resonant-unit series only)
};

namespace detail {

struct PolyFit {
  Eigen::VectorXd coeffs;  // in u = (tau - lo)/T
  Eigen::MatrixXd covariance;
  bool has_covariance = false;
  double condition = 0.0;
  double residual_rms = 0.0;
  std::size_t samples = 0;
};

inline PolyFit polyfit(const TimeSeries& s, int degree, FitWindow w, double max_condition) {
  const double span = w.hi - w.lo;
  if (!(span > 0.0)) throw InvalidArgument(fmt::format("fit window [{}, {}] is empty", w.lo, w.hi));
  const double eps = 1e-12 * std::max(1.0, std::abs(w.hi));
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s.times[i] >= w.lo - eps && s.times[i] <= w.hi + eps) idx.push_back(i);
  const auto n = static_cast<Eigen::Index>(idx.size());
  if (n < degree + 2)
    throw FitFailure(fmt::format("fit window [{}, {}] holds {} samples, degree {} needs at least {}", w.lo, w.hi, n,
                                 degree, degree + 2));

  Eigen::MatrixXd v(n, degree + 1);
  Eigen::VectorXd y(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double u = (s.times[idx[r]] - w.lo) / span;
    double pw = 1.0;
    for (int j = 0; j <= degree; ++j, pw *= u) v(r, j) = pw;
    y(r) = s.values[idx[r]];
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(v, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cond = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : std::numeric_limits<double>::infinity();
  if (!(cond <= max_condition))
    throw FitFailure(fmt::format("fit design matrix condition number {:.3g} exceeds {:.3g}", cond, max_condition));

  PolyFit f;
  f.coeffs = svd.solve(y);
  f.condition = cond;
  f.samples = idx.size();
  const Eigen::VectorXd fitted = v * f.coeffs;
  f.residual_rms = std::sqrt((fitted - y).squaredNorm() / static_cast<double>(n));

  if (!s.exact()) {
    // sandwich covariance with binomial variances evaluated on the fitted curve
    const Eigen::VectorXd inv_s = sv.cwiseInverse();
    const Eigen::MatrixXd pinv = svd.matrixV() * inv_s.asDiagonal() * svd.matrixU().transpose();
    Eigen::VectorXd var(n);
    for (Eigen::Index r = 0; r < n; ++r) {
      const double p = std::clamp(fitted(r), 0.0, 1.0);
      var(r) = p * (1.0 - p) / static_cast<double>(s.shots[idx[r]]);
    }
    f.covariance = pinv * var.asDiagonal() * pinv.transpose();
    f.has_covariance = true;
  }
  return f;
}

/// Row vector mapping u-coefficients to the k-th tau derivative at tau = 0.
inline Eigen::RowVectorXd derivative_functional(int degree, int k, FitWindow w) {
  const double span = w.hi - w.lo;
  const double u0 = -w.lo / span;
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(degree + 1);
  for (int j = k; j <= degree; ++j) {
    double falling = 1.0;
    for (int m = 0; m < k; ++m) falling *= (j - m);
    row(j) = falling * std::pow(u0, j - k) / std::pow(span, k);
  }
  return row;
}

}  // namespace detail

/// Least-squares polynomial fit on the window; reports k! c_k for k <= min(degree, 3).
/// Uncertainties are given only for shot-sampled series.
inline DerivativeReport estimate_derivatives(const TimeSeries& series, const FitOptions& opt = {}) {
  if (opt.degree < 1 || opt.degree > 12) throw InvalidArgument(fmt::format("fit degree {} out of range", opt.degree));
  if (series.size() == 0) throw InvalidArgument("cannot fit an empty series");
  if (!series.exact() && series.shots.size() != series.size())
    throw InvalidArgument("series shot counts do not match its samples");

  FitWindow w = opt.window.value_or(FitWindow{series.times.front(), series.times.back()});
  detail::PolyFit fit = detail::polyfit(series, opt.degree, w, opt.max_condition);
  int shrinks = 0;
  if (!opt.window && opt.degree >= 3) {
    auto ratio = [&](const detail::PolyFit& f) {
      return std::abs(f.coeffs(opt.degree)) / std::max(std::abs(f.coeffs(2)), 1e-300);
    };
    while (ratio(fit) >= opt.term_ratio) {
      const FitWindow next{w.lo, w.lo + opt.shrink_factor * (w.hi - w.lo)};
      try {
        fit = detail::polyfit(series, opt.degree, next, opt.max_condition);
      } catch (const FitFailure&) {
        warn(fmt::format("fit window could not shrink below [{}, {}]; degree-{} term still {:.3g} of the quadratic",
                         w.lo, w.hi, opt.degree, ratio(fit)));
        break;
      }
      w = next;
      ++shrinks;
    }
  }

  if (opt.min_spacing && series.unit.kind == TimeUnitKind::resonant) {
    double smallest = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < series.size(); ++i) smallest = std::min(smallest, series.times[i] - series.times[i - 1]);
    if (smallest < *opt.min_spacing * (1.0 - 1e-12))
      warn(fmt::format("sample spacing {:.3g} is below g_p/omega_p = {:.3g}; the rotating-wave short-time formulas "
                       "do not hold at this resolution",
                       smallest, *opt.min_spacing));
  }

  DerivativeReport r{DerivativeMethod::polynomial_fit, series.unit, {}, FitMetadata{}};
  for (int k = 0; k <= std::min(opt.degree, 3); ++k) {
    const auto row = detail::derivative_functional(opt.degree, k, w);
    DerivativeEstimate e{k, row.dot(fit.coeffs), std::nullopt};
    if (fit.has_covariance) e.uncertainty = std::sqrt(std::max(0.0, (row * fit.covariance * row.transpose())(0, 0)));
    r.derivatives.push_back(e);
  }
  auto& meta = *r.fit;
  meta.degree = opt.degree;
  meta.window_lo = w.lo;
  meta.window_hi = w.hi;
  meta.samples = fit.samples;
  meta.condition_number = fit.condition;
  meta.residual_rms = fit.residual_rms;
  meta.shrink_steps = shrinks;
  meta.unit = series.unit;
  if (!series.exact()) {
    meta.total_shots = 0;
    bool uniform = true;
    for (std::size_t i = 0; i < series.size(); ++i) {
      if (series.times[i] < w.lo - 1e-12 || series.times[i] > w.hi + 1e-12) continue;
      meta.total_shots += series.shots[i];
      uniform = uniform && series.shots[i] == series.shots.front();
    }
    if (uniform) meta.shots = series.shots.front();
  }
  return r;
}

/// Each value replaced by Binomial(shots, value)/shots; deterministic in `seed`.
inline TimeSeries sample_projection_noise(const TimeSeries& series, long long shots, std::uint64_t seed) {
  if (!series.exact()) throw InvalidArgument("series is already shot-sampled");
  if (shots < 1) throw InvalidArgument(fmt::format("shot count must be positive, got {}", shots));
  std::mt19937_64 rng(seed);
  TimeSeries out{series.times, {}, std::vector<long long>(series.size(), shots), series.unit};
  out.values.reserve(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double v = series.values[i];
    if (v < -1e-9 || v > 1.0 + 1e-9)
      throw InvalidArgument(fmt::format("value {} at index {} is not a probability", v, i));
    const double p = std::clamp(v, 0.0, 1.0);
    std::binomial_distribution<long long> draw(shots, p);
    out.values.push_back(static_cast<double>(draw(rng)) / static_cast<double>(shots));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Finite-difference cross-check of the exact derivatives

struct FiniteDifferenceOptions {
  double step = 0.05;  // smallest step in tau
  int levels = 3;      // Richardson levels; steps step * 2^j, j < levels
  EvolutionOptions evolution{IntegratorOptions{Method::dormand_prince, 1e-12}, false};
};

/// Derivatives 1..3 of <observable>(tau) at tau = 0 from central differences of simulated
/// values on both sides of 0 (negative times via evolution under -H), Richardson-extrapolated.
inline std::array<double, 4> finite_difference_derivatives(const Hamiltonian& h, const QState& rho0, double coupling_scale,
                                                           const Operator& observable,
                                                           const FiniteDifferenceOptions& opt = {}) {
  if (opt.levels < 1) throw InvalidArgument("Richardson extrapolation needs at least one level");
  const std::size_t points = (std::size_t{1} << opt.levels) + 1;  // multiples 0..2^levels of the step
  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i) grid[i] = static_cast<double>(i) * opt.step / coupling_scale;

  const std::array<Operator, 1> ops{observable};
  const auto fwd = evolve_recording(h, nullptr, rho0, grid, ops, TimeUnit::lab(), opt.evolution).series[0].values;
  const auto bwd =
      evolve_recording(h.negated(), nullptr, rho0, grid, ops, TimeUnit::lab(), opt.evolution).series[0].values;
  auto at = [&](int m) { return m >= 0 ? fwd[m] : bwd[-m]; };

  std::array<double, 4> out{at(0), 0.0, 0.0, 0.0};
  for (int order = 1; order <= 3; ++order) {
    std::vector<std::vector<double>> table(opt.levels);
    for (int j = 0; j < opt.levels; ++j) {
      const int m = 1 << j;  // step multiple for this level
      const double s = m * opt.step;
      double d = 0.0;
      if (order == 1) d = (at(m) - at(-m)) / (2.0 * s);
      if (order == 2) d = (at(m) - 2.0 * at(0) + at(-m)) / (s * s);
      if (order == 3) d = (at(2 * m) - 2.0 * at(m) + 2.0 * at(-m) - at(-2 * m)) / (2.0 * s * s * s);
      table[j].push_back(d);
    }
    // table[j][0] at step 2^j h; eliminate h^2, h^4, ...
    for (int lvl = 1; lvl < opt.levels; ++lvl) {
      const double f = std::pow(4.0, lvl);
      for (int j = 0; j + lvl < opt.levels; ++j)
        table[j].push_back((f * table[j][lvl - 1] - table[j + 1][lvl - 1]) / (f - 1.0));
    }
    out[order] = table[0][opt.levels - 1];
  }
  return out;
}

}  // namespace shortmeas
