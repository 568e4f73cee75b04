#pragma once

// Unitary and Lindblad time evolution with observables recorded on a time grid.

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Sparse>

#include "shortmeas/hilbert.hpp"
#include "shortmeas/integrator.hpp"
#include "shortmeas/models.hpp"

namespace shortmeas {

enum class TimeUnitKind { lab, resonant, dispersive, collective };

/// Dimensionless time tau = scale * t.
struct TimeUnit {
  TimeUnitKind kind = TimeUnitKind::lab;
  double scale = 1.0;

  static TimeUnit lab() { return {}; }
  static TimeUnit resonant(double g_p) { return {TimeUnitKind::resonant, g_p}; }
  static TimeUnit dispersive(double g_p, double delta) { return {TimeUnitKind::dispersive, g_p * g_p / delta}; }
  static TimeUnit collective(double rate) { return {TimeUnitKind::collective, rate}; }

  std::string_view name() const {
    switch (kind) {
      case TimeUnitKind::lab: return "t";
      case TimeUnitKind::resonant: return "tau";
      case TimeUnitKind::dispersive: return "tau_eff";
      case TimeUnitKind::collective: return "tau_gamma";
    }
    return "?";
  }

  bool operator==(const TimeUnit&) const = default;
};

struct TimeSeries {
  std::vector<double> times;
  std::vector<double> values;
  std::vector<long long> shots;  // empty for exact expectation values
  TimeUnit unit;

  std::size_t size() const { return times.size(); }
  bool exact() const { return shots.empty(); }

  /// Probability-valued series: within [-eps, 1 + eps] when exact, [0, 1] when sampled.
  void validate_probability(double eps = 1e-9) const {
    const double lo = exact() ? -eps : 0.0;
    const double hi = exact() ? 1.0 + eps : 1.0;
    for (std::size_t i = 0; i < values.size(); ++i)
      if (values[i] < lo || values[i] > hi)
        throw InvalidArgument(fmt::format("series value {} at index {} is not a probability", values[i], i));
  }
};

/// Pointwise a - b; both series must share unit and time grid.
inline TimeSeries difference(const TimeSeries& a, const TimeSeries& b) {
  if (!(a.unit == b.unit))
    throw InvalidArgument(fmt::format("cannot combine series in {} with series in {}", a.unit.name(), b.unit.name()));
  if (a.times != b.times) throw InvalidArgument("cannot combine series on different time grids");
  TimeSeries out{a.times, a.values, {}, a.unit};
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] -= b.values[i];
  return out;
}

/// Static or time-dependent Hamiltonian on a fixed layout.
class Hamiltonian {
 public:
  Hamiltonian(Operator h) : layout_(h.layout()), fixed_(h.matrix()) {}  // NOLINT: implicit by intent
  Hamiltonian(SpaceLayout layout, std::function<Matrix(double)> fn) : layout_(std::move(layout)), fn_(std::move(fn)) {}

  static Hamiltonian zero(const SpaceLayout& layout) { return Hamiltonian(Operator::zero(layout)); }

  const SpaceLayout& layout() const { return layout_; }
  bool is_static() const { return fixed_.has_value(); }
  const Matrix& static_matrix() const { return *fixed_; }

  Matrix at(double t) const { return fixed_ ? *fixed_ : fn_(t); }

  /// -H. Unitary evolution under -H for time t gives the state at time -t.
  Hamiltonian negated() const {
    if (fixed_) return Hamiltonian(Operator(layout_, -*fixed_));
    auto fn = fn_;
    return Hamiltonian(layout_, [fn](double t) -> Matrix { return -fn(-t); });
  }

  /// Max absolute row sum at t = 0, an upper bound on the spectral radius.
  double frequency_bound() const { return at(0.0).cwiseAbs().rowwise().sum().maxCoeff(); }

  /// Midpoint of the Gershgorin interval of the spectrum at t = 0. Subtracting it only
  /// changes a global phase but shrinks the rates the integrator has to resolve.
  double spectral_center() const {
    const Matrix m = at(0.0);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const double r = m.row(i).cwiseAbs().sum() - std::abs(m(i, i));
      lo = std::min(lo, m(i, i).real() - r);
      hi = std::max(hi, m(i, i).real() + r);
    }
    return 0.5 * (lo + hi);
  }

 private:
  SpaceLayout layout_;
  std::optional<Matrix> fixed_;
  std::function<Matrix(double)> fn_;
};

namespace detail {

/// Left multiplication by a fixed matrix. Operators of the models here have a few
/// nonzeros per row, so low-fill matrices are multiplied in compressed form.
class Multiplier {
 public:
  explicit Multiplier(const Matrix& m, double max_fill = 0.15) {
    const auto nnz = (m.array() != cplx(0.0)).count();
    sparse_ = static_cast<double>(nnz) < max_fill * static_cast<double>(m.size());
    if (sparse_)
      sp_ = m.sparseView();
    else
      dense_ = m;
  }

  void apply(const Matrix& y, Matrix& out) const {
    if (sparse_)
      out.noalias() = sp_ * y;
    else
      out.noalias() = dense_ * y;
  }

  Matrix operator*(const Matrix& y) const {
    Matrix out;
    apply(y, out);
    return out;
  }

 private:
  bool sparse_ = false;
  Matrix dense_;
  Eigen::SparseMatrix<cplx> sp_;
};

}  // namespace detail

/// State handed to observers. Pure: one column. Ensemble: columns psi_k with
/// weights w_k, rho = sum_k w_k psi_k psi_k^dag. Density: the matrix itself.
class StateView {
 public:
  enum class Form { pure, ensemble, density };

  StateView(const SpaceLayout& layout, Form form, const Matrix& data, const Eigen::VectorXd* weights)
      : layout_(&layout), form_(form), data_(&data), weights_(weights) {}

  Form form() const { return form_; }
  const SpaceLayout& layout() const { return *layout_; }
  const Matrix& data() const { return *data_; }

  cplx expectation(const Matrix& op) const {
    switch (form_) {
      case Form::pure: return data_->col(0).dot(op * data_->col(0));
      case Form::ensemble: {
        const Matrix opv = op * *data_;
        cplx acc = 0.0;
        for (Eigen::Index k = 0; k < data_->cols(); ++k) acc += (*weights_)(k) * data_->col(k).dot(opv.col(k));
        return acc;
      }
      case Form::density: return (*data_ * op).trace();
    }
    return 0.0;
  }

  /// <O> given the product O * data() (O * rho for the density form).
  cplx expectation_from_product(const Matrix& op_data) const {
    switch (form_) {
      case Form::pure: return data_->col(0).dot(op_data.col(0));
      case Form::ensemble: {
        cplx acc = 0.0;
        for (Eigen::Index k = 0; k < data_->cols(); ++k) acc += (*weights_)(k) * data_->col(k).dot(op_data.col(k));
        return acc;
      }
      case Form::density: return op_data.trace();
    }
    return 0.0;
  }

  double trace() const {
    switch (form_) {
      case Form::pure: return data_->col(0).squaredNorm();
      case Form::ensemble: return (data_->colwise().squaredNorm().transpose().array() * weights_->array()).sum();
      case Form::density: return data_->trace().real();
    }
    return 0.0;
  }

  /// Smallest eigenvalue of rho. For an ensemble the nonzero spectrum is that of
  /// the weighted Gram matrix W^{1/2} Psi^dag Psi W^{1/2}.
  double min_eigenvalue() const {
    switch (form_) {
      case Form::pure: return data_->rows() > 1 ? 0.0 : data_->col(0).squaredNorm();
      case Form::ensemble: {
        const Eigen::VectorXcd sw = weights_->cwiseSqrt().cast<cplx>();
        const Matrix gram = sw.asDiagonal() * (data_->adjoint() * *data_) * sw.asDiagonal();
        const double lo = Eigen::SelfAdjointEigenSolver<Matrix>(gram, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
        return data_->cols() < data_->rows() ? std::min(lo, 0.0) : lo;
      }
      case Form::density: {
        const Matrix herm = 0.5 * (*data_ + data_->adjoint());
        return Eigen::SelfAdjointEigenSolver<Matrix>(herm, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
      }
    }
    return 0.0;
  }

  Matrix density() const {
    switch (form_) {
      case Form::pure: return data_->col(0) * data_->col(0).adjoint();
      case Form::ensemble: return *data_ * weights_->cast<cplx>().asDiagonal() * data_->adjoint();
      case Form::density: return *data_;
    }
    return {};
  }

  /// Materializes a validated QState; pure form stays pure.
  QState to_state() const {
    if (form_ == Form::pure) return QState::pure(*layout_, data_->col(0), 1e-6);
    Matrix rho = density();
    rho = 0.5 * (rho + rho.adjoint()).eval();
    return QState::mixed(*layout_, std::move(rho), 1e-6);
  }

 private:
  const SpaceLayout* layout_;
  Form form_;
  const Matrix* data_;
  const Eigen::VectorXd* weights_;
};

struct PhysicalityReport {
  double max_trace_deviation = 0.0;  // |Tr rho - 1| (pure: |norm^2 - 1|)
  double min_eigenvalue = std::numeric_limits<double>::infinity();
  double max_purity_drift = 0.0;     // unitary runs only
  std::size_t points = 0;

  bool ok(double trace_tol = 1e-8, double eig_tol = -1e-7) const {
    return max_trace_deviation < trace_tol && min_eigenvalue > eig_tol;
  }

  void merge(const PhysicalityReport& o) {
    max_trace_deviation = std::max(max_trace_deviation, o.max_trace_deviation);
    min_eigenvalue = std::min(min_eigenvalue, o.min_eigenvalue);
    max_purity_drift = std::max(max_purity_drift, o.max_purity_drift);
    points += o.points;
  }
};

struct EvolutionOptions {
  IntegratorOptions integrator;
  bool check_physicality = true;
  double ensemble_weight_floor = 1e-14;
};

struct Trajectory {
  std::vector<double> times;  // lab time t
  std::vector<QState> states;
  IntegratorStats integrator;
  PhysicalityReport physicality;
};

namespace detail {

struct Prepared {
  StateView::Form form;
  Matrix y0;
  Eigen::VectorXd weights;
  double initial_purity = 1.0;
};

inline Prepared prepare_state(const QState& rho0, bool dissipative, double weight_floor) {
  if (dissipative) return {StateView::Form::density, rho0.density(), {}, 1.0};
  if (rho0.is_pure()) return {StateView::Form::pure, Matrix(rho0.vector()), {}, 1.0};
  const Matrix rho = rho0.density();
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (rho + rho.adjoint()));
  std::vector<Eigen::Index> keep;
  for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k)
    if (es.eigenvalues()(k) > weight_floor) keep.push_back(k);
  Prepared p{StateView::Form::ensemble, Matrix(rho.rows(), static_cast<Eigen::Index>(keep.size())),
             Eigen::VectorXd(static_cast<Eigen::Index>(keep.size())), 1.0};
  for (std::size_t c = 0; c < keep.size(); ++c) {
    p.y0.col(static_cast<Eigen::Index>(c)) = es.eigenvectors().col(keep[c]);
    p.weights(static_cast<Eigen::Index>(c)) = es.eigenvalues()(keep[c]);
  }
  p.weights /= p.weights.sum();
  p.initial_purity = p.weights.squaredNorm();
  return p;
}

}  // namespace detail

/// Evolves rho0 under H (and the dissipator, when given and nonempty) and calls
/// observer(index, t, StateView) at every grid time. Without dissipation a pure
/// state follows the Schrodinger equation and a mixed state is propagated as the
/// ensemble of its eigenvectors; otherwise the full Lindblad equation is solved.
template <class Observer>
PhysicalityReport propagate(const Hamiltonian& h, const LindbladGenerator* generator, const QState& rho0,
                            std::span<const double> grid, Observer&& observer, const EvolutionOptions& opt = {},
                            IntegratorStats* stats_out = nullptr) {
  require_same_layout(h.layout(), rho0.layout(), "evolve: Hamiltonian vs state");
  const bool dissipative = generator != nullptr && !generator->empty();
  if (dissipative) require_same_layout(generator->layout(), rho0.layout(), "evolve: generator vs state");

  auto prep = detail::prepare_state(rho0, dissipative, opt.ensemble_weight_floor);
  const auto& layout = rho0.layout();
  PhysicalityReport report;

  auto watch = [&](std::size_t i, double t, const Matrix& y) {
    StateView view(layout, prep.form, y, prep.form == StateView::Form::ensemble ? &prep.weights : nullptr);
    if (opt.check_physicality) {
      report.max_trace_deviation = std::max(report.max_trace_deviation, std::abs(view.trace() - 1.0));
      if (prep.form != StateView::Form::pure) report.min_eigenvalue = std::min(report.min_eigenvalue, view.min_eigenvalue());
      if (prep.form == StateView::Form::ensemble) {
        const Eigen::VectorXcd sw = prep.weights.cwiseSqrt().cast<cplx>();
        const Matrix gram = sw.asDiagonal() * (y.adjoint() * y) * sw.asDiagonal();
        report.max_purity_drift = std::max(report.max_purity_drift, std::abs(gram.squaredNorm() - prep.initial_purity));
      } else if (prep.form == StateView::Form::pure) {
        report.max_purity_drift = std::max(report.max_purity_drift, std::abs(std::pow(y.col(0).squaredNorm(), 2) - 1.0));
      }
      ++report.points;
    }
    observer(i, t, static_cast<const StateView&>(view));
  };

  IntegratorStats stats;
  if (!dissipative) {
    if (h.is_static()) {
      const Matrix shifted =
          h.static_matrix() - Matrix::Identity(layout.total_dim(), layout.total_dim()) * h.spectral_center();
      const double freq = shifted.cwiseAbs().rowwise().sum().maxCoeff();
      const detail::Multiplier hm(-kI * shifted);
      auto rhs = [&hm](double, const Matrix& y, Matrix& dy) { hm.apply(y, dy); };
      stats = integrate<Matrix>(rhs, prep.y0, grid, freq, opt.integrator, watch);
    } else {
      const double freq = h.frequency_bound();
      auto rhs = [&h](double t, const Matrix& y, Matrix& dy) {
        dy.noalias() = h.at(t) * y;
        dy *= -kI;
      };
      stats = integrate<Matrix>(rhs, prep.y0, grid, freq, opt.integrator, watch);
    }
  } else {
    const Matrix decay = generator->decay_operator();
    const double freq = h.frequency_bound() + decay.cwiseAbs().rowwise().sum().maxCoeff();
    std::vector<detail::Multiplier> jumps;
    std::vector<double> rates;
    for (const auto& j : generator->jumps())
      if (j.rate != 0.0) {
        jumps.emplace_back(j.op.matrix());
        rates.push_back(j.rate);
      }
    // drho/dt = A + A^dag + sum_k r_k J rho J^dag with A = -i (H - i K/2) rho; rho stays
    // Hermitian, so J rho J^dag = J (J rho)^dag
    auto add_jumps = [&](const Matrix& rho, Matrix& drho) {
      Matrix jr, jrj;
      for (std::size_t k = 0; k < jumps.size(); ++k) {
        jumps[k].apply(rho, jr);
        jumps[k].apply(jr.adjoint(), jrj);
        drho += rates[k] * jrj;
      }
    };
    if (h.is_static()) {
      const detail::Multiplier a_op(-kI * (h.static_matrix() - 0.5 * kI * decay));
      auto rhs = [&](double, const Matrix& y, Matrix& dy) {
        Matrix a;
        a_op.apply(y, a);
        dy = a + a.adjoint();
        add_jumps(y, dy);
      };
      stats = integrate<Matrix>(rhs, prep.y0, grid, freq, opt.integrator, watch);
    } else {
      auto rhs = [&](double t, const Matrix& y, Matrix& dy) {
        const Matrix a = -kI * ((h.at(t) - 0.5 * kI * decay) * y);
        dy = a + a.adjoint();
        add_jumps(y, dy);
      };
      stats = integrate<Matrix>(rhs, prep.y0, grid, freq, opt.integrator, watch);
    }
  }
  if (stats_out) *stats_out = stats;
  return report;
}

/// Stores the state at every `store_every`-th grid point (the last point is always kept).
inline Trajectory evolve(const Hamiltonian& h, const LindbladGenerator* generator, const QState& rho0,
                         std::span<const double> grid, const EvolutionOptions& opt = {}, std::size_t store_every = 1) {
  Trajectory traj;
  store_every = std::max<std::size_t>(1, store_every);
  auto store = [&](std::size_t i, double t, const StateView& v) {
    if (i % store_every == 0 || i + 1 == grid.size()) {
      traj.times.push_back(t);
      traj.states.push_back(v.to_state());
    }
  };
  traj.physicality = propagate(h, generator, rho0, grid, store, opt, &traj.integrator);
  return traj;
}

inline Trajectory evolve(const Hamiltonian& h, const std::optional<LindbladGenerator>& generator, const QState& rho0,
                         std::span<const double> grid, const EvolutionOptions& opt = {}, std::size_t store_every = 1) {
  return evolve(h, generator ? &*generator : nullptr, rho0, grid, opt, store_every);
}

namespace detail {

inline double real_expectation(cplx value, double tol = 1e-10) {
  if (std::abs(value.imag()) > tol * std::max(1.0, std::abs(value.real())))
    throw IntegratorFailure(fmt::format("expectation of a Hermitian observable has imaginary part {:.3g}", value.imag()));
  return value.real();
}

}  // namespace detail

/// Expectation of a Hermitian observable along a stored trajectory.
inline TimeSeries record(const Trajectory& traj, const Operator& op, TimeUnit unit) {
  if (!op.is_hermitian()) throw InvalidArgument("record: observable is not Hermitian");
  TimeSeries out;
  out.unit = unit;
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    out.times.push_back(unit.scale * traj.times[i]);
    out.values.push_back(detail::real_expectation(expectation(traj.states[i], op)));
  }
  return out;
}

struct Recording {
  std::vector<TimeSeries> series;  // one per observable, in argument order
  IntegratorStats integrator;
  PhysicalityReport physicality;
};

/// Streams Hermitian observables along the evolution without storing states.
inline Recording evolve_recording(const Hamiltonian& h, const LindbladGenerator* generator, const QState& rho0,
                                  std::span<const double> grid, std::span<const Operator> observables, TimeUnit unit,
                                  const EvolutionOptions& opt = {}) {
  Recording rec;
  for (const auto& op : observables) {
    require_same_layout(op.layout(), rho0.layout(), "evolve_recording: observable vs state");
    if (!op.is_hermitian()) throw InvalidArgument("evolve_recording: observable is not Hermitian");
    TimeSeries s;
    s.unit = unit;
    s.times.reserve(grid.size());
    s.values.reserve(grid.size());
    rec.series.push_back(std::move(s));
  }
  std::vector<detail::Multiplier> ops;
  for (const auto& op : observables) ops.emplace_back(op.matrix());
  Matrix product;
  auto observe = [&](std::size_t, double t, const StateView& v) {
    for (std::size_t k = 0; k < ops.size(); ++k) {
      ops[k].apply(v.data(), product);
      rec.series[k].times.push_back(unit.scale * t);
      rec.series[k].values.push_back(detail::real_expectation(v.expectation_from_product(product)));
    }
  };
  rec.physicality = propagate(h, generator, rho0, grid, observe, opt, &rec.integrator);
  return rec;
}

/// Lab-time grid of `samples` points covering tau in [0, tau_max] of the given unit.
inline std::vector<double> uniform_grid(double tau_max, std::size_t samples, TimeUnit unit = TimeUnit::lab()) {
  if (samples < 2) throw InvalidArgument("grid needs at least two samples");
  if (!(tau_max > 0.0)) throw InvalidArgument("grid length must be positive");
  std::vector<double> g(samples);
  for (std::size_t i = 0; i < samples; ++i)
    g[i] = tau_max * static_cast<double>(i) / static_cast<double>(samples - 1) / unit.scale;
  return g;
}

}  // namespace shortmeas
