#pragma once

// Tensor-product operator algebra for the probe-qubit / oscillator / system-qubit
// space. Dense complex matrices throughout; basis index of a product state is the
// mixed-radix number with the last slot varying fastest, so for the standard
// (probe, mediator, system) layout: index = ((i_p * N_cut) + n) * 2 + i_s.
//
// Qubit convention: index 0 = |g> (|1> for the system, |S> for an ion),
// index 1 = |e> (|2>, |D>). sigma^z |e> = +|e>, sigma^+ = |e><g|.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>
#include <fmt/format.h>

#include "shortmeas/error.hpp"

namespace shortmeas {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

inline constexpr cplx kI{0.0, 1.0};

enum class Slot { probe, mediator, system };

constexpr std::string_view to_string(Slot s) {
  switch (s) {
    case Slot::probe: return "probe";
    case Slot::mediator: return "mediator";
    case Slot::system: return "system";
  }
  return "?";
}

class SpaceLayout {
 public:
  struct Factor {
    Slot slot;
    int dim;
    bool operator==(const Factor&) const = default;
  };

  SpaceLayout(std::initializer_list<Factor> factors) : SpaceLayout(std::vector<Factor>(factors)) {}

  explicit SpaceLayout(std::vector<Factor> factors) : factors_(std::move(factors)) {
    if (factors_.empty()) throw InvalidArgument("layout needs at least one slot");
    for (std::size_t i = 0; i < factors_.size(); ++i) {
      const auto& f = factors_[i];
      if (f.dim < 1) throw InvalidArgument(fmt::format("slot {} has dimension {}", to_string(f.slot), f.dim));
      if (f.slot == Slot::mediator && f.dim < 2)
        throw InvalidArgument(fmt::format("mediator cutoff must be >= 2, got {}", f.dim));
      for (std::size_t j = 0; j < i; ++j)
        if (factors_[j].slot == f.slot)
          throw InvalidArgument(fmt::format("slot {} appears twice in layout", to_string(f.slot)));
    }
  }

  static SpaceLayout tripartite(int cutoff) {
    return {{Slot::probe, 2}, {Slot::mediator, cutoff}, {Slot::system, 2}};
  }
  static SpaceLayout qubit_pair() { return {{Slot::probe, 2}, {Slot::system, 2}}; }
  static SpaceLayout qubit_oscillator(int cutoff) { return {{Slot::probe, 2}, {Slot::mediator, cutoff}}; }
  static SpaceLayout single(Slot slot, int dim) { return {{slot, dim}}; }

  std::size_t size() const { return factors_.size(); }
  const std::vector<Factor>& factors() const { return factors_; }
  int dim(std::size_t index) const { return factors_.at(index).dim; }
  int dim(Slot slot) const { return factors_[index_of(slot)].dim; }

  int total_dim() const {
    return std::accumulate(factors_.begin(), factors_.end(), 1, [](int acc, const Factor& f) { return acc * f.dim; });
  }

  bool contains(Slot slot) const {
    return std::any_of(factors_.begin(), factors_.end(), [&](const Factor& f) { return f.slot == slot; });
  }

  std::size_t index_of(Slot slot) const {
    for (std::size_t i = 0; i < factors_.size(); ++i)
      if (factors_[i].slot == slot) return i;
    throw InvalidArgument(fmt::format("layout {} has no {} slot", describe(), to_string(slot)));
  }

  /// Product of the dimensions of the slots after `index` (the index stride).
  int stride(std::size_t index) const {
    int s = 1;
    for (std::size_t i = index + 1; i < factors_.size(); ++i) s *= factors_[i].dim;
    return s;
  }

  std::string describe() const {
    std::string out = "(";
    for (std::size_t i = 0; i < factors_.size(); ++i) {
      if (i) out += ", ";
      out += fmt::format("{} {}", to_string(factors_[i].slot), factors_[i].dim);
    }
    return out + ")";
  }

  bool operator==(const SpaceLayout&) const = default;

 private:
  std::vector<Factor> factors_;
};

inline void require_same_layout(const SpaceLayout& a, const SpaceLayout& b, std::string_view what) {
  if (!(a == b)) throw InvalidArgument(fmt::format("{}: layout mismatch {} vs {}", what, a.describe(), b.describe()));
}

class Operator {
 public:
  Operator(SpaceLayout layout, Matrix m) : layout_(std::move(layout)), m_(std::move(m)) {
    const auto d = layout_.total_dim();
    if (m_.rows() != d || m_.cols() != d)
      throw InvalidArgument(fmt::format("operator is {}x{} but layout {} has dimension {}", m_.rows(), m_.cols(),
                                        layout_.describe(), d));
  }

  static Operator identity(const SpaceLayout& layout) {
    const auto d = layout.total_dim();
    return {layout, Matrix::Identity(d, d)};
  }
  static Operator zero(const SpaceLayout& layout) {
    const auto d = layout.total_dim();
    return {layout, Matrix::Zero(d, d)};
  }

  const SpaceLayout& layout() const { return layout_; }
  const Matrix& matrix() const { return m_; }
  int dim() const { return static_cast<int>(m_.rows()); }

  Operator adjoint() const { return {layout_, m_.adjoint()}; }

  bool is_hermitian(double tol = 1e-12) const { return (m_ - m_.adjoint()).cwiseAbs().maxCoeff() <= tol; }

  Operator& operator+=(const Operator& o) {
    require_same_layout(layout_, o.layout_, "operator sum");
    m_ += o.m_;
    return *this;
  }
  Operator& operator-=(const Operator& o) {
    require_same_layout(layout_, o.layout_, "operator difference");
    m_ -= o.m_;
    return *this;
  }
  Operator& operator*=(cplx s) {
    m_ *= s;
    return *this;
  }

  friend Operator operator+(Operator a, const Operator& b) { return a += b; }
  friend Operator operator-(Operator a, const Operator& b) { return a -= b; }
  friend Operator operator*(Operator a, cplx s) { return a *= s; }
  friend Operator operator*(cplx s, Operator a) { return a *= s; }
  friend Operator operator*(double s, Operator a) { return a *= cplx(s); }
  friend Operator operator*(const Operator& a, const Operator& b) {
    require_same_layout(a.layout_, b.layout_, "operator product");
    return {a.layout_, a.m_ * b.m_};
  }

 private:
  SpaceLayout layout_;
  Matrix m_;
};

inline Operator commutator(const Operator& a, const Operator& b) { return a * b - b * a; }

/// Truncated bosonic annihilation operator, a|n> = sqrt(n)|n-1>.
inline Operator annihilation(int cutoff) {
  if (cutoff < 2) throw InvalidArgument(fmt::format("Fock cutoff must be >= 2, got {}", cutoff));
  Matrix a = Matrix::Zero(cutoff, cutoff);
  for (int n = 1; n < cutoff; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
  return {SpaceLayout::single(Slot::mediator, cutoff), std::move(a)};
}

inline Operator creation(int cutoff) { return annihilation(cutoff).adjoint(); }

inline Operator number_operator(int cutoff) {
  Matrix n = Matrix::Zero(cutoff, cutoff);
  for (int k = 0; k < cutoff; ++k) n(k, k) = k;
  return {SpaceLayout::single(Slot::mediator, cutoff), std::move(n)};
}

/// X_phi = (a^dag e^{i phi} + a e^{-i phi}) / 2.
inline Operator quadrature(int cutoff, double phi) {
  const auto a = annihilation(cutoff);
  const cplx ph = std::polar(1.0, phi);
  return {a.layout(), 0.5 * (a.matrix().adjoint() * ph + a.matrix() * std::conj(ph))};
}

struct QubitOperators {
  Operator raise;   // sigma^+ = |e><g|
  Operator lower;   // sigma^- = |g><e|
  Operator z;       // |e><e| - |g><g|
  Operator excited; // |e><e|
  Operator ground;  // |g><g|
};

inline QubitOperators qubit_operators(Slot slot = Slot::probe) {
  const auto layout = SpaceLayout::single(slot, 2);
  Matrix up = Matrix::Zero(2, 2);
  up(1, 0) = 1.0;
  Matrix z = Matrix::Zero(2, 2);
  z(0, 0) = -1.0;
  z(1, 1) = 1.0;
  Matrix e = Matrix::Zero(2, 2);
  e(1, 1) = 1.0;
  Matrix g = Matrix::Zero(2, 2);
  g(0, 0) = 1.0;
  return {Operator(layout, up), Operator(layout, up.adjoint()), Operator(layout, z), Operator(layout, e),
          Operator(layout, g)};
}

/// Tensors `local` with identities on every other slot of `layout`. Only the
/// dimension of `local` is checked; its own slot label is ignored.
inline Operator embed(const Operator& local, Slot slot, const SpaceLayout& layout) {
  const auto idx = layout.index_of(slot);
  if (local.dim() != layout.dim(idx))
    throw InvalidArgument(fmt::format("cannot embed a {}-dimensional operator in {} slot of dimension {}",
                                      local.dim(), to_string(slot), layout.dim(idx)));
  Matrix out = Matrix::Identity(1, 1);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    Matrix next = (i == idx) ? Matrix(Eigen::kroneckerProduct(out, local.matrix()))
                             : Matrix(Eigen::kroneckerProduct(out, Matrix::Identity(layout.dim(i), layout.dim(i))));
    out = std::move(next);
  }
  return {layout, std::move(out)};
}

class QState {
 public:
  enum class Kind { pure, mixed };

  static QState pure(SpaceLayout layout, Vector psi, double tol = 1e-10) {
    if (psi.size() != layout.total_dim())
      throw InvalidArgument(fmt::format("state vector has {} entries, layout {} needs {}", psi.size(),
                                        layout.describe(), layout.total_dim()));
    const double norm = psi.norm();
    if (std::abs(norm - 1.0) > tol) throw InvalidArgument(fmt::format("pure state norm {} is not 1", norm));
    return QState(std::move(layout), Kind::pure, std::move(psi));
  }

  /// Normalizes before validating; rejects the zero vector.
  static QState normalized(SpaceLayout layout, Vector psi) {
    const double norm = psi.norm();
    if (norm == 0.0) throw InvalidArgument("cannot normalize the zero vector");
    return pure(std::move(layout), psi / norm);
  }

  static QState mixed(SpaceLayout layout, Matrix rho, double tol = 1e-10) {
    const auto d = layout.total_dim();
    if (rho.rows() != d || rho.cols() != d)
      throw InvalidArgument(fmt::format("density matrix is {}x{}, layout {} needs {}", rho.rows(), rho.cols(),
                                        layout.describe(), d));
    if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > tol) throw InvalidArgument("density matrix is not Hermitian");
    const cplx tr = rho.trace();
    if (std::abs(tr - 1.0) > tol) throw InvalidArgument(fmt::format("density matrix trace {} is not 1", tr.real()));
    const Matrix herm = 0.5 * (rho + rho.adjoint());
    const double lo = Eigen::SelfAdjointEigenSolver<Matrix>(herm, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    if (lo < -1e-8) throw InvalidArgument(fmt::format("density matrix has eigenvalue {}", lo));
    return QState(std::move(layout), Kind::mixed, std::move(rho));
  }

  const SpaceLayout& layout() const { return layout_; }
  Kind kind() const { return kind_; }
  bool is_pure() const { return kind_ == Kind::pure; }
  int dim() const { return layout_.total_dim(); }

  const Vector& vector() const {
    if (kind_ != Kind::pure) throw InvalidArgument("mixed state has no state vector");
    return std::get<Vector>(data_);
  }

  Matrix density() const {
    if (kind_ == Kind::pure) {
      const auto& v = std::get<Vector>(data_);
      return v * v.adjoint();
    }
    return std::get<Matrix>(data_);
  }

  QState as_mixed() const { return kind_ == Kind::mixed ? *this : QState(layout_, Kind::mixed, density()); }

 private:
  QState(SpaceLayout layout, Kind kind, std::variant<Vector, Matrix> data)
      : layout_(std::move(layout)), kind_(kind), data_(std::move(data)) {}

  SpaceLayout layout_;
  Kind kind_;
  std::variant<Vector, Matrix> data_;
};

/// Tensor product in argument order; pure if every factor is pure.
inline QState tensor(std::span<const QState> parts) {
  if (parts.empty()) throw InvalidArgument("tensor product of no states");
  std::vector<SpaceLayout::Factor> factors;
  bool all_pure = true;
  for (const auto& p : parts) {
    for (const auto& f : p.layout().factors()) factors.push_back(f);
    all_pure = all_pure && p.is_pure();
  }
  SpaceLayout layout(std::move(factors));
  if (all_pure) {
    Vector v = Vector::Ones(1);
    for (const auto& p : parts) v = Eigen::kroneckerProduct(v, p.vector()).eval();
    return QState::normalized(std::move(layout), std::move(v));
  }
  Matrix m = Matrix::Ones(1, 1);
  for (const auto& p : parts) m = Eigen::kroneckerProduct(m, p.density()).eval();
  return QState::mixed(std::move(layout), std::move(m), 1e-9);
}

inline QState tensor(std::initializer_list<QState> parts) {
  std::vector<QState> v(parts);
  return tensor(std::span<const QState>(v));
}

inline QState qubit_state(cplx ground_amp, cplx excited_amp, Slot slot) {
  Vector v(2);
  v << ground_amp, excited_amp;
  return QState::pure(SpaceLayout::single(slot, 2), std::move(v), 1e-12);
}

inline QState fock_state(int n, int cutoff) {
  if (n < 0 || n >= cutoff) throw InvalidArgument(fmt::format("Fock state |{}> outside cutoff {}", n, cutoff));
  Vector v = Vector::Zero(cutoff);
  v(n) = 1.0;
  return QState::pure(SpaceLayout::single(Slot::mediator, cutoff), std::move(v));
}

/// Geometric tail mass sum_{n >= cutoff} P_n of a thermal distribution.
inline double thermal_tail_mass(double nbar, int cutoff) {
  if (nbar == 0.0) return 0.0;
  return std::pow(nbar / (1.0 + nbar), cutoff);
}

/// Smallest cutoff (>= 2) whose thermal tail mass is below `tail`.
inline int minimum_thermal_cutoff(double nbar, double tail = 1e-8) {
  if (nbar < 0.0) throw InvalidArgument("mean occupation must be nonnegative");
  if (nbar == 0.0) return 2;
  const double r = nbar / (1.0 + nbar);
  return std::max(2, static_cast<int>(std::floor(std::log(tail) / std::log(r))) + 1);
}

inline QState thermal_state(double nbar, int cutoff) {
  if (nbar < 0.0) throw InvalidArgument(fmt::format("mean occupation {} is negative", nbar));
  if (cutoff < 2) throw InvalidArgument(fmt::format("Fock cutoff must be >= 2, got {}", cutoff));
  const double tail = thermal_tail_mass(nbar, cutoff);
  if (tail >= 1e-8)
    throw CutoffTooSmall(fmt::format("thermal state nbar={} loses tail mass {:.3g} at cutoff {} (need >= {})", nbar,
                                     tail, cutoff, minimum_thermal_cutoff(nbar)));
  Eigen::VectorXd p(cutoff);
  const double r = nbar / (1.0 + nbar);
  p(0) = 1.0 / (1.0 + nbar);
  for (int n = 1; n < cutoff; ++n) p(n) = p(n - 1) * r;
  p /= p.sum();
  Matrix rho = Matrix::Zero(cutoff, cutoff);
  rho.diagonal() = p.cast<cplx>();
  return QState::mixed(SpaceLayout::single(Slot::mediator, cutoff), std::move(rho));
}

/// Normalized truncation of exp(alpha a^dag)|0>, a coherent state up to the cutoff.
inline QState coherent_state(cplx alpha, int cutoff) {
  if (cutoff < 2) throw InvalidArgument(fmt::format("Fock cutoff must be >= 2, got {}", cutoff));
  Vector v(cutoff);
  v(0) = 1.0;
  for (int n = 1; n < cutoff; ++n) v(n) = v(n - 1) * alpha / std::sqrt(static_cast<double>(n));
  return QState::normalized(SpaceLayout::single(Slot::mediator, cutoff), std::move(v));
}

inline cplx expectation(const QState& state, const Operator& op) {
  require_same_layout(state.layout(), op.layout(), "expectation");
  if (state.is_pure()) {
    const auto& v = state.vector();
    return v.dot(op.matrix() * v);
  }
  return (state.density() * op.matrix()).trace();
}

/// Reduced state on the slots in `keep` (kept in layout order).
inline QState partial_trace(const QState& state, std::span<const Slot> keep) {
  if (keep.empty()) throw InvalidArgument("partial trace must keep at least one slot");
  const auto& layout = state.layout();
  std::vector<bool> kept(layout.size(), false);
  for (Slot s : keep) kept[layout.index_of(s)] = true;

  std::vector<SpaceLayout::Factor> kept_factors;
  for (std::size_t i = 0; i < layout.size(); ++i)
    if (kept[i]) kept_factors.push_back(layout.factors()[i]);
  SpaceLayout reduced(std::move(kept_factors));

  const int d = layout.total_dim();
  std::vector<int> keep_index(d), trace_index(d);
  for (int full = 0; full < d; ++full) {
    int rem = full, k = 0, t = 0, kstride = 1, tstride = 1;
    for (std::size_t i = layout.size(); i-- > 0;) {
      const int digit = rem % layout.dim(i);
      rem /= layout.dim(i);
      if (kept[i]) {
        k += digit * kstride;
        kstride *= layout.dim(i);
      } else {
        t += digit * tstride;
        tstride *= layout.dim(i);
      }
    }
    keep_index[full] = k;
    trace_index[full] = t;
  }

  const Matrix rho = state.density();
  const int dk = reduced.total_dim();
  Matrix out = Matrix::Zero(dk, dk);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if (trace_index[i] == trace_index[j]) out(keep_index[i], keep_index[j]) += rho(i, j);
  out = 0.5 * (out + out.adjoint()).eval();
  return QState::mixed(std::move(reduced), std::move(out), 1e-9);
}

inline QState partial_trace(const QState& state, std::initializer_list<Slot> keep) {
  return partial_trace(state, std::span<const Slot>(keep.begin(), keep.size()));
}

}  // namespace shortmeas
