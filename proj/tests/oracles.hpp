#pragma once

// Independent reference helpers for the tests. Nothing here calls the library's
// builders, so agreement with them is a real check.

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

inline Mat kron(const Mat& a, const Mat& b) {
  Mat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline Vec kron(const Vec& a, const Vec& b) {
  Vec out(a.size() * b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a(i) * b;
  return out;
}

inline Vec basis(int dim, int k) {
  Vec v = Vec::Zero(dim);
  v(k) = 1.0;
  return v;
}

/// <m|a|n> = sqrt(n) delta_{m,n-1}, written out element by element.
inline Mat lowering(int n) {
  Mat a = Mat::Zero(n, n);
  for (int k = 1; k < n; ++k) a(k - 1, k) = std::sqrt(double(k));
  return a;
}

inline Mat sigma_plus() {  // |e><g| with g = index 0
  Mat s = Mat::Zero(2, 2);
  s(1, 0) = 1.0;
  return s;
}

inline Mat sigma_z() {
  Mat s = Mat::Zero(2, 2);
  s(0, 0) = -1.0;
  s(1, 1) = 1.0;
  return s;
}

/// Reference tripartite Hamiltonian built from explicit Kronecker products.
inline Mat tripartite(double wp, double wa, double ws, double gp, double gs, int n) {
  const Mat i2 = Mat::Identity(2, 2), in = Mat::Identity(n, n);
  const Mat a = lowering(n), sp = sigma_plus(), sz = sigma_z();
  Mat h = 0.5 * wp * kron(kron(sz, in), i2) + wa * kron(kron(i2, Mat(a.adjoint() * a)), i2) +
          0.5 * ws * kron(kron(i2, in), sz);
  const Mat cp = kron(kron(sp, a), i2);
  const Mat cs = kron(kron(i2, a), sp);
  h += gp * (cp + Mat(cp.adjoint())) + gs * (cs + Mat(cs.adjoint()));
  return h;
}

inline Mat random_density(int dim, std::mt19937_64& rng, int rank = 0) {
  std::normal_distribution<double> n;
  const int r = rank > 0 ? rank : dim;
  Mat g(dim, r);
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = cplx(n(rng), n(rng));
  Mat rho = g * g.adjoint();
  return rho / rho.trace().real();
}

inline Vec random_vector(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Vec v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v(i) = cplx(n(rng), n(rng));
  return v / v.norm();
}

inline Mat random_hermitian(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Mat g(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i)
    for (Eigen::Index j = 0; j < dim; ++j) g(i, j) = cplx(n(rng), n(rng));
  return 0.5 * (g + g.adjoint());
}

/// Geometric thermal weights, renormalized on the first n levels.
inline std::vector<double> thermal_weights(double nbar, int n) {
  std::vector<double> p(n);
  double sum = 0.0;
  for (int k = 0; k < n; ++k) sum += p[k] = std::pow(nbar, k) / std::pow(1.0 + nbar, k + 1);
  for (double& x : p) x /= sum;
  return p;
}

inline double max_abs(const Mat& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

}  // namespace oracle
