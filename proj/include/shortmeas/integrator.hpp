#pragma once

// Explicit Runge-Kutta integration of dy/dt = f(t, y) for complex matrix states,
// reporting the state at every requested grid time.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string_view>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "shortmeas/error.hpp"

namespace shortmeas {

enum class Method { dormand_prince, rk4_fixed };

constexpr std::string_view to_string(Method m) {
  return m == Method::dormand_prince ? "dormand-prince-5(4)" : "rk4-fixed";
}

struct IntegratorOptions {
  Method method = Method::dormand_prince;
  double tolerance = 1e-10;  // max-norm local error per accepted step
  double fixed_step = 0.0;   // rk4: 0 selects 2 pi / (50 * frequency estimate)
  long max_steps = 200'000'000;
};

struct IntegratorStats {
  Method method = Method::dormand_prince;
  double tolerance = 0.0;
  long accepted = 0;
  long rejected = 0;
  double smallest_step = 0.0;
  double largest_step = 0.0;
};

namespace detail {

inline void check_grid(std::span<const double> grid) {
  if (grid.empty()) throw InvalidArgument("time grid is empty");
  if (grid.front() != 0.0) throw InvalidArgument(fmt::format("time grid must start at 0, starts at {}", grid.front()));
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1]))
      throw InvalidArgument(fmt::format("time grid not strictly increasing at index {} ({} after {})", i, grid[i],
                                        grid[i - 1]));
}

// Dormand-Prince 5(4) tableau.
struct DP {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
};

}  // namespace detail

/// Integrates from y0 at grid[0] = 0 through every grid time, calling
/// observer(index, t, y) at each. `frequency` bounds the fastest rate in the
/// problem and seeds the step size.
template <class State, class Rhs, class Observer>
IntegratorStats integrate(Rhs&& rhs, State y, std::span<const double> grid, double frequency,
                          const IntegratorOptions& opt, Observer&& observer) {
  detail::check_grid(grid);
  frequency = std::max(frequency, 1e-12);
  IntegratorStats stats;
  stats.method = opt.method;
  stats.tolerance = opt.tolerance;
  stats.smallest_step = std::numeric_limits<double>::infinity();

  observer(std::size_t{0}, grid[0], static_cast<const State&>(y));
  double t = grid[0];

  if (opt.method == Method::rk4_fixed) {
    const double hmax = opt.fixed_step > 0.0 ? opt.fixed_step : 2.0 * std::numbers::pi / (50.0 * frequency);
    State k1 = y, k2 = y, k3 = y, k4 = y, tmp = y;
    for (std::size_t i = 1; i < grid.size(); ++i) {
      const double span = grid[i] - t;
      const long m = std::max<long>(1, static_cast<long>(std::ceil(span / hmax)));
      const double h = span / static_cast<double>(m);
      for (long s = 0; s < m; ++s) {
        rhs(t, y, k1);
        tmp = y + (0.5 * h) * k1;
        rhs(t + 0.5 * h, tmp, k2);
        tmp = y + (0.5 * h) * k2;
        rhs(t + 0.5 * h, tmp, k3);
        tmp = y + h * k3;
        rhs(t + h, tmp, k4);
        y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t = (s + 1 == m) ? grid[i] : t + h;
        ++stats.accepted;
        if (stats.accepted > opt.max_steps) throw IntegratorFailure("rk4: step budget exhausted");
      }
      stats.smallest_step = std::min(stats.smallest_step, h);
      stats.largest_step = std::max(stats.largest_step, h);
      observer(i, t, static_cast<const State&>(y));
    }
    return stats;
  }

  using D = detail::DP;
  State k1 = y, k2 = y, k3 = y, k4 = y, k5 = y, k6 = y, k7 = y, stage = y, y5 = y;
  rhs(t, y, k1);
  double h = std::min(0.05 / frequency, grid.back() - grid.front());
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double target = grid[i];
    while (t < target) {
      const bool clipped = t + h >= target;
      const double step = clipped ? target - t : h;
      if (step < 1e-13 * std::max(1.0, std::abs(t)))
        throw IntegratorFailure(fmt::format("step size underflow at t = {:.17g}: step {:.3g} cannot meet tolerance {:.3g}",
                                            t, step, opt.tolerance));

      stage = y + (step * D::a21) * k1;
      rhs(t + D::c2 * step, stage, k2);
      stage = y + step * (D::a31 * k1 + D::a32 * k2);
      rhs(t + D::c3 * step, stage, k3);
      stage = y + step * (D::a41 * k1 + D::a42 * k2 + D::a43 * k3);
      rhs(t + D::c4 * step, stage, k4);
      stage = y + step * (D::a51 * k1 + D::a52 * k2 + D::a53 * k3 + D::a54 * k4);
      rhs(t + D::c5 * step, stage, k5);
      stage = y + step * (D::a61 * k1 + D::a62 * k2 + D::a63 * k3 + D::a64 * k4 + D::a65 * k5);
      rhs(t + step, stage, k6);
      y5 = y + step * (D::b1 * k1 + D::b3 * k3 + D::b4 * k4 + D::b5 * k5 + D::b6 * k6);
      rhs(t + step, y5, k7);
      const double err =
          (step * (D::e1 * k1 + D::e3 * k3 + D::e4 * k4 + D::e5 * k5 + D::e6 * k6 + D::e7 * k7)).cwiseAbs().maxCoeff();

      const double factor = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(opt.tolerance / err, 0.2), 0.2, 5.0);
      if (err <= opt.tolerance) {
        t = clipped ? target : t + step;
        y.swap(y5);
        k1.swap(k7);
        ++stats.accepted;
        stats.smallest_step = std::min(stats.smallest_step, step);
        stats.largest_step = std::max(stats.largest_step, step);
        // a step shortened to hit the grid says nothing about the natural step size
        if (!clipped || factor < 1.0) h = step * factor;
      } else {
        ++stats.rejected;
        h = step * factor;
      }
      if (stats.accepted + stats.rejected > opt.max_steps)
        throw IntegratorFailure(fmt::format("step budget of {} exhausted at t = {:.17g}", opt.max_steps, t));
    }
    observer(i, t, static_cast<const State&>(y));
  }
  return stats;
}

}  // namespace shortmeas
