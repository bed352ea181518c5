#pragma once

#include <cmath>
#include <string>

#include "termcov/errors.hpp"

namespace termcov {

/// Shared discretization of the time and maturity axes. The same step
/// delta_n is used on both lattices; difference returns require that.
struct GridSpec {
  double delta_n = 0.0;     // step in years, 1/n
  int n_steps = 0;          // time increments covering [0, horizon]
  double max_maturity = 0;  // M in years
  double horizon = 0.0;     // T in years, = n_steps * delta_n

  // grid points along maturity: j = 0 .. maturity_cells()
  int maturity_cells() const { return static_cast<int>(std::llround(max_maturity / delta_n)); }
  int n_dates() const { return n_steps + 1; }
};

inline GridSpec make_grid(double delta_n, int n_steps, double max_maturity) {
  if (!(delta_n > 0.0)) throw ConfigError("grid: delta_n must be positive");
  if (n_steps < 1) throw ConfigError("grid: n_steps must be >= 1");
  if (!(max_maturity > 0.0)) throw ConfigError("grid: max_maturity must be positive");
  const double cells = max_maturity / delta_n;
  if (std::abs(cells - std::llround(cells)) > 1e-9)
    throw ConfigError("grid: max_maturity must be an integer multiple of delta_n");
  GridSpec g;
  g.delta_n = delta_n;
  g.n_steps = n_steps;
  g.max_maturity = max_maturity;
  g.horizon = delta_n * n_steps;
  return g;
}

inline GridSpec make_grid_from_horizon(double delta_n, double horizon, double max_maturity) {
  if (!(delta_n > 0.0)) throw ConfigError("grid: delta_n must be positive");
  const double steps = horizon / delta_n;
  if (std::abs(steps - std::llround(steps)) > 1e-9)
    throw ConfigError("grid: horizon must be an integer multiple of delta_n");
  return make_grid(delta_n, static_cast<int>(std::llround(steps)), max_maturity);
}

inline bool same_grid(const GridSpec& a, const GridSpec& b, double tol = 1e-12) {
  return std::abs(a.delta_n - b.delta_n) <= tol * std::max(a.delta_n, b.delta_n) &&
         a.n_steps == b.n_steps && std::abs(a.max_maturity - b.max_maturity) <= 1e-9;
}

}  // namespace termcov
