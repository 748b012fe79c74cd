#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <vector>

#include "hypflow/grid.hpp"
#include "hypflow/metric_field.hpp"

namespace testutil {

/// Active node closest to `target`.
inline std::size_t nearest_node(const hypflow::GridSpec& g, const std::vector<double>& target) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < g.num_active(); ++k) {
    const auto x = g.position(k);
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) d += (x[i] - target[i]) * (x[i] - target[i]);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

inline double radius(const hypflow::GridSpec& g, std::size_t node) {
  double s = 0.0;
  for (double v : g.position(node)) s += v * v;
  return std::sqrt(s);
}

inline double sup_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

/// Fills a metric field from a callable taking (position, out n*n span).
template <class F>
hypflow::MetricField metric_from(std::shared_ptr<const hypflow::GridSpec> grid, F&& f) {
  const int n = grid->dim();
  hypflow::MetricField out(grid, static_cast<std::size_t>(n * n));
  for (std::size_t k = 0; k < out.num_nodes(); ++k) f(grid->position(k), out.at(k));
  return out;
}

}  // namespace testutil
