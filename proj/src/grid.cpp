#include "hypflow/grid.hpp"

#include <cmath>
#include <deque>

#include "hypflow/error.hpp"

namespace hypflow {

GridSpec::GridSpec(int dim, std::vector<double> spacing, std::vector<int> extents,
                   std::vector<double> origin, std::vector<std::uint8_t> mask)
    : dim_(dim),
      spacing_(std::move(spacing)),
      extents_(std::move(extents)),
      origin_(std::move(origin)),
      mask_(std::move(mask)) {
  if (dim_ < 1 || dim_ > 4) throw GridError("grid dimension must be in [1, 4]");
  if (spacing_.size() != static_cast<std::size_t>(dim_) ||
      extents_.size() != static_cast<std::size_t>(dim_) ||
      origin_.size() != static_cast<std::size_t>(dim_))
    throw GridError("grid axis arrays must have one entry per dimension");
  std::size_t total = 1;
  for (int a = 0; a < dim_; ++a) {
    if (extents_[a] < 3)
      throw GridError("degenerate grid: fewer than 3 nodes along an axis");
    if (!(spacing_[a] > 0.0)) throw GridError("grid spacing must be positive");
    total *= static_cast<std::size_t>(extents_[a]);
  }
  if (mask_.size() != total) throw GridError("mask size does not match extents");
  build();
}

GridSpec GridSpec::ball(int dim, int nodes, double radius) {
  if (!(radius > 0.0)) throw GridError("ball radius must be positive");
  if (nodes < 3) throw GridError("degenerate grid: fewer than 3 nodes along an axis");
  const double h = 2.0 * radius / (nodes - 1);
  std::vector<double> spacing(dim, h), origin(dim, -radius);
  std::vector<int> extents(dim, nodes);
  std::size_t total = 1;
  for (int a = 0; a < dim; ++a) total *= nodes;
  std::vector<std::uint8_t> mask(total, 0);
  std::vector<int> idx(dim, 0);
  const double limit = radius * radius * (1.0 + 1e-12);
  for (std::size_t f = 0; f < total; ++f) {
    std::size_t rem = f;
    double r2 = 0.0;
    for (int a = dim - 1; a >= 0; --a) {
      idx[a] = static_cast<int>(rem % nodes);
      rem /= nodes;
      const double x = -radius + h * idx[a];
      r2 += x * x;
    }
    mask[f] = r2 <= limit ? 1 : 0;
  }
  // Drop tips that would have no neighbour along some axis.
  std::vector<std::size_t> stride(dim, 1);
  for (int a = dim - 2; a >= 0; --a) stride[a] = stride[a + 1] * nodes;
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t f = 0; f < total; ++f) {
      if (!mask[f]) continue;
      for (int a = 0; a < dim; ++a) {
        const int i = static_cast<int>(f / stride[a] % nodes);
        const bool lo = i > 0 && mask[f - stride[a]];
        const bool hi = i + 1 < nodes && mask[f + stride[a]];
        if (!lo && !hi) {
          mask[f] = 0;
          changed = true;
          break;
        }
      }
    }
  }
  return GridSpec(dim, spacing, extents, origin, mask);
}

GridSpec GridSpec::box(int dim, int nodes, double half_width) {
  if (!(half_width > 0.0)) throw GridError("box half width must be positive");
  if (nodes < 3) throw GridError("degenerate grid: fewer than 3 nodes along an axis");
  std::size_t total = 1;
  for (int a = 0; a < dim; ++a) total *= nodes;
  return GridSpec(dim, std::vector<double>(dim, 2.0 * half_width / (nodes - 1)),
                  std::vector<int>(dim, nodes), std::vector<double>(dim, -half_width),
                  std::vector<std::uint8_t>(total, 1));
}

int GridSpec::pair_index(int p, int q) const {
  if (p > q) std::swap(p, q);
  // Pairs (p, q), p < q, enumerated row by row.
  return p * dim_ - p * (p + 1) / 2 + (q - p - 1);
}

void GridSpec::build() {
  const std::size_t total = mask_.size();
  active_of_.assign(total, -1);
  active_.clear();
  for (std::size_t f = 0; f < total; ++f) {
    if (mask_[f]) {
      active_of_[f] = static_cast<std::ptrdiff_t>(active_.size());
      active_.push_back(f);
    }
  }
  if (active_.empty()) throw GridError("grid mask selects no nodes");

  const std::size_t n = active_.size();
  pairs_ = static_cast<std::size_t>(dim_ * (dim_ - 1) / 2);
  face_.assign(n * 2 * dim_, -1);
  diag_.assign(n * 4 * pairs_, -1);
  boundary_.assign(n, 0);

  std::vector<int> delta(dim_, 0);
  for (std::size_t node = 0; node < n; ++node) {
    for (int a = 0; a < dim_; ++a) {
      for (int d : {-1, 1}) {
        delta.assign(dim_, 0);
        delta[a] = d;
        face_[node * 2 * dim_ + 2 * a + (d > 0 ? 1 : 0)] = offset(node, delta);
      }
    }
    for (int p = 0; p < dim_; ++p) {
      for (int q = p + 1; q < dim_; ++q) {
        for (int sp : {-1, 1}) {
          for (int sq : {-1, 1}) {
            delta.assign(dim_, 0);
            delta[p] = sp;
            delta[q] = sq;
            diag_[node * 4 * pairs_ + 4 * pair_index(p, q) + (sp > 0 ? 2 : 0) +
                  (sq > 0 ? 1 : 0)] = offset(node, delta);
          }
        }
      }
    }
    // Boundary: any neighbour in the full 3^n stencil missing.
    std::size_t stencil = 1;
    for (int a = 0; a < dim_; ++a) stencil *= 3;
    for (std::size_t s = 0; s < stencil && !boundary_[node]; ++s) {
      std::size_t rem = s;
      bool zero = true;
      for (int a = 0; a < dim_; ++a) {
        delta[a] = static_cast<int>(rem % 3) - 1;
        rem /= 3;
        zero = zero && delta[a] == 0;
      }
      if (!zero && offset(node, delta) < 0) boundary_[node] = 1;
    }
  }

  // Connectivity of the active set through face neighbours.
  std::vector<std::uint8_t> seen(n, 0);
  std::deque<std::size_t> queue{0};
  seen[0] = 1;
  std::size_t visited = 0;
  while (!queue.empty()) {
    const std::size_t cur = queue.front();
    queue.pop_front();
    ++visited;
    for (int k = 0; k < 2 * dim_; ++k) {
      const std::ptrdiff_t nb = face_[cur * 2 * dim_ + k];
      if (nb >= 0 && !seen[nb]) {
        seen[nb] = 1;
        queue.push_back(static_cast<std::size_t>(nb));
      }
    }
  }
  if (visited != n) throw GridError("masked-in region is not connected");
  if (n > 1) {
    for (std::size_t node = 0; node < n; ++node) {
      bool any = false;
      for (int k = 0; k < 2 * dim_; ++k) any = any || face_[node * 2 * dim_ + k] >= 0;
      if (!any) throw GridError("isolated node without masked-in neighbours");
    }
  }
}

std::vector<std::size_t> GridSpec::boundary_set() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < boundary_.size(); ++i)
    if (boundary_[i]) out.push_back(i);
  return out;
}

std::size_t GridSpec::num_interior() const {
  std::size_t c = 0;
  for (auto b : boundary_) c += b ? 0 : 1;
  return c;
}

std::vector<int> GridSpec::coords(std::size_t node) const {
  std::vector<int> c(dim_);
  std::size_t rem = active_[node];
  for (int a = dim_ - 1; a >= 0; --a) {
    c[a] = static_cast<int>(rem % extents_[a]);
    rem /= extents_[a];
  }
  return c;
}

std::vector<double> GridSpec::position(std::size_t node) const {
  const auto c = coords(node);
  std::vector<double> x(dim_);
  for (int a = 0; a < dim_; ++a) x[a] = origin_[a] + spacing_[a] * c[a];
  return x;
}

std::ptrdiff_t GridSpec::offset(std::size_t node, std::span<const int> delta) const {
  std::size_t rem = active_[node];
  std::vector<int> c(dim_);
  for (int a = dim_ - 1; a >= 0; --a) {
    c[a] = static_cast<int>(rem % extents_[a]);
    rem /= extents_[a];
  }
  std::size_t f = 0;
  for (int a = 0; a < dim_; ++a) {
    const int v = c[a] + delta[a];
    if (v < 0 || v >= extents_[a]) return -1;
    f = f * extents_[a] + static_cast<std::size_t>(v);
  }
  return active_of_[f];
}

std::ptrdiff_t GridSpec::diagonal(std::size_t node, int p, int sp, int q, int sq) const {
  if (p > q) {
    std::swap(p, q);
    std::swap(sp, sq);
  }
  return diag_[node * 4 * pairs_ + 4 * pair_index(p, q) + (sp > 0 ? 2 : 0) +
               (sq > 0 ? 1 : 0)];
}

double GridSpec::cell_volume() const {
  double v = 1.0;
  for (double h : spacing_) v *= h;
  return v;
}

bool GridSpec::same_layout(const GridSpec& other) const {
  return dim_ == other.dim_ && spacing_ == other.spacing_ &&
         extents_ == other.extents_ && origin_ == other.origin_ &&
         mask_ == other.mask_;
}

}  // namespace hypflow
