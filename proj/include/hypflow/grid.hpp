#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace hypflow {

/// Uniform Cartesian grid with a node mask. Nodes are addressed by their
/// index in the list of masked-in ("active") nodes, in row-major order of
/// the full grid (last axis fastest).
///
/// An active node is a boundary node when any of its 3^n - 1 neighbours is
/// masked out or off the grid; all other active nodes are interior and have
/// complete central-difference stencils.
class GridSpec {
 public:
  GridSpec(int dim, std::vector<double> spacing, std::vector<int> extents,
           std::vector<double> origin, std::vector<std::uint8_t> mask);

  /// Cube [-radius, radius]^dim with `nodes` per axis, masked to the closed
  /// ball of the given radius minus any node left without a neighbour
  /// along some axis.
  static GridSpec ball(int dim, int nodes, double radius);

  /// Cube [-half_width, half_width]^dim with every node active.
  static GridSpec box(int dim, int nodes, double half_width);

  int dim() const { return dim_; }
  std::span<const double> spacing() const { return spacing_; }
  std::span<const int> extents() const { return extents_; }
  std::span<const double> origin() const { return origin_; }
  std::span<const std::uint8_t> mask() const { return mask_; }

  std::size_t num_active() const { return active_.size(); }
  std::size_t full_index(std::size_t node) const { return active_[node]; }
  /// Active index of a full-grid node, or -1 when masked out.
  std::ptrdiff_t active_index(std::size_t full) const { return active_of_[full]; }

  bool is_boundary(std::size_t node) const { return boundary_[node] != 0; }
  std::vector<std::size_t> boundary_set() const;
  std::size_t num_interior() const;

  std::vector<double> position(std::size_t node) const;
  /// Integer coordinates of an active node.
  std::vector<int> coords(std::size_t node) const;

  /// Neighbour along `axis` in direction `dir` (+1 or -1); -1 if unavailable.
  std::ptrdiff_t face(std::size_t node, int axis, int dir) const {
    return face_[node * 2 * dim_ + 2 * axis + (dir > 0 ? 1 : 0)];
  }
  /// Diagonal neighbour node + sp*e_p + sq*e_q (p != q); -1 if unavailable.
  std::ptrdiff_t diagonal(std::size_t node, int p, int sp, int q, int sq) const;

  /// Neighbour at an arbitrary integer offset; -1 if unavailable.
  std::ptrdiff_t offset(std::size_t node, std::span<const int> delta) const;

  /// Product of the spacings (cell volume).
  double cell_volume() const;

  bool same_layout(const GridSpec& other) const;

 private:
  void build();
  int pair_index(int p, int q) const;

  int dim_;
  std::vector<double> spacing_;
  std::vector<int> extents_;
  std::vector<double> origin_;
  std::vector<std::uint8_t> mask_;
  std::vector<std::size_t> active_;
  std::vector<std::ptrdiff_t> active_of_;
  std::vector<std::uint8_t> boundary_;
  std::vector<std::ptrdiff_t> face_;
  std::vector<std::ptrdiff_t> diag_;
  std::size_t pairs_ = 0;
};

}  // namespace hypflow
