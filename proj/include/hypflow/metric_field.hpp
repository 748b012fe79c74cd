#pragma once

#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "hypflow/grid.hpp"

namespace hypflow {

/// A fixed number of real components attached to every active node of a grid.
/// Tensor components are stored with the first index slowest, e.g. a (0,2)
/// field holds h_ij at [i * n + j].
class NodeField {
 public:
  NodeField() = default;
  NodeField(std::shared_ptr<const GridSpec> grid, std::size_t comps, double fill = 0.0);

  const GridSpec& grid() const { return *grid_; }
  const std::shared_ptr<const GridSpec>& grid_ptr() const { return grid_; }
  std::size_t comps() const { return comps_; }
  std::size_t num_nodes() const { return grid_ ? grid_->num_active() : 0; }

  std::span<double> at(std::size_t node) {
    return {data_.data() + node * comps_, comps_};
  }
  std::span<const double> at(std::size_t node) const {
    return {data_.data() + node * comps_, comps_};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_grid(const NodeField& other) const;

 private:
  std::shared_ptr<const GridSpec> grid_;
  std::size_t comps_ = 0;
  std::vector<double> data_;
};

/// Symmetric n x n matrix per node; SPD when it represents a metric.
using MetricField = NodeField;

/// Field of n x n identity matrices scaled by `scale`.
MetricField constant_metric(std::shared_ptr<const GridSpec> grid, double scale = 1.0);

/// Throws NonSpdError naming the first node whose matrix is asymmetric
/// (beyond 1e-12 relative) or not positive definite.
void validate_metric(const MetricField& field);

/// a - b, a + b, c * a on matching grids.
NodeField subtract(const NodeField& a, const NodeField& b);
NodeField add(const NodeField& a, const NodeField& b);
NodeField scaled(const NodeField& a, double c);

// Text checkpoint format ("hypflow-field 1"):
//   hypflow-field 1
//   dim <n>
//   extents <e_0> ... <e_{n-1}>
//   spacing <h_0> ... (hex floats)
//   origin <o_0> ... (hex floats)
//   comps <c>
//   mask <row-major string of 0/1 over the full grid>
//   values
//   <one line per active node, c hex floats, row-major node order>
void write_field(std::ostream& os, const NodeField& field);
NodeField read_field(std::istream& is);

}  // namespace hypflow
