#include "hypflow/metric_field.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "hypflow/error.hpp"
#include "text_io.hpp"
#include "node_algebra.hpp"

namespace hypflow {

NodeField::NodeField(std::shared_ptr<const GridSpec> grid, std::size_t comps, double fill)
    : grid_(std::move(grid)), comps_(comps) {
  if (!grid_) throw GridError("field requires a grid");
  data_.assign(grid_->num_active() * comps_, fill);
}

bool NodeField::same_grid(const NodeField& other) const {
  if (!grid_ || !other.grid_) return false;
  return grid_ == other.grid_ || grid_->same_layout(*other.grid_);
}

MetricField constant_metric(std::shared_ptr<const GridSpec> grid, double scale) {
  const int n = grid->dim();
  MetricField f(grid, static_cast<std::size_t>(n * n));
  for (std::size_t node = 0; node < f.num_nodes(); ++node) {
    auto m = f.at(node);
    for (int i = 0; i < n; ++i) m[i * n + i] = scale;
  }
  return f;
}

void validate_metric(const MetricField& field) {
  const int n = field.grid().dim();
  if (field.comps() != static_cast<std::size_t>(n * n))
    throw GridError("metric field must have n*n components");
  double inv[detail::kMaxDim * detail::kMaxDim];
  for (std::size_t node = 0; node < field.num_nodes(); ++node) {
    auto m = field.at(node);
    double scale = 0.0;
    for (double v : m) scale = std::max(scale, std::abs(v));
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (std::abs(m[i * n + j] - m[j * n + i]) > 1e-12 * std::max(1.0, scale))
          throw NonSpdError("metric not symmetric at node " + std::to_string(node),
                            static_cast<std::ptrdiff_t>(node));
    if (!detail::spd_inverse(m.data(), n, inv))
      throw NonSpdError("metric not positive definite at node " + std::to_string(node),
                        static_cast<std::ptrdiff_t>(node));
  }
}

namespace {

void require_match(const NodeField& a, const NodeField& b) {
  if (!a.same_grid(b) || a.comps() != b.comps())
    throw GridError("fields live on different grids or have different shapes");
}

}  // namespace

NodeField subtract(const NodeField& a, const NodeField& b) {
  require_match(a, b);
  NodeField out = a;
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] -= b.data()[i];
  return out;
}

NodeField add(const NodeField& a, const NodeField& b) {
  require_match(a, b);
  NodeField out = a;
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

NodeField scaled(const NodeField& a, double c) {
  NodeField out = a;
  for (double& v : out.data()) v *= c;
  return out;
}

namespace {

using detail::hex;
using detail::parse_double;

std::istringstream expect_line(std::istream& is, const std::string& key, std::size_t& line) {
  std::string text;
  if (!std::getline(is, text)) throw ParseError("unexpected end of file, wanted " + key, line);
  ++line;
  std::istringstream ls(text);
  std::string k;
  ls >> k;
  if (k != key) throw ParseError("expected '" + key + "', found '" + k + "'", line);
  return ls;
}

}  // namespace

void write_field(std::ostream& os, const NodeField& field) {
  const GridSpec& g = field.grid();
  os << "hypflow-field 1\n";
  os << "dim " << g.dim() << "\n";
  os << "extents";
  for (int e : g.extents()) os << ' ' << e;
  os << "\nspacing";
  for (double h : g.spacing()) os << ' ' << hex(h);
  os << "\norigin";
  for (double o : g.origin()) os << ' ' << hex(o);
  os << "\ncomps " << field.comps() << "\nmask ";
  for (auto m : g.mask()) os << (m ? '1' : '0');
  os << "\nvalues\n";
  for (std::size_t node = 0; node < field.num_nodes(); ++node) {
    auto v = field.at(node);
    for (std::size_t c = 0; c < v.size(); ++c) os << (c ? " " : "") << hex(v[c]);
    os << '\n';
  }
}

NodeField read_field(std::istream& is) {
  std::size_t line = 0;
  {
    std::string header;
    if (!std::getline(is, header)) throw ParseError("empty field file", 0);
    ++line;
    if (header != "hypflow-field 1") throw ParseError("unsupported header '" + header + "'", line);
  }
  int dim = 0;
  expect_line(is, "dim", line) >> dim;
  if (dim < 1 || dim > 4) throw ParseError("bad dimension", line);
  std::vector<int> extents(dim);
  {
    auto ls = expect_line(is, "extents", line);
    for (int& e : extents)
      if (!(ls >> e)) throw ParseError("missing extent", line);
  }
  std::vector<double> spacing(dim), origin(dim);
  {
    auto ls = expect_line(is, "spacing", line);
    for (double& h : spacing) {
      std::string tok;
      if (!(ls >> tok)) throw ParseError("missing spacing", line);
      h = parse_double(tok, line);
    }
  }
  {
    auto ls = expect_line(is, "origin", line);
    for (double& o : origin) {
      std::string tok;
      if (!(ls >> tok)) throw ParseError("missing origin", line);
      o = parse_double(tok, line);
    }
  }
  std::size_t comps = 0;
  expect_line(is, "comps", line) >> comps;
  std::string mask_text;
  expect_line(is, "mask", line) >> mask_text;
  std::vector<std::uint8_t> mask(mask_text.size());
  for (std::size_t i = 0; i < mask_text.size(); ++i) {
    if (mask_text[i] != '0' && mask_text[i] != '1') throw ParseError("bad mask character", line);
    mask[i] = mask_text[i] == '1';
  }
  expect_line(is, "values", line);
  auto grid = std::make_shared<const GridSpec>(dim, spacing, extents, origin, mask);
  NodeField field(grid, comps);
  for (std::size_t node = 0; node < field.num_nodes(); ++node) {
    std::string text;
    if (!std::getline(is, text)) throw ParseError("truncated values section", line);
    ++line;
    std::istringstream ls(text);
    auto v = field.at(node);
    for (std::size_t c = 0; c < comps; ++c) {
      std::string tok;
      if (!(ls >> tok)) throw ParseError("too few values on node line", line);
      v[c] = parse_double(tok, line);
    }
  }
  return field;
}

}  // namespace hypflow
