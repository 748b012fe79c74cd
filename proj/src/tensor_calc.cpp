#include "hypflow/tensor_calc.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hypflow/error.hpp"
#include "hypflow/parallel.hpp"
#include "node_algebra.hpp"

namespace hypflow {
namespace {

using detail::kMaxDim;

int metric_dim(const NodeField& f) {
  const int n = f.grid().dim();
  if (f.comps() != static_cast<std::size_t>(n * n))
    throw GridError("expected a field with n*n components per node");
  return n;
}

void require_same_grid(const NodeField& a, const NodeField& b) {
  if (!a.same_grid(b)) throw GridError("fields live on different grids");
}

[[noreturn]] void throw_singular(std::size_t node) {
  throw NonSpdError("singular or indefinite metric at node " + std::to_string(node),
                    static_cast<std::ptrdiff_t>(node));
}

}  // namespace

NodeField partials(const NodeField& field) {
  const GridSpec& g = field.grid();
  const int n = g.dim();
  const std::size_t c = field.comps();
  NodeField out(field.grid_ptr(), c * n);
  parallel_for(field.num_nodes(), [&](std::size_t b, std::size_t e) {
    for (std::size_t node = b; node < e; ++node) {
      auto dst = out.at(node);
      const auto f0 = field.at(node);
      for (int p = 0; p < n; ++p) {
        const double h = g.spacing()[p];
        const std::ptrdiff_t up = g.face(node, p, +1);
        const std::ptrdiff_t dn = g.face(node, p, -1);
        double* d = dst.data() + p * c;
        if (up >= 0 && dn >= 0) {
          const auto fu = field.at(up), fd = field.at(dn);
          for (std::size_t k = 0; k < c; ++k) d[k] = (fu[k] - fd[k]) / (2.0 * h);
        } else if (up >= 0) {
          const auto fu = field.at(up);
          for (std::size_t k = 0; k < c; ++k) d[k] = (fu[k] - f0[k]) / h;
        } else if (dn >= 0) {
          const auto fd = field.at(dn);
          for (std::size_t k = 0; k < c; ++k) d[k] = (f0[k] - fd[k]) / h;
        } else {
          throw GridError("node " + std::to_string(node) +
                          " has no neighbour along axis " + std::to_string(p));
        }
      }
    }
  });
  return out;
}

NodeField second_partials(const NodeField& field) {
  const GridSpec& g = field.grid();
  const int n = g.dim();
  const std::size_t c = field.comps();
  NodeField out(field.grid_ptr(), c * n * n);

  // Boundary nodes difference the first-derivative field.
  NodeField composite;
  if (g.num_interior() != g.num_active()) composite = partials(partials(field));

  parallel_for(field.num_nodes(), [&](std::size_t b, std::size_t e) {
    for (std::size_t node = b; node < e; ++node) {
      auto dst = out.at(node);
      if (g.is_boundary(node)) {
        const auto x = composite.at(node);  // [q][p][c]
        for (int p = 0; p < n; ++p)
          for (int q = 0; q < n; ++q)
            for (std::size_t k = 0; k < c; ++k)
              dst[(p * n + q) * c + k] =
                  0.5 * (x[(q * n + p) * c + k] + x[(p * n + q) * c + k]);
        continue;
      }
      const auto f0 = field.at(node);
      for (int p = 0; p < n; ++p) {
        const double hp = g.spacing()[p];
        const auto fu = field.at(g.face(node, p, +1));
        const auto fd = field.at(g.face(node, p, -1));
        for (std::size_t k = 0; k < c; ++k)
          dst[(p * n + p) * c + k] = (fu[k] - 2.0 * f0[k] + fd[k]) / (hp * hp);
        for (int q = p + 1; q < n; ++q) {
          const double hq = g.spacing()[q];
          const auto fpp = field.at(g.diagonal(node, p, +1, q, +1));
          const auto fpm = field.at(g.diagonal(node, p, +1, q, -1));
          const auto fmp = field.at(g.diagonal(node, p, -1, q, +1));
          const auto fmm = field.at(g.diagonal(node, p, -1, q, -1));
          for (std::size_t k = 0; k < c; ++k) {
            const double v = (fpp[k] - fpm[k] - fmp[k] + fmm[k]) / (4.0 * hp * hq);
            dst[(p * n + q) * c + k] = v;
            dst[(q * n + p) * c + k] = v;
          }
        }
      }
    }
  });
  return out;
}

MetricJet fd_jet(const MetricField& field) {
  metric_dim(field);
  return MetricJet{field, partials(field), second_partials(field)};
}

ChristoffelField christoffel(const MetricJet& jet) {
  const int n = metric_dim(jet.value);
  const std::size_t n3 = static_cast<std::size_t>(n * n * n);
  ChristoffelField out{NodeField(jet.value.grid_ptr(), n3),
                       NodeField(jet.value.grid_ptr(), n3 * n)};
  parallel_for(jet.value.num_nodes(), [&](std::size_t b, std::size_t e) {
    detail::NodeConnection conn;
    for (std::size_t node = b; node < e; ++node) {
      if (!detail::node_connection(n, jet.value.at(node).data(), jet.d1.at(node).data(),
                                   jet.d2.at(node).data(), conn))
        throw_singular(node);
      std::copy(conn.gamma, conn.gamma + n3, out.gamma.at(node).begin());
      std::copy(conn.dgamma, conn.dgamma + n3 * n, out.dgamma.at(node).begin());
    }
  });
  return out;
}

ChristoffelField christoffel(const MetricField& field) { return christoffel(fd_jet(field)); }

NodeField riemann(const MetricField& field, const ChristoffelField& gamma) {
  const int n = metric_dim(field);
  require_same_grid(field, gamma.gamma);
  const std::size_t n3 = static_cast<std::size_t>(n * n * n);
  NodeField out(field.grid_ptr(), n3 * n);
  parallel_for(field.num_nodes(), [&](std::size_t b, std::size_t e) {
    detail::NodeConnection conn;
    for (std::size_t node = b; node < e; ++node) {
      std::copy_n(gamma.gamma.at(node).begin(), n3, conn.gamma);
      std::copy_n(gamma.dgamma.at(node).begin(), n3 * n, conn.dgamma);
      detail::node_riemann(n, conn, out.at(node).data());
    }
  });
  return out;
}

NodeField ricci(const NodeField& riem) {
  const int n = riem.grid().dim();
  if (riem.comps() != static_cast<std::size_t>(n * n * n * n))
    throw GridError("expected a (1,3) tensor field");
  NodeField out(riem.grid_ptr(), static_cast<std::size_t>(n * n));
  const int n2 = n * n, n3 = n2 * n;
  for (std::size_t node = 0; node < riem.num_nodes(); ++node) {
    const auto R = riem.at(node);
    auto dst = out.at(node);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int p = 0; p < n; ++p) s += R[p * n3 + p * n2 + i * n + j];
        dst[i * n + j] = s;
      }
  }
  return out;
}

NodeField scalar_curvature(const MetricField& field, const NodeField& ric) {
  const int n = metric_dim(field);
  require_same_grid(field, ric);
  NodeField out(field.grid_ptr(), 1);
  double inv[kMaxDim * kMaxDim];
  for (std::size_t node = 0; node < field.num_nodes(); ++node) {
    if (!detail::spd_inverse(field.at(node).data(), n, inv)) throw_singular(node);
    const auto r = ric.at(node);
    double s = 0.0;
    for (int k = 0; k < n * n; ++k) s += inv[k] * r[k];
    out.at(node)[0] = s;
  }
  return out;
}

NodeField covariant_derivative(const MetricField& field, const ChristoffelField& gamma,
                               const NodeField& tensor) {
  const int n = metric_dim(field);
  require_same_grid(field, tensor);
  if (tensor.comps() != static_cast<std::size_t>(n * n))
    throw GridError("covariant_derivative expects a (0,2) field");
  const NodeField dh = partials(tensor);
  NodeField out(field.grid_ptr(), static_cast<std::size_t>(n * n * n));
  const int n2 = n * n;
  for (std::size_t node = 0; node < field.num_nodes(); ++node) {
    const auto G = gamma.gamma.at(node);
    const auto h = tensor.at(node);
    const auto d = dh.at(node);
    auto dst = out.at(node);
    for (int p = 0; p < n; ++p)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          double s = d[p * n2 + i * n + j];
          for (int q = 0; q < n; ++q)
            s -= G[q * n2 + p * n + i] * h[q * n + j] + G[q * n2 + p * n + j] * h[i * n + q];
          dst[p * n2 + i * n + j] = s;
        }
  }
  return out;
}

NodeField deturck_vector(const MetricField& gbar, const MetricField& ref) {
  const int n = metric_dim(gbar);
  metric_dim(ref);
  require_same_grid(gbar, ref);
  const ChristoffelField gb = christoffel(gbar);
  const ChristoffelField gr = christoffel(ref);
  NodeField out(gbar.grid_ptr(), static_cast<std::size_t>(n));
  const int n2 = n * n;
  double inv[kMaxDim * kMaxDim];
  for (std::size_t node = 0; node < gbar.num_nodes(); ++node) {
    const auto g = gbar.at(node);
    if (!detail::spd_inverse(g.data(), n, inv)) throw_singular(node);
    const auto A = gb.gamma.at(node);
    const auto B = gr.gamma.at(node);
    double Wup[kMaxDim] = {};
    for (int j = 0; j < n; ++j)
      for (int p = 0; p < n; ++p)
        for (int q = 0; q < n; ++q)
          Wup[j] += inv[p * n + q] * (A[j * n2 + p * n + q] - B[j * n2 + p * n + q]);
    auto dst = out.at(node);
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += g[i * n + j] * Wup[j];
      dst[i] = s;
    }
  }
  return out;
}

NodeField lie_term(const MetricField& field, const ChristoffelField& gamma,
                   const NodeField& covector) {
  const int n = metric_dim(field);
  require_same_grid(field, covector);
  if (covector.comps() != static_cast<std::size_t>(n))
    throw GridError("lie_term expects a covector field");
  const NodeField dW = partials(covector);  // [p][i]
  NodeField out(field.grid_ptr(), static_cast<std::size_t>(n * n));
  const int n2 = n * n;
  for (std::size_t node = 0; node < field.num_nodes(); ++node) {
    const auto G = gamma.gamma.at(node);
    const auto W = covector.at(node);
    const auto d = dW.at(node);
    double nab[kMaxDim * kMaxDim];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double s = d[i * n + j];
        for (int k = 0; k < n; ++k) s -= G[k * n2 + i * n + j] * W[k];
        nab[i * n + j] = s;
      }
    auto dst = out.at(node);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) dst[i * n + j] = nab[i * n + j] + nab[j * n + i];
  }
  return out;
}

NodeField tensor_norm_sq(const NodeField& h, const MetricField& ref) {
  const int n = metric_dim(ref);
  require_same_grid(h, ref);
  if (h.comps() != static_cast<std::size_t>(n * n))
    throw GridError("tensor_norm_sq expects a (0,2) field");
  NodeField out(ref.grid_ptr(), 1);
  double inv[kMaxDim * kMaxDim];
  for (std::size_t node = 0; node < ref.num_nodes(); ++node) {
    if (!detail::spd_inverse(ref.at(node).data(), n, inv)) throw_singular(node);
    const auto t = h.at(node);
    // B = inv * t * inv, |h|^2 = sum_pq B_pq t_pq
    double tmp[kMaxDim * kMaxDim];
    for (int i = 0; i < n; ++i)
      for (int q = 0; q < n; ++q) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += t[i * n + j] * inv[j * n + q];
        tmp[i * n + q] = s;
      }
    double total = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = 0; q < n; ++q) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += inv[p * n + i] * tmp[i * n + q];
        total += s * t[p * n + q];
      }
    out.at(node)[0] = total;
  }
  return out;
}

NodeField volume_weights(const MetricField& ref) {
  const int n = metric_dim(ref);
  NodeField out(ref.grid_ptr(), 1);
  const double cell = ref.grid().cell_volume();
  double inv[kMaxDim * kMaxDim];
  for (std::size_t node = 0; node < ref.num_nodes(); ++node) {
    double det = 0.0;
    if (!detail::spd_inverse(ref.at(node).data(), n, inv, &det)) throw_singular(node);
    out.at(node)[0] = std::sqrt(det) * cell;
  }
  return out;
}

double l2_distance_sq(const MetricField& gbar, const MetricField& ref) {
  const NodeField diff = subtract(gbar, ref);
  const NodeField norms = tensor_norm_sq(diff, ref);
  const NodeField w = volume_weights(ref);
  double total = 0.0;
  for (std::size_t node = 0; node < ref.num_nodes(); ++node)
    total += norms.at(node)[0] * w.at(node)[0];
  return total;
}

CurvatureErrors constant_curvature_errors(const MetricField& field, double K) {
  const int n = metric_dim(field);
  const NodeField ric = ricci(riemann(field, christoffel(field)));
  const NodeField scal = scalar_curvature(field, ric);
  CurvatureErrors out{NodeField(field.grid_ptr(), 1), NodeField(field.grid_ptr(), 1)};
  const GridSpec& g = field.grid();
  const double r_expected = n * (n - 1) * K;
  for (std::size_t node = 0; node < field.num_nodes(); ++node) {
    if (g.is_boundary(node)) continue;
    const auto gv = field.at(node);
    const auto rv = ric.at(node);
    double diff = 0.0, ref = 0.0;
    for (int k = 0; k < n * n; ++k) {
      const double expected = (n - 1) * K * gv[k];
      diff = std::max(diff, std::abs(rv[k] - expected));
      ref = std::max(ref, std::abs(expected));
    }
    const double re = K != 0.0 ? diff / ref : diff;
    const double sv = scal.at(node)[0];
    const double se =
        r_expected != 0.0 ? std::abs(sv - r_expected) / std::abs(r_expected) : std::abs(sv);
    out.ricci_error.at(node)[0] = re;
    out.scalar_error.at(node)[0] = se;
    out.ricci_max = std::max(out.ricci_max, re);
    out.scalar_max = std::max(out.scalar_max, se);
  }
  return out;
}

}  // namespace hypflow
