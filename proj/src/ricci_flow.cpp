#include "hypflow/ricci_flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

#include "hypflow/error.hpp"
#include "hypflow/parallel.hpp"
#include "node_algebra.hpp"

namespace hypflow {
namespace {

using detail::kMaxDim;
using SmallMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

int metric_dim(const NodeField& f) {
  const int n = f.grid().dim();
  if (f.comps() != static_cast<std::size_t>(n * n))
    throw GridError("expected a field with n*n components per node");
  return n;
}

double rescale_constant(RescaleVariant variant, double curvature) {
  return variant == RescaleVariant::paper_exact ? 1.0 : curvature;
}

void pin_boundary(MetricField& metric, const MetricField& ref) {
  const GridSpec& g = metric.grid();
  for (std::size_t node = 0; node < metric.num_nodes(); ++node)
    if (g.is_boundary(node)) {
      auto src = ref.at(node);
      std::copy(src.begin(), src.end(), metric.at(node).begin());
    }
}

/// Jet of gbar: the reference jet plus finite differences of gbar - ref.
struct PerturbationJet {
  NodeField d1;
  NodeField d2;
};

PerturbationJet perturbation_jet(const FlowState& s) {
  const NodeField pert = subtract(s.metric, s.reference);
  return {partials(pert), second_partials(pert)};
}

/// |a|^2_g for symmetric a given g^-1.
double norm_sq_with(int n, const double* ginv, const double* a) {
  double tmp[kMaxDim * kMaxDim];
  for (int i = 0; i < n; ++i)
    for (int q = 0; q < n; ++q) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += a[i * n + j] * ginv[j * n + q];
      tmp[i * n + q] = s;
    }
  double total = 0.0;
  for (int p = 0; p < n; ++p)
    for (int q = 0; q < n; ++q) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += ginv[p * n + i] * tmp[i * n + q];
      total += s * a[p * n + q];
    }
  return total;
}

/// Right-hand side plus max over nodes of |rhs|_gbar.
NodeField rhs_impl(const FlowState& s, RescaleVariant variant, double* speed) {
  const int n = metric_dim(s.metric);
  if (!s.metric.same_grid(s.reference) || !s.reference_jet)
    throw GridError("flow state is missing a reference on the same grid");
  const GridSpec& grid = s.metric.grid();
  const MetricJet& rj = *s.reference_jet;
  const PerturbationJet pj = perturbation_jet(s);
  const double c = rescale_constant(variant, s.curvature);
  const int n2 = n * n, n3 = n2 * n, n4 = n3 * n;

  NodeField out(s.metric.grid_ptr(), static_cast<std::size_t>(n2));
  std::vector<double> node_speed(s.metric.num_nodes(), 0.0);

  parallel_for(s.metric.num_nodes(), [&](std::size_t b, std::size_t e) {
    double dg[kMaxDim * kMaxDim * kMaxDim];
    double ddg[kMaxDim * kMaxDim * kMaxDim * kMaxDim];
    double ric[kMaxDim * kMaxDim];
    detail::NodeConnection cg, cr;
    for (std::size_t node = b; node < e; ++node) {
      if (grid.is_boundary(node)) continue;
      const auto g = s.metric.at(node);
      const auto rd1 = rj.d1.at(node), rd2 = rj.d2.at(node);
      const auto pd1 = pj.d1.at(node), pd2 = pj.d2.at(node);
      for (int k = 0; k < n3; ++k) dg[k] = rd1[k] + pd1[k];
      for (int k = 0; k < n4; ++k) ddg[k] = rd2[k] + pd2[k];
      for (double v : g)
        if (!std::isfinite(v))
          throw InstabilityError("non-finite metric at node " + std::to_string(node),
                                 static_cast<std::ptrdiff_t>(node));
      if (!detail::node_connection(n, g.data(), dg, ddg, cg))
        throw NonSpdError("metric is not positive definite at node " + std::to_string(node),
                          static_cast<std::ptrdiff_t>(node));
      if (!detail::node_connection(n, rj.value.at(node).data(), rd1.data(), rd2.data(), cr))
        throw NonSpdError("reference is not positive definite at node " +
                              std::to_string(node),
                          static_cast<std::ptrdiff_t>(node));
      detail::node_ricci(n, cg, ric);

      // W^k = g^pq D^k_pq with D = Gamma - Gamma_ref, and its derivatives.
      double Wup[kMaxDim] = {}, dWup[kMaxDim * kMaxDim] = {};  // dWup[m][k]
      for (int k = 0; k < n; ++k)
        for (int p = 0; p < n; ++p)
          for (int q = 0; q < n; ++q) {
            const int idx = k * n2 + p * n + q;
            const double D = cg.gamma[idx] - cr.gamma[idx];
            Wup[k] += cg.ginv[p * n + q] * D;
            for (int m = 0; m < n; ++m)
              dWup[m * n + k] += cg.dginv[m * n2 + p * n + q] * D +
                                 cg.ginv[p * n + q] * (cg.dgamma[m * n3 + idx] -
                                                       cr.dgamma[m * n3 + idx]);
          }
      // W_i = g_ik W^k; d_m W_i = d_m g_ik W^k + g_ik d_m W^k.
      double W[kMaxDim] = {}, dW[kMaxDim * kMaxDim] = {};  // dW[m][i]
      for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
          W[i] += g[i * n + k] * Wup[k];
          for (int m = 0; m < n; ++m)
            dW[m * n + i] += dg[m * n2 + i * n + k] * Wup[k] + g[i * n + k] * dWup[m * n + k];
        }
      auto dst = out.at(node);
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
          // nabla_i W_j + nabla_j W_i
          double lie = dW[i * n + j] + dW[j * n + i];
          for (int k = 0; k < n; ++k) lie -= 2.0 * cg.gamma[k * n2 + i * n + j] * W[k];
          const double v =
              -2.0 * 0.5 * (ric[i * n + j] + ric[j * n + i]) + lie -
              2.0 * (n - 1) * c * g[i * n + j];
          dst[i * n + j] = v;
          dst[j * n + i] = v;
        }
      node_speed[node] = std::sqrt(std::max(0.0, norm_sq_with(n, cg.ginv, dst.data())));
    }
  });
  if (speed) {
    double m = 0.0;
    for (double v : node_speed) m = std::max(m, v);
    *speed = m;
  }
  return out;
}

MetricField apply_step(const FlowState& s, const NodeField& rhs, double dt) {
  const int n = metric_dim(s.metric);
  const GridSpec& grid = s.metric.grid();
  MetricField next = s.metric;
  auto& nd = next.data();
  const auto& rd = rhs.data();
  for (std::size_t k = 0; k < nd.size(); ++k) nd[k] += dt * rd[k];
  pin_boundary(next, s.reference);
  double inv[kMaxDim * kMaxDim];
  for (std::size_t node = 0; node < next.num_nodes(); ++node) {
    if (grid.is_boundary(node)) continue;
    const auto g = next.at(node);
    for (double v : g)
      if (!std::isfinite(v))
        throw InstabilityError("non-finite metric after step at node " + std::to_string(node),
                               static_cast<std::ptrdiff_t>(node));
    if (!detail::spd_inverse(g.data(), n, inv))
      throw InstabilityError("metric lost positive definiteness at node " +
                                 std::to_string(node),
                             static_cast<std::ptrdiff_t>(node));
  }
  return next;
}

EigenRange node_generalized_range(int n, const double* a, const double* b, std::size_t node) {
  SmallMat A(n, n), B(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      A(i, j) = a[i * n + j];
      B(i, j) = b[i * n + j];
    }
  Eigen::LLT<SmallMat> llt(B);
  if (llt.info() != Eigen::Success)
    throw NonSpdError("comparison metric is not positive definite at node " +
                          std::to_string(node),
                      static_cast<std::ptrdiff_t>(node));
  SmallMat M = llt.matrixL().solve(A);
  SmallMat Mt = M.transpose();
  M = llt.matrixL().solve(Mt);
  M = 0.5 * (M + M.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<SmallMat> es(M, Eigen::EigenvaluesOnly);
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

/// Per-node reference data reused by every sample of a run.
struct DistanceContext {
  explicit DistanceContext(const MetricField& ref) : ref(ref), weights(volume_weights(ref)) {}

  void measure(const MetricField& gbar, double& l2, double& sup) const {
    const NodeField norms = tensor_norm_sq(subtract(gbar, ref), ref);
    l2 = 0.0;
    sup = 0.0;
    for (std::size_t node = 0; node < ref.num_nodes(); ++node) {
      const double v = norms.at(node)[0];
      l2 += v * weights.at(node)[0];
      sup = std::max(sup, std::sqrt(std::max(0.0, v)));
    }
  }

  const MetricField& ref;
  NodeField weights;
};

}  // namespace

void FlowConfig::validate() const {
  ball.validate();
  if (!(dt >= 0.0) || !std::isfinite(dt)) throw PreconditionError("dt must be >= 0");
  if (!(t_max > 0.0) || !std::isfinite(t_max)) throw PreconditionError("t_max must be > 0");
  if (!(tol >= 0.0)) throw PreconditionError("tol must be >= 0");
  if (!(rel_tol >= 0.0)) throw PreconditionError("rel_tol must be >= 0");
  if (!(eps_tol >= 0.0)) throw PreconditionError("eps_tol must be >= 0");
  if (!(truncation > 0.0 && truncation < 1.0))
    throw PreconditionError("truncation must lie in (0, 1)");
  if (!(epsilon_gate > 0.0)) throw PreconditionError("epsilon_gate must be > 0");
  if (max_retries < 0) throw PreconditionError("max_retries must be >= 0");
  if (sample_every < 1) throw PreconditionError("sample_every must be >= 1");
}

MetricField hyperbolic_reference(std::shared_ptr<const GridSpec> grid, const BallConfig& cfg) {
  cfg.validate();
  if (grid->dim() != cfg.dim) throw GridError("grid and ball dimensions differ");
  const int n = cfg.dim;
  MetricField out(grid, static_cast<std::size_t>(n * n));
  for (std::size_t node = 0; node < out.num_nodes(); ++node) {
    const std::vector<double> x = grid->position(node);
    const double lam = conformal_factor(cfg, std::span<const double>(x));
    auto dst = out.at(node);
    for (int i = 0; i < n; ++i) dst[i * n + i] = lam * lam;
  }
  return out;
}

MetricJet hyperbolic_reference_jet(std::shared_ptr<const GridSpec> grid, const BallConfig& cfg) {
  const int n = cfg.dim;
  const int n2 = n * n;
  MetricJet jet{hyperbolic_reference(grid, cfg), NodeField(grid, static_cast<std::size_t>(n2 * n)),
                NodeField(grid, static_cast<std::size_t>(n2 * n2))};
  const double r = cfg.curvature;
  for (std::size_t node = 0; node < jet.value.num_nodes(); ++node) {
    const std::vector<double> x = grid->position(node);
    double q = 0.0;
    for (double v : x) q += v * v;
    q *= r;
    const double w = 1.0 / (1.0 - q);
    const double w3 = w * w * w, w4 = w3 * w;
    auto d1 = jet.d1.at(node);
    auto d2 = jet.d2.at(node);
    for (int p = 0; p < n; ++p) {
      const double dphi = 16.0 * r * x[p] * w3;
      for (int i = 0; i < n; ++i) d1[p * n2 + i * n + i] = dphi;
      for (int s = 0; s < n; ++s) {
        const double ddphi = (p == s ? 16.0 * r * w3 : 0.0) + 96.0 * r * r * x[p] * x[s] * w4;
        for (int i = 0; i < n; ++i) d2[(p * n + s) * n2 + i * n + i] = ddphi;
      }
    }
  }
  return jet;
}

std::shared_ptr<const GridSpec> truncated_ball_grid(const BallConfig& cfg, int nodes,
                                                    double truncation) {
  cfg.validate();
  if (!(truncation > 0.0 && truncation < 1.0))
    throw PreconditionError("truncation must lie in (0, 1)");
  const double radius = cfg.curvature > 0.0 ? truncation / std::sqrt(cfg.curvature) : truncation;
  return std::make_shared<const GridSpec>(GridSpec::ball(cfg.dim, nodes, radius));
}

FlowState hyperbolic_state(std::shared_ptr<const GridSpec> grid, const BallConfig& cfg,
                           const MetricField& metric) {
  auto jet = std::make_shared<MetricJet>(hyperbolic_reference_jet(grid, cfg));
  if (metric.grid_ptr() != grid && !metric.grid().same_layout(*grid))
    throw GridError("metric does not live on the flow grid");
  FlowState s;
  s.curvature = cfg.curvature;
  s.reference = jet->value;
  s.metric = MetricField(grid, metric.comps());
  s.metric.data() = metric.data();
  pin_boundary(s.metric, s.reference);
  s.reference_jet = std::move(jet);
  return s;
}

FlowState sampled_state(const MetricField& metric, const MetricField& reference,
                        double curvature) {
  if (!metric.same_grid(reference)) throw GridError("metric and reference grids differ");
  FlowState s;
  s.curvature = curvature;
  s.reference = reference;
  s.metric = metric;
  pin_boundary(s.metric, s.reference);
  s.reference_jet = std::make_shared<MetricJet>(fd_jet(reference));
  return s;
}

MetricField conformal_bump(const MetricField& ref, double amplitude) {
  const GridSpec& g = ref.grid();
  double R2 = 0.0;
  for (std::size_t node = 0; node < ref.num_nodes(); ++node) {
    double s = 0.0;
    for (double v : g.position(node)) s += v * v;
    R2 = std::max(R2, s);
  }
  MetricField out = ref;
  for (std::size_t node = 0; node < ref.num_nodes(); ++node) {
    if (g.is_boundary(node)) continue;
    double s = 0.0;
    for (double v : g.position(node)) s += v * v;
    const double u = 1.0 - s / R2;
    const double f = 1.0 + amplitude * u * u;
    for (double& v : out.at(node)) v *= f;
  }
  return out;
}

NodeField flow_rhs(const FlowState& state, RescaleVariant variant) {
  return rhs_impl(state, variant, nullptr);
}

FlowState step(const FlowState& state, double dt, RescaleVariant variant) {
  if (!(dt >= 0.0) || !std::isfinite(dt)) throw PreconditionError("dt must be >= 0");
  FlowState next = state;
  if (dt == 0.0) return next;
  const NodeField rhs = flow_rhs(state, variant);
  next.metric = apply_step(state, rhs, dt);
  next.time = state.time + dt;
  return next;
}

EigenRange generalized_eigen_range(const MetricField& a, const MetricField& b) {
  const int n = metric_dim(a);
  if (!a.same_grid(b)) throw GridError("fields live on different grids");
  const std::size_t nodes = a.num_nodes();
  std::vector<EigenRange> per(nodes);
  parallel_for(nodes, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t node = lo; node < hi; ++node)
      per[node] = node_generalized_range(n, a.at(node).data(), b.at(node).data(), node);
  });
  EigenRange out{std::numeric_limits<double>::infinity(),
                 -std::numeric_limits<double>::infinity()};
  for (const EigenRange& e : per) {
    out.min = std::min(out.min, e.min);
    out.max = std::max(out.max, e.max);
  }
  return out;
}

double epsilon_closeness(const MetricField& gbar, const MetricField& ref) {
  const EigenRange e = generalized_eigen_range(gbar, ref);
  if (!(e.min > 0.0))
    throw NonSpdError("metric is not positive definite relative to the reference");
  return std::max({0.0, e.max - 1.0, 1.0 / e.min - 1.0});
}

double default_time_step(const MetricField& gbar) {
  const int n = metric_dim(gbar);
  const GridSpec& g = gbar.grid();
  double h = std::numeric_limits<double>::infinity();
  for (double s : g.spacing()) h = std::min(h, s);
  double lmin = std::numeric_limits<double>::infinity();
  for (std::size_t node = 0; node < gbar.num_nodes(); ++node) {
    SmallMat A(n, n);
    const auto v = gbar.at(node);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) A(i, j) = v[i * n + j];
    Eigen::SelfAdjointEigenSolver<SmallMat> es(A, Eigen::EigenvaluesOnly);
    lmin = std::min(lmin, es.eigenvalues().minCoeff());
  }
  if (!(lmin > 0.0))
    throw NonSpdError("metric is not positive definite; no stable time step exists");
  return 0.1 * h * h * lmin;
}

FlowResult evolve(const MetricField& initial, const FlowConfig& cfg,
                  const FlowObserver& observer) {
  cfg.validate();
  return evolve(hyperbolic_state(initial.grid_ptr(), cfg.ball, initial), cfg, observer);
}

FlowResult evolve(const FlowState& initial, const FlowConfig& cfg,
                  const FlowObserver& observer) {
  cfg.validate();
  validate_metric(initial.metric);
  FlowState state = initial;
  pin_boundary(state.metric, state.reference);

  const double eps0 = epsilon_closeness(state.metric, state.reference);
  if (eps0 > cfg.epsilon_gate) {
    std::ostringstream os;
    os << "initial metric is not " << cfg.epsilon_gate
       << "-close to the reference (epsilon = " << eps0 << ")";
    throw PreconditionError(os.str());
  }

  FlowDiagnostics diag;
  double dt = cfg.dt > 0.0 ? cfg.dt : default_time_step(state.metric);
  const DistanceContext dist(state.reference);

  double l2 = 0.0, sup = 0.0;
  dist.measure(state.metric, l2, sup);
  const double l2_0 = l2, sup_0 = sup;
  double C = 0.0;
  double max_sup = sup;

  auto record = [&](double eps) {
    FlowSample s{state.time, l2, sup, eps, C};
    diag.samples.push_back(s);
    if (observer) observer(state, s);
  };
  auto done = [&](double eps_now) {
    if (l2 <= cfg.tol || l2 <= cfg.rel_tol * l2_0) return true;
    return cfg.eps_tol > 0.0 && eps_now <= cfg.eps_tol;
  };

  record(eps0);
  bool converged = done(eps0);
  bool last_recorded = true;
  const double t_end = cfg.t_max;
  while (!converged && state.time < t_end * (1.0 - 1e-12)) {
    const double h = std::min(dt, t_end - state.time);
    double speed = 0.0;
    MetricField next;
    try {
      const NodeField rhs = rhs_impl(state, cfg.variant, &speed);
      next = apply_step(state, rhs, h);
    } catch (const InstabilityError&) {
      if (diag.retries >= cfg.max_retries) throw;
      ++diag.retries;
      dt *= 0.5;
      continue;
    }
    state.metric = std::move(next);
    state.time += h;
    C += h * speed;
    ++diag.steps;
    dist.measure(state.metric, l2, sup);
    max_sup = std::max(max_sup, sup);
    const double eps_now =
        cfg.eps_tol > 0.0 ? epsilon_closeness(state.metric, state.reference) : -1.0;
    converged = done(eps_now);
    last_recorded = false;
    if (converged || diag.steps % static_cast<std::size_t>(cfg.sample_every) == 0) {
      record(eps_now >= 0.0 ? eps_now : epsilon_closeness(state.metric, state.reference));
      last_recorded = true;
    }
  }
  if (!last_recorded) record(epsilon_closeness(state.metric, state.reference));

  diag.dt = dt;
  diag.converged = converged;
  diag.status = converged ? "converged" : "t_max reached before tolerance";
  diag.stability_constant = sup_0 > 0.0 ? max_sup / sup_0 : 1.0;
  try {
    const DecayFit fit = fit_decay_rate(diag);
    diag.fitted_rate = fit.rate;
    diag.fit_r2 = fit.r2;
    diag.fit_valid = true;
  } catch (const PreconditionError&) {
    diag.fit_valid = false;
  }
  return {std::move(state.metric), std::move(diag)};
}

DecayFit fit_decay_rate(const FlowDiagnostics& diag) {
  const std::size_t total = diag.samples.size();
  const std::size_t skip = total / 10;
  std::vector<double> ts, ys;
  for (std::size_t k = skip; k < total; ++k) {
    const FlowSample& s = diag.samples[k];
    if (s.l2_dist_sq > 0.0 && std::isfinite(s.l2_dist_sq)) {
      ts.push_back(s.t);
      ys.push_back(std::log(s.l2_dist_sq));
    }
  }
  if (ts.size() < 10)
    throw PreconditionError("decay fit needs at least 10 positive samples after burn-in, got " +
                            std::to_string(ts.size()));
  const double m = static_cast<double>(ts.size());
  double tm = 0.0, ym = 0.0;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    tm += ts[k];
    ym += ys[k];
  }
  tm /= m;
  ym /= m;
  double stt = 0.0, sty = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    stt += (ts[k] - tm) * (ts[k] - tm);
    sty += (ts[k] - tm) * (ys[k] - ym);
    syy += (ys[k] - ym) * (ys[k] - ym);
  }
  if (!(stt > 0.0)) throw PreconditionError("decay fit needs distinct sample times");
  if (std::all_of(ys.begin(), ys.end(), [&](double y) { return y == ys.front(); })) return {0.0, 1.0};
  const double slope = sty / stt;
  double ssr = 0.0;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const double res = ys[k] - (ym + slope * (ts[k] - tm));
    ssr += res * res;
  }
  DecayFit fit;
  fit.rate = slope == 0.0 ? 0.0 : -slope;
  fit.r2 = syy > 0.0 ? 1.0 - ssr / syy : 1.0;
  return fit;
}

EvolutionInequalityReport check_evolution_inequality(const FlowState& state,
                                                     RescaleVariant variant) {
  const int n = metric_dim(state.metric);
  const int n2 = n * n, n3 = n2 * n;
  const GridSpec& grid = state.metric.grid();
  const NodeField h = subtract(state.metric, state.reference);
  const NodeField f = tensor_norm_sq(h, state.reference);
  const NodeField df = partials(f);
  const NodeField ddf = second_partials(f);
  const NodeField dh = partials(h);
  const NodeField rhs = flow_rhs(state, variant);
  const MetricJet& rj = *state.reference_jet;

  EvolutionInequalityReport rep;
  rep.residual = NodeField(state.metric.grid_ptr(), 1);
  std::vector<double> scale(state.metric.num_nodes(), 0.0);
  parallel_for(state.metric.num_nodes(), [&](std::size_t b, std::size_t e) {
    double dg[kMaxDim * kMaxDim * kMaxDim];
    double rinv[kMaxDim * kMaxDim];
    detail::NodeConnection cg;
    for (std::size_t node = b; node < e; ++node) {
      if (grid.is_boundary(node)) continue;
      const auto g = state.metric.at(node);
      const auto rd1 = rj.d1.at(node);
      const auto hd = dh.at(node);
      for (int k = 0; k < n3; ++k) dg[k] = rd1[k] + hd[k];
      if (!detail::node_connection(n, g.data(), dg, nullptr, cg) ||
          !detail::spd_inverse(state.reference.at(node).data(), n, rinv))
        throw NonSpdError("metric is not positive definite at node " + std::to_string(node),
                          static_cast<std::ptrdiff_t>(node));
      // Laplacian of f with the connection of gbar.
      const auto d1 = df.at(node);
      const auto d2 = ddf.at(node);
      double lap = 0.0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          double hess = d2[i * n + j];
          for (int k = 0; k < n; ++k) hess -= cg.gamma[k * n2 + i * n + j] * d1[k];
          lap += cg.ginv[i * n + j] * hess;
        }
      // nabla_p h_ij and its squared norm under the reference.
      const auto hv = h.at(node);
      double nab[kMaxDim * kMaxDim * kMaxDim];
      for (int p = 0; p < n; ++p)
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            double s = hd[p * n2 + i * n + j];
            for (int q = 0; q < n; ++q)
              s -= cg.gamma[q * n2 + p * n + i] * hv[q * n + j] +
                   cg.gamma[q * n2 + p * n + j] * hv[i * n + q];
            nab[p * n2 + i * n + j] = s;
          }
      double grad_sq = 0.0;
      for (int p = 0; p < n; ++p)
        for (int q = 0; q < n; ++q) {
          const double rpq = rinv[p * n + q];
          if (rpq == 0.0) continue;
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
              for (int a = 0; a < n; ++a)
                for (int c = 0; c < n; ++c)
                  grad_sq += rpq * rinv[i * n + a] * rinv[j * n + c] * nab[p * n2 + i * n + j] *
                             nab[q * n2 + a * n + c];
        }
      // d/dt |h|^2 = 2 <h, rhs> under the reference.
      const auto rv = rhs.at(node);
      double lhs = 0.0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          for (int a = 0; a < n; ++a)
            for (int c = 0; c < n; ++c)
              lhs += 2.0 * rinv[i * n + a] * rinv[j * n + c] * hv[i * n + j] * rv[a * n + c];
      const double fv = f.at(node)[0];
      const double ineq = lap - 2.0 * grad_sq + 4.0 * fv;
      rep.residual.at(node)[0] = lhs - ineq;
      scale[node] = std::abs(lap) + 2.0 * grad_sq + 4.0 * fv;
    }
  });
  rep.max_violation = -std::numeric_limits<double>::infinity();
  for (std::size_t node = 0; node < state.metric.num_nodes(); ++node) {
    if (grid.is_boundary(node)) continue;
    rep.scale = std::max(rep.scale, scale[node]);
    const double v = rep.residual.at(node)[0];
    if (v > rep.max_violation) {
      rep.max_violation = v;
      rep.worst_node = static_cast<std::ptrdiff_t>(node);
    }
  }
  if (rep.worst_node < 0) rep.max_violation = 0.0;
  return rep;
}

EquivalenceReport uniform_equivalence_monitor(const FlowDiagnostics& diag,
                                              const MetricField& g0, const MetricField& gt) {
  EquivalenceReport rep;
  rep.C = diag.samples.empty() ? 0.0 : diag.samples.back().metric_speed_integral;
  const EigenRange e = generalized_eigen_range(gt, g0);
  rep.min_ratio = e.min;
  rep.max_ratio = e.max;
  constexpr double slack = 1e-6;
  rep.holds = e.min >= std::exp(-rep.C) - slack && e.max <= std::exp(rep.C) + slack;
  return rep;
}

double linearized_flow(double h0, double t, double kappa) {
  if (!(kappa > 0.0)) throw PreconditionError("kappa must be > 0");
  return h0 * std::exp(-kappa * t);
}

}  // namespace hypflow
