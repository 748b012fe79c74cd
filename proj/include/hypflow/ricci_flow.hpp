#pragma once

// Explicit time integration of the rescaled Ricci-DeTurck flow
//
//   d/dt gbar = -2 Ric(gbar) + nabla_i W_j + nabla_j W_i - 2 (n-1) c gbar
//   W_i = gbar^pq gbar_ij (Gamma[gbar]^j_pq - Gamma[ref]^j_pq)
//
// on a truncated Poincare ball with the boundary pinned to the hyperbolic
// reference metric, plus the diagnostics used to study its convergence.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hypflow/geometry.hpp"
#include "hypflow/metric_field.hpp"
#include "hypflow/tensor_calc.hpp"

namespace hypflow {

/// paper_exact: c = 1 (the hyperbolic metric is stationary only for r = 1).
/// r_scaled:    c = r (stationary for any curvature).
enum class RescaleVariant { paper_exact, r_scaled };

struct FlowConfig {
  BallConfig ball{2, 1.0};
  RescaleVariant variant = RescaleVariant::paper_exact;
  double dt = 0.0;          // 0 selects 0.1 * h^2 / max_node lambda_max(gbar^-1)
  double t_max = 5.0;
  double tol = 0.0;         // absolute stop on the L2 distance squared
  double rel_tol = 1e-4;    // stop when L2 distance squared <= rel_tol * initial
  double eps_tol = 0.0;     // optional stop on epsilon-closeness (0 disables)
  double truncation = 0.9;  // domain radius as a fraction of 1/sqrt(r)
  double epsilon_gate = 0.25;
  int max_retries = 4;      // dt halvings allowed after an unstable step
  int sample_every = 10;

  void validate() const;
};

struct FlowState {
  double time = 0.0;
  double curvature = 1.0;
  MetricField metric;
  MetricField reference;
  /// Derivatives of the reference. Exact for the analytic hyperbolic metric;
  /// finite differences of `reference` otherwise.
  std::shared_ptr<const MetricJet> reference_jet;
};

/// lambda_x^2 * I at every active node. Throws OutsideBallError when a
/// node lies outside the ball.
MetricField hyperbolic_reference(std::shared_ptr<const GridSpec> grid, const BallConfig& cfg);

/// Exact value, gradient and Hessian of lambda_x^2 * I at every node.
MetricJet hyperbolic_reference_jet(std::shared_ptr<const GridSpec> grid, const BallConfig& cfg);

/// Grid over the truncated ball of radius truncation / sqrt(r) (radius
/// `truncation` when r = 0).
std::shared_ptr<const GridSpec> truncated_ball_grid(const BallConfig& cfg, int nodes,
                                                    double truncation);

/// State with the analytic hyperbolic reference on `grid`.
FlowState hyperbolic_state(std::shared_ptr<const GridSpec> grid, const BallConfig& cfg,
                           const MetricField& metric);

/// State with a sampled reference whose derivatives come from finite differences.
FlowState sampled_state(const MetricField& metric, const MetricField& reference,
                        double curvature);

/// (1 + amplitude * (1 - |x|^2/R^2)^2) * ref at interior nodes, ref on the
/// boundary, where R is the largest node radius.
MetricField conformal_bump(const MetricField& ref, double amplitude);

/// Right-hand side at interior nodes; zero on boundary nodes.
NodeField flow_rhs(const FlowState& state, RescaleVariant variant);

/// One explicit Euler step with the boundary re-pinned. Throws
/// InstabilityError naming the node where NaN or loss of positive
/// definiteness occurred.
FlowState step(const FlowState& state, double dt, RescaleVariant variant);

/// Smallest eps with (1+eps)^-1 ref <= gbar <= (1+eps) ref at every node.
double epsilon_closeness(const MetricField& gbar, const MetricField& ref);

/// Extreme generalized eigenvalues of a against b over all nodes.
struct EigenRange {
  double min = 0.0;
  double max = 0.0;
};
EigenRange generalized_eigen_range(const MetricField& a, const MetricField& b);

/// 0.1 * h_min^2 / max over nodes of lambda_max(gbar^-1).
double default_time_step(const MetricField& gbar);

struct FlowSample {
  double t = 0.0;
  double l2_dist_sq = 0.0;
  double sup_dist = 0.0;
  double epsilon = 0.0;
  double metric_speed_integral = 0.0;  // C = sum dt * sup_x |d gbar/dt|_gbar
};

struct FlowDiagnostics {
  std::vector<FlowSample> samples;
  double fitted_rate = 0.0;
  double fit_r2 = 0.0;
  bool fit_valid = false;
  std::size_t steps = 0;
  int retries = 0;
  double dt = 0.0;
  bool converged = false;
  /// max_t sup|gbar(t) - ref| / sup|gbar(0) - ref| (1 when the start is exact).
  double stability_constant = 1.0;
  std::string status;
};

struct FlowResult {
  MetricField metric;
  FlowDiagnostics diagnostics;
};

/// Observer invoked with the state at every recorded sample.
using FlowObserver = std::function<void(const FlowState&, const FlowSample&)>;

/// Integrates until the L2 distance drops below tolerance or t_max is
/// reached. Non-convergence is reported in diagnostics, not thrown. Throws
/// PreconditionError when the start is not epsilon_gate-close to the
/// reference.
FlowResult evolve(const MetricField& initial, const FlowConfig& cfg,
                  const FlowObserver& observer = {});
FlowResult evolve(const FlowState& initial, const FlowConfig& cfg,
                  const FlowObserver& observer = {});

struct DecayFit {
  double rate = 0.0;
  double r2 = 0.0;
};

/// Least-squares slope of log(l2_dist_sq) against t after dropping the
/// first 10% of samples. Requires at least 10 remaining positive samples.
DecayFit fit_decay_rate(const FlowDiagnostics& diag);

struct EvolutionInequalityReport {
  NodeField residual;          // LHS - RHS per node, zero on the boundary
  double max_violation = 0.0;  // max over interior nodes of LHS - RHS
  double scale = 0.0;          // max over interior of |Lap f| + 2|nabla h|^2 + 4 f
  std::ptrdiff_t worst_node = -1;
};

/// Compares d/dt |gbar - ref|^2 (through the flow right-hand side) with
/// Lap |gbar - ref|^2 - 2 |nabla(gbar - ref)|^2 + 4 |gbar - ref|^2 at
/// interior nodes. Norms raise indices with the reference metric; the
/// Laplacian and connection belong to gbar.
EvolutionInequalityReport check_evolution_inequality(const FlowState& state,
                                                     RescaleVariant variant);

struct EquivalenceReport {
  double C = 0.0;
  double min_ratio = 1.0;
  double max_ratio = 1.0;
  bool holds = true;
};

/// Checks e^-C g0 <= gt <= e^C g0 per node (1e-6 slack) with C the metric
/// speed integral accumulated in `diag`.
EquivalenceReport uniform_equivalence_monitor(const FlowDiagnostics& diag,
                                              const MetricField& g0, const MetricField& gt);

/// h0 * exp(-kappa t).
double linearized_flow(double h0, double t, double kappa);

}  // namespace hypflow
