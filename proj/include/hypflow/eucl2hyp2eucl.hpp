#pragma once

// Training pipeline that routes network outputs through the Poincare ball:
// four translated forwards, exponential map, a translation-difference
// regularizer on the conformal factor, a metric-stabilizing flow step,
// logarithmic map back to Euclidean space, softmax and a squared-error
// loss. Gradients at the ball stage are preconditioned by the inverse
// metric.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hypflow/datasets.hpp"
#include "hypflow/geometry.hpp"
#include "hypflow/nn.hpp"
#include "json.hpp"

namespace hypflow {

/// Row shifts k1, k2 and column shifts j1, j2 in pixels.
struct ShiftSpec {
  int k1 = 0;
  int k2 = 2;
  int j1 = 0;
  int j2 = 2;

  /// |shift| <= 3, k1 != k2, j1 != j2.
  void validate() const;
};

/// Index of each translated copy in the arrays below.
enum ShiftSlot : int { kK1 = 0, kK2 = 1, kJ1 = 2, kJ2 = 3 };

enum class FlowBackend { none, linearized, pde };

std::string to_string(FlowBackend b);
FlowBackend parse_flow_backend(const std::string& s);

enum class Arm { eucl2hyp2eucl, euclidean };

struct TrainConfig {
  double alpha = 0.1;
  double curvature = 0.01;
  double epsilon_target = 0.25;
  ShiftSpec shifts;
  TranslateMode translate_mode = TranslateMode::zero_pad;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::size_t hidden = 64;
  Activation activation = Activation::relu;
  double lr0 = 1.0;
  double weight_decay = 5e-4;
  std::uint64_t seed = 1;
  FlowBackend flow_backend = FlowBackend::linearized;
  double kappa = 2.0;
  double flow_tol = 1e-4;
  int pde_nodes = 17;
  /// Divide the ball-stage cotangent by the metric. Disabling it yields the
  /// plain gradient of the loss (used by the finite-difference check).
  bool precondition = true;

  void validate() const;
};

/// Conformal log-perturbation per sample: gbar = e^u * g^H at the
/// sample's embedded point.
struct PerturbationModel {
  std::vector<double> u;
};

struct FlowReport {
  double time = 0.0;        // flow time needed to reach flow_tol
  double eps_before = 0.0;  // epsilon-closeness of e^u to 1
  double eps_after = 0.0;
  std::size_t steps = 0;    // PDE steps (0 for the closed-form backend)
  bool skipped = false;
};

/// Points in the ball (one row per sample) and lambda^2 at each point.
struct EmbeddedSet {
  Matrix points;
  std::vector<double> lambda_sq;
};

/// Outputs of the network on the batch translated by each shift, in slot
/// order k1, k2, j1, j2. Fills per-shift traces when given.
std::array<Matrix, 4> translated_forward(const DenseNet& net, std::span<const ImageSample> batch,
                                         const ShiftSpec& shifts, TranslateMode mode,
                                         std::array<ForwardTrace, 4>* traces = nullptr);

/// Flattens images into rows.
Matrix to_matrix(std::span<const ImageSample> batch);

/// Row-wise exponential map with lambda^2 recorded per point.
EmbeddedSet embed(const Matrix& outputs, const BallConfig& ball);

/// [ (q_k1 - q_k2)/(k1 - k2) - (q_j1 - q_j2)/(j1 - j2) ]^2 for one sample.
double regularization_sample(const std::array<double, 4>& lambda_sq, const ShiftSpec& shifts);

/// Batch mean of regularization_sample.
double regularization_estimate(std::span<const double> lk1, std::span<const double> lk2,
                               std::span<const double> lj1, std::span<const double> lj2,
                               const ShiftSpec& shifts);

/// Batch mean of || (G_k1 - G_k2)/(k1 - k2) - (G_j1 - G_j2)/(j1 - j2) ||_F^2
/// for full metric matrices at the four shifts.
double regularization_raw(const std::vector<std::array<Eigen::MatrixXd, 4>>& metrics,
                          const ShiftSpec& shifts);

/// Bounds on the raw regularizer for metrics in the epsilon band, scalar
/// form with the Euclidean prefactor reduced to 1:
///   upper = [((1+e)^2 q_k1 - q_k2)/(k1-k2) - (q_j1 - (1+e)^2 q_j2)/(j1-j2)]^2 / (1+e)
///   lower = [(q_k1 - (1+e)^2 q_k2)/(k1-k2) - ((1+e)^2 q_j1 - q_j2)/(j1-j2)]^2 / (1+e)
double bound_upper(const std::array<double, 4>& lambda_sq, const ShiftSpec& shifts, double eps);
double bound_lower(const std::array<double, 4>& lambda_sq, const ShiftSpec& shifts, double eps);

/// u_s = clip(log(arithmetic mean / geometric mean of lambda^2 over the
/// shifts), +-log(1 + eps)).
PerturbationModel estimate_perturbation(const std::array<EmbeddedSet, 4>& emb, double eps);

/// Drives e^u toward 1 until max |e^u - 1| <= flow_tol. Throws
/// PreconditionError when e^u is not epsilon_target-close to 1.
std::pair<PerturbationModel, FlowReport> flow_step(const PerturbationModel& p,
                                                   const TrainConfig& cfg);

/// Flow time after which the closed-form backend meets the tolerance:
/// log(max|u| / log(1 + tol)) / kappa, aimed a few ulps inside the
/// tolerance, or 0 when already within it.
double linearized_flow_time(double max_abs_u, double tol, double kappa);

/// Batch-mean squared error of y against one-hot labels plus alpha * N.
double loss_total(const Matrix& y, std::span<const int> labels, double N, double alpha);

/// Everything the backward pass needs from one hybrid forward.
struct HybridForward {
  std::array<Matrix, 4> outputs;
  std::array<ForwardTrace, 4> traces;
  std::array<EmbeddedSet, 4> embedded;
  PerturbationModel u_before;
  PerturbationModel u_after;
  FlowReport flow;
  Matrix returned;  // log map of the k1 embedding
  Matrix probs;
  std::vector<int> labels;
  double sq_error = 0.0;
  double N = 0.0;
  double raw_N = 0.0;  // n * mean e^{2u} N_s with the post-flow u
  double loss = 0.0;
};

HybridForward hybrid_forward(const DenseNet& net, std::span<const ImageSample> batch,
                             const TrainConfig& cfg);

/// Cotangent of the squared-error term at the k1 ball points, divided by
/// the metric when cfg.precondition is set.
Matrix ball_cotangent(const HybridForward& fwd, const TrainConfig& cfg);

/// Reverse pass of the hybrid loss: softmax, log map, ball-stage
/// preconditioning, exp map Jacobian, then the network. The N term
/// contributes through lambda^2 and the exp map without preconditioning.
GradientSet backward_hybrid(const DenseNet& net, const HybridForward& fwd,
                            const TrainConfig& cfg);

/// sqrt(g(dxi, dxi)).
double ball_radius(const Eigen::MatrixXd& g, std::span<const double> dxi);

struct RadiusStats {
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
};
RadiusStats radius_stats(std::span<const double> radii);

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double N = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double flow_time = 0.0;
  RadiusStats radius;
};

struct TrainResult {
  DenseNet net;
  std::vector<EpochLog> logs;
  bool diverged = false;
  std::string status;
};

/// Network with cfg.hidden units for the dataset's shape, seeded from cfg.seed.
DenseNet make_network(const Dataset& ds, const TrainConfig& cfg);

/// SGD with a cosine schedule over cfg.epochs. The euclidean arm trains on
/// softmax of the unshifted outputs and only monitors N and the radius.
TrainResult train(DenseNet net, const Dataset& ds, const TrainConfig& cfg,
                  Arm arm = Arm::eucl2hyp2eucl);

/// Fraction of samples whose largest output matches the label.
double evaluate(const DenseNet& net, std::span<const ImageSample> samples);

void write_epoch_csv(std::ostream& os, const std::vector<EpochLog>& logs);

struct ComparisonPair {
  std::uint64_t seed = 0;
  double hyp_train_acc = 0.0;
  double hyp_test_acc = 0.0;
  double euc_train_acc = 0.0;
  double euc_test_acc = 0.0;
  double hyp_N_first = 0.0;
  double hyp_N_final = 0.0;
  bool diverged = false;
  std::vector<EpochLog> hyp_logs;
  std::vector<EpochLog> euc_logs;
};

struct ComparisonReport {
  std::vector<ComparisonPair> pairs;
  double hyp_test_mean = 0.0, hyp_test_std = 0.0;
  double euc_test_mean = 0.0, euc_test_std = 0.0;
  double hyp_train_mean = 0.0, euc_train_mean = 0.0;
  double gap = 0.0;  // hyp_test_mean - euc_test_mean

  nlohmann::json to_json() const;
};

/// Trains both arms from the same initialization and data order for each seed.
ComparisonReport run_comparison(const Dataset& ds, const TrainConfig& cfg,
                                std::span<const std::uint64_t> seeds);

struct PipelineGradCheck {
  GradCheckReport params;      // full pipeline, preconditioning off
  double ball_stage_error = 0.0;  // preconditioned cotangent vs FD / lambda^2
};

/// Central-difference verification of the hybrid gradients.
PipelineGradCheck gradcheck_pipeline(const DenseNet& net, std::span<const ImageSample> batch,
                                     const TrainConfig& cfg, double step = 1e-5);

}  // namespace hypflow
