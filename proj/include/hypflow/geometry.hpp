#pragma once

// Closed-form primitives of the Poincare ball D_r^n = { x : r |x|^2 < 1 }
// with the conformal metric g_x = lambda_x^2 * I, lambda_x = 2 / (1 - r|x|^2).
// Exponential and logarithmic maps are taken at the origin. For r = 0 the
// ball degenerates to R^n and both maps are the identity.

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace hypflow {

struct BallConfig {
  int dim = 2;
  double curvature = 1.0;  // r >= 0; sectional curvature is -r

  void validate() const;
};

struct BallPoint {
  std::vector<double> coords;
};

struct TangentVector {
  std::vector<double> coords;
};

/// Largest norm exp_map produces, as a fraction of the ball radius 1/sqrt(r).
inline constexpr double kExpClampFraction = 1.0 - 1e-5;
/// log_map rejects points with r|x|^2 at or above this value.
inline constexpr double kLogRejectThreshold = 1.0 - 1e-12;

/// lambda_x = 2 / (1 - r|x|^2). Throws OutsideBallError outside the ball.
double conformal_factor(const BallConfig& cfg, std::span<const double> x);
inline double conformal_factor(const BallConfig& cfg, const BallPoint& x) {
  return conformal_factor(cfg, std::span<const double>(x.coords));
}

/// lambda_x^2 * I.
Eigen::MatrixXd metric_at(const BallConfig& cfg, const BallPoint& x);

BallPoint exp_map(const BallConfig& cfg, const TangentVector& mu);
TangentVector log_map(const BallConfig& cfg, const BallPoint& nu);

/// Euclidean gradient divided by lambda_x^2 (steepest descent direction of
/// the hyperbolic metric).
std::vector<double> riemannian_gradient(const BallConfig& cfg,
                                        const BallPoint& x,
                                        std::span<const double> eucl_grad);

/// Solves g d = eucl_grad by Cholesky. Throws NonSpdError when g is not
/// symmetric positive definite.
Eigen::VectorXd metric_precondition(const Eigen::MatrixXd& g,
                                    const Eigen::VectorXd& eucl_grad);

// Reverse-mode helpers used by the trainer.

/// J_exp(mu)^T * cot, including the clamped regime.
std::vector<double> exp_map_vjp(const BallConfig& cfg, std::span<const double> mu,
                                std::span<const double> cot);

/// J_log(nu)^T * cot.
std::vector<double> log_map_vjp(const BallConfig& cfg, std::span<const double> nu,
                                std::span<const double> cot);

/// d(lambda_x^2)/dx = 2 r lambda_x^3 x.
std::vector<double> conformal_factor_sq_grad(const BallConfig& cfg,
                                             std::span<const double> x);

}  // namespace hypflow
