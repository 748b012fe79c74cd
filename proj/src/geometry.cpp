#include "hypflow/geometry.hpp"

#include <cmath>
#include <sstream>

#include "hypflow/error.hpp"

namespace hypflow {
namespace {

double norm_sq(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

void check_finite(std::span<const double> x, const char* what) {
  for (double v : x)
    if (!std::isfinite(v))
      throw PreconditionError(std::string(what) + " has non-finite entries");
}

void check_dim(const BallConfig& cfg, std::size_t n) {
  if (static_cast<std::size_t>(cfg.dim) != n)
    throw PreconditionError("vector length " + std::to_string(n) +
                            " does not match ball dimension " +
                            std::to_string(cfg.dim));
}

double in_ball_radius_sq(const BallConfig& cfg, std::span<const double> x) {
  const double q = cfg.curvature * norm_sq(x);
  if (!(q < 1.0)) {
    std::ostringstream os;
    os << "point outside ball: r*|x|^2 = " << q;
    throw OutsideBallError(os.str());
  }
  return q;
}

}  // namespace

void BallConfig::validate() const {
  if (dim < 1) throw PreconditionError("ball dimension must be >= 1");
  if (!(curvature >= 0.0) || !std::isfinite(curvature))
    throw PreconditionError("curvature parameter must be finite and >= 0");
}

double conformal_factor(const BallConfig& cfg, std::span<const double> x) {
  const double q = in_ball_radius_sq(cfg, x);
  return 2.0 / (1.0 - q);
}

Eigen::MatrixXd metric_at(const BallConfig& cfg, const BallPoint& x) {
  check_dim(cfg, x.coords.size());
  const double lambda = conformal_factor(cfg, x);
  return lambda * lambda * Eigen::MatrixXd::Identity(cfg.dim, cfg.dim);
}

BallPoint exp_map(const BallConfig& cfg, const TangentVector& mu) {
  check_dim(cfg, mu.coords.size());
  check_finite(mu.coords, "tangent vector");
  BallPoint out{mu.coords};
  if (cfg.curvature == 0.0) return out;
  const double sr = std::sqrt(cfg.curvature);
  const double s = std::sqrt(norm_sq(mu.coords));
  if (s == 0.0) return out;
  const double a = sr * s;
  double t = std::tanh(a);
  if (t > kExpClampFraction) t = kExpClampFraction;
  const double scale = t / a;
  for (double& v : out.coords) v *= scale;
  return out;
}

TangentVector log_map(const BallConfig& cfg, const BallPoint& nu) {
  check_dim(cfg, nu.coords.size());
  check_finite(nu.coords, "ball point");
  TangentVector out{nu.coords};
  if (cfg.curvature == 0.0) return out;
  const double q = cfg.curvature * norm_sq(nu.coords);
  if (!(q < kLogRejectThreshold)) {
    std::ostringstream os;
    os << "log map undefined near the boundary: r*|x|^2 = " << q;
    throw OutsideBallError(os.str());
  }
  if (q == 0.0) return out;
  const double b = std::sqrt(q);
  const double scale = std::atanh(b) / b;
  for (double& v : out.coords) v *= scale;
  return out;
}

std::vector<double> riemannian_gradient(const BallConfig& cfg,
                                        const BallPoint& x,
                                        std::span<const double> eucl_grad) {
  check_dim(cfg, x.coords.size());
  check_dim(cfg, eucl_grad.size());
  const double lambda = conformal_factor(cfg, x);
  const double inv = 1.0 / (lambda * lambda);
  std::vector<double> out(eucl_grad.begin(), eucl_grad.end());
  for (double& v : out) v *= inv;
  return out;
}

Eigen::VectorXd metric_precondition(const Eigen::MatrixXd& g,
                                    const Eigen::VectorXd& eucl_grad) {
  if (g.rows() != g.cols() || g.rows() != eucl_grad.size())
    throw PreconditionError("metric/gradient shape mismatch");
  const double scale = g.cwiseAbs().maxCoeff();
  if ((g - g.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, scale))
    throw NonSpdError("metric is not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(g);
  if (llt.info() != Eigen::Success)
    throw NonSpdError("metric is not positive definite");
  return llt.solve(eucl_grad);
}

std::vector<double> exp_map_vjp(const BallConfig& cfg, std::span<const double> mu,
                                std::span<const double> cot) {
  std::vector<double> out(cot.begin(), cot.end());
  if (cfg.curvature == 0.0) return out;
  const double sr = std::sqrt(cfg.curvature);
  const double s = std::sqrt(norm_sq(mu));
  const double a = sr * s;
  double mu_dot = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) mu_dot += mu[i] * cot[i];

  if (std::tanh(a) > kExpClampFraction) {
    // p = c * mu / |mu|: J = (c/s) (I - mu mu^T / s^2)
    const double c = kExpClampFraction / sr;
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = (c / s) * (cot[i] - mu[i] * mu_dot / (s * s));
    return out;
  }
  // p = f(s) mu with f = tanh(a)/a: J = f I + (f'(s)/s) mu mu^T
  double f, fp_over_s;
  if (a < 1e-3) {
    const double a2 = a * a;
    f = 1.0 - a2 / 3.0 + 2.0 * a2 * a2 / 15.0;
    fp_over_s = cfg.curvature * (-2.0 / 3.0 + 8.0 * a2 / 15.0);
  } else {
    const double t = std::tanh(a);
    const double sech2 = 1.0 - t * t;
    f = t / a;
    fp_over_s = cfg.curvature * (a * sech2 - t) / (a * a * a);
  }
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = f * cot[i] + fp_over_s * mu_dot * mu[i];
  return out;
}

std::vector<double> log_map_vjp(const BallConfig& cfg, std::span<const double> nu,
                                std::span<const double> cot) {
  std::vector<double> out(cot.begin(), cot.end());
  if (cfg.curvature == 0.0) return out;
  const double b = std::sqrt(cfg.curvature * norm_sq(nu));
  if (!(b * b < kLogRejectThreshold))
    throw OutsideBallError("log map undefined near the boundary");
  double nu_dot = 0.0;
  for (std::size_t i = 0; i < nu.size(); ++i) nu_dot += nu[i] * cot[i];
  // x = F(s) nu with F = artanh(b)/b: J = F I + (F'(s)/s) nu nu^T
  double F, Fp_over_s;
  if (b < 1e-3) {
    const double b2 = b * b;
    F = 1.0 + b2 / 3.0 + b2 * b2 / 5.0;
    Fp_over_s = cfg.curvature * (2.0 / 3.0 + 4.0 * b2 / 5.0);
  } else {
    const double at = std::atanh(b);
    F = at / b;
    Fp_over_s = cfg.curvature * (b / (1.0 - b * b) - at) / (b * b * b);
  }
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = F * cot[i] + Fp_over_s * nu_dot * nu[i];
  return out;
}

std::vector<double> conformal_factor_sq_grad(const BallConfig& cfg,
                                             std::span<const double> x) {
  const double lambda = conformal_factor(cfg, x);
  const double c = 2.0 * cfg.curvature * lambda * lambda * lambda;
  std::vector<double> out(x.begin(), x.end());
  for (double& v : out) v *= c;
  return out;
}

}  // namespace hypflow
