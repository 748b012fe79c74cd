#include <cmath>
#include <vector>

#include "doctest.h"
#include "hypflow/error.hpp"
#include "hypflow/geometry.hpp"
#include "hypflow/random.hpp"

using namespace hypflow;

namespace {

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<double> random_vector(Rng& rng, int n, double max_norm) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  const double s = rng.uniform() * max_norm / norm(v);
  for (double& x : v) x *= s;
  return v;
}

}  // namespace

TEST_CASE("conformal factor closed forms") {
  const BallConfig unit{2, 1.0};
  CHECK(conformal_factor(unit, BallPoint{{0.0, 0.0}}) == 2.0);
  CHECK(conformal_factor(unit, BallPoint{{0.5, 0.0}}) == doctest::Approx(8.0 / 3.0).epsilon(1e-15));
  CHECK(conformal_factor(BallConfig{2, 0.0}, BallPoint{{7.0, -3.0}}) == 2.0);
  CHECK_THROWS_AS(conformal_factor(unit, BallPoint{{1.0, 0.0}}), OutsideBallError);
  CHECK_THROWS_AS(conformal_factor(unit, BallPoint{{0.8, 0.8}}), OutsideBallError);

  const Eigen::MatrixXd g = metric_at(unit, BallPoint{{0.0, 0.5}});
  CHECK(g(0, 0) == doctest::Approx(64.0 / 9.0).epsilon(1e-15));
  CHECK(g(0, 1) == 0.0);
  CHECK(metric_at(BallConfig{3, 0.0}, BallPoint{{1, 2, 3}}).isApprox(4.0 * Eigen::MatrixXd::Identity(3, 3)));
}

TEST_CASE("conformal factor increases with radius") {
  const BallConfig cfg{1, 2.0};
  double prev = 0.0;
  for (int k = 0; k < 100; ++k) {
    const double x = 0.7 * k / 100.0;
    const double lam = conformal_factor(cfg, BallPoint{{x}});
    CHECK(lam > prev);
    prev = lam;
  }
}

TEST_CASE("exp and log maps at known points") {
  const BallConfig unit{2, 1.0};
  const BallPoint p = exp_map(unit, TangentVector{{1.0, 0.0}});
  CHECK(p.coords[0] == doctest::Approx(0.7615941559557649).epsilon(1e-15));
  CHECK(p.coords[1] == 0.0);
  CHECK(norm(exp_map(unit, TangentVector{{0.0, 0.0}}).coords) == 0.0);

  const TangentVector v = log_map(unit, BallPoint{{0.5, 0.0}});
  CHECK(v.coords[0] == doctest::Approx(0.5493061443340549).epsilon(1e-15));
  CHECK(norm(log_map(unit, BallPoint{{0.0, 0.0}}).coords) == 0.0);

  // tanh(z)/z = 1 - z^2/3 + O(z^4)
  const BallPoint tiny = exp_map(BallConfig{2, 1e-8}, TangentVector{{1.0, 0.0}});
  CHECK(std::abs(tiny.coords[0] - 1.0) < 1e-7);
  CHECK(std::abs(tiny.coords[0] - (1.0 - 1e-8 / 3.0)) < 1e-15);

  const BallConfig flat{3, 0.0};
  const std::vector<double> mu{3.0, -40.0, 0.25};
  CHECK(exp_map(flat, TangentVector{mu}).coords == mu);
  CHECK(log_map(flat, BallPoint{mu}).coords == mu);
}

TEST_CASE("exp map output stays inside the ball") {
  Rng rng(7);
  for (double r : {0.25, 1.0, 4.0, 100.0}) {
    const BallConfig cfg{3, r};
    for (int t = 0; t < 500; ++t) {
      const BallPoint p = exp_map(cfg, TangentVector{random_vector(rng, 3, 50.0)});
      const double q = r * norm(p.coords) * norm(p.coords);
      CHECK(q < 1.0);
      CHECK(q <= kExpClampFraction * kExpClampFraction * (1.0 + 1e-15));
    }
  }
  const BallPoint far = exp_map(BallConfig{2, 1.0}, TangentVector{{1e6, 0.0}});
  CHECK(far.coords[0] == doctest::Approx(kExpClampFraction).epsilon(1e-15));
}

TEST_CASE("log map rejects points at the boundary guard") {
  const BallConfig cfg{2, 1.0};
  CHECK_THROWS_AS(log_map(cfg, BallPoint{{1.0, 0.0}}), OutsideBallError);
  CHECK_THROWS_AS(log_map(cfg, BallPoint{{std::sqrt(1.0 - 1e-13), 0.0}}), OutsideBallError);
  CHECK_NOTHROW(log_map(cfg, BallPoint{{std::sqrt(1.0 - 1e-11), 0.0}}));
  CHECK_THROWS_AS(exp_map(cfg, TangentVector{{NAN, 0.0}}), PreconditionError);
}

TEST_CASE("roundtrip below the clamp radius") {
  Rng rng(11);
  for (double r : {0.25, 1.0, 4.0}) {
    const BallConfig cfg{4, r};
    // Stay well inside the unclamped region, where artanh is well conditioned.
    const double max_norm = 5.0 / std::sqrt(r);
    for (int t = 0; t < 1000; ++t) {
      const std::vector<double> mu = random_vector(rng, 4, max_norm);
      const TangentVector back = log_map(cfg, exp_map(cfg, TangentVector{mu}));
      std::vector<double> d(4);
      for (int k = 0; k < 4; ++k) d[k] = back.coords[k] - mu[k];
      CHECK(norm(d) < 1e-9);
    }
  }
}

TEST_CASE("riemannian gradient and metric preconditioning") {
  const BallConfig unit{2, 1.0};
  const std::vector<double> g0 = riemannian_gradient(unit, BallPoint{{0.0, 0.0}}, std::vector<double>{4.0, 0.0});
  CHECK(g0[0] == 1.0);
  CHECK(g0[1] == 0.0);
  const std::vector<double> gf = riemannian_gradient(BallConfig{2, 0.0}, BallPoint{{3.0, 1.0}}, std::vector<double>{1.0, -2.0});
  CHECK(gf[0] == 0.25);
  CHECK(gf[1] == -0.5);
  const std::vector<double> gh = riemannian_gradient(unit, BallPoint{{0.5, 0.0}}, std::vector<double>{64.0 / 9.0, 0.0});
  CHECK(gh[0] == doctest::Approx(1.0).epsilon(1e-15));

  Eigen::VectorXd v(2);
  v << 2.0, 8.0;
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(2, 2);
  d(0, 0) = 2.0;
  d(1, 1) = 8.0;
  const Eigen::VectorXd x = metric_precondition(d, v);
  CHECK(x(0) == doctest::Approx(1.0));
  CHECK(x(1) == doctest::Approx(1.0));
  CHECK(metric_precondition(Eigen::MatrixXd::Identity(2, 2), v).isApprox(v));

  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(metric_precondition(bad, v), NonSpdError);
  bad << 1.0, 0.5, 0.0, 1.0;
  CHECK_THROWS_AS(metric_precondition(bad, v), NonSpdError);
}

TEST_CASE("gradient identity at random in-ball points") {
  Rng rng(3);
  for (int t = 0; t < 1000; ++t) {
    const double r = rng.uniform(0.1, 5.0);
    const BallConfig cfg{3, r};
    const std::vector<double> x = random_vector(rng, 3, 0.999 / std::sqrt(r));
    const std::vector<double> v = random_vector(rng, 3, 10.0);
    const std::vector<double> d = riemannian_gradient(cfg, BallPoint{x}, v);
    const Eigen::VectorXd back =
        metric_at(cfg, BallPoint{x}) * Eigen::Map<const Eigen::VectorXd>(d.data(), 3);
    for (int k = 0; k < 3; ++k) CHECK(std::abs(back(k) - v[k]) <= 1e-12 * norm(v));
  }
}

TEST_CASE("map Jacobian products agree with central differences") {
  Rng rng(5);
  const double h = 1e-6;
  for (double r : {0.5, 1.0, 3.0}) {
    const BallConfig cfg{3, r};
    for (int t = 0; t < 50; ++t) {
      // Include tiny vectors to exercise the series branches.
      const double scale = t % 5 == 0 ? 1e-5 : 2.0;
      const std::vector<double> mu = random_vector(rng, 3, scale / std::sqrt(r));
      const std::vector<double> cot = random_vector(rng, 3, 1.0);
      const std::vector<double> vjp = exp_map_vjp(cfg, mu, cot);
      for (int k = 0; k < 3; ++k) {
        std::vector<double> up = mu, dn = mu;
        up[k] += h;
        dn[k] -= h;
        const auto pu = exp_map(cfg, TangentVector{up}).coords;
        const auto pd = exp_map(cfg, TangentVector{dn}).coords;
        double fd = 0.0;
        for (int i = 0; i < 3; ++i) fd += cot[i] * (pu[i] - pd[i]) / (2 * h);
        CHECK(vjp[k] == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
      }
      const std::vector<double> nu = exp_map(cfg, TangentVector{mu}).coords;
      const std::vector<double> lvjp = log_map_vjp(cfg, nu, cot);
      const double hh = 1e-8;
      for (int k = 0; k < 3; ++k) {
        std::vector<double> up = nu, dn = nu;
        up[k] += hh;
        dn[k] -= hh;
        const auto pu = log_map(cfg, BallPoint{up}).coords;
        const auto pd = log_map(cfg, BallPoint{dn}).coords;
        double fd = 0.0;
        for (int i = 0; i < 3; ++i) fd += cot[i] * (pu[i] - pd[i]) / (2 * hh);
        CHECK(lvjp[k] == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
      }
    }
  }
}

TEST_CASE("clamped exp map Jacobian is the projected scaling") {
  const BallConfig cfg{2, 1.0};
  const std::vector<double> mu{30.0, 40.0};
  const std::vector<double> radial = exp_map_vjp(cfg, mu, std::vector<double>{0.6, 0.8});
  CHECK(std::abs(radial[0]) < 1e-15);
  CHECK(std::abs(radial[1]) < 1e-15);
  const std::vector<double> tangential = exp_map_vjp(cfg, mu, std::vector<double>{-0.8, 0.6});
  CHECK(tangential[0] == doctest::Approx(-0.8 * kExpClampFraction / 50.0));
}

TEST_CASE("gradient of the squared conformal factor") {
  const BallConfig cfg{2, 1.5};
  const std::vector<double> x{0.3, -0.2};
  const std::vector<double> g = conformal_factor_sq_grad(cfg, x);
  const double h = 1e-6;
  for (int k = 0; k < 2; ++k) {
    std::vector<double> up = x, dn = x;
    up[k] += h;
    dn[k] -= h;
    const double fu = std::pow(conformal_factor(cfg, std::span<const double>(up)), 2);
    const double fd = std::pow(conformal_factor(cfg, std::span<const double>(dn)), 2);
    CHECK(g[k] == doctest::Approx((fu - fd) / (2 * h)).epsilon(1e-7));
  }
}
