#include "hypflow/eucl2hyp2eucl.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "hypflow/error.hpp"
#include "hypflow/random.hpp"
#include "hypflow/ricci_flow.hpp"

namespace hypflow {
namespace {

constexpr std::uint64_t kOrderStream = 0x9E3779B97F4A7C15ull;

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double closeness_of(std::span<const double> u) { return std::expm1(max_abs(u)); }

std::array<int, 4> shift_rows(const ShiftSpec& s) { return {s.k1, s.k2, 0, 0}; }
std::array<int, 4> shift_cols(const ShiftSpec& s) { return {0, 0, s.j1, s.j2}; }

BallConfig ball_for(const Matrix& outputs, double r) {
  return BallConfig{static_cast<int>(outputs.cols), r};
}

/// Conformal factor squared of the metric actually used at the ball stage.
double stage_metric_scale(const HybridForward& f, std::size_t i) {
  const double lsq = f.embedded[kK1].lambda_sq[i];
  return f.flow.skipped ? std::exp(f.u_before.u[i]) * lsq : lsq;
}

std::vector<int> labels_of(std::span<const ImageSample> batch) {
  std::vector<int> out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) out[i] = batch[i].label;
  return out;
}

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < v.size(); ++k)
    if (v[k] > v[best]) best = k;
  return best;
}

struct BatchStats {
  double loss = 0.0;
  double N = 0.0;
  double flow_time = 0.0;
};

/// Plain softmax on the k1 outputs; N and the radius are monitored only.
BatchStats euclidean_batch(DenseNet& net, std::span<const ImageSample> batch,
                           const TrainConfig& cfg, double lr, std::vector<double>& radii) {
  std::array<ForwardTrace, 4> traces;
  const std::array<Matrix, 4> out =
      translated_forward(net, batch, cfg.shifts, cfg.translate_mode, &traces);
  const BallConfig ball = ball_for(out[kK1], cfg.curvature);
  std::array<EmbeddedSet, 4> emb;
  for (int m = 0; m < 4; ++m) emb[m] = embed(out[m], ball);
  const std::vector<int> labels = labels_of(batch);
  const Matrix probs = softmax_rows(out[kK1]);
  Matrix gprobs;
  const double sq = squared_error_loss(probs, labels, &gprobs);
  Matrix gx(probs.rows, probs.cols);
  for (std::size_t i = 0; i < probs.rows; ++i) {
    const std::vector<double> g = softmax_vjp(probs.row(i), gprobs.row(i));
    std::copy(g.begin(), g.end(), gx.row(i).begin());
    radii.push_back(std::sqrt(emb[kK1].lambda_sq[i]));
  }
  const GradientSet grads = backward(net, traces[kK1], gx);
  sgd_step(net, grads, lr, cfg.weight_decay);
  BatchStats st;
  st.loss = sq;
  st.N = regularization_estimate(emb[kK1].lambda_sq, emb[kK2].lambda_sq, emb[kJ1].lambda_sq,
                                 emb[kJ2].lambda_sq, cfg.shifts);
  return st;
}

BatchStats hybrid_batch(DenseNet& net, std::span<const ImageSample> batch,
                        const TrainConfig& cfg, double lr, std::vector<double>& radii) {
  const HybridForward f = hybrid_forward(net, batch, cfg);
  for (std::size_t i = 0; i < batch.size(); ++i)
    radii.push_back(std::sqrt(std::exp(f.u_after.u[i]) * f.embedded[kK1].lambda_sq[i]));
  BatchStats st{f.loss, f.N, f.flow.time};
  if (!std::isfinite(f.loss)) return st;
  const GradientSet grads = backward_hybrid(net, f, cfg);
  sgd_step(net, grads, lr, cfg.weight_decay);
  return st;
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

void ShiftSpec::validate() const {
  for (int s : {k1, k2, j1, j2})
    if (s < -3 || s > 3) throw PreconditionError("shifts must satisfy |shift| <= 3");
  if (k1 == k2) throw PreconditionError("row shifts k1 and k2 must differ");
  if (j1 == j2) throw PreconditionError("column shifts j1 and j2 must differ");
}

std::string to_string(FlowBackend b) {
  switch (b) {
    case FlowBackend::none: return "none";
    case FlowBackend::linearized: return "linearized";
    case FlowBackend::pde: return "pde";
  }
  return "none";
}

FlowBackend parse_flow_backend(const std::string& s) {
  if (s == "none") return FlowBackend::none;
  if (s == "linearized") return FlowBackend::linearized;
  if (s == "pde") return FlowBackend::pde;
  throw PreconditionError("unknown flow backend '" + s + "'");
}

void TrainConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw PreconditionError("alpha must be >= 0");
  if (!(curvature >= 0.0) || !std::isfinite(curvature))
    throw PreconditionError("curvature must be >= 0");
  if (!(epsilon_target > 0.0 && epsilon_target <= 0.25))
    throw PreconditionError("epsilon_target must lie in (0, 0.25]");
  shifts.validate();
  if (batch_size == 0) throw PreconditionError("batch_size must be positive");
  if (hidden == 0) throw PreconditionError("hidden width must be positive");
  if (!(lr0 > 0.0)) throw PreconditionError("lr0 must be > 0");
  if (!(weight_decay >= 0.0)) throw PreconditionError("weight_decay must be >= 0");
  if (!(kappa > 0.0)) throw PreconditionError("kappa must be > 0");
  if (!(flow_tol > 0.0)) throw PreconditionError("flow_tol must be > 0");
  if (pde_nodes < 5) throw PreconditionError("pde_nodes must be >= 5");
}

Matrix to_matrix(std::span<const ImageSample> batch) {
  if (batch.empty()) throw PreconditionError("empty batch");
  const std::size_t d = batch.front().pixels.size();
  Matrix m(batch.size(), d);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].pixels.size() != d) throw PreconditionError("images differ in size");
    std::copy(batch[i].pixels.begin(), batch[i].pixels.end(), m.row(i).begin());
  }
  return m;
}

std::array<Matrix, 4> translated_forward(const DenseNet& net, std::span<const ImageSample> batch,
                                         const ShiftSpec& shifts, TranslateMode mode,
                                         std::array<ForwardTrace, 4>* traces) {
  shifts.validate();
  const auto rows = shift_rows(shifts), cols = shift_cols(shifts);
  std::array<Matrix, 4> out;
  std::vector<ImageSample> moved(batch.size());
  for (int m = 0; m < 4; ++m) {
    for (std::size_t i = 0; i < batch.size(); ++i)
      moved[i] = translate(batch[i], rows[m], cols[m], mode);
    out[m] = forward(net, to_matrix(moved), traces ? &(*traces)[m] : nullptr);
  }
  return out;
}

EmbeddedSet embed(const Matrix& outputs, const BallConfig& ball) {
  EmbeddedSet e{Matrix(outputs.rows, outputs.cols), std::vector<double>(outputs.rows)};
  for (std::size_t i = 0; i < outputs.rows; ++i) {
    const auto row = outputs.row(i);
    const BallPoint p = exp_map(ball, TangentVector{{row.begin(), row.end()}});
    std::copy(p.coords.begin(), p.coords.end(), e.points.row(i).begin());
    const double lam = conformal_factor(ball, p);
    e.lambda_sq[i] = lam * lam;
  }
  return e;
}

double regularization_sample(const std::array<double, 4>& q, const ShiftSpec& s) {
  s.validate();
  const double d = (q[kK1] - q[kK2]) / (s.k1 - s.k2) - (q[kJ1] - q[kJ2]) / (s.j1 - s.j2);
  return d * d;
}

double regularization_estimate(std::span<const double> lk1, std::span<const double> lk2,
                               std::span<const double> lj1, std::span<const double> lj2,
                               const ShiftSpec& shifts) {
  const std::size_t m = lk1.size();
  if (lk2.size() != m || lj1.size() != m || lj2.size() != m)
    throw PreconditionError("lambda^2 lists differ in length");
  if (m == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    total += regularization_sample({lk1[i], lk2[i], lj1[i], lj2[i]}, shifts);
  return total / static_cast<double>(m);
}

double regularization_raw(const std::vector<std::array<Eigen::MatrixXd, 4>>& metrics,
                          const ShiftSpec& s) {
  s.validate();
  if (metrics.empty()) return 0.0;
  double total = 0.0;
  for (const auto& g : metrics) {
    const Eigen::MatrixXd d =
        (g[kK1] - g[kK2]) / double(s.k1 - s.k2) - (g[kJ1] - g[kJ2]) / double(s.j1 - s.j2);
    total += d.squaredNorm();
  }
  return total / static_cast<double>(metrics.size());
}

double bound_upper(const std::array<double, 4>& q, const ShiftSpec& s, double eps) {
  s.validate();
  if (!(eps >= 0.0)) throw PreconditionError("eps must be >= 0");
  const double e2 = (1.0 + eps) * (1.0 + eps);
  const double d = (e2 * q[kK1] - q[kK2]) / (s.k1 - s.k2) - (q[kJ1] - e2 * q[kJ2]) / (s.j1 - s.j2);
  return d * d / (1.0 + eps);
}

double bound_lower(const std::array<double, 4>& q, const ShiftSpec& s, double eps) {
  s.validate();
  if (!(eps >= 0.0)) throw PreconditionError("eps must be >= 0");
  const double e2 = (1.0 + eps) * (1.0 + eps);
  const double d = (q[kK1] - e2 * q[kK2]) / (s.k1 - s.k2) - (e2 * q[kJ1] - q[kJ2]) / (s.j1 - s.j2);
  return d * d / (1.0 + eps);
}

PerturbationModel estimate_perturbation(const std::array<EmbeddedSet, 4>& emb, double eps) {
  const std::size_t m = emb[0].lambda_sq.size();
  const double cap = std::log1p(eps);
  PerturbationModel p{std::vector<double>(m)};
  for (std::size_t i = 0; i < m; ++i) {
    double am = 0.0, lg = 0.0;
    for (int k = 0; k < 4; ++k) {
      am += emb[k].lambda_sq[i];
      lg += std::log(emb[k].lambda_sq[i]);
    }
    const double u = std::log(am / 4.0) - lg / 4.0;
    p.u[i] = std::clamp(u, -cap, cap);
  }
  return p;
}

double linearized_flow_time(double max_abs_u, double tol, double kappa) {
  const double target = std::log1p(tol);
  if (max_abs_u <= target) return 0.0;
  // Aim a few ulps inside the tolerance so rounding in exp/expm1 cannot
  // leave the result just above it.
  return std::log(max_abs_u / (target * (1.0 - 1e-12))) / kappa;
}

std::pair<PerturbationModel, FlowReport> flow_step(const PerturbationModel& p,
                                                   const TrainConfig& cfg) {
  FlowReport rep;
  rep.eps_before = closeness_of(p.u);
  // Values produced by the clip sit exactly on the gate up to rounding.
  if (rep.eps_before > cfg.epsilon_target * (1.0 + 1e-12))
    throw PreconditionError("metric perturbation is not " + std::to_string(cfg.epsilon_target) +
                            "-close to the hyperbolic metric; increase alpha or lower the "
                            "learning rate");
  PerturbationModel out = p;
  const double umax = max_abs(p.u);
  switch (cfg.flow_backend) {
    case FlowBackend::none:
      rep.skipped = true;
      break;
    case FlowBackend::linearized: {
      rep.time = linearized_flow_time(umax, cfg.flow_tol, cfg.kappa);
      for (double& u : out.u) u = linearized_flow(u, rep.time, cfg.kappa);
      break;
    }
    case FlowBackend::pde: {
      if (umax <= std::log1p(cfg.flow_tol)) break;
      FlowConfig fc;
      fc.ball = BallConfig{2, cfg.curvature};
      fc.variant = RescaleVariant::r_scaled;
      fc.t_max = 50.0;
      fc.rel_tol = 0.0;
      fc.eps_tol = cfg.flow_tol;
      fc.sample_every = 1000000;
      const auto grid = truncated_ball_grid(fc.ball, cfg.pde_nodes, fc.truncation);
      const MetricField ref = hyperbolic_reference(grid, fc.ball);
      const MetricField g0 = conformal_bump(ref, std::expm1(umax));
      const FlowResult res = evolve(g0, fc);
      const double e0 = res.diagnostics.samples.front().epsilon;
      const double eT = res.diagnostics.samples.back().epsilon;
      rep.time = res.diagnostics.samples.back().t;
      rep.steps = res.diagnostics.steps;
      const double scale = e0 > 0.0 ? std::log1p(eT) / std::log1p(e0) : 0.0;
      for (double& u : out.u) u *= scale;
      break;
    }
  }
  rep.eps_after = closeness_of(out.u);
  return {std::move(out), rep};
}

double loss_total(const Matrix& y, std::span<const int> labels, double N, double alpha) {
  return squared_error_loss(y, labels) + alpha * N;
}

HybridForward hybrid_forward(const DenseNet& net, std::span<const ImageSample> batch,
                             const TrainConfig& cfg) {
  cfg.validate();
  HybridForward f;
  f.outputs = translated_forward(net, batch, cfg.shifts, cfg.translate_mode, &f.traces);
  const BallConfig ball = ball_for(f.outputs[kK1], cfg.curvature);
  for (int m = 0; m < 4; ++m) f.embedded[m] = embed(f.outputs[m], ball);
  f.u_before = estimate_perturbation(f.embedded, cfg.epsilon_target);
  std::tie(f.u_after, f.flow) = flow_step(f.u_before, cfg);

  const Matrix& p = f.embedded[kK1].points;
  f.returned = Matrix(p.rows, p.cols);
  for (std::size_t i = 0; i < p.rows; ++i) {
    const auto row = p.row(i);
    const TangentVector v = log_map(ball, BallPoint{{row.begin(), row.end()}});
    std::copy(v.coords.begin(), v.coords.end(), f.returned.row(i).begin());
  }
  f.probs = softmax_rows(f.returned);
  f.labels = labels_of(batch);
  f.sq_error = squared_error_loss(f.probs, f.labels);
  f.N = regularization_estimate(f.embedded[kK1].lambda_sq, f.embedded[kK2].lambda_sq,
                                f.embedded[kJ1].lambda_sq, f.embedded[kJ2].lambda_sq, cfg.shifts);
  double raw = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::array<double, 4> q{f.embedded[kK1].lambda_sq[i], f.embedded[kK2].lambda_sq[i],
                                  f.embedded[kJ1].lambda_sq[i], f.embedded[kJ2].lambda_sq[i]};
    raw += std::exp(2.0 * f.u_after.u[i]) * regularization_sample(q, cfg.shifts);
  }
  f.raw_N = static_cast<double>(ball.dim) * raw / static_cast<double>(batch.size());
  f.loss = f.sq_error + cfg.alpha * f.N;
  return f;
}

Matrix ball_cotangent(const HybridForward& f, const TrainConfig& cfg) {
  const BallConfig ball = ball_for(f.outputs[kK1], cfg.curvature);
  Matrix gprobs;
  squared_error_loss(f.probs, f.labels, &gprobs);
  const Matrix& p = f.embedded[kK1].points;
  Matrix out(p.rows, p.cols);
  for (std::size_t i = 0; i < p.rows; ++i) {
    const std::vector<double> gv = softmax_vjp(f.probs.row(i), gprobs.row(i));
    std::vector<double> gp = log_map_vjp(ball, p.row(i), gv);
    if (cfg.precondition) {
      const double inv = 1.0 / stage_metric_scale(f, i);
      for (double& v : gp) v *= inv;
    }
    std::copy(gp.begin(), gp.end(), out.row(i).begin());
  }
  return out;
}

GradientSet backward_hybrid(const DenseNet& net, const HybridForward& f, const TrainConfig& cfg) {
  const BallConfig ball = ball_for(f.outputs[kK1], cfg.curvature);
  const std::size_t m = f.labels.size();
  const std::size_t n = f.outputs[kK1].cols;
  std::array<Matrix, 4> cot;
  for (auto& c : cot) c = Matrix(m, n);

  const Matrix gp = ball_cotangent(f, cfg);
  for (std::size_t i = 0; i < m; ++i) {
    const std::vector<double> gx = exp_map_vjp(ball, f.outputs[kK1].row(i), gp.row(i));
    std::copy(gx.begin(), gx.end(), cot[kK1].row(i).begin());
  }

  const bool with_n = cfg.alpha != 0.0;
  if (with_n) {
    const ShiftSpec& s = cfg.shifts;
    const double scale = cfg.alpha / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) {
      const auto q = [&](int slot) { return f.embedded[slot].lambda_sq[i]; };
      const double d = (q(kK1) - q(kK2)) / (s.k1 - s.k2) - (q(kJ1) - q(kJ2)) / (s.j1 - s.j2);
      const std::array<double, 4> dq{2.0 * d / (s.k1 - s.k2), -2.0 * d / (s.k1 - s.k2),
                                     -2.0 * d / (s.j1 - s.j2), 2.0 * d / (s.j1 - s.j2)};
      for (int slot = 0; slot < 4; ++slot) {
        std::vector<double> g = conformal_factor_sq_grad(ball, f.embedded[slot].points.row(i));
        for (double& v : g) v *= scale * dq[slot];
        const std::vector<double> gx = exp_map_vjp(ball, f.outputs[slot].row(i), g);
        auto dst = cot[slot].row(i);
        for (std::size_t k = 0; k < n; ++k) dst[k] += gx[k];
      }
    }
  }

  GradientSet total = backward(net, f.traces[kK1], cot[kK1]);
  if (with_n)
    for (int slot = 1; slot < 4; ++slot) total.add_scaled(backward(net, f.traces[slot], cot[slot]), 1.0);
  return total;
}

double ball_radius(const Eigen::MatrixXd& g, std::span<const double> dxi) {
  if (g.rows() != g.cols() || static_cast<std::size_t>(g.rows()) != dxi.size())
    throw PreconditionError("metric/direction shape mismatch");
  const Eigen::Map<const Eigen::VectorXd> v(dxi.data(), static_cast<Eigen::Index>(dxi.size()));
  const double q = v.dot(g * v);
  if (!(q > 0.0)) throw NonSpdError("metric is not positive along the monitor direction");
  return std::sqrt(q);
}

RadiusStats radius_stats(std::span<const double> radii) {
  RadiusStats st;
  if (radii.empty()) return st;
  st.min = *std::min_element(radii.begin(), radii.end());
  st.max = *std::max_element(radii.begin(), radii.end());
  st.mean = mean_of(radii);
  return st;
}

DenseNet make_network(const Dataset& ds, const TrainConfig& cfg) {
  return init_xavier({ds.width * ds.height, cfg.hidden, static_cast<std::size_t>(ds.num_classes)},
                     cfg.seed, cfg.activation);
}

double evaluate(const DenseNet& net, std::span<const ImageSample> samples) {
  if (samples.empty()) return 0.0;
  const Matrix out = forward(net, to_matrix(samples));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (static_cast<int>(argmax(out.row(i))) == samples[i].label) ++hits;
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

TrainResult train(DenseNet net, const Dataset& ds, const TrainConfig& cfg, Arm arm) {
  cfg.validate();
  if (ds.train.empty()) throw PreconditionError("training split is empty");
  TrainResult res;
  Rng order(cfg.seed ^ kOrderStream);
  std::vector<std::size_t> idx(ds.train.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<ImageSample> batch;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const DenseNet saved = net;
    const double lr = cosine_lr(epoch, cfg.epochs, cfg.lr0);
    shuffle(idx.begin(), idx.end(), order);
    std::vector<double> radii;
    double loss_sum = 0.0, n_sum = 0.0, flow_sum = 0.0;
    std::size_t batches = 0;
    bool bad = false;
    for (std::size_t start = 0; start < idx.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(idx.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(ds.train[idx[k]]);
      const BatchStats st = arm == Arm::euclidean ? euclidean_batch(net, batch, cfg, lr, radii)
                                                  : hybrid_batch(net, batch, cfg, lr, radii);
      if (!std::isfinite(st.loss)) {
        bad = true;
        break;
      }
      loss_sum += st.loss;
      n_sum += st.N;
      flow_sum += st.flow_time;
      ++batches;
    }
    bool finite_net = true;
    for (const Layer& L : net.layers)
      for (double w : L.weight.data) finite_net = finite_net && std::isfinite(w);
    if (bad || !finite_net) {
      res.diverged = true;
      res.status = "diverged in epoch " + std::to_string(epoch + 1);
      net = saved;
      break;
    }
    EpochLog log;
    log.epoch = epoch + 1;
    log.loss = loss_sum / static_cast<double>(batches);
    log.N = n_sum / static_cast<double>(batches);
    log.flow_time = flow_sum / static_cast<double>(batches);
    log.train_acc = evaluate(net, ds.train);
    log.test_acc = evaluate(net, ds.test);
    log.radius = radius_stats(radii);
    res.logs.push_back(log);
  }
  if (!res.diverged) res.status = "completed";
  res.net = std::move(net);
  return res;
}

void write_epoch_csv(std::ostream& os, const std::vector<EpochLog>& logs) {
  os << "epoch,loss,N,train_acc,test_acc,flow_time,Br_min,Br_mean,Br_max\n";
  char buf[512];
  for (const EpochLog& l : logs) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  l.epoch, l.loss, l.N, l.train_acc, l.test_acc, l.flow_time, l.radius.min,
                  l.radius.mean, l.radius.max);
    os << buf;
  }
}

nlohmann::json ComparisonReport::to_json() const {
  nlohmann::json j;
  j["pairs"] = nlohmann::json::array();
  for (const ComparisonPair& p : pairs)
    j["pairs"].push_back({{"seed", p.seed},
                          {"diverged", p.diverged},
                          {"eucl2hyp2eucl",
                           {{"train_acc", p.hyp_train_acc},
                            {"test_acc", p.hyp_test_acc},
                            {"N_first", p.hyp_N_first},
                            {"N_final", p.hyp_N_final}}},
                          {"euclidean", {{"train_acc", p.euc_train_acc}, {"test_acc", p.euc_test_acc}}}});
  j["eucl2hyp2eucl"] = {{"test_mean", hyp_test_mean}, {"test_std", hyp_test_std},
                        {"train_mean", hyp_train_mean}};
  j["euclidean"] = {{"test_mean", euc_test_mean}, {"test_std", euc_test_std},
                    {"train_mean", euc_train_mean}};
  j["gap"] = gap;
  return j;
}

ComparisonReport run_comparison(const Dataset& ds, const TrainConfig& cfg,
                                std::span<const std::uint64_t> seeds) {
  ComparisonReport rep;
  std::vector<double> ht, et, hr, er;
  for (std::uint64_t seed : seeds) {
    TrainConfig c = cfg;
    c.seed = seed;
    const DenseNet init = make_network(ds, c);
    const TrainResult hyp = train(init, ds, c, Arm::eucl2hyp2eucl);
    const TrainResult euc = train(init, ds, c, Arm::euclidean);
    ComparisonPair p;
    p.seed = seed;
    p.diverged = hyp.diverged || euc.diverged;
    if (!hyp.logs.empty()) {
      p.hyp_train_acc = hyp.logs.back().train_acc;
      p.hyp_test_acc = hyp.logs.back().test_acc;
      p.hyp_N_first = hyp.logs.front().N;
      p.hyp_N_final = hyp.logs.back().N;
    }
    if (!euc.logs.empty()) {
      p.euc_train_acc = euc.logs.back().train_acc;
      p.euc_test_acc = euc.logs.back().test_acc;
    }
    p.hyp_logs = hyp.logs;
    p.euc_logs = euc.logs;
    ht.push_back(p.hyp_test_acc);
    et.push_back(p.euc_test_acc);
    hr.push_back(p.hyp_train_acc);
    er.push_back(p.euc_train_acc);
    rep.pairs.push_back(std::move(p));
  }
  rep.hyp_test_mean = mean_of(ht);
  rep.hyp_test_std = std_of(ht);
  rep.euc_test_mean = mean_of(et);
  rep.euc_test_std = std_of(et);
  rep.hyp_train_mean = mean_of(hr);
  rep.euc_train_mean = mean_of(er);
  rep.gap = rep.hyp_test_mean - rep.euc_test_mean;
  return rep;
}

PipelineGradCheck gradcheck_pipeline(const DenseNet& net, std::span<const ImageSample> batch,
                                     const TrainConfig& cfg, double step) {
  PipelineGradCheck out;
  TrainConfig plain = cfg;
  plain.precondition = false;
  const HybridForward f = hybrid_forward(net, batch, plain);
  const GradientSet g = backward_hybrid(net, f, plain);
  out.params = check_gradients(
      net, [&](const DenseNet& probe) { return hybrid_forward(probe, batch, plain).loss; }, g,
      step);

  TrainConfig pre = cfg;
  pre.precondition = true;
  const HybridForward fp = hybrid_forward(net, batch, pre);
  const Matrix cot = ball_cotangent(fp, pre);
  const BallConfig ball = ball_for(fp.outputs[kK1], cfg.curvature);
  Matrix p = fp.embedded[kK1].points;
  auto sq_error_at = [&](const Matrix& pts) {
    Matrix v(pts.rows, pts.cols);
    for (std::size_t i = 0; i < pts.rows; ++i) {
      const auto row = pts.row(i);
      const TangentVector t = log_map(ball, BallPoint{{row.begin(), row.end()}});
      std::copy(t.coords.begin(), t.coords.end(), v.row(i).begin());
    }
    return squared_error_loss(softmax_rows(v), fp.labels);
  };
  std::vector<double> fd(p.data.size());
  for (std::size_t i = 0; i < p.rows; ++i) {
    const double scale = stage_metric_scale(fp, i);
    for (std::size_t k = 0; k < p.cols; ++k) {
      double& x = p(i, k);
      const double saved = x;
      x = saved + step;
      const double up = sq_error_at(p);
      x = saved - step;
      const double dn = sq_error_at(p);
      x = saved;
      fd[i * p.cols + k] = (up - dn) / (2.0 * step) / scale;
    }
  }
  out.ball_stage_error = max_relative_error(cot.data, fd);
  return out;
}

}  // namespace hypflow
