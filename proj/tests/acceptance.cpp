// Acceptance runner: executes every acceptance criterion at its stated
// tolerance and prints one PASS/FAIL line per criterion. Exit status is
// nonzero when any criterion fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hypflow/cli.hpp"
#include "hypflow/error.hpp"
#include "hypflow/eucl2hyp2eucl.hpp"
#include "hypflow/geometry.hpp"
#include "hypflow/parallel.hpp"
#include "hypflow/random.hpp"
#include "hypflow/ricci_flow.hpp"
#include "hypflow/tensor_calc.hpp"
#include "json.hpp"

using namespace hypflow;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[1024];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double sup_abs(const NodeField& f) {
  double m = 0.0;
  for (double v : f.data()) m = std::max(m, std::abs(v));
  return m;
}

/// Uniform sample from the n-ball of the given radius.
std::vector<double> in_ball(Rng& rng, int n, double radius) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  const double s = radius * std::pow(rng.uniform(), 1.0 / n) / norm(v);
  for (double& x : v) x *= s;
  return v;
}

// ---------------------------------------------------------------------------

Outcome map_roundtrip() {
  const auto t0 = Clock::now();
  const int n = 4;
  Rng rng(20240601);
  bool ok = true;
  std::string per_r;
  for (double r : {0.25, 1.0, 4.0}) {
    const BallConfig ball{n, r};
    const double clamp_norm = std::atanh(kExpClampFraction) / std::sqrt(r);
    double worst = 0.0, worst_unclamped = 0.0;
    int clamped = 0;
    for (int t = 0; t < 1000; ++t) {
      const std::vector<double> mu = in_ball(rng, n, 5.0);
      const TangentVector back = log_map(ball, exp_map(ball, TangentVector{mu}));
      std::vector<double> d(n);
      for (int k = 0; k < n; ++k) d[k] = back.coords[k] - mu[k];
      const double err = norm(d);
      worst = std::max(worst, err);
      if (norm(mu) > clamp_norm) ++clamped;
      else worst_unclamped = std::max(worst_unclamped, err);
    }
    ok = ok && worst < 1e-9;
    per_r += fmt(" r=%g: max %.3g (%d/1000 beyond the exp clamp at |mu|=%.3g, max %.3g on the rest);",
                 r, worst, clamped, clamp_norm, worst_unclamped);
  }
  const double secs = seconds_since(t0);
  return {ok && secs < 1.0, fmt("tol 1e-9, %.3f s;", secs) + per_r};
}

Outcome gradient_identity() {
  const auto t0 = Clock::now();
  Rng rng(7);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const int n = 2 + static_cast<int>(rng.below(4));
    const double r = rng.uniform(0.05, 4.0);
    const BallConfig ball{n, r};
    const std::vector<double> x = in_ball(rng, n, 0.999 / std::sqrt(r));
    std::vector<double> e(n);
    for (double& v : e) v = rng.uniform(-10.0, 10.0);
    const std::vector<double> h = riemannian_gradient(ball, BallPoint{x}, e);
    const Eigen::VectorXd back =
        metric_at(ball, BallPoint{x}) * Eigen::Map<const Eigen::VectorXd>(h.data(), n);
    double diff = 0.0;
    for (int k = 0; k < n; ++k) diff += (back(k) - e[k]) * (back(k) - e[k]);
    worst = std::max(worst, std::sqrt(diff) / norm(e));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-12 && secs < 1.0,
          fmt("max relative error %.3g (tol 1e-12) over 1000 points, %.3f s", worst, secs)};
}

Outcome curvature_identities() {
  const auto t0 = Clock::now();
  const BallConfig ball{2, 1.0};
  auto errors = [&](int nodes) {
    const auto grid = truncated_ball_grid(ball, nodes, 0.9);
    return constant_curvature_errors(hyperbolic_reference(grid, ball), -1.0);
  };
  const CurvatureErrors coarse = errors(65);
  const CurvatureErrors fine = errors(129);
  const double ric_ratio = coarse.ricci_max / fine.ricci_max;
  const double sc_ratio = coarse.scalar_max / fine.scalar_max;
  const double secs = seconds_since(t0);
  const bool ok = coarse.ricci_max < 5e-3 && coarse.scalar_max < 5e-3 && ric_ratio >= 3.0 &&
                  sc_ratio >= 3.0 && secs < 30.0;
  return {ok, fmt("65x65, rho=0.9: Ric rel err %.3g, R rel err %.3g (tol 5e-3); "
                  "h/2 reduction Ric x%.2f, R x%.2f (need >= 3); %.1f s",
                  coarse.ricci_max, coarse.scalar_max, ric_ratio, sc_ratio, secs)};
}

Outcome flow_stationarity() {
  const auto t0 = Clock::now();
  const FlowConfig fc = flow_config_from(Config{});
  const auto grid = truncated_ball_grid(fc.ball, 65, fc.truncation);
  const MetricField ref = hyperbolic_reference(grid, fc.ball);
  const FlowState s = hyperbolic_state(grid, fc.ball, ref);
  const double scale = sup_abs(ref);
  const double rhs = sup_abs(flow_rhs(s, fc.variant));
  const double fd_rhs = sup_abs(flow_rhs(sampled_state(ref, ref, fc.ball.curvature), fc.variant));
  const double dt = default_time_step(ref);
  const FlowState next = step(s, dt, fc.variant);
  const double change =
      std::abs(l2_distance_sq(next.metric, ref) - l2_distance_sq(s.metric, ref));
  const double secs = seconds_since(t0);
  const bool ok = rhs < 5e-3 * scale && change < 5e-3 * dt && secs < 30.0;
  return {ok, fmt("sup|RHS| %.3g vs 5e-3*sup|gH| = %.3g (pure finite-difference jets: %.3g); "
                  "one step dt=%.3g changes L2 by %.3g (bound %.3g); %.1f s",
                  rhs, 5e-3 * scale, fd_rhs, dt, change, 5e-3 * dt, secs)};
}

// Shared by criteria 5-7.
struct DecayRun {
  FlowResult result;
  std::vector<MetricField> states;  // metric at every recorded sample
  MetricField initial;
  double seconds = 0.0;
};

DecayRun decay_run() {
  const auto t0 = Clock::now();
  const FlowConfig fc = flow_config_from(Config{});
  const auto grid = truncated_ball_grid(fc.ball, 65, fc.truncation);
  const MetricField ref = hyperbolic_reference(grid, fc.ball);
  const FlowState s0 = hyperbolic_state(grid, fc.ball, conformal_bump(ref, 0.05));
  DecayRun run;
  run.initial = s0.metric;
  run.result = evolve(s0, fc, [&](const FlowState& st, const FlowSample&) {
    run.states.push_back(st.metric);
  });
  run.seconds = seconds_since(t0);
  return run;
}

Outcome exponential_decay(const DecayRun& run) {
  const auto& d = run.result.diagnostics;
  const std::size_t burn = d.samples.size() / 10;
  std::size_t increases = 0;
  for (std::size_t k = burn + 1; k < d.samples.size(); ++k)
    if (d.samples[k].l2_dist_sq > d.samples[k - 1].l2_dist_sq) ++increases;
  const double ratio = d.samples.back().l2_dist_sq / d.samples.front().l2_dist_sq;
  const bool ok = increases == 0 && d.fit_valid && d.fit_r2 > 0.98 && ratio < 1e-3 &&
                  d.converged && run.seconds < 300.0;
  return {ok, fmt("%zu samples, %zu increases after burn-in; rate %.4g, r2 %.7f (need > 0.98); "
                  "final/initial squared L2 %.3g, distance ratio %.3g (need < 1e-3) at t=%.4g; "
                  "%zu steps, %.1f s",
                  d.samples.size(), increases, d.fitted_rate, d.fit_r2, ratio, std::sqrt(ratio),
                  d.samples.back().t, d.steps, run.seconds)};
}

Outcome evolution_inequality(const DecayRun& run) {
  const FlowConfig fc = flow_config_from(Config{});
  const auto& samples = run.result.diagnostics.samples;
  const MetricField& ref_metric = run.initial;  // any field on the grid
  const auto grid = ref_metric.grid_ptr();
  bool ok = true;
  std::string detail;
  for (std::size_t idx : {std::size_t{0}, samples.size() / 2, samples.size() - 1}) {
    const FlowState st = hyperbolic_state(grid, fc.ball, run.states[idx]);
    const EvolutionInequalityReport rep = check_evolution_inequality(st, fc.variant);
    ok = ok && rep.max_violation <= 1e-2 * rep.scale;
    detail += fmt(" t=%.4g: max(LHS-RHS) %.3g vs 1e-2*scale %.3g;", samples[idx].t,
                  rep.max_violation, 1e-2 * rep.scale);
  }
  return {ok, detail};
}

Outcome uniform_equivalence(const DecayRun& run) {
  const auto& samples = run.result.diagnostics.samples;
  double worst_low = 0.0, worst_high = 0.0;  // slack used, positive means violation
  bool ok = true;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const EigenRange er = generalized_eigen_range(run.states[k], run.initial);
    const double C = samples[k].metric_speed_integral;
    const double low = (std::exp(-C) - 1e-6) - er.min;
    const double high = er.max - (std::exp(C) + 1e-6);
    worst_low = k == 0 ? low : std::max(worst_low, low);
    worst_high = k == 0 ? high : std::max(worst_high, high);
    ok = ok && low <= 0.0 && high <= 0.0;
  }
  const EquivalenceReport fin =
      uniform_equivalence_monitor(run.result.diagnostics, run.initial, run.result.metric);
  ok = ok && fin.holds;
  return {ok, fmt("%zu samples; final C %.4g, eigenvalue range [%.6f, %.6f] within [%.6f, %.6f]; "
                  "largest margin use: lower %.3g, upper %.3g (<= 0 required)",
                  samples.size(), fin.C, fin.min_ratio, fin.max_ratio, std::exp(-fin.C) - 1e-6,
                  std::exp(fin.C) + 1e-6, worst_low, worst_high)};
}

Outcome end_to_end_gradients(const fs::path& work) {
  const auto t0 = Clock::now();
  const fs::path out = work / "gradcheck";
  fs::remove_all(out);
  std::ostringstream log;
  const int code = cmd_gradcheck(Config{}, out, log);
  const nlohmann::json j = nlohmann::json::parse(slurp(out / "gradcheck.json"));
  const double err = j["max_rel_error"].get<double>();
  const double ball = j["ball_stage_rel_error"].get<double>();
  const double secs = seconds_since(t0);
  return {code == kExitOk && err < 1e-5 && ball < 1e-5 && secs < 60.0,
          fmt("parameters max rel error %.3g, preconditioned ball stage %.3g (tol 1e-5); %.2f s",
              err, ball, secs)};
}

Outcome bounds_sandwich() {
  const ShiftSpec shifts{};
  const int n = 4;
  Rng rng(31337);
  int below = 0, above = 0, violations = 0;
  double worst_gap = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const double eps = 0.25 * (1.0 - rng.uniform());  // (0, 0.25]
    const double r = rng.uniform(0.25, 4.0);
    std::array<double, 4> q{};
    std::array<Eigen::MatrixXd, 4> g;
    for (int m = 0; m < 4; ++m) {
      const std::vector<double> x = in_ball(rng, n, 0.9 / std::sqrt(r));
      const double lam = conformal_factor(BallConfig{n, r}, std::span<const double>(x));
      q[m] = lam * lam;
      const double c = std::exp(rng.uniform(-1.0, 1.0) * std::log1p(eps));
      g[m] = c * q[m] * Eigen::MatrixXd::Identity(n, n);
    }
    // The bounds are scalar, so compare with the per-direction value of the
    // raw regularizer (the Frobenius form counts each of the n directions).
    const double raw = regularization_raw({g}, shifts) / n;
    const double lo = bound_lower(q, shifts, eps), up = bound_upper(q, shifts, eps);
    if (lo > raw) ++below;
    if (raw > up) ++above;
    if (lo > raw || raw > up) ++violations;
    worst_gap = std::max({worst_gap, (lo - raw) / std::max(raw, 1e-300), (raw - up) / std::max(raw, 1e-300)});
  }
  bool exact = true;
  for (int t = 0; t < 1000; ++t) {
    const std::array<double, 4> q{rng.uniform(4, 100), rng.uniform(4, 100), rng.uniform(4, 100),
                                  rng.uniform(4, 100)};
    const double est = regularization_sample(q, shifts);
    exact = exact && bound_lower(q, shifts, 0.0) == est && bound_upper(q, shifts, 0.0) == est;
  }
  return {violations == 0 && exact,
          fmt("%d/1000 trials outside the sandwich (lower > raw: %d, raw > upper: %d, worst "
              "relative excess %.3g); eps=0 bounds equal the estimate exactly: %s",
              violations, below, above, worst_gap, exact ? "yes" : "no")};
}

Outcome training_comparison(const fs::path& work) {
  const auto t0 = Clock::now();
  const Config cfg;
  const Dataset ds = dataset_from(cfg);
  const TrainConfig tc = train_config_from(cfg);
  const std::vector<std::uint64_t> seeds = cfg.get_uint_list("compare.seeds");
  const ComparisonReport rep = run_comparison(ds, tc, seeds);
  fs::create_directories(work);
  std::ofstream(work / "compare.json") << rep.to_json().dump(2) << '\n';

  bool train_ok = seeds.size() == 5 && rep.pairs.size() == 5;
  double min_train = 1.0, min_n_ratio = 1e300, worst_radius = 0.0;
  for (const ComparisonPair& p : rep.pairs) {
    train_ok = train_ok && !p.diverged && p.hyp_train_acc >= 0.9 && p.euc_train_acc >= 0.9;
    min_train = std::min({min_train, p.hyp_train_acc, p.euc_train_acc});
    min_n_ratio = std::min(min_n_ratio, p.hyp_N_first / p.hyp_N_final);
    const auto& logs = p.hyp_logs;
    double lo = 1e300, hi = -1e300, lo5 = 1e300, hi5 = -1e300;
    for (std::size_t e = 0; e < logs.size(); ++e) {
      lo = std::min(lo, logs[e].radius.mean);
      hi = std::max(hi, logs[e].radius.mean);
      if (e + 5 >= logs.size()) {
        lo5 = std::min(lo5, logs[e].radius.mean);
        hi5 = std::max(hi5, logs[e].radius.mean);
      }
    }
    worst_radius = std::max(worst_radius, hi > lo ? (hi5 - lo5) / (hi - lo) : 0.0);
  }
  const bool noninferior = rep.hyp_test_mean >= rep.euc_test_mean - 0.01;
  const double secs = seconds_since(t0);
  const bool ok = train_ok && noninferior && min_n_ratio >= 10.0 && worst_radius < 0.05 &&
                  secs < 900.0;
  return {ok, fmt("test acc hyp %.4f+-%.4f vs eucl %.4f+-%.4f (gap %+.4f, need >= -0.01); "
                  "min train acc %.4f (need >= 0.9); min N epoch1/final %.3g (need >= 10); "
                  "worst last-5 radius range %.2f%% of full range (need < 5%%); %.0f s",
                  rep.hyp_test_mean, rep.hyp_test_std, rep.euc_test_mean, rep.euc_test_std,
                  rep.gap, min_train, min_n_ratio, 100.0 * worst_radius, secs)};
}

Outcome determinism(const fs::path& work, const DecayRun* run) {
  std::vector<std::string> mismatched;
  auto compare_dirs = [&](const fs::path& a, const fs::path& b) {
    std::set<std::string> names;
    for (const auto& e : fs::directory_iterator(a)) names.insert(e.path().filename().string());
    for (const auto& e : fs::directory_iterator(b)) names.insert(e.path().filename().string());
    for (const std::string& name : names)
      if (slurp(a / name) != slurp(b / name)) mismatched.push_back(a.filename().string() + "/" + name);
    return names.size();
  };
  auto twice = [&](const std::string& name, auto&& cmd, int threads_second) {
    const fs::path a = work / (name + "_a"), b = work / (name + "_b");
    fs::remove_all(a);
    fs::remove_all(b);
    std::ostringstream log;
    set_thread_count(1);
    cmd(a, log);
    set_thread_count(threads_second);
    cmd(b, log);
    set_thread_count(0);
    return compare_dirs(a, b);
  };
  std::size_t files = 0;
  files += twice("flow", [](const fs::path& o, std::ostream& l) { cmd_flow(Config{}, o, l); }, 4);
  files += twice("gradcheck", [](const fs::path& o, std::ostream& l) { cmd_gradcheck(Config{}, o, l); }, 1);
  files += twice("train", [](const fs::path& o, std::ostream& l) { cmd_train(Config{}, o, l); }, 4);

  // The library run behind criteria 5-7 must agree with the command's output.
  bool same_as_library = true;
  if (run) {
    std::ifstream in(work / "flow_a" / "final_metric.field");
    same_as_library = read_field(in).data() == run->result.metric.data();
  }
  return {mismatched.empty() && same_as_library,
          fmt("%zu output files compared across repeated flow, gradcheck and train runs "
              "(second run with 4 workers for flow and train): %zu differ; flow output matches "
              "the in-process decay run: %s",
              files, mismatched.size(), same_as_library ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string workdir = "acceptance_runs";
  std::vector<int> only;
  app.add_option("--workdir", workdir, "scratch directory for command outputs");
  app.add_option("--only", only, "run only these criteria (comma separated)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  const fs::path work = fs::absolute(workdir);
  fs::create_directories(work);

  auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    if (!wanted(id)) return;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << " (" << name << "): "
              << o.detail << std::endl;
  };

  report(1, "map roundtrip", map_roundtrip);
  report(2, "Riemannian gradient identity", gradient_identity);
  report(3, "curvature identities", curvature_identities);
  report(4, "flow stationarity", flow_stationarity);

  std::unique_ptr<DecayRun> run;
  if (wanted(5) || wanted(6) || wanted(7) || wanted(11)) {
    try {
      run = std::make_unique<DecayRun>(decay_run());
    } catch (const std::exception& e) {
      std::cout << "decay run failed: " << e.what() << std::endl;
    }
  }
  auto with_run = [&](auto fn) {
    return [&, fn]() -> Outcome {
      if (!run) return {false, "decay run unavailable"};
      return fn(*run);
    };
  };
  report(5, "exponential decay", with_run(exponential_decay));
  report(6, "evolution inequality", with_run(evolution_inequality));
  report(7, "uniform equivalence", with_run(uniform_equivalence));
  report(8, "end-to-end gradients", [&] { return end_to_end_gradients(work); });
  report(9, "bounds sandwich", bounds_sandwich);
  report(10, "training comparison", [&] { return training_comparison(work / "compare"); });
  report(11, "determinism", [&] { return determinism(work, run.get()); });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
