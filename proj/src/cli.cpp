#include "hypflow/cli.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hypflow/error.hpp"
#include "hypflow/tensor_calc.hpp"
#include "json.hpp"

namespace hypflow {
namespace {

/// Exclusive use of an output directory, released on destruction.
class OutputLock {
 public:
  explicit OutputLock(const std::filesystem::path& dir) : path_(dir / ".lock") {
    std::filesystem::create_directories(dir);
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
      if (errno == EEXIST)
        throw Error("output directory " + dir.string() + " is locked by another run");
      throw Error("cannot lock " + dir.string() + ": " + std::strerror(errno));
    }
  }
  ~OutputLock() {
    ::close(fd_);
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::filesystem::path path_;
  int fd_ = -1;
};

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  return os;
}

void echo_config(const Config& cfg, const std::filesystem::path& out) {
  auto os = open_out(out / "config.txt");
  cfg.write(os);
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  auto os = open_out(path);
  os << j.dump(2) << '\n';
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

RescaleVariant parse_variant(const std::string& s) {
  if (s == "paper_exact") return RescaleVariant::paper_exact;
  if (s == "r_scaled") return RescaleVariant::r_scaled;
  throw ConfigError("flow.variant must be paper_exact or r_scaled, got '" + s + "'");
}

TranslateMode parse_translate(const std::string& s) {
  if (s == "zero_pad") return TranslateMode::zero_pad;
  if (s == "circular") return TranslateMode::circular;
  throw ConfigError("train.translate must be zero_pad or circular, got '" + s + "'");
}

int checked_int(const Config& cfg, const std::string& key, std::int64_t lo, std::int64_t hi) {
  const std::int64_t v = cfg.get_int(key);
  if (v < lo || v > hi)
    throw ConfigError(key + " must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return static_cast<int>(v);
}

BallConfig ball_from(const Config& cfg) {
  BallConfig b{checked_int(cfg, "ball.dim", 1, 4), cfg.get_double("ball.r")};
  b.validate();
  return b;
}

nlohmann::json train_config_json(const TrainConfig& t) {
  return {{"alpha", t.alpha},
          {"curvature", t.curvature},
          {"epsilon_target", t.epsilon_target},
          {"shifts", {{"k1", t.shifts.k1}, {"k2", t.shifts.k2}, {"j1", t.shifts.j1}, {"j2", t.shifts.j2}}},
          {"translate", t.translate_mode == TranslateMode::zero_pad ? "zero_pad" : "circular"},
          {"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"hidden", t.hidden},
          {"activation", to_string(t.activation)},
          {"lr0", t.lr0},
          {"weight_decay", t.weight_decay},
          {"seed", t.seed},
          {"flow_backend", to_string(t.flow_backend)},
          {"kappa", t.kappa},
          {"flow_tol", t.flow_tol},
          {"pde_nodes", t.pde_nodes},
          {"precondition", t.precondition}};
}

nlohmann::json maybe(double v, bool valid) { return valid ? nlohmann::json(v) : nlohmann::json(); }

}  // namespace

FlowConfig flow_config_from(const Config& cfg) {
  FlowConfig fc;
  fc.ball = ball_from(cfg);
  fc.variant = parse_variant(cfg.get("flow.variant"));
  fc.dt = cfg.get_double("flow.dt");
  fc.t_max = cfg.get_double("flow.t_max");
  fc.tol = cfg.get_double("flow.tol");
  fc.rel_tol = cfg.get_double("flow.rel_tol");
  fc.eps_tol = cfg.get_double("flow.eps_tol");
  fc.truncation = cfg.get_double("flow.truncation");
  fc.epsilon_gate = cfg.get_double("flow.epsilon_gate");
  fc.sample_every = checked_int(cfg, "flow.sample_every", 1, 1 << 30);
  fc.max_retries = checked_int(cfg, "flow.max_retries", 0, 64);
  try {
    fc.validate();
  } catch (const PreconditionError& e) {
    throw ConfigError(e.what());
  }
  return fc;
}

TrainConfig train_config_from(const Config& cfg) {
  TrainConfig t;
  t.alpha = cfg.get_double("train.alpha");
  t.curvature = cfg.get_double("train.r");
  t.epsilon_target = cfg.get_double("train.epsilon");
  t.shifts = ShiftSpec{checked_int(cfg, "train.k1", -3, 3), checked_int(cfg, "train.k2", -3, 3),
                       checked_int(cfg, "train.j1", -3, 3), checked_int(cfg, "train.j2", -3, 3)};
  t.translate_mode = parse_translate(cfg.get("train.translate"));
  t.epochs = cfg.get_uint("train.epochs");
  t.batch_size = cfg.get_uint("train.batch_size");
  t.hidden = cfg.get_uint("train.hidden");
  t.lr0 = cfg.get_double("train.lr0");
  t.weight_decay = cfg.get_double("train.weight_decay");
  t.seed = cfg.get_uint("seed");
  t.kappa = cfg.get_double("train.kappa");
  t.flow_tol = cfg.get_double("train.flow_tol");
  t.pde_nodes = checked_int(cfg, "train.pde_nodes", 5, 257);
  t.precondition = cfg.get_bool("train.precondition");
  try {
    t.activation = parse_activation(cfg.get("train.activation"));
    t.flow_backend = parse_flow_backend(cfg.get("train.flow_backend"));
    t.validate();
  } catch (const PreconditionError& e) {
    throw ConfigError(e.what());
  }
  return t;
}

Dataset dataset_from(const Config& cfg) {
  const std::string source = cfg.get("data.source");
  const int classes = checked_int(cfg, "data.classes", 1, 1 << 20);
  Dataset ds;
  if (source == "synth") {
    try {
      ds = synth_generate(cfg.get_uint("data.seed"), cfg.get_uint("data.n_train"),
                          cfg.get_uint("data.n_test"), cfg.get_uint("data.size"), classes);
    } catch (const PreconditionError& e) {
      throw ConfigError(e.what());
    }
  } else if (source == "csv") {
    ds = load_csv(cfg.get("data.train_csv"), classes);
    if (!cfg.get("data.test_csv").empty()) {
      Dataset test = load_csv(cfg.get("data.test_csv"), classes);
      if (test.width != ds.width) throw ConfigError("train and test CSV image sizes differ");
      ds.test = std::move(test.train);
    }
  } else if (source == "idx") {
    ds = load_idx(cfg.get("data.train_images"), cfg.get("data.train_labels"), classes);
    if (!cfg.get("data.test_images").empty()) {
      Dataset test = load_idx(cfg.get("data.test_images"), cfg.get("data.test_labels"), classes);
      if (test.width != ds.width || test.height != ds.height)
        throw ConfigError("train and test IDX image sizes differ");
      ds.test = std::move(test.train);
    }
  } else {
    throw ConfigError("data.source must be synth, csv or idx, got '" + source + "'");
  }
  if (cfg.get_bool("data.normalize")) ds = normalize(ds);
  return ds;
}

int cmd_flow(const Config& cfg, const std::filesystem::path& out, std::ostream& log) {
  const FlowConfig fc = flow_config_from(cfg);
  const int nodes = checked_int(cfg, "flow.nodes", 5, 4097);
  const std::string initial = cfg.get("flow.initial");
  if (initial != "bump" && initial != "hyperbolic" && initial != "file")
    throw ConfigError("flow.initial must be bump, hyperbolic or file");
  OutputLock lock(out);
  echo_config(cfg, out);

  const auto grid = truncated_ball_grid(fc.ball, nodes, fc.truncation);
  const MetricField ref = hyperbolic_reference(grid, fc.ball);
  MetricField g0;
  if (initial == "bump") {
    g0 = conformal_bump(ref, cfg.get_double("flow.bump"));
  } else if (initial == "hyperbolic") {
    g0 = ref;
  } else {
    std::ifstream in(cfg.get("flow.initial_file"));
    if (!in) throw ConfigError("cannot open flow.initial_file");
    const MetricField loaded = read_field(in);
    if (!loaded.grid().same_layout(*grid) || loaded.comps() != ref.comps())
      throw ConfigError("flow.initial_file does not match the configured grid");
    g0 = MetricField(grid, ref.comps());
    g0.data() = loaded.data();
  }

  const FlowResult res = evolve(g0, fc);
  const FlowDiagnostics& d = res.diagnostics;
  {
    auto os = open_out(out / "flow.csv");
    os << "t,l2_dist_sq,sup_dist,epsilon,C\n";
    for (const FlowSample& s : d.samples)
      os << fmt(s.t) << ',' << fmt(s.l2_dist_sq) << ',' << fmt(s.sup_dist) << ','
         << fmt(s.epsilon) << ',' << fmt(s.metric_speed_integral) << '\n';
  }
  write_json(out / "flow_summary.json",
             {{"rate", maybe(d.fitted_rate, d.fit_valid)},
              {"r2", maybe(d.fit_r2, d.fit_valid)},
              {"steps", d.steps},
              {"converged", d.converged},
              {"status", d.status},
              {"dt", d.dt},
              {"retries", d.retries},
              {"stability_constant", d.stability_constant},
              {"initial_l2_dist_sq", d.samples.front().l2_dist_sq},
              {"final_l2_dist_sq", d.samples.back().l2_dist_sq},
              {"final_time", d.samples.back().t}});
  {
    auto os = open_out(out / "final_metric.field");
    write_field(os, res.metric);
  }
  log << "flow: " << d.status << " after " << d.steps << " steps (t = " << d.samples.back().t
      << "), l2_dist_sq " << d.samples.front().l2_dist_sq << " -> " << d.samples.back().l2_dist_sq;
  if (d.fit_valid) log << ", fitted rate " << d.fitted_rate << " (r2 " << d.fit_r2 << ")";
  log << '\n';
  return d.converged ? kExitOk : kExitFailure;
}

int cmd_curvature(const Config& cfg, const std::filesystem::path& out, std::ostream& log) {
  const BallConfig ball = ball_from(cfg);
  const std::string metric = cfg.get("curvature.metric");
  const double h = cfg.get_double("curvature.spacing");
  const double radius = cfg.get_double("curvature.radius");
  const double tol = cfg.get_double("curvature.tol");
  if (metric != "hyperbolic" && metric != "flat")
    throw ConfigError("curvature.metric must be hyperbolic or flat");
  if (!(h > 0.0) || !(radius > 0.0) || !(tol > 0.0))
    throw ConfigError("curvature.spacing, curvature.radius and curvature.tol must be positive");
  if (metric == "hyperbolic" && !(ball.curvature * radius * radius < 1.0))
    throw ConfigError("curvature.radius must lie inside the ball");
  const long nodes = std::lround(2.0 * radius / h) + 1;
  if (nodes < 5 || nodes > 4097) throw ConfigError("curvature grid must have 5 to 4097 nodes per axis");
  OutputLock lock(out);
  echo_config(cfg, out);

  const auto grid = std::make_shared<const GridSpec>(GridSpec::ball(ball.dim, static_cast<int>(nodes), radius));
  const MetricField g =
      metric == "hyperbolic" ? hyperbolic_reference(grid, ball) : constant_metric(grid, 1.0);
  const double K = metric == "hyperbolic" ? -ball.curvature : 0.0;
  const CurvatureErrors err = constant_curvature_errors(g, K);
  const bool pass = err.ricci_max <= tol && err.scalar_max <= tol;
  const double h_used = grid->spacing()[0];
  const double worst = std::max(err.ricci_max, err.scalar_max);
  write_json(out / "curvature.json", {{"metric", metric},
                                      {"dim", ball.dim},
                                      {"r", ball.curvature},
                                      {"spacing", h_used},
                                      {"nodes_per_axis", nodes},
                                      {"interior_nodes", grid->num_interior()},
                                      {"ricci_max_rel_error", err.ricci_max},
                                      {"scalar_max_rel_error", err.scalar_max},
                                      {"tolerance", tol},
                                      {"pass", pass}});
  log << "curvature: h = " << h_used << ", Ricci max error " << err.ricci_max
      << ", scalar max error " << err.scalar_max << " (tol " << tol << ") "
      << (pass ? "PASS" : "FAIL") << '\n';
  if (!pass && worst > 0.0)
    log << "hint: the finite-difference error scales as O(h^2); a spacing near "
        << h_used * std::sqrt(0.5 * tol / worst) << " should bring it under tolerance\n";
  return pass ? kExitOk : kExitFailure;
}

int cmd_gradcheck(const Config& cfg, const std::filesystem::path& out, std::ostream& log) {
  TrainConfig tc = train_config_from(cfg);
  tc.curvature = cfg.get_double("ball.r");
  tc.hidden = cfg.get_uint("gradcheck.hidden");
  const std::size_t batch = cfg.get_uint("gradcheck.batch");
  const double step = cfg.get_double("gradcheck.step");
  const double tol = cfg.get_double("gradcheck.tol");
  if (batch == 0 || tc.hidden == 0 || !(step > 0.0) || !(tol > 0.0))
    throw ConfigError("gradcheck.batch, gradcheck.hidden, gradcheck.step and gradcheck.tol must be positive");
  Config data_cfg = cfg;
  data_cfg.set("data.source", "synth");
  data_cfg.set("data.n_train", std::to_string(batch));
  data_cfg.set("data.n_test", "0");
  data_cfg.set("data.normalize", "false");
  const Dataset ds = dataset_from(data_cfg);
  OutputLock lock(out);
  echo_config(cfg, out);

  const DenseNet net = make_network(ds, tc);
  const PipelineGradCheck chk = gradcheck_pipeline(net, ds.train, tc, step);
  const bool pass = chk.params.max_rel_error < tol && chk.ball_stage_error < tol;
  nlohmann::json tensors = nlohmann::json::object();
  for (const TensorCheck& t : chk.params.tensors) tensors[t.name] = t.max_rel_error;
  write_json(out / "gradcheck.json", {{"tensors", tensors},
                                      {"max_rel_error", chk.params.max_rel_error},
                                      {"ball_stage_rel_error", chk.ball_stage_error},
                                      {"tolerance", tol},
                                      {"pass", pass}});
  log << "gradcheck: parameter max relative error " << chk.params.max_rel_error
      << ", preconditioned ball-stage error " << chk.ball_stage_error << " (tol " << tol << ") "
      << (pass ? "PASS" : "FAIL") << '\n';
  return pass ? kExitOk : kExitFailure;
}

int cmd_train(const Config& cfg, const std::filesystem::path& out, std::ostream& log) {
  const TrainConfig tc = train_config_from(cfg);
  const std::string arm_name = cfg.get("train.arm");
  if (arm_name != "eucl2hyp2eucl" && arm_name != "euclidean")
    throw ConfigError("train.arm must be eucl2hyp2eucl or euclidean");
  const Arm arm = arm_name == "euclidean" ? Arm::euclidean : Arm::eucl2hyp2eucl;
  const Dataset ds = dataset_from(cfg);
  OutputLock lock(out);
  echo_config(cfg, out);

  const TrainResult res = train(make_network(ds, tc), ds, tc, arm);
  {
    auto os = open_out(out / "train_log.csv");
    write_epoch_csv(os, res.logs);
  }
  {
    auto os = open_out(out / "model.ckpt");
    write_checkpoint(os, res.net);
  }
  nlohmann::json side = train_config_json(tc);
  side["arm"] = arm_name;
  write_json(out / "model.json", side);
  write_metadata(out / "dataset.json", ds);
  log << "train (" << arm_name << "): " << res.status;
  if (!res.logs.empty())
    log << ", final train acc " << res.logs.back().train_acc << ", test acc "
        << res.logs.back().test_acc << ", N " << res.logs.back().N;
  log << '\n';
  return res.diverged ? kExitFailure : kExitOk;
}

int cmd_compare(const Config& cfg, const std::filesystem::path& out, std::ostream& log) {
  const TrainConfig tc = train_config_from(cfg);
  const std::vector<std::uint64_t> seeds = cfg.get_uint_list("compare.seeds");
  const Dataset ds = dataset_from(cfg);
  OutputLock lock(out);
  echo_config(cfg, out);

  const ComparisonReport rep = run_comparison(ds, tc, seeds);
  nlohmann::json j = rep.to_json();
  j["config"] = train_config_json(tc);
  write_json(out / "compare.json", j);
  bool diverged = false;
  for (const ComparisonPair& p : rep.pairs) {
    diverged = diverged || p.diverged;
    auto hs = open_out(out / ("seed" + std::to_string(p.seed) + "_eucl2hyp2eucl.csv"));
    write_epoch_csv(hs, p.hyp_logs);
    auto es = open_out(out / ("seed" + std::to_string(p.seed) + "_euclidean.csv"));
    write_epoch_csv(es, p.euc_logs);
  }
  log << "compare: eucl2hyp2eucl test " << rep.hyp_test_mean << " +- " << rep.hyp_test_std
      << ", euclidean test " << rep.euc_test_mean << " +- " << rep.euc_test_std << ", gap "
      << rep.gap << " over " << rep.pairs.size() << " seeds\n";
  return diverged ? kExitFailure : kExitOk;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Ricci-flow experiments on the Poincare ball"};
  app.require_subcommand(1);

  struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out = "hypflow_out";
    std::vector<std::string> overrides;
  } common;

  using Cmd = int (*)(const Config&, const std::filesystem::path&, std::ostream&);
  const std::vector<std::tuple<std::string, std::string, Cmd>> commands{
      {"flow", "evolve a perturbed hyperbolic metric and record its decay", &cmd_flow},
      {"curvature", "validate finite-difference curvature on a constant-curvature metric",
       &cmd_curvature},
      {"gradcheck", "compare hybrid-pipeline gradients with central differences", &cmd_gradcheck},
      {"train", "train one arm and write the per-epoch log", &cmd_train},
      {"compare", "train both arms over several seeds and write a paired report", &cmd_compare},
  };
  std::vector<std::pair<CLI::App*, Cmd>> subs;
  for (const auto& [name, help, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", common.config_path, "flat key = value config file");
    sub->add_option("--seed", common.seed, "overrides the seed key");
    sub->add_option("--out", common.out, "output directory")->capture_default_str();
    sub->add_option("--set", common.overrides, "key=value override (repeatable)");
    subs.emplace_back(sub, fn);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitRejected;
  }

  try {
    Config cfg;
    if (!common.config_path.empty()) cfg.load_file(common.config_path);
    for (const std::string& s : common.overrides) cfg.set_assignment(s);
    if (common.seed) cfg.set("seed", std::to_string(*common.seed));
    for (const auto& [sub, fn] : subs)
      if (sub->parsed()) return fn(cfg, common.out, std::cout);
  } catch (const PreconditionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRejected;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace hypflow
