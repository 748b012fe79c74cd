#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "hypflow/cli.hpp"
#include "hypflow/config.hpp"
#include "json.hpp"

using namespace hypflow;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "hypflow_unit_cli" / name;
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "hypflow");
  std::vector<char*> argv;
  for (std::string& a : args) argv.push_back(a.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST_CASE("config parsing") {
  Config c;
  CHECK(c.get("flow.nodes") == "65");
  c.load_text("# comment\nversion = 1\n\nflow.nodes = 33  \ntrain.precondition=false\n");
  CHECK(c.get_int("flow.nodes") == 33);
  CHECK_FALSE(c.get_bool("train.precondition"));
  CHECK(c.get_uint_list("compare.seeds") == std::vector<std::uint64_t>{1, 2, 3, 4, 5});

  CHECK_THROWS_AS(c.load_text("flow.nodez = 3\n"), ConfigError);
  CHECK_THROWS_AS(c.load_text("flow.nodes = 3\nflow.nodes = 4\n"), ConfigError);
  CHECK_THROWS_AS(c.load_text("just words\n"), ConfigError);
  CHECK_THROWS_AS(c.set("version", "2"), ConfigError);
  CHECK_THROWS_AS(c.set_assignment("ball.r"), ConfigError);
  c.set_assignment("ball.r=0.5");
  CHECK(c.get_double("ball.r") == 0.5);
  c.set("ball.r", "half");
  CHECK_THROWS_AS(c.get_double("ball.r"), ConfigError);
  c.set("flow.nodes", "-3");
  CHECK_THROWS_AS(c.get_uint("flow.nodes"), ConfigError);

  std::ostringstream os;
  Config().write(os);
  Config round;
  round.load_text(os.str());
  std::ostringstream os2;
  round.write(os2);
  CHECK(os.str() == os2.str());
}

TEST_CASE("config builders validate") {
  Config c;
  c.set("flow.truncation", "1.5");
  CHECK_THROWS_AS(flow_config_from(c), PreconditionError);
  Config t;
  t.set("train.k2", "0");
  CHECK_THROWS_AS(train_config_from(t), PreconditionError);
  Config a;
  a.set("train.activation", "swish");
  CHECK_THROWS_AS(train_config_from(a), PreconditionError);
  Config f;
  f.set("flow.variant", "other");
  CHECK_THROWS_AS(flow_config_from(f), PreconditionError);
}

TEST_CASE("flow command") {
  const fs::path out = fresh_dir("flow_exact");
  CHECK(run({"flow", "--out", out.string(), "--set", "flow.initial=hyperbolic", "--set",
             "flow.nodes=17"}) == kExitOk);
  const nlohmann::json s = read_json(out / "flow_summary.json");
  CHECK(s["converged"] == true);
  CHECK(s["steps"] == 0);
  CHECK(slurp(out / "flow.csv").rfind("t,l2_dist_sq,sup_dist,epsilon,C\n", 0) == 0);
  CHECK(fs::exists(out / "config.txt"));
  CHECK(fs::exists(out / "final_metric.field"));
  CHECK_FALSE(fs::exists(out / ".lock"));

  CHECK(run({"flow", "--out", fresh_dir("flow_gate").string(), "--set", "flow.bump=0.5",
             "--set", "flow.nodes=17"}) == kExitRejected);
  CHECK(run({"flow", "--out", fresh_dir("flow_bad").string(), "--set", "flow.nope=1"}) ==
        kExitRejected);
  CHECK(run({"flow", "--bogus"}) == kExitRejected);
}

TEST_CASE("flow command output is reproducible") {
  const fs::path a = fresh_dir("flow_a"), b = fresh_dir("flow_b");
  const std::vector<std::string> common{"--set", "flow.nodes=17", "--set", "flow.rel_tol=1e-3"};
  auto args = [&](const fs::path& o) {
    std::vector<std::string> v{"flow", "--out", o.string()};
    v.insert(v.end(), common.begin(), common.end());
    return v;
  };
  CHECK(run(args(a)) == kExitOk);
  CHECK(run(args(b)) == kExitOk);
  for (const char* f : {"flow.csv", "flow_summary.json", "final_metric.field", "config.txt"})
    CHECK(slurp(a / f) == slurp(b / f));
}

TEST_CASE("locked output directory is refused") {
  const fs::path out = fresh_dir("locked");
  fs::create_directories(out);
  std::ofstream(out / ".lock") << "held";
  CHECK(run({"flow", "--out", out.string(), "--set", "flow.initial=hyperbolic", "--set",
             "flow.nodes=17"}) == kExitFailure);
}

TEST_CASE("curvature command") {
  const fs::path ok = fresh_dir("curv_ok");
  CHECK(run({"curvature", "--out", ok.string()}) == kExitOk);
  const nlohmann::json j = read_json(ok / "curvature.json");
  CHECK(j["pass"] == true);

  CHECK(run({"curvature", "--out", fresh_dir("curv_flat").string(), "--set",
             "curvature.metric=flat"}) == kExitOk);
  const fs::path coarse = fresh_dir("curv_coarse");
  CHECK(run({"curvature", "--out", coarse.string(), "--set", "curvature.spacing=0.25", "--set",
             "curvature.radius=0.75"}) == kExitFailure);
  CHECK(read_json(coarse / "curvature.json")["pass"] == false);
}

TEST_CASE("gradcheck and train commands") {
  const fs::path g = fresh_dir("gradcheck");
  CHECK(run({"gradcheck", "--out", g.string()}) == kExitOk);
  CHECK(read_json(g / "gradcheck.json")["max_rel_error"].get<double>() < 1e-5);

  const fs::path t = fresh_dir("train0");
  CHECK(run({"train", "--out", t.string(), "--set", "train.epochs=0", "--set", "data.n_train=40",
             "--set", "data.n_test=8"}) == kExitOk);
  CHECK(slurp(t / "train_log.csv") == "epoch,loss,N,train_acc,test_acc,flow_time,Br_min,Br_mean,Br_max\n");
  CHECK(fs::exists(t / "model.ckpt"));
  CHECK(fs::exists(t / "dataset.json"));
}

TEST_CASE("compare command writes one pair per seed") {
  const fs::path c = fresh_dir("compare");
  CHECK(run({"compare", "--out", c.string(), "--set", "train.epochs=1", "--set",
             "data.n_train=40", "--set", "data.n_test=8", "--set", "train.hidden=8"}) == kExitOk);
  const nlohmann::json j = read_json(c / "compare.json");
  CHECK(j["pairs"].size() == 5);
  CHECK(fs::exists(c / "seed3_euclidean.csv"));
}
