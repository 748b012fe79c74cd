#include "hypflow/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

namespace hypflow {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const ConfigKey* find_key(const std::string& name) {
  for (const ConfigKey& k : config_schema())
    if (k.name == name) return &k;
  return nullptr;
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema{
      {"version", "1", "config schema version (only 1 is accepted)"},
      {"seed", "1", "seed for network initialization and data order"},
      {"ball.dim", "2", "dimension of the Poincare ball for flow and curvature runs"},
      {"ball.r", "1", "curvature parameter r >= 0 (sectional curvature -r)"},

      {"flow.variant", "paper_exact", "rescaling term: paper_exact (c = 1) or r_scaled (c = r)"},
      {"flow.nodes", "65", "grid nodes per axis"},
      {"flow.truncation", "0.9", "domain radius as a fraction of the ball radius"},
      {"flow.initial", "bump", "initial metric: bump, hyperbolic or file"},
      {"flow.initial_file", "", "metric field file used when flow.initial = file"},
      {"flow.bump", "0.05", "conformal bump amplitude"},
      {"flow.dt", "0", "time step (0 selects the diffusive default)"},
      {"flow.t_max", "5", "time budget"},
      {"flow.tol", "0", "absolute stop on the squared L2 distance"},
      {"flow.rel_tol", "1e-6", "stop when the squared L2 distance falls by this factor"},
      {"flow.eps_tol", "0", "optional stop on epsilon-closeness (0 disables)"},
      {"flow.epsilon_gate", "0.25", "largest accepted initial epsilon-closeness"},
      {"flow.sample_every", "10", "steps between diagnostic samples"},
      {"flow.max_retries", "4", "time-step halvings allowed after an unstable step"},

      {"curvature.metric", "hyperbolic", "metric to validate: hyperbolic or flat"},
      {"curvature.spacing", "0.015625", "grid spacing h"},
      {"curvature.radius", "0.5", "radius of the sampled disk (absolute units)"},
      {"curvature.tol", "5e-3", "pass threshold on the max interior relative error"},

      {"gradcheck.batch", "4", "samples in the checked batch"},
      {"gradcheck.hidden", "16", "hidden width of the checked network"},
      {"gradcheck.step", "1e-5", "central-difference step"},
      {"gradcheck.tol", "1e-5", "pass threshold on the max relative error"},

      {"train.arm", "eucl2hyp2eucl", "eucl2hyp2eucl or euclidean"},
      {"train.alpha", "0.1", "weight of the regularizer N"},
      {"train.r", "0.01", "curvature parameter of the training ball"},
      {"train.epsilon", "0.25", "epsilon gate for the metric perturbation"},
      {"train.k1", "0", "first row shift"},
      {"train.k2", "2", "second row shift"},
      {"train.j1", "0", "first column shift"},
      {"train.j2", "2", "second column shift"},
      {"train.translate", "zero_pad", "zero_pad or circular"},
      {"train.epochs", "50", "training epochs"},
      {"train.batch_size", "32", "minibatch size"},
      {"train.hidden", "64", "hidden width"},
      {"train.activation", "relu", "hidden activation: relu, tanh or identity"},
      {"train.lr0", "1.0", "initial learning rate of the cosine schedule"},
      {"train.weight_decay", "5e-4", "weight decay (not applied to biases)"},
      {"train.flow_backend", "linearized", "none, linearized or pde"},
      {"train.kappa", "2", "decay rate of the linearized flow"},
      {"train.flow_tol", "1e-4", "target epsilon-closeness after the flow step"},
      {"train.pde_nodes", "17", "grid nodes per axis for the pde backend"},
      {"train.precondition", "true", "divide ball-stage gradients by the metric"},

      {"data.source", "synth", "synth, csv or idx"},
      {"data.seed", "12345", "seed of the synthetic generator"},
      {"data.n_train", "2000", "synthetic train samples"},
      {"data.n_test", "500", "synthetic test samples"},
      {"data.size", "12", "synthetic image side"},
      {"data.classes", "4", "number of classes"},
      {"data.normalize", "true", "standardize with train statistics"},
      {"data.train_csv", "", "train CSV (data.source = csv)"},
      {"data.test_csv", "", "test CSV (data.source = csv)"},
      {"data.train_images", "", "train IDX images (data.source = idx)"},
      {"data.train_labels", "", "train IDX labels"},
      {"data.test_images", "", "test IDX images"},
      {"data.test_labels", "", "test IDX labels"},

      {"compare.seeds", "1,2,3,4,5", "comma-separated training seeds"},
  };
  return schema;
}

Config::Config() {
  for (const ConfigKey& k : config_schema()) values_[k.name] = k.default_value;
}

void Config::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  load_text(ss.str(), path.string());
}

void Config::load_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (!seen.insert(key).second) throw ConfigError(where + ": duplicate key '" + key + "'");
    try {
      set(key, trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
}

void Config::set(const std::string& key, const std::string& value) {
  if (!find_key(key)) throw ConfigError("unknown config key '" + key + "'");
  if (key == "version" && value != "1")
    throw ConfigError("unsupported config version '" + value + "'");
  values_[key] = value;
}

void Config::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

const std::string& Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double Config::get_double(const std::string& key) const {
  const std::string& v = get(key);
  char* end = nullptr;
  errno = 0;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || errno == ERANGE)
    throw ConfigError(key + ": '" + v + "' is not a number");
  return d;
}

std::int64_t Config::get_int(const std::string& key) const {
  const std::string& v = get(key);
  char* end = nullptr;
  errno = 0;
  const long long i = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0' || errno == ERANGE)
    throw ConfigError(key + ": '" + v + "' is not an integer");
  return i;
}

std::uint64_t Config::get_uint(const std::string& key) const {
  const std::string& v = get(key);
  char* end = nullptr;
  errno = 0;
  const unsigned long long u = std::strtoull(v.c_str(), &end, 10);
  if (v.empty() || v[0] == '-' || *end != '\0' || errno == ERANGE)
    throw ConfigError(key + ": '" + v + "' is not a non-negative integer");
  return u;
}

bool Config::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": '" + v + "' is not true or false");
}

std::vector<std::uint64_t> Config::get_uint_list(const std::string& key) const {
  std::vector<std::uint64_t> out;
  std::istringstream in(get(key));
  std::string tok;
  while (std::getline(in, tok, ',')) {
    tok = trim(tok);
    char* end = nullptr;
    const unsigned long long u = std::strtoull(tok.c_str(), &end, 10);
    if (tok.empty() || tok[0] == '-' || *end != '\0')
      throw ConfigError(key + ": '" + tok + "' is not a non-negative integer");
    out.push_back(u);
  }
  if (out.empty()) throw ConfigError(key + ": list is empty");
  return out;
}

void Config::write(std::ostream& os) const {
  for (const ConfigKey& k : config_schema()) os << k.name << " = " << values_.at(k.name) << '\n';
}

}  // namespace hypflow
