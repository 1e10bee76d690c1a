#include "curnm/config.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace curnm {

const char* kCodeVersion = "curnm 0.1.0";

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string fmt_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

ConfigMap ConfigMap::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), std::filesystem::path(path).parent_path().string());
}

ConfigMap ConfigMap::parse(const std::string& text, const std::string& base_dir) {
  ConfigMap out;
  std::istringstream in(text);
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    if (line.rfind("include ", 0) == 0) {
      auto inc_path = trim(line.substr(8));
      if (!inc_path.empty() && inc_path[0] != '/')
        inc_path = (std::filesystem::path(base_dir) / inc_path).string();
      const ConfigMap inner = load(inc_path);
      for (const auto& [k, v] : inner.entries_) out.entries_[k] = v;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw LoadError("config line " + std::to_string(line_no) + ": expected key = value");
    out.entries_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

void ConfigMap::set(const std::string& key, const std::string& value) {
  entries_[key] = value;
}

void ConfigMap::merge(const ConfigMap& overrides) {
  for (const auto& [k, v] : overrides.entries_) entries_[k] = v;
}

bool ConfigMap::has(const std::string& key) const { return entries_.count(key) > 0; }

std::string ConfigMap::get_str(const std::string& key, const std::string& fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

double ConfigMap::get_real(const std::string& key, double fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (...) {
    throw ValidationError("config key '" + key + "': '" + it->second + "' is not a number");
  }
}

std::int64_t ConfigMap::get_int(const std::string& key, std::int64_t fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::int64_t v = 0;
  const auto& s = it->second;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw ValidationError("config key '" + key + "': '" + s + "' is not an integer");
  return v;
}

bool ConfigMap::get_bool(const std::string& key, bool fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const auto& s = it->second;
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ValidationError("config key '" + key + "': '" + s + "' is not a boolean");
}

std::vector<std::string> ConfigMap::get_list(const std::string& key) const {
  std::vector<std::string> out;
  auto it = entries_.find(key);
  if (it == entries_.end()) return out;
  std::istringstream ss(it->second);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

std::string ConfigMap::canonical() const {
  std::string out;
  for (const auto& [k, v] : entries_) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  return out;
}

void SyntheticSpec::validate(std::vector<std::string>& errors) const {
  if (num_nodes < 10) errors.push_back("synthetic.num_nodes must be >= 10");
  if (num_events < 10) errors.push_back("synthetic.num_events must be >= 10");
  if (!(drift_rate >= 0.0 && drift_rate <= 1.0))
    errors.push_back("synthetic.drift_rate must be in [0,1]");
  if (recurrence_period < 0.0) errors.push_back("synthetic.recurrence_period must be >= 0");
  if (!(recency_strength >= 0.0 && recency_strength < 1.0))
    errors.push_back("synthetic.recency_strength must be in [0,1)");
  if (max_events_per_pair < 0) errors.push_back("synthetic.max_events_per_pair must be >= 0");
  if (!(source_fraction > 0.0 && source_fraction < 1.0))
    errors.push_back("synthetic.source_fraction must be in (0,1)");
  if (clusters < 1) errors.push_back("synthetic.clusters must be >= 1");
}

ExperimentConfig ExperimentConfig::from_map(const ConfigMap& m) {
  ExperimentConfig c;
  c.name = m.get_str("name", c.name);
  c.results_root = m.get_str("results_root", c.results_root);

  const std::string dataset = m.get_str("dataset", "synthetic");
  c.use_synthetic = dataset == "synthetic";
  if (!c.use_synthetic) c.dataset_path = dataset;
  c.schema.src_col = static_cast<int>(m.get_int("dataset.src_col", 0));
  c.schema.dst_col = static_cast<int>(m.get_int("dataset.dst_col", 1));
  c.schema.time_col = static_cast<int>(m.get_int("dataset.time_col", 2));
  const std::string delim = m.get_str("dataset.delimiter", ",");
  c.schema.delimiter = delim == "tab" ? '\t' : delim == "space" ? ' ' : delim.empty() ? ',' : delim[0];
  c.schema.has_header = m.get_bool("dataset.header", false);
  c.schema.bipartite = m.get_bool("dataset.bipartite", false);
  const std::string idp = m.get_str("dataset.id_policy", "dense");
  c.schema.id_policy =
      idp == "as_is" ? EdgeListSchema::IdPolicy::as_is : EdgeListSchema::IdPolicy::dense;

  c.synthetic.num_nodes = m.get_int("synthetic.num_nodes", c.synthetic.num_nodes);
  c.synthetic.num_events = m.get_int("synthetic.num_events", c.synthetic.num_events);
  c.synthetic.drift_rate = m.get_real("synthetic.drift_rate", c.synthetic.drift_rate);
  c.synthetic.recurrence_period =
      m.get_real("synthetic.recurrence_period", c.synthetic.recurrence_period);
  c.synthetic.recency_strength =
      m.get_real("synthetic.recency_strength", c.synthetic.recency_strength);
  c.synthetic.max_events_per_pair =
      m.get_int("synthetic.max_events_per_pair", c.synthetic.max_events_per_pair);
  c.synthetic.source_fraction =
      m.get_real("synthetic.source_fraction", c.synthetic.source_fraction);
  c.synthetic.clusters = m.get_int("synthetic.clusters", c.synthetic.clusters);
  c.synthetic.seed = static_cast<std::uint64_t>(m.get_int("synthetic.seed", 13));

  auto ratios = m.get_list("split");
  if (!ratios.empty()) {
    if (ratios.size() != 3) throw ValidationError("split must list three ratios");
    for (int i = 0; i < 3; ++i) c.split_ratios[static_cast<std::size_t>(i)] = std::stod(ratios[static_cast<std::size_t>(i)]);
  }

  c.sampler = sampler_from_string(m.get_str("sampler", "curnm"));
  auto seeds = m.get_list("seeds");
  if (!seeds.empty()) {
    c.seeds.clear();
    for (const auto& s : seeds) c.seeds.push_back(static_cast<std::uint64_t>(std::stoll(s)));
  }

  c.trainer.batch_size = m.get_int("trainer.batch_size", c.trainer.batch_size);
  c.trainer.max_epochs = m.get_int("trainer.max_epochs", c.trainer.max_epochs);
  c.trainer.learning_rate = m.get_real("trainer.learning_rate", c.trainer.learning_rate);
  c.trainer.lambda_con = m.get_real("trainer.lambda", c.trainer.lambda_con);
  c.trainer.mu_l2 = m.get_real("trainer.mu", c.trainer.mu_l2);
  c.trainer.patience = m.get_int("trainer.patience", c.trainer.patience);
  c.trainer.precision = m.get_str("trainer.precision", c.trainer.precision);
  c.trainer.negatives_per_positive =
      m.get_int("trainer.negatives_per_positive", c.trainer.negatives_per_positive);
  c.trainer.val_seed = static_cast<std::uint64_t>(m.get_int("trainer.val_seed", 97));
  c.trainer.pool_dump_path = m.get_str("debug.pool_dump", "");
  c.trainer.selector_dump_path = m.get_str("debug.selector_dump", "");

  c.curriculum.gamma_shrink = m.get_real("curriculum.gamma_shrink", c.curriculum.gamma_shrink);
  c.curriculum.tau = m.get_real("curriculum.tau", c.curriculum.tau);
  c.curriculum.delta_min = m.get_real("curriculum.delta_min", c.curriculum.delta_min);
  c.curriculum.alpha_max = m.get_real("curriculum.alpha_max", c.curriculum.alpha_max);
  c.curriculum.e_prime = m.get_int("curriculum.e_prime", c.trainer.max_epochs / 2);
  c.curriculum.e_double_prime =
      m.get_int("curriculum.e_double_prime", c.trainer.max_epochs / 2);
  c.curriculum.pi_init = m.get_real("curriculum.pi_init", c.curriculum.pi_init);
  c.curriculum.pi_min = m.get_real("curriculum.pi_min", c.curriculum.pi_min);
  c.curriculum.improvement_tolerance =
      m.get_real("curriculum.tolerance", c.curriculum.improvement_tolerance);
  c.curriculum.ablate_adaptive_pi = m.get_bool("ablate.adaptive_pi", false);
  c.curriculum.ablate_random_negatives = m.get_bool("ablate.random_negatives", false);
  c.curriculum.ablate_hard_cache = m.get_bool("ablate.hard_cache", false);

  c.pool.M = m.get_int("pool.M", c.pool.M);
  c.pool.gamma_hist = m.get_real("pool.gamma_hist", c.pool.gamma_hist);

  c.host.d = m.get_int("host.d", c.host.d);
  c.host.time_dim = m.get_int("host.time_dim", c.host.time_dim);
  c.selector.d = m.get_int("selector.d", c.host.d);
  c.selector.k = m.get_int("selector.k", c.selector.k);
  c.selector.ablate_disentangle = m.get_bool("ablate.disentangle", false);
  c.selector.ablate_temporal = m.get_bool("ablate.temporal", false);

  c.eval_negatives = m.get_int("eval.negatives_per_positive", c.eval_negatives);
  c.eval_seed = static_cast<std::uint64_t>(m.get_int("eval.seed", 1009));

  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  std::vector<std::string> errors;
  auto collect = [&](auto&& fn) {
    try {
      fn();
    } catch (const ValidationError& e) {
      errors.push_back(e.what());
    }
  };
  collect([&] { trainer.validate(); });
  collect([&] { curriculum.validate(); });
  collect([&] { pool.validate(); });
  collect([&] { host.validate(); });
  if (use_synthetic) synthetic.validate(errors);
  if (!use_synthetic && dataset_path.empty())
    errors.push_back("dataset path is empty");
  if (selector.d != host.d) errors.push_back("selector.d must equal host.d");
  if (selector.k < 1) errors.push_back("selector.k must be >= 1");
  if (seeds.empty()) errors.push_back("seeds list is empty");
  if (eval_negatives < 1) errors.push_back("eval.negatives_per_positive must be >= 1");
  const double rsum = split_ratios[0] + split_ratios[1] + split_ratios[2];
  if (std::abs(rsum - 1.0) > 1e-9) errors.push_back("split ratios must sum to 1");
  if (name.empty() || name.find('/') != std::string::npos)
    errors.push_back("experiment name must be a plain directory name");
  if (!errors.empty()) {
    std::string msg = "invalid experiment config:";
    for (const auto& e : errors) {
      msg += "\n  - ";
      msg += e;
    }
    throw ValidationError(msg);
  }
}

std::string ExperimentConfig::canonical() const {
  ConfigMap m;
  m.set("name", name);
  m.set("dataset", use_synthetic ? "synthetic" : dataset_path);
  m.set("dataset.src_col", std::to_string(schema.src_col));
  m.set("dataset.dst_col", std::to_string(schema.dst_col));
  m.set("dataset.time_col", std::to_string(schema.time_col));
  m.set("dataset.delimiter", std::string(1, schema.delimiter));
  m.set("dataset.header", schema.has_header ? "true" : "false");
  m.set("dataset.bipartite", schema.bipartite ? "true" : "false");
  m.set("dataset.id_policy",
        schema.id_policy == EdgeListSchema::IdPolicy::as_is ? "as_is" : "dense");
  m.set("synthetic.num_nodes", std::to_string(synthetic.num_nodes));
  m.set("synthetic.num_events", std::to_string(synthetic.num_events));
  m.set("synthetic.drift_rate", fmt_real(synthetic.drift_rate));
  m.set("synthetic.recurrence_period", fmt_real(synthetic.recurrence_period));
  m.set("synthetic.recency_strength", fmt_real(synthetic.recency_strength));
  m.set("synthetic.max_events_per_pair", std::to_string(synthetic.max_events_per_pair));
  m.set("synthetic.source_fraction", fmt_real(synthetic.source_fraction));
  m.set("synthetic.clusters", std::to_string(synthetic.clusters));
  m.set("synthetic.seed", std::to_string(synthetic.seed));
  m.set("split", fmt_real(split_ratios[0]) + "," + fmt_real(split_ratios[1]) + "," +
                     fmt_real(split_ratios[2]));
  m.set("sampler", to_string(sampler));
  {
    std::string s;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(seeds[i]);
    }
    m.set("seeds", s);
  }
  m.set("trainer.batch_size", std::to_string(trainer.batch_size));
  m.set("trainer.max_epochs", std::to_string(trainer.max_epochs));
  m.set("trainer.learning_rate", fmt_real(trainer.learning_rate));
  m.set("trainer.lambda", fmt_real(trainer.lambda_con));
  m.set("trainer.mu", fmt_real(trainer.mu_l2));
  m.set("trainer.patience", std::to_string(trainer.patience));
  m.set("trainer.precision", trainer.precision);
  m.set("trainer.negatives_per_positive", std::to_string(trainer.negatives_per_positive));
  m.set("trainer.val_seed", std::to_string(trainer.val_seed));
  m.set("curriculum.gamma_shrink", fmt_real(curriculum.gamma_shrink));
  m.set("curriculum.tau", fmt_real(curriculum.tau));
  m.set("curriculum.delta_min", fmt_real(curriculum.delta_min));
  m.set("curriculum.alpha_max", fmt_real(curriculum.alpha_max));
  m.set("curriculum.e_prime", std::to_string(curriculum.e_prime));
  m.set("curriculum.e_double_prime", std::to_string(curriculum.e_double_prime));
  m.set("curriculum.pi_init", fmt_real(curriculum.pi_init));
  m.set("curriculum.pi_min", fmt_real(curriculum.pi_min));
  m.set("curriculum.tolerance", fmt_real(curriculum.improvement_tolerance));
  m.set("ablate.adaptive_pi", curriculum.ablate_adaptive_pi ? "true" : "false");
  m.set("ablate.random_negatives", curriculum.ablate_random_negatives ? "true" : "false");
  m.set("ablate.hard_cache", curriculum.ablate_hard_cache ? "true" : "false");
  m.set("ablate.disentangle", selector.ablate_disentangle ? "true" : "false");
  m.set("ablate.temporal", selector.ablate_temporal ? "true" : "false");
  m.set("pool.M", std::to_string(pool.M));
  m.set("pool.gamma_hist", fmt_real(pool.gamma_hist));
  m.set("selector.d", std::to_string(selector.d));
  m.set("selector.k", std::to_string(selector.k));
  m.set("host.d", std::to_string(host.d));
  m.set("host.time_dim", std::to_string(host.time_dim));
  m.set("eval.negatives_per_positive", std::to_string(eval_negatives));
  m.set("eval.seed", std::to_string(eval_seed));
  return m.canonical();
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a(canonical()); }

}  // namespace curnm
