#include "curnm/experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "curnm/synthetic.hpp"

namespace curnm {

namespace fs = std::filesystem;

namespace {

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw TrainError("cannot write '" + tmp + "'");
    out << content;
  }
  fs::rename(tmp, path);
}

std::string hash_hex(std::uint64_t h) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

std::string run_result_to_json(const RunResult& r) {
  nlohmann::json j;
  j["dataset"] = r.dataset;
  j["sampler"] = r.sampler;
  j["seed"] = r.seed;
  j["ap_transductive"] = r.ap_transductive;
  j["ap_inductive"] = r.ap_inductive;
  j["epoch_time_s"] = r.epoch_time_s;
  j["epoch_time_total_s"] = r.epoch_time_total_s;
  j["best_val_ap"] = r.best_val_ap;
  j["best_epoch"] = r.best_epoch;
  j["epochs_run"] = r.epochs_run;
  j["lambda_used"] = r.lambda_used;
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& e : r.trace) {
    trace.push_back({{"epoch", e.epoch},
                     {"pi", e.pi},
                     {"delta", e.delta},
                     {"alpha", e.alpha},
                     {"beta", e.beta},
                     {"cache_active", e.cache_active},
                     {"train_loss", e.train_loss},
                     {"val_ap", e.val_ap},
                     {"n_b", e.n_b},
                     {"train_seconds", e.train_seconds},
                     {"epoch_seconds", e.epoch_seconds}});
  }
  j["trace"] = std::move(trace);
  return j.dump(2);
}

RunResult run_result_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  RunResult r;
  r.dataset = j.at("dataset").get<std::string>();
  r.sampler = j.at("sampler").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.ap_transductive = j.at("ap_transductive").get<double>();
  r.ap_inductive = j.at("ap_inductive").get<double>();
  r.epoch_time_s = j.at("epoch_time_s").get<double>();
  r.epoch_time_total_s = j.at("epoch_time_total_s").get<double>();
  r.best_val_ap = j.at("best_val_ap").get<double>();
  r.best_epoch = j.at("best_epoch").get<std::int64_t>();
  r.epochs_run = j.at("epochs_run").get<std::int64_t>();
  r.lambda_used = j.at("lambda_used").get<double>();
  for (const auto& e : j.at("trace")) {
    EpochRecord rec;
    rec.epoch = e.at("epoch").get<std::int64_t>();
    rec.pi = e.at("pi").get<double>();
    rec.delta = e.at("delta").get<double>();
    rec.alpha = e.at("alpha").get<double>();
    rec.beta = e.at("beta").get<double>();
    rec.cache_active = e.at("cache_active").get<bool>();
    rec.train_loss = e.at("train_loss").get<double>();
    rec.val_ap = e.at("val_ap").get<double>();
    rec.n_b = e.at("n_b").get<std::int64_t>();
    rec.train_seconds = e.at("train_seconds").get<double>();
    rec.epoch_seconds = e.at("epoch_seconds").get<double>();
    r.trace.push_back(rec);
  }
  return r;
}

RunPaths run_paths(const ExperimentConfig& cfg, std::uint64_t seed) {
  RunPaths p;
  p.dir = (fs::path(cfg.results_root) / cfg.name / to_string(cfg.sampler) /
           ("seed_" + std::to_string(seed)))
              .string();
  p.manifest = p.dir + "/manifest.json";
  p.run_json = p.dir + "/run.json";
  p.schedule_csv = p.dir + "/schedule.csv";
  p.metrics_csv = p.dir + "/metrics.csv";
  p.timing_csv = p.dir + "/timing.csv";
  p.checkpoint = p.dir + "/checkpoint.bin";
  return p;
}

TemporalGraph resolve_dataset(const ExperimentConfig& cfg) {
  if (cfg.use_synthetic) return generate_synthetic(cfg.synthetic);
  return load_edge_list(cfg.dataset_path, cfg.schema);
}

RunResult run_single(const ExperimentConfig& cfg, const TemporalGraph& g,
                     const ChronologicalSplit& split, std::uint64_t seed,
                     ExistingRunPolicy policy, std::ostream& log) {
  const auto paths = run_paths(cfg, seed);
  const std::string cfg_hash = hash_hex(cfg.hash());

  if (fs::exists(paths.manifest)) {
    std::ifstream in(paths.manifest);
    std::stringstream ss;
    ss << in.rdbuf();
    const auto j = nlohmann::json::parse(ss.str());
    const bool same = j.value("config_hash", "") == cfg_hash;
    if (same && policy == ExistingRunPolicy::skip && fs::exists(paths.run_json)) {
      log << "[run] skip completed " << paths.dir << "\n";
      std::ifstream rin(paths.run_json);
      std::stringstream rs;
      rs << rin.rdbuf();
      return run_result_from_json(rs.str());
    }
    if (same && policy == ExistingRunPolicy::refuse)
      throw TrainError("run already exists with the same config hash: " + paths.dir +
                       " (use --force to overwrite)");
  }
  fs::create_directories(paths.dir);

  // manifest first: a run is reconstructible from it alone
  {
    nlohmann::json j;
    j["config_hash"] = cfg_hash;
    j["code_version"] = kCodeVersion;
    j["seed"] = seed;
    j["config"] = cfg.canonical();
    j["dataset_fingerprint"] = {{"num_nodes", g.num_nodes},
                                {"num_events", g.num_events()},
                                {"t_first", g.t.front()},
                                {"t_last", g.t.back()}};
    write_text_atomic(paths.manifest, j.dump(2));
  }

  auto tcfg = cfg.trainer;
  tcfg.seed = seed;
  Trainer trainer(g, split, cfg.sampler, tcfg, cfg.curriculum, cfg.pool, cfg.selector,
                  cfg.host);
  log << "[run] " << cfg.name << " sampler=" << to_string(cfg.sampler) << " seed=" << seed
      << "\n";
  auto train_res = trainer.train();
  trainer.restore_params(train_res.best_params);
  trainer.save_checkpoint(paths.checkpoint);

  // deterministic trace files (no wall times)
  {
    std::ostringstream sched, metrics, timing;
    write_schedule_header(sched);
    metrics << "epoch,train_loss,val_ap,n_b\n";
    timing << "epoch,train_seconds,epoch_seconds\n";
    CurriculumState row_state = trainer.curriculum();
    for (const auto& e : train_res.trace) {
      row_state.epoch = e.epoch;
      row_state.pi = e.pi;
      row_state.delta = e.delta;
      row_state.alpha = e.alpha;
      row_state.beta = e.beta;
      row_state.cache_active = e.cache_active;
      append_schedule_row(sched, row_state, e.val_ap);
      metrics << e.epoch << ',' << fmt17(e.train_loss) << ',' << fmt17(e.val_ap) << ','
              << e.n_b << '\n';
      timing << e.epoch << ',' << fmt17(e.train_seconds) << ',' << fmt17(e.epoch_seconds)
             << '\n';
    }
    write_text_atomic(paths.schedule_csv, sched.str());
    write_text_atomic(paths.metrics_csv, metrics.str());
    write_text_atomic(paths.timing_csv, timing.str());
  }

  // final evaluation from the best checkpoint, replayed from scratch
  RunResult result;
  result.dataset = cfg.use_synthetic ? "synthetic" : cfg.dataset_path;
  result.sampler = to_string(cfg.sampler);
  result.seed = seed;
  result.best_val_ap = train_res.best_val_ap;
  result.best_epoch = train_res.best_epoch;
  result.epochs_run = train_res.epochs_run;
  result.lambda_used = train_res.lambda_used;
  result.trace = train_res.trace;

  double mean_train = 0.0, mean_total = 0.0;
  for (const auto& e : train_res.trace) {
    mean_train += e.train_seconds;
    mean_total += e.epoch_seconds;
  }
  const auto n_ep = static_cast<double>(std::max<std::size_t>(train_res.trace.size(), 1));
  result.epoch_time_s = mean_train / n_ep;
  result.epoch_time_total_s = mean_total / n_ep;

  auto eval_with = [&](EvalProtocol::Mode mode) {
    trainer.host().reset_state();
    HistoricalNeighborIndex idx(g.num_nodes);
    replay_range(trainer.host(), idx, g, 0, split.val_end);
    EvalProtocol proto;
    proto.mode = mode;
    proto.negatives_per_positive = cfg.eval_negatives;
    proto.seed = cfg.eval_seed ^ (seed * 0x9e3779b97f4a7c15ull);
    const auto res =
        evaluate_stream(trainer.host(), idx, g, split.val_end, split.test_end, proto, split);
    return res;
  };
  result.ap_transductive = eval_with(EvalProtocol::Mode::transductive).ap;
  result.ap_inductive = eval_with(EvalProtocol::Mode::inductive).ap;

  write_text_atomic(paths.run_json, run_result_to_json(result));

  // aggregate convenience row
  const auto agg_path = fs::path(cfg.results_root) / cfg.name / "aggregate.csv";
  const bool fresh = !fs::exists(agg_path);
  std::ofstream agg(agg_path, std::ios::app);
  if (fresh)
    agg << "dataset,sampler,seed,ap_transductive,ap_inductive,best_val_ap,best_epoch,"
           "epochs_run,epoch_time_s,epoch_time_total_s\n";
  agg << result.dataset << ',' << result.sampler << ',' << seed << ','
      << fmt17(result.ap_transductive) << ',' << fmt17(result.ap_inductive) << ','
      << fmt17(result.best_val_ap) << ',' << result.best_epoch << ',' << result.epochs_run
      << ',' << fmt17(result.epoch_time_s) << ',' << fmt17(result.epoch_time_total_s)
      << '\n';

  log << "[run] done seed=" << seed << " ap_trans=" << result.ap_transductive
      << " ap_ind=" << result.ap_inductive << " best_val=" << result.best_val_ap << "\n";
  return result;
}

std::vector<RunResult> run_experiment(const ExperimentConfig& cfg, bool force,
                                      std::ostream& log) {
  cfg.validate();
  const auto g = resolve_dataset(cfg);
  const auto split = split_chronological(g, cfg.split_ratios);
  std::vector<RunResult> out;
  for (auto seed : cfg.seeds)
    out.push_back(run_single(cfg, g, split, seed,
                             force ? ExistingRunPolicy::overwrite : ExistingRunPolicy::refuse,
                             log));
  return out;
}

GridOutcome grid_search(const ConfigMap& base_map, std::ostream& log) {
  // collect grid axes
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  for (const auto& [k, v] : base_map.entries()) {
    if (k.rfind("grid.", 0) != 0) continue;
    const std::string key = k.substr(5);
    if (key == "sample" || key == "sample_seed") continue;
    axes.emplace_back(key, base_map.get_list(k));
  }
  if (axes.empty()) throw ValidationError("grid search needs at least one grid.<key> entry");

  std::vector<std::map<std::string, std::string>> cells{{}};
  for (const auto& [key, values] : axes) {
    std::vector<std::map<std::string, std::string>> next;
    for (const auto& cell : cells)
      for (const auto& v : values) {
        auto c = cell;
        c[key] = v;
        next.push_back(std::move(c));
      }
    cells = std::move(next);
  }

  const auto sample = base_map.get_int("grid.sample", 0);
  if (sample > 0 && sample < static_cast<std::int64_t>(cells.size())) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(base_map.get_int("grid.sample_seed", 1)));
    std::shuffle(cells.begin(), cells.end(), rng);
    cells.resize(static_cast<std::size_t>(sample));
  }

  const std::string base_name = base_map.get_str("name", "exp");
  GridOutcome outcome;
  std::optional<TemporalGraph> shared_graph;
  std::optional<ChronologicalSplit> shared_split;
  std::string shared_dataset_key;

  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    ConfigMap cell_map = base_map;
    std::string label;
    for (const auto& [k, v] : cells[ci]) {
      cell_map.set(k, v);
      if (!label.empty()) label += "_";
      std::string key_part = k;
      std::replace(key_part.begin(), key_part.end(), '.', '-');
      label += key_part + "=" + v;
    }
    cell_map.set("name", "cell");
    ExperimentConfig cfg = ExperimentConfig::from_map(cell_map);
    cfg.results_root =
        (fs::path(cfg.results_root) / base_name / "grid" / label).string();

    // datasets are identical across cells unless a grid axis touches them
    const std::string dataset_key = cfg.use_synthetic
                                        ? "synthetic:" + std::to_string(cfg.synthetic.seed) +
                                              ":" + std::to_string(cfg.synthetic.num_events)
                                        : cfg.dataset_path;
    bool dataset_axis = false;
    for (const auto& [k, v] : cells[ci])
      if (k.rfind("synthetic.", 0) == 0 || k.rfind("dataset", 0) == 0) dataset_axis = true;
    if (!shared_graph || dataset_axis || dataset_key != shared_dataset_key) {
      shared_graph = resolve_dataset(cfg);
      shared_split = split_chronological(*shared_graph, cfg.split_ratios);
      shared_dataset_key = dataset_key;
    }

    double sum_val = 0.0;
    for (auto seed : cfg.seeds) {
      const auto r = run_single(cfg, *shared_graph, *shared_split, seed,
                                ExistingRunPolicy::skip, log);
      sum_val += r.best_val_ap;
    }
    GridOutcome::Cell cell;
    cell.label = label;
    cell.overrides = cells[ci];
    cell.mean_val_ap = sum_val / static_cast<double>(cfg.seeds.size());
    outcome.leaderboard.push_back(std::move(cell));
    log << "[grid] " << label << " mean_val_ap=" << outcome.leaderboard.back().mean_val_ap
        << "\n";
  }

  std::sort(outcome.leaderboard.begin(), outcome.leaderboard.end(),
            [](const auto& a, const auto& b) {
              if (a.mean_val_ap != b.mean_val_ap) return a.mean_val_ap > b.mean_val_ap;
              return a.label < b.label;
            });

  // persist leaderboard + winning config
  const auto root = fs::path(base_map.get_str("results_root", "results")) / base_name;
  fs::create_directories(root);
  {
    std::ostringstream csv;
    csv << "rank,label,mean_val_ap\n";
    for (std::size_t i = 0; i < outcome.leaderboard.size(); ++i)
      csv << (i + 1) << ',' << outcome.leaderboard[i].label << ','
          << fmt17(outcome.leaderboard[i].mean_val_ap) << '\n';
    write_text_atomic((root / "grid_leaderboard.csv").string(), csv.str());
  }
  {
    ConfigMap best = base_map;
    for (const auto& [k, v] : outcome.leaderboard.front().overrides) best.set(k, v);
    outcome.best_config_canonical = best.canonical();
    write_text_atomic((root / "grid_best_config.txt").string(),
                      outcome.best_config_canonical);
  }
  return outcome;
}

}  // namespace curnm
