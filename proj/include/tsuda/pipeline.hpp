// ============================================================================
// pipeline.hpp - experiment orchestration: config, store, run, analyze, report
//
// A run walks the (scenario x algorithm x tuner x seed) grid through five
// stages: load, preprocess, tune, retrain + checkpoint selection, evaluate.
// Every key writes one JSONL file, which makes interrupted runs resumable and
// parallel writers safe. Analysis and report generation read only the store,
// never the data, and never emit wall-clock values into tables, so repeated
// runs with count budgets produce byte-identical CSVs.
// ============================================================================
#pragma once

#include "tsuda/dataset_io.hpp"
#include "tsuda/metrics.hpp"
#include "tsuda/preprocess.hpp"
#include "tsuda/selection.hpp"
#include "tsuda/synthetic.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace tsuda {

// ===== configuration =====

struct DatasetConfig {
  std::string kind = "synthetic";  // "synthetic" | "files"
  std::string name = "synthetic";
  SyntheticSpec spec;
  std::string path;
  std::uint64_t data_seed = 0;
};

struct BudgetConfig {
  int tuning_trials = 8;
  double tuning_wall_seconds = std::numeric_limits<double>::infinity();
  int epochs = 30;
  double trial_wall_seconds = std::numeric_limits<double>::infinity();
  int batch_size = 32;
};

struct PreprocessConfig {
  bool normalize = true;
  int resample_to = 0;  // 0 = keep native length
};

struct ExperimentConfig {
  DatasetConfig dataset;
  std::vector<std::pair<std::string, std::string>> scenarios;  // file datasets only
  std::vector<AlgorithmId> algorithms;
  std::vector<Tuner> tuners;
  std::vector<std::uint64_t> seeds;
  BudgetConfig budgets;
  SearchSpace search_space;
  PreprocessConfig preprocess;
  SplitPolicy split;
  int scenario_cap = 5;
  double iwcv_clip = 10.0;
  std::string output_dir;
};

inline void to_json(nlohmann::json& j, const BudgetConfig& b) {
  j = {{"tuning_trials", b.tuning_trials}, {"epochs", b.epochs}, {"batch_size", b.batch_size}};
  if (std::isfinite(b.tuning_wall_seconds)) j["tuning_wall_seconds"] = b.tuning_wall_seconds;
  if (std::isfinite(b.trial_wall_seconds)) j["trial_wall_seconds"] = b.trial_wall_seconds;
}
inline void from_json(const nlohmann::json& j, BudgetConfig& b) {
  b.tuning_trials = j.value("tuning_trials", 8);
  b.epochs = j.value("epochs", 30);
  b.batch_size = j.value("batch_size", 32);
  if (j.contains("tuning_wall_seconds"))
    b.tuning_wall_seconds = j.at("tuning_wall_seconds").get<double>();
  if (j.contains("trial_wall_seconds"))
    b.trial_wall_seconds = j.at("trial_wall_seconds").get<double>();
}

inline nlohmann::json search_space_to_json(const SearchSpace& s) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, p] : s) {
    nlohmann::json e;
    switch (p.kind) {
      case SearchParam::Kind::Float:
        e = {{"type", "float"}, {"bounds", {p.lo, p.hi}}, {"scale", p.log_scale ? "log" : "linear"}};
        break;
      case SearchParam::Kind::Int:
        e = {{"type", "int"}, {"bounds", {p.lo, p.hi}}};
        break;
      case SearchParam::Kind::Choice:
        e = {{"type", "choice"}, {"values", p.values}};
        break;
    }
    j[name] = e;
  }
  return j;
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  nlohmann::json ds = {{"kind", c.dataset.kind}, {"name", c.dataset.name},
                       {"data_seed", c.dataset.data_seed}};
  if (c.dataset.kind == "synthetic") ds["spec"] = c.dataset.spec;
  else ds["path"] = c.dataset.path;
  nlohmann::json scen = nlohmann::json::array();
  for (const auto& [s, t] : c.scenarios) scen.push_back({{"source", s}, {"target", t}});
  nlohmann::json algos = nlohmann::json::array();
  for (auto a : c.algorithms) algos.push_back(to_string(a));
  nlohmann::json tuners = nlohmann::json::array();
  for (auto t : c.tuners) tuners.push_back(to_string(t));
  j = {{"dataset", ds},
       {"scenarios", scen},
       {"algorithms", algos},
       {"tuners", tuners},
       {"seeds", c.seeds},
       {"budgets", c.budgets},
       {"search_space", search_space_to_json(c.search_space)},
       {"preprocess", {{"normalize", c.preprocess.normalize}, {"resample_to", c.preprocess.resample_to}}},
       {"split", c.split},
       {"scenario_cap", c.scenario_cap},
       {"iwcv_clip", c.iwcv_clip},
       {"output_dir", c.output_dir}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  const auto& ds = j.at("dataset");
  c.dataset.kind = ds.value("kind", "synthetic");
  c.dataset.name = ds.value("name", c.dataset.kind == "synthetic" ? "synthetic" : "dataset");
  c.dataset.data_seed = ds.value("data_seed", std::uint64_t{0});
  if (c.dataset.kind == "synthetic") {
    if (ds.contains("spec")) c.dataset.spec = ds.at("spec").get<SyntheticSpec>();
  } else {
    c.dataset.path = ds.at("path").get<std::string>();
  }
  c.scenarios.clear();
  for (const auto& s : j.value("scenarios", nlohmann::json::array()))
    c.scenarios.emplace_back(s.at("source").get<std::string>(), s.at("target").get<std::string>());
  c.algorithms.clear();
  for (const auto& a : j.at("algorithms")) c.algorithms.push_back(parse_algorithm(a.get<std::string>()));
  c.tuners.clear();
  for (const auto& t : j.at("tuners")) c.tuners.push_back(parse_tuner(t.get<std::string>()));
  c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("budgets")) c.budgets = j.at("budgets").get<BudgetConfig>();
  if (j.contains("search_space")) c.search_space = parse_search_space(j.at("search_space"));
  if (j.contains("preprocess")) {
    c.preprocess.normalize = j.at("preprocess").value("normalize", true);
    c.preprocess.resample_to = j.at("preprocess").value("resample_to", 0);
  }
  if (j.contains("split")) c.split = j.at("split").get<SplitPolicy>();
  c.scenario_cap = j.value("scenario_cap", 5);
  c.iwcv_clip = j.value("iwcv_clip", 10.0);
  c.output_dir = j.value("output_dir", "");
}

inline std::vector<std::string> validate_config(const ExperimentConfig& c) {
  std::vector<std::string> issues;
  if (c.algorithms.empty()) issues.push_back("no algorithms configured");
  if (c.tuners.empty()) issues.push_back("no tuners configured");
  if (c.seeds.empty()) issues.push_back("no seeds configured");
  if (c.dataset.kind == "synthetic") {
    auto v = validate_synthetic_spec(c.dataset.spec);
    issues.insert(issues.end(), v.begin(), v.end());
  } else if (c.dataset.kind == "files") {
    if (c.dataset.path.empty()) issues.push_back("file dataset needs a path");
    if (c.scenarios.empty()) issues.push_back("file dataset needs at least one scenario");
  } else {
    issues.push_back("unknown dataset kind '" + c.dataset.kind + "'");
  }
  if (c.budgets.tuning_trials < 1) issues.push_back("tuning_trials must be >= 1");
  if (c.budgets.epochs < 1) issues.push_back("epochs must be >= 1");
  if (c.budgets.batch_size < 1) issues.push_back("batch_size must be >= 1");
  if (c.budgets.tuning_wall_seconds <= 0) issues.push_back("tuning_wall_seconds must be > 0");
  if (c.budgets.trial_wall_seconds <= 0) issues.push_back("trial_wall_seconds must be > 0");
  if (c.scenario_cap < 1) issues.push_back("scenario_cap must be >= 1");
  if (c.iwcv_clip < 1) issues.push_back("iwcv_clip must be >= 1");
  if (c.search_space.empty()) issues.push_back("search space is empty");
  return issues;
}

// ===== run keys and the results store =====

inline std::string sanitize_key_part(const std::string& s) {
  std::string out;
  for (char ch : s)
    out += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_') ? ch : '-';
  return out;
}

struct RunKey {
  std::string dataset;
  std::string scenario;
  AlgorithmId algorithm;
  Tuner tuner;
  std::uint64_t seed = 0;

  std::string str() const {
    std::ostringstream os;
    os << sanitize_key_part(dataset) << "__" << sanitize_key_part(scenario) << "__"
       << to_string(algorithm) << "__" << to_string(tuner) << "__seed" << seed;
    return os.str();
  }
};

class ResultsStore {
 public:
  explicit ResultsStore(const std::string& dir) : dir_(dir) {
    std::filesystem::create_directories(records_dir());
  }

  std::string records_dir() const { return dir_ + "/records"; }
  std::string key_path(const RunKey& key) const {
    return records_dir() + "/" + key.str() + ".jsonl";
  }

  // a key is complete once its file holds an evaluation line
  bool complete(const RunKey& key) const {
    std::ifstream in(key_path(key));
    if (!in) return false;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (!j.is_discarded() && j.value("type", "") == "evaluation") return true;
    }
    return false;
  }

  void write_key(const RunKey& key, const std::vector<nlohmann::json>& lines) const {
    const std::string tmp = key_path(key) + ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      for (const auto& j : lines) out << j.dump() << "\n";
    }
    std::filesystem::rename(tmp, key_path(key));
  }

  std::vector<nlohmann::json> read_key_file(const std::filesystem::path& p) const {
    std::vector<nlohmann::json> out;
    std::ifstream in(p);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (!j.is_discarded()) out.push_back(std::move(j));
    }
    return out;
  }

  std::vector<std::filesystem::path> key_files() const {
    std::vector<std::filesystem::path> files;
    if (!std::filesystem::exists(records_dir())) return files;
    for (const auto& e : std::filesystem::directory_iterator(records_dir()))
      if (e.path().extension() == ".jsonl") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    return files;
  }

  const std::string& dir() const { return dir_; }

 private:
  std::string dir_;
};

// ===== scenario construction and preprocessing =====

inline void preprocess_domain(DomainDataset& d, const PreprocessConfig& pc) {
  if (pc.resample_to > 0) {
    for (auto* b : {&d.train, &d.val, &d.test}) *b = resample(*b, pc.resample_to);
  }
  if (pc.normalize) {
    NormStats stats = fit_norm_stats(d.train);
    for (auto* b : {&d.train, &d.val, &d.test}) *b = znormalize(*b, stats);
  }
}

inline std::vector<Scenario> build_scenarios(const ExperimentConfig& c) {
  std::vector<Scenario> out;
  if (c.dataset.kind == "synthetic") {
    out.push_back(generate_synthetic_scenario(c.dataset.spec, c.dataset.data_seed));
    out.back().dataset_name = c.dataset.name;
  } else {
    // split policy differs by role, so the cache key carries it
    std::map<std::string, DomainDataset> cache;
    auto domain = [&](const std::string& id, SplitRole role) -> const DomainDataset& {
      const std::string key = id + (role == SplitRole::Source ? "#s" : "#t");
      auto it = cache.find(key);
      if (it == cache.end())
        it = cache.emplace(key, load_domain(c.dataset.path + "/" + id, c.split, role)).first;
      return it->second;
    };
    for (const auto& [s, t] : c.scenarios) {
      Scenario sc;
      sc.dataset_name = c.dataset.name;
      sc.source = domain(s, SplitRole::Source);
      sc.target = domain(t, SplitRole::Target);
      out.push_back(std::move(sc));
    }
  }
  if (static_cast<int>(out.size()) > c.scenario_cap) {
    std::vector<int> idx(out.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto rng = make_rng(derive_seed(c.dataset.data_seed, "scenario-cap"));
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(c.scenario_cap);
    std::sort(idx.begin(), idx.end());
    std::vector<Scenario> kept;
    for (int i : idx) kept.push_back(std::move(out[i]));
    out = std::move(kept);
  }
  for (auto& sc : out) {
    preprocess_domain(sc.source, c.preprocess);
    preprocess_domain(sc.target, c.preprocess);
    auto issues = validate_scenario(sc);
    if (!issues.empty()) {
      std::ostringstream os;
      os << "scenario " << sc.id() << " invalid:";
      for (const auto& s : issues) os << " " << s << ";";
      throw std::runtime_error(os.str());
    }
  }
  return out;
}

// ===== one grid key =====

struct RunSummary {
  int completed = 0;
  int skipped = 0;
  int failed = 0;
  std::vector<std::string> errors;
};

inline EvaluationRecord run_one(const ExperimentConfig& c, const Scenario& scenario,
                                const RunKey& key, std::vector<nlohmann::json>& lines) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t key_seed = derive_seed(key.seed, key.str());

  OracleAudit audit;
  CriterionContext cc =
      make_criterion_context(key.tuner, scenario, key.tuner == Tuner::TargetRisk ? &audit : nullptr,
                             c.iwcv_clip, FeatureSpec{}, derive_seed(key_seed, "iwcv"));

  TuneBudget tb;
  tb.max_trials = c.budgets.tuning_trials;
  tb.wall_seconds = c.budgets.tuning_wall_seconds;
  TrainBudget pb;
  pb.epochs = c.budgets.epochs;
  pb.wall_seconds = c.budgets.trial_wall_seconds;
  pb.batch_size = c.budgets.batch_size;

  TuneResult tr = tune(key.algorithm, scenario, c.search_space, cc, tb, pb,
                       derive_seed(key_seed, "tune"));
  for (const auto& trial : tr.trials) {
    nlohmann::json j = trial;
    j["type"] = "trial";
    lines.push_back(std::move(j));
  }

  // retrain the winning configuration on a fresh stream, then pick the epoch
  // that minimizes the same criterion
  TrainedModel final_tm = train(key.algorithm, scenario, tr.best,
                                derive_seed(key_seed, "final"), pb, criterion_fn(cc));
  if (final_tm.status != "ok" || final_tm.checkpoints.empty())
    throw std::runtime_error("final training failed for " + key.str());
  const int sel = select_checkpoint(final_tm.criterion_trace);
  final_tm.model.ps = final_tm.checkpoints[sel];

  auto eval_split = [&](const TimeSeriesBatch& split) {
    Mat probs = predict(final_tm.model, split);
    std::vector<int> preds = argmax_rows(probs);
    return std::pair<double, double>{accuracy(preds, *split.labels),
                                     macro_f1(preds, *split.labels, scenario.source.num_classes)};
  };
  // held-out test splits; target test labels are fair game at evaluation time
  auto [acc_s, f1_s] = eval_split(scenario.source.test);
  auto [acc_t, f1_t] = eval_split(scenario.target.test);

  if (key.tuner != Tuner::TargetRisk && !audit.empty())
    throw std::logic_error("oracle hygiene violated: label access under " +
                           std::string(to_string(key.tuner)));

  EvaluationRecord rec;
  rec.dataset = key.dataset;
  rec.scenario_id = key.scenario;
  rec.algorithm = key.algorithm;
  rec.tuner = key.tuner;
  rec.seed = key.seed;
  rec.metrics["accuracy_source"] = acc_s;
  rec.metrics["accuracy_target"] = acc_t;
  rec.metrics["macro_f1_source"] = f1_s;
  rec.metrics["macro_f1_target"] = f1_t;
  rec.metrics["criterion_best"] = tr.trials[tr.best_index].criterion;
  rec.selected_epoch = sel;
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  rec.oracle_tuned = key.tuner == Tuner::TargetRisk;

  nlohmann::json je = rec;
  je["type"] = "evaluation";
  lines.push_back(std::move(je));

  nlohmann::json ja;
  ja["type"] = "oracle_audit";
  ja["count"] = audit.entries.size();
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : audit.entries) entries.push_back({{"accessor", e.accessor}, {"split", e.split}});
  ja["entries"] = entries;
  lines.push_back(std::move(ja));
  return rec;
}

// ===== the full grid =====

inline RunSummary run(const ExperimentConfig& c, bool force = false, int parallel = 1) {
  auto issues = validate_config(c);
  if (!issues.empty()) {
    std::ostringstream os;
    os << "invalid config:";
    for (const auto& s : issues) os << " " << s << ";";
    throw std::invalid_argument(os.str());
  }
  if (c.output_dir.empty()) throw std::invalid_argument("run: no output directory");
  ResultsStore store(c.output_dir);
  std::vector<Scenario> scenarios = build_scenarios(c);

  // per-scenario diagnostics, written unconditionally (cheap and deterministic)
  {
    std::filesystem::create_directories(c.output_dir + "/diagnostics");
    for (const auto& sc : scenarios) {
      nlohmann::json d;
      d["dataset"] = c.dataset.name;
      d["scenario"] = sc.id();
      const auto imb_s = imbalance_score(*sc.source.train.labels, sc.source.num_classes);
      // class balance is a data property; reading target train labels here is
      // a dataset diagnostic, not model selection
      const auto imb_t = imbalance_score(*sc.target.train.labels, sc.target.num_classes);
      d["imbalance_source"] = imb_s.value;
      d["imbalance_target"] = imb_t.value;
      d["highly_imbalanced_source"] = imb_s.highly_imbalanced;
      d["highly_imbalanced_target"] = imb_t.highly_imbalanced;
      std::ofstream out(c.output_dir + "/diagnostics/" + sanitize_key_part(c.dataset.name) +
                        "__" + sanitize_key_part(sc.id()) + ".json");
      out << d.dump(2) << "\n";
    }
  }

  std::vector<std::pair<const Scenario*, RunKey>> work;
  for (const auto& sc : scenarios)
    for (auto algo : c.algorithms)
      for (auto tuner : c.tuners)
        for (auto seed : c.seeds)
          work.push_back({&sc, RunKey{c.dataset.name, sc.id(), algo, tuner, seed}});

  RunSummary summary;
  std::mutex mu;
  std::size_t next = 0;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= work.size()) return;
        i = next++;
      }
      const auto& [sc, key] = work[i];
      if (!force && store.complete(key)) {
        std::lock_guard<std::mutex> lock(mu);
        ++summary.skipped;
        continue;
      }
      std::vector<nlohmann::json> lines;
      try {
        run_one(c, *sc, key, lines);
        store.write_key(key, lines);
        std::lock_guard<std::mutex> lock(mu);
        ++summary.completed;
      } catch (const std::exception& ex) {
        nlohmann::json je = {{"type", "error"}, {"key", key.str()}, {"message", ex.what()}};
        lines.push_back(je);
        store.write_key(key, lines);
        std::lock_guard<std::mutex> lock(mu);
        ++summary.failed;
        summary.errors.push_back(key.str() + ": " + ex.what());
      }
    }
  };

  const int nthreads = std::max(1, parallel);
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return summary;
}

// ===== analysis =====

struct NamedTable {
  std::string name;
  std::vector<std::string> row_labels, col_labels;
  Mat values;
};

struct AnalysisBundle {
  std::vector<EvaluationRecord> records;
  std::vector<NamedTable> tables;
  std::map<std::string, FriedmanResult> friedman;  // keyed by tuner name
  std::map<std::string, CdDiagramData> cd;
  std::map<std::string, ScoreMatrix> score_matrices;
  std::vector<nlohmann::json> diagnostics;
  std::vector<std::string> notices;
};

namespace detail_pipe {

inline double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}
inline double std_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double acc = 0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / v.size());
}

}  // namespace detail_pipe

inline AnalysisBundle analyze(const std::string& results_dir) {
  ResultsStore store(results_dir);
  AnalysisBundle bundle;
  for (const auto& p : store.key_files()) {
    for (const auto& j : store.read_key_file(p)) {
      const std::string type = j.value("type", "");
      if (type == "evaluation") bundle.records.push_back(j.get<EvaluationRecord>());
      else if (type == "error")
        bundle.notices.push_back("error at " + j.value("key", "?") + ": " + j.value("message", ""));
    }
  }
  if (bundle.records.empty()) throw std::runtime_error("analyze: no evaluation records");

  if (std::filesystem::exists(results_dir + "/diagnostics")) {
    std::vector<std::filesystem::path> dfiles;
    for (const auto& e : std::filesystem::directory_iterator(results_dir + "/diagnostics"))
      if (e.path().extension() == ".json") dfiles.push_back(e.path());
    std::sort(dfiles.begin(), dfiles.end());
    for (const auto& p : dfiles) {
      std::ifstream in(p);
      nlohmann::json j;
      in >> j;
      bundle.diagnostics.push_back(std::move(j));
    }
  }

  std::set<std::string> algo_set, scen_set, tuner_set;
  std::set<std::uint64_t> seed_set;
  for (const auto& r : bundle.records) {
    algo_set.insert(to_string(r.algorithm));
    scen_set.insert(r.dataset + ":" + r.scenario_id);
    tuner_set.insert(to_string(r.tuner));
    seed_set.insert(r.seed);
  }
  const std::vector<std::string> algos(algo_set.begin(), algo_set.end());
  const std::vector<std::string> scens(scen_set.begin(), scen_set.end());
  const std::vector<std::string> tuners(tuner_set.begin(), tuner_set.end());

  auto cell_values = [&](const std::string& tuner, const std::string& algo,
                         const std::string& scen, const std::string& metric) {
    std::vector<double> v;
    for (const auto& r : bundle.records)
      if (to_string(r.tuner) == tuner && to_string(r.algorithm) == algo &&
          r.dataset + ":" + r.scenario_id == scen && r.metrics.count(metric))
        v.push_back(r.metrics.at(metric));
    return v;
  };

  // per-tuner score matrices (mean target accuracy over seeds), complete or bust
  for (const auto& tuner : tuners) {
    ScoreMatrix sm;
    sm.row_labels = algos;
    sm.col_labels = scens;
    sm.entries = Mat(algos.size(), scens.size());
    std::vector<std::string> missing;
    for (std::size_t i = 0; i < algos.size(); ++i)
      for (std::size_t j = 0; j < scens.size(); ++j) {
        auto v = cell_values(tuner, algos[i], scens[j], "accuracy_target");
        if (v.empty()) {
          missing.push_back(tuner + "/" + algos[i] + "/" + scens[j]);
          continue;
        }
        sm.entries(i, j) = detail_pipe::mean_of(v);
      }
    if (!missing.empty()) {
      std::ostringstream os;
      os << "analyze: incomplete grid, missing:";
      for (const auto& m : missing) os << " " << m << ";";
      throw std::runtime_error(os.str());
    }
    bundle.score_matrices[tuner] = sm;
  }

  // accuracy by tuner (Table 3 layout): rows algorithms, cols tuners
  {
    NamedTable t, ts;
    t.name = "accuracy_by_tuner";
    ts.name = "accuracy_by_tuner_std";
    t.row_labels = ts.row_labels = algos;
    t.col_labels = ts.col_labels = tuners;
    t.values = Mat(algos.size(), tuners.size());
    ts.values = Mat(algos.size(), tuners.size());
    for (std::size_t i = 0; i < algos.size(); ++i)
      for (std::size_t j = 0; j < tuners.size(); ++j) {
        std::vector<double> all;
        for (const auto& sc : scens) {
          auto v = cell_values(tuners[j], algos[i], sc, "accuracy_target");
          all.insert(all.end(), v.begin(), v.end());
        }
        t.values(i, j) = all.empty() ? std::nan("") : detail_pipe::mean_of(all);
        ts.values(i, j) = all.empty() ? std::nan("") : detail_pipe::std_of(all);
      }
    bundle.tables.push_back(std::move(t));
    bundle.tables.push_back(std::move(ts));
  }

  // per-scenario accuracy tables (Table 5 layout), per tuner
  for (const auto& tuner : tuners) {
    NamedTable t;
    t.name = "accuracy_per_scenario_" + tuner;
    t.row_labels = algos;
    t.col_labels = scens;
    t.values = bundle.score_matrices[tuner].entries;
    bundle.tables.push_back(std::move(t));
  }

  // ranks, Friedman, and cd data per tuner
  for (const auto& tuner : tuners) {
    const ScoreMatrix& sm = bundle.score_matrices[tuner];
    if (algos.size() < 2) {
      bundle.notices.push_back("ranking skipped for " + tuner + ": single algorithm");
      continue;
    }
    auto ranks = average_ranks(sm);
    NamedTable t;
    t.name = "ranks_" + tuner;
    t.row_labels = algos;
    t.col_labels = {"average_rank"};
    t.values = Mat(algos.size(), 1);
    for (std::size_t i = 0; i < algos.size(); ++i) t.values(i, 0) = ranks[i];
    bundle.tables.push_back(std::move(t));
    bundle.cd[tuner] = cd_diagram_data(ranks, algos);
    if (algos.size() >= 3 && scens.size() >= 2) {
      bundle.friedman[tuner] = friedman_test(sm);
    } else {
      bundle.notices.push_back("friedman skipped for " + tuner +
                               ": needs >= 3 algorithms and >= 2 scenarios");
    }
  }

  // pairwise Wilcoxon on per-(scenario, seed) target accuracy
  for (const auto& tuner : tuners) {
    if (algos.size() < 2) break;
    NamedTable t;
    t.name = "wilcoxon_p_" + tuner;
    t.row_labels = algos;
    t.col_labels = algos;
    t.values = Mat::Constant(algos.size(), algos.size(), 1.0);
    bool any = false;
    for (std::size_t i = 0; i < algos.size(); ++i)
      for (std::size_t j = i + 1; j < algos.size(); ++j) {
        std::vector<double> a, b;
        for (const auto& sc : scens)
          for (auto seed : seed_set) {
            double va = std::nan(""), vb = std::nan("");
            for (const auto& r : bundle.records) {
              if (to_string(r.tuner) != tuner || r.dataset + ":" + r.scenario_id != sc ||
                  r.seed != seed)
                continue;
              if (to_string(r.algorithm) == algos[i]) va = r.metrics.at("accuracy_target");
              if (to_string(r.algorithm) == algos[j]) vb = r.metrics.at("accuracy_target");
            }
            if (!std::isnan(va) && !std::isnan(vb)) {
              a.push_back(va);
              b.push_back(vb);
            }
          }
        try {
          auto w = wilcoxon_signed_rank(a, b);
          t.values(i, j) = t.values(j, i) = w.p_value;
          any = true;
        } catch (const std::exception& ex) {
          bundle.notices.push_back("wilcoxon skipped for " + tuner + " " + algos[i] + " vs " +
                                   algos[j] + ": " + ex.what());
        }
      }
    if (any) bundle.tables.push_back(std::move(t));
  }

  // shift proxy per scenario from the no-adaptation baseline, plus SP-accuracy pairs
  const std::string base = to_string(AlgorithmId::SourceOnly);
  for (const auto& tuner : tuners) {
    if (!algo_set.count(base)) {
      bundle.notices.push_back("shift proxy skipped: no " + base + " records");
      break;
    }
    NamedTable sp;
    sp.name = "shift_proxy_" + tuner;
    sp.row_labels = scens;
    sp.col_labels = {"SP"};
    sp.values = Mat(scens.size(), 1);
    NamedTable pairs;
    pairs.name = "sp_accuracy_" + tuner;
    pairs.col_labels = {"SP", "accuracy_target"};
    std::vector<double> pv;
    for (std::size_t j = 0; j < scens.size(); ++j) {
      auto accs = cell_values(tuner, base, scens[j], "accuracy_source");
      auto acct = cell_values(tuner, base, scens[j], "accuracy_target");
      const double spv = shift_proxy(detail_pipe::mean_of(accs), detail_pipe::mean_of(acct));
      sp.values(j, 0) = spv;
      for (const auto& algo : algos) {
        auto v = cell_values(tuner, algo, scens[j], "accuracy_target");
        pairs.row_labels.push_back(scens[j] + "/" + algo);
        pv.push_back(spv);
        pv.push_back(detail_pipe::mean_of(v));
      }
    }
    pairs.values = Mat(pairs.row_labels.size(), 2);
    for (std::size_t r = 0; r < pairs.row_labels.size(); ++r) {
      pairs.values(r, 0) = pv[2 * r];
      pairs.values(r, 1) = pv[2 * r + 1];
    }
    bundle.tables.push_back(std::move(sp));
    bundle.tables.push_back(std::move(pairs));
  }

  return bundle;
}

// ===== report =====

inline std::string format_cell(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << v;
  return os.str();
}

inline std::vector<std::string> report(const AnalysisBundle& bundle, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::vector<std::string> written;

  for (const auto& t : bundle.tables) {
    const std::string path = out_dir + "/" + t.name + ".csv";
    std::ofstream out(path, std::ios::trunc);
    out << "row";
    for (const auto& c : t.col_labels) out << "," << c;
    out << "\n";
    for (std::size_t i = 0; i < t.row_labels.size(); ++i) {
      out << t.row_labels[i];
      for (Eigen::Index j = 0; j < t.values.cols(); ++j)
        out << "," << format_cell(t.values(i, j));
      out << "\n";
    }
    written.push_back(path);
  }

  {
    const std::string path = out_dir + "/friedman.csv";
    std::ofstream out(path, std::ios::trunc);
    out << "tuner,statistic,p_value\n";
    for (const auto& [tuner, fr] : bundle.friedman)
      out << tuner << "," << format_cell(fr.statistic) << "," << format_cell(fr.p_value) << "\n";
    written.push_back(path);
  }

  for (const auto& [tuner, cd] : bundle.cd) {
    const std::string path = out_dir + "/cd_" + tuner + ".json";
    std::ofstream out(path, std::ios::trunc);
    nlohmann::json j = cd;
    out << j.dump(2) << "\n";
    written.push_back(path);
  }

  if (!bundle.diagnostics.empty()) {
    const std::string path = out_dir + "/diagnostics.csv";
    std::ofstream out(path, std::ios::trunc);
    out << "dataset,scenario,imbalance_source,imbalance_target,highly_imbalanced_source,"
           "highly_imbalanced_target\n";
    for (const auto& d : bundle.diagnostics)
      out << d.value("dataset", "") << "," << d.value("scenario", "") << ","
          << format_cell(d.value("imbalance_source", std::nan(""))) << ","
          << format_cell(d.value("imbalance_target", std::nan(""))) << ","
          << (d.value("highly_imbalanced_source", false) ? "true" : "false") << ","
          << (d.value("highly_imbalanced_target", false) ? "true" : "false") << "\n";
    written.push_back(path);
  }

  {
    const std::string path = out_dir + "/summary.md";
    std::ofstream out(path, std::ios::trunc);
    out << "# Benchmark summary\n\n";
    out << bundle.records.size() << " evaluation records.\n\n";
    for (const auto& t : bundle.tables) {
      if (t.name != "accuracy_by_tuner") continue;
      out << "## Mean target accuracy\n\n|algorithm|";
      for (const auto& c : t.col_labels)
        out << c << (c == "TargetRisk" ? " (oracle)|" : "|");
      out << "\n|---|";
      for (std::size_t j = 0; j < t.col_labels.size(); ++j) out << "---|";
      out << "\n";
      for (std::size_t i = 0; i < t.row_labels.size(); ++i) {
        out << "|" << t.row_labels[i] << "|";
        for (Eigen::Index j = 0; j < t.values.cols(); ++j)
          out << format_cell(t.values(i, j)) << "|";
        out << "\n";
      }
      out << "\n";
    }
    for (const auto& [tuner, fr] : bundle.friedman)
      out << "Friedman (" << tuner << "): chi2 = " << format_cell(fr.statistic)
          << ", p = " << format_cell(fr.p_value) << "\n";
    if (!bundle.notices.empty()) {
      out << "\n## Notices\n\n";
      for (const auto& n : bundle.notices) out << "- " << n << "\n";
    }
    written.push_back(path);
  }
  return written;
}

}  // namespace tsuda
