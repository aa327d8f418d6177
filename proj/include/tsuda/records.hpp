// ============================================================================
// records.hpp - algorithm/tuner ids, hyperparameters, persisted result rows
// ============================================================================
#pragma once

#include "tsuda/common.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tsuda {

using json = nlohmann::json;

enum class AlgorithmId {
  SourceOnly,
  CoDATS,
  InceptionDANN,
  InceptionCDAN,
  VRADA,
  CoTMix,
  InceptionMix,
  Raincoat,
  InceptionRain,
};

inline const std::vector<std::pair<AlgorithmId, std::string>>& algorithm_names() {
  static const std::vector<std::pair<AlgorithmId, std::string>> table = {
      {AlgorithmId::SourceOnly, "SourceOnly"},       {AlgorithmId::CoDATS, "CoDATS"},
      {AlgorithmId::InceptionDANN, "InceptionDANN"}, {AlgorithmId::InceptionCDAN, "InceptionCDAN"},
      {AlgorithmId::VRADA, "VRADA"},                 {AlgorithmId::CoTMix, "CoTMix"},
      {AlgorithmId::InceptionMix, "InceptionMix"},   {AlgorithmId::Raincoat, "Raincoat"},
      {AlgorithmId::InceptionRain, "InceptionRain"}};
  return table;
}

inline std::string to_string(AlgorithmId id) {
  for (const auto& [a, name] : algorithm_names())
    if (a == id) return name;
  return "?";
}

inline AlgorithmId parse_algorithm(const std::string& name) {
  for (const auto& [a, n] : algorithm_names())
    if (n == name) return a;
  throw std::invalid_argument("unknown algorithm: " + name);
}

enum class Tuner { SourceRisk, TargetRisk, IWCV };

inline std::string to_string(Tuner t) {
  switch (t) {
    case Tuner::SourceRisk: return "SourceRisk";
    case Tuner::TargetRisk: return "TargetRisk";
    case Tuner::IWCV: return "IWCV";
  }
  return "?";
}

inline Tuner parse_tuner(const std::string& name) {
  if (name == "SourceRisk") return Tuner::SourceRisk;
  if (name == "TargetRisk") return Tuner::TargetRisk;
  if (name == "IWCV") return Tuner::IWCV;
  throw std::invalid_argument("unknown tuner: " + name);
}

// One sampled configuration. Numeric knobs live in `values`, categorical
// ones (cdan_mode, entropy_conditioning, window_norm, ...) in `choices`.
struct HyperParams {
  AlgorithmId algorithm_id = AlgorithmId::SourceOnly;
  std::map<std::string, double> values;
  std::map<std::string, std::string> choices;

  double get(const std::string& name, double fallback) const {
    auto it = values.find(name);
    return it == values.end() ? fallback : it->second;
  }
  int get_int(const std::string& name, int fallback) const {
    auto it = values.find(name);
    return it == values.end() ? fallback : static_cast<int>(std::llround(it->second));
  }
  std::string get_choice(const std::string& name, const std::string& fallback) const {
    auto it = choices.find(name);
    return it == choices.end() ? fallback : it->second;
  }
};

inline bool algorithm_uses_mixup(AlgorithmId id) {
  return id == AlgorithmId::CoTMix || id == AlgorithmId::InceptionMix;
}

inline std::vector<std::string> validate_hyperparams(const HyperParams& hp) {
  std::vector<std::string> issues;
  if (algorithm_uses_mixup(hp.algorithm_id)) {
    const double alpha = hp.get("alpha", 0.75);
    if (!(alpha > 0.5 && alpha < 1.0)) issues.push_back("alpha must lie in (0.5, 1)");
    if (hp.get_int("mix_window", 2) < 1) issues.push_back("mix_window must be >= 1");
  }
  if (hp.get("tau", 1.0) <= 0) issues.push_back("tau must be > 0");
  if (hp.get("epsilon_sinkhorn", 0.05) <= 0) issues.push_back("epsilon_sinkhorn must be > 0");
  if (hp.get("lr", 1e-3) <= 0) issues.push_back("lr must be > 0");
  if (hp.get_int("batch_size", 32) < 1) issues.push_back("batch_size must be >= 1");
  return issues;
}

struct TrialRecord {
  int trial_index = 0;
  HyperParams hparams;
  double criterion = 0.0;  // +inf when status == "failed"
  std::vector<double> epoch_trace;
  double wall_seconds = 0.0;
  std::string status = "ok";  // ok | failed
  bool oracle = false;        // criterion computed through the oracle accessor
};

struct EvaluationRecord {
  std::string dataset;
  std::string scenario_id;
  AlgorithmId algorithm = AlgorithmId::SourceOnly;
  Tuner tuner = Tuner::SourceRisk;
  std::uint64_t seed = 0;
  std::map<std::string, double> metrics;  // accuracy_source, accuracy_target, macro_f1_target, loss components
  int selected_epoch = 0;
  double wall_seconds = 0.0;
  bool oracle_tuned = false;
};

inline std::vector<std::string> validate_record(const EvaluationRecord& r) {
  std::vector<std::string> issues;
  for (const char* key : {"accuracy_source", "accuracy_target"}) {
    auto it = r.metrics.find(key);
    if (it == r.metrics.end()) {
      issues.push_back(std::string("missing metric: ") + key);
    } else if (it->second < 0.0 || it->second > 1.0) {
      issues.push_back(std::string(key) + " outside [0,1]");
    }
  }
  return issues;
}

// Rectangular accuracy table: rows = method (algorithm or algorithm|tuner),
// columns = scenario. Analysis operations require no missing entries.
struct ScoreMatrix {
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  Mat entries;

  int rows() const { return static_cast<int>(row_labels.size()); }
  int cols() const { return static_cast<int>(col_labels.size()); }
  bool rectangular() const {
    return entries.rows() == rows() && entries.cols() == cols();
  }
};

// --- JSON serialization ------------------------------------------------

inline void to_json(json& j, const HyperParams& hp) {
  j = json{{"algorithm", to_string(hp.algorithm_id)},
           {"values", hp.values},
           {"choices", hp.choices}};
}
inline void from_json(const json& j, HyperParams& hp) {
  hp.algorithm_id = parse_algorithm(j.at("algorithm").get<std::string>());
  hp.values = j.at("values").get<std::map<std::string, double>>();
  hp.choices = j.at("choices").get<std::map<std::string, std::string>>();
}

inline void to_json(json& j, const TrialRecord& t) {
  j = json{{"trial_index", t.trial_index}, {"hparams", t.hparams},
           {"criterion", t.criterion},     {"epoch_trace", t.epoch_trace},
           {"wall_seconds", t.wall_seconds}, {"status", t.status},
           {"oracle", t.oracle}};
}
inline void from_json(const json& j, TrialRecord& t) {
  t.trial_index = j.at("trial_index").get<int>();
  t.hparams = j.at("hparams").get<HyperParams>();
  t.criterion = j.at("criterion").get<double>();
  t.epoch_trace = j.at("epoch_trace").get<std::vector<double>>();
  t.wall_seconds = j.at("wall_seconds").get<double>();
  t.status = j.at("status").get<std::string>();
  t.oracle = j.at("oracle").get<bool>();
}

inline void to_json(json& j, const EvaluationRecord& r) {
  j = json{{"dataset", r.dataset},
           {"scenario", r.scenario_id},
           {"algorithm", to_string(r.algorithm)},
           {"tuner", to_string(r.tuner)},
           {"seed", r.seed},
           {"metrics", r.metrics},
           {"selected_epoch", r.selected_epoch},
           {"wall_seconds", r.wall_seconds},
           {"oracle_tuned", r.oracle_tuned}};
}
inline void from_json(const json& j, EvaluationRecord& r) {
  r.dataset = j.at("dataset").get<std::string>();
  r.scenario_id = j.at("scenario").get<std::string>();
  r.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
  r.tuner = parse_tuner(j.at("tuner").get<std::string>());
  r.seed = j.at("seed").get<std::uint64_t>();
  r.metrics = j.at("metrics").get<std::map<std::string, double>>();
  r.selected_epoch = j.at("selected_epoch").get<int>();
  r.wall_seconds = j.at("wall_seconds").get<double>();
  r.oracle_tuned = j.at("oracle_tuned").get<bool>();
}

inline void to_json(json& j, const ScoreMatrix& m) {
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < m.entries.rows(); ++i) {
    std::vector<double> row(m.entries.cols());
    for (int c = 0; c < m.entries.cols(); ++c) row[c] = m.entries(i, c);
    rows.push_back(std::move(row));
  }
  j = json{{"rows", m.row_labels}, {"cols", m.col_labels}, {"entries", rows}};
}
inline void from_json(const json& j, ScoreMatrix& m) {
  m.row_labels = j.at("rows").get<std::vector<std::string>>();
  m.col_labels = j.at("cols").get<std::vector<std::string>>();
  auto rows = j.at("entries").get<std::vector<std::vector<double>>>();
  m.entries.resize(static_cast<int>(rows.size()),
                   rows.empty() ? 0 : static_cast<int>(rows[0].size()));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t c = 0; c < rows[i].size(); ++c) m.entries(static_cast<int>(i), static_cast<int>(c)) = rows[i][c];
}

}  // namespace tsuda
