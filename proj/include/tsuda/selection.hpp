// ============================================================================
// selection.hpp - label-free model selection and the budgeted search
//
// Three criteria score a trained model without touching target test labels:
// source validation risk, the target-risk oracle (audited), and importance-
// weighted cross-validation with GMM density ratios. On top sits a random
// hyperparameter search with wall and trial budgets.
// ============================================================================
#pragma once

#include "tsuda/algorithms.hpp"
#include "tsuda/gmm.hpp"
#include "tsuda/records.hpp"

#include <nlohmann/json.hpp>
#include <sstream>

namespace tsuda {

// ===== criteria =====

inline double source_risk(Model& m, const TimeSeriesBatch& source_val) {
  if (source_val.n() == 0) throw std::invalid_argument("source_risk: empty split");
  if (!source_val.labels) throw std::invalid_argument("source_risk: split must be labeled");
  Mat probs = predict(m, source_val);
  return losses::loss_classification(probs, *source_val.labels);
}

// Oracle criterion: reads target validation labels through the audited
// accessor. Callers that were not granted the oracle pass no audit and get a
// refusal instead of a silently-leaked label read.
inline double target_risk(Model& m, const Scenario& scenario, OracleAudit* audit,
                          const std::string& who = "target_risk") {
  if (!audit)
    throw std::runtime_error("target_risk: oracle accessor not granted");
  const TimeSeriesBatch& val = scenario.oracle_target_val(*audit, who);
  if (val.n() == 0) throw std::invalid_argument("target_risk: empty split");
  Mat probs = predict(m, val);
  return losses::loss_classification(probs, *val.labels);
}

// importance weights w_i = rho_t(x_i) / rho_s(x_i), clipped to [1/clip, clip]
inline Vec importance_weights(const TimeSeriesBatch& batch, const DensityModel& rho_s,
                              const DensityModel& rho_t, double clip = 10.0) {
  if (clip < 1.0) throw std::invalid_argument("importance_weights: clip must be >= 1");
  Mat feats = summary_features(batch, rho_s.rep);
  if (rho_s.feature_dim() != rho_t.feature_dim() ||
      static_cast<int>(feats.cols()) != rho_s.feature_dim())
    throw std::invalid_argument("importance_weights: representation mismatch");
  Vec ls = log_density_rows(rho_s, feats);
  Vec lt = log_density_rows(rho_t, feats);
  Vec w(batch.n());
  for (int i = 0; i < batch.n(); ++i)
    w(i) = std::clamp(std::exp(lt(i) - ls(i)), 1.0 / clip, clip);
  return w;
}

// (1/n) sum_i w_i * CE_i with explicit weights; the density-ratio version
// below builds w and delegates here
inline double iwcv_weighted(Model& m, const TimeSeriesBatch& source_val, const Vec& w) {
  if (source_val.n() == 0) throw std::invalid_argument("iwcv: empty split");
  if (!source_val.labels) throw std::invalid_argument("iwcv: split must be labeled");
  if (w.size() != source_val.n()) throw std::invalid_argument("iwcv: weight count mismatch");
  Mat probs = predict(m, source_val);
  double acc = 0;
  for (int i = 0; i < source_val.n(); ++i) {
    const double p = std::max(probs(i, (*source_val.labels)[i]), 1e-12);
    acc += w(i) * -std::log(p);
  }
  return acc / source_val.n();
}

inline double iwcv(Model& m, const TimeSeriesBatch& source_val, const DensityModel& rho_s,
                   const DensityModel& rho_t, double clip = 10.0) {
  Vec w = importance_weights(source_val, rho_s, rho_t, clip);
  return iwcv_weighted(m, source_val, w);
}

// ===== search space =====

struct SearchParam {
  enum class Kind { Float, Int, Choice };
  Kind kind = Kind::Float;
  double lo = 0.0, hi = 1.0;
  bool log_scale = false;
  std::vector<std::string> values;  // for Choice
};

using SearchSpace = std::map<std::string, SearchParam>;

inline SearchSpace parse_search_space(const nlohmann::json& j) {
  SearchSpace out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const nlohmann::json& p = it.value();
    SearchParam sp;
    const std::string type = p.at("type").get<std::string>();
    if (type == "float" || type == "int") {
      sp.kind = type == "int" ? SearchParam::Kind::Int : SearchParam::Kind::Float;
      auto b = p.at("bounds");
      sp.lo = b.at(0).get<double>();
      sp.hi = b.at(1).get<double>();
      if (sp.hi < sp.lo) throw std::invalid_argument("search space: bounds reversed for " + it.key());
      sp.log_scale = p.value("scale", "linear") == std::string("log");
      if (sp.log_scale && sp.lo <= 0)
        throw std::invalid_argument("search space: log scale needs positive bounds for " + it.key());
    } else if (type == "choice") {
      sp.kind = SearchParam::Kind::Choice;
      sp.values = p.at("values").get<std::vector<std::string>>();
      if (sp.values.empty()) throw std::invalid_argument("search space: empty choices for " + it.key());
    } else {
      throw std::invalid_argument("search space: unknown type '" + type + "' for " + it.key());
    }
    out[it.key()] = sp;
  }
  return out;
}

inline HyperParams sample_hparams(AlgorithmId algo, const SearchSpace& space,
                                  std::mt19937_64& rng) {
  HyperParams hp;
  hp.algorithm_id = algo;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (const auto& [name, sp] : space) {
    switch (sp.kind) {
      case SearchParam::Kind::Float: {
        double v;
        if (sp.log_scale)
          v = std::exp(std::log(sp.lo) + u01(rng) * (std::log(sp.hi) - std::log(sp.lo)));
        else
          v = sp.lo + u01(rng) * (sp.hi - sp.lo);
        hp.values[name] = v;
        break;
      }
      case SearchParam::Kind::Int: {
        const long lo = static_cast<long>(std::llround(sp.lo));
        const long hi = static_cast<long>(std::llround(sp.hi));
        std::uniform_int_distribution<long> ui(lo, hi);
        hp.values[name] = static_cast<double>(ui(rng));
        break;
      }
      case SearchParam::Kind::Choice: {
        std::uniform_int_distribution<std::size_t> ui(0, sp.values.size() - 1);
        hp.choices[name] = sp.values[ui(rng)];
        break;
      }
    }
  }
  return hp;
}

// ===== checkpoint choice =====

inline int select_checkpoint(const std::vector<double>& trace) {
  if (trace.empty()) throw std::invalid_argument("select_checkpoint: empty trace");
  int best = 0;
  for (int i = 1; i < static_cast<int>(trace.size()); ++i)
    if (trace[i] < trace[best]) best = i;  // strict: earlier epoch wins ties
  return best;
}

// ===== criterion plumbing =====

struct CriterionContext {
  Tuner tuner = Tuner::SourceRisk;
  const Scenario* scenario = nullptr;
  OracleAudit* audit = nullptr;  // required for TargetRisk
  double clip = 10.0;
  FeatureSpec rep;
  // fitted once per tune() call; reused across trials and epochs
  std::shared_ptr<DensityModel> rho_s, rho_t;
};

inline CriterionContext make_criterion_context(Tuner tuner, const Scenario& scenario,
                                               OracleAudit* audit, double clip = 10.0,
                                               const FeatureSpec& rep = {},
                                               std::uint64_t seed = 0) {
  CriterionContext cc;
  cc.tuner = tuner;
  cc.scenario = &scenario;
  cc.audit = audit;
  cc.clip = clip;
  cc.rep = rep;
  if (tuner == Tuner::TargetRisk && !audit)
    throw std::runtime_error("tune: TargetRisk requires the oracle accessor");
  if (tuner == Tuner::IWCV) {
    cc.rho_s = std::make_shared<DensityModel>(
        fit_density(scenario.source.train, 5, rep, derive_seed(seed, "rho-s"), "source"));
    TimeSeriesBatch tt = scenario.target_train();  // unlabeled view
    cc.rho_t = std::make_shared<DensityModel>(
        fit_density(tt, 5, rep, derive_seed(seed, "rho-t"), "target"));
  }
  return cc;
}

inline std::function<double(Model&)> criterion_fn(const CriterionContext& cc) {
  switch (cc.tuner) {
    case Tuner::SourceRisk:
      return [&cc](Model& m) { return source_risk(m, cc.scenario->source.val); };
    case Tuner::TargetRisk:
      return [&cc](Model& m) { return target_risk(m, *cc.scenario, cc.audit); };
    case Tuner::IWCV:
      return [&cc](Model& m) {
        return iwcv(m, cc.scenario->source.val, *cc.rho_s, *cc.rho_t, cc.clip);
      };
  }
  throw std::logic_error("criterion_fn: unreachable");
}

// ===== budgeted random search =====

struct TuneBudget {
  int max_trials = 8;
  double wall_seconds = std::numeric_limits<double>::infinity();
};

struct TuneResult {
  HyperParams best;
  int best_index = -1;
  std::vector<TrialRecord> trials;
  std::vector<TrainedModel> trained;  // aligned with trials
};

inline TuneResult tune(AlgorithmId algo, const Scenario& scenario, const SearchSpace& space,
                       const CriterionContext& cc, const TuneBudget& budget,
                       const TrainBudget& per_trial, std::uint64_t seed) {
  if (space.empty()) throw std::invalid_argument("tune: empty search space");
  if (budget.max_trials < 1) throw std::invalid_argument("tune: need at least one trial");
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  auto crit = criterion_fn(cc);

  TuneResult out;
  for (int trial = 0; trial < budget.max_trials; ++trial) {
    // the first trial always runs, however small the wall budget
    if (trial > 0 && elapsed() >= budget.wall_seconds) break;
    auto srng = make_rng(derive_seed(seed, "trial-" + std::to_string(trial)));
    HyperParams hp = sample_hparams(algo, space, srng);

    const auto tt0 = std::chrono::steady_clock::now();
    TrainedModel tm =
        train(algo, scenario, hp, derive_seed(seed, "train-" + std::to_string(trial)),
              per_trial, crit);
    TrialRecord rec;
    rec.trial_index = trial;
    rec.hparams = hp;
    rec.epoch_trace = tm.criterion_trace;
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - tt0).count();
    rec.status = tm.status;
    rec.oracle = cc.tuner == Tuner::TargetRisk;
    if (tm.status == "ok" && !tm.criterion_trace.empty()) {
      rec.criterion = tm.criterion_trace[select_checkpoint(tm.criterion_trace)];
    } else {
      rec.status = "failed";
      rec.criterion = std::numeric_limits<double>::infinity();
    }
    out.trials.push_back(std::move(rec));
    out.trained.push_back(std::move(tm));
  }

  for (int i = 0; i < static_cast<int>(out.trials.size()); ++i) {
    if (out.trials[i].status != "ok") continue;
    if (out.best_index < 0 || out.trials[i].criterion < out.trials[out.best_index].criterion)
      out.best_index = i;  // strict: earlier trial wins ties
  }
  if (out.best_index < 0) {
    std::ostringstream os;
    os << "tune: all " << out.trials.size() << " trials failed:";
    for (const auto& t : out.trials) os << " trial " << t.trial_index << "=" << t.status;
    throw std::runtime_error(os.str());
  }
  out.best = out.trials[out.best_index].hparams;
  return out;
}

}  // namespace tsuda
