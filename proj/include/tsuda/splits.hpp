// ============================================================================
// splits.hpp - train/val/test split policy
//
// Source domains are stratified in all three splits. Target domains keep the
// test split stratified against the rest while the remaining train/val split
// is unstratified (target labels are not supposed to drive that split).
// Causal mode assigns earlier-indexed samples to train, then val, then test.
// ============================================================================
#pragma once

#include "tsuda/common.hpp"
#include "tsuda/data.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <map>
#include <numeric>

namespace tsuda {

struct SplitPolicy {
  double train_ratio = 0.64;
  double val_ratio = 0.16;
  double test_ratio = 0.20;
  bool stratify_source = true;
  bool stratify_target_test_only = true;
  bool causal = false;
  std::uint64_t seed = 0;
};

inline void to_json(nlohmann::json& j, const SplitPolicy& p) {
  j = {{"train_ratio", p.train_ratio},
       {"val_ratio", p.val_ratio},
       {"test_ratio", p.test_ratio},
       {"stratify_source", p.stratify_source},
       {"stratify_target_test_only", p.stratify_target_test_only},
       {"causal", p.causal},
       {"seed", p.seed}};
}
inline void from_json(const nlohmann::json& j, SplitPolicy& p) {
  p.train_ratio = j.value("train_ratio", 0.64);
  p.val_ratio = j.value("val_ratio", 0.16);
  p.test_ratio = j.value("test_ratio", 0.20);
  p.stratify_source = j.value("stratify_source", true);
  p.stratify_target_test_only = j.value("stratify_target_test_only", true);
  p.causal = j.value("causal", false);
  p.seed = j.value("seed", std::uint64_t{0});
}

enum class SplitRole { Source, Target };

inline std::vector<std::string> validate_policy(const SplitPolicy& p) {
  std::vector<std::string> issues;
  for (double r : {p.train_ratio, p.val_ratio, p.test_ratio})
    if (!(r > 0.0 && r < 1.0)) issues.push_back("each split ratio must lie in (0,1)");
  if (std::abs(p.train_ratio + p.val_ratio + p.test_ratio - 1.0) > 1e-9)
    issues.push_back("split ratios must sum to 1");
  return issues;
}

struct SplitResult {
  TimeSeriesBatch train, val, test;
};

namespace detail {

inline std::map<int, std::vector<int>> strata_of(const std::vector<int>& labels) {
  std::map<int, std::vector<int>> strata;
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) strata[labels[i]].push_back(i);
  return strata;
}

}  // namespace detail

inline SplitResult make_splits(const TimeSeriesBatch& batch, const SplitPolicy& policy,
                               SplitRole role) {
  if (!batch.labels) throw std::invalid_argument("make_splits: labels required");
  {
    auto issues = validate_policy(policy);
    if (!issues.empty()) throw std::invalid_argument("make_splits: " + issues.front());
  }
  const auto& labels = *batch.labels;
  auto strata = detail::strata_of(labels);
  auto rng = make_rng(derive_seed(policy.seed, "splits"));

  std::vector<int> idx_train, idx_val, idx_test;

  if (role == SplitRole::Source) {
    // All three splits stratified; within a stratum causal order is kept,
    // otherwise the stratum is shuffled before partitioning.
    for (auto& [cls, members] : strata) {
      if (static_cast<int>(members.size()) < 3) {
        throw std::runtime_error("make_splits: class " + std::to_string(cls) +
                                 " has fewer samples than required for stratification (" +
                                 std::to_string(members.size()) + " < 3)");
      }
      std::vector<int> order = members;  // ascending original index
      if (!policy.causal) std::shuffle(order.begin(), order.end(), rng);
      auto counts = apportion(static_cast<int>(order.size()),
                              {policy.train_ratio, policy.val_ratio, policy.test_ratio}, 1);
      int pos = 0;
      for (int i = 0; i < counts[0]; ++i) idx_train.push_back(order[pos++]);
      for (int i = 0; i < counts[1]; ++i) idx_val.push_back(order[pos++]);
      for (int i = 0; i < counts[2]; ++i) idx_test.push_back(order[pos++]);
    }
  } else {
    // Target: per stratum carve out the stratified test share (latest indices
    // in causal mode), then split the pooled remainder train/val without
    // looking at classes.
    std::vector<int> pool;
    for (auto& [cls, members] : strata) {
      if (members.empty()) continue;
      if (static_cast<int>(members.size()) < 2) {
        throw std::runtime_error("make_splits: class " + std::to_string(cls) +
                                 " has fewer samples than required for stratification (" +
                                 std::to_string(members.size()) + " < 2)");
      }
      std::vector<int> order = members;
      if (!policy.causal) std::shuffle(order.begin(), order.end(), rng);
      auto counts =
          apportion(static_cast<int>(order.size()),
                    {policy.train_ratio + policy.val_ratio, policy.test_ratio}, 1);
      for (int i = 0; i < counts[0]; ++i) pool.push_back(order[i]);
      for (int i = counts[0]; i < counts[0] + counts[1]; ++i) idx_test.push_back(order[i]);
    }
    if (policy.causal) {
      std::sort(pool.begin(), pool.end());
    } else {
      std::shuffle(pool.begin(), pool.end(), rng);
    }
    const double tv = policy.train_ratio + policy.val_ratio;
    auto counts = apportion(static_cast<int>(pool.size()),
                            {policy.train_ratio / tv, policy.val_ratio / tv}, 1);
    idx_train.assign(pool.begin(), pool.begin() + counts[0]);
    idx_val.assign(pool.begin() + counts[0], pool.end());
  }

  std::sort(idx_train.begin(), idx_train.end());
  std::sort(idx_val.begin(), idx_val.end());
  std::sort(idx_test.begin(), idx_test.end());

  SplitResult out;
  out.train = batch.rows(idx_train);
  out.val = batch.rows(idx_val);
  out.test = batch.rows(idx_test);
  return out;
}

}  // namespace tsuda
