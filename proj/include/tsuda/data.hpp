// ============================================================================
// data.hpp - core domain types: batches, domains, scenarios, oracle gating
//
// A TimeSeriesBatch stores [n, C, T] values row-major per sample as an
// Eigen matrix of shape [n, C*T] (channel-major blocks of T steps) plus
// optional dense integer labels in 0..K-1.
// ============================================================================
#pragma once

#include "tsuda/common.hpp"

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace tsuda {

struct TimeSeriesBatch {
  Mat values;  // [n, C*T]
  int channels = 0;
  int steps = 0;
  std::optional<std::vector<int>> labels;

  int n() const { return static_cast<int>(values.rows()); }

  // Column range of channel c is [c*T, (c+1)*T).
  double at(int i, int c, int t) const { return values(i, c * steps + t); }
  double& at(int i, int c, int t) { return values(i, c * steps + t); }

  TimeSeriesBatch without_labels() const {
    TimeSeriesBatch b = *this;
    b.labels.reset();
    return b;
  }

  TimeSeriesBatch rows(const std::vector<int>& idx) const {
    TimeSeriesBatch b;
    b.channels = channels;
    b.steps = steps;
    b.values.resize(static_cast<int>(idx.size()), values.cols());
    for (int i = 0; i < static_cast<int>(idx.size()); ++i) b.values.row(i) = values.row(idx[i]);
    if (labels) {
      std::vector<int> y(idx.size());
      for (size_t i = 0; i < idx.size(); ++i) y[i] = (*labels)[idx[i]];
      b.labels = std::move(y);
    }
    return b;
  }
};

// Reports every violated TimeSeriesBatch invariant; never throws.
inline std::vector<std::string> validate_batch(const TimeSeriesBatch& batch, int num_classes) {
  std::vector<std::string> issues;
  if (batch.n() < 1) issues.push_back("batch has no samples (n >= 1 required)");
  if (batch.channels < 1) issues.push_back("batch has no channels (C >= 1 required)");
  if (batch.steps < 2) issues.push_back("series too short (T >= 2 required)");
  if (batch.values.cols() != static_cast<long>(batch.channels) * batch.steps)
    issues.push_back("value width does not equal C*T");
  for (int i = 0; i < batch.n(); ++i) {
    for (int c = 0; c < batch.channels; ++c) {
      for (int t = 0; t < batch.steps; ++t) {
        const double v = batch.at(i, c, t);
        if (!std::isfinite(v)) {
          std::ostringstream os;
          os << (std::isnan(v) ? "NaN" : "Inf") << " at sample " << i << ", channel " << c
             << ", step " << t;
          issues.push_back(os.str());
        }
      }
    }
  }
  if (batch.labels) {
    if (static_cast<int>(batch.labels->size()) != batch.n())
      issues.push_back("label count does not match sample count");
    for (size_t i = 0; i < batch.labels->size(); ++i) {
      const int y = (*batch.labels)[i];
      if (y < 0 || y >= num_classes) {
        std::ostringstream os;
        os << "label out of range at sample " << i << ": " << y << " not in [0," << num_classes
           << ")";
        issues.push_back(os.str());
      }
    }
  }
  return issues;
}

struct DomainDataset {
  std::string domain_id;
  int num_classes = 0;
  bool chronological = true;
  TimeSeriesBatch train, val, test;
};

// Audit log of every target-label access taken through an oracle accessor.
// A run that never tunes with TargetRisk must leave this empty.
struct OracleAudit {
  struct Entry {
    std::string accessor;
    std::string split;
  };
  std::vector<Entry> entries;

  void record(const std::string& accessor, const std::string& split) {
    entries.push_back({accessor, split});
  }
  bool empty() const { return entries.empty(); }
};

// One (source -> target) adaptation pair. Target train/val labels are
// physically present but only reachable through the audited oracle_*
// accessors; the plain accessors return label-stripped views.
struct Scenario {
  std::string dataset_name;
  DomainDataset source;
  DomainDataset target;

  std::string id() const { return source.domain_id + "->" + target.domain_id; }

  TimeSeriesBatch target_train() const { return target.train.without_labels(); }
  TimeSeriesBatch target_val() const { return target.val.without_labels(); }

  const TimeSeriesBatch& oracle_target_train(OracleAudit& audit, const std::string& who) const {
    audit.record(who, "target.train");
    return target.train;
  }
  const TimeSeriesBatch& oracle_target_val(OracleAudit& audit, const std::string& who) const {
    audit.record(who, "target.val");
    return target.val;
  }
};

inline std::vector<std::string> validate_scenario(const Scenario& s) {
  std::vector<std::string> issues;
  if (s.source.num_classes != s.target.num_classes)
    issues.push_back("source and target class counts differ");
  if (s.source.domain_id == s.target.domain_id)
    issues.push_back("source and target domain ids must differ");
  for (const auto* d : {&s.source, &s.target}) {
    for (const auto* b : {&d->train, &d->val, &d->test}) {
      auto v = validate_batch(*b, d->num_classes);
      for (auto& msg : v) issues.push_back(d->domain_id + ": " + msg);
    }
  }
  return issues;
}

}  // namespace tsuda
