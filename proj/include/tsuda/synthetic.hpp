// ============================================================================
// synthetic.hpp - shift-scenario generator
//
// Class prototypes are sums of sinusoids with a distinct frequency/phase per
// (class, channel). The target domain reuses the source generative process
// with amplitudes scaled by (1+feature_shift), a constant offset of
// feature_shift, and a circular roll of temporal_shift steps, so shift
// magnitude is a scalar knob.
// ============================================================================
#pragma once

#include "tsuda/common.hpp"
#include "tsuda/data.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace tsuda {

struct SyntheticSpec {
  int num_classes = 2;
  int channels = 1;
  int steps = 32;
  int per_split = 64;  // samples per train/val/test split, per domain
  double feature_shift = 0.0;
  int temporal_shift = 0;
  double noise_std = 0.1;
  std::vector<double> source_priors;  // empty means uniform
  std::vector<double> target_priors;
};

inline void to_json(nlohmann::json& j, const SyntheticSpec& s) {
  j = {{"num_classes", s.num_classes}, {"channels", s.channels},
       {"steps", s.steps},             {"per_split", s.per_split},
       {"feature_shift", s.feature_shift}, {"temporal_shift", s.temporal_shift},
       {"noise_std", s.noise_std}};
  if (!s.source_priors.empty()) j["source_priors"] = s.source_priors;
  if (!s.target_priors.empty()) j["target_priors"] = s.target_priors;
}

inline void from_json(const nlohmann::json& j, SyntheticSpec& s) {
  s.num_classes = j.at("num_classes").get<int>();
  s.channels = j.at("channels").get<int>();
  s.steps = j.at("steps").get<int>();
  s.per_split = j.at("per_split").get<int>();
  s.feature_shift = j.value("feature_shift", 0.0);
  s.temporal_shift = j.value("temporal_shift", 0);
  s.noise_std = j.value("noise_std", 0.1);
  s.source_priors = j.value("source_priors", std::vector<double>{});
  s.target_priors = j.value("target_priors", std::vector<double>{});
}

inline std::vector<std::string> validate_synthetic_spec(const SyntheticSpec& s) {
  std::vector<std::string> issues;
  if (s.num_classes < 2) issues.push_back("num_classes must be >= 2");
  if (s.channels < 1) issues.push_back("channels must be >= 1");
  if (s.steps < 4) issues.push_back("steps must be >= 4");
  if (s.per_split < s.num_classes)
    issues.push_back("per_split must cover at least one sample per class");
  if (s.feature_shift < 0.0) issues.push_back("feature_shift must be >= 0");
  if (s.temporal_shift < 0) issues.push_back("temporal_shift must be >= 0");
  if (s.temporal_shift >= s.steps) issues.push_back("temporal_shift must be < steps");
  if (s.noise_std < 0.0) issues.push_back("noise_std must be >= 0");
  for (const auto* pr : {&s.source_priors, &s.target_priors}) {
    if (pr->empty()) continue;
    if (static_cast<int>(pr->size()) != s.num_classes) {
      issues.push_back("priors length must equal num_classes");
      continue;
    }
    double sum = 0.0;
    for (double p : *pr) {
      if (p < 0.0) issues.push_back("priors must be non-negative");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) issues.push_back("priors must sum to 1");
  }
  return issues;
}

namespace detail {

// prototype value for (class k, channel c) at step t
inline double prototype_at(const SyntheticSpec& s, const std::vector<double>& phases,
                           int k, int c, int t) {
  const double tau = 2.0 * std::numbers::pi;
  const double pos = static_cast<double>(t) / s.steps;
  if (c == 0) {
    const double f = k + 1.0;
    return std::sin(tau * f * pos) + 0.4 * std::sin(tau * 2.0 * f * pos);
  }
  const double f = (k + 1.0) + c;  // distinct frequency per (k, c)
  return std::sin(tau * f * pos + phases[static_cast<std::size_t>(k) * s.channels + c]);
}

inline std::vector<int> label_sequence(const SyntheticSpec& s,
                                       const std::vector<double>& priors,
                                       std::mt19937_64& rng) {
  std::vector<double> p = priors;
  if (p.empty()) p.assign(s.num_classes, 1.0 / s.num_classes);
  auto counts = apportion(s.per_split, p, 1);
  std::vector<int> labels;
  labels.reserve(s.per_split);
  for (int k = 0; k < s.num_classes; ++k)
    for (int i = 0; i < counts[k]; ++i) labels.push_back(k);
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

inline TimeSeriesBatch sample_split(const SyntheticSpec& s,
                                    const std::vector<double>& phases, bool shifted,
                                    const std::vector<double>& priors,
                                    std::mt19937_64& rng) {
  TimeSeriesBatch b;
  b.channels = s.channels;
  b.steps = s.steps;
  b.labels = label_sequence(s, priors, rng);
  b.values = Mat::Zero(s.per_split, s.channels * s.steps);
  std::normal_distribution<double> noise(0.0, s.noise_std);
  const double amp = shifted ? 1.0 + s.feature_shift : 1.0;
  const double off = shifted ? s.feature_shift : 0.0;
  const int roll = shifted ? s.temporal_shift : 0;
  for (int i = 0; i < s.per_split; ++i) {
    const int k = (*b.labels)[i];
    for (int c = 0; c < s.channels; ++c)
      for (int t = 0; t < s.steps; ++t) {
        const int src_t = ((t - roll) % s.steps + s.steps) % s.steps;
        double v = amp * prototype_at(s, phases, k, c, src_t) + off;
        if (s.noise_std > 0.0) v += noise(rng);
        b.at(i, c, t) = v;
      }
  }
  return b;
}

}  // namespace detail

// Noise-free prototype for (class, channel) across all steps, with the target
// transformation applied when shifted=true. Used by diagnostics and tests.
inline Vec synthetic_prototype(const SyntheticSpec& s, std::uint64_t seed, int k, int c,
                               bool shifted) {
  auto rng = make_rng(derive_seed(seed, "synthetic-phases"));
  std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
  std::vector<double> phases(static_cast<std::size_t>(s.num_classes) * s.channels);
  for (auto& p : phases) p = u(rng);
  Vec out(s.steps);
  const double amp = shifted ? 1.0 + s.feature_shift : 1.0;
  const double off = shifted ? s.feature_shift : 0.0;
  const int roll = shifted ? s.temporal_shift : 0;
  for (int t = 0; t < s.steps; ++t) {
    const int src_t = ((t - roll) % s.steps + s.steps) % s.steps;
    out[t] = amp * detail::prototype_at(s, phases, k, c, src_t) + off;
  }
  return out;
}

inline Scenario generate_synthetic_scenario(const SyntheticSpec& spec, std::uint64_t seed) {
  {
    auto issues = validate_synthetic_spec(spec);
    if (!issues.empty())
      throw std::invalid_argument("generate_synthetic_scenario: " + issues.front());
  }
  auto phase_rng = make_rng(derive_seed(seed, "synthetic-phases"));
  std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
  std::vector<double> phases(static_cast<std::size_t>(spec.num_classes) * spec.channels);
  for (auto& p : phases) p = u(phase_rng);

  Scenario sc;
  sc.dataset_name = "synthetic";
  for (bool shifted : {false, true}) {
    DomainDataset d;
    d.domain_id = shifted ? "target" : "source";
    d.num_classes = spec.num_classes;
    d.chronological = false;
    const auto& priors = shifted ? spec.target_priors : spec.source_priors;
    const char* tag = shifted ? "target" : "source";
    for (const char* split : {"train", "val", "test"}) {
      auto rng = make_rng(derive_seed(seed, std::string("synthetic-") + tag + "-" + split));
      auto batch = detail::sample_split(spec, phases, shifted, priors, rng);
      if (std::string(split) == "train") d.train = std::move(batch);
      else if (std::string(split) == "val") d.val = std::move(batch);
      else d.test = std::move(batch);
    }
    if (shifted) sc.target = std::move(d);
    else sc.source = std::move(d);
  }
  return sc;
}

}  // namespace tsuda
