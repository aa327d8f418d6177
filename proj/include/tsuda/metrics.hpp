// ============================================================================
// metrics.hpp - evaluation metrics, shift diagnostics, rank statistics
//
// Everything here is a pure function. Ranks are oriented lower-is-better on
// accuracy (rank 1 = most accurate), ties share the average of the positions
// they cover.
// ============================================================================
#pragma once

#include "tsuda/records.hpp"

#include <boost/math/special_functions/gamma.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace tsuda {

// ===== classification metrics =====

inline double accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
  if (preds.empty() || preds.size() != labels.size())
    throw std::invalid_argument("accuracy: empty or mismatched inputs");
  int hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == labels[i];
  return static_cast<double>(hits) / preds.size();
}

// unweighted mean of per-class F1; a class absent from both preds and labels
// contributes 0
inline double macro_f1(const std::vector<int>& preds, const std::vector<int>& labels, int K) {
  if (preds.empty() || preds.size() != labels.size())
    throw std::invalid_argument("macro_f1: empty or mismatched inputs");
  if (K < 1) throw std::invalid_argument("macro_f1: K must be >= 1");
  std::vector<int> tp(K, 0), fp(K, 0), fn(K, 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int p = preds[i], y = labels[i];
    if (p < 0 || p >= K || y < 0 || y >= K)
      throw std::invalid_argument("macro_f1: class index out of range");
    if (p == y) ++tp[p];
    else { ++fp[p]; ++fn[y]; }
  }
  double acc = 0;
  for (int k = 0; k < K; ++k) {
    const int denom = 2 * tp[k] + fp[k] + fn[k];
    acc += denom == 0 ? 0.0 : 2.0 * tp[k] / denom;
  }
  return acc / K;
}

inline std::vector<int> argmax_rows(const Mat& probs) {
  std::vector<int> out(probs.rows());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index j;
    probs.row(i).maxCoeff(&j);
    out[i] = static_cast<int>(j);
  }
  return out;
}

// ===== dataset diagnostics =====

inline double shift_proxy(double acc_source, double acc_target) {
  if (acc_source <= 0.0)
    throw std::invalid_argument("shift_proxy: source accuracy must be > 0");
  return (acc_source - acc_target) / acc_source;
}

struct ImbalanceScore {
  double value = 1.0;
  bool highly_imbalanced = false;  // value < 0.95
};

inline ImbalanceScore imbalance_score(const std::vector<int>& labels, int K) {
  if (K < 2) throw std::invalid_argument("imbalance_score: K must be >= 2");
  if (labels.empty()) throw std::invalid_argument("imbalance_score: empty labels");
  std::vector<double> p(K, 0.0);
  for (int y : labels) {
    if (y < 0 || y >= K) throw std::invalid_argument("imbalance_score: label out of range");
    p[y] += 1.0;
  }
  double h = 0;
  for (int k = 0; k < K; ++k) {
    p[k] /= labels.size();
    if (p[k] > 0) h -= p[k] * std::log(p[k]);
  }
  ImbalanceScore s;
  s.value = h / std::log(static_cast<double>(K));
  s.highly_imbalanced = s.value < 0.95;
  return s;
}

// ===== ranking =====

namespace detail_rank {

// midranks, 1-based; `descending` ranks the largest value first
inline std::vector<double> midrank(const std::vector<double>& v, bool descending) {
  const int n = static_cast<int>(v.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return descending ? v[a] > v[b] : v[a] < v[b];
  });
  std::vector<double> rank(n);
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (i + j) / 2.0 + 1.0;  // average of covered 1-based positions
    for (int t = i; t <= j; ++t) rank[order[t]] = avg;
    i = j + 1;
  }
  return rank;
}

}  // namespace detail_rank

// rows = methods, cols = scenarios; higher score is better, rank 1 is best
inline std::vector<double> average_ranks(const ScoreMatrix& scores) {
  const int k = static_cast<int>(scores.entries.rows());
  const int N = static_cast<int>(scores.entries.cols());
  if (k < 1 || N < 1) throw std::invalid_argument("average_ranks: empty matrix");
  if (!scores.entries.allFinite())
    throw std::invalid_argument("average_ranks: missing entries");
  std::vector<double> mean_rank(k, 0.0);
  for (int j = 0; j < N; ++j) {
    std::vector<double> col(k);
    for (int i = 0; i < k; ++i) col[i] = scores.entries(i, j);
    auto r = detail_rank::midrank(col, true);
    for (int i = 0; i < k; ++i) mean_rank[i] += r[i];
  }
  for (auto& r : mean_rank) r /= N;
  return mean_rank;
}

struct FriedmanResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::vector<double> average_ranks;
};

inline FriedmanResult friedman_test(const ScoreMatrix& scores) {
  const int k = static_cast<int>(scores.entries.rows());
  const int N = static_cast<int>(scores.entries.cols());
  if (k < 3) throw std::invalid_argument("friedman_test: need at least 3 methods");
  if (N < 2) throw std::invalid_argument("friedman_test: need at least 2 scenarios");
  FriedmanResult out;
  out.average_ranks = average_ranks(scores);
  double s = 0;
  for (int i = 0; i < k; ++i) {
    const double d = out.average_ranks[i] - (k + 1) / 2.0;
    s += d * d;
  }
  out.statistic = 12.0 * N / (k * (k + 1.0)) * s;
  out.p_value = boost::math::gamma_q((k - 1) / 2.0, out.statistic / 2.0);
  return out;
}

// ===== Wilcoxon signed-rank =====

struct WilcoxonResult {
  double p_value = 1.0;
  int wins = 0, ties = 0, losses = 0;  // counted on raw pairs, a vs b
};

inline WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a,
                                           const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("wilcoxon: empty or mismatched inputs");
  WilcoxonResult out;
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double di = a[i] - b[i];
    if (di > 0) ++out.wins;
    else if (di < 0) ++out.losses;
    else ++out.ties;
    if (di != 0.0) d.push_back(di);
  }
  const int n = static_cast<int>(d.size());
  if (n == 0) {
    out.p_value = 1.0;
    return out;
  }
  if (n < 5) throw std::invalid_argument("wilcoxon: need >= 5 nonzero differences");

  std::vector<double> absd(n);
  for (int i = 0; i < n; ++i) absd[i] = std::abs(d[i]);
  auto rank = detail_rank::midrank(absd, false);  // smallest |d| gets rank 1
  double w_plus = 0;
  for (int i = 0; i < n; ++i)
    if (d[i] > 0) w_plus += rank[i];

  if (n <= 25) {
    // exact: doubled midranks are integers, enumerate sum distribution by DP
    std::vector<long long> dr(n);
    long long total = 0;
    for (int i = 0; i < n; ++i) {
      dr[i] = llround(2.0 * rank[i]);
      total += dr[i];
    }
    std::vector<double> count(total + 1, 0.0);
    count[0] = 1.0;
    for (int i = 0; i < n; ++i)
      for (long long s = total; s >= dr[i]; --s) count[s] += count[s - dr[i]];
    const double mu = total / 2.0;
    const double dev = std::abs(2.0 * w_plus - mu);
    double mass = 0, all = 0;
    for (long long s = 0; s <= total; ++s) {
      all += count[s];
      if (std::abs(s - mu) >= dev - 1e-9) mass += count[s];
    }
    out.p_value = mass / all;
  } else {
    // normal approximation with tie and continuity corrections
    const double mu = n * (n + 1) / 4.0;
    double tie_term = 0;
    {
      std::vector<double> sorted = absd;
      std::sort(sorted.begin(), sorted.end());
      int i = 0;
      while (i < n) {
        int j = i;
        while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
        const double t = j - i + 1;
        tie_term += t * t * t - t;
        i = j + 1;
      }
    }
    const double var = n * (n + 1) * (2.0 * n + 1) / 24.0 - tie_term / 48.0;
    if (var <= 0) {
      out.p_value = 1.0;
      return out;
    }
    const double diff = w_plus - mu;
    const double cc = diff > 0 ? -0.5 : diff < 0 ? 0.5 : 0.0;
    const double z = (diff + cc) / std::sqrt(var);
    out.p_value = std::erfc(std::abs(z) / std::numbers::sqrt2);
  }
  out.p_value = std::min(1.0, out.p_value);
  return out;
}

// ===== critical-difference plot data =====

struct CdDiagramData {
  std::vector<std::pair<std::string, double>> ordered;  // ascending rank
  double axis_lo = 1.0;
  double axis_hi = 1.0;
};

inline CdDiagramData cd_diagram_data(const std::vector<double>& ranks,
                                     const std::vector<std::string>& names) {
  if (ranks.size() != names.size() || ranks.empty())
    throw std::invalid_argument("cd_diagram_data: empty or mismatched inputs");
  CdDiagramData out;
  std::vector<int> order(ranks.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return ranks[x] < ranks[y]; });
  for (int i : order) out.ordered.emplace_back(names[i], ranks[i]);
  out.axis_lo = 1.0;
  out.axis_hi = static_cast<double>(ranks.size());
  return out;
}

inline void to_json(nlohmann::json& j, const CdDiagramData& d) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [name, rank] : d.ordered)
    entries.push_back({{"name", name}, {"rank", rank}});
  j = {{"entries", entries}, {"axis", {d.axis_lo, d.axis_hi}}};
}
inline void from_json(const nlohmann::json& j, CdDiagramData& d) {
  d.ordered.clear();
  for (const auto& e : j.at("entries"))
    d.ordered.emplace_back(e.at("name").get<std::string>(), e.at("rank").get<double>());
  d.axis_lo = j.at("axis").at(0).get<double>();
  d.axis_hi = j.at("axis").at(1).get<double>();
}

}  // namespace tsuda
