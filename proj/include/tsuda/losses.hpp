// ============================================================================
// losses.hpp - loss graph builders shared by the training algorithms
//
// All builders take classifier probabilities (not logits): underflow is
// handled by clamping inside the log, which keeps the reported values equal
// to their definitions on well-formed inputs.
// ============================================================================
#pragma once

#include "tsuda/autodiff.hpp"

#include <vector>

namespace tsuda::losses {

// mean cross-entropy -(1/n) sum log p[i, y_i]
inline ad::Var ce_probs(ad::Graph& g, ad::Var probs, const std::vector<int>& y) {
  if (y.empty()) throw std::invalid_argument("ce_probs: empty batch");
  ad::Var picked = g.pick(probs, y);
  return g.scale(g.mean_all(g.log_(g.clamp_min(picked, 1e-12))), -1.0);
}

// -mean log d_s - mean log(1 - d_t), inputs clamped to [1e-7, 1-1e-7]
inline ad::Var adversarial(ad::Graph& g, ad::Var d_s, ad::Var d_t) {
  ad::Var s = g.clamp(d_s, 1e-7, 1.0 - 1e-7);
  ad::Var t = g.clamp(d_t, 1e-7, 1.0 - 1e-7);
  ad::Var ls = g.mean_all(g.log_(s));
  ad::Var lt = g.mean_all(g.log_(g.add_const(g.scale(t, -1.0), 1.0)));
  return g.scale(g.add(ls, lt), -1.0);
}

// per-sample entropy H(p_i) = -sum_k p log p, returned as [n,1]
inline ad::Var row_entropy(ad::Graph& g, ad::Var probs) {
  ad::Var lp = g.log_(g.clamp_min(probs, 1e-12));
  return g.scale(g.row_sum(g.mul(probs, lp)), -1.0);
}

// -(1/n) sum_i sum_k p log p
inline ad::Var entropy(ad::Graph& g, ad::Var probs) {
  return g.mean_all(row_entropy(g, probs));
}

namespace detail {

// pairwise similarity p_i . p_j / tau with the diagonal pushed to -inf
inline ad::Var sim_matrix(ad::Graph& g, ad::Var probs, double tau) {
  const auto m = g.val(probs).rows();
  ad::Var S = g.scale(g.matmul(probs, probs, false, true), 1.0 / tau);
  Mat mask = Mat::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) mask(i, i) = -1e30;
  return g.add(S, g.input(mask));
}

}  // namespace detail

// class-aware contrastive loss over the 2n_s augmented source batch:
// -sum_i 1/(n_{y_i}-1) sum_{j!=i, y_j=y_i} log softmax_j(sim(i,.))
// A class with a single sample contributes nothing.
inline ad::Var cac(ad::Graph& g, ad::Var probs, const std::vector<int>& y, double tau) {
  const int m = static_cast<int>(g.val(probs).rows());
  if (static_cast<int>(y.size()) != m) throw std::invalid_argument("cac: label size");
  if (tau <= 0.0) throw std::invalid_argument("cac: tau must be positive");
  std::vector<int> class_count;
  for (int v : y) {
    if (v >= static_cast<int>(class_count.size())) class_count.resize(v + 1, 0);
    ++class_count[v];
  }
  Mat W = Mat::Zero(m, m);
  Vec wrow = Vec::Zero(m);
  for (int i = 0; i < m; ++i) {
    if (class_count[y[i]] < 2) continue;
    const double w = 1.0 / (class_count[y[i]] - 1);
    for (int j = 0; j < m; ++j)
      if (j != i && y[j] == y[i]) {
        W(i, j) = w;
        wrow[i] += w;
      }
  }
  ad::Var S = detail::sim_matrix(g, probs, tau);
  ad::Var lse = g.logsumexp_rows(S);  // [m,1]
  ad::Var pos = g.sum_all(g.mul(S, g.input(W)));
  ad::Var denom = g.sum_all(g.mul(lse, g.input(Mat(wrow))));
  return g.sub(denom, pos);
}

// unsupervised contrastive loss over the 2n_t target batch; anchor j pairs
// with j+n_t when j <= n_t (0-based: j < n_t), else with j-n_t.
inline ad::Var uc(ad::Graph& g, ad::Var probs, double tau) {
  const int m = static_cast<int>(g.val(probs).rows());
  if (m % 2 != 0) throw std::invalid_argument("uc: batch must hold sample+augment pairs");
  if (tau <= 0.0) throw std::invalid_argument("uc: tau must be positive");
  const int nt = m / 2;
  std::vector<int> partner(m);
  for (int j = 0; j < m; ++j) partner[j] = j < nt ? j + nt : j - nt;
  ad::Var S = detail::sim_matrix(g, probs, tau);
  ad::Var lse = g.logsumexp_rows(S);
  ad::Var pos = g.pick(S, partner);
  return g.scale(g.sum_all(g.sub(lse, pos)), 1.0 / m);
}

// latent-space contrastive pull/push on labeled source latents:
// (1/2) mean same-class ||z_i - z_j||^2 + mean diff-class hinge(1/2 - d)^2
// over ordered pairs i != j (per-term normalization keeps the magnitude
// independent of batch size).
inline ad::Var raincoat_contrastive(ad::Graph& g, ad::Var Z, const std::vector<int>& y) {
  const int n = static_cast<int>(g.val(Z).rows());
  if (static_cast<int>(y.size()) != n)
    throw std::invalid_argument("raincoat_contrastive: label size");
  Mat Msame = Mat::Zero(n, n), Mdiff = Mat::Zero(n, n);
  double cnt_same = 0, cnt_diff = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      if (y[i] == y[j]) {
        Msame(i, j) = 1.0;
        cnt_same += 1.0;
      } else {
        Mdiff(i, j) = 1.0;
        cnt_diff += 1.0;
      }
    }
  ad::Var D2 = g.pairwise_sqdist(Z, Z);
  ad::Var total = g.input(Mat::Zero(1, 1));
  if (cnt_same > 0) {
    ad::Var pull = g.sum_all(g.mul(D2, g.input(Msame)));
    total = g.add(total, g.scale(pull, 0.5 / cnt_same));
  }
  if (cnt_diff > 0) {
    ad::Var dist = g.sqrt_(g.add_const(D2, 1e-12));
    ad::Var hinge = g.clamp_min(g.add_const(g.scale(dist, -1.0), 0.5), 0.0);
    ad::Var push = g.sum_all(g.mul(g.square(hinge), g.input(Mdiff)));
    total = g.add(total, g.scale(push, 1.0 / cnt_diff));
  }
  return total;
}

// ===== value-level forms =====

inline double loss_classification(const Mat& probs, const std::vector<int>& y) {
  ad::Graph g;
  return g.scalar(ce_probs(g, g.input(probs), y));
}

inline double loss_adversarial(const Mat& d_s, const Mat& d_t) {
  ad::Graph g;
  return g.scalar(adversarial(g, g.input(d_s), g.input(d_t)));
}

inline double target_entropy(const Mat& probs) {
  ad::Graph g;
  return g.scalar(entropy(g, g.input(probs)));
}

inline double loss_cac(const Mat& probs, const std::vector<int>& y, double tau) {
  ad::Graph g;
  return g.scalar(cac(g, g.input(probs), y, tau));
}

inline double loss_uc(const Mat& probs, double tau) {
  ad::Graph g;
  return g.scalar(uc(g, g.input(probs), tau));
}

inline double loss_raincoat_contrastive(const Mat& Z, const std::vector<int>& y) {
  ad::Graph g;
  return g.scalar(raincoat_contrastive(g, g.input(Z), y));
}

}  // namespace tsuda::losses
