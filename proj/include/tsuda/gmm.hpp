// ============================================================================
// gmm.hpp - diagonal Gaussian mixtures over series summary features
//
// Density ratios for importance weighting need a tractable estimate of the
// input marginals. Raw [C*T] vectors are hopeless at small n, so each series
// is first reduced to per-channel summary features; the mixture is fit on
// those with plain EM.
// ============================================================================
#pragma once

#include "tsuda/common.hpp"
#include "tsuda/data.hpp"

#include <numbers>

namespace tsuda {

// ===== summary representation =====

struct FeatureSpec {
  int fft_bins = 8;  // leading rFFT magnitude bins kept per channel

  int dim_per_channel(int steps) const {
    return 2 + std::min(fft_bins, steps / 2 + 1);
  }
};

// [n, C * (mean, std, |rFFT|_0..)] in channel-major order
inline Mat summary_features(const TimeSeriesBatch& b, const FeatureSpec& fs = {}) {
  const int T = b.steps, C = b.channels;
  const int bins = std::min(fs.fft_bins, T / 2 + 1);
  const int F = fs.dim_per_channel(T);
  Mat out(b.n(), static_cast<Eigen::Index>(C) * F);
  for (int i = 0; i < b.n(); ++i)
    for (int c = 0; c < C; ++c) {
      double mean = 0;
      for (int t = 0; t < T; ++t) mean += b.at(i, c, t);
      mean /= T;
      double var = 0;
      for (int t = 0; t < T; ++t) {
        const double d = b.at(i, c, t) - mean;
        var += d * d;
      }
      var /= T;
      out(i, c * F + 0) = mean;
      out(i, c * F + 1) = std::sqrt(var);
      for (int f = 0; f < bins; ++f) {
        double re = 0, im = 0;
        for (int t = 0; t < T; ++t) {
          const double ang = 2.0 * std::numbers::pi * f * t / T;
          re += b.at(i, c, t) * std::cos(ang);
          im -= b.at(i, c, t) * std::sin(ang);
        }
        out(i, c * F + 2 + f) = std::sqrt(re * re + im * im);
      }
    }
  return out;
}

// ===== diagonal GMM =====

struct DensityModel {
  Vec weights;   // [k]
  Mat means;     // [k, F]
  Mat vars;      // [k, F], floored
  std::string domain_tag;
  FeatureSpec rep;
  std::vector<double> loglik_trace;

  int feature_dim() const { return static_cast<int>(means.cols()); }
};

namespace detail_gmm {

constexpr double kVarFloor = 1e-6;

// per-sample component log densities [n, k]
inline Mat component_logpdf(const Mat& X, const DensityModel& m) {
  const int n = static_cast<int>(X.rows());
  const int k = static_cast<int>(m.weights.size());
  Mat lp(n, k);
  for (int j = 0; j < k; ++j) {
    double logdet = 0;
    for (int f = 0; f < m.feature_dim(); ++f)
      logdet += std::log(2.0 * std::numbers::pi * m.vars(j, f));
    for (int i = 0; i < n; ++i) {
      double quad = 0;
      for (int f = 0; f < m.feature_dim(); ++f) {
        const double d = X(i, f) - m.means(j, f);
        quad += d * d / m.vars(j, f);
      }
      lp(i, j) = std::log(m.weights(j)) - 0.5 * (logdet + quad);
    }
  }
  return lp;
}

inline double lse(const Vec& v) {
  const double mx = v.maxCoeff();
  return mx + std::log((v.array() - mx).exp().sum());
}

}  // namespace detail_gmm

inline double log_density(const DensityModel& m, const Vec& x) {
  Mat X = x.transpose();
  Mat lp = detail_gmm::component_logpdf(X, m);
  return detail_gmm::lse(lp.row(0).transpose());
}

inline Vec log_density_rows(const DensityModel& m, const Mat& X) {
  if (static_cast<int>(X.cols()) != m.feature_dim())
    throw std::invalid_argument("log_density: feature dimension mismatch");
  Mat lp = detail_gmm::component_logpdf(X, m);
  Vec out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) out(i) = detail_gmm::lse(lp.row(i).transpose());
  return out;
}

// EM fit. Means start at k seeded-distinct samples, variances at the global
// per-feature variance, weights uniform. The reported trace is monotone:
// a step that fails to improve is rolled back and the fit stops there.
inline DensityModel fit_density(const TimeSeriesBatch& train_X, int k = 5,
                                const FeatureSpec& rep = {}, std::uint64_t seed = 0,
                                const std::string& domain_tag = "", int max_iters = 100,
                                double tol = 1e-8) {
  Mat X = summary_features(train_X, rep);
  const int n = static_cast<int>(X.rows());
  const int F = static_cast<int>(X.cols());
  if (k < 1) throw std::invalid_argument("fit_density: k must be >= 1");
  if (n < k) throw std::invalid_argument("fit_density: need at least k samples");

  DensityModel m;
  m.domain_tag = domain_tag;
  m.rep = rep;
  m.weights = Vec::Constant(k, 1.0 / k);
  m.means = Mat(k, F);
  m.vars = Mat(k, F);

  auto rng = make_rng(derive_seed(seed, "gmm-init"));
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  Vec gmean = X.colwise().mean().transpose();
  Vec gvar(F);
  for (int f = 0; f < F; ++f) {
    double v = 0;
    for (int i = 0; i < n; ++i) {
      const double d = X(i, f) - gmean(f);
      v += d * d;
    }
    gvar(f) = std::max(v / n, detail_gmm::kVarFloor);
  }
  for (int j = 0; j < k; ++j) {
    m.means.row(j) = X.row(order[j]);
    m.vars.row(j) = gvar.transpose();
  }

  double prev = -std::numeric_limits<double>::infinity();
  Vec w_keep = m.weights;
  Mat mu_keep = m.means, var_keep = m.vars;
  for (int it = 0; it < max_iters; ++it) {
    Mat lp = detail_gmm::component_logpdf(X, m);
    Vec norm(n);
    for (int i = 0; i < n; ++i) norm(i) = detail_gmm::lse(lp.row(i).transpose());
    const double loglik = norm.sum() / n;
    if (loglik < prev) {  // floor or numerics; restore the better parameters
      m.weights = w_keep;
      m.means = mu_keep;
      m.vars = var_keep;
      break;
    }
    w_keep = m.weights;
    mu_keep = m.means;
    var_keep = m.vars;
    m.loglik_trace.push_back(loglik);
    if (loglik - prev < tol && it > 0) break;
    prev = loglik;

    Mat resp(n, k);  // responsibilities
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) resp(i, j) = std::exp(lp(i, j) - norm(i));
    Vec nk = resp.colwise().sum().transpose();
    DensityModel next = m;
    for (int j = 0; j < k; ++j) {
      if (nk(j) < 1e-12) continue;  // starved component: keep its parameters
      next.weights(j) = nk(j) / n;
      for (int f = 0; f < F; ++f) {
        double mu = 0;
        for (int i = 0; i < n; ++i) mu += resp(i, j) * X(i, f);
        mu /= nk(j);
        double v = 0;
        for (int i = 0; i < n; ++i) {
          const double d = X(i, f) - mu;
          v += resp(i, j) * d * d;
        }
        next.means(j, f) = mu;
        next.vars(j, f) = std::max(v / nk(j), detail_gmm::kVarFloor);
      }
    }
    next.weights /= next.weights.sum();
    m.weights = next.weights;
    m.means = next.means;
    m.vars = next.vars;
  }
  return m;
}

}  // namespace tsuda
