// ============================================================================
// preprocess.hpp - per-channel z-normalization and linear resampling
// ============================================================================
#pragma once

#include "tsuda/data.hpp"

#include <cmath>

namespace tsuda {

struct NormStats {
  Vec mean;  // one entry per channel
  Vec std;   // one entry per channel, floored at eps
};

// Statistics come from the training batch only and are then reused verbatim
// on val/test and on the other domain.
inline NormStats fit_norm_stats(const TimeSeriesBatch& batch, double eps = 1e-8) {
  const int C = batch.channels, T = batch.steps, n = batch.n();
  if (n == 0) throw std::invalid_argument("fit_norm_stats: empty batch");
  NormStats s;
  s.mean = Vec::Zero(C);
  s.std = Vec::Zero(C);
  const double count = static_cast<double>(n) * T;
  for (int c = 0; c < C; ++c) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
      for (int t = 0; t < T; ++t) acc += batch.at(i, c, t);
    s.mean[c] = acc / count;
    double var = 0.0;
    for (int i = 0; i < n; ++i)
      for (int t = 0; t < T; ++t) {
        const double d = batch.at(i, c, t) - s.mean[c];
        var += d * d;
      }
    var /= count;
    s.std[c] = std::sqrt(var);
    if (s.std[c] < eps) s.std[c] = eps;
  }
  return s;
}

inline TimeSeriesBatch znormalize(const TimeSeriesBatch& batch, const NormStats& stats) {
  if (stats.mean.size() != batch.channels)
    throw std::invalid_argument("znormalize: stats channel count mismatch");
  TimeSeriesBatch out = batch;
  for (int i = 0; i < batch.n(); ++i)
    for (int c = 0; c < batch.channels; ++c)
      for (int t = 0; t < batch.steps; ++t)
        out.at(i, c, t) = (batch.at(i, c, t) - stats.mean[c]) / stats.std[c];
  return out;
}

// Linear interpolation onto new_T points; endpoints map to endpoints.
inline TimeSeriesBatch resample(const TimeSeriesBatch& batch, int new_T) {
  if (new_T < 2) throw std::invalid_argument("resample: need at least 2 steps");
  const int T = batch.steps;
  TimeSeriesBatch out;
  out.channels = batch.channels;
  out.steps = new_T;
  out.labels = batch.labels;
  out.values = Mat::Zero(batch.n(), batch.channels * new_T);
  if (T == 1) {
    for (int i = 0; i < batch.n(); ++i)
      for (int c = 0; c < batch.channels; ++c)
        for (int t = 0; t < new_T; ++t) out.at(i, c, t) = batch.at(i, c, 0);
    return out;
  }
  for (int t = 0; t < new_T; ++t) {
    const double x = static_cast<double>(t) * (T - 1) / (new_T - 1);
    const int lo = std::min(static_cast<int>(std::floor(x)), T - 2);
    const double frac = x - lo;
    for (int i = 0; i < batch.n(); ++i)
      for (int c = 0; c < batch.channels; ++c)
        out.at(i, c, t) =
            (1.0 - frac) * batch.at(i, c, lo) + frac * batch.at(i, c, lo + 1);
  }
  return out;
}

}  // namespace tsuda
