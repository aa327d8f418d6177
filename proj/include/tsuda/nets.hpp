// ============================================================================
// nets.hpp - encoders, classifier and discriminator heads, multilinear map
//
// Parameters live in a ParamSet (named tensors, insertion-ordered). A NetCtx
// binds a ParamSet to one autodiff graph: each parameter becomes a leaf the
// first time a layer touches it, batch-norm batch statistics are collected
// for the running-stat update, and after backward() the leaf gradients are
// pulled back into the ParamSet.
// ============================================================================
#pragma once

#include "tsuda/autodiff.hpp"
#include "tsuda/data.hpp"

#include <cmath>
#include <map>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace tsuda {

// ===== parameter container =====

struct ParamSet {
  struct Entry {
    std::string name;
    Mat value;
    Mat grad;
    bool trainable = true;
  };
  std::vector<Entry> entries;
  std::unordered_map<std::string, int> index;

  Entry& add(const std::string& name, Mat value, bool trainable = true) {
    if (index.count(name)) throw std::invalid_argument("ParamSet: duplicate " + name);
    index[name] = static_cast<int>(entries.size());
    entries.push_back(Entry{name, std::move(value), {}, trainable});
    Entry& e = entries.back();
    e.grad = Mat::Zero(e.value.rows(), e.value.cols());
    return e;
  }
  bool has(const std::string& name) const { return index.count(name) > 0; }
  Entry& at(const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw std::invalid_argument("ParamSet: missing " + name);
    return entries[it->second];
  }
  const Entry& at(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) throw std::invalid_argument("ParamSet: missing " + name);
    return entries[it->second];
  }
  Mat& value(const std::string& name) { return at(name).value; }
  void zero_grads() {
    for (auto& e : entries) e.grad.setZero();
  }
  std::size_t scalar_count() const {
    std::size_t c = 0;
    for (const auto& e : entries)
      if (e.trainable) c += static_cast<std::size_t>(e.value.size());
    return c;
  }
};

namespace init {

inline Mat normal(int rows, int cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, stddev);
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = d(rng);
  return m;
}
inline Mat he(int rows, int cols, int fan_in, std::mt19937_64& rng) {
  return normal(rows, cols, std::sqrt(2.0 / std::max(1, fan_in)), rng);
}

}  // namespace init

// ===== graph binding =====

struct NetCtx {
  ad::Graph& g;
  ParamSet& ps;
  bool training = true;
  std::unordered_map<std::string, ad::Var> leaves;
  // batch statistics collected by batch-norm layers this forward pass
  std::vector<std::tuple<std::string, Vec, Vec>> bn_stats;

  NetCtx(ad::Graph& graph, ParamSet& params, bool train = true)
      : g(graph), ps(params), training(train) {}

  ad::Var param(const std::string& name) {
    auto it = leaves.find(name);
    if (it != leaves.end()) return it->second;
    ad::Var v = g.input(ps.value(name));
    leaves.emplace(name, v);
    return v;
  }

  // Accumulate leaf gradients into the ParamSet after g.backward().
  void pull_grads() {
    for (auto& [name, var] : leaves) ps.at(name).grad += g.grad(var);
  }
  // Momentum update of running statistics from the collected batch stats.
  void update_running_stats(double momentum = 0.1) {
    for (auto& [name, mu, var] : bn_stats) {
      Mat& rm = ps.value(name + ".rm");
      Mat& rv = ps.value(name + ".rv");
      for (int c = 0; c < rm.cols(); ++c) {
        rm(0, c) = (1.0 - momentum) * rm(0, c) + momentum * mu[c];
        rv(0, c) = (1.0 - momentum) * rv(0, c) + momentum * var[c];
      }
    }
  }
};

// ===== layer helpers =====

namespace layers {

inline void init_conv(ParamSet& ps, const std::string& name, int cout, int cin, int k,
                      std::mt19937_64& rng, bool bias = true) {
  ps.add(name + ".w", init::he(cout, cin * k, cin * k, rng));
  if (bias) ps.add(name + ".b", Mat::Zero(1, cout));
}
inline ad::Var conv(NetCtx& ctx, const std::string& name, ad::Var x, int cin, int T,
                    int k) {
  ad::Var b{};
  if (ctx.ps.has(name + ".b")) b = ctx.param(name + ".b");
  return ctx.g.conv1d_same(x, ctx.param(name + ".w"), b, cin, T,
                           k);
}

inline void init_bn(ParamSet& ps, const std::string& name, int C) {
  ps.add(name + ".g", Mat::Ones(1, C));
  ps.add(name + ".b", Mat::Zero(1, C));
  ps.add(name + ".rm", Mat::Zero(1, C), false);
  ps.add(name + ".rv", Mat::Ones(1, C), false);
}
inline ad::Var bn(NetCtx& ctx, const std::string& name, ad::Var x, int C, int T) {
  if (ctx.training) {
    Vec mu, var;
    ad::Var y = ctx.g.batchnorm_ct(x, ctx.param(name + ".g"), ctx.param(name + ".b"), C,
                                   T, 1e-5, &mu, &var);
    ctx.bn_stats.emplace_back(name, mu, var);
    return y;
  }
  const Mat& rm = ctx.ps.value(name + ".rm");
  const Mat& rv = ctx.ps.value(name + ".rv");
  Vec mu = rm.row(0).transpose();
  Vec var = rv.row(0).transpose();
  return ctx.g.batchnorm_fixed(x, ctx.param(name + ".g"), ctx.param(name + ".b"), mu, var,
                               C, T, 1e-5);
}

inline void init_linear(ParamSet& ps, const std::string& name, int in, int out,
                        std::mt19937_64& rng) {
  ps.add(name + ".w", init::he(in, out, in, rng));
  ps.add(name + ".b", Mat::Zero(1, out));
}
inline ad::Var linear(NetCtx& ctx, const std::string& name, ad::Var x) {
  return ctx.g.add(ctx.g.matmul(x, ctx.param(name + ".w")), ctx.param(name + ".b"));
}

}  // namespace layers

// ===== encoder specs =====

enum class EncoderKind { CNN1D, Inception, VRNN, TimeFreqConcat };

inline std::string to_string(EncoderKind k) {
  switch (k) {
    case EncoderKind::CNN1D: return "cnn1d";
    case EncoderKind::Inception: return "inception";
    case EncoderKind::VRNN: return "vrnn";
    case EncoderKind::TimeFreqConcat: return "timefreq";
  }
  return "?";
}

struct EncoderSpec {
  EncoderKind kind = EncoderKind::CNN1D;
  int channels = 1;  // input channels
  int steps = 32;    // input length
  int latent_dim = 16;
  int width = 8;  // CNN1D first-block channels (then 2x); Inception per-branch channels
  int depth = 3;  // conv blocks / inception modules
  std::vector<int> kernels = {10, 20, 40};  // Inception multi-scale set
  int bottleneck = 8;                       // Inception bottleneck channels
  // VRNN sizes
  int vr_feat = 8;
  int vr_hidden = 16;
  int vr_z = 8;
  // frequency branch (TimeFreqConcat)
  EncoderKind time_kind = EncoderKind::CNN1D;
  int freq_width = 8;
  int freq_kernel = 5;
  int latent_freq = 8;

  std::vector<std::string> validate() const {
    std::vector<std::string> issues;
    if (latent_dim < 1) issues.push_back("latent_dim must be >= 1");
    if (channels < 1 || steps < 1) issues.push_back("input shape must be positive");
    if (kind == EncoderKind::Inception && kernels.empty())
      issues.push_back("Inception kernel set must be non-empty");
    if (kind == EncoderKind::TimeFreqConcat && latent_freq < 1)
      issues.push_back("latent_freq must be >= 1");
    return issues;
  }
};

namespace detail {

inline std::vector<int> cnn_widths(const EncoderSpec& s) {
  return {s.width, 2 * s.width, 2 * s.width};
}
inline const int kCnnKernels[3] = {8, 5, 3};

inline std::vector<int> inception_kernels(const EncoderSpec& s) {
  std::vector<int> out;
  for (int k : s.kernels) {
    int kk = k;
    if (s.steps < 64) kk = std::max(3, static_cast<int>(std::lround(k * s.steps / 64.0)));
    kk = std::min(kk, s.steps);
    out.push_back(kk);
  }
  return out;
}

}  // namespace detail

// ===== CNN1D =====

inline void init_cnn1d(ParamSet& ps, const EncoderSpec& s, const std::string& prefix,
                       std::mt19937_64& rng) {
  auto widths = detail::cnn_widths(s);
  int cin = s.channels;
  for (int b = 0; b < 3; ++b) {
    layers::init_conv(ps, prefix + ".conv" + std::to_string(b), widths[b], cin,
                      detail::kCnnKernels[b], rng, false);
    layers::init_bn(ps, prefix + ".bn" + std::to_string(b), widths[b]);
    cin = widths[b];
  }
  layers::init_linear(ps, prefix + ".proj", cin, s.latent_dim, rng);
}

inline ad::Var apply_cnn1d(NetCtx& ctx, const EncoderSpec& s, const std::string& prefix,
                           ad::Var x) {
  auto widths = detail::cnn_widths(s);
  int cin = s.channels;
  const int T = s.steps;
  ad::Var h = x;
  for (int b = 0; b < 3; ++b) {
    h = layers::conv(ctx, prefix + ".conv" + std::to_string(b), h, cin, T,
                     detail::kCnnKernels[b]);
    h = layers::bn(ctx, prefix + ".bn" + std::to_string(b), h, widths[b], T);
    h = ctx.g.relu(h);
    cin = widths[b];
  }
  ad::Var z = ctx.g.global_avg_pool(h, cin, T);
  return layers::linear(ctx, prefix + ".proj", z);
}

// ===== Inception =====

inline void init_inception(ParamSet& ps, const EncoderSpec& s, const std::string& prefix,
                           std::mt19937_64& rng) {
  auto ks = detail::inception_kernels(s);
  const int nb = static_cast<int>(ks.size());
  const int module_out = (nb + 1) * s.width;
  int cin = s.channels;
  int res_in = cin;
  for (int m = 0; m < s.depth; ++m) {
    const std::string mp = prefix + ".m" + std::to_string(m);
    const bool use_bneck = cin > s.bottleneck;
    const int bw = use_bneck ? s.bottleneck : cin;
    if (use_bneck) layers::init_conv(ps, mp + ".bneck", s.bottleneck, cin, 1, rng, false);
    for (int b = 0; b < nb; ++b)
      layers::init_conv(ps, mp + ".k" + std::to_string(b), s.width, bw, ks[b], rng, false);
    layers::init_conv(ps, mp + ".poolconv", s.width, cin, 1, rng, false);
    layers::init_bn(ps, mp + ".bn", module_out);
    if ((m + 1) % 3 == 0) {
      if (res_in != module_out) {
        layers::init_conv(ps, mp + ".shortcut", module_out, res_in, 1, rng, false);
        layers::init_bn(ps, mp + ".shortbn", module_out);
      }
      res_in = module_out;
    }
    cin = module_out;
  }
  layers::init_linear(ps, prefix + ".proj", module_out, s.latent_dim, rng);
}

inline ad::Var apply_inception(NetCtx& ctx, const EncoderSpec& s,
                               const std::string& prefix, ad::Var x) {
  auto ks = detail::inception_kernels(s);
  const int nb = static_cast<int>(ks.size());
  const int module_out = (nb + 1) * s.width;
  const int T = s.steps;
  int cin = s.channels;
  ad::Var h = x;
  ad::Var res = x;
  int res_in = cin;
  for (int m = 0; m < s.depth; ++m) {
    const std::string mp = prefix + ".m" + std::to_string(m);
    const bool use_bneck = ctx.ps.has(mp + ".bneck.w");
    ad::Var bin = h;
    int bw = cin;
    if (use_bneck) {
      bin = layers::conv(ctx, mp + ".bneck", h, cin, T, 1);
      bw = s.bottleneck;
    }
    std::vector<ad::Var> branches;
    for (int b = 0; b < nb; ++b)
      branches.push_back(layers::conv(ctx, mp + ".k" + std::to_string(b), bin, bw, T, ks[b]));
    ad::Var pooled = ctx.g.maxpool1d_same(h, cin, T, 3);
    branches.push_back(layers::conv(ctx, mp + ".poolconv", pooled, cin, T, 1));
    ad::Var cat = ctx.g.concat_cols(branches);
    cat = layers::bn(ctx, mp + ".bn", cat, module_out, T);
    if ((m + 1) % 3 == 0) {
      ad::Var shortcut = res;
      if (res_in != module_out) {
        shortcut = layers::conv(ctx, mp + ".shortcut", res, res_in, T, 1);
        shortcut = layers::bn(ctx, mp + ".shortbn", shortcut, module_out, T);
      }
      cat = ctx.g.add(cat, shortcut);
      h = ctx.g.relu(cat);
      res = h;
      res_in = module_out;
    } else {
      h = ctx.g.relu(cat);
    }
    cin = module_out;
  }
  ad::Var z = ctx.g.global_avg_pool(h, module_out, T);
  return layers::linear(ctx, prefix + ".proj", z);
}

// ===== VRNN =====
//
// One recurrent latent-variable cell per step. The readout for downstream
// heads is an affine map of the final hidden state; vrnn ELBO terms are
// collected alongside.

inline void init_vrnn(ParamSet& ps, const EncoderSpec& s, const std::string& prefix,
                      std::mt19937_64& rng) {
  const int C = s.channels, F = s.vr_feat, H = s.vr_hidden, Z = s.vr_z;
  layers::init_linear(ps, prefix + ".phix", C, F, rng);
  layers::init_linear(ps, prefix + ".phiz", Z, F, rng);
  layers::init_linear(ps, prefix + ".prior_mu", H, Z, rng);
  layers::init_linear(ps, prefix + ".prior_sig", H, Z, rng);
  layers::init_linear(ps, prefix + ".enc_mu", F + H, Z, rng);
  layers::init_linear(ps, prefix + ".enc_sig", F + H, Z, rng);
  layers::init_linear(ps, prefix + ".dec_mu", F + H, C, rng);
  layers::init_linear(ps, prefix + ".dec_sig", F + H, C, rng);
  layers::init_linear(ps, prefix + ".rec", F + F + H, H, rng);
  layers::init_linear(ps, prefix + ".proj", H, s.latent_dim, rng);
}

struct VrnnOut {
  ad::Var latent;  // [n, latent_dim]
  ad::Var elbo;    // 1x1, mean over batch of summed per-step NLL + KL
};

// noise: [n, vr_z * T] standard-normal draws for the reparameterized samples;
// frozen by gradient checks, drawn fresh per step by training.
inline VrnnOut apply_vrnn(NetCtx& ctx, const EncoderSpec& s, const std::string& prefix,
                          const TimeSeriesBatch& batch, const Mat& noise) {
  const int n = batch.n(), C = s.channels, T = s.steps, H = s.vr_hidden, Z = s.vr_z;
  if (noise.rows() != n || noise.cols() != static_cast<Eigen::Index>(Z) * T)
    throw std::invalid_argument("apply_vrnn: noise shape mismatch");
  auto& g = ctx.g;
  const double sig_floor = 1e-4;
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);

  // step-major views of the input: x_t as [n, C]
  std::vector<ad::Var> xt(T);
  {
    Mat step(n, C);
    for (int t = 0; t < T; ++t) {
      for (int i = 0; i < n; ++i)
        for (int c = 0; c < C; ++c) step(i, c) = batch.at(i, c, t);
      xt[t] = g.input(step);
    }
  }

  ad::Var h = g.input(Mat::Zero(n, H));
  ad::Var elbo = g.input(Mat::Zero(1, 1));
  for (int t = 0; t < T; ++t) {
    ad::Var fx = g.relu(layers::linear(ctx, prefix + ".phix", xt[t]));
    ad::Var prior_mu = layers::linear(ctx, prefix + ".prior_mu", h);
    ad::Var prior_sig =
        g.add_const(g.softplus(layers::linear(ctx, prefix + ".prior_sig", h)), sig_floor);
    ad::Var enc_in = g.concat_cols({fx, h});
    ad::Var q_mu = layers::linear(ctx, prefix + ".enc_mu", enc_in);
    ad::Var q_sig =
        g.add_const(g.softplus(layers::linear(ctx, prefix + ".enc_sig", enc_in)), sig_floor);
    ad::Var eps = g.input(Mat(noise.middleCols(static_cast<Eigen::Index>(t) * Z, Z)));
    ad::Var z = g.add(q_mu, g.mul(q_sig, eps));
    ad::Var fz = g.relu(layers::linear(ctx, prefix + ".phiz", z));
    ad::Var dec_in = g.concat_cols({fz, h});
    ad::Var dec_mu = layers::linear(ctx, prefix + ".dec_mu", dec_in);
    ad::Var dec_sig =
        g.add_const(g.softplus(layers::linear(ctx, prefix + ".dec_sig", dec_in)), sig_floor);

    // Gaussian NLL of x_t under the decoder, summed over channels
    ad::Var resid = g.sub(xt[t], dec_mu);
    ad::Var nll = g.add_const(
        g.add(g.log_(dec_sig),
              g.div(g.square(resid), g.scale(g.square(dec_sig), 2.0))),
        half_log_2pi);
    // KL(q || p) for diagonal Gaussians, summed over dims
    ad::Var kl = g.add_const(
        g.add(g.sub(g.log_(prior_sig), g.log_(q_sig)),
              g.div(g.add(g.square(q_sig), g.square(g.sub(q_mu, prior_mu))),
                    g.scale(g.square(prior_sig), 2.0))),
        -0.5);
    elbo = g.add(elbo, g.scale(g.sum_all(g.add(g.sum_all(nll), g.sum_all(kl))), 1.0));

    ad::Var rec_in = g.concat_cols({fx, fz, h});
    h = g.tanh_(layers::linear(ctx, prefix + ".rec", rec_in));
  }
  VrnnOut out;
  out.elbo = g.scale(elbo, 1.0 / n);
  out.latent = layers::linear(ctx, prefix + ".proj", h);
  return out;
}

// ===== frequency branch and concat encoder =====

inline int freq_bins(int T) { return T / 2 + 1; }

inline void init_freq(ParamSet& ps, const EncoderSpec& s, const std::string& prefix,
                      std::mt19937_64& rng) {
  layers::init_conv(ps, prefix + ".fconv", s.freq_width, 2 * s.channels, s.freq_kernel,
                    rng, true);
  layers::init_linear(ps, prefix + ".fproj", s.freq_width, s.latent_freq, rng);
}

// rFFT each channel (unnormalized), stack magnitude then phase channels of
// length T/2+1, run a learnable convolution over the stacked spectrum.
inline ad::Var apply_freq(NetCtx& ctx, const EncoderSpec& s, const std::string& prefix,
                          ad::Var x) {
  auto& g = ctx.g;
  const int C = s.channels, T = s.steps, B = freq_bins(T);
  auto dft = ad::DftMatrices::build(T);
  ad::Var cosm = g.input(dft.cos_m);
  ad::Var sinm = g.input(dft.sin_m);
  std::vector<ad::Var> mags, phases;
  for (int c = 0; c < C; ++c) {
    ad::Var ch = g.slice_cols(x, static_cast<Eigen::Index>(c) * T, T);
    ad::Var re = g.matmul(ch, cosm, false, true);               // [n, B]
    ad::Var im = g.scale(g.matmul(ch, sinm, false, true), -1.0);  // [n, B]
    mags.push_back(g.magnitude(re, im));
    phases.push_back(g.atan2_(im, re));
  }
  std::vector<ad::Var> stacked = mags;
  stacked.insert(stacked.end(), phases.begin(), phases.end());
  ad::Var spec = g.concat_cols(stacked);  // [n, 2C * B], channel-major
  ad::Var h = layers::conv(ctx, prefix + ".fconv", spec, 2 * C, B, s.freq_kernel);
  h = g.relu(h);
  ad::Var z = g.global_avg_pool(h, s.freq_width, B);
  return layers::linear(ctx, prefix + ".fproj", z);
}

inline void init_encoder(ParamSet& ps, const EncoderSpec& s, const std::string& prefix,
                         std::mt19937_64& rng) {
  {
    auto issues = s.validate();
    if (!issues.empty()) throw std::invalid_argument("EncoderSpec: " + issues.front());
  }
  switch (s.kind) {
    case EncoderKind::CNN1D: init_cnn1d(ps, s, prefix, rng); break;
    case EncoderKind::Inception: init_inception(ps, s, prefix, rng); break;
    case EncoderKind::VRNN: init_vrnn(ps, s, prefix, rng); break;
    case EncoderKind::TimeFreqConcat: {
      EncoderSpec time = s;
      time.kind = s.time_kind;
      init_encoder(ps, time, prefix + ".time", rng);
      init_freq(ps, s, prefix + ".freq", rng);
      break;
    }
  }
}

// total latent width seen by heads
inline int encoder_out_dim(const EncoderSpec& s) {
  if (s.kind == EncoderKind::TimeFreqConcat) return s.latent_dim + s.latent_freq;
  return s.latent_dim;
}

struct EncodeResult {
  ad::Var latent;
  ad::Var elbo;       // valid only for VRNN
  bool has_elbo = false;
};

inline EncodeResult apply_encoder(NetCtx& ctx, const EncoderSpec& s,
                                  const std::string& prefix, ad::Var x,
                                  const TimeSeriesBatch* batch = nullptr,
                                  const Mat* vrnn_noise = nullptr) {
  EncodeResult r;
  switch (s.kind) {
    case EncoderKind::CNN1D: r.latent = apply_cnn1d(ctx, s, prefix, x); break;
    case EncoderKind::Inception: r.latent = apply_inception(ctx, s, prefix, x); break;
    case EncoderKind::VRNN: {
      if (!batch || !vrnn_noise)
        throw std::invalid_argument("apply_encoder: VRNN needs batch and noise");
      auto out = apply_vrnn(ctx, s, prefix, *batch, *vrnn_noise);
      r.latent = out.latent;
      r.elbo = out.elbo;
      r.has_elbo = true;
      break;
    }
    case EncoderKind::TimeFreqConcat: {
      EncoderSpec time = s;
      time.kind = s.time_kind;
      ad::Var zt = apply_encoder(ctx, time, prefix + ".time", x).latent;
      ad::Var zf = apply_freq(ctx, s, prefix + ".freq", x);
      r.latent = ctx.g.concat_cols({zt, zf});
      break;
    }
  }
  return r;
}

// ===== heads =====

struct HeadSpec {
  int in_dim = 16;
  int num_classes = 2;
  int disc_in = 16;
  int disc_hidden = 64;
};

inline void init_classifier(ParamSet& ps, const HeadSpec& h, const std::string& prefix,
                            std::mt19937_64& rng) {
  layers::init_linear(ps, prefix + ".out", h.in_dim, h.num_classes, rng);
}
inline ad::Var classifier_logits(NetCtx& ctx, const std::string& prefix, ad::Var z) {
  return layers::linear(ctx, prefix + ".out", z);
}

inline void init_discriminator(ParamSet& ps, const HeadSpec& h, const std::string& prefix,
                               std::mt19937_64& rng) {
  layers::init_linear(ps, prefix + ".h", h.disc_in, h.disc_hidden, rng);
  layers::init_linear(ps, prefix + ".out", h.disc_hidden, 1, rng);
}
inline ad::Var discriminator_prob(NetCtx& ctx, const std::string& prefix, ad::Var z) {
  ad::Var h = ctx.g.relu(layers::linear(ctx, prefix + ".h", z));
  return ctx.g.sigmoid(layers::linear(ctx, prefix + ".out", h));
}

// ===== multilinear map =====

enum class MultilinearMode { Outer, Randomized };

// Flattened outer product z ⊗ p, entries ordered (z index major):
// out[j*K + c] = z_j * p_c.
inline ad::Var multilinear_outer(ad::Graph& g, ad::Var z, ad::Var p) {
  const int dz = static_cast<int>(g.val(z).cols());
  const int K = static_cast<int>(g.val(p).cols());
  std::vector<ad::Var> blocks;  // p-major blocks, then reorder to z-major
  for (int c = 0; c < K; ++c) {
    std::vector<int> one{c};
    ad::Var pc = g.select_cols(p, one);     // [n,1]
    blocks.push_back(g.mul(z, pc));          // broadcast col -> [n,dz]
  }
  ad::Var pmajor = g.concat_cols(blocks);    // [n, K*dz], out[c*dz + j]
  std::vector<int> perm(static_cast<std::size_t>(dz) * K);
  for (int j = 0; j < dz; ++j)
    for (int c = 0; c < K; ++c) perm[static_cast<std::size_t>(j) * K + c] = c * dz + j;
  return g.select_cols(pmajor, perm);
}

// (R1 z ⊙ R2 p) / sqrt(d) with fixed projections held in the ParamSet.
inline void init_multilinear_randomized(ParamSet& ps, const std::string& prefix, int dz,
                                        int K, int d, std::mt19937_64& rng) {
  ps.add(prefix + ".r1", init::normal(dz, d, 1.0, rng), false);
  ps.add(prefix + ".r2", init::normal(K, d, 1.0, rng), false);
}
inline ad::Var multilinear_randomized(NetCtx& ctx, const std::string& prefix, ad::Var z,
                                      ad::Var p) {
  auto& g = ctx.g;
  ad::Var a = g.matmul(z, ctx.param(prefix + ".r1"));
  ad::Var b = g.matmul(p, ctx.param(prefix + ".r2"));
  const int d = static_cast<int>(g.val(a).cols());
  return g.scale(g.mul(a, b), 1.0 / std::sqrt(static_cast<double>(d)));
}

// ===== value-level wrappers =====

inline Mat encode(const EncoderSpec& s, ParamSet& ps, const TimeSeriesBatch& X,
                  const std::string& prefix = "enc") {
  if (X.channels != s.channels || X.steps != s.steps)
    throw std::invalid_argument("encode: batch shape does not match encoder spec");
  ad::Graph g;
  NetCtx ctx(g, ps, false);
  ad::Var x = g.input(X.values);
  Mat noise;
  const TimeSeriesBatch* bp = nullptr;
  const Mat* np = nullptr;
  if (s.kind == EncoderKind::VRNN) {
    noise = Mat::Zero(X.n(), static_cast<Eigen::Index>(s.vr_z) * s.steps);
    bp = &X;
    np = &noise;
  }
  auto r = apply_encoder(ctx, s, prefix, x, bp, np);
  return g.val(r.latent);
}

inline Mat classify(const HeadSpec& h, ParamSet& ps, const Mat& Z,
                    const std::string& prefix = "clf") {
  if (Z.cols() != h.in_dim) throw std::invalid_argument("classify: latent dim mismatch");
  ad::Graph g;
  NetCtx ctx(g, ps, false);
  ad::Var z = g.input(Z);
  ad::Var probs = g.softmax_rows(classifier_logits(ctx, prefix, z));
  return g.val(probs);
}

inline Vec multilinear_map(const Vec& z, const Vec& p, MultilinearMode mode,
                           const Mat* r1 = nullptr, const Mat* r2 = nullptr) {
  if (mode == MultilinearMode::Outer) {
    const int dz = static_cast<int>(z.size());
    const int K = static_cast<int>(p.size());
    Vec out(static_cast<Eigen::Index>(dz) * K);
    for (int j = 0; j < dz; ++j)
      for (int c = 0; c < K; ++c) out[static_cast<Eigen::Index>(j) * K + c] = z[j] * p[c];
    return out;
  }
  if (!r1 || !r2) throw std::invalid_argument("multilinear_map: projections required");
  const int d = static_cast<int>(r1->cols());
  Vec a = r1->transpose() * z;
  Vec b = r2->transpose() * p;
  return (a.array() * b.array()).matrix() / std::sqrt(static_cast<double>(d));
}

}  // namespace tsuda
