// ============================================================================
// algorithms.hpp - the nine training procedures
//
// Each algorithm is a loss family on top of a backbone. One backward pass
// realizes the min-max objectives: the adversarial term enters the graph
// through grad_reverse, so the encoder (and for conditioned variants the
// classifier) receives -lambda times the discriminator-side gradient while
// the discriminator itself is trained to minimize the adversarial loss. The
// reported totals follow the documented combinations; the backward objective
// differs from the reported total only by that routing.
// ============================================================================
#pragma once

#include "tsuda/data.hpp"
#include "tsuda/losses.hpp"
#include "tsuda/nets.hpp"
#include "tsuda/optimizer.hpp"
#include "tsuda/records.hpp"
#include "tsuda/sinkhorn.hpp"

#include <chrono>
#include <functional>
#include <map>

namespace tsuda {

enum class LossFamily { SourceOnly, Dann, Cdan, Vrada, CotMix, Raincoat };

inline LossFamily family_of(AlgorithmId a) {
  switch (a) {
    case AlgorithmId::SourceOnly: return LossFamily::SourceOnly;
    case AlgorithmId::CoDATS:
    case AlgorithmId::InceptionDANN: return LossFamily::Dann;
    case AlgorithmId::InceptionCDAN: return LossFamily::Cdan;
    case AlgorithmId::VRADA: return LossFamily::Vrada;
    case AlgorithmId::CoTMix:
    case AlgorithmId::InceptionMix: return LossFamily::CotMix;
    case AlgorithmId::Raincoat:
    case AlgorithmId::InceptionRain: return LossFamily::Raincoat;
  }
  throw std::invalid_argument("family_of: unknown algorithm");
}

inline EncoderKind backbone_of(AlgorithmId a) {
  switch (a) {
    case AlgorithmId::SourceOnly: return EncoderKind::Inception;  // InceptionTime
    case AlgorithmId::CoDATS: return EncoderKind::CNN1D;
    case AlgorithmId::InceptionDANN: return EncoderKind::Inception;
    case AlgorithmId::InceptionCDAN: return EncoderKind::Inception;
    case AlgorithmId::VRADA: return EncoderKind::VRNN;
    case AlgorithmId::CoTMix: return EncoderKind::CNN1D;
    case AlgorithmId::InceptionMix: return EncoderKind::Inception;
    case AlgorithmId::Raincoat:
    case AlgorithmId::InceptionRain: return EncoderKind::TimeFreqConcat;
  }
  throw std::invalid_argument("backbone_of: unknown algorithm");
}

using LossReport = std::map<std::string, double>;

// ===== model =====

struct Model {
  AlgorithmId algo = AlgorithmId::SourceOnly;
  EncoderSpec enc;
  HeadSpec head;
  ParamSet ps;
  HyperParams hp;
  MultilinearMode ml_mode = MultilinearMode::Outer;
  bool entropy_conditioning = true;
};

inline Model build_model(AlgorithmId algo, int channels, int steps, int num_classes,
                         const HyperParams& hp, std::uint64_t seed) {
  Model m;
  m.algo = algo;
  m.hp = hp;
  EncoderSpec& e = m.enc;
  e.kind = backbone_of(algo);
  e.channels = channels;
  e.steps = steps;
  const double mult = hp.get("width_mult", 0.125);
  e.width = std::max(2, static_cast<int>(std::lround(64.0 * mult)));
  e.latent_dim = hp.get_int("latent_dim", 16);
  e.depth = hp.get_int("depth", 3);
  e.bottleneck = hp.get_int("bottleneck", std::max(2, e.width));
  e.vr_feat = hp.get_int("vr_feat", 8);
  e.vr_hidden = hp.get_int("vr_hidden", 16);
  e.vr_z = hp.get_int("vr_z", 8);
  if (e.kind == EncoderKind::TimeFreqConcat) {
    e.time_kind = algo == AlgorithmId::InceptionRain ? EncoderKind::Inception
                                                     : EncoderKind::CNN1D;
    e.freq_width = hp.get_int("freq_width", e.width);
    e.freq_kernel = hp.get_int("freq_kernel", 5);
    e.latent_freq = hp.get_int("latent_freq", std::max(4, e.latent_dim / 2));
  }

  m.head.in_dim = encoder_out_dim(e);
  m.head.num_classes = num_classes;
  m.head.disc_hidden = hp.get_int("disc_hidden", 64);

  auto rng = make_rng(derive_seed(seed, "init"));
  init_encoder(m.ps, e, "enc", rng);
  init_classifier(m.ps, m.head, "clf", rng);

  const LossFamily fam = family_of(algo);
  if (fam == LossFamily::Dann || fam == LossFamily::Vrada) {
    m.head.disc_in = m.head.in_dim;
    init_discriminator(m.ps, m.head, "disc", rng);
  } else if (fam == LossFamily::Cdan) {
    m.ml_mode = hp.get_choice("cdan_mode", "outer") == "randomized"
                    ? MultilinearMode::Randomized
                    : MultilinearMode::Outer;
    m.entropy_conditioning = hp.get_choice("entropy_conditioning", "on") == "on";
    if (m.ml_mode == MultilinearMode::Outer) {
      m.head.disc_in = m.head.in_dim * num_classes;
    } else {
      m.head.disc_in = hp.get_int("rand_dim", 16);
      init_multilinear_randomized(m.ps, "mlmap", m.head.in_dim, num_classes,
                                  m.head.disc_in, rng);
    }
    init_discriminator(m.ps, m.head, "disc", rng);
  }
  return m;
}

inline bool param_is_discriminator(const std::string& name) {
  return name.rfind("disc.", 0) == 0;
}

// ===== per-step frozen randomness =====

struct StepRand {
  Mat vrnn_noise_s, vrnn_noise_t;
  std::vector<int> partner_of_source;  // index into the target batch
  std::vector<int> partner_of_target;  // index into the source batch
};

inline StepRand draw_step_rand(const Model& m, const TimeSeriesBatch& sb,
                               const TimeSeriesBatch& tb, std::mt19937_64& rng) {
  StepRand r;
  if (m.enc.kind == EncoderKind::VRNN) {
    std::normal_distribution<double> nd;
    auto draw = [&](int n) {
      Mat z(n, static_cast<Eigen::Index>(m.enc.vr_z) * m.enc.steps);
      for (Eigen::Index i = 0; i < z.rows(); ++i)
        for (Eigen::Index j = 0; j < z.cols(); ++j) z(i, j) = nd(rng);
      return z;
    };
    r.vrnn_noise_s = draw(sb.n());
    if (tb.n() > 0) r.vrnn_noise_t = draw(tb.n());
  }
  if (family_of(m.algo) == LossFamily::CotMix) {
    std::uniform_int_distribution<int> ds(0, std::max(0, tb.n() - 1));
    std::uniform_int_distribution<int> dt(0, std::max(0, sb.n() - 1));
    r.partner_of_source.resize(sb.n());
    for (auto& v : r.partner_of_source) v = ds(rng);
    r.partner_of_target.resize(tb.n());
    for (auto& v : r.partner_of_target) v = dt(rng);
  }
  return r;
}

// ===== temporal mixup =====

enum class WindowNorm { Paper, Mean };  // 1/(2L) as written vs 1/(2L+1)

// Mix a dominant sample with the windowed moving average of its partner from
// the other domain: dominant-weight alpha, circular window of length 2L+1.
inline TimeSeriesBatch mix_dominant(const TimeSeriesBatch& dom, const TimeSeriesBatch& other,
                                    const std::vector<int>& partner, double alpha, int L,
                                    WindowNorm norm, bool keep_labels) {
  if (static_cast<int>(partner.size()) != dom.n())
    throw std::invalid_argument("mix_dominant: partner count mismatch");
  const int T = dom.steps, C = dom.channels;
  const double wnorm = norm == WindowNorm::Paper ? 1.0 / (2.0 * L) : 1.0 / (2.0 * L + 1.0);
  TimeSeriesBatch out;
  out.channels = C;
  out.steps = T;
  out.values = Mat::Zero(dom.n(), C * T);
  for (int i = 0; i < dom.n(); ++i) {
    const int p = partner[i];
    for (int c = 0; c < C; ++c)
      for (int t = 0; t < T; ++t) {
        double acc = 0.0;
        for (int mth = t - L; mth <= t + L; ++mth) {
          const int mm = ((mth % T) + T) % T;
          acc += other.at(p, c, mm);
        }
        out.at(i, c, t) = alpha * dom.at(i, c, t) + (1.0 - alpha) * wnorm * acc;
      }
  }
  if (keep_labels && dom.labels) out.labels = dom.labels;
  return out;
}

struct AugmentedPair {
  TimeSeriesBatch source;  // 2 n_s rows, labeled
  TimeSeriesBatch target;  // 2 n_t rows, unlabeled
};

inline AugmentedPair cotmix_augment(const TimeSeriesBatch& Xs, const TimeSeriesBatch& Xt,
                                    double alpha, int L,
                                    const std::vector<int>& partner_of_source,
                                    const std::vector<int>& partner_of_target,
                                    WindowNorm norm = WindowNorm::Paper) {
  if (!(alpha > 0.5 && alpha < 1.0))
    throw std::invalid_argument("cotmix_augment: alpha must lie in (0.5, 1)");
  if (L < 1) throw std::invalid_argument("cotmix_augment: window must be >= 1");
  TimeSeriesBatch s_aug = mix_dominant(Xs, Xt, partner_of_source, alpha, L, norm, true);
  TimeSeriesBatch t_aug = mix_dominant(Xt, Xs, partner_of_target, alpha, L, norm, false);
  AugmentedPair out;
  // originals first, then the mixed copies; label vector doubles with them
  out.source.channels = Xs.channels;
  out.source.steps = Xs.steps;
  out.source.values = Mat(Xs.n() * 2, Xs.values.cols());
  out.source.values << Xs.values, s_aug.values;
  if (Xs.labels) {
    std::vector<int> lab = *Xs.labels;
    lab.insert(lab.end(), Xs.labels->begin(), Xs.labels->end());
    out.source.labels = std::move(lab);
  }
  out.target.channels = Xt.channels;
  out.target.steps = Xt.steps;
  out.target.values = Mat(Xt.n() * 2, Xt.values.cols());
  out.target.values << Xt.values, t_aug.values;
  return out;
}

// ===== loss graphs =====

struct LossGraph {
  ad::Var objective;  // what backward() runs on (gradient-reversal routing)
  LossReport report;  // documented component values and total
};

namespace detail_algo {

// per-domain entropy-conditioning weights w = 1 + exp(-H(p)), normalized to
// mean 1 within the batch
inline ad::Var cdan_weights(ad::Graph& g, ad::Var probs) {
  ad::Var w = g.add_const(g.exp_(g.scale(losses::row_entropy(g, probs), -1.0)), 1.0);
  ad::Var mean_w = g.mean_all(w);
  return g.div(w, mean_w);  // [n,1], broadcast-safe against mean scalar
}

// weighted adversarial loss: -mean(w_s log d_s) - mean(w_t log(1 - d_t))
inline ad::Var weighted_adversarial(ad::Graph& g, ad::Var d_s, ad::Var d_t, ad::Var w_s,
                                    ad::Var w_t) {
  ad::Var s = g.clamp(d_s, 1e-7, 1.0 - 1e-7);
  ad::Var t = g.clamp(d_t, 1e-7, 1.0 - 1e-7);
  ad::Var ls = g.mean_all(g.mul(g.log_(s), w_s));
  ad::Var lt = g.mean_all(g.mul(g.log_(g.add_const(g.scale(t, -1.0), 1.0)), w_t));
  return g.scale(g.add(ls, lt), -1.0);
}

}  // namespace detail_algo

// Build the loss graph for one paired batch. The source batch must carry
// labels; the target batch must not (strip them upstream).
inline LossGraph build_loss(Model& m, ad::Graph& g, NetCtx& ctx, const TimeSeriesBatch& sb,
                            const TimeSeriesBatch& tb, const StepRand& rand) {
  if (!sb.labels) throw std::invalid_argument("build_loss: source labels required");
  if (tb.labels) throw std::invalid_argument("build_loss: target batch must be unlabeled");
  const LossFamily fam = family_of(m.algo);
  const double lambda = m.hp.get("lambda", 1.0);
  LossGraph out;

  auto encode_batch = [&](const TimeSeriesBatch& b, const Mat& noise) {
    ad::Var x = g.input(b.values);
    return apply_encoder(ctx, m.enc, "enc", x, &b, &noise);
  };
  auto probs_of = [&](ad::Var z) {
    return g.softmax_rows(classifier_logits(ctx, "clf", z));
  };

  switch (fam) {
    case LossFamily::SourceOnly: {
      auto es = encode_batch(sb, rand.vrnn_noise_s);
      ad::Var lc = losses::ce_probs(g, probs_of(es.latent), *sb.labels);
      out.objective = lc;
      out.report["L_C"] = g.scalar(lc);
      out.report["total"] = out.report["L_C"];
      return out;
    }
    case LossFamily::Dann: {
      auto es = encode_batch(sb, rand.vrnn_noise_s);
      auto et = encode_batch(tb, rand.vrnn_noise_t);
      ad::Var lc = losses::ce_probs(g, probs_of(es.latent), *sb.labels);
      ad::Var d_s = discriminator_prob(ctx, "disc", g.grad_reverse(es.latent, lambda));
      ad::Var d_t = discriminator_prob(ctx, "disc", g.grad_reverse(et.latent, lambda));
      ad::Var la = losses::adversarial(g, d_s, d_t);
      out.objective = g.add(lc, la);
      out.report["L_C"] = g.scalar(lc);
      out.report["L_A"] = g.scalar(la);
      out.report["total"] = out.report["L_C"] - lambda * out.report["L_A"];
      return out;
    }
    case LossFamily::Cdan: {
      auto es = encode_batch(sb, rand.vrnn_noise_s);
      auto et = encode_batch(tb, rand.vrnn_noise_t);
      ad::Var ps_ = probs_of(es.latent);
      ad::Var pt_ = probs_of(et.latent);
      ad::Var lc = losses::ce_probs(g, ps_, *sb.labels);
      // everything the adversarial term consumes flows through the reversal
      ad::Var zs_r = g.grad_reverse(es.latent, lambda);
      ad::Var zt_r = g.grad_reverse(et.latent, lambda);
      ad::Var ps_r = g.grad_reverse(ps_, lambda);
      ad::Var pt_r = g.grad_reverse(pt_, lambda);
      ad::Var ml_s, ml_t;
      if (m.ml_mode == MultilinearMode::Outer) {
        ml_s = multilinear_outer(g, zs_r, ps_r);
        ml_t = multilinear_outer(g, zt_r, pt_r);
      } else {
        ml_s = multilinear_randomized(ctx, "mlmap", zs_r, ps_r);
        ml_t = multilinear_randomized(ctx, "mlmap", zt_r, pt_r);
      }
      ad::Var d_s = discriminator_prob(ctx, "disc", ml_s);
      ad::Var d_t = discriminator_prob(ctx, "disc", ml_t);
      ad::Var la;
      if (m.entropy_conditioning) {
        ad::Var w_s = detail_algo::cdan_weights(g, ps_r);
        ad::Var w_t = detail_algo::cdan_weights(g, pt_r);
        la = detail_algo::weighted_adversarial(g, d_s, d_t, w_s, w_t);
      } else {
        la = losses::adversarial(g, d_s, d_t);
      }
      out.objective = g.add(lc, la);
      out.report["L_C"] = g.scalar(lc);
      out.report["L_A"] = g.scalar(la);
      out.report["total"] = out.report["L_C"] - lambda * out.report["L_A"];
      return out;
    }
    case LossFamily::Vrada: {
      auto es = encode_batch(sb, rand.vrnn_noise_s);
      auto et = encode_batch(tb, rand.vrnn_noise_t);
      ad::Var lvrnn = g.add(es.elbo, et.elbo);  // both domains reconstruct
      ad::Var lc = losses::ce_probs(g, probs_of(es.latent), *sb.labels);
      ad::Var d_s = discriminator_prob(ctx, "disc", g.grad_reverse(es.latent, lambda));
      ad::Var d_t = discriminator_prob(ctx, "disc", g.grad_reverse(et.latent, lambda));
      ad::Var la = losses::adversarial(g, d_s, d_t);
      out.objective = g.add(g.add(lvrnn, lc), la);
      out.report["L_VRNN"] = g.scalar(lvrnn);
      out.report["L_C"] = g.scalar(lc);
      out.report["L_A"] = g.scalar(la);
      out.report["total"] =
          out.report["L_VRNN"] + out.report["L_C"] - lambda * out.report["L_A"];
      return out;
    }
    case LossFamily::CotMix: {
      const double alpha = m.hp.get("alpha", 0.75);
      const int L = m.hp.get_int("mix_window", 3);
      const double tau = m.hp.get("tau", 0.5);
      const WindowNorm norm = m.hp.get_choice("window_norm", "paper") == "mean"
                                  ? WindowNorm::Mean
                                  : WindowNorm::Paper;
      auto aug = cotmix_augment(sb, tb, alpha, L, rand.partner_of_source,
                                rand.partner_of_target, norm);
      auto es = encode_batch(aug.source, rand.vrnn_noise_s);
      auto et = encode_batch(aug.target, rand.vrnn_noise_t);
      ad::Var ps_ = probs_of(es.latent);  // [2 n_s, K]
      ad::Var pt_ = probs_of(et.latent);  // [2 n_t, K]
      ad::Var lc = losses::ce_probs(g, ps_, *aug.source.labels);
      ad::Var ht =
          losses::entropy(g, g.slice_rows(pt_, 0, tb.n()));  // original samples only
      ad::Var lcac = losses::cac(g, ps_, *aug.source.labels, tau);
      ad::Var luc = losses::uc(g, pt_, tau);
      out.objective = g.add(g.add(lc, ht), g.scale(g.add(lcac, luc), lambda));
      out.report["L_C"] = g.scalar(lc);
      out.report["H_t"] = g.scalar(ht);
      out.report["L_CAC"] = g.scalar(lcac);
      out.report["L_UC"] = g.scalar(luc);
      out.report["total"] = out.report["L_C"] + out.report["H_t"] +
                            lambda * (out.report["L_CAC"] + out.report["L_UC"]);
      return out;
    }
    case LossFamily::Raincoat: {
      SinkhornOptions so;
      so.eps = m.hp.get("epsilon_sinkhorn", 0.05);
      so.max_iters = m.hp.get_int("sinkhorn_iters", 200);
      so.tol = m.hp.get("sinkhorn_tol", 1e-6);
      auto es = encode_batch(sb, rand.vrnn_noise_s);
      auto et = encode_batch(tb, rand.vrnn_noise_t);
      ad::Var lc = losses::ce_probs(g, probs_of(es.latent), *sb.labels);
      SinkhornPlan plan = sinkhorn_plan(g.val(es.latent), g.val(et.latent), so);
      ad::Var lsink = sinkhorn_divergence_graph(g, es.latent, et.latent, so, plan);
      ad::Var lr = losses::raincoat_contrastive(g, es.latent, *sb.labels);
      out.objective = g.add(g.add(lc, lsink), lr);
      out.report["L_C"] = g.scalar(lc);
      out.report["L_Sinkhorn"] = g.scalar(lsink);
      out.report["L_R"] = g.scalar(lr);
      out.report["total"] =
          out.report["L_C"] + out.report["L_Sinkhorn"] + out.report["L_R"];
      return out;
    }
  }
  throw std::logic_error("build_loss: unreachable");
}

// ===== spec-level one-shot loss reports =====

inline LossReport loss_report_for(Model& m, const TimeSeriesBatch& sb,
                                  const TimeSeriesBatch& tb, std::uint64_t rand_seed = 0) {
  auto rng = make_rng(derive_seed(rand_seed, "loss-report"));
  StepRand r = draw_step_rand(m, sb, tb, rng);
  ad::Graph g;
  NetCtx ctx(g, m.ps, true);
  return build_loss(m, g, ctx, sb, tb, r).report;
}

inline LossReport dann_total(Model& m, const TimeSeriesBatch& sb, const TimeSeriesBatch& tb) {
  if (family_of(m.algo) != LossFamily::Dann)
    throw std::invalid_argument("dann_total: model is not a DANN variant");
  return loss_report_for(m, sb, tb);
}
inline LossReport cdan_total(Model& m, const TimeSeriesBatch& sb, const TimeSeriesBatch& tb) {
  if (family_of(m.algo) != LossFamily::Cdan)
    throw std::invalid_argument("cdan_total: model is not CDAN");
  return loss_report_for(m, sb, tb);
}
inline LossReport vrada_total(Model& m, const TimeSeriesBatch& sb, const TimeSeriesBatch& tb,
                              std::uint64_t noise_seed = 0) {
  if (family_of(m.algo) != LossFamily::Vrada)
    throw std::invalid_argument("vrada_total: model is not VRADA");
  return loss_report_for(m, sb, tb, noise_seed);
}
inline LossReport cotmix_total(Model& m, const TimeSeriesBatch& sb, const TimeSeriesBatch& tb,
                               std::uint64_t partner_seed = 0) {
  if (family_of(m.algo) != LossFamily::CotMix)
    throw std::invalid_argument("cotmix_total: model is not a CoTMix variant");
  return loss_report_for(m, sb, tb, partner_seed);
}
inline LossReport raincoat_total(Model& m, const TimeSeriesBatch& sb,
                                 const TimeSeriesBatch& tb) {
  if (family_of(m.algo) != LossFamily::Raincoat)
    throw std::invalid_argument("raincoat_total: model is not a Raincoat variant");
  return loss_report_for(m, sb, tb);
}

// ===== inference =====

inline Mat predict(Model& m, const TimeSeriesBatch& X) {
  if (X.channels != m.enc.channels || X.steps != m.enc.steps)
    throw std::invalid_argument("predict: batch shape mismatch");
  ad::Graph g;
  NetCtx ctx(g, m.ps, false);
  ad::Var x = g.input(X.values);
  Mat noise;
  const Mat* np = nullptr;
  const TimeSeriesBatch* bp = nullptr;
  if (m.enc.kind == EncoderKind::VRNN) {
    noise = Mat::Zero(X.n(), static_cast<Eigen::Index>(m.enc.vr_z) * m.enc.steps);
    np = &noise;
    bp = &X;
  }
  auto e = apply_encoder(ctx, m.enc, "enc", x, bp, np);
  ad::Var probs = g.softmax_rows(classifier_logits(ctx, "clf", e.latent));
  return g.val(probs);
}

// ===== training =====

struct TrainBudget {
  int epochs = 30;
  double wall_seconds = std::numeric_limits<double>::infinity();
  int batch_size = 32;
};

struct TrainedModel {
  Model model;  // parameters as of the last completed epoch
  std::vector<ParamSet> checkpoints;
  std::vector<double> criterion_trace;
  HyperParams hp;
  std::uint64_t seed = 0;
  std::string status = "ok";  // "ok" or "failed"
  double wall_seconds = 0.0;
  LossReport last_report;
};

// criterion: lower-is-better validation score evaluated at each epoch end
inline TrainedModel train(AlgorithmId algo, const Scenario& scenario,
                          const HyperParams& hp, std::uint64_t seed,
                          const TrainBudget& budget,
                          const std::function<double(Model&)>& criterion) {
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  const TimeSeriesBatch& strain = scenario.source.train;
  const TimeSeriesBatch ttrain = scenario.target_train();  // label-stripped
  Model model = build_model(algo, strain.channels, strain.steps,
                            scenario.source.num_classes, hp, seed);
  const bool uses_target = family_of(algo) != LossFamily::SourceOnly;

  Adam opt(hp.get("lr", 1e-3));
  TrainedModel out;
  out.hp = hp;
  out.seed = seed;

  const int bs = std::max(1, budget.batch_size);
  const int n_s = strain.n();
  const int n_t = ttrain.n();
  const int steps_per_epoch = (n_s + bs - 1) / bs;

  for (int epoch = 0; epoch < budget.epochs; ++epoch) {
    auto erng = make_rng(derive_seed(seed, "epoch-" + std::to_string(epoch)));
    std::vector<int> sidx(n_s), tidx(std::max(n_t, 1));
    for (int i = 0; i < n_s; ++i) sidx[i] = i;
    std::shuffle(sidx.begin(), sidx.end(), erng);
    if (n_t > 0) {
      for (int i = 0; i < n_t; ++i) tidx[i] = i;
      std::shuffle(tidx.begin(), tidx.end(), erng);
    }

    bool nan_abort = false;
    for (int step = 0; step < steps_per_epoch; ++step) {
      std::vector<int> sb_idx;
      for (int i = step * bs; i < std::min(n_s, (step + 1) * bs); ++i)
        sb_idx.push_back(sidx[i]);
      TimeSeriesBatch sb = strain.rows(sb_idx);
      TimeSeriesBatch tb;
      tb.channels = ttrain.channels;
      tb.steps = ttrain.steps;
      if (uses_target && n_t > 0) {
        std::vector<int> tb_idx;
        for (int i = 0; i < static_cast<int>(sb_idx.size()); ++i)
          tb_idx.push_back(tidx[(step * bs + i) % n_t]);  // cycle the target split
        tb = ttrain.rows(tb_idx);
      } else {
        tb.values = Mat::Zero(0, ttrain.values.cols());
      }

      StepRand rand = draw_step_rand(model, sb, tb, erng);
      ad::Graph g;
      NetCtx ctx(g, model.ps, true);
      LossGraph lg = build_loss(model, g, ctx, sb, tb, rand);
      if (!std::isfinite(lg.report.at("total"))) {
        nan_abort = true;
        break;
      }
      model.ps.zero_grads();
      g.backward(lg.objective);
      ctx.pull_grads();
      ctx.update_running_stats();
      opt.step(model.ps);
      out.last_report = lg.report;
    }

    if (nan_abort) {
      out.status = "failed";
      break;
    }
    out.checkpoints.push_back(model.ps);
    out.criterion_trace.push_back(criterion(model));
    if (!std::isfinite(out.criterion_trace.back())) {
      out.status = "failed";
      break;
    }
    if (elapsed() >= budget.wall_seconds) break;
  }

  out.model = std::move(model);
  out.wall_seconds = elapsed();
  return out;
}

}  // namespace tsuda
