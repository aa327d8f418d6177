#include <catch2/catch_amalgamated.hpp>

#include "tsuda/algorithms.hpp"
#include "tsuda/synthetic.hpp"

using namespace tsuda;

namespace {

TimeSeriesBatch toy_batch(int n, int C, int T, int K, std::uint64_t seed, bool labeled) {
  auto rng = make_rng(seed);
  std::normal_distribution<double> nd;
  TimeSeriesBatch b;
  b.channels = C;
  b.steps = T;
  b.values = Mat(n, C * T);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < C * T; ++j) b.values(i, j) = nd(rng);
  if (labeled) {
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) y[i] = i % K;
    b.labels = y;
  }
  return b;
}

// objective value restricted to a parameter group:
// encoder/classifier parameters move the reported total, discriminator
// parameters move the adversarial term alone
double group_value(Model& m, const TimeSeriesBatch& sb, const TimeSeriesBatch& tb,
                   const StepRand& r, int group) {
  ad::Graph g;
  NetCtx ctx(g, m.ps, true);
  LossGraph lg = build_loss(m, g, ctx, sb, tb, r);
  if (group == 0) return lg.report.at("total");
  return lg.report.at("L_A");
}

struct FdResult {
  double worst_rel = 0.0;
  std::size_t params = 0;
};

FdResult fd_check(AlgorithmId algo, const HyperParams& hp, int n, int C, int T, int K,
                  bool has_disc) {
  TimeSeriesBatch sb = toy_batch(n, C, T, K, 11, true);
  TimeSeriesBatch tb = toy_batch(n + 1, C, T, K, 22, false);
  Model m = build_model(algo, C, T, K, hp, 7);
  auto rng = make_rng(99);
  StepRand r = draw_step_rand(m, sb, tb, rng);

  {
    ad::Graph g;
    NetCtx ctx(g, m.ps, true);
    LossGraph lg = build_loss(m, g, ctx, sb, tb, r);
    m.ps.zero_grads();
    g.backward(lg.objective);
    ctx.pull_grads();
  }
  std::vector<Mat> ana;
  for (auto& e : m.ps.entries) ana.push_back(e.grad);

  FdResult out;
  out.params = m.ps.scalar_count();
  const double h = 1e-5;
  for (std::size_t pi = 0; pi < m.ps.entries.size(); ++pi) {
    auto& e = m.ps.entries[pi];
    if (!e.trainable) continue;
    const int group = has_disc && param_is_discriminator(e.name) ? 1 : 0;
    const int probes = std::min<int>(3, static_cast<int>(e.value.size()));
    auto prng = make_rng(1000 + pi);
    for (int q = 0; q < probes; ++q) {
      const int idx = static_cast<int>(prng() % e.value.size());
      const double keep = e.value.data()[idx];
      e.value.data()[idx] = keep + h;
      const double up = group_value(m, sb, tb, r, group);
      e.value.data()[idx] = keep - h;
      const double dn = group_value(m, sb, tb, r, group);
      e.value.data()[idx] = keep;
      const double fd = (up - dn) / (2 * h);
      const double an = ana[pi].data()[idx];
      const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
      out.worst_rel = std::max(out.worst_rel, rel);
    }
  }
  return out;
}

HyperParams toy_hp() {
  HyperParams hp;
  hp.values["width_mult"] = 0.0625;  // width 4
  hp.values["latent_dim"] = 6;
  hp.values["lambda"] = 0.7;
  return hp;
}

}  // namespace

TEST_CASE("every algorithm's gradients pass finite differences", "[algorithms]") {
  const HyperParams hp = toy_hp();

  CHECK(fd_check(AlgorithmId::SourceOnly, hp, 5, 2, 16, 3, false).worst_rel < 1e-4);
  CHECK(fd_check(AlgorithmId::CoDATS, hp, 5, 2, 16, 3, true).worst_rel < 1e-4);
  CHECK(fd_check(AlgorithmId::InceptionDANN, hp, 5, 2, 16, 3, true).worst_rel < 1e-4);

  HyperParams cdan = hp;
  cdan.choices["cdan_mode"] = "outer";
  cdan.choices["entropy_conditioning"] = "on";
  CHECK(fd_check(AlgorithmId::InceptionCDAN, cdan, 5, 2, 16, 3, true).worst_rel < 1e-4);
  cdan.choices["cdan_mode"] = "randomized";
  cdan.values["rand_dim"] = 8;
  CHECK(fd_check(AlgorithmId::InceptionCDAN, cdan, 5, 2, 16, 3, true).worst_rel < 1e-4);
  cdan.choices["entropy_conditioning"] = "off";
  CHECK(fd_check(AlgorithmId::InceptionCDAN, cdan, 5, 2, 16, 3, true).worst_rel < 1e-4);

  HyperParams vr = hp;
  vr.values["vr_feat"] = 4;
  vr.values["vr_hidden"] = 6;
  vr.values["vr_z"] = 3;
  CHECK(fd_check(AlgorithmId::VRADA, vr, 4, 2, 8, 3, true).worst_rel < 1e-4);

  HyperParams mix = hp;
  mix.values["alpha"] = 0.8;
  mix.values["mix_window"] = 2;
  mix.values["tau"] = 0.5;
  CHECK(fd_check(AlgorithmId::CoTMix, mix, 5, 2, 16, 3, false).worst_rel < 1e-4);
  mix.choices["window_norm"] = "mean";
  CHECK(fd_check(AlgorithmId::InceptionMix, mix, 5, 2, 16, 3, false).worst_rel < 1e-4);

  HyperParams rain = hp;
  rain.values["epsilon_sinkhorn"] = 0.5;
  rain.values["latent_freq"] = 4;
  CHECK(fd_check(AlgorithmId::Raincoat, rain, 5, 2, 16, 3, false).worst_rel < 1e-3);
  CHECK(fd_check(AlgorithmId::InceptionRain, rain, 5, 2, 16, 3, false).worst_rel < 1e-3);
}

TEST_CASE("gradient reversal routes the min-max objective", "[algorithms]") {
  const int n = 5, C = 2, T = 16, K = 3;
  TimeSeriesBatch sb = toy_batch(n, C, T, K, 11, true);
  TimeSeriesBatch tb = toy_batch(n, C, T, K, 22, false);
  const double lam = 0.7;
  HyperParams hp = toy_hp();
  Model m = build_model(AlgorithmId::CoDATS, C, T, K, hp, 7);
  auto rng = make_rng(99);
  StepRand r = draw_step_rand(m, sb, tb, rng);

  // grads of the routed objective
  {
    ad::Graph g;
    NetCtx ctx(g, m.ps, true);
    LossGraph lg = build_loss(m, g, ctx, sb, tb, r);
    m.ps.zero_grads();
    g.backward(lg.objective);
    ctx.pull_grads();
  }
  std::vector<Mat> routed;
  for (auto& e : m.ps.entries) routed.push_back(e.grad);

  // grads of plain L_C and plain L_A, no reversal anywhere
  auto plain = [&](bool want_la) {
    ad::Graph g;
    NetCtx ctx(g, m.ps, true);
    ad::Var xs = g.input(sb.values), xt = g.input(tb.values);
    ad::Var zs = apply_encoder(ctx, m.enc, "enc", xs).latent;
    ad::Var zt = apply_encoder(ctx, m.enc, "enc", xt).latent;
    ad::Var obj;
    if (want_la) {
      obj = losses::adversarial(g, discriminator_prob(ctx, "disc", zs),
                                discriminator_prob(ctx, "disc", zt));
    } else {
      obj = losses::ce_probs(g, g.softmax_rows(classifier_logits(ctx, "clf", zs)),
                             *sb.labels);
    }
    m.ps.zero_grads();
    g.backward(obj);
    ctx.pull_grads();
    std::vector<Mat> out;
    for (auto& e : m.ps.entries) out.push_back(e.grad);
    return out;
  };
  auto gLA = plain(true);
  auto gLC = plain(false);

  double worst = 0.0;
  for (std::size_t i = 0; i < m.ps.entries.size(); ++i) {
    if (!m.ps.entries[i].trainable) continue;
    const std::string& nm = m.ps.entries[i].name;
    Mat want;
    if (param_is_discriminator(nm)) want = gLA[i];       // ascends L_A as-is
    else if (nm.rfind("clf.", 0) == 0) want = gLC[i];    // classifier sees only L_C
    else want = gLC[i] - lam * gLA[i];                   // encoder descends L_C - lambda L_A
    const double d = (routed[i] - want).cwiseAbs().maxCoeff();
    const double s = std::max(1e-12, want.cwiseAbs().maxCoeff());
    worst = std::max(worst, d / std::max(1.0, s));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("toy finite-difference networks stay small", "[algorithms]") {
  HyperParams hp = toy_hp();
  CHECK(build_model(AlgorithmId::CoDATS, 2, 16, 3, hp, 1).ps.scalar_count() <= 3000);
  CHECK(build_model(AlgorithmId::SourceOnly, 2, 16, 3, hp, 1).ps.scalar_count() <= 3000);
}

TEST_CASE("temporal mixup follows the window formula", "[algorithms]") {
  // 1 channel, T=4, L=1, paper norm: window sum / (2L)
  TimeSeriesBatch xs;
  xs.channels = 1;
  xs.steps = 4;
  xs.values = Mat(1, 4);
  xs.values << 1.0, 2.0, 3.0, 4.0;
  xs.labels = std::vector<int>{1};
  TimeSeriesBatch xt = xs;
  xt.values << 10.0, 20.0, 30.0, 40.0;
  xt.labels.reset();

  const double alpha = 0.8;
  std::vector<int> partner = {0};
  auto ap = cotmix_augment(xs, xt, alpha, 1, partner, partner, WindowNorm::Paper);

  // source-dominant mixed row: alpha * xs + (1-alpha) * windowed(xt)
  // circular windows of xt / (2L): t=0 -> (40+10+20)/2 = 35
  Mat want(1, 4);
  want << alpha * 1.0 + 0.2 * 35.0, alpha * 2.0 + 0.2 * 30.0, alpha * 3.0 + 0.2 * 45.0,
      alpha * 4.0 + 0.2 * 40.0;
  REQUIRE(ap.source.values.rows() == 2);
  CHECK((ap.source.values.row(0) - xs.values.row(0)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((ap.source.values.row(1) - want.row(0)).cwiseAbs().maxCoeff() < 1e-9);
  REQUIRE(ap.source.labels);
  CHECK(*ap.source.labels == std::vector<int>{1, 1});

  // target-dominant side mirrors with the source as the minor series
  REQUIRE(ap.target.values.rows() == 2);
  CHECK((ap.target.values.row(0) - xt.values.row(0)).cwiseAbs().maxCoeff() < 1e-12);
  const double t0 = alpha * 10.0 + 0.2 * ((4.0 + 1.0 + 2.0) / 2.0);
  CHECK(std::abs(ap.target.values(1, 0) - t0) < 1e-9);

  // mean normalization divides by 2L+1 instead
  auto am = cotmix_augment(xs, xt, alpha, 1, partner, partner, WindowNorm::Mean);
  const double m0 = alpha * 1.0 + 0.2 * (70.0 / 3.0);
  CHECK(std::abs(am.source.values(1, 0) - m0) < 1e-9);
}

TEST_CASE("temporal mixup validates its parameters", "[algorithms]") {
  TimeSeriesBatch xs = toy_batch(3, 1, 8, 2, 1, true);
  TimeSeriesBatch xt = toy_batch(3, 1, 8, 2, 2, false);
  std::vector<int> p = {0, 1, 2};
  CHECK_THROWS_AS(cotmix_augment(xs, xt, 0.5, 1, p, p, WindowNorm::Paper),
                  std::invalid_argument);
  CHECK_THROWS_AS(cotmix_augment(xs, xt, 1.0, 1, p, p, WindowNorm::Paper),
                  std::invalid_argument);
  CHECK_THROWS_AS(cotmix_augment(xs, xt, 0.8, 0, p, p, WindowNorm::Paper),
                  std::invalid_argument);
}

TEST_CASE("cdan entropy weights are normalized and optional", "[algorithms]") {
  ad::Graph g;
  Mat p = Mat::Constant(4, 3, 1.0 / 3.0);
  auto w = detail_algo::cdan_weights(g, g.input(p));
  // uniform rows share one entropy, so normalized weights are exactly 1
  CHECK((g.val(w).array() - 1.0).abs().maxCoeff() < 1e-12);

  // peaked rows weigh more than flat rows before normalization evens them out
  Mat mixed(2, 2);
  mixed << 0.99, 0.01, 0.5, 0.5;
  ad::Graph g2;
  auto w2 = detail_algo::cdan_weights(g2, g2.input(mixed));
  const Mat& wv = g2.val(w2);
  CHECK(wv(0, 0) > wv(1, 0));
  CHECK(std::abs(wv.mean() - 1.0) < 1e-12);
}

TEST_CASE("model factory shapes heads per algorithm", "[algorithms]") {
  HyperParams hp = toy_hp();
  auto dann = build_model(AlgorithmId::CoDATS, 2, 16, 3, hp, 1);
  CHECK(dann.head.disc_in == encoder_out_dim(dann.enc));

  HyperParams cdan = hp;
  cdan.choices["cdan_mode"] = "outer";
  auto outer = build_model(AlgorithmId::InceptionCDAN, 2, 16, 3, cdan, 1);
  CHECK(outer.head.disc_in == encoder_out_dim(outer.enc) * 3);

  cdan.choices["cdan_mode"] = "randomized";
  cdan.values["rand_dim"] = 12;
  auto rnd = build_model(AlgorithmId::InceptionCDAN, 2, 16, 3, cdan, 1);
  CHECK(rnd.head.disc_in == 12);
  CHECK(rnd.ps.has("mlmap.r1"));

  CHECK(param_is_discriminator("disc.h.w"));
  CHECK(!param_is_discriminator("enc.disc_like"));
  CHECK(!param_is_discriminator("clf.out.w"));
}

TEST_CASE("one-shot loss wrappers validate the algorithm family", "[algorithms]") {
  HyperParams hp = toy_hp();
  TimeSeriesBatch sb = toy_batch(4, 2, 16, 3, 5, true);
  TimeSeriesBatch tb = toy_batch(4, 2, 16, 3, 6, false);

  auto dann = build_model(AlgorithmId::CoDATS, 2, 16, 3, hp, 1);
  auto rep = dann_total(dann, sb, tb);
  CHECK(std::isfinite(rep.at("total")));
  CHECK(rep.count("L_C") == 1);
  CHECK(rep.count("L_A") == 1);
  CHECK_THROWS_AS(cotmix_total(dann, sb, tb), std::invalid_argument);

  // labeled target batches are refused everywhere
  TimeSeriesBatch leaky = tb;
  leaky.labels = std::vector<int>{0, 1, 2, 0};
  CHECK_THROWS_AS(dann_total(dann, sb, leaky), std::invalid_argument);

  // unlabeled source batches are refused too
  TimeSeriesBatch unlabeled = sb;
  unlabeled.labels.reset();
  CHECK_THROWS_AS(dann_total(dann, unlabeled, tb), std::invalid_argument);
}

TEST_CASE("training is bit-deterministic for a fixed seed", "[algorithms]") {
  SyntheticSpec spec;
  spec.num_classes = 3;
  spec.channels = 2;
  spec.steps = 16;
  spec.per_split = 24;
  spec.feature_shift = 0.4;
  spec.temporal_shift = 2;
  spec.noise_std = 0.25;
  Scenario sc = generate_synthetic_scenario(spec, 5);

  HyperParams hp = toy_hp();
  TrainBudget b;
  b.epochs = 2;
  b.batch_size = 8;
  auto crit = [&](Model& mm) {
    Mat p = predict(mm, sc.source.val);
    return losses::loss_classification(p, *sc.source.val.labels);
  };
  auto r1 = train(AlgorithmId::CoDATS, sc, hp, 3, b, crit);
  auto r2 = train(AlgorithmId::CoDATS, sc, hp, 3, b, crit);

  CHECK(r1.status == "ok");
  REQUIRE(r1.criterion_trace.size() == 2);
  REQUIRE(r1.checkpoints.size() == 2);
  CHECK(r1.criterion_trace == r2.criterion_trace);
  for (std::size_t i = 0; i < r1.checkpoints.back().entries.size(); ++i)
    CHECK(r1.checkpoints.back().entries[i].value == r2.checkpoints.back().entries[i].value);

  // a different seed moves the parameters
  auto r3 = train(AlgorithmId::CoDATS, sc, hp, 4, b, crit);
  double diff = 0.0;
  for (std::size_t i = 0; i < r1.checkpoints.back().entries.size(); ++i)
    diff = std::max(diff, (r1.checkpoints.back().entries[i].value -
                           r3.checkpoints.back().entries[i].value)
                              .cwiseAbs()
                              .maxCoeff());
  CHECK(diff > 0.0);
}

TEST_CASE("training reports failure on divergence instead of propagating nans",
          "[algorithms]") {
  SyntheticSpec spec;
  spec.num_classes = 2;
  spec.channels = 1;
  spec.steps = 8;
  spec.per_split = 8;
  Scenario sc = generate_synthetic_scenario(spec, 9);

  HyperParams hp = toy_hp();
  hp.values["lr"] = 1e300;  // first update overflows the next forward pass
  TrainBudget b;
  b.epochs = 3;
  b.batch_size = 4;
  auto crit = [&](Model& mm) {
    Mat p = predict(mm, sc.source.val);
    return losses::loss_classification(p, *sc.source.val.labels);
  };
  auto r = train(AlgorithmId::CoDATS, sc, hp, 3, b, crit);
  CHECK(r.status == "failed");
  CHECK(r.criterion_trace.size() < 3);
}

TEST_CASE("prediction is noise-free and deterministic", "[algorithms]") {
  HyperParams hp = toy_hp();
  hp.values["vr_feat"] = 3;
  hp.values["vr_hidden"] = 4;
  hp.values["vr_z"] = 3;
  auto m = build_model(AlgorithmId::VRADA, 2, 8, 3, hp, 21);
  auto b = toy_batch(5, 2, 8, 3, 22, false);
  Mat p1 = predict(m, b);
  Mat p2 = predict(m, b);
  REQUIRE(p1.rows() == 5);
  REQUIRE(p1.cols() == 3);
  CHECK(p1 == p2);
  for (int i = 0; i < 5; ++i) CHECK(std::abs(p1.row(i).sum() - 1.0) < 1e-12);
}
