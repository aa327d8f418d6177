#include <catch2/catch_amalgamated.hpp>

#include "tsuda/nets.hpp"

using namespace tsuda;

namespace {

TimeSeriesBatch gaussian_batch(int n, int C, int T, std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::normal_distribution<double> nd;
  TimeSeriesBatch b;
  b.channels = C;
  b.steps = T;
  b.values = Mat(n, C * T);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < C * T; ++j) b.values(i, j) = nd(rng);
  return b;
}

void zero_trainables(ParamSet& ps) {
  for (auto& e : ps.entries)
    if (e.trainable) e.value.setZero();
}

}  // namespace

TEST_CASE("softmax matches the closed form", "[nets]") {
  ad::Graph g;
  Mat logits(1, 2);
  logits << 2.0, 0.0;
  auto p = g.softmax_rows(g.input(logits));
  CHECK(std::abs(g.val(p)(0, 0) - 0.8807970779778823) < 1e-12);
  CHECK(std::abs(g.val(p)(0, 1) - 0.1192029220221176) < 1e-12);
}

TEST_CASE("zero-weight encoders map everything to zero", "[nets]") {
  for (auto kind : {EncoderKind::CNN1D, EncoderKind::Inception}) {
    EncoderSpec s;
    s.kind = kind;
    s.channels = 2;
    s.steps = 16;
    s.latent_dim = 5;
    s.width = 4;
    s.bottleneck = 3;
    ParamSet ps;
    auto rng = make_rng(1);
    init_encoder(ps, s, "enc", rng);
    zero_trainables(ps);
    auto b = gaussian_batch(3, 2, 16, 2);
    Mat z = encode(s, ps, b);
    REQUIRE(z.rows() == 3);
    REQUIRE(z.cols() == 5);
    CHECK(z.cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("encoder output width matches encoder_out_dim for every kind", "[nets]") {
  for (auto kind : {EncoderKind::CNN1D, EncoderKind::Inception, EncoderKind::VRNN,
                    EncoderKind::TimeFreqConcat}) {
    EncoderSpec s;
    s.kind = kind;
    s.channels = 2;
    s.steps = 16;
    s.latent_dim = 5;
    s.width = 4;
    s.bottleneck = 3;
    s.vr_feat = 3;
    s.vr_hidden = 4;
    s.vr_z = 3;
    s.latent_freq = 4;
    s.freq_width = 4;
    ParamSet ps;
    auto rng = make_rng(3);
    init_encoder(ps, s, "enc", rng);
    auto b = gaussian_batch(4, 2, 16, 4);
    Mat z = encode(s, ps, b);
    CHECK(z.rows() == 4);
    CHECK(z.cols() == encoder_out_dim(s));
    CHECK(z.allFinite());
  }
}

TEST_CASE("batchnorm normalizes in training and uses running stats in eval", "[nets]") {
  const int C = 2, T = 8, n = 16;
  ParamSet ps;
  layers::init_bn(ps, "bn", C);
  auto b = gaussian_batch(n, C, T, 5);
  b.values.array() += 3.0;  // shifted input

  // training pass: output is standardized per channel
  Mat train_out;
  {
    ad::Graph g;
    NetCtx ctx(g, ps, true);
    auto y = layers::bn(ctx, "bn", g.input(b.values), C, T);
    train_out = g.val(y);
    for (int c = 0; c < C; ++c) {
      double mean = 0;
      for (int i = 0; i < n; ++i)
        for (int t = 0; t < T; ++t) mean += train_out(i, c * T + t);
      mean /= n * T;
      CHECK(std::abs(mean) < 1e-9);
    }
    ctx.update_running_stats(1.0);  // adopt the batch stats outright
  }

  // eval pass with adopted stats reproduces the training normalization
  {
    ad::Graph g;
    NetCtx ctx(g, ps, false);
    auto y = layers::bn(ctx, "bn", g.input(b.values), C, T);
    const Mat& out = g.val(y);
    CHECK((out - train_out).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("vrnn elbo matches the closed form at zero weights", "[nets]") {
  EncoderSpec s;
  s.kind = EncoderKind::VRNN;
  s.channels = 2;
  s.steps = 6;
  s.latent_dim = 4;
  s.vr_feat = 3;
  s.vr_hidden = 4;
  s.vr_z = 3;
  ParamSet ps;
  auto rng = make_rng(7);
  init_encoder(ps, s, "enc", rng);
  zero_trainables(ps);

  auto b = gaussian_batch(3, 2, 6, 8);
  Mat noise = Mat::Zero(3, 3 * 6);

  ad::Graph g;
  NetCtx ctx(g, ps, true);
  auto out = apply_vrnn(ctx, s, "enc", b, noise);

  // zero weights: prior == posterior, so KL = 0; decoder emits N(0, sigma0) with
  // sigma0 = softplus(0) + 1e-4, so the NLL term is exact
  const double sigma0 = std::log(2.0) + 1e-4;
  double want = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int c = 0; c < 2; ++c)
      for (int t = 0; t < 6; ++t) {
        const double x = b.at(i, c, t);
        want += std::log(sigma0) + x * x / (2 * sigma0 * sigma0) +
                0.5 * std::log(2.0 * std::numbers::pi);
      }
  want /= 3;
  CHECK(std::abs(g.scalar(out.elbo) - want) < 1e-9);

  // all-zero input isolates the constant part
  TimeSeriesBatch zb = b;
  zb.values.setZero();
  ad::Graph g2;
  NetCtx ctx2(g2, ps, true);
  auto out2 = apply_vrnn(ctx2, s, "enc", zb, noise);
  const double konst = 6 * 2 * (std::log(sigma0) + 0.5 * std::log(2.0 * std::numbers::pi));
  CHECK(std::abs(g2.scalar(out2.elbo) - konst) < 1e-9);
}

TEST_CASE("frequency branch sees textbook spectra", "[nets]") {
  const int T = 16, B = freq_bins(T);
  auto dft = ad::DftMatrices::build(T);
  REQUIRE(dft.cos_m.rows() == B);
  REQUIRE(dft.cos_m.cols() == T);

  // pure cosine at bin 3: unnormalized magnitude T/2 there, ~0 elsewhere
  Mat x(1, T);
  for (int t = 0; t < T; ++t) x(0, t) = std::cos(2.0 * std::numbers::pi * 3 * t / T);
  Vec re = dft.cos_m * x.row(0).transpose();
  Vec im = -(dft.sin_m * x.row(0).transpose());
  for (int k = 0; k < B; ++k) {
    const double mag = std::hypot(re[k], im[k]);
    if (k == 3) CHECK(std::abs(mag - T / 2.0) < 1e-9);
    else CHECK(mag < 1e-9);
  }

  // DC component: constant c has magnitude c*T at bin 0
  Mat dc = Mat::Constant(1, T, 0.7);
  Vec re0 = dft.cos_m * dc.row(0).transpose();
  CHECK(std::abs(re0[0] - 0.7 * T) < 1e-9);
}

TEST_CASE("outer multilinear map is the flattened outer product", "[nets]") {
  Vec z(2), p(2);
  z << 1.0, 0.0;
  p << 0.5, 0.5;
  Vec m = multilinear_map(z, p, MultilinearMode::Outer);
  REQUIRE(m.size() == 4);
  CHECK(m[0] == 0.5);
  CHECK(m[1] == 0.5);
  CHECK(m[2] == 0.0);
  CHECK(m[3] == 0.0);

  // graph version agrees with the value version
  ad::Graph g;
  Mat zm(1, 2), pm(1, 2);
  zm << 0.3, -1.2;
  pm << 0.25, 0.75;
  auto o = multilinear_outer(g, g.input(zm), g.input(pm));
  Vec want = multilinear_map(zm.row(0).transpose(), pm.row(0).transpose(),
                             MultilinearMode::Outer);
  CHECK((g.val(o).row(0).transpose() - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("randomized multilinear map preserves inner products on average", "[nets]") {
  const int dz = 6, K = 3, d = 4096;
  auto rng = make_rng(9);
  Mat r1 = init::normal(dz, d, 1.0, rng);
  Mat r2 = init::normal(K, d, 1.0, rng);
  std::normal_distribution<double> nd;
  auto rv = [&](int k) {
    Vec v(k);
    for (int i = 0; i < k; ++i) v[i] = nd(rng);
    return v;
  };
  Vec z1 = rv(dz), z2 = rv(dz), p1 = rv(K), p2 = rv(K);
  Vec f1 = multilinear_map(z1, p1, MultilinearMode::Randomized, &r1, &r2);
  Vec f2 = multilinear_map(z2, p2, MultilinearMode::Randomized, &r1, &r2);
  const double got = f1.dot(f2);
  const double want = z1.dot(z2) * p1.dot(p2);
  CHECK(std::abs(got - want) < 0.05 * std::max(1.0, std::abs(want)) + 0.5);
}

TEST_CASE("heads produce probabilities of the right shape", "[nets]") {
  HeadSpec h;
  h.in_dim = 5;
  h.num_classes = 3;
  h.disc_in = 5;
  h.disc_hidden = 8;
  ParamSet ps;
  auto rng = make_rng(11);
  init_classifier(ps, h, "clf", rng);
  init_discriminator(ps, h, "disc", rng);

  Mat Z = init::normal(7, 5, 1.0, rng);
  Mat probs = classify(h, ps, Z);
  REQUIRE(probs.rows() == 7);
  REQUIRE(probs.cols() == 3);
  for (int i = 0; i < 7; ++i) CHECK(std::abs(probs.row(i).sum() - 1.0) < 1e-12);

  ad::Graph g;
  NetCtx ctx(g, ps, false);
  auto dp = discriminator_prob(ctx, "disc", g.input(Z));
  const Mat& d = g.val(dp);
  REQUIRE(d.rows() == 7);
  REQUIRE(d.cols() == 1);
  CHECK((d.array() > 0.0).all());
  CHECK((d.array() < 1.0).all());
}

TEST_CASE("inception kernels shrink with short inputs", "[nets]") {
  EncoderSpec s;
  s.kind = EncoderKind::Inception;
  s.steps = 16;
  auto ks = detail::inception_kernels(s);
  REQUIRE(ks.size() == 3);
  for (std::size_t i = 0; i < ks.size(); ++i) {
    CHECK(ks[i] >= 3);
    CHECK(ks[i] <= 16);
  }
  s.steps = 128;
  auto big = detail::inception_kernels(s);
  CHECK(big == std::vector<int>{10, 20, 40});
}
