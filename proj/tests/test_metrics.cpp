#include <catch2/catch_amalgamated.hpp>

#include "tsuda/metrics.hpp"

using namespace tsuda;

TEST_CASE("accuracy and macro f1 match the confusion matrix", "[metrics]") {
  std::vector<int> y_pred = {1, 0, 0, 0};
  std::vector<int> y_true = {1, 1, 0, 0};
  CHECK(accuracy(y_pred, y_true) == 0.75);
  // class 0: p=2/3, r=1 -> f1=0.8; class 1: p=1, r=1/2 -> f1=2/3
  CHECK(std::abs(macro_f1(y_pred, y_true, 2) - (0.8 + 2.0 / 3.0) / 2.0) < 1e-12);

  // a class absent from both truth and prediction scores zero, not skip
  CHECK(std::abs(macro_f1(y_pred, y_true, 3) - (0.8 + 2.0 / 3.0) / 3.0) < 1e-12);

  CHECK(accuracy({0, 1}, {0, 1}) == 1.0);
  CHECK_THROWS_AS(accuracy({0, 1}, {0}), std::invalid_argument);
}

TEST_CASE("argmax rows break ties toward the first class", "[metrics]") {
  Mat p(2, 3);
  p << 0.2, 0.5, 0.3, 0.4, 0.4, 0.2;
  auto y = argmax_rows(p);
  CHECK(y == std::vector<int>{1, 0});
}

TEST_CASE("shift proxy oracles", "[metrics]") {
  CHECK(shift_proxy(0.9, 0.45) == 0.5);
  CHECK(std::abs(shift_proxy(0.8, 0.6) - 0.25) < 1e-12);
  CHECK(shift_proxy(0.7, 0.7) == 0.0);
  CHECK_THROWS_AS(shift_proxy(0.0, 0.5), std::invalid_argument);
}

TEST_CASE("imbalance score is normalized label entropy", "[metrics]") {
  CHECK(std::abs(imbalance_score({0, 1, 0, 1}, 2).value - 1.0) < 1e-9);
  CHECK(!imbalance_score({0, 1, 0, 1}, 2).highly_imbalanced);

  std::vector<int> skew(10, 0);
  skew[9] = 1;
  auto s = imbalance_score(skew, 2);
  const double want = -(0.9 * std::log(0.9) + 0.1 * std::log(0.1)) / std::log(2.0);
  CHECK(std::abs(s.value - want) < 1e-12);
  CHECK(std::abs(s.value - 0.4690) < 1e-3);
  CHECK(s.highly_imbalanced);

  CHECK(imbalance_score({1, 1, 1}, 2).value == 0.0);
  CHECK_THROWS_AS(imbalance_score({0, 0}, 1), std::invalid_argument);
}

TEST_CASE("average ranks use midranks with rank one as best", "[metrics]") {
  ScoreMatrix sm;
  sm.entries = Mat(3, 2);
  sm.entries << 0.9, 0.8, 0.8, 0.9, 0.1, 0.1;
  auto r = average_ranks(sm);
  CHECK(r == std::vector<double>{1.5, 1.5, 3.0});

  ScoreMatrix missing = sm;
  missing.entries(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(average_ranks(missing), std::invalid_argument);
}

TEST_CASE("midranks match a brute-force ranking on random matrices", "[metrics]") {
  auto rng = make_rng(23);
  for (int rep = 0; rep < 100; ++rep) {
    const int k = 2 + static_cast<int>(rng() % 5);
    const int N = 1 + static_cast<int>(rng() % 6);
    ScoreMatrix sm;
    sm.entries = Mat(k, N);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < N; ++j)
        sm.entries(i, j) = static_cast<double>(rng() % 4);  // many ties

    auto got = average_ranks(sm);

    // brute force: rank of i in column j is 1 + #better + (#tied - 1) / 2
    std::vector<double> want(k, 0.0);
    for (int j = 0; j < N; ++j)
      for (int i = 0; i < k; ++i) {
        int better = 0, tied = 0;
        for (int l = 0; l < k; ++l) {
          if (sm.entries(l, j) > sm.entries(i, j)) ++better;
          if (sm.entries(l, j) == sm.entries(i, j)) ++tied;
        }
        want[i] += 1.0 + better + (tied - 1) / 2.0;
      }
    for (auto& w : want) w /= N;
    for (int i = 0; i < k; ++i) CHECK(std::abs(got[i] - want[i]) < 1e-12);
  }
}

TEST_CASE("friedman test matches the perfect-ordering closed form", "[metrics]") {
  ScoreMatrix sm;
  sm.entries = Mat(3, 4);
  sm.entries << 3, 3, 3, 3, 2, 2, 2, 2, 1, 1, 1, 1;
  auto f = friedman_test(sm);
  CHECK(std::abs(f.statistic - 8.0) < 1e-9);
  CHECK(std::abs(f.p_value - std::exp(-4.0)) < 1e-9);  // chi2(2): p = exp(-x/2)
  CHECK(std::abs(f.p_value - 0.0183) < 1e-3);
  CHECK(f.average_ranks == std::vector<double>{1.0, 2.0, 3.0});

  ScoreMatrix same;
  same.entries = Mat::Constant(3, 4, 0.5);
  auto f0 = friedman_test(same);
  CHECK(f0.statistic == 0.0);
  CHECK(f0.p_value == 1.0);

  // invariant under per-column monotone transforms
  ScoreMatrix tr = sm;
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 3; ++i) tr.entries(i, j) = std::exp(sm.entries(i, j)) * (j + 1);
  CHECK(std::abs(friedman_test(tr).statistic - f.statistic) < 1e-12);

  ScoreMatrix two;
  two.entries = Mat::Ones(2, 4);
  CHECK_THROWS_AS(friedman_test(two), std::invalid_argument);
  ScoreMatrix one_col;
  one_col.entries = Mat::Ones(3, 1);
  CHECK_THROWS_AS(friedman_test(one_col), std::invalid_argument);
}

TEST_CASE("wilcoxon exact oracles", "[metrics]") {
  // constant positive shift, n=6: two-sided p = 2 / 2^6
  std::vector<double> b = {1, 2, 3, 4, 5, 6};
  std::vector<double> a = {2, 3, 4, 5, 6, 7};
  auto w = wilcoxon_signed_rank(a, b);
  CHECK(w.p_value == 0.03125);
  CHECK(w.wins == 6);
  CHECK(w.losses == 0);

  // n=12 constant shift: 2 / 2^12
  std::vector<double> aa, bb;
  for (int i = 1; i <= 12; ++i) {
    bb.push_back(i);
    aa.push_back(i + 1);
  }
  CHECK(std::abs(wilcoxon_signed_rank(aa, bb).p_value - 2.0 / 4096.0) < 1e-12);

  // all ties: p = 1 by convention
  auto we = wilcoxon_signed_rank(b, b);
  CHECK(we.p_value == 1.0);
  CHECK(we.ties == 6);

  // too few informative pairs is an error, not a silent answer
  CHECK_THROWS_AS(wilcoxon_signed_rank({1, 2, 3}, {2, 3, 4}), std::invalid_argument);
  std::vector<double> mostly_tied = {1, 2, 3, 4, 5, 6};
  std::vector<double> two_moved = {1, 2, 3, 4, 6, 7};
  CHECK_THROWS_AS(wilcoxon_signed_rank(two_moved, mostly_tied), std::invalid_argument);
}

TEST_CASE("wilcoxon normal branch tracks an exact enumeration", "[metrics]") {
  // n=26 forces the normal path; distinct magnitudes keep ranks integral
  const int n = 26;
  std::vector<double> x(n), y(n, 0.0);
  auto rng = make_rng(29);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  for (int i = 0; i < n; ++i) {
    const double mag = u(rng) + i * 2.0;  // strictly increasing magnitudes
    x[i] = (rng() % 3 == 0) ? -mag : mag;
  }
  auto got = wilcoxon_signed_rank(x, y);

  // exact reference: enumerate the signed-rank distribution over ranks 1..n
  double w_plus = 0;
  {
    std::vector<std::pair<double, int>> order;
    for (int i = 0; i < n; ++i) order.emplace_back(std::abs(x[i]), i);
    std::sort(order.begin(), order.end());
    for (int r = 0; r < n; ++r)
      if (x[order[r].second] > 0) w_plus += r + 1;
  }
  const long long total = static_cast<long long>(n) * (n + 1) / 2;
  std::vector<double> count(total + 1, 0.0);
  count[0] = 1.0;
  for (int r = 1; r <= n; ++r)
    for (long long s = total; s >= r; --s) count[s] += count[s - r];
  const double mu = total / 2.0;
  const double dev = std::abs(w_plus - mu);
  double mass = 0, all = 0;
  for (long long s = 0; s <= total; ++s) {
    all += count[s];
    if (std::abs(s - mu) >= dev - 1e-9) mass += count[s];
  }
  const double exact = mass / all;

  CHECK(std::abs(got.p_value - exact) < 0.01);
}

TEST_CASE("cd diagram data orders by rank and roundtrips", "[metrics]") {
  auto cd = cd_diagram_data({2.1, 1.3, 2.6}, {"a", "b", "c"});
  REQUIRE(cd.ordered.size() == 3);
  CHECK(cd.ordered[0].first == "b");
  CHECK(cd.ordered[1].first == "a");
  CHECK(cd.ordered[2].first == "c");
  CHECK(cd.axis_lo == 1.0);
  CHECK(cd.axis_hi == 3.0);

  nlohmann::json j = cd;
  auto back = j.get<CdDiagramData>();
  CHECK(back.ordered == cd.ordered);
  CHECK(back.axis_lo == cd.axis_lo);
  CHECK(back.axis_hi == cd.axis_hi);

  // stable order under rank ties
  auto tied = cd_diagram_data({2.0, 1.0, 2.0}, {"x", "y", "z"});
  CHECK(tied.ordered[0].first == "y");
  CHECK(tied.ordered[1].first == "x");
  CHECK(tied.ordered[2].first == "z");

  CHECK_THROWS_AS(cd_diagram_data({1.0, 2.0}, {"only"}), std::invalid_argument);
}
