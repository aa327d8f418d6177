// ============================================================================
// sinkhorn.hpp - debiased entropic optimal-transport divergence
//
//   S_eps(a, b) = OT_eps(a, b) - OT_eps(a, a)/2 - OT_eps(b, b)/2
//
// with squared-Euclidean cost and uniform weights. Potentials come from
// damped Jacobi log-domain updates, f <- (f + T(g))/2 and g <- (g + T~(f))/2
// computed from the previous iterates, which makes the divergence symmetric
// in its arguments by construction and lets the self terms cancel the cross
// term exactly on identical clouds. The divergence is the dual value
// <a,f> + <b,g>. Gradients flow through the unrolled iterations; iteration
// counts are fixed up front by a value-space pass so the graph shape never
// depends on the perturbation being differentiated.
// ============================================================================
#pragma once

#include "tsuda/autodiff.hpp"

namespace tsuda {

struct SinkhornOptions {
  double eps = 0.05;
  int max_iters = 200;
  double tol = 1e-6;
};

struct SinkhornPlan {
  int cross_iters = 0;
  int self_iters_a = 0;
  int self_iters_b = 0;
  bool converged = true;
  double violation = 0.0;  // final row-marginal violation of the cross problem
};

namespace detail_sk {

inline Vec lse_rows(const Mat& M) {
  Vec out(M.rows());
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    const double mx = M.row(i).maxCoeff();
    out[i] = mx + std::log((M.row(i).array() - mx).exp().sum());
  }
  return out;
}

// damped Jacobi update from the previous (f, g); returns the row-marginal
// violation of the transport plan implied by the updated potentials
inline double jacobi_update(const Mat& C, double eps, Vec& f, Vec& g) {
  const auto n = C.rows(), m = C.cols();
  const double logb = -std::log(static_cast<double>(m));
  const double loga = -std::log(static_cast<double>(n));
  Mat A = (-C) / eps;
  A.rowwise() += Eigen::RowVectorXd(g.transpose()) / eps;
  A.array() += logb;
  Vec f_new = 0.5 * (f - eps * lse_rows(A));
  Mat B = (-C).transpose() / eps;
  B.rowwise() += Eigen::RowVectorXd(f.transpose()) / eps;
  B.array() += loga;
  Vec g_new = 0.5 * (g - eps * lse_rows(B));
  f = f_new;
  g = g_new;
  // P_ij = a_i b_j exp((f_i + g_j - C_ij)/eps); row marginals should equal a
  double viol = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < m; ++j)
      s += std::exp((f[i] + g[j] - C(i, j)) / eps) / (static_cast<double>(n) * m);
    viol += std::abs(s - 1.0 / n);
  }
  return viol;
}

inline Mat sqdist(const Mat& X, const Mat& Y) {
  Mat D = -2.0 * X * Y.transpose();
  D.colwise() += Vec(X.rowwise().squaredNorm());
  D.rowwise() += Eigen::RowVectorXd(Y.rowwise().squaredNorm());
  return Mat(D.cwiseMax(0.0));
}

inline int run_problem(const Mat& C, const SinkhornOptions& o, double* out_viol) {
  Vec f = Vec::Zero(C.rows()), g = Vec::Zero(C.cols());
  double viol = std::numeric_limits<double>::infinity();
  int it = 0;
  while (it < o.max_iters) {
    viol = jacobi_update(C, o.eps, f, g);
    ++it;
    if (viol < o.tol) break;
  }
  if (out_viol) *out_viol = viol;
  return it;
}

}  // namespace detail_sk

// Value-space pass: fixes iteration counts and reports convergence.
inline SinkhornPlan sinkhorn_plan(const Mat& Zs, const Mat& Zt, const SinkhornOptions& o) {
  Mat Cab = detail_sk::sqdist(Zs, Zt);
  Mat Caa = detail_sk::sqdist(Zs, Zs);
  Mat Cbb = detail_sk::sqdist(Zt, Zt);
  if (!Cab.allFinite() || !Caa.allFinite() || !Cbb.allFinite())
    throw std::runtime_error("sinkhorn: NaN in cost matrix");
  SinkhornPlan plan;
  double v = 0;
  plan.cross_iters = detail_sk::run_problem(Cab, o, &v);
  plan.violation = v;
  if (v >= o.tol) plan.converged = false;
  plan.self_iters_a = detail_sk::run_problem(Caa, o, &v);
  if (v >= o.tol) plan.converged = false;
  plan.self_iters_b = detail_sk::run_problem(Cbb, o, &v);
  if (v >= o.tol) plan.converged = false;
  return plan;
}

// Graph construction with a fixed, pre-planned iteration count. The self
// terms reuse the cross update on (X, X); potentials stay equal by symmetry.
inline ad::Var sinkhorn_divergence_graph(ad::Graph& g, ad::Var Zs, ad::Var Zt,
                                         const SinkhornOptions& o,
                                         const SinkhornPlan& plan) {
  const double eps = o.eps;

  auto dual_value = [&](ad::Var X, ad::Var Y, int iters) {
    const int nn = static_cast<int>(g.val(X).rows());
    const int mm = static_cast<int>(g.val(Y).rows());
    ad::Var C = g.pairwise_sqdist(X, Y);
    ad::Var negC = g.scale(C, -1.0 / eps);
    ad::Var negCT = g.transpose(negC);
    ad::Var f = g.input(Mat::Zero(nn, 1));
    ad::Var gg = g.input(Mat::Zero(mm, 1));
    const double logb = -std::log(static_cast<double>(mm));
    const double loga = -std::log(static_cast<double>(nn));
    for (int it = 0; it < iters; ++it) {
      ad::Var A = g.add_const(g.add(negC, g.transpose(g.scale(gg, 1.0 / eps))), logb);
      ad::Var f_new =
          g.scale(g.add(f, g.scale(g.logsumexp_rows(A), -eps)), 0.5);
      ad::Var B = g.add_const(g.add(negCT, g.transpose(g.scale(f, 1.0 / eps))), loga);
      ad::Var g_new =
          g.scale(g.add(gg, g.scale(g.logsumexp_rows(B), -eps)), 0.5);
      f = f_new;
      gg = g_new;
    }
    // <a,f> + <b,g> with uniform weights
    return g.add(g.mean_all(f), g.mean_all(gg));
  };

  ad::Var ab = dual_value(Zs, Zt, plan.cross_iters);
  ad::Var aa = dual_value(Zs, Zs, plan.self_iters_a);
  ad::Var bb = dual_value(Zt, Zt, plan.self_iters_b);
  return g.sub(ab, g.scale(g.add(aa, bb), 0.5));
}

struct SinkhornValue {
  double value = 0.0;
  bool converged = true;
  double violation = 0.0;
};

inline SinkhornValue sinkhorn_divergence(const Mat& Zs, const Mat& Zt,
                                         const SinkhornOptions& o = {}) {
  if (Zs.rows() == 0 || Zt.rows() == 0)
    throw std::invalid_argument("sinkhorn: empty point set");
  if (o.eps <= 0.0) throw std::invalid_argument("sinkhorn: eps must be positive");
  SinkhornPlan plan = sinkhorn_plan(Zs, Zt, o);
  ad::Graph g;
  ad::Var zs = g.input(Zs);
  ad::Var zt = g.input(Zt);
  ad::Var s = sinkhorn_divergence_graph(g, zs, zt, o, plan);
  return SinkhornValue{g.scalar(s), plan.converged, plan.violation};
}

}  // namespace tsuda
