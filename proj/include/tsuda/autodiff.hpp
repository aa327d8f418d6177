// ============================================================================
// autodiff.hpp - define-by-run reverse-mode engine over Eigen matrices
//
// A Graph owns nodes created in forward order; node creation order is a valid
// topological order, so backward() just walks ids in reverse. Time series are
// carried as [n, C*T] matrices with channel-major column blocks.
// ============================================================================
#pragma once

#include "tsuda/common.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace tsuda::ad {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Graph {
 public:
  Var input(Mat v) {
    nodes_.push_back(Node{std::move(v), {}, nullptr});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }
  Var input(double v) { return input(Mat::Constant(1, 1, v)); }

  const Mat& val(Var x) const { return nodes_[check(x)].val; }
  const Mat& grad(Var x) const { return nodes_[check(x)].grad; }
  double scalar(Var x) const {
    const Mat& m = val(x);
    if (m.size() != 1) throw std::invalid_argument("scalar: node is not 1x1");
    return m(0, 0);
  }

  void backward(Var loss) {
    const int root = check(loss);
    if (nodes_[root].val.size() != 1)
      throw std::invalid_argument("backward: loss must be 1x1");
    for (auto& n : nodes_) n.grad = Mat::Zero(n.val.rows(), n.val.cols());
    nodes_[root].grad(0, 0) = 1.0;
    for (int i = root; i >= 0; --i)
      if (nodes_[i].back) nodes_[i].back(*this);
  }

  // ---- elementwise binary, second operand may broadcast ----
  Var add(Var a, Var b) { return binary(a, b, BinOp::Add); }
  Var sub(Var a, Var b) { return binary(a, b, BinOp::Sub); }
  Var mul(Var a, Var b) { return binary(a, b, BinOp::Mul); }
  Var div(Var a, Var b) { return binary(a, b, BinOp::Div); }

  Var scale(Var x, double c) {
    Mat v = nodes_[check(x)].val * c;
    return make(std::move(v), [xi = x.id, c](Graph& g) {
      g.nodes_[xi].grad.noalias() += c * g.top_grad();
    });
  }
  Var add_const(Var x, double c) {
    Mat v = nodes_[check(x)].val.array() + c;
    return make(std::move(v), [xi = x.id](Graph& g) {
      g.nodes_[xi].grad += g.top_grad();
    });
  }

  // ---- elementwise unary ----
  Var relu(Var x) {
    const Mat& in = nodes_[check(x)].val;
    Mat v = in.cwiseMax(0.0);
    return make(std::move(v), [xi = x.id, id = next_id()](Graph& g) {
      const Mat& in2 = g.nodes_[xi].val;
      g.nodes_[xi].grad.array() +=
          g.nodes_[id].grad.array() * (in2.array() > 0.0).cast<double>();
    });
  }
  Var sigmoid(Var x) {
    Mat v = (1.0 / (1.0 + (-nodes_[check(x)].val.array()).exp())).matrix();
    return make(std::move(v), [xi = x.id, id = next_id()](Graph& g) {
      const auto& y = g.nodes_[id].val.array();
      g.nodes_[xi].grad.array() += g.nodes_[id].grad.array() * y * (1.0 - y);
    });
  }
  Var tanh_(Var x) {
    Mat v = nodes_[check(x)].val.array().tanh();
    return make(std::move(v), [xi = x.id, id = next_id()](Graph& g) {
      const auto& y = g.nodes_[id].val.array();
      g.nodes_[xi].grad.array() += g.nodes_[id].grad.array() * (1.0 - y * y);
    });
  }
  Var exp_(Var x) {
    Mat v = nodes_[check(x)].val.array().exp();
    return make(std::move(v), [xi = x.id, id = next_id()](Graph& g) {
      g.nodes_[xi].grad.array() +=
          g.nodes_[id].grad.array() * g.nodes_[id].val.array();
    });
  }
  Var log_(Var x) {
    Mat v = nodes_[check(x)].val.array().log();
    return make(std::move(v), [xi = x.id](Graph& g) {
      g.nodes_[xi].grad.array() +=
          g.top_grad().array() / g.nodes_[xi].val.array();
    });
  }
  Var sqrt_(Var x) {
    Mat v = nodes_[check(x)].val.array().sqrt();
    return make(std::move(v), [xi = x.id, id = next_id()](Graph& g) {
      g.nodes_[xi].grad.array() +=
          g.nodes_[id].grad.array() * 0.5 / g.nodes_[id].val.array();
    });
  }
  Var square(Var x) {
    Mat v = nodes_[check(x)].val.array().square();
    return make(std::move(v), [xi = x.id](Graph& g) {
      g.nodes_[xi].grad.array() +=
          g.top_grad().array() * 2.0 * g.nodes_[xi].val.array();
    });
  }
  Var softplus(Var x) {
    const auto& a = nodes_[check(x)].val.array();
    Mat v = (a.max(0.0) + ((-a.abs()).exp() + 1.0).log()).matrix();
    return make(std::move(v), [xi = x.id](Graph& g) {
      const auto& in = g.nodes_[xi].val.array();
      g.nodes_[xi].grad.array() += g.top_grad().array() / (1.0 + (-in).exp());
    });
  }
  Var clamp_min(Var x, double lo) {
    Mat v = nodes_[check(x)].val.cwiseMax(lo);
    return make(std::move(v), [xi = x.id, lo](Graph& g) {
      g.nodes_[xi].grad.array() +=
          g.top_grad().array() *
          (g.nodes_[xi].val.array() > lo).cast<double>();
    });
  }
  Var clamp(Var x, double lo, double hi) {
    Mat v = nodes_[check(x)].val.cwiseMax(lo).cwiseMin(hi);
    return make(std::move(v), [xi = x.id, lo, hi](Graph& g) {
      const auto& in = g.nodes_[xi].val.array();
      g.nodes_[xi].grad.array() +=
          g.top_grad().array() *
          ((in > lo).cast<double>() * (in < hi).cast<double>());
    });
  }
  Var neg(Var x) { return scale(x, -1.0); }

  // ---- matrix ops ----
  Var matmul(Var a, Var b, bool ta = false, bool tb = false) {
    const Mat& A = nodes_[check(a)].val;
    const Mat& B = nodes_[check(b)].val;
    Mat v;
    if (!ta && !tb) v.noalias() = A * B;
    else if (ta && !tb) v.noalias() = A.transpose() * B;
    else if (!ta && tb) v.noalias() = A * B.transpose();
    else v.noalias() = A.transpose() * B.transpose();
    return make(std::move(v), [ai = a.id, bi = b.id, ta, tb](Graph& g) {
      const Mat& A2 = g.nodes_[ai].val;
      const Mat& B2 = g.nodes_[bi].val;
      const Mat& dC = g.top_grad();
      if (!ta && !tb) {
        g.nodes_[ai].grad.noalias() += dC * B2.transpose();
        g.nodes_[bi].grad.noalias() += A2.transpose() * dC;
      } else if (ta && !tb) {
        g.nodes_[ai].grad.noalias() += B2 * dC.transpose();
        g.nodes_[bi].grad.noalias() += A2 * dC;
      } else if (!ta && tb) {
        g.nodes_[ai].grad.noalias() += dC * B2;
        g.nodes_[bi].grad.noalias() += dC.transpose() * A2;
      } else {
        g.nodes_[ai].grad.noalias() += B2.transpose() * dC.transpose();
        g.nodes_[bi].grad.noalias() += dC.transpose() * A2.transpose();
      }
    });
  }
  Var transpose(Var x) {
    Mat v = nodes_[check(x)].val.transpose();
    return make(std::move(v), [xi = x.id](Graph& g) {
      g.nodes_[xi].grad += g.top_grad().transpose();
    });
  }
  Var concat_cols(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_cols: empty");
    const auto rows = nodes_[check(xs[0])].val.rows();
    Eigen::Index cols = 0;
    for (Var x : xs) {
      if (nodes_[check(x)].val.rows() != rows)
        throw std::invalid_argument("concat_cols: row mismatch");
      cols += nodes_[x.id].val.cols();
    }
    Mat v(rows, cols);
    Eigen::Index off = 0;
    std::vector<int> ids;
    std::vector<Eigen::Index> widths;
    for (Var x : xs) {
      const Mat& m = nodes_[x.id].val;
      v.middleCols(off, m.cols()) = m;
      ids.push_back(x.id);
      widths.push_back(m.cols());
      off += m.cols();
    }
    return make(std::move(v), [ids, widths](Graph& g) {
      const Mat& dY = g.top_grad();
      Eigen::Index o = 0;
      for (std::size_t k = 0; k < ids.size(); ++k) {
        g.nodes_[ids[k]].grad += dY.middleCols(o, widths[k]);
        o += widths[k];
      }
    });
  }
  Var concat_rows(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_rows: empty");
    const auto cols = nodes_[check(xs[0])].val.cols();
    Eigen::Index rows = 0;
    for (Var x : xs) {
      if (nodes_[check(x)].val.cols() != cols)
        throw std::invalid_argument("concat_rows: col mismatch");
      rows += nodes_[x.id].val.rows();
    }
    Mat v(rows, cols);
    Eigen::Index off = 0;
    std::vector<int> ids;
    std::vector<Eigen::Index> heights;
    for (Var x : xs) {
      const Mat& m = nodes_[x.id].val;
      v.middleRows(off, m.rows()) = m;
      ids.push_back(x.id);
      heights.push_back(m.rows());
      off += m.rows();
    }
    return make(std::move(v), [ids, heights](Graph& g) {
      const Mat& dY = g.top_grad();
      Eigen::Index o = 0;
      for (std::size_t k = 0; k < ids.size(); ++k) {
        g.nodes_[ids[k]].grad += dY.middleRows(o, heights[k]);
        o += heights[k];
      }
    });
  }
  Var slice_cols(Var x, Eigen::Index start, Eigen::Index len) {
    Mat v = nodes_[check(x)].val.middleCols(start, len);
    return make(std::move(v), [xi = x.id, start, len](Graph& g) {
      g.nodes_[xi].grad.middleCols(start, len) += g.top_grad();
    });
  }
  Var slice_rows(Var x, Eigen::Index start, Eigen::Index len) {
    Mat v = nodes_[check(x)].val.middleRows(start, len);
    return make(std::move(v), [xi = x.id, start, len](Graph& g) {
      g.nodes_[xi].grad.middleRows(start, len) += g.top_grad();
    });
  }
  Var select_cols(Var x, std::vector<int> cols) {
    const Mat& in = nodes_[check(x)].val;
    Mat v(in.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) v.col(k) = in.col(cols[k]);
    return make(std::move(v), [xi = x.id, cols](Graph& g) {
      const Mat& dY = g.top_grad();
      for (std::size_t k = 0; k < cols.size(); ++k)
        g.nodes_[xi].grad.col(cols[k]) += dY.col(k);
    });
  }
  // out(i,0) = x(i, idx[i])
  Var pick(Var x, std::vector<int> idx) {
    const Mat& in = nodes_[check(x)].val;
    if (static_cast<Eigen::Index>(idx.size()) != in.rows())
      throw std::invalid_argument("pick: index count mismatch");
    Mat v(in.rows(), 1);
    for (Eigen::Index i = 0; i < in.rows(); ++i) v(i, 0) = in(i, idx[i]);
    return make(std::move(v), [xi = x.id, idx](Graph& g) {
      const Mat& dY = g.top_grad();
      for (Eigen::Index i = 0; i < dY.rows(); ++i)
        g.nodes_[xi].grad(i, idx[i]) += dY(i, 0);
    });
  }

  // ---- reductions ----
  Var sum_all(Var x) {
    Mat v = Mat::Constant(1, 1, nodes_[check(x)].val.sum());
    return make(std::move(v), [xi = x.id](Graph& g) {
      g.nodes_[xi].grad.array() += g.top_grad()(0, 0);
    });
  }
  Var mean_all(Var x) {
    const double inv = 1.0 / static_cast<double>(nodes_[check(x)].val.size());
    return scale(sum_all(x), inv);
  }
  Var row_sum(Var x) {  // [R,C] -> [R,1]
    Mat v = nodes_[check(x)].val.rowwise().sum();
    return make(std::move(v), [xi = x.id](Graph& g) {
      g.nodes_[xi].grad.colwise() += Vec(g.top_grad().col(0));
    });
  }
  Var col_sum(Var x) {  // [R,C] -> [1,C]
    Mat v = nodes_[check(x)].val.colwise().sum();
    return make(std::move(v), [xi = x.id](Graph& g) {
      g.nodes_[xi].grad.rowwise() += Eigen::RowVectorXd(g.top_grad().row(0));
    });
  }

  // ---- softmax family (row-wise, numerically stable) ----
  Var softmax_rows(Var x) {
    const Mat& in = nodes_[check(x)].val;
    Mat v(in.rows(), in.cols());
    for (Eigen::Index i = 0; i < in.rows(); ++i) {
      const double m = in.row(i).maxCoeff();
      Eigen::RowVectorXd e = (in.row(i).array() - m).exp();
      v.row(i) = e / e.sum();
    }
    return make(std::move(v), [xi = x.id, id = next_id()](Graph& g) {
      const Mat& y = g.nodes_[id].val;
      const Mat& dY = g.nodes_[id].grad;
      Vec dot = (dY.array() * y.array()).rowwise().sum();
      g.nodes_[xi].grad.array() +=
          y.array() * (dY.array().colwise() - dot.array());
    });
  }
  Var log_softmax_rows(Var x) {
    const Mat& in = nodes_[check(x)].val;
    Mat v(in.rows(), in.cols());
    for (Eigen::Index i = 0; i < in.rows(); ++i) {
      const double m = in.row(i).maxCoeff();
      const double lse = m + std::log((in.row(i).array() - m).exp().sum());
      v.row(i) = in.row(i).array() - lse;
    }
    return make(std::move(v), [xi = x.id, id = next_id()](Graph& g) {
      const Mat& ls = g.nodes_[id].val;
      const Mat& dY = g.nodes_[id].grad;
      Vec rs = dY.rowwise().sum();
      g.nodes_[xi].grad.array() +=
          dY.array() - ls.array().exp().colwise() * rs.array();
    });
  }
  Var logsumexp_rows(Var x) {  // [R,C] -> [R,1]
    const Mat& in = nodes_[check(x)].val;
    Mat v(in.rows(), 1);
    for (Eigen::Index i = 0; i < in.rows(); ++i) {
      const double m = in.row(i).maxCoeff();
      v(i, 0) = m + std::log((in.row(i).array() - m).exp().sum());
    }
    return make(std::move(v), [xi = x.id, id = next_id()](Graph& g) {
      const Mat& in2 = g.nodes_[xi].val;
      const Mat& lse = g.nodes_[id].val;
      const Mat& dY = g.nodes_[id].grad;
      g.nodes_[xi].grad.array() +=
          (in2.array().colwise() - lse.col(0).array()).exp().colwise() *
          dY.col(0).array();
    });
  }

  // ---- gradient reversal ----
  Var grad_reverse(Var x, double lambda) {
    Mat v = nodes_[check(x)].val;
    return make(std::move(v), [xi = x.id, lambda](Graph& g) {
      g.nodes_[xi].grad.noalias() -= lambda * g.top_grad();
    });
  }

  // ---- time-series layers over [n, C*T] ----
  // weight [Cout, Cin*k], bias [1, Cout] or invalid Var for none
  Var conv1d_same(Var x, Var w, Var b, int Cin, int T, int k) {
    const Mat& X = nodes_[check(x)].val;
    const Mat& W = nodes_[check(w)].val;
    const int n = static_cast<int>(X.rows());
    const int Cout = static_cast<int>(W.rows());
    if (X.cols() != static_cast<Eigen::Index>(Cin) * T)
      throw std::invalid_argument("conv1d_same: input shape mismatch");
    if (W.cols() != static_cast<Eigen::Index>(Cin) * k)
      throw std::invalid_argument("conv1d_same: weight shape mismatch");
    const int pl = (k - 1) / 2;
    auto patches = std::make_shared<Mat>(Mat::Zero(static_cast<Eigen::Index>(n) * T,
                                                   static_cast<Eigen::Index>(Cin) * k));
    Mat& P = *patches;
    for (int i = 0; i < n; ++i)
      for (int t = 0; t < T; ++t) {
        const Eigen::Index r = static_cast<Eigen::Index>(i) * T + t;
        for (int j = 0; j < k; ++j) {
          const int s = t + j - pl;
          if (s < 0 || s >= T) continue;
          for (int ci = 0; ci < Cin; ++ci)
            P(r, static_cast<Eigen::Index>(ci) * k + j) =
                X(i, static_cast<Eigen::Index>(ci) * T + s);
        }
      }
    Mat out_col;
    out_col.noalias() = P * W.transpose();  // [n*T, Cout]
    if (b.valid()) out_col.rowwise() += Eigen::RowVectorXd(nodes_[check(b)].val.row(0));
    Mat v(n, static_cast<Eigen::Index>(Cout) * T);
    for (int i = 0; i < n; ++i)
      for (int co = 0; co < Cout; ++co)
        for (int t = 0; t < T; ++t)
          v(i, static_cast<Eigen::Index>(co) * T + t) =
              out_col(static_cast<Eigen::Index>(i) * T + t, co);
    return make(std::move(v), [xi = x.id, wi = w.id, bi = b.id, patches, Cin, T, k, n,
                               Cout, pl](Graph& g) {
      const Mat& dY = g.top_grad();
      Mat dOut(static_cast<Eigen::Index>(n) * T, Cout);
      for (int i = 0; i < n; ++i)
        for (int co = 0; co < Cout; ++co)
          for (int t = 0; t < T; ++t)
            dOut(static_cast<Eigen::Index>(i) * T + t, co) =
                dY(i, static_cast<Eigen::Index>(co) * T + t);
      g.nodes_[wi].grad.noalias() += dOut.transpose() * (*patches);
      if (bi >= 0) g.nodes_[bi].grad.row(0) += dOut.colwise().sum();
      Mat dP;
      dP.noalias() = dOut * g.nodes_[wi].val;  // [n*T, Cin*k]
      Mat& dX = g.nodes_[xi].grad;
      for (int i = 0; i < n; ++i)
        for (int t = 0; t < T; ++t) {
          const Eigen::Index r = static_cast<Eigen::Index>(i) * T + t;
          for (int j = 0; j < k; ++j) {
            const int s = t + j - pl;
            if (s < 0 || s >= T) continue;
            for (int ci = 0; ci < Cin; ++ci)
              dX(i, static_cast<Eigen::Index>(ci) * T + s) +=
                  dP(r, static_cast<Eigen::Index>(ci) * k + j);
          }
        }
    });
  }

  // Per-channel batch statistics over n*T entries. gamma/beta are [1, C].
  // Batch mean/var (population) are written to *out_mean / *out_var when given.
  Var batchnorm_ct(Var x, Var gamma, Var beta, int C, int T, double eps = 1e-5,
                   Vec* out_mean = nullptr, Vec* out_var = nullptr) {
    const Mat& X = nodes_[check(x)].val;
    const int n = static_cast<int>(X.rows());
    const double m = static_cast<double>(n) * T;
    Vec mu(C), var(C);
    for (int c = 0; c < C; ++c) {
      const auto block = X.middleCols(static_cast<Eigen::Index>(c) * T, T);
      mu[c] = block.sum() / m;
      var[c] = (block.array() - mu[c]).square().sum() / m;
    }
    if (out_mean) *out_mean = mu;
    if (out_var) *out_var = var;
    const Mat& G = nodes_[check(gamma)].val;
    const Mat& B = nodes_[check(beta)].val;
    Mat v(X.rows(), X.cols());
    auto xhat = std::make_shared<Mat>(X.rows(), X.cols());
    for (int c = 0; c < C; ++c) {
      const double inv = 1.0 / std::sqrt(var[c] + eps);
      auto hb = xhat->middleCols(static_cast<Eigen::Index>(c) * T, T);
      hb = (X.middleCols(static_cast<Eigen::Index>(c) * T, T).array() - mu[c]) * inv;
      v.middleCols(static_cast<Eigen::Index>(c) * T, T) =
          hb.array() * G(0, c) + B(0, c);
    }
    auto cached_var = std::make_shared<Vec>(var);
    return make(std::move(v), [xi = x.id, gi = gamma.id, bi = beta.id, xhat, cached_var,
                               C, T, eps, m](Graph& g) {
      const Mat& dY = g.top_grad();
      const Mat& G2 = g.nodes_[gi].val;
      for (int c = 0; c < C; ++c) {
        const auto H = xhat->middleCols(static_cast<Eigen::Index>(c) * T, T);
        const auto dYb = dY.middleCols(static_cast<Eigen::Index>(c) * T, T);
        const double dgamma = (dYb.array() * H.array()).sum();
        const double dbeta = dYb.sum();
        g.nodes_[gi].grad(0, c) += dgamma;
        g.nodes_[bi].grad(0, c) += dbeta;
        const double inv = 1.0 / std::sqrt((*cached_var)[c] + eps);
        // dx = (gamma*inv/m) * (m*dy - sum(dy) - xhat * sum(dy*xhat))
        g.nodes_[xi].grad.middleCols(static_cast<Eigen::Index>(c) * T, T).array() +=
            (G2(0, c) * inv / m) *
            (m * dYb.array() - dbeta - H.array() * dgamma);
      }
    });
  }

  // Normalization with fixed statistics (inference path).
  Var batchnorm_fixed(Var x, Var gamma, Var beta, const Vec& mu, const Vec& var, int C,
                      int T, double eps = 1e-5) {
    const Mat& X = nodes_[check(x)].val;
    const Mat& G = nodes_[check(gamma)].val;
    const Mat& B = nodes_[check(beta)].val;
    Mat v(X.rows(), X.cols());
    Vec inv(C);
    for (int c = 0; c < C; ++c) {
      inv[c] = 1.0 / std::sqrt(var[c] + eps);
      v.middleCols(static_cast<Eigen::Index>(c) * T, T) =
          ((X.middleCols(static_cast<Eigen::Index>(c) * T, T).array() - mu[c]) * inv[c]) *
              G(0, c) +
          B(0, c);
    }
    auto cached = std::make_shared<std::pair<Vec, Vec>>(mu, inv);
    return make(std::move(v), [xi = x.id, gi = gamma.id, bi = beta.id, cached, C,
                               T](Graph& g) {
      const Mat& dY = g.top_grad();
      const Mat& X2 = g.nodes_[xi].val;
      const Mat& G2 = g.nodes_[gi].val;
      for (int c = 0; c < C; ++c) {
        const auto dYb = dY.middleCols(static_cast<Eigen::Index>(c) * T, T);
        const auto Xb = X2.middleCols(static_cast<Eigen::Index>(c) * T, T);
        const double inv = cached->second[c];
        g.nodes_[gi].grad(0, c) +=
            (dYb.array() * ((Xb.array() - cached->first[c]) * inv)).sum();
        g.nodes_[bi].grad(0, c) += dYb.sum();
        g.nodes_[xi].grad.middleCols(static_cast<Eigen::Index>(c) * T, T).array() +=
            dYb.array() * (G2(0, c) * inv);
      }
    });
  }

  Var maxpool1d_same(Var x, int C, int T, int k) {
    const Mat& X = nodes_[check(x)].val;
    const int n = static_cast<int>(X.rows());
    const int pl = (k - 1) / 2;
    Mat v(X.rows(), X.cols());
    auto arg = std::make_shared<std::vector<int>>(static_cast<std::size_t>(n) * C * T);
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < C; ++c)
        for (int t = 0; t < T; ++t) {
          double best = -std::numeric_limits<double>::infinity();
          int best_s = t;
          for (int j = 0; j < k; ++j) {
            const int s = t + j - pl;
            if (s < 0 || s >= T) continue;
            const double val = X(i, static_cast<Eigen::Index>(c) * T + s);
            if (val > best) {
              best = val;
              best_s = s;
            }
          }
          v(i, static_cast<Eigen::Index>(c) * T + t) = best;
          (*arg)[(static_cast<std::size_t>(i) * C + c) * T + t] = best_s;
        }
    return make(std::move(v), [xi = x.id, arg, C, T, n](Graph& g) {
      const Mat& dY = g.top_grad();
      for (int i = 0; i < n; ++i)
        for (int c = 0; c < C; ++c)
          for (int t = 0; t < T; ++t) {
            const int s = (*arg)[(static_cast<std::size_t>(i) * C + c) * T + t];
            g.nodes_[xi].grad(i, static_cast<Eigen::Index>(c) * T + s) +=
                dY(i, static_cast<Eigen::Index>(c) * T + t);
          }
    });
  }

  Var global_avg_pool(Var x, int C, int T) {  // [n, C*T] -> [n, C]
    const Mat& X = nodes_[check(x)].val;
    Mat v(X.rows(), C);
    for (int c = 0; c < C; ++c)
      v.col(c) = X.middleCols(static_cast<Eigen::Index>(c) * T, T).rowwise().mean();
    return make(std::move(v), [xi = x.id, C, T](Graph& g) {
      const Mat& dY = g.top_grad();
      for (int c = 0; c < C; ++c)
        g.nodes_[xi].grad.middleCols(static_cast<Eigen::Index>(c) * T, T).colwise() +=
            Vec(dY.col(c)) / static_cast<double>(T);
    });
  }

  // ---- geometry / complex helpers ----
  Var pairwise_sqdist(Var x, Var y) {  // [n,d],[m,d] -> [n,m]
    const Mat& X = nodes_[check(x)].val;
    const Mat& Y = nodes_[check(y)].val;
    if (X.cols() != Y.cols()) throw std::invalid_argument("pairwise_sqdist: dim mismatch");
    Vec xs = X.rowwise().squaredNorm();
    Vec ys = Y.rowwise().squaredNorm();
    Mat v = (-2.0 * X * Y.transpose());
    v.colwise() += xs;
    v.rowwise() += Eigen::RowVectorXd(ys);
    v = v.cwiseMax(0.0);
    return make(std::move(v), [xi = x.id, yi = y.id](Graph& g) {
      const Mat& dD = g.top_grad();
      const Mat& X2 = g.nodes_[xi].val;
      const Mat& Y2 = g.nodes_[yi].val;
      Vec rs = dD.rowwise().sum();
      Vec cs = dD.colwise().sum();
      g.nodes_[xi].grad.noalias() += 2.0 * (rs.asDiagonal() * X2 - dD * Y2);
      g.nodes_[yi].grad.noalias() +=
          2.0 * (cs.asDiagonal() * Y2 - dD.transpose() * X2);
    });
  }
  Var magnitude(Var re, Var im, double eps = 1e-12) {
    const Mat& R = nodes_[check(re)].val;
    const Mat& I = nodes_[check(im)].val;
    Mat v = (R.array().square() + I.array().square() + eps * eps).sqrt();
    return make(std::move(v), [ri = re.id, ii = im.id, id = next_id()](Graph& g) {
      const Mat& M = g.nodes_[id].val;
      const Mat& dY = g.nodes_[id].grad;
      g.nodes_[ri].grad.array() +=
          dY.array() * g.nodes_[ri].val.array() / M.array();
      g.nodes_[ii].grad.array() +=
          dY.array() * g.nodes_[ii].val.array() / M.array();
    });
  }
  Var atan2_(Var y, Var x, double eps = 1e-12) {
    const Mat& Y = nodes_[check(y)].val;
    const Mat& X = nodes_[check(x)].val;
    Mat v(Y.rows(), Y.cols());
    for (Eigen::Index i = 0; i < Y.size(); ++i)
      v(i) = std::atan2(Y(i), X(i));
    return make(std::move(v), [yi = y.id, xi = x.id, eps](Graph& g) {
      const Mat& dY = g.top_grad();
      const auto& Yv = g.nodes_[yi].val.array();
      const auto& Xv = g.nodes_[xi].val.array();
      Eigen::ArrayXXd denom = Xv.square() + Yv.square() + eps;
      g.nodes_[yi].grad.array() += dY.array() * Xv / denom;
      g.nodes_[xi].grad.array() -= dY.array() * Yv / denom;
    });
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  enum class BinOp { Add, Sub, Mul, Div };
  enum class Bcast { Same, Row, Col, Scalar };

  struct Node {
    Mat val;
    Mat grad;
    std::function<void(Graph&)> back;
  };

  std::vector<Node> nodes_;
  int pending_id_ = -1;  // id the node being built will get

  int check(Var v) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
      throw std::invalid_argument("invalid Var");
    return v.id;
  }
  int next_id() const { return static_cast<int>(nodes_.size()); }
  // Gradient of the node whose backward closure is currently running.
  const Mat& top_grad() const { return nodes_[running_id_].grad; }
  int running_id_ = -1;

  Var make(Mat v, std::function<void(Graph&)> back) {
    const int id = next_id();
    auto wrapped = [id, fn = std::move(back)](Graph& g) {
      const int prev = g.running_id_;
      g.running_id_ = id;
      fn(g);
      g.running_id_ = prev;
    };
    nodes_.push_back(Node{std::move(v), {}, std::move(wrapped)});
    return Var{id};
  }

  static Bcast bcast_kind(const Mat& a, const Mat& b) {
    if (a.rows() == b.rows() && a.cols() == b.cols()) return Bcast::Same;
    if (b.rows() == 1 && b.cols() == a.cols()) return Bcast::Row;
    if (b.cols() == 1 && b.rows() == a.rows()) return Bcast::Col;
    if (b.size() == 1) return Bcast::Scalar;
    throw std::invalid_argument("binary op: incompatible shapes");
  }

  static Mat expand(const Mat& b, Bcast k, Eigen::Index rows, Eigen::Index cols) {
    switch (k) {
      case Bcast::Same: return b;
      case Bcast::Row: return b.replicate(rows, 1);
      case Bcast::Col: return b.replicate(1, cols);
      case Bcast::Scalar: return Mat::Constant(rows, cols, b(0, 0));
    }
    throw std::logic_error("expand");
  }

  static Mat reduce(const Mat& g, Bcast k) {
    switch (k) {
      case Bcast::Same: return g;
      case Bcast::Row: return g.colwise().sum();
      case Bcast::Col: return g.rowwise().sum();
      case Bcast::Scalar: return Mat::Constant(1, 1, g.sum());
    }
    throw std::logic_error("reduce");
  }

  Var binary(Var a, Var b, BinOp op) {
    const Mat& A = nodes_[check(a)].val;
    const Mat& B = nodes_[check(b)].val;
    const Bcast k = bcast_kind(A, B);
    Mat Bx = expand(B, k, A.rows(), A.cols());
    Mat v;
    switch (op) {
      case BinOp::Add: v = A + Bx; break;
      case BinOp::Sub: v = A - Bx; break;
      case BinOp::Mul: v = A.cwiseProduct(Bx); break;
      case BinOp::Div: v = A.cwiseQuotient(Bx); break;
    }
    return make(std::move(v), [ai = a.id, bi = b.id, op, k](Graph& g) {
      const Mat& dY = g.top_grad();
      const Mat& A2 = g.nodes_[ai].val;
      const Mat& B2 = g.nodes_[bi].val;
      Mat Bx2 = expand(B2, k, A2.rows(), A2.cols());
      switch (op) {
        case BinOp::Add:
          g.nodes_[ai].grad += dY;
          g.nodes_[bi].grad += reduce(dY, k);
          break;
        case BinOp::Sub:
          g.nodes_[ai].grad += dY;
          g.nodes_[bi].grad -= reduce(dY, k);
          break;
        case BinOp::Mul:
          g.nodes_[ai].grad.array() += dY.array() * Bx2.array();
          g.nodes_[bi].grad += reduce(dY.cwiseProduct(A2), k);
          break;
        case BinOp::Div:
          g.nodes_[ai].grad.array() += dY.array() / Bx2.array();
          g.nodes_[bi].grad -= reduce(
              (dY.array() * A2.array() / Bx2.array().square()).matrix(), k);
          break;
      }
    });
  }
};

// Constant DFT matrices for a real FFT realized as two matmuls:
// Re = X * cos_m().transpose(), Im = -(X * sin_m().transpose())
// for X holding one channel per row block of length T; bins 0..T/2.
struct DftMatrices {
  Mat cos_m;  // [B, T], B = T/2 + 1
  Mat sin_m;
  static DftMatrices build(int T) {
    const int B = T / 2 + 1;
    DftMatrices d;
    d.cos_m = Mat(B, T);
    d.sin_m = Mat(B, T);
    for (int f = 0; f < B; ++f)
      for (int t = 0; t < T; ++t) {
        const double ang = 2.0 * std::numbers::pi * f * t / T;
        d.cos_m(f, t) = std::cos(ang);
        d.sin_m(f, t) = std::sin(ang);
      }
    return d;
  }
};

}  // namespace tsuda::ad
