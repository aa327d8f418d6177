// ============================================================================
// optimizer.hpp - Adam over a ParamSet
// ============================================================================
#pragma once

#include "tsuda/nets.hpp"

namespace tsuda {

class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamSet& ps) {
    if (m_.empty()) {
      m_.resize(ps.entries.size());
      v_.resize(ps.entries.size());
      for (std::size_t i = 0; i < ps.entries.size(); ++i) {
        m_[i] = Mat::Zero(ps.entries[i].value.rows(), ps.entries[i].value.cols());
        v_[i] = m_[i];
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < ps.entries.size(); ++i) {
      auto& e = ps.entries[i];
      if (!e.trainable) continue;
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * e.grad;
      v_[i] = (beta2_ * v_[i].array() + (1.0 - beta2_) * e.grad.array().square()).matrix();
      e.value.array() -=
          lr_ * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + eps_);
    }
  }

  double lr() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Mat> m_, v_;
};

}  // namespace tsuda
