#pragma once

#include "svclab/nn/tape.hpp"

#include <cmath>
#include <vector>

namespace svclab::nn {

template <typename Scalar>
class Adam {
 public:
  struct Options {
    Scalar lr = Scalar(1e-4);
    Scalar beta1 = Scalar(0.9);
    Scalar beta2 = Scalar(0.999);
    Scalar eps = Scalar(1e-8);
  };

  Adam() = default;
  explicit Adam(Options opt) : opt_(opt) {}

  void step(const ParamList<Scalar>& params) {
    if (m_.size() != params.size()) {
      m_.clear();
      v_.clear();
      for (auto* p : params) {
        m_.push_back(Mat<Scalar>::Zero(p->value.rows(), p->value.cols()));
        v_.push_back(Mat<Scalar>::Zero(p->value.rows(), p->value.cols()));
      }
    }
    ++t_;
    const Scalar c1 = Scalar(1) - std::pow(opt_.beta1, static_cast<Scalar>(t_));
    const Scalar c2 = Scalar(1) - std::pow(opt_.beta2, static_cast<Scalar>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto* p = params[i];
      if (p->frozen) continue;
      m_[i] = opt_.beta1 * m_[i] + (Scalar(1) - opt_.beta1) * p->grad;
      v_[i] = opt_.beta2 * v_[i] + (Scalar(1) - opt_.beta2) * p->grad.cwiseAbs2();
      p->value.array() -= opt_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + opt_.eps);
    }
  }

  long steps() const { return t_; }
  const Options& options() const { return opt_; }
  std::vector<Mat<Scalar>>& first_moments() { return m_; }
  std::vector<Mat<Scalar>>& second_moments() { return v_; }
  void set_steps(long t) { t_ = t; }

 private:
  Options opt_;
  long t_ = 0;
  std::vector<Mat<Scalar>> m_;
  std::vector<Mat<Scalar>> v_;
};

}  // namespace svclab::nn
