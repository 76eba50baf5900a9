#pragma once

#include "svclab/nn/ops.hpp"

#include <random>
#include <string>

namespace svclab::nn {

template <typename Scalar>
Mat<Scalar> uniform_init(Index rows, Index cols, Scalar bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-static_cast<double>(bound),
                                              static_cast<double>(bound));
  Mat<Scalar> m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = static_cast<Scalar>(dist(rng));
  return m;
}

template <typename Scalar>
struct Linear {
  Param<Scalar> weight;
  Param<Scalar> bias;

  Linear() = default;
  Linear(const std::string& name, Index in, Index out, std::mt19937_64& rng) {
    const Scalar bound = std::sqrt(Scalar(6) / static_cast<Scalar>(in + out));
    weight = Param<Scalar>(name + ".weight", uniform_init<Scalar>(out, in, bound, rng));
    bias = Param<Scalar>(name + ".bias", Mat<Scalar>::Zero(1, out));
  }

  Var operator()(Tape<Scalar>& tape, Var x) {
    return affine(tape, x, tape.param(weight), tape.param(bias));
  }

  void collect(ParamList<Scalar>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

template <typename Scalar>
struct Conv1d {
  Param<Scalar> weight;
  Param<Scalar> bias;
  Index kernel = 1;

  Conv1d() = default;
  Conv1d(const std::string& name, Index in, Index out, Index k, std::mt19937_64& rng)
      : kernel(k) {
    // Glorot bound with fan-in/out counted over all taps.
    const Scalar bound = std::sqrt(Scalar(6) / static_cast<Scalar>((in + out) * k));
    weight = Param<Scalar>(name + ".weight", uniform_init<Scalar>(out, in * k, bound, rng));
    bias = Param<Scalar>(name + ".bias", Mat<Scalar>::Zero(1, out));
  }

  Var operator()(Tape<Scalar>& tape, Var x) {
    return conv1d(tape, x, tape.param(weight), tape.param(bias), kernel);
  }

  void collect(ParamList<Scalar>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

template <typename Scalar>
struct LSTMLayer {
  Param<Scalar> w_ih;
  Param<Scalar> w_hh;
  Param<Scalar> bias;
  bool reverse = false;

  LSTMLayer() = default;
  LSTMLayer(const std::string& name, Index in, Index hidden, bool rev, std::mt19937_64& rng)
      : reverse(rev) {
    const Scalar bound = Scalar(1) / std::sqrt(static_cast<Scalar>(hidden));
    w_ih = Param<Scalar>(name + ".w_ih", uniform_init<Scalar>(4 * hidden, in, bound, rng));
    w_hh = Param<Scalar>(name + ".w_hh", uniform_init<Scalar>(4 * hidden, hidden, bound, rng));
    Mat<Scalar> b = Mat<Scalar>::Zero(1, 4 * hidden);
    b.middleCols(hidden, hidden).setOnes();  // forget-gate bias
    bias = Param<Scalar>(name + ".bias", b);
  }

  Index hidden() const { return w_hh.value.cols(); }

  Var operator()(Tape<Scalar>& tape, Var x) {
    return lstm(tape, x, tape.param(w_ih), tape.param(w_hh), tape.param(bias), reverse);
  }

  void collect(ParamList<Scalar>& out) {
    out.push_back(&w_ih);
    out.push_back(&w_hh);
    out.push_back(&bias);
  }
};

/// Forward and backward LSTMs over the same input; output keeps the two
/// directions as separate nodes so callers can sample them independently.
template <typename Scalar>
struct BiLSTMLayer {
  LSTMLayer<Scalar> fwd;
  LSTMLayer<Scalar> bwd;

  BiLSTMLayer() = default;
  BiLSTMLayer(const std::string& name, Index in, Index hidden, std::mt19937_64& rng)
      : fwd(name + ".fwd", in, hidden, false, rng), bwd(name + ".bwd", in, hidden, true, rng) {}

  std::pair<Var, Var> operator()(Tape<Scalar>& tape, Var x) { return {fwd(tape, x), bwd(tape, x)}; }

  void collect(ParamList<Scalar>& out) {
    fwd.collect(out);
    bwd.collect(out);
  }
};

}  // namespace svclab::nn
