#pragma once

#include "svclab/nn/tape.hpp"

#include <cmath>
#include <vector>

namespace svclab::nn {

namespace detail {

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

inline void require(bool ok, const char* what) {
  if (!ok) throw Error(Errc::shape, what);
}

}  // namespace detail

template <typename Scalar>
Var add(Tape<Scalar>& tape, Var a, Var b) {
  detail::require(tape.value(a).rows() == tape.value(b).rows() &&
                      tape.value(a).cols() == tape.value(b).cols(),
                  "add: shape mismatch");
  return tape.push(tape.value(a) + tape.value(b), tape.batch(a), tape.any_needs_grad({a, b}),
                   [a, b](Tape<Scalar>& t, const Mat<Scalar>& g) {
                     t.accumulate(a, g);
                     t.accumulate(b, g);
                   });
}

template <typename Scalar>
Var scale(Tape<Scalar>& tape, Var a, Scalar k) {
  return tape.push(tape.value(a) * k, tape.batch(a), tape.needs_grad(a),
                   [a, k](Tape<Scalar>& t, const Mat<Scalar>& g) { t.accumulate(a, g * k); });
}

template <typename Scalar>
Var relu(Tape<Scalar>& tape, Var x) {
  Mat<Scalar> y = tape.value(x).cwiseMax(Scalar(0));
  return tape.push(y, tape.batch(x), tape.needs_grad(x),
                   [x](Tape<Scalar>& t, const Mat<Scalar>& g) {
                     t.accumulate(x, (g.array() * (t.value(x).array() > Scalar(0))
                                                       .template cast<Scalar>())
                                         .matrix());
                   });
}

template <typename Scalar>
Var tanh(Tape<Scalar>& tape, Var x) {
  Mat<Scalar> y = tape.value(x).array().tanh().matrix();
  return tape.push(y, tape.batch(x), tape.needs_grad(x),
                   [x, y](Tape<Scalar>& t, const Mat<Scalar>& g) {
                     t.accumulate(x, (g.array() * (Scalar(1) - y.array().square())).matrix());
                   });
}

template <typename Scalar>
Var sigmoid(Tape<Scalar>& tape, Var x) {
  Mat<Scalar> y = tape.value(x).unaryExpr([](Scalar v) { return detail::sigmoid(v); });
  return tape.push(y, tape.batch(x), tape.needs_grad(x),
                   [x, y](Tape<Scalar>& t, const Mat<Scalar>& g) {
                     t.accumulate(x, (g.array() * y.array() * (Scalar(1) - y.array())).matrix());
                   });
}

/// y = x W^T + b, with W (out x in) and b (1 x out).
template <typename Scalar>
Var affine(Tape<Scalar>& tape, Var x, Var w, Var b) {
  const auto& X = tape.value(x);
  const auto& W = tape.value(w);
  detail::require(X.cols() == W.cols(), "affine: input width does not match weight");
  Mat<Scalar> y = X * W.transpose();
  y.rowwise() += tape.value(b).row(0);
  return tape.push(std::move(y), tape.batch(x), tape.any_needs_grad({x, w, b}),
                   [x, w, b](Tape<Scalar>& t, const Mat<Scalar>& g) {
                     if (t.needs_grad(x)) t.accumulate(x, g * t.value(w));
                     if (t.needs_grad(w)) t.accumulate(w, g.transpose() * t.value(x));
                     if (t.needs_grad(b)) t.accumulate(b, g.colwise().sum());
                   });
}

template <typename Scalar>
Var concat_cols(Tape<Scalar>& tape, Var a, Var b) {
  const auto& A = tape.value(a);
  const auto& B = tape.value(b);
  detail::require(A.rows() == B.rows(), "concat_cols: row mismatch");
  Mat<Scalar> y(A.rows(), A.cols() + B.cols());
  y << A, B;
  const Index ca = A.cols();
  const Index cb = B.cols();
  return tape.push(std::move(y), tape.batch(a), tape.any_needs_grad({a, b}),
                   [a, b, ca, cb](Tape<Scalar>& t, const Mat<Scalar>& g) {
                     t.accumulate(a, g.leftCols(ca));
                     t.accumulate(b, g.rightCols(cb));
                   });
}

template <typename Scalar>
Var slice_cols(Tape<Scalar>& tape, Var x, Index start, Index count) {
  const auto& X = tape.value(x);
  detail::require(start >= 0 && start + count <= X.cols(), "slice_cols: out of range");
  const Index rows = X.rows();
  const Index cols = X.cols();
  return tape.push(X.middleCols(start, count), tape.batch(x), tape.needs_grad(x),
                   [x, start, rows, cols](Tape<Scalar>& t, const Mat<Scalar>& g) {
                     Mat<Scalar> full = Mat<Scalar>::Zero(rows, cols);
                     full.middleCols(start, g.cols()) = g;
                     t.accumulate(x, full);
                   });
}

/// Tiles per-sequence vectors (B x d) across `steps` frames into time-major layout.
template <typename Scalar>
Var broadcast_time(Tape<Scalar>& tape, Var s, Index steps) {
  const auto& S = tape.value(s);
  const Index batch = S.rows();
  Mat<Scalar> y(steps * batch, S.cols());
  for (Index t = 0; t < steps; ++t) y.middleRows(t * batch, batch) = S;
  return tape.push(std::move(y), batch, tape.needs_grad(s),
                   [s, steps, batch](Tape<Scalar>& t, const Mat<Scalar>& g) {
                     Mat<Scalar> acc = Mat<Scalar>::Zero(batch, g.cols());
                     for (Index k = 0; k < steps; ++k) acc += g.middleRows(k * batch, batch);
                     t.accumulate(s, acc);
                   });
}

/// Gathers the given frames (in order) from a time-major sequence.
template <typename Scalar>
Var select_time(Tape<Scalar>& tape, Var x, std::vector<Index> frames) {
  const auto& X = tape.value(x);
  const Index batch = tape.batch(x);
  const Index steps = tape.steps(x);
  Mat<Scalar> y(static_cast<Index>(frames.size()) * batch, X.cols());
  for (std::size_t k = 0; k < frames.size(); ++k) {
    detail::require(frames[k] >= 0 && frames[k] < steps, "select_time: frame out of range");
    y.middleRows(static_cast<Index>(k) * batch, batch) = X.middleRows(frames[k] * batch, batch);
  }
  return tape.push(std::move(y), batch, tape.needs_grad(x),
                   [x, frames = std::move(frames), batch](Tape<Scalar>& t, const Mat<Scalar>& g) {
                     for (std::size_t k = 0; k < frames.size(); ++k)
                       t.accumulate_block(x, frames[k] * batch, 0,
                                          g.middleRows(static_cast<Index>(k) * batch, batch));
                   });
}

/// Repeats each frame `factor` times along the time axis.
template <typename Scalar>
Var repeat_time(Tape<Scalar>& tape, Var x, Index factor) {
  const auto& X = tape.value(x);
  const Index batch = tape.batch(x);
  const Index steps = tape.steps(x);
  Mat<Scalar> y(steps * factor * batch, X.cols());
  for (Index t = 0; t < steps * factor; ++t)
    y.middleRows(t * batch, batch) = X.middleRows((t / factor) * batch, batch);
  return tape.push(std::move(y), batch, tape.needs_grad(x),
                   [x, factor, batch, steps](Tape<Scalar>& t, const Mat<Scalar>& g) {
                     Mat<Scalar> acc = Mat<Scalar>::Zero(steps * batch, g.cols());
                     for (Index k = 0; k < steps * factor; ++k)
                       acc.middleRows((k / factor) * batch, batch) += g.middleRows(k * batch, batch);
                     t.accumulate(x, acc);
                   });
}

/// Row-wise L2 normalization. Rows with zero norm are left at zero.
template <typename Scalar>
Var normalize_rows(Tape<Scalar>& tape, Var x) {
  const auto& X = tape.value(x);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> norms = X.rowwise().norm();
  Mat<Scalar> y = X;
  for (Index r = 0; r < X.rows(); ++r)
    if (norms(r) > Scalar(0)) y.row(r) /= norms(r);
  return tape.push(y, tape.batch(x), tape.needs_grad(x),
                   [x, y, norms](Tape<Scalar>& t, const Mat<Scalar>& g) {
                     Mat<Scalar> dx(g.rows(), g.cols());
                     for (Index r = 0; r < g.rows(); ++r) {
                       if (norms(r) > Scalar(0)) {
                         const Scalar proj = y.row(r).dot(g.row(r));
                         dx.row(r) = (g.row(r) - proj * y.row(r)) / norms(r);
                       } else {
                         dx.row(r).setZero();
                       }
                     }
                     t.accumulate(x, dx);
                   });
}

/// Mean absolute difference over all entries, as a 1x1 node.
template <typename Scalar>
Var l1_mean(Tape<Scalar>& tape, Var a, Var b) {
  const auto& A = tape.value(a);
  const auto& B = tape.value(b);
  detail::require(A.rows() == B.rows() && A.cols() == B.cols(), "l1_mean: shape mismatch");
  const Scalar n = static_cast<Scalar>(A.size());
  Mat<Scalar> y(1, 1);
  y(0, 0) = (A - B).cwiseAbs().sum() / n;
  return tape.push(std::move(y), 1, tape.any_needs_grad({a, b}),
                   [a, b, n](Tape<Scalar>& t, const Mat<Scalar>& g) {
                     Mat<Scalar> sign = (t.value(a) - t.value(b)).unaryExpr([](Scalar d) {
                       return d > Scalar(0) ? Scalar(1) : (d < Scalar(0) ? Scalar(-1) : Scalar(0));
                     });
                     sign *= g(0, 0) / n;
                     t.accumulate(a, sign);
                     t.accumulate(b, -sign);
                   });
}

/// Scalar <x, weights> (Frobenius inner product with a constant).
template <typename Scalar>
Var weighted_sum(Tape<Scalar>& tape, Var x, Mat<Scalar> weights) {
  detail::require(weights.rows() == tape.value(x).rows() && weights.cols() == tape.value(x).cols(),
                  "weighted_sum: shape mismatch");
  Mat<Scalar> y(1, 1);
  y(0, 0) = tape.value(x).cwiseProduct(weights).sum();
  return tape.push(std::move(y), 1, tape.needs_grad(x),
                   [x, weights = std::move(weights)](Tape<Scalar>& t, const Mat<Scalar>& g) {
                     t.accumulate(x, weights * g(0, 0));
                   });
}

/// Mean softmax cross-entropy of logits (n x C) against integer labels.
template <typename Scalar>
Var softmax_cross_entropy(Tape<Scalar>& tape, Var logits, std::vector<int> labels) {
  const auto& Z = tape.value(logits);
  detail::require(static_cast<Index>(labels.size()) == Z.rows(), "cross_entropy: label count");
  Mat<Scalar> prob(Z.rows(), Z.cols());
  Scalar loss = 0;
  for (Index r = 0; r < Z.rows(); ++r) {
    const Scalar m = Z.row(r).maxCoeff();
    prob.row(r) = (Z.row(r).array() - m).exp();
    const Scalar sum = prob.row(r).sum();
    prob.row(r) /= sum;
    loss += -(Z(r, labels[r]) - m - std::log(sum));
  }
  const Scalar n = static_cast<Scalar>(Z.rows());
  Mat<Scalar> y(1, 1);
  y(0, 0) = loss / n;
  return tape.push(std::move(y), 1, tape.needs_grad(logits),
                   [logits, prob, labels = std::move(labels), n](Tape<Scalar>& t,
                                                                  const Mat<Scalar>& g) {
                     Mat<Scalar> d = prob;
                     for (Index r = 0; r < d.rows(); ++r) d(r, labels[r]) -= Scalar(1);
                     t.accumulate(logits, d * (g(0, 0) / n));
                   });
}

/// 1-D convolution over time with "same" zero padding; W is (out x kernel*in),
/// with tap k occupying columns [k*in, (k+1)*in).
template <typename Scalar>
Var conv1d(Tape<Scalar>& tape, Var x, Var w, Var b, Index kernel) {
  const auto& X = tape.value(x);
  const Index batch = tape.batch(x);
  const Index steps = tape.steps(x);
  const Index in = X.cols();
  detail::require(tape.value(w).cols() == kernel * in, "conv1d: weight shape");
  const Index pad = kernel / 2;
  Mat<Scalar> col = Mat<Scalar>::Zero(steps * batch, kernel * in);
  for (Index k = 0; k < kernel; ++k) {
    const Index shift = k - pad;
    const Index t0 = std::max<Index>(0, -shift);
    const Index t1 = std::min<Index>(steps, steps - shift);
    if (t1 <= t0) continue;
    col.block(t0 * batch, k * in, (t1 - t0) * batch, in) =
        X.middleRows((t0 + shift) * batch, (t1 - t0) * batch);
  }
  Mat<Scalar> y = col * tape.value(w).transpose();
  y.rowwise() += tape.value(b).row(0);
  return tape.push(
      std::move(y), batch, tape.any_needs_grad({x, w, b}),
      [x, w, b, col = std::move(col), kernel, pad, batch, steps, in](Tape<Scalar>& t,
                                                                     const Mat<Scalar>& g) {
        if (t.needs_grad(w)) t.accumulate(w, g.transpose() * col);
        if (t.needs_grad(b)) t.accumulate(b, g.colwise().sum());
        if (!t.needs_grad(x)) return;
        Mat<Scalar> dcol = g * t.value(w);
        Mat<Scalar> dx = Mat<Scalar>::Zero(steps * batch, in);
        for (Index k = 0; k < kernel; ++k) {
          const Index shift = k - pad;
          const Index t0 = std::max<Index>(0, -shift);
          const Index t1 = std::min<Index>(steps, steps - shift);
          if (t1 <= t0) continue;
          dx.middleRows((t0 + shift) * batch, (t1 - t0) * batch) +=
              dcol.block(t0 * batch, k * in, (t1 - t0) * batch, in);
        }
        t.accumulate(x, dx);
      });
}

/// Single-direction LSTM over a time-major sequence. Gate order i, f, g, o.
/// W_ih is (4H x in), W_hh is (4H x H), bias is (1 x 4H). With `reverse`,
/// frames are consumed from last to first and output row t holds the state
/// after reading frames t..T-1.
template <typename Scalar>
Var lstm(Tape<Scalar>& tape, Var x, Var w_ih, Var w_hh, Var bias, bool reverse) {
  const auto& X = tape.value(x);
  const auto& Wih = tape.value(w_ih);
  const auto& Whh = tape.value(w_hh);
  const Index batch = tape.batch(x);
  const Index steps = tape.steps(x);
  const Index hidden = Whh.cols();
  detail::require(Wih.cols() == X.cols() && Wih.rows() == 4 * hidden, "lstm: weight shape");

  // Pre-activations from the input path for every frame at once.
  Mat<Scalar> gates = X * Wih.transpose();
  gates.rowwise() += tape.value(bias).row(0);

  Mat<Scalar> h_all(steps * batch, hidden);
  Mat<Scalar> c_all(steps * batch, hidden);
  Mat<Scalar> h_prev = Mat<Scalar>::Zero(batch, hidden);
  Mat<Scalar> c_prev = Mat<Scalar>::Zero(batch, hidden);
  for (Index k = 0; k < steps; ++k) {
    const Index t = reverse ? steps - 1 - k : k;
    auto G = gates.middleRows(t * batch, batch);
    G.noalias() += h_prev * Whh.transpose();
    auto gi = G.leftCols(hidden);
    auto gf = G.middleCols(hidden, hidden);
    auto gg = G.middleCols(2 * hidden, hidden);
    auto go = G.rightCols(hidden);
    gi = gi.unaryExpr([](Scalar v) { return detail::sigmoid(v); });
    gf = gf.unaryExpr([](Scalar v) { return detail::sigmoid(v); });
    gg = gg.array().tanh().matrix();
    go = go.unaryExpr([](Scalar v) { return detail::sigmoid(v); });
    c_prev = (gf.array() * c_prev.array() + gi.array() * gg.array()).matrix();
    h_prev = (go.array() * c_prev.array().tanh()).matrix();
    c_all.middleRows(t * batch, batch) = c_prev;
    h_all.middleRows(t * batch, batch) = h_prev;
  }

  // `gates` now holds post-activation gate values.
  return tape.push(
      h_all, batch, tape.any_needs_grad({x, w_ih, w_hh, bias}),
      [x, w_ih, w_hh, bias, reverse, batch, steps, hidden, gates = std::move(gates),
       c_all = std::move(c_all), h_all](Tape<Scalar>& t, const Mat<Scalar>& g) {
        const auto& Whh = t.value(w_hh);
        Mat<Scalar> dpre(steps * batch, 4 * hidden);
        Mat<Scalar> dh_next = Mat<Scalar>::Zero(batch, hidden);
        Mat<Scalar> dc_next = Mat<Scalar>::Zero(batch, hidden);
        Mat<Scalar> dWhh = Mat<Scalar>::Zero(4 * hidden, hidden);
        const Mat<Scalar> zeros = Mat<Scalar>::Zero(batch, hidden);
        for (Index k = steps - 1; k >= 0; --k) {
          const Index t_ = reverse ? steps - 1 - k : k;
          const Index prev = reverse ? t_ + 1 : t_ - 1;
          const bool has_prev = k > 0;
          const auto G = gates.middleRows(t_ * batch, batch);
          const auto gi = G.leftCols(hidden).array();
          const auto gf = G.middleCols(hidden, hidden).array();
          const auto gg = G.middleCols(2 * hidden, hidden).array();
          const auto go = G.rightCols(hidden).array();
          const auto c = c_all.middleRows(t_ * batch, batch).array();
          const Mat<Scalar>& c_prev_m = has_prev ? Mat<Scalar>(c_all.middleRows(prev * batch, batch)) : zeros;
          const Mat<Scalar> tc = c.tanh().matrix();

          Mat<Scalar> dh = g.middleRows(t_ * batch, batch) + dh_next;
          Mat<Scalar> dc = (dh.array() * go * (Scalar(1) - tc.array().square())).matrix() + dc_next;
          auto D = dpre.middleRows(t_ * batch, batch);
          D.leftCols(hidden) = (dc.array() * gg * gi * (Scalar(1) - gi)).matrix();
          D.middleCols(hidden, hidden) =
              (dc.array() * c_prev_m.array() * gf * (Scalar(1) - gf)).matrix();
          D.middleCols(2 * hidden, hidden) = (dc.array() * gi * (Scalar(1) - gg.square())).matrix();
          D.rightCols(hidden) = (dh.array() * tc.array() * go * (Scalar(1) - go)).matrix();
          dc_next = (dc.array() * gf).matrix();
          if (has_prev) {
            dWhh.noalias() += D.transpose() * h_all.middleRows(prev * batch, batch);
            dh_next.noalias() = D * Whh;
          } else {
            dh_next.setZero();
          }
        }
        if (t.needs_grad(w_hh)) t.accumulate(w_hh, dWhh);
        if (t.needs_grad(w_ih)) t.accumulate(w_ih, dpre.transpose() * t.value(x));
        if (t.needs_grad(bias)) t.accumulate(bias, dpre.colwise().sum());
        if (t.needs_grad(x)) t.accumulate(x, dpre * t.value(w_ih));
      });
}

}  // namespace svclab::nn
