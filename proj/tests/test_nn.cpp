#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gradcheck.hpp"
#include "svclab/nn/adam.hpp"
#include "svclab/nn/batch.hpp"
#include "svclab/nn/layers.hpp"

using namespace svclab;
using namespace svclab::nn;
using svclab::testing::grad_check;
using svclab::testing::random_matrix;

namespace {

// Builds a loss <f(x), R> for a random constant R so every output entry matters.
double projected(Tape<double>& tape, Var out, std::uint64_t seed, bool backward) {
  std::mt19937_64 rng(seed);
  Var loss = weighted_sum(tape, out, random_matrix(tape.value(out).rows(), tape.value(out).cols(), rng));
  if (backward) tape.backward(loss);
  return tape.value(loss)(0, 0);
}

}  // namespace

TEST_CASE("affine, activations and reshaping ops match finite differences") {
  std::mt19937_64 rng(3);
  const Index steps = 5, batch = 2;
  Param<double> x("x", random_matrix(steps * batch, 4, rng));
  Param<double> s("s", random_matrix(batch, 3, rng));
  Linear<double> lin("lin", 7, 6, rng);
  lin.bias.value = random_matrix(1, 6, rng);

  auto loss = [&](bool bw) {
    Tape<double> t;
    Var xin = t.param(x);
    Var xb = t.push(t.value(xin), batch, true, [xin](Tape<double>& tt, const Mat<double>& g) { tt.accumulate(xin, g); });
    Var h = concat_cols(t, xb, broadcast_time(t, t.param(s), steps));
    h = lin(t, h);
    Var a = tanh(t, slice_cols(t, h, 0, 2));
    Var b = sigmoid(t, slice_cols(t, h, 2, 2));
    Var c = relu(t, slice_cols(t, h, 4, 2));
    Var y = concat_cols(t, concat_cols(t, a, b), c);
    y = repeat_time(t, select_time(t, y, {4, 0, 2}), 2);
    y = normalize_rows(t, y);
    return projected(t, y, 11, bw);
  };
  ParamList<double> params{&x, &s, &lin.weight, &lin.bias};
  auto res = grad_check(params, loss, 1e-6, 200);
  CHECK(res.checked > 50);
  CHECK(res.max_rel_error < 1e-5);
}

TEST_CASE("conv1d matches finite differences and keeps sequence length") {
  std::mt19937_64 rng(5);
  const Index steps = 6, batch = 3;
  Param<double> x("x", random_matrix(steps * batch, 4, rng));
  Conv1d<double> conv("conv", 4, 5, 5, rng);
  conv.bias.value = random_matrix(1, 5, rng);
  auto loss = [&](bool bw) {
    Tape<double> t;
    Var xin = t.param(x);
    Var xb = t.push(t.value(xin), batch, true, [xin](Tape<double>& tt, const Mat<double>& g) { tt.accumulate(xin, g); });
    Var y = conv(t, xb);
    CHECK(t.value(y).rows() == steps * batch);
    return projected(t, y, 7, bw);
  };
  auto res = grad_check({&x, &conv.weight, &conv.bias}, loss, 1e-6, 300);
  CHECK(res.max_rel_error < 1e-5);
}

TEST_CASE("conv1d with a single tap equals a per-frame affine map") {
  std::mt19937_64 rng(9);
  Conv1d<double> conv("c", 3, 2, 1, rng);
  const Mat<double> X = random_matrix(8, 3, rng);
  Tape<double> t;
  Var y = conv(t, t.constant(X, 2));
  Mat<double> expect = X * conv.weight.value.transpose();
  expect.rowwise() += conv.bias.value.row(0);
  CHECK((t.value(y) - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("lstm forward and reverse match finite differences") {
  for (bool reverse : {false, true}) {
    std::mt19937_64 rng(reverse ? 21 : 22);
    const Index steps = 7, batch = 2;
    Param<double> x("x", random_matrix(steps * batch, 3, rng));
    LSTMLayer<double> layer("l", 3, 4, reverse, rng);
    auto loss = [&](bool bw) {
      Tape<double> t;
      Var xin = t.param(x);
      Var xb = t.push(t.value(xin), batch, true, [xin](Tape<double>& tt, const Mat<double>& g) { tt.accumulate(xin, g); });
      return projected(t, layer(t, xb), 3, bw);
    };
    auto res = grad_check({&x, &layer.w_ih, &layer.w_hh, &layer.bias}, loss, 1e-6, 400);
    CHECK(res.max_rel_error < 1e-5);
  }
}

TEST_CASE("reverse lstm equals forward lstm on a time-reversed input") {
  std::mt19937_64 rng(4);
  LSTMLayer<double> f("f", 3, 4, false, rng);
  LSTMLayer<double> r = f;
  r.reverse = true;
  const Index steps = 6;
  const Mat<double> X = random_matrix(steps, 3, rng);
  const Mat<double> Xr = X.colwise().reverse();
  Tape<double> t;
  const Mat<double> yf = t.value(f(t, t.constant(Xr, 1)));
  const Mat<double> yr = t.value(r(t, t.constant(X, 1)));
  CHECK((yr - yf.colwise().reverse()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("batched lstm equals running each sequence alone") {
  std::mt19937_64 rng(8);
  LSTMLayer<double> layer("l", 2, 3, false, rng);
  const Mat<double> a = random_matrix(5, 2, rng);
  const Mat<double> b = random_matrix(5, 2, rng);
  Tape<double> t;
  const Mat<double> both = t.value(layer(t, t.constant(pack_time_major<double>(std::vector<Mat<double>>{a, b}), 2)));
  const Mat<double> ya = t.value(layer(t, t.constant(a, 1)));
  const Mat<double> yb = t.value(layer(t, t.constant(b, 1)));
  for (Index k = 0; k < 5; ++k) {
    CHECK((both.row(2 * k) - ya.row(k)).norm() < 1e-12);
    CHECK((both.row(2 * k + 1) - yb.row(k)).norm() < 1e-12);
  }
}

TEST_CASE("l1_mean and cross-entropy gradients") {
  std::mt19937_64 rng(6);
  Param<double> a("a", random_matrix(4, 3, rng));
  const Mat<double> target = random_matrix(4, 3, rng);
  auto l1 = [&](bool bw) {
    Tape<double> t;
    Var loss = l1_mean(t, t.param(a), t.constant(target));
    if (bw) t.backward(loss);
    return t.value(loss)(0, 0);
  };
  CHECK(grad_check({&a}, l1, 1e-7, 12).max_rel_error < 1e-5);

  Param<double> z("z", random_matrix(5, 4, rng));
  std::vector<int> labels{0, 3, 1, 1, 2};
  auto ce = [&](bool bw) {
    Tape<double> t;
    Var loss = softmax_cross_entropy(t, t.param(z), labels);
    if (bw) t.backward(loss);
    return t.value(loss)(0, 0);
  };
  CHECK(grad_check({&z}, ce, 1e-6, 20).max_rel_error < 1e-6);
}

TEST_CASE("frozen parameters receive no gradient but pass it through") {
  std::mt19937_64 rng(2);
  Linear<double> frozen("f", 3, 3, rng);
  frozen.weight.frozen = frozen.bias.frozen = true;
  Param<double> x("x", random_matrix(2, 3, rng));
  Tape<double> t;
  Var loss = weighted_sum(t, frozen(t, t.param(x)), Mat<double>(Mat<double>::Ones(2, 3)));
  zero_grads<double>({&x, &frozen.weight, &frozen.bias});
  t.backward(loss);
  CHECK(frozen.weight.grad.cwiseAbs().maxCoeff() == 0.0);
  CHECK(x.grad.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("adam moves a quadratic toward its minimum and clipping bounds the norm") {
  Param<double> p("p", Mat<double>::Constant(1, 2, 3.0));
  Adam<double>::Options opt;
  opt.lr = 0.1;
  Adam<double> adam(opt);
  for (int i = 0; i < 300; ++i) {
    p.grad = 2 * p.value;
    adam.step({&p});
  }
  CHECK(p.value.cwiseAbs().maxCoeff() < 0.05);

  p.grad = Mat<double>::Constant(1, 2, 10.0);
  const double before = clip_grad_norm<double>({&p}, 3.0);
  CHECK(before == doctest::Approx(std::sqrt(200.0)));
  CHECK(p.grad.norm() == doctest::Approx(3.0));
}
