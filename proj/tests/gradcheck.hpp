#pragma once

// Central finite differences against the tape's analytic gradients.

#include "svclab/nn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace svclab::testing {

struct GradCheckResult {
  double max_rel_error = 0;
  int checked = 0;
};

/// `loss_fn()` builds a fresh tape, runs backward when `with_backward` is set,
/// and returns the scalar loss. Compares up to `max_entries` randomly chosen
/// parameter entries. Relative error is |a - n| / max(|a|, |n|, floor).
template <typename LossFn>
GradCheckResult grad_check(const nn::ParamList<double>& params, LossFn&& loss_fn, double step,
                           int max_entries, std::uint64_t seed = 1, double floor = 1e-6) {
  nn::zero_grads(params);
  loss_fn(true);
  std::vector<std::pair<nn::Param<double>*, Index>> entries;
  for (auto* p : params)
    if (!p->frozen)
      for (Index i = 0; i < p->value.size(); ++i) entries.emplace_back(p, i);
  std::mt19937_64 rng(seed);
  std::shuffle(entries.begin(), entries.end(), rng);
  if (static_cast<int>(entries.size()) > max_entries) entries.resize(static_cast<std::size_t>(max_entries));

  GradCheckResult res;
  for (auto [p, i] : entries) {
    const double analytic = p->grad.data()[i];
    const double orig = p->value.data()[i];
    p->value.data()[i] = orig + step;
    const double up = loss_fn(false);
    p->value.data()[i] = orig - step;
    const double down = loss_fn(false);
    p->value.data()[i] = orig;
    const double numeric = (up - down) / (2 * step);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    res.max_rel_error = std::max(res.max_rel_error, std::abs(analytic - numeric) / denom);
    ++res.checked;
  }
  return res;
}

inline nn::Mat<double> random_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  nn::Mat<double> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

}  // namespace svclab::testing
