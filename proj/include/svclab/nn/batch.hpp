#pragma once

#include "svclab/nn/tape.hpp"

#include <vector>

namespace svclab::nn {

/// Interleaves equal-length sequences (each T x C) into a (T*B x C) time-major matrix.
template <typename Scalar, typename Seq>
Mat<Scalar> pack_time_major(const std::vector<Seq>& seqs) {
  if (seqs.empty()) throw Error(Errc::shape, "pack_time_major: empty batch");
  auto ref = [](const auto& s) -> const auto& {
    if constexpr (std::is_pointer_v<std::decay_t<decltype(s)>>)
      return *s;
    else
      return s;
  };
  const Index batch = static_cast<Index>(seqs.size());
  const Index steps = ref(seqs[0]).rows();
  const Index cols = ref(seqs[0]).cols();
  Mat<Scalar> out(steps * batch, cols);
  for (Index b = 0; b < batch; ++b) {
    const auto& s = ref(seqs[static_cast<std::size_t>(b)]);
    if (s.rows() != steps || s.cols() != cols)
      throw Error(Errc::shape, "pack_time_major: sequences differ in shape");
    for (Index t = 0; t < steps; ++t) out.row(t * batch + b) = s.row(t).template cast<Scalar>();
  }
  return out;
}

/// Extracts sequence `b` from a time-major matrix as a (T x C) float matrix.
template <typename Scalar>
MatrixXf unpack_sequence(const Mat<Scalar>& m, Index batch, Index b) {
  const Index steps = m.rows() / batch;
  MatrixXf out(steps, m.cols());
  for (Index t = 0; t < steps; ++t) out.row(t) = m.row(t * batch + b).template cast<float>();
  return out;
}

}  // namespace svclab::nn
