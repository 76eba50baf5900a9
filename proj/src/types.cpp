#include "svclab/types.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace svclab {

MelWindow::MelWindow(MatrixXf values) : values_(std::move(values)) {
  if (values_.rows() != kWindowFrames || values_.cols() != kMelBins)
    throw Error(Errc::shape, "MelWindow must be 128x80, got " + std::to_string(values_.rows()) + "x" +
                                 std::to_string(values_.cols()));
  if (!values_.allFinite()) throw Error(Errc::shape, "MelWindow contains non-finite values");
}

ContentCode::ContentCode(MatrixXf values) : values_(std::move(values)) {
  if (values_.rows() != kCodeSteps || values_.cols() != kCodeChannels)
    throw Error(Errc::shape, "ContentCode must be 16x16, got " + std::to_string(values_.rows()) + "x" +
                                 std::to_string(values_.cols()));
  if (!values_.allFinite()) throw Error(Errc::shape, "ContentCode contains non-finite values");
}

VectorXf ContentCode::flattened() const {
  VectorXf out(values_.size());
  Index k = 0;
  for (Index t = 0; t < values_.rows(); ++t)
    for (Index c = 0; c < values_.cols(); ++c) out(k++) = values_(t, c);
  return out;
}

SIE::SIE(VectorXf v) : v_(std::move(v)) {
  if (v_.size() == 0 || !v_.allFinite()) throw Error(Errc::shape, "SIE must be a finite non-empty vector");
  const double n = v_.cast<double>().norm();
  if (std::abs(n - 1.0) > kNormTolerance)
    throw Error(Errc::shape, "SIE is not unit norm (norm " + std::to_string(n) + ")");
}

SIE SIE::normalized(const VectorXf& v) {
  const Eigen::VectorXd d = v.cast<double>();
  const double n = d.norm();
  if (!(n >= kMinNorm))
    throw Error(Errc::degenerate, "embedding norm " + std::to_string(n) + " is too small to normalize");
  return SIE((d / n).cast<float>());
}

Gender parse_gender(std::string_view s) {
  std::string t(s);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "m" || t == "male") return Gender::male;
  if (t == "f" || t == "female") return Gender::female;
  return Gender::unknown;
}

std::string_view to_string(Gender g) {
  switch (g) {
    case Gender::male: return "M";
    case Gender::female: return "F";
    case Gender::unknown: return "unknown";
  }
  return "unknown";
}

}  // namespace svclab
