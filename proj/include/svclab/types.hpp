#pragma once

#include "svclab/common.hpp"

#include <string>

namespace svclab {

/// 128 frames x 80 mel bins of normalized log-mel values.
class MelWindow {
 public:
  explicit MelWindow(MatrixXf values);

  const MatrixXf& values() const { return values_; }
  Index frames() const { return values_.rows(); }
  Index bins() const { return values_.cols(); }

 private:
  MatrixXf values_;
};

/// 16 timesteps x 16 channels bottleneck code.
class ContentCode {
 public:
  explicit ContentCode(MatrixXf values);

  const MatrixXf& values() const { return values_; }
  VectorXf flattened() const;

 private:
  MatrixXf values_;
};

/// Unit-norm singer identity embedding.
class SIE {
 public:
  static constexpr float kNormTolerance = 1e-5f;
  static constexpr double kMinNorm = 1e-6;

  /// Accepts a vector that is already unit length.
  explicit SIE(VectorXf v);

  /// Normalizes `v`; rejects vectors whose norm is below kMinNorm.
  static SIE normalized(const VectorXf& v);

  const VectorXf& vector() const { return v_; }
  Index dim() const { return v_.size(); }

 private:
  VectorXf v_;
};

enum class Gender { male, female, unknown };

Gender parse_gender(std::string_view s);
std::string_view to_string(Gender g);

}  // namespace svclab
