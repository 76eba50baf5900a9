#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace svclab {

using Index = Eigen::Index;
using MatrixXf = Eigen::MatrixXf;
using VectorXf = Eigen::VectorXf;

// Fixed geometry of the conversion network's input and bottleneck.
inline constexpr Index kSampleRate = 16000;
inline constexpr Index kMelBins = 80;
inline constexpr Index kWindowFrames = 128;
inline constexpr Index kCodeSteps = 16;
inline constexpr Index kCodeChannels = 16;

enum class Errc {
  ingestion,
  empty_input,
  too_short,
  shape,
  config,
  sampling,
  insufficient_batch,
  divergence,
  data,
  no_voicing,
  degenerate,
  conflict,
  rejected,
  not_found,
  format,
};

std::string_view to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// 64-bit FNV-1a, rendered as 16 hex digits. Used for config and checkpoint stamps.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace svclab
