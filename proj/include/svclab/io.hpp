#pragma once

#include "svclab/common.hpp"
#include "svclab/nn/tape.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace svclab {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// Versioned single-file container of named float64 tensors plus JSON metadata.
/// Used for every checkpoint the toolkit writes.
struct Archive {
  static constexpr std::uint32_t kVersion = 1;

  std::string kind;
  json meta = json::object();
  std::map<std::string, Eigen::MatrixXd> tensors;

  void save(const fs::path& path) const;
  static Archive load(const fs::path& path, std::string_view expected_kind = {});

  const Eigen::MatrixXd& at(const std::string& name) const;
};

template <typename Scalar>
void store_params(Archive& ar, const nn::ParamList<Scalar>& params, const std::string& prefix = {}) {
  for (const auto* p : params) ar.tensors[prefix + p->name] = p->value.template cast<double>();
}

template <typename Scalar>
void load_params(const Archive& ar, const nn::ParamList<Scalar>& params, const std::string& prefix = {}) {
  for (auto* p : params) {
    const auto& m = ar.at(prefix + p->name);
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols())
      throw Error(Errc::format, "tensor '" + p->name + "' has unexpected shape in checkpoint");
    p->value = m.template cast<Scalar>();
    p->zero_grad();
  }
}

// Per-clip feature tensor: magic, int64 rows, int64 cols, float32 row-major.
void write_tensor_file(const fs::path& path, const MatrixXf& m);
MatrixXf read_tensor_file(const fs::path& path);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

std::string read_text_file(const fs::path& path);
void write_text_file(const fs::path& path, std::string_view text);
std::string file_hash(const fs::path& path);

}  // namespace svclab
