#include "svclab/io.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <sstream>

namespace svclab {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::ingestion: return "ingestion";
    case Errc::empty_input: return "empty_input";
    case Errc::too_short: return "too_short";
    case Errc::shape: return "shape";
    case Errc::config: return "config";
    case Errc::sampling: return "sampling";
    case Errc::insufficient_batch: return "insufficient_batch";
    case Errc::divergence: return "divergence";
    case Errc::data: return "data";
    case Errc::no_voicing: return "no_voicing";
    case Errc::degenerate: return "degenerate";
    case Errc::conflict: return "conflict";
    case Errc::rejected: return "rejected";
    case Errc::not_found: return "not_found";
    case Errc::format: return "format";
  }
  return "unknown";
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[i] = digits[v & 0xf];
  return s;
}

namespace {

constexpr char kArchiveMagic[8] = {'S', 'V', 'C', 'L', 'A', 'B', 'C', 'K'};
constexpr char kTensorMagic[8] = {'S', 'V', 'C', 'M', 'E', 'L', '0', '1'};

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw Error(Errc::format, "unexpected end of file");
  return v;
}

void put_string(std::ostream& os, std::string_view s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
  const auto n = get<std::uint32_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw Error(Errc::format, "unexpected end of file");
  return s;
}

}  // namespace

void Archive::save(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::ingestion, "cannot write " + path.string());
  os.write(kArchiveMagic, sizeof(kArchiveMagic));
  put<std::uint32_t>(os, kVersion);
  put_string(os, kind);
  put_string(os, meta.dump());
  put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) {
    put_string(os, name);
    put<std::int64_t>(os, m.rows());
    put<std::int64_t>(os, m.cols());
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) put<double>(os, m(r, c));
  }
  if (!os) throw Error(Errc::ingestion, "failed writing " + path.string());
}

Archive Archive::load(const fs::path& path, std::string_view expected_kind) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::ingestion, "cannot open " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kArchiveMagic, 8) != 0)
    throw Error(Errc::format, path.string() + " is not a checkpoint file");
  const auto version = get<std::uint32_t>(is);
  if (version != kVersion)
    throw Error(Errc::format, path.string() + ": unsupported checkpoint version " +
                                  std::to_string(version));
  Archive ar;
  ar.kind = get_string(is);
  if (!expected_kind.empty() && ar.kind != expected_kind)
    throw Error(Errc::format, path.string() + ": expected a '" + std::string(expected_kind) +
                                  "' checkpoint, found '" + ar.kind + "'");
  ar.meta = json::parse(get_string(is));
  const auto count = get<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = get_string(is);
    const auto rows = get<std::int64_t>(is);
    const auto cols = get<std::int64_t>(is);
    Eigen::MatrixXd m(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) m(r, c) = get<double>(is);
    ar.tensors.emplace(std::move(name), std::move(m));
  }
  return ar;
}

const Eigen::MatrixXd& Archive::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw Error(Errc::format, "checkpoint is missing tensor '" + name + "'");
  return it->second;
}

void write_tensor_file(const fs::path& path, const MatrixXf& m) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::ingestion, "cannot write " + path.string());
  os.write(kTensorMagic, sizeof(kTensorMagic));
  put<std::int64_t>(os, m.rows());
  put<std::int64_t>(os, m.cols());
  const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  os.write(reinterpret_cast<const char*>(rm.data()),
           static_cast<std::streamsize>(rm.size() * sizeof(float)));
}

MatrixXf read_tensor_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::ingestion, "cannot open " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kTensorMagic, 8) != 0)
    throw Error(Errc::format, path.string() + " is not a tensor file");
  const auto rows = get<std::int64_t>(is);
  const auto cols = get<std::int64_t>(is);
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
  is.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(float)));
  if (!is) throw Error(Errc::format, path.string() + ": truncated tensor data");
  return rm;
}

namespace {
constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += kB64[v & 63];
  }
  if (i + 1 == bytes.size()) {
    const std::uint32_t v = bytes[i] << 16;
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += "==";
  } else if (i + 2 == bytes.size()) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  std::array<int, 256> lut;
  lut.fill(-1);
  for (int i = 0; i < 64; ++i) lut[static_cast<unsigned char>(kB64[i])] = i;
  std::vector<std::uint8_t> out;
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=') break;
    const int v = lut[static_cast<unsigned char>(c)];
    if (v < 0) throw Error(Errc::format, "invalid base64 character");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xff));
    }
  }
  return out;
}

std::string read_text_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::ingestion, "cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::ingestion, "cannot write " + path.string());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::string file_hash(const fs::path& path) { return hex64(fnv1a(read_text_file(path))); }

}  // namespace svclab
