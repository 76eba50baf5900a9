#include "svclab/dsp/audio.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <vector>

namespace svclab::dsp {

namespace {

std::uint32_t le32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t le16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

}  // namespace

WavData read_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::ingestion, "cannot open audio file " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw Error(Errc::ingestion, "not a RIFF/WAVE file: " + path.string());

  int format = 0, channels = 0, rate = 0, bits = 0;
  const unsigned char* data = nullptr;
  std::size_t data_bytes = 0;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const unsigned char* chunk = buf.data() + pos;
    const std::size_t len = le32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min(len, buf.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0 && avail >= 16) {
      format = le16(chunk + 8);
      channels = le16(chunk + 10);
      rate = static_cast<int>(le32(chunk + 12));
      bits = le16(chunk + 22);
      if (format == 0xFFFE && avail >= 26) format = le16(chunk + 8 + 24);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = buf.data() + body;
      data_bytes = avail;
    }
    pos = body + len + (len & 1);
  }
  if (channels <= 0 || rate <= 0 || data == nullptr)
    throw Error(Errc::ingestion, "missing fmt or data chunk in " + path.string());
  if (!((format == 1 && (bits == 8 || bits == 16 || bits == 24 || bits == 32)) ||
        (format == 3 && (bits == 32 || bits == 64))))
    throw Error(Errc::ingestion, "unsupported WAV encoding in " + path.string());

  const std::size_t width = static_cast<std::size_t>(bits / 8);
  const std::size_t frames = data_bytes / (width * channels);
  WavData out;
  out.sample_rate = rate;
  out.channels.resize(static_cast<Index>(frames), channels);
  for (std::size_t f = 0; f < frames; ++f) {
    for (int c = 0; c < channels; ++c) {
      const unsigned char* p = data + (f * channels + c) * width;
      double v = 0;
      if (format == 3) {
        if (bits == 32) {
          float x;
          std::memcpy(&x, p, 4);
          v = x;
        } else {
          double x;
          std::memcpy(&x, p, 8);
          v = x;
        }
      } else if (bits == 8) {
        v = (static_cast<int>(p[0]) - 128) / 128.0;
      } else if (bits == 16) {
        v = static_cast<std::int16_t>(le16(p)) / 32768.0;
      } else if (bits == 24) {
        std::int32_t x = p[0] | (p[1] << 8) | (p[2] << 16);
        if (x & 0x800000) x |= ~0xFFFFFF;
        v = x / 8388608.0;
      } else {
        v = static_cast<std::int32_t>(le32(p)) / 2147483648.0;
      }
      out.channels(static_cast<Index>(f), c) = static_cast<float>(v);
    }
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::ingestion, "cannot write " + path.string());
  auto u32 = [&](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
  auto u16 = [&](std::uint16_t v) { os.write(reinterpret_cast<const char*>(&v), 2); };
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  os.write("RIFF", 4);
  u32(36 + 2 * n);
  os.write("WAVEfmt ", 8);
  u32(16);
  u16(1);
  u16(1);
  u32(static_cast<std::uint32_t>(w.sample_rate));
  u32(static_cast<std::uint32_t>(w.sample_rate) * 2);
  u16(2);
  u16(16);
  os.write("data", 4);
  u32(2 * n);
  for (Index i = 0; i < w.samples.size(); ++i) {
    const float x = std::clamp(w.samples(i), -1.0f, 1.0f);
    u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(x * 32767.0f))));
  }
}

VectorXf resample(const VectorXf& x, int from_rate, int to_rate) {
  if (from_rate == to_rate) return x;
  const double ratio = static_cast<double>(to_rate) / from_rate;
  const auto out_len = static_cast<Index>(std::llround(static_cast<double>(x.size()) * ratio));
  const double cutoff = std::min(1.0, ratio) * 0.95;  // fraction of the input Nyquist
  constexpr int kZeroCrossings = 16;
  const double half_width = kZeroCrossings / cutoff;
  VectorXf y(out_len);
  for (Index k = 0; k < out_len; ++k) {
    const double center = static_cast<double>(k) / ratio;
    const auto lo = static_cast<Index>(std::ceil(center - half_width));
    const auto hi = static_cast<Index>(std::floor(center + half_width));
    double acc = 0;
    for (Index n = std::max<Index>(lo, 0); n <= std::min<Index>(hi, x.size() - 1); ++n) {
      const double d = static_cast<double>(n) - center;
      const double arg = cutoff * d;
      const double sinc = arg == 0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
      const double win = 0.5 + 0.5 * std::cos(std::numbers::pi * d / half_width);
      acc += x(n) * cutoff * sinc * win;
    }
    y(k) = static_cast<float>(acc);
  }
  return y;
}

double rms(const Eigen::Ref<const VectorXf>& x) {
  if (x.size() == 0) return 0.0;
  return std::sqrt(x.cast<double>().squaredNorm() / static_cast<double>(x.size()));
}

double to_dbfs(double amplitude) {
  return amplitude > 0 ? 20.0 * std::log10(amplitude) : -std::numeric_limits<double>::infinity();
}

}  // namespace svclab::dsp
