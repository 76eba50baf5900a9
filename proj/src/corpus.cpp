#include "svclab/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

namespace svclab::corpus {

json DatasetSplits::to_json() const {
  return json{{"train", train}, {"validation", validation}, {"test", test}, {"seed", seed}};
}

DatasetSplits DatasetSplits::from_json(const json& j) {
  DatasetSplits s;
  s.train = j.at("train").get<std::vector<std::string>>();
  s.validation = j.at("validation").get<std::vector<std::string>>();
  s.test = j.at("test").get<std::vector<std::string>>();
  s.seed = j.value("seed", std::uint64_t{0});
  return s;
}

Waveform load_audio(const fs::path& path, int target_rate) {
  if (!fs::exists(path)) throw Error(Errc::ingestion, "audio file not found: " + path.string());
  const dsp::WavData wav = dsp::read_wav(path);
  if (wav.channels.rows() == 0) throw Error(Errc::empty_input, "audio file has no samples: " + path.string());
  VectorXf mono = wav.channels.rowwise().mean();
  Waveform w;
  w.sample_rate = target_rate;
  w.samples = dsp::resample(mono, wav.sample_rate, target_rate);
  const float peak = w.samples.size() ? w.samples.cwiseAbs().maxCoeff() : 0.0f;
  if (peak > 1.0f) w.samples /= peak;
  return w;
}

Waveform trim_silence(const Waveform& w, const TrimOptions& opt) {
  if (!(opt.chunk_ms > 0)) throw Error(Errc::config, "chunk_ms must be positive");
  const auto chunk = std::max<Index>(1, static_cast<Index>(std::llround(opt.chunk_ms * w.sample_rate / 1000.0)));
  std::vector<std::pair<Index, Index>> keep;
  Index total = 0;
  for (Index start = 0; start < w.size(); start += chunk) {
    const Index len = std::min(chunk, w.size() - start);
    const double level = dsp::to_dbfs(dsp::rms(w.samples.segment(start, len)));
    if (level >= opt.threshold_db) {
      keep.emplace_back(start, len);
      total += len;
    }
  }
  if (total == 0) throw Error(Errc::empty_input, "every chunk is below the volume threshold");
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.resize(total);
  Index pos = 0;
  for (auto [start, len] : keep) {
    out.samples.segment(pos, len) = w.samples.segment(start, len);
    pos += len;
  }
  return out;
}

MatrixXf mel_spectrogram(const Waveform& w, const MelConfig& cfg) { return dsp::mel_spectrogram(w, cfg); }

SingerRecord make_record(const Waveform& w, std::string singer_id, std::string clip_id, Gender gender,
                         const TrimOptions& trim, const MelConfig& cfg) {
  if (singer_id.empty()) throw Error(Errc::data, "clip " + clip_id + " has no singer id");
  SingerRecord r;
  r.singer_id = std::move(singer_id);
  r.clip_id = std::move(clip_id);
  r.gender = gender;
  const MatrixXf log_mel = corpus::mel_spectrogram(trim_silence(w, trim), cfg);
  r.norm = dsp::fit_normalization(log_mel);
  r.mel = dsp::normalize(log_mel, r.norm);
  return r;
}

std::vector<MatrixXf> window_frames(const MatrixXf& mel, Index win, Index stride) {
  if (win <= 0 || stride <= 0) throw Error(Errc::config, "window and stride must be positive");
  std::vector<MatrixXf> out;
  if (mel.rows() < win) return out;
  const Index count = 1 + (mel.rows() - win) / stride;
  out.reserve(static_cast<std::size_t>(count));
  for (Index k = 0; k < count; ++k) out.emplace_back(mel.middleRows(k * stride, win));
  return out;
}

std::vector<MelWindow> window_chunks(const MatrixXf& mel, Index stride) {
  std::vector<MelWindow> out;
  for (auto& m : window_frames(mel, kWindowFrames, stride)) out.emplace_back(std::move(m));
  return out;
}

DatasetSplits split_singers(std::vector<std::string> singers, double train_frac, std::uint64_t seed) {
  std::sort(singers.begin(), singers.end());
  singers.erase(std::unique(singers.begin(), singers.end()), singers.end());
  const auto n = static_cast<long>(singers.size());
  if (n < 3)
    throw Error(Errc::config, "need at least 3 singers to form train/validation/test splits, got " +
                                  std::to_string(n));
  if (!(train_frac > 0.0 && train_frac < 1.0)) throw Error(Errc::config, "train fraction must be in (0, 1)");
  std::mt19937_64 rng(seed);
  for (long i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<long> pick(0, i);
    std::swap(singers[static_cast<std::size_t>(i)], singers[static_cast<std::size_t>(pick(rng))]);
  }
  long n_train = std::lround(train_frac * static_cast<double>(n));
  n_train = std::clamp(n_train, 1L, n - 2);
  const long rest = n - n_train;
  const long n_val = (rest + 1) / 2;
  DatasetSplits s;
  s.seed = seed;
  s.train.assign(singers.begin(), singers.begin() + n_train);
  s.validation.assign(singers.begin() + n_train, singers.begin() + n_train + n_val);
  s.test.assign(singers.begin() + n_train + n_val, singers.end());
  return s;
}

DatasetSplits split_dataset(const std::vector<SingerRecord>& records, double train_frac, std::uint64_t seed) {
  std::vector<std::string> singers;
  for (const auto& r : records) singers.push_back(r.singer_id);
  return split_singers(std::move(singers), train_frac, seed);
}

std::map<std::string, Gender> read_singer_metadata(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(Errc::ingestion, "cannot open singer metadata " + path.string());
  std::map<std::string, Gender> out;
  std::string line;
  while (std::getline(is, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::replace(line.begin(), line.end(), '\t', ',');
    std::stringstream ss(line);
    std::string id, gender;
    std::getline(ss, id, ',');
    std::getline(ss, gender, ',');
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \r\n");
      const auto e = s.find_last_not_of(" \r\n");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    id = trim(id);
    if (id.empty() || id == "singer_id") continue;
    out[id] = parse_gender(trim(gender));
  }
  return out;
}

void write_record(const fs::path& dir, const SingerRecord& rec) {
  write_tensor_file(dir / (rec.clip_id + ".mel"), rec.mel);
  json side{{"singer_id", rec.singer_id},
            {"clip_id", rec.clip_id},
            {"gender", std::string(to_string(rec.gender))},
            {"frames", rec.mel.rows()},
            {"norm_min", rec.norm.min},
            {"norm_max", rec.norm.max},
            {"source_path", rec.source_path}};
  write_text_file(dir / (rec.clip_id + ".json"), side.dump(2) + "\n");
}

SingerRecord read_record(const fs::path& sidecar) {
  const json j = json::parse(read_text_file(sidecar));
  SingerRecord r;
  r.singer_id = j.at("singer_id").get<std::string>();
  r.clip_id = j.at("clip_id").get<std::string>();
  r.gender = parse_gender(j.value("gender", "unknown"));
  r.norm.min = j.at("norm_min").get<float>();
  r.norm.max = j.at("norm_max").get<float>();
  r.source_path = j.value("source_path", "");
  r.mel = read_tensor_file(sidecar.parent_path() / (r.clip_id + ".mel"));
  if (r.singer_id.empty()) throw Error(Errc::format, sidecar.string() + ": empty singer_id");
  if (r.mel.rows() != j.at("frames").get<Index>())
    throw Error(Errc::format, sidecar.string() + ": frame count does not match tensor file");
  return r;
}

std::vector<SingerRecord> load_records(const fs::path& dir) {
  std::vector<fs::path> sidecars;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto& p = e.path();
    if (p.extension() == ".json" && fs::exists(fs::path(p).replace_extension(".mel")))
      sidecars.push_back(p);
  }
  std::sort(sidecars.begin(), sidecars.end());
  std::vector<SingerRecord> out;
  for (const auto& p : sidecars) out.push_back(read_record(p));
  return out;
}

std::vector<const SingerRecord*> records_of(const std::vector<SingerRecord>& records,
                                            const std::vector<std::string>& singers) {
  const std::set<std::string> wanted(singers.begin(), singers.end());
  std::vector<const SingerRecord*> out;
  for (const auto& r : records)
    if (wanted.count(r.singer_id)) out.push_back(&r);
  return out;
}

std::vector<LabeledWindow> labeled_windows(const std::vector<const SingerRecord*>& records, Index win,
                                           Index stride) {
  std::vector<LabeledWindow> out;
  for (const auto* r : records)
    for (auto& m : window_frames(r->mel, win, stride)) out.push_back({r->singer_id, r->clip_id, std::move(m)});
  return out;
}

}  // namespace svclab::corpus
