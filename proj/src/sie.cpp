#include "svclab/sie.hpp"

#include <algorithm>
#include <cstring>
#include <limits>

namespace svclab::sie {

json SieConfig::to_json() const {
  return json{{"n_mels", n_mels}, {"hidden", hidden}, {"layers", layers}, {"d_sie", d_sie}};
}

SieConfig SieConfig::from_json(const json& j) {
  SieConfig c;
  c.n_mels = j.value("n_mels", c.n_mels);
  c.hidden = j.value("hidden", c.hidden);
  c.layers = j.value("layers", c.layers);
  c.d_sie = j.value("d_sie", c.d_sie);
  return c;
}

SingerWindows group_by_singer(const std::vector<corpus::LabeledWindow>& windows) {
  SingerWindows out;
  for (const auto& w : windows) out[w.singer_id].push_back(&w.mel);
  return out;
}

Ge2eBatchInput sample_batch(const SingerWindows& pool, Index n, Index m, std::mt19937_64& rng) {
  if (n < 2 || m < 2)
    throw Error(Errc::insufficient_batch, "GE2E batches need at least 2 singers and 2 windows each");
  std::vector<const std::pair<const std::string, std::vector<const MatrixXf*>>*> eligible;
  for (const auto& entry : pool)
    if (static_cast<Index>(entry.second.size()) >= m) eligible.push_back(&entry);
  if (static_cast<Index>(eligible.size()) < n)
    throw Error(Errc::sampling, "need " + std::to_string(n) + " singers with at least " + std::to_string(m) +
                                    " windows each, found " + std::to_string(eligible.size()) + " (short by " +
                                    std::to_string(n - static_cast<Index>(eligible.size())) + " singers)");
  // Partial Fisher-Yates over the sorted eligible list.
  for (Index i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), eligible.size() - 1);
    std::swap(eligible[static_cast<std::size_t>(i)], eligible[pick(rng)]);
  }
  Ge2eBatchInput batch;
  batch.n = n;
  batch.m = m;
  for (Index j = 0; j < n; ++j) {
    const auto& [singer, list] = *eligible[static_cast<std::size_t>(j)];
    batch.singers.push_back(singer);
    std::vector<std::size_t> idx(list.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (Index i = 0; i < m; ++i) {
      std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), idx.size() - 1);
      std::swap(idx[static_cast<std::size_t>(i)], idx[pick(rng)]);
      batch.windows.push_back(list[idx[static_cast<std::size_t>(i)]]);
    }
  }
  return batch;
}

EarlyStopper::EarlyStopper(int patience)
    : patience_(patience), best_(std::numeric_limits<double>::infinity()) {
  if (patience < 1) throw Error(Errc::config, "early-stopping patience must be at least 1");
}

bool EarlyStopper::update(double value) {
  if (value < best_) {
    best_ = value;
    bad_evals_ = 0;
    return true;
  }
  ++bad_evals_;
  return false;
}

std::vector<Ge2eBatchInput> validation_batches(const SingerWindows& pool, const SieTrainConfig& cfg) {
  Index min_windows = std::numeric_limits<Index>::max();
  Index singers = 0;
  for (const auto& [_, list] : pool) {
    if (list.size() < 2) continue;
    ++singers;
    min_windows = std::min(min_windows, static_cast<Index>(list.size()));
  }
  const Index n = std::min(cfg.n, singers);
  const Index m = std::min(cfg.m, min_windows);
  if (n < 2 || m < 2)
    throw Error(Errc::sampling, "validation set cannot form a GE2E batch (needs 2 singers with 2 windows)");
  std::mt19937_64 rng(cfg.seed ^ 0x5eed5eedULL);
  std::vector<Ge2eBatchInput> out;
  for (int k = 0; k < std::max(1, cfg.val_batches); ++k) out.push_back(sample_batch(pool, n, m, rng));
  return out;
}

void SieTable::insert(const std::string& singer, SIE v) {
  if (dim_ == 0) dim_ = v.dim();
  if (v.dim() != dim_)
    throw Error(Errc::shape, "SIE for " + singer + " has dimension " + std::to_string(v.dim()) + ", table holds " +
                                 std::to_string(dim_));
  entries_.insert_or_assign(singer, std::move(v));
}

const SIE& SieTable::at(const std::string& singer) const {
  auto it = entries_.find(singer);
  if (it == entries_.end()) throw Error(Errc::data, "singer '" + singer + "' is missing from the SIE table");
  return it->second;
}

json SieTable::to_json() const {
  json entries = json::object();
  for (const auto& [singer, v] : entries_) {
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(v.vector().data());
    entries[singer] = base64_encode({bytes, static_cast<std::size_t>(v.dim()) * sizeof(float)});
  }
  return json{{"format", "svclab-sie-table"}, {"version", 1}, {"d_sie", dim_},
              {"checkpoint_hash", checkpoint_hash_}, {"entries", entries}};
}

SieTable SieTable::from_json(const json& j) {
  SieTable t(j.at("d_sie").get<Index>(), j.value("checkpoint_hash", ""));
  for (const auto& [singer, text] : j.at("entries").items()) {
    const auto bytes = base64_decode(text.get<std::string>());
    if (bytes.size() != static_cast<std::size_t>(t.dim_) * sizeof(float))
      throw Error(Errc::format, "SIE table entry for " + singer + " has the wrong length");
    VectorXf v(t.dim_);
    std::memcpy(v.data(), bytes.data(), bytes.size());
    t.insert(singer, SIE(v));
  }
  return t;
}

void SieTable::save(const fs::path& path) const { write_text_file(path, to_json().dump(2) + "\n"); }

SieTable SieTable::load(const fs::path& path) { return from_json(json::parse(read_text_file(path))); }

std::optional<SIE> averaged_embedding(const std::vector<VectorXf>& embeddings) {
  if (embeddings.empty()) return std::nullopt;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(embeddings.front().size());
  for (const auto& e : embeddings) mean += e.cast<double>();
  mean /= static_cast<double>(embeddings.size());
  if (!(mean.norm() >= SIE::kMinNorm)) return std::nullopt;
  return SIE::normalized(mean.cast<float>());
}

}  // namespace svclab::sie
