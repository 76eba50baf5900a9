#pragma once

// Singer identity embeddings: a stacked-LSTM encoder trained with the
// generalized end-to-end (GE2E) softmax objective, and the per-singer
// averaged lookup table used to condition conversion.

#include "svclab/corpus.hpp"
#include "svclab/io.hpp"
#include "svclab/log.hpp"
#include "svclab/nn/adam.hpp"
#include "svclab/nn/batch.hpp"
#include "svclab/nn/layers.hpp"
#include "svclab/types.hpp"

#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace svclab::sie {

template <typename Scalar>
using Mat = nn::Mat<Scalar>;
using nn::Tape;
using nn::Var;

struct SieConfig {
  Index n_mels = kMelBins;
  Index hidden = 768;
  Index layers = 3;
  Index d_sie = 256;

  static SieConfig toy() { return {kMelBins, 48, 3, 32}; }
  json to_json() const;
  static SieConfig from_json(const json& j);
};

/// Stacked LSTM; the last layer's final-frame state is projected and normalized.
template <typename Scalar>
class SieEncoder {
 public:
  SieEncoder() = default;
  SieEncoder(const SieConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg.layers < 1 || cfg.hidden < 1 || cfg.d_sie < 1 || cfg.n_mels < 1)
      throw Error(Errc::config, "SIE encoder sizes must be positive");
    std::mt19937_64 rng(seed);
    Index in = cfg.n_mels;
    for (Index l = 0; l < cfg.layers; ++l) {
      lstm_.emplace_back("sie.lstm" + std::to_string(l), in, cfg.hidden, false, rng);
      in = cfg.hidden;
    }
    proj_ = nn::Linear<Scalar>("sie.proj", cfg.hidden, cfg.d_sie, rng);
  }

  const SieConfig& config() const { return cfg_; }

  /// x: time-major (T*B x n_mels). Returns (B x d_sie) unit rows.
  Var forward(Tape<Scalar>& tape, Var x) {
    if (tape.value(x).cols() != cfg_.n_mels)
      throw Error(Errc::shape, "SIE encoder expects " + std::to_string(cfg_.n_mels) + " mel bins, got " +
                                   std::to_string(tape.value(x).cols()));
    Var h = x;
    for (auto& layer : lstm_) h = layer(tape, h);
    Var last = nn::select_time(tape, h, {tape.steps(h) - 1});
    return nn::normalize_rows(tape, proj_(tape, last));
  }

  /// Embeds a batch of equal-length mel sequences.
  Mat<Scalar> embed_batch(const std::vector<const MatrixXf*>& mels) {
    Tape<Scalar> tape;
    Var x = tape.constant(nn::pack_time_major<Scalar>(mels), static_cast<Index>(mels.size()));
    return tape.value(forward(tape, x));
  }

  /// Embeds one window or variable-length mel sequence.
  SIE embed(const MatrixXf& mel) {
    if (mel.rows() < 1) throw Error(Errc::shape, "cannot embed an empty mel sequence");
    if (mel.cols() != cfg_.n_mels)
      throw Error(Errc::shape, "SIE encoder expects " + std::to_string(cfg_.n_mels) + " mel bins, got " +
                                   std::to_string(mel.cols()));
    const Mat<Scalar> e = embed_batch({&mel});
    return SIE::normalized(e.row(0).transpose().template cast<float>());
  }

  nn::ParamList<Scalar> params() {
    nn::ParamList<Scalar> out;
    for (auto& l : lstm_) l.collect(out);
    proj_.collect(out);
    return out;
  }

  void set_frozen(bool frozen) {
    for (auto* p : params()) p->frozen = frozen;
  }

 private:
  SieConfig cfg_;
  std::vector<nn::LSTMLayer<Scalar>> lstm_;
  nn::Linear<Scalar> proj_;
};

/// Learnable similarity scale and bias of the GE2E objective.
template <typename Scalar>
struct Ge2eParams {
  static constexpr Scalar kMinScale = Scalar(1e-6);

  nn::Param<Scalar> w{"ge2e.w", Mat<Scalar>::Constant(1, 1, Scalar(10))};
  nn::Param<Scalar> b{"ge2e.b", Mat<Scalar>::Constant(1, 1, Scalar(-5))};

  Scalar scale() const { return w.value(0, 0); }
  Scalar bias() const { return b.value(0, 0); }
  void clamp() { w.value(0, 0) = std::max(w.value(0, 0), kMinScale); }
  nn::ParamList<Scalar> params() { return {&w, &b}; }
};

/// GE2E softmax loss over embeddings ordered speaker-major (row j*M + i is
/// utterance i of speaker j). The own-speaker centroid excludes the utterance.
template <typename Scalar>
Var ge2e(Tape<Scalar>& tape, Var emb, Var w, Var b, Index n_speakers, Index n_utts) {
  if (n_speakers < 2 || n_utts < 2)
    throw Error(Errc::insufficient_batch, "GE2E needs at least 2 speakers and 2 utterances per speaker");
  const Mat<Scalar>& E = tape.value(emb);
  if (E.rows() != n_speakers * n_utts)
    throw Error(Errc::shape, "GE2E batch has " + std::to_string(E.rows()) + " rows, expected " +
                                 std::to_string(n_speakers * n_utts));
  const Index N = n_speakers, M = n_utts, d = E.cols();
  const Scalar ws = tape.value(w)(0, 0);
  const Scalar bs = tape.value(b)(0, 0);

  Mat<Scalar> sums = Mat<Scalar>::Zero(N, d);
  for (Index j = 0; j < N; ++j)
    for (Index i = 0; i < M; ++i) sums.row(j) += E.row(j * M + i);
  const Mat<Scalar> centroids = sums / static_cast<Scalar>(M);

  Mat<Scalar> cos(N * M, N);
  Mat<Scalar> coef(N * M, N);  // d loss / d S
  Scalar loss = 0;
  for (Index j = 0; j < N; ++j) {
    for (Index i = 0; i < M; ++i) {
      const Index r = j * M + i;
      const auto e = E.row(r);
      const Scalar ne = e.norm();
      for (Index k = 0; k < N; ++k) {
        const nn::RowVec<Scalar> c =
            k == j ? nn::RowVec<Scalar>((sums.row(j) - e) / static_cast<Scalar>(M - 1))
                   : nn::RowVec<Scalar>(centroids.row(k));
        cos(r, k) = e.dot(c) / (ne * c.norm());
      }
      const nn::RowVec<Scalar> s = (ws * cos.row(r)).array() + bs;
      const Scalar mx = s.maxCoeff();
      const nn::RowVec<Scalar> p = (s.array() - mx).exp();
      const Scalar z = p.sum();
      loss += -s(j) + mx + std::log(z);
      coef.row(r) = p / z;
      coef(r, j) -= Scalar(1);
    }
  }
  Mat<Scalar> out(1, 1);
  out(0, 0) = loss;
  return tape.push(
      out, 1, tape.any_needs_grad({emb, w, b}),
      [emb, w, b, N, M, cos, coef, sums, centroids, ws](Tape<Scalar>& t, const Mat<Scalar>& g) {
        const Scalar gs = g(0, 0);
        if (t.needs_grad(w)) t.accumulate(w, Mat<Scalar>::Constant(1, 1, gs * coef.cwiseProduct(cos).sum()));
        if (t.needs_grad(b)) t.accumulate(b, Mat<Scalar>::Constant(1, 1, gs * coef.sum()));
        if (!t.needs_grad(emb)) return;
        const Mat<Scalar>& E = t.value(emb);
        Mat<Scalar> dE = Mat<Scalar>::Zero(E.rows(), E.cols());
        Mat<Scalar> dsum = Mat<Scalar>::Zero(N, E.cols());
        for (Index j = 0; j < N; ++j) {
          for (Index i = 0; i < M; ++i) {
            const Index r = j * M + i;
            const nn::RowVec<Scalar> e = E.row(r);
            const Scalar ne = e.norm();
            for (Index k = 0; k < N; ++k) {
              const bool own = k == j;
              const nn::RowVec<Scalar> c = own ? nn::RowVec<Scalar>((sums.row(j) - e) / static_cast<Scalar>(M - 1))
                                               : nn::RowVec<Scalar>(centroids.row(k));
              const Scalar nc = c.norm();
              const Scalar cs = cos(r, k);
              const Scalar a = gs * coef(r, k) * ws;
              dE.row(r) += a * (c / (ne * nc) - cs * e / (ne * ne));
              const nn::RowVec<Scalar> dc = a * (e / (ne * nc) - cs * c / (nc * nc));
              if (own) {
                dsum.row(j) += dc / static_cast<Scalar>(M - 1);
                dE.row(r) -= dc / static_cast<Scalar>(M - 1);
              } else {
                dsum.row(k) += dc / static_cast<Scalar>(M);
              }
            }
          }
        }
        for (Index j = 0; j < N; ++j)
          for (Index i = 0; i < M; ++i) dE.row(j * M + i) += dsum.row(j);
        t.accumulate(emb, dE);
      });
}

/// Loss value for a fixed embedding matrix.
template <typename Scalar>
Scalar ge2e_loss(const Mat<Scalar>& embeddings, Index n_speakers, Index n_utts, Scalar w, Scalar b) {
  Tape<Scalar> tape;
  Var e = tape.constant(embeddings);
  Var wv = tape.constant(Mat<Scalar>::Constant(1, 1, w));
  Var bv = tape.constant(Mat<Scalar>::Constant(1, 1, b));
  return tape.value(ge2e(tape, e, wv, bv, n_speakers, n_utts))(0, 0);
}

/// Windows grouped by singer, the unit GE2E batches are drawn from.
using SingerWindows = std::map<std::string, std::vector<const MatrixXf*>>;

SingerWindows group_by_singer(const std::vector<corpus::LabeledWindow>& windows);

struct Ge2eBatchInput {
  std::vector<std::string> singers;       // N distinct singers
  std::vector<const MatrixXf*> windows;   // N*M, speaker-major
  Index n = 0;
  Index m = 0;
};

/// N distinct singers with M windows each, drawn without replacement.
Ge2eBatchInput sample_batch(const SingerWindows& pool, Index n, Index m, std::mt19937_64& rng);

/// Stops after `patience` consecutive evaluations without improvement.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience);

  /// Records a validation value; returns true when it is a new best.
  bool update(double value);
  bool should_stop() const { return bad_evals_ >= patience_; }
  double best() const { return best_; }
  int bad_evals() const { return bad_evals_; }

 private:
  int patience_;
  int bad_evals_ = 0;
  double best_;
};

struct SieTrainConfig {
  long iters = 314000;
  double lr = 1e-4;
  Index n = 8;
  Index m = 10;
  int patience = 40;
  long eval_every = 100;
  double grad_clip = 3.0;
  int val_batches = 4;
  std::uint64_t seed = 7;
};

struct SieEvalPoint {
  long iter = 0;
  double train_loss = 0;
  double val_loss = 0;
};

struct SieHistory {
  std::vector<double> train_loss;  // one per iteration
  std::vector<SieEvalPoint> evals;
  long best_iter = 0;
  long iterations_run = 0;
  bool stopped_early = false;
};

template <typename Scalar>
struct TrainedSie {
  SieEncoder<Scalar> encoder;
  Ge2eParams<Scalar> ge2e;
  SieHistory history;
};

/// Validation hook: returns the validation loss for the current parameters.
template <typename Scalar>
using SieValidationFn = std::function<double(SieEncoder<Scalar>&, Ge2eParams<Scalar>&)>;

template <typename Scalar>
Scalar ge2e_batch_loss(SieEncoder<Scalar>& enc, Ge2eParams<Scalar>& p, const Ge2eBatchInput& batch,
                       bool with_grad) {
  Tape<Scalar> tape;
  Var x = tape.constant(nn::pack_time_major<Scalar>(batch.windows), static_cast<Index>(batch.windows.size()));
  Var e = enc.forward(tape, x);
  Var loss = ge2e(tape, e, tape.param(p.w), tape.param(p.b), batch.n, batch.m);
  const Scalar v = tape.value(loss)(0, 0);
  if (with_grad) tape.backward(loss);
  return v;
}

std::vector<Ge2eBatchInput> validation_batches(const SingerWindows& pool, const SieTrainConfig& cfg);

template <typename Scalar>
TrainedSie<Scalar> train_sie(const SingerWindows& train, const SingerWindows& validation,
                             const SieConfig& model_cfg, const SieTrainConfig& cfg,
                             SieValidationFn<Scalar> validate = nullptr) {
  if (cfg.patience < 1) throw Error(Errc::config, "early-stopping patience must be at least 1");
  if (cfg.eval_every < 1) throw Error(Errc::config, "eval_every must be at least 1");
  TrainedSie<Scalar> run{SieEncoder<Scalar>(model_cfg, cfg.seed), Ge2eParams<Scalar>{}, {}};
  auto params = run.encoder.params();
  for (auto* p : run.ge2e.params()) params.push_back(p);

  if (!validate) {
    auto batches = validation_batches(validation.size() >= 2 ? validation : train, cfg);
    validate = [batches](SieEncoder<Scalar>& enc, Ge2eParams<Scalar>& p) {
      double acc = 0;
      for (const auto& b : batches) acc += static_cast<double>(ge2e_batch_loss(enc, p, b, false));
      return acc / static_cast<double>(batches.size());
    };
  }

  typename nn::Adam<Scalar>::Options opt;
  opt.lr = static_cast<Scalar>(cfg.lr);
  nn::Adam<Scalar> adam(opt);
  std::mt19937_64 rng(cfg.seed);
  EarlyStopper stopper(cfg.patience);
  TrainedSie<Scalar> best = run;
  double recent = 0;
  long recent_n = 0;

  for (long it = 1; it <= cfg.iters; ++it) {
    const Ge2eBatchInput batch = sample_batch(train, cfg.n, cfg.m, rng);
    nn::zero_grads(params);
    const Scalar loss = ge2e_batch_loss(run.encoder, run.ge2e, batch, true);
    if (!std::isfinite(static_cast<double>(loss)))
      throw Error(Errc::divergence, "SIE training diverged at iteration " + std::to_string(it) +
                                        " (loss " + std::to_string(static_cast<double>(loss)) + ")");
    nn::clip_grad_norm(params, static_cast<Scalar>(cfg.grad_clip));
    adam.step(params);
    run.ge2e.clamp();
    run.history.train_loss.push_back(static_cast<double>(loss));
    run.history.iterations_run = it;
    recent += static_cast<double>(loss);
    ++recent_n;

    if (it % cfg.eval_every == 0 || it == cfg.iters) {
      const double val = validate(run.encoder, run.ge2e);
      if (!std::isfinite(val))
        throw Error(Errc::divergence, "SIE validation loss became non-finite at iteration " + std::to_string(it));
      run.history.evals.push_back({it, recent / static_cast<double>(recent_n), val});
      recent = 0;
      recent_n = 0;
      if (stopper.update(val)) {
        run.history.best_iter = it;
        best.encoder = run.encoder;
        best.ge2e = run.ge2e;
      }
      log_info("sie iter " + std::to_string(it) + " train " + std::to_string(run.history.evals.back().train_loss) +
               " val " + std::to_string(val));
      if (stopper.should_stop()) {
        run.history.stopped_early = true;
        break;
      }
    }
  }
  best.history = run.history;
  return best;
}

/// Per-singer averaged embeddings, each re-normalized to unit length.
class SieTable {
 public:
  SieTable() = default;
  SieTable(Index dim, std::string checkpoint_hash) : dim_(dim), checkpoint_hash_(std::move(checkpoint_hash)) {}

  void insert(const std::string& singer, SIE v);
  bool contains(const std::string& singer) const { return entries_.count(singer) != 0; }
  const SIE& at(const std::string& singer) const;
  const std::map<std::string, SIE>& entries() const { return entries_; }
  Index dim() const { return dim_; }
  const std::string& checkpoint_hash() const { return checkpoint_hash_; }
  std::size_t size() const { return entries_.size(); }

  json to_json() const;
  static SieTable from_json(const json& j);
  void save(const fs::path& path) const;
  static SieTable load(const fs::path& path);

 private:
  Index dim_ = 0;
  std::string checkpoint_hash_;
  std::map<std::string, SIE> entries_;
};

/// Mean of an embedding set followed by normalization; nullopt when the mean's
/// norm is below SIE::kMinNorm.
std::optional<SIE> averaged_embedding(const std::vector<VectorXf>& embeddings);

template <typename Scalar>
SieTable build_sie_table(SieEncoder<Scalar>& encoder, const std::vector<corpus::LabeledWindow>& windows,
                         const std::string& checkpoint_hash = {}, Index batch_size = 32) {
  SieTable table(encoder.config().d_sie, checkpoint_hash);
  const SingerWindows groups = group_by_singer(windows);
  for (const auto& [singer, list] : groups) {
    std::vector<VectorXf> embs;
    for (std::size_t start = 0; start < list.size(); start += static_cast<std::size_t>(batch_size)) {
      const std::size_t end = std::min(list.size(), start + static_cast<std::size_t>(batch_size));
      std::vector<const MatrixXf*> chunk(list.begin() + static_cast<long>(start), list.begin() + static_cast<long>(end));
      const Mat<Scalar> e = encoder.embed_batch(chunk);
      for (Index r = 0; r < e.rows(); ++r) embs.push_back(e.row(r).transpose().template cast<float>());
    }
    if (auto avg = averaged_embedding(embs))
      table.insert(singer, *avg);
    else
      log_warn("singer " + singer + ": averaged embedding is degenerate, left out of the table");
  }
  return table;
}

// Checkpoint: encoder parameters, GE2E scale/bias and the iteration counter.
template <typename Scalar>
void save_sie_checkpoint(const fs::path& path, SieEncoder<Scalar>& enc, Ge2eParams<Scalar>& ge2e, long iteration,
                         const json& extra = json::object()) {
  Archive ar;
  ar.kind = "sie-encoder";
  ar.meta = extra;
  ar.meta["config"] = enc.config().to_json();
  ar.meta["iteration"] = iteration;
  store_params(ar, enc.params());
  store_params(ar, ge2e.params());
  ar.save(path);
}

template <typename Scalar>
SieEncoder<Scalar> load_sie_checkpoint(const fs::path& path, Ge2eParams<Scalar>* ge2e = nullptr,
                                       long* iteration = nullptr) {
  const Archive ar = Archive::load(path, "sie-encoder");
  SieEncoder<Scalar> enc(SieConfig::from_json(ar.meta.at("config")), 0);
  load_params(ar, enc.params());
  if (ge2e) load_params(ar, ge2e->params());
  if (iteration) *iteration = ar.meta.value("iteration", 0L);
  return enc;
}

}  // namespace svclab::sie
