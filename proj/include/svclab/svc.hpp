#pragma once

// SIE-conditioned autoencoder for singing voice conversion.
//
// The content encoder sees the mel window together with the singer embedding
// and squeezes it into a (code_steps x code_channels) bottleneck; the decoder
// upsamples the code, re-attaches an embedding and predicts the mel window.
// Training minimizes L1 reconstruction plus an optional weighted latent term
// computed either on the bottleneck (encoder re-applied to the output) or on
// the frozen SIE encoder's view of the output.

#include "svclab/corpus.hpp"
#include "svclab/io.hpp"
#include "svclab/log.hpp"
#include "svclab/nn/adam.hpp"
#include "svclab/nn/batch.hpp"
#include "svclab/nn/layers.hpp"
#include "svclab/sie.hpp"
#include "svclab/types.hpp"

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace svclab::svc {

template <typename Scalar>
using Mat = nn::Mat<Scalar>;
using nn::Tape;
using nn::Var;

enum class LossVariant { recon, recon_bn_lr, recon_sie_lr };

LossVariant parse_variant(std::string_view s);
std::string_view to_string(LossVariant v);

struct LossSpec {
  LossVariant variant = LossVariant::recon;
  double lambda = 1.0;

  void validate() const {
    if (!(lambda >= 0.0)) throw Error(Errc::config, "latent loss weight lambda must be non-negative");
  }
  bool has_latent() const { return variant != LossVariant::recon && lambda != 0.0; }
};

struct SvcConfig {
  Index n_mels = kMelBins;
  Index frames = kWindowFrames;
  Index d_sie = 256;
  Index code_steps = kCodeSteps;
  Index code_channels = kCodeChannels;
  Index kernel = 5;
  Index enc_conv_channels = 512;
  Index enc_conv_layers = 3;
  Index enc_lstm_layers = 2;
  Index dec_pre_hidden = 512;
  Index dec_conv_channels = 512;
  Index dec_conv_layers = 3;
  Index dec_lstm_hidden = 1024;
  Index dec_lstm_layers = 2;

  /// Desk-scale sizes used for smoke runs on a single core.
  static SvcConfig toy();

  Index downsample() const { return frames / code_steps; }
  void validate() const;
  json to_json() const;
  static SvcConfig from_json(const json& j);
};

template <typename Scalar>
class ContentEncoder {
 public:
  ContentEncoder() = default;
  ContentEncoder(const SvcConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    Index in = cfg.n_mels + cfg.d_sie;
    for (Index l = 0; l < cfg.enc_conv_layers; ++l) {
      convs_.emplace_back("enc.conv" + std::to_string(l), in, cfg.enc_conv_channels, cfg.kernel, rng);
      in = cfg.enc_conv_channels;
    }
    const Index half = cfg.code_channels / 2;
    for (Index l = 0; l < cfg.enc_lstm_layers; ++l) {
      lstm_.emplace_back("enc.blstm" + std::to_string(l), in, half, rng);
      in = 2 * half;
    }
  }

  /// x: (T*B x n_mels), s: (B x d_sie) -> code (code_steps*B x code_channels).
  Var operator()(Tape<Scalar>& tape, Var x, Var s) {
    const Index steps = tape.steps(x);
    if (steps != cfg_.frames || tape.value(x).cols() != cfg_.n_mels)
      throw Error(Errc::shape, "content encoder expects " + std::to_string(cfg_.frames) + "x" +
                                   std::to_string(cfg_.n_mels) + " windows");
    if (tape.value(s).cols() != cfg_.d_sie || tape.value(s).rows() != tape.batch(x))
      throw Error(Errc::shape, "conditioning embedding has the wrong shape");
    Var h = nn::concat_cols(tape, x, nn::broadcast_time(tape, s, steps));
    for (auto& c : convs_) h = nn::relu(tape, c(tape, h));
    Var fwd{}, bwd{};
    for (std::size_t l = 0; l < lstm_.size(); ++l) {
      std::tie(fwd, bwd) = lstm_[l](tape, h);
      if (l + 1 < lstm_.size()) h = nn::concat_cols(tape, fwd, bwd);
    }
    // Forward direction sampled at the end of each segment, backward at its start.
    const Index freq = cfg_.downsample();
    std::vector<Index> fwd_frames, bwd_frames;
    for (Index k = 0; k < cfg_.code_steps; ++k) {
      fwd_frames.push_back(k * freq + freq - 1);
      bwd_frames.push_back(k * freq);
    }
    return nn::concat_cols(tape, nn::select_time(tape, fwd, fwd_frames), nn::select_time(tape, bwd, bwd_frames));
  }

  void collect(nn::ParamList<Scalar>& out) {
    for (auto& c : convs_) c.collect(out);
    for (auto& l : lstm_) l.collect(out);
  }

 private:
  SvcConfig cfg_;
  std::vector<nn::Conv1d<Scalar>> convs_;
  std::vector<nn::BiLSTMLayer<Scalar>> lstm_;
};

template <typename Scalar>
class Decoder {
 public:
  Decoder() = default;
  Decoder(const SvcConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    pre_ = nn::LSTMLayer<Scalar>("dec.pre_lstm", cfg.code_channels + cfg.d_sie, cfg.dec_pre_hidden, false, rng);
    Index in = cfg.dec_pre_hidden;
    for (Index l = 0; l < cfg.dec_conv_layers; ++l) {
      convs_.emplace_back("dec.conv" + std::to_string(l), in, cfg.dec_conv_channels, cfg.kernel, rng);
      in = cfg.dec_conv_channels;
    }
    for (Index l = 0; l < cfg.dec_lstm_layers; ++l) {
      lstm_.emplace_back("dec.lstm" + std::to_string(l), in, cfg.dec_lstm_hidden, false, rng);
      in = cfg.dec_lstm_hidden;
    }
    out_ = nn::Linear<Scalar>("dec.out", in, cfg.n_mels, rng);
  }

  /// code: (code_steps*B x code_channels), s: (B x d_sie) -> (T*B x n_mels) in [0, 1].
  Var operator()(Tape<Scalar>& tape, Var code, Var s) {
    if (tape.steps(code) != cfg_.code_steps || tape.value(code).cols() != cfg_.code_channels)
      throw Error(Errc::shape, "decoder expects " + std::to_string(cfg_.code_steps) + "x" +
                                   std::to_string(cfg_.code_channels) + " codes");
    if (tape.value(s).cols() != cfg_.d_sie || tape.value(s).rows() != tape.batch(code))
      throw Error(Errc::shape, "conditioning embedding has the wrong shape");
    Var up = nn::repeat_time(tape, code, cfg_.downsample());
    Var h = nn::concat_cols(tape, up, nn::broadcast_time(tape, s, cfg_.frames));
    h = pre_(tape, h);
    for (auto& c : convs_) h = nn::relu(tape, c(tape, h));
    for (auto& l : lstm_) h = l(tape, h);
    return nn::sigmoid(tape, out_(tape, h));
  }

  void collect(nn::ParamList<Scalar>& out) {
    pre_.collect(out);
    for (auto& c : convs_) c.collect(out);
    for (auto& l : lstm_) l.collect(out);
    out_.collect(out);
  }

 private:
  SvcConfig cfg_;
  nn::LSTMLayer<Scalar> pre_;
  std::vector<nn::Conv1d<Scalar>> convs_;
  std::vector<nn::LSTMLayer<Scalar>> lstm_;
  nn::Linear<Scalar> out_;
};

/// The trainable encoder/decoder pair.
template <typename Scalar>
struct SvcNet {
  SvcConfig config;
  ContentEncoder<Scalar> encoder;
  Decoder<Scalar> decoder;

  SvcNet() = default;
  SvcNet(const SvcConfig& cfg, std::uint64_t seed) : config(cfg) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    encoder = ContentEncoder<Scalar>(cfg, rng);
    decoder = Decoder<Scalar>(cfg, rng);
  }

  nn::ParamList<Scalar> params() {
    nn::ParamList<Scalar> out;
    encoder.collect(out);
    decoder.collect(out);
    return out;
  }
};

// ---- loss terms -----------------------------------------------------------

template <typename Scalar>
Var recon_loss(Tape<Scalar>& tape, Var x_hat, Var x) {
  return nn::l1_mean(tape, x_hat, x);
}

/// L1 between bottleneck codes of the reconstruction and the input, both
/// encoded with the same conditioning; gradients flow through both passes.
template <typename Scalar, typename EncoderFn>
Var bn_lr_loss(Tape<Scalar>& tape, Var x_hat, Var x, Var s, EncoderFn&& encode) {
  return nn::l1_mean(tape, encode(tape, x_hat, s), encode(tape, x, s));
}

/// L1 between SIE encoder outputs for the reconstruction and the input.
template <typename Scalar, typename SieFn>
Var sie_lr_loss(Tape<Scalar>& tape, Var x_hat, Var x, SieFn&& embed) {
  return nn::l1_mean(tape, embed(tape, x_hat), embed(tape, x));
}

struct LossTerms {
  Var total;
  Var recon;
  Var latent;  // invalid when the variant has no latent term
};

template <typename Scalar>
struct LossValues {
  Scalar total = 0;
  Scalar recon = 0;
  Scalar latent = 0;
};

/// Reconstruction plus lambda times the variant's latent term. With lambda == 0
/// or the RECON variant, `total` is the reconstruction node itself.
template <typename Scalar>
LossTerms total_loss(Tape<Scalar>& tape, const LossSpec& spec, Var x, Var s, SvcNet<Scalar>& net,
                     sie::SieEncoder<Scalar>& sie_encoder) {
  spec.validate();
  Var code = net.encoder(tape, x, s);
  Var x_hat = net.decoder(tape, code, s);
  LossTerms terms;
  terms.recon = recon_loss(tape, x_hat, x);
  terms.total = terms.recon;
  if (spec.variant == LossVariant::recon_bn_lr) {
    terms.latent = bn_lr_loss(tape, x_hat, x, s, [&](Tape<Scalar>& t, Var in, Var cond) {
      return net.encoder(t, in, cond);
    });
  } else if (spec.variant == LossVariant::recon_sie_lr) {
    terms.latent = sie_lr_loss(tape, x_hat, x, [&](Tape<Scalar>& t, Var in) { return sie_encoder.forward(t, in); });
  }
  if (terms.latent.valid() && spec.lambda != 0.0)
    terms.total = nn::add(tape, terms.recon, nn::scale(tape, terms.latent, static_cast<Scalar>(spec.lambda)));
  return terms;
}

// ---- model ----------------------------------------------------------------

/// Trainable network plus its frozen SIE encoder and averaged SIE table.
template <typename Scalar>
struct SvcModel {
  SvcNet<Scalar> net;
  sie::SieEncoder<Scalar> sie_encoder;
  sie::SieTable table;
  LossSpec loss;
  long iteration = 0;

  SvcModel() = default;
  SvcModel(SvcNet<Scalar> n, sie::SieEncoder<Scalar> enc, sie::SieTable t, LossSpec spec)
      : net(std::move(n)), sie_encoder(std::move(enc)), table(std::move(t)), loss(spec) {
    sie_encoder.set_frozen(true);
    if (sie_encoder.config().d_sie != net.config.d_sie)
      throw Error(Errc::config, "SIE encoder dimension does not match the conversion network");
  }

  const SvcConfig& config() const { return net.config; }
};

namespace detail {

template <typename Scalar>
Mat<Scalar> sie_row(const SIE& s) {
  return s.vector().transpose().template cast<Scalar>();
}

inline void check_window(const MatrixXf& m, const SvcConfig& cfg) {
  if (m.rows() != cfg.frames || m.cols() != cfg.n_mels)
    throw Error(Errc::shape, "expected a " + std::to_string(cfg.frames) + "x" + std::to_string(cfg.n_mels) +
                                 " window, got " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
}

inline void check_sie(const SIE& s, const SvcConfig& cfg) {
  if (s.dim() != cfg.d_sie)
    throw Error(Errc::shape, "SIE has dimension " + std::to_string(s.dim()) + ", model expects " +
                                 std::to_string(cfg.d_sie));
}

}  // namespace detail

/// Encodes a single window (frames x n_mels) to its (code_steps x code_channels) code.
template <typename Scalar>
MatrixXf encode_matrix(SvcNet<Scalar>& net, const MatrixXf& x, const SIE& s) {
  detail::check_window(x, net.config);
  detail::check_sie(s, net.config);
  Tape<Scalar> tape;
  Var xv = tape.constant(x.template cast<Scalar>(), 1);
  Var sv = tape.constant(detail::sie_row<Scalar>(s), 1);
  return tape.value(net.encoder(tape, xv, sv)).template cast<float>();
}

template <typename Scalar>
MatrixXf decode_matrix(SvcNet<Scalar>& net, const MatrixXf& code, const SIE& s) {
  if (code.rows() != net.config.code_steps || code.cols() != net.config.code_channels)
    throw Error(Errc::shape, "code has the wrong shape");
  detail::check_sie(s, net.config);
  Tape<Scalar> tape;
  Var cv = tape.constant(code.template cast<Scalar>(), 1);
  Var sv = tape.constant(detail::sie_row<Scalar>(s), 1);
  return tape.value(net.decoder(tape, cv, sv)).template cast<float>();
}

template <typename Scalar>
ContentCode encode_content(SvcModel<Scalar>& model, const MelWindow& x, const SIE& s) {
  return ContentCode(encode_matrix(model.net, x.values(), s));
}

template <typename Scalar>
MelWindow decode(SvcModel<Scalar>& model, const ContentCode& r, const SIE& s) {
  return MelWindow(decode_matrix(model.net, r.values(), s));
}

/// Source content re-voiced with the target embedding.
template <typename Scalar>
MelWindow convert(SvcModel<Scalar>& model, const MelWindow& source, const SIE& source_sie, const SIE& target_sie) {
  return decode(model, encode_content(model, source, source_sie), target_sie);
}

/// Converts a whole clip (T x n_mels, T >= frames) window by window. The last
/// window is aligned to the clip end and only its new frames are kept.
template <typename Scalar>
MatrixXf convert_clip(SvcModel<Scalar>& model, const MatrixXf& mel, const SIE& source_sie, const SIE& target_sie) {
  const Index win = model.config().frames;
  if (mel.rows() < win)
    throw Error(Errc::too_short, "clip has " + std::to_string(mel.rows()) + " frames, conversion needs " +
                                     std::to_string(win));
  MatrixXf out(mel.rows(), mel.cols());
  Index start = 0;
  while (start < mel.rows()) {
    const Index at = std::min(start, mel.rows() - win);
    const MatrixXf code = encode_matrix(model.net, MatrixXf(mel.middleRows(at, win)), source_sie);
    const MatrixXf y = decode_matrix(model.net, code, target_sie);
    out.middleRows(start, at + win - start) = y.bottomRows(at + win - start);
    start = at + win;
  }
  return out;
}

double loss_recon(const MatrixXf& x_hat, const MatrixXf& x);

template <typename Scalar, typename EncoderFn>
double loss_bn_lr(const MatrixXf& x_hat, const MatrixXf& x, const SIE& s, EncoderFn&& encode) {
  if (x_hat.rows() != x.rows() || x_hat.cols() != x.cols()) throw Error(Errc::shape, "loss inputs differ in shape");
  Tape<Scalar> tape;
  Var a = tape.constant(x_hat.template cast<Scalar>(), 1);
  Var b = tape.constant(x.template cast<Scalar>(), 1);
  Var sv = tape.constant(detail::sie_row<Scalar>(s), 1);
  return static_cast<double>(tape.value(bn_lr_loss(tape, a, b, sv, encode))(0, 0));
}

template <typename Scalar>
double loss_bn_lr(const MatrixXf& x_hat, const MatrixXf& x, const SIE& s, SvcModel<Scalar>& model) {
  return loss_bn_lr<Scalar>(x_hat, x, s, [&](Tape<Scalar>& t, Var in, Var cond) {
    return model.net.encoder(t, in, cond);
  });
}

template <typename Scalar, typename SieFn>
double loss_sie_lr(const MatrixXf& x_hat, const MatrixXf& x, SieFn&& embed) {
  if (x_hat.rows() != x.rows() || x_hat.cols() != x.cols()) throw Error(Errc::shape, "loss inputs differ in shape");
  Tape<Scalar> tape;
  Var a = tape.constant(x_hat.template cast<Scalar>(), 1);
  Var b = tape.constant(x.template cast<Scalar>(), 1);
  return static_cast<double>(tape.value(sie_lr_loss(tape, a, b, embed))(0, 0));
}

template <typename Scalar>
double loss_sie_lr(const MatrixXf& x_hat, const MatrixXf& x, sie::SieEncoder<Scalar>& enc) {
  return loss_sie_lr<Scalar>(x_hat, x, [&](Tape<Scalar>& t, Var in) { return enc.forward(t, in); });
}

template <typename Scalar>
LossValues<Scalar> total_loss(const LossSpec& spec, const MatrixXf& x, const SIE& s, SvcModel<Scalar>& model) {
  detail::check_window(x, model.config());
  detail::check_sie(s, model.config());
  Tape<Scalar> tape;
  Var xv = tape.constant(x.template cast<Scalar>(), 1);
  Var sv = tape.constant(detail::sie_row<Scalar>(s), 1);
  const LossTerms t = total_loss(tape, spec, xv, sv, model.net, model.sie_encoder);
  LossValues<Scalar> out;
  out.total = tape.value(t.total)(0, 0);
  out.recon = tape.value(t.recon)(0, 0);
  out.latent = t.latent.valid() ? tape.value(t.latent)(0, 0) : Scalar(0);
  return out;
}

// ---- training -------------------------------------------------------------

struct SvcTrainConfig {
  long iters = 500000;
  Index batch = 2;
  double lr = 1e-4;
  std::uint64_t seed = 7;
  long checkpoint_every = 10000;
  long eval_every = 1000;
};

struct SvcHistory {
  std::vector<double> total;
  std::vector<double> recon;
  std::vector<double> latent;
  std::vector<std::pair<long, double>> validation;  // (iteration, mean total loss)
};

template <typename Scalar>
struct SvcCheckpointHooks {
  std::function<void(SvcModel<Scalar>&, long)> periodic;
  std::function<void(SvcModel<Scalar>&, long)> best;
};

template <typename Scalar>
Scalar mean_loss(SvcModel<Scalar>& model, const std::vector<corpus::LabeledWindow>& windows, Index batch) {
  Scalar acc = 0;
  Index count = 0;
  for (std::size_t start = 0; start + static_cast<std::size_t>(batch) <= windows.size();
       start += static_cast<std::size_t>(batch)) {
    std::vector<const MatrixXf*> xs;
    Mat<Scalar> S(batch, model.config().d_sie);
    for (Index b = 0; b < batch; ++b) {
      const auto& w = windows[start + static_cast<std::size_t>(b)];
      xs.push_back(&w.mel);
      S.row(b) = detail::sie_row<Scalar>(model.table.at(w.singer_id));
    }
    Tape<Scalar> tape;
    Var x = tape.constant(nn::pack_time_major<Scalar>(xs), batch);
    Var s = tape.constant(S, batch);
    acc += tape.value(total_loss(tape, model.loss, x, s, model.net, model.sie_encoder).total)(0, 0);
    ++count;
  }
  return count ? acc / static_cast<Scalar>(count) : Scalar(0);
}

/// Adam on the conversion network; conditioning embeddings come from the
/// model's SIE table by singer id. Resumes from `model.iteration`.
template <typename Scalar>
SvcHistory train_svc(SvcModel<Scalar>& model, const std::vector<corpus::LabeledWindow>& train,
                     const SvcTrainConfig& cfg, nn::Adam<Scalar>& adam,
                     const std::vector<corpus::LabeledWindow>& validation = {},
                     const SvcCheckpointHooks<Scalar>& hooks = {}) {
  model.loss.validate();
  if (cfg.batch < 1) throw Error(Errc::config, "batch size must be at least 1");
  if (static_cast<Index>(train.size()) < cfg.batch)
    throw Error(Errc::data, "training set has fewer windows than one batch");
  for (const auto& w : train) {
    detail::check_window(w.mel, model.config());
    if (!model.table.contains(w.singer_id))
      throw Error(Errc::data, "training singer '" + w.singer_id + "' is missing from the SIE table");
  }
  auto params = model.net.params();
  std::mt19937_64 rng(cfg.seed + static_cast<std::uint64_t>(model.iteration));
  SvcHistory hist;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(train.size());

  const long start = model.iteration;
  for (long it = start + 1; it <= cfg.iters; ++it) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<const MatrixXf*> xs;
    Mat<Scalar> S(cfg.batch, model.config().d_sie);
    for (Index b = 0; b < cfg.batch; ++b) {
      std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(b), order.size() - 1);
      std::swap(order[static_cast<std::size_t>(b)], order[pick(rng)]);
      const auto& w = train[order[static_cast<std::size_t>(b)]];
      xs.push_back(&w.mel);
      S.row(b) = detail::sie_row<Scalar>(model.table.at(w.singer_id));
    }
    Tape<Scalar> tape;
    Var x = tape.constant(nn::pack_time_major<Scalar>(xs), cfg.batch);
    Var s = tape.constant(S, cfg.batch);
    nn::zero_grads(params);
    const LossTerms terms = total_loss(tape, model.loss, x, s, model.net, model.sie_encoder);
    const double total = static_cast<double>(tape.value(terms.total)(0, 0));
    const double recon = static_cast<double>(tape.value(terms.recon)(0, 0));
    const double latent = terms.latent.valid() ? static_cast<double>(tape.value(terms.latent)(0, 0)) : 0.0;
    if (!std::isfinite(total))
      throw Error(Errc::divergence, "conversion training diverged at iteration " + std::to_string(it) +
                                        " (recon " + std::to_string(recon) + ", latent " + std::to_string(latent) + ")");
    tape.backward(terms.total);
    adam.step(params);
    model.iteration = it;
    hist.total.push_back(total);
    hist.recon.push_back(recon);
    hist.latent.push_back(latent);

    if (!validation.empty() && cfg.eval_every > 0 && it % cfg.eval_every == 0) {
      const double v = static_cast<double>(mean_loss(model, validation, cfg.batch));
      hist.validation.emplace_back(it, v);
      if (v < best_val) {
        best_val = v;
        if (hooks.best) hooks.best(model, it);
      }
    }
    if (cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0) {
      log_info("svc iter " + std::to_string(it) + " total " + std::to_string(total) + " recon " +
               std::to_string(recon) + " latent " + std::to_string(latent));
      if (hooks.periodic) hooks.periodic(model, it);
    }
  }
  return hist;
}

// ---- checkpoints ----------------------------------------------------------

template <typename Scalar>
void save_svc_checkpoint(const fs::path& path, SvcModel<Scalar>& model, nn::Adam<Scalar>* adam = nullptr,
                         const json& extra = json::object()) {
  Archive ar;
  ar.kind = "svc-model";
  ar.meta = extra;
  ar.meta["svc_config"] = model.net.config.to_json();
  ar.meta["sie_config"] = model.sie_encoder.config().to_json();
  ar.meta["variant"] = std::string(to_string(model.loss.variant));
  ar.meta["lambda"] = model.loss.lambda;
  ar.meta["iteration"] = model.iteration;
  ar.meta["table"] = model.table.to_json();
  auto net_params = model.net.params();
  store_params(ar, net_params);
  store_params(ar, model.sie_encoder.params());
  if (adam && !adam->first_moments().empty()) {
    ar.meta["adam_steps"] = adam->steps();
    ar.meta["adam_lr"] = static_cast<double>(adam->options().lr);
    for (std::size_t i = 0; i < net_params.size(); ++i) {
      ar.tensors["adam.m." + net_params[i]->name] = adam->first_moments()[i].template cast<double>();
      ar.tensors["adam.v." + net_params[i]->name] = adam->second_moments()[i].template cast<double>();
    }
  }
  ar.save(path);
}

template <typename Scalar>
SvcModel<Scalar> load_svc_checkpoint(const fs::path& path, nn::Adam<Scalar>* adam = nullptr) {
  const Archive ar = Archive::load(path, "svc-model");
  SvcNet<Scalar> net(SvcConfig::from_json(ar.meta.at("svc_config")), 0);
  sie::SieEncoder<Scalar> enc(sie::SieConfig::from_json(ar.meta.at("sie_config")), 0);
  LossSpec spec{parse_variant(ar.meta.at("variant").get<std::string>()), ar.meta.at("lambda").get<double>()};
  SvcModel<Scalar> model(std::move(net), std::move(enc), sie::SieTable::from_json(ar.meta.at("table")), spec);
  auto net_params = model.net.params();
  load_params(ar, net_params);
  load_params(ar, model.sie_encoder.params());
  model.iteration = ar.meta.value("iteration", 0L);
  if (adam && ar.meta.contains("adam_steps")) {
    auto& m = adam->first_moments();
    auto& v = adam->second_moments();
    m.clear();
    v.clear();
    for (auto* p : net_params) {
      m.push_back(ar.at("adam.m." + p->name).template cast<Scalar>());
      v.push_back(ar.at("adam.v." + p->name).template cast<Scalar>());
    }
    adam->set_steps(ar.meta.at("adam_steps").get<long>());
  }
  return model;
}

}  // namespace svclab::svc
