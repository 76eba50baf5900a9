#include "commands.hpp"

#include "svclab/corpus.hpp"
#include "svclab/dsp/audio.hpp"
#include "svclab/evalkit.hpp"
#include "svclab/log.hpp"
#include "svclab/pitchmatch.hpp"
#include "svclab/sie.hpp"
#include "svclab/studysvc.hpp"
#include "svclab/svc.hpp"
#include "svclab/synth.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <set>
#include <sstream>

namespace svclab::cli {

namespace {

using corpus::SingerRecord;

// ---- shared helpers -----------------------------------------------------------

std::vector<SingerRecord> load_data(const RunContext& ctx, const std::string& key = "data") {
  const fs::path dir = ctx.path(key);
  if (!fs::is_directory(dir)) throw Error(Errc::not_found, "data directory not found: " + dir.string());
  auto records = corpus::load_records(dir);
  if (records.empty()) throw Error(Errc::empty_input, "no preprocessed clips in " + dir.string());
  return records;
}

std::optional<corpus::DatasetSplits> load_splits(const RunContext& ctx, const std::string& key = "data") {
  const fs::path p = ctx.path(key) / "splits.json";
  if (!fs::exists(p)) return std::nullopt;
  return corpus::DatasetSplits::from_json(json::parse(read_text_file(p)));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

/// "all", a split name, "heldout" (validation + test) or a comma-separated list.
std::vector<std::string> select_singers(const std::string& sel, const std::optional<corpus::DatasetSplits>& splits,
                                        const std::vector<SingerRecord>& records) {
  std::set<std::string> known;
  for (const auto& r : records) known.insert(r.singer_id);
  if (sel == "all") return {known.begin(), known.end()};
  if (sel == "train" || sel == "validation" || sel == "test" || sel == "heldout") {
    if (!splits) throw Error(Errc::config, "singer selection '" + sel + "' needs splits.json in the data directory");
    std::vector<std::string> out;
    if (sel == "train") out = splits->train;
    if (sel == "validation" || sel == "heldout") out.insert(out.end(), splits->validation.begin(), splits->validation.end());
    if (sel == "test" || sel == "heldout") out.insert(out.end(), splits->test.begin(), splits->test.end());
    std::sort(out.begin(), out.end());
    return out;
  }
  auto out = split_list(sel);
  for (const auto& s : out)
    if (!known.contains(s)) throw Error(Errc::data, "unknown singer '" + s + "'");
  return out;
}

template <typename Config>
Config model_config(const std::string& size, const json& overrides) {
  Config base;
  if (size == "toy")
    base = Config::toy();
  else if (size != "full")
    throw Error(Errc::config, "model size must be 'full' or 'toy', got '" + size + "'");
  json j = base.to_json();
  j.merge_patch(overrides);
  return Config::from_json(j);
}

const SingerRecord& find_record(const std::vector<SingerRecord>& records, const std::string& clip_id) {
  for (const auto& r : records)
    if (r.clip_id == clip_id) return r;
  throw Error(Errc::not_found, "clip '" + clip_id + "' is not in the data directory");
}

/// Table entry, or the averaged embedding of the singer's windows for singers outside the table.
SIE singer_sie(svc::SvcModel<float>& model, const std::string& singer, const std::vector<SingerRecord>& records) {
  if (model.table.contains(singer)) return model.table.at(singer);
  std::vector<const SingerRecord*> mine;
  for (const auto& r : records)
    if (r.singer_id == singer) mine.push_back(&r);
  const auto windows = corpus::labeled_windows(mine);
  if (windows.empty()) throw Error(Errc::too_short, "singer '" + singer + "' has no full-length window to embed");
  const sie::SieTable t = sie::build_sie_table(model.sie_encoder, windows);
  if (!t.contains(singer)) throw Error(Errc::degenerate, "singer '" + singer + "' has a degenerate embedding");
  return t.at(singer);
}

dsp::Waveform resynthesize(const MatrixXf& mel, const dsp::MelNormalization& norm, const RunContext& ctx) {
  dsp::GriffinLimOptions opt;
  opt.iters = ctx.get<int>("gl-iters");
  opt.seed = ctx.get<std::uint64_t>("seed");
  return dsp::griffin_lim(mel, norm, dsp::MelConfig{}, opt);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---- commands -----------------------------------------------------------------

int synth_corpus(RunContext& ctx) {
  const fs::path out = ctx.path("out");
  const auto seed = ctx.get<std::uint64_t>("seed");
  auto roster = synth::toy_roster(ctx.get<int>("singers"), ctx.get<int>("clips"), seed);
  for (auto& s : roster) s.breath *= ctx.get<double>("breath");
  synth::SynthOptions opt;
  opt.vibrato_st = ctx.get<double>("vibrato");
  opt.seconds = ctx.get<double>("seconds");
  synth::write_corpus(out, roster, seed, opt);
  ctx.stamp(out);
  std::cout << "wrote " << roster.size() << " synthetic singers to " << out.string() << "\n";
  return 0;
}

int preprocess(RunContext& ctx) {
  const fs::path in = ctx.path("in");
  const fs::path out = ctx.path("out");
  if (!fs::is_directory(in)) throw Error(Errc::ingestion, "input directory not found: " + in.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(in))
    if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(Errc::empty_input, "no .wav files under " + in.string());

  const fs::path meta_path = ctx.has("metadata") ? ctx.path("metadata") : in / "singers.csv";
  std::map<std::string, Gender> genders;
  if (fs::exists(meta_path)) genders = corpus::read_singer_metadata(meta_path);

  corpus::TrimOptions trim{ctx.get<double>("threshold-db"), ctx.get<double>("chunk-ms")};
  fs::create_directories(out);
  std::vector<SingerRecord> records;
  std::set<std::string> clip_ids;
  int skipped = 0;
  for (const auto& f : files) {
    const std::string clip = f.stem().string();
    std::string singer = f.parent_path() == in ? clip.substr(0, clip.find('_')) : f.parent_path().filename().string();
    if (!clip_ids.insert(clip).second) throw Error(Errc::data, "duplicate clip id '" + clip + "' under " + in.string());
    const auto g = genders.find(singer);
    try {
      auto rec = corpus::make_record(corpus::load_audio(f), singer, clip, g == genders.end() ? Gender::unknown : g->second,
                                     trim);
      rec.source_path = fs::absolute(f).lexically_normal().string();
      corpus::write_record(out, rec);
      rec.mel.resize(0, 0);
      records.push_back(std::move(rec));
    } catch (const Error& e) {
      log_warn(f.string() + ": skipped (" + e.what() + ")");
      ++skipped;
    }
  }
  if (records.empty()) throw Error(Errc::empty_input, "every input file was rejected");
  const auto splits = corpus::split_dataset(records, ctx.get<double>("train-frac"), ctx.get<std::uint64_t>("seed"));
  write_text_file(out / "splits.json", splits.to_json().dump(2) + "\n");
  ctx.stamp(out, {{"clips", records.size()}, {"skipped", skipped}});
  std::cout << "preprocessed " << records.size() << " clips (" << skipped << " skipped); splits " << splits.train.size()
            << "/" << splits.validation.size() << "/" << splits.test.size() << "\n";
  return 0;
}

int train_sie(RunContext& ctx) {
  const auto records = load_data(ctx);
  const auto splits = load_splits(ctx);
  const std::string sel = ctx.get<std::string>("singers");
  const auto train_ids = select_singers(sel, splits, records);
  const auto val_ids = sel == "train" && splits ? splits->validation : train_ids;
  const auto train_windows = corpus::labeled_windows(corpus::records_of(records, train_ids));
  const auto val_windows = corpus::labeled_windows(corpus::records_of(records, val_ids));

  const auto model = model_config<sie::SieConfig>(ctx.get<std::string>("size"), ctx.get<json>("model"));
  sie::SieTrainConfig tc;
  tc.iters = ctx.get<long>("iters");
  tc.lr = ctx.get<double>("lr");
  tc.n = ctx.get<Index>("n");
  tc.m = ctx.get<Index>("m");
  tc.patience = ctx.get<int>("patience");
  tc.eval_every = ctx.get<long>("eval-every");
  tc.grad_clip = ctx.get<double>("grad-clip");
  tc.seed = ctx.get<std::uint64_t>("seed");

  auto trained = sie::train_sie<float>(sie::group_by_singer(train_windows), sie::group_by_singer(val_windows), model, tc);
  const fs::path out = ctx.path("out");
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_sie_checkpoint(out, trained.encoder, trained.ge2e, trained.history.best_iter,
                      {{"config_hash", ctx.hash()}, {"singers", train_ids}});

  const auto& h = trained.history;
  json evals = json::array();
  for (const auto& e : h.evals) evals.push_back({{"iter", e.iter}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
  write_text_file(out.string() + ".history.json",
                  json{{"train_loss", h.train_loss}, {"evals", evals}, {"best_iter", h.best_iter},
                       {"iterations_run", h.iterations_run}, {"stopped_early", h.stopped_early}}
                      .dump() +
                      "\n");
  ctx.stamp(out, {{"checkpoint_hash", file_hash(out)}, {"best_iter", h.best_iter}});
  std::cout << "SIE encoder: " << h.iterations_run << " iterations, best at " << h.best_iter
            << (h.stopped_early ? " (stopped early)" : "") << " -> " << out.string() << "\n";
  return 0;
}

int build_table(RunContext& ctx) {
  const fs::path ckpt = ctx.path("ckpt");
  auto enc = sie::load_sie_checkpoint<float>(ckpt);
  const auto records = load_data(ctx);
  const auto ids = select_singers(ctx.get<std::string>("singers"), load_splits(ctx), records);
  const auto windows = corpus::labeled_windows(corpus::records_of(records, ids));
  const std::string hash = file_hash(ckpt);
  const auto table = sie::build_sie_table(enc, windows, hash);
  for (const auto& s : ids)
    if (!table.contains(s)) log_warn("singer " + s + " has no SIE table entry");
  const fs::path out = ctx.path("out");
  table.save(out);
  ctx.stamp(out, {{"sie_checkpoint_hash", hash}, {"singers", table.size()}});
  std::cout << "SIE table with " << table.size() << " singers -> " << out.string() << "\n";
  return 0;
}

int pitch_catalog(RunContext& ctx) {
  const auto records = load_data(ctx);
  pitch::YinOptions yin;
  yin.fmin = ctx.get<double>("fmin");
  yin.fmax = ctx.get<double>("fmax");
  yin.threshold = ctx.get<double>("yin-threshold");
  pitch::Catalog catalog;
  std::size_t n = 0;
  for (const auto& r : records) {
    if (!fs::exists(r.source_path)) {
      log_warn("clip " + r.clip_id + ": source audio missing, not catalogued");
      continue;
    }
    try {
      const auto range = pitch::pitch_range(pitch::extract_f0(corpus::load_audio(r.source_path), yin));
      catalog[r.singer_id].push_back({r.clip_id, range});
      ++n;
    } catch (const Error& e) {
      log_warn("clip " + r.clip_id + ": " + e.what());
    }
  }
  const fs::path out = ctx.path("out");
  pitch::write_catalog(out, catalog);
  ctx.stamp(out, {{"clips", n}});
  std::cout << "pitch catalog: " << n << " clips from " << catalog.size() << " singers -> " << out.string() << "\n";
  return 0;
}

int match(RunContext& ctx) {
  const auto catalog = pitch::read_catalog(ctx.path("catalog"));
  const auto [singer, range] = pitch::find_clip(catalog, ctx.get<std::string>("source-clip"));
  pitch::MatchOptions opt{ctx.get<double>("tol"), ctx.get<bool>("require-overlap")};
  const auto matches = pitch::match_targets(range, catalog, opt, singer);
  if (matches.empty()) log_warn("no target singer within " + fmt(opt.tol_st) + " semitones");
  std::printf("source %s (%s) median %.2f st\n", ctx.get<std::string>("source-clip").c_str(), singer.c_str(),
              range.median_st);
  json out = json::array();
  for (const auto& m : matches) {
    std::printf("  %-12s %-16s delta %.2f st\n", m.singer_id.c_str(), m.clip_id.c_str(), m.delta_st);
    out.push_back({{"singer_id", m.singer_id}, {"clip_id", m.clip_id}, {"delta_st", m.delta_st}});
  }
  if (ctx.has("out")) {
    write_text_file(ctx.path("out"), out.dump(2) + "\n");
    ctx.stamp(ctx.path("out"));
  }
  return 0;
}

int train_svc(RunContext& ctx) {
  const auto records = load_data(ctx);
  const auto splits = load_splits(ctx);
  const std::string sel = ctx.get<std::string>("singers");
  const auto train_ids = select_singers(sel, splits, records);
  const auto train_windows = corpus::labeled_windows(corpus::records_of(records, train_ids));
  std::vector<corpus::LabeledWindow> val_windows;
  if (sel == "train" && splits) val_windows = corpus::labeled_windows(corpus::records_of(records, splits->validation));

  const fs::path sie_ckpt = ctx.path("sie-ckpt");
  auto encoder = sie::load_sie_checkpoint<float>(sie_ckpt);
  auto table = sie::SieTable::load(ctx.path("table"));
  const std::string sie_hash = file_hash(sie_ckpt);
  if (!table.checkpoint_hash().empty() && table.checkpoint_hash() != sie_hash)
    throw Error(Errc::config, "SIE table was built from a different encoder checkpoint");
  // Validation singers absent from the table are dropped from validation.
  std::erase_if(val_windows, [&](const auto& w) { return !table.contains(w.singer_id); });

  auto cfg = model_config<svc::SvcConfig>(ctx.get<std::string>("size"), ctx.get<json>("model"));
  cfg.d_sie = encoder.config().d_sie;
  const svc::LossSpec spec{svc::parse_variant(ctx.get<std::string>("variant")), ctx.get<double>("lambda")};
  spec.validate();

  typename nn::Adam<float>::Options opt;
  opt.lr = static_cast<float>(ctx.get<double>("lr"));
  nn::Adam<float> adam(opt);
  const auto seed = ctx.get<std::uint64_t>("seed");
  svc::SvcModel<float> model = ctx.has("resume")
                                   ? svc::load_svc_checkpoint<float>(ctx.path("resume"), &adam)
                                   : svc::SvcModel<float>(svc::SvcNet<float>(cfg, seed), encoder, table, spec);
  const long start = model.iteration;

  svc::SvcTrainConfig tc;
  tc.iters = ctx.get<long>("iters");
  tc.batch = ctx.get<Index>("batch");
  tc.lr = ctx.get<double>("lr");
  tc.seed = seed;
  tc.checkpoint_every = ctx.get<long>("checkpoint-every");
  tc.eval_every = ctx.get<long>("eval-every");

  const fs::path out = ctx.path("out");
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  const json meta{{"config_hash", ctx.hash()}, {"sie_checkpoint_hash", sie_hash}};
  svc::SvcCheckpointHooks<float> hooks;
  hooks.periodic = [&](svc::SvcModel<float>& m, long) { save_svc_checkpoint(out, m, &adam, meta); };
  fs::path best = out;
  best.replace_extension(".best" + out.extension().string());
  hooks.best = [&](svc::SvcModel<float>& m, long) { save_svc_checkpoint(best, m, &adam, meta); };

  const auto hist = svc::train_svc(model, train_windows, tc, adam, val_windows, hooks);
  save_svc_checkpoint(out, model, &adam, meta);

  std::string csv = "iteration,total,recon,latent\n";
  for (std::size_t i = 0; i < hist.total.size(); ++i)
    csv += std::to_string(start + 1 + static_cast<long>(i)) + "," + fmt(hist.total[i]) + "," + fmt(hist.recon[i]) + "," +
           fmt(hist.latent[i]) + "\n";
  write_text_file(out.string() + ".history.csv", csv);
  if (!hist.validation.empty()) {
    std::string v = "iteration,validation\n";
    for (const auto& [it, loss] : hist.validation) v += std::to_string(it) + "," + fmt(loss) + "\n";
    write_text_file(out.string() + ".validation.csv", v);
  }
  ctx.stamp(out, {{"iterations", model.iteration}, {"resumed_from", start}});
  if (!hist.total.empty())
    std::printf("%s: iterations %ld-%ld, recon %.5f -> %.5f, latent %.5f -> %.5f\n",
                std::string(svc::to_string(spec.variant)).c_str(), start + 1, model.iteration, hist.recon.front(),
                hist.recon.back(), hist.latent.front(), hist.latent.back());
  return 0;
}

int convert(RunContext& ctx) {
  auto model = svc::load_svc_checkpoint<float>(ctx.path("model"));
  const auto records = load_data(ctx);
  const SingerRecord& src = find_record(records, ctx.get<std::string>("source"));
  const std::string target = ctx.get<std::string>("target-singer");
  if (!model.table.contains(target)) throw Error(Errc::not_found, "target singer '" + target + "' is not in the SIE table");
  const MatrixXf mel = svc::convert_clip(model, src.mel, singer_sie(model, src.singer_id, records), model.table.at(target));
  const fs::path out = ctx.has("out") ? ctx.path("out") : ctx.resolve(src.clip_id + "_to_" + target + ".mel");
  write_tensor_file(out, mel);
  ctx.stamp(out, {{"source_singer", src.singer_id}, {"frames", mel.rows()}});
  std::cout << "converted " << src.clip_id << " (" << src.singer_id << ") to " << target << " -> " << out.string() << "\n";
  if (ctx.has("audio")) {
    const fs::path wav = ctx.path("audio");
    dsp::write_wav(wav, resynthesize(mel, src.norm, ctx));
    ctx.stamp(wav);
    std::cout << "audio -> " << wav.string() << "\n";
  }
  return 0;
}

int evaluate(RunContext& ctx) {
  std::vector<svc::SvcModel<float>> models;
  std::vector<std::string> variants;
  for (const auto& p : split_list(ctx.get<std::string>("models"))) {
    models.push_back(svc::load_svc_checkpoint<float>(ctx.resolve(p)));
    std::string name(svc::to_string(models.back().loss.variant));
    if (std::find(variants.begin(), variants.end(), name) != variants.end()) name = fs::path(p).stem().string();
    variants.push_back(name);
  }
  if (models.empty()) throw Error(Errc::config, "evaluate: --models lists no checkpoint");
  if (ctx.has("table")) {
    const auto table = sie::SieTable::load(ctx.path("table"));
    for (std::size_t i = 0; i < models.size(); ++i)
      if (models[i].table.checkpoint_hash() != table.checkpoint_hash())
        throw Error(Errc::config, "model " + variants[i] + " was trained with a different SIE table");
  }
  const auto records = load_data(ctx);
  std::map<std::string, Gender> genders;
  for (const auto& r : records) genders[r.singer_id] = r.gender;
  const auto singers = select_singers(ctx.get<std::string>("singers"), load_splits(ctx), records);
  const auto catalog = pitch::read_catalog(ctx.path("catalog"));

  eval::EvalSetOptions opt;
  opt.conversions = ctx.get<std::size_t>("conversions");
  opt.references = ctx.get<std::size_t>("references");
  opt.match.tol_st = ctx.get<double>("tol");
  const auto set = eval::build_eval_set(variants, catalog, genders, singers, ctx.get<std::uint64_t>("seed"), opt);

  const fs::path out = ctx.path("out");
  fs::create_directories(out);
  write_text_file(out / "eval_set.json", set.to_json().dump(2) + "\n");

  auto model_of = [&](const std::string& v) -> svc::SvcModel<float>& {
    return models[static_cast<std::size_t>(std::find(variants.begin(), variants.end(), v) - variants.begin())];
  };
  std::vector<eval::ConversionScore> scores;
  std::vector<MatrixXf> converted;
  std::string detail = "id,variant,condition,source_singer,source_clip,target_singer,target_clip,delta_st,cos_target,cos_source\n";
  for (const auto& c : set.conversions) {
    auto& m = model_of(c.variant);
    const SingerRecord& src = find_record(records, c.pair.source_clip);
    const SIE s = singer_sie(m, c.pair.source_singer, records);
    const SIE t = singer_sie(m, c.pair.target_singer, records);
    converted.push_back(svc::convert_clip(m, src.mel, s, t));
    const SIE e = m.sie_encoder.embed(converted.back());
    scores.push_back({c.id, c.variant, c.condition, eval::cosine_similarity(e, t), eval::cosine_similarity(e, s)});
    detail += c.id + "," + c.variant + "," + std::string(eval::to_string(c.condition)) + "," + c.pair.source_singer + "," +
              c.pair.source_clip + "," + c.pair.target_singer + "," + c.pair.target_clip + "," + fmt(c.pair.delta_st) +
              "," + fmt(scores.back().to_target) + "," + fmt(scores.back().to_source) + "\n";
  }
  const auto summary = eval::summarize_scores(scores);
  write_text_file(out / "conversions.csv", detail);
  write_text_file(out / "scores.csv", eval::scores_csv(summary));
  ctx.stamp(out, {{"variants", variants}});
  std::printf("%-10s %-5s %5s %10s %10s %8s\n", "variant", "cond", "n", "cos_tgt", "cos_src", "toward");
  for (const auto& s : summary)
    std::printf("%-10s %-5s %5ld %10.4f %10.4f %8.2f\n", s.variant.c_str(), std::string(eval::to_string(s.condition)).c_str(),
                static_cast<long>(s.count), s.mean_to_target, s.mean_to_source, s.toward_target);

  if (ctx.has("pool")) {
    const fs::path pool = ctx.path("pool");
    fs::create_directories(pool);
    study::StudyConfig sc;
    sc.study_id = "study-" + ctx.hash();
    sc.variants = variants;
    sc.conversions = opt.conversions;
    sc.references = opt.references;
    sc.seed = set.seed;
    for (std::size_t i = 0; i < set.conversions.size(); ++i) {
      const auto& c = set.conversions[i];
      const SingerRecord& src = find_record(records, c.pair.source_clip);
      const SingerRecord& tgt = find_record(records, c.pair.target_clip);
      dsp::write_wav(pool / (c.id + ".wav"), resynthesize(converted[i], src.norm, ctx));
      dsp::write_wav(pool / (c.id + "_target.wav"), resynthesize(tgt.mel, tgt.norm, ctx));
      sc.pool.push_back({c.id, c.variant, std::string(eval::to_string(c.condition)), c.id + ".wav", c.id + "_target.wav",
                         c.to_json()});
    }
    for (const auto& r : set.references) {
      const SingerRecord& rec = find_record(records, r.clip);
      dsp::write_wav(pool / (r.id + ".wav"), resynthesize(rec.mel, rec.norm, ctx));
      sc.pool.push_back({r.id, std::string(eval::kReferenceVariant), std::string(eval::kNoCondition), r.id + ".wav", "",
                         {{"singer", r.singer}, {"clip", r.clip}}});
    }
    write_text_file(pool / "study-config.json", sc.to_json().dump(2) + "\n");
    ctx.stamp(pool);
    std::cout << "listening pool: " << sc.pool.size() << " clips -> " << pool.string() << "\n";
  }
  return 0;
}

int probe(RunContext& ctx) {
  auto model = svc::load_svc_checkpoint<float>(ctx.path("model"));
  const auto records = load_data(ctx);
  auto ids = select_singers(ctx.get<std::string>("singers-from"), load_splits(ctx), records);
  std::mt19937_64 rng(ctx.get<std::uint64_t>("seed"));
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto wanted = ctx.get<std::size_t>("singers");
  if (ids.size() > wanted) ids.resize(wanted);
  if (ids.size() < wanted) log_warn("probe: only " + std::to_string(ids.size()) + " singers available");
  std::sort(ids.begin(), ids.end());

  const auto per = ctx.get<std::size_t>("per-singer");
  std::vector<std::pair<ContentCode, std::string>> codes;
  for (const auto& s : ids) {
    auto windows = corpus::labeled_windows(corpus::records_of(records, {s}));
    std::shuffle(windows.begin(), windows.end(), rng);
    if (windows.size() > per) windows.resize(per);
    const SIE e = singer_sie(model, s, records);
    for (const auto& w : windows) codes.emplace_back(svc::encode_content(model, MelWindow(w.mel), e), s);
  }
  eval::ProbeConfig pc;
  pc.steps = ctx.get<long>("steps");
  pc.lr = ctx.get<double>("lr");
  pc.weight_decay = ctx.get<double>("weight-decay");
  pc.eval_every = ctx.get<long>("eval-every");
  pc.seed = ctx.get<std::uint64_t>("seed");
  const auto res = eval::probe_accuracy(codes, pc);
  json j = res.to_json();
  j["chance"] = 1.0 / static_cast<double>(res.classes);
  j["singers"] = ids;
  const fs::path out = ctx.path("out");
  write_text_file(out, j.dump(2) + "\n");
  ctx.stamp(out);
  std::printf("probe: %ld singers, %ld test codes, accuracy %.3f (chance %.3f)\n", static_cast<long>(res.classes),
              static_cast<long>(res.test_size), res.accuracy, 1.0 / static_cast<double>(res.classes));
  return 0;
}

int serve_study(RunContext& ctx) {
  const fs::path dir = ctx.path("study");
  if (ctx.has("create") && !study::Study::exists(dir)) {
    create_study_from_pool(dir, ctx.path("create"));
  }
  study::StudyServer server(dir);
  const std::string host = ctx.get<std::string>("host");
  const int port = ctx.get<int>("port");
  if (!server.bind(host, port)) throw Error(Errc::config, "cannot listen on " + host + ":" + std::to_string(port));
  std::cout << "serving " << dir.string() << " on http://" << host << ":" << port << std::endl;
  server.run();
  return 0;
}

int export_ratings(RunContext& ctx) {
  const auto st = study::Study::open(ctx.path("study"));
  const auto rows = st->export_ratings();
  const fs::path out = ctx.path("out");
  write_text_file(out, st->export_csv());
  ctx.stamp(out, {{"rows", rows.size()}, {"study_id", st->config().study_id}});
  std::cout << rows.size() << " ratings -> " << out.string() << "\n";
  if (ctx.has("report") && !rows.empty()) {
    const auto report = eval::mos_report(rows, st->config().variants);
    write_text_file(ctx.path("report"), report.to_json().dump(2) + "\n");
    ctx.stamp(ctx.path("report"));
    std::cout << report.to_text();
  }
  return 0;
}

OptSpec seed_opt(std::int64_t def = 7) { return {"seed", def, "random seed"}; }

}  // namespace

void create_study_from_pool(const fs::path& dir, const fs::path& config) {
  const auto cfg = study::StudyConfig::from_json(json::parse(read_text_file(config)));
  // Pool audio paths are relative to the config; the study keeps its own copy.
  const fs::path pool = config.parent_path().empty() ? fs::path(".") : config.parent_path();
  if (!fs::exists(dir) || !fs::equivalent(pool, dir)) {
    for (const auto& c : cfg.pool)
      for (const auto& rel : {c.audio, c.target_reference}) {
        if (rel.empty() || !fs::exists(pool / rel) || fs::exists(dir / rel)) continue;
        fs::create_directories((dir / rel).parent_path());
        fs::copy_file(pool / rel, dir / rel);
      }
  }
  study::Study::create(dir, cfg);
}

const std::vector<CommandSpec>& commands() {
  static const std::vector<CommandSpec> list{
      {"synth-corpus",
       "render a synthetic singer corpus (wav files + singers.csv)",
       {{"out", "raw", "output directory", true},
        {"singers", 8, "number of singers"},
        {"clips", 4, "clips per singer"},
        {"breath", 1.0, "breath noise scale"},
        {"vibrato", 0.25, "vibrato depth in semitones"},
        {"seconds", 4.2, "clip length"},
        seed_opt(11)},
       synth_corpus},
      {"preprocess",
       "trim silence, extract normalized log-mel features and split singers",
       {{"in", nullptr, "directory of .wav files (one sub-directory per singer)", true},
        {"out", nullptr, "output directory", true},
        {"metadata", "", "singer_id,gender file (default <in>/singers.csv)", true},
        {"threshold-db", -35.0, "silence threshold (dBFS RMS)"},
        {"chunk-ms", 500.0, "silence chunk length"},
        {"train-frac", 0.8, "fraction of singers used for training"},
        seed_opt()},
       preprocess},
      {"train-sie",
       "train the singer identity encoder with the GE2E loss",
       {{"data", nullptr, "preprocessed data directory", true},
        {"out", "sie.ckpt", "checkpoint path", true},
        {"singers", "train", "training singers: train, all or a comma list"},
        {"size", "full", "model size preset: full or toy"},
        {"model", json::object(), "encoder config overrides (JSON object)"},
        {"iters", 314000, "maximum iterations"},
        {"lr", 1e-4, "Adam learning rate"},
        {"n", 8, "singers per batch"},
        {"m", 10, "windows per singer"},
        {"patience", 40, "evaluations without improvement before stopping"},
        {"eval-every", 100, "iterations between validation evaluations"},
        {"grad-clip", 3.0, "gradient norm clip"},
        seed_opt()},
       train_sie},
      {"build-table",
       "average per-singer embeddings with a trained encoder",
       {{"ckpt", nullptr, "SIE encoder checkpoint", true},
        {"data", nullptr, "preprocessed data directory", true},
        {"out", "sie_table.json", "output table", true},
        {"singers", "all", "singers to embed: all, a split name or a comma list"}},
       build_table},
      {"pitch-catalog",
       "per-clip pitch ranges for pitch matching",
       {{"data", nullptr, "preprocessed data directory", true},
        {"out", "pitch_catalog.csv", "output catalog", true},
        {"fmin", 50.0, "lowest F0 searched (Hz)"},
        {"fmax", 1100.0, "highest F0 searched (Hz)"},
        {"yin-threshold", 0.1, "YIN aperiodicity threshold"}},
       pitch_catalog},
      {"match",
       "list target singers pitch-matched to a source clip",
       {{"source-clip", nullptr, "source clip id"},
        {"catalog", nullptr, "pitch catalog", true},
        {"tol", 2.0, "tolerance in semitones"},
        {"require-overlap", false, "also require overlapping p10-p90 ranges"},
        {"out", "", "optional JSON output", true}},
       match},
      {"train-svc",
       "train the conversion network",
       {{"data", nullptr, "preprocessed data directory", true},
        {"table", nullptr, "SIE table", true},
        {"sie-ckpt", nullptr, "SIE encoder checkpoint the table was built with", true},
        {"out", "svc.ckpt", "checkpoint path", true},
        {"variant", "recon", "loss variant: recon, bn-lr or sie-lr"},
        {"lambda", 1.0, "latent loss weight"},
        {"singers", "train", "training singers: train, all or a comma list"},
        {"size", "full", "model size preset: full or toy"},
        {"model", json::object(), "network config overrides (JSON object)"},
        {"iters", 500000, "final iteration"},
        {"batch", 2, "batch size"},
        {"lr", 1e-4, "Adam learning rate"},
        {"checkpoint-every", 10000, "iterations between checkpoints"},
        {"eval-every", 1000, "iterations between validation evaluations"},
        {"resume", "", "checkpoint to resume from", true},
        seed_opt()},
       train_svc},
      {"convert",
       "convert one clip to a target singer",
       {{"model", nullptr, "conversion checkpoint", true},
        {"source", nullptr, "source clip id"},
        {"target-singer", nullptr, "target singer id"},
        {"data", "data", "preprocessed data directory", true},
        {"out", "", "output mel tensor (default <clip>_to_<singer>.mel)", true},
        {"audio", "", "optional wav output via Griffin-Lim", true},
        {"gl-iters", 60, "Griffin-Lim iterations"},
        seed_opt(0)},
       convert},
      {"evaluate",
       "objective scores on a pitch-matched evaluation set; optional listening pool",
       {{"models", nullptr, "comma-separated conversion checkpoints"},
        {"catalog", nullptr, "pitch catalog", true},
        {"data", "data", "preprocessed data directory", true},
        {"table", "", "SIE table the models must share", true},
        {"out", "eval", "output directory", true},
        {"singers", "heldout", "singers to draw pairs from: heldout, all, a split name or a comma list"},
        {"conversions", 16, "conversions in the set"},
        {"references", 4, "resynthesized references"},
        {"tol", 2.0, "pitch-match tolerance (semitones)"},
        {"pool", "", "write listening-study audio and study-config.json here", true},
        {"gl-iters", 60, "Griffin-Lim iterations for pool audio"},
        seed_opt()},
       evaluate},
      {"probe",
       "linear singer probe on bottleneck codes",
       {{"model", nullptr, "conversion checkpoint", true},
        {"data", nullptr, "preprocessed data directory", true},
        {"out", "probe.json", "result file", true},
        {"singers", 20, "number of singers"},
        {"singers-from", "all", "candidate singers: all, a split name or a comma list"},
        {"per-singer", 60, "windows per singer"},
        {"steps", 5000, "Adam steps"},
        {"lr", 1e-2, "Adam learning rate"},
        {"weight-decay", 1e-2, "L2 penalty"},
        {"eval-every", 500, "steps between held-out evaluations"},
        seed_opt(0)},
       probe},
      {"serve-study",
       "serve the listening study HTTP API",
       {{"study", nullptr, "study directory", true},
        {"create", "", "study config to create the study from when none exists", true},
        {"host", "127.0.0.1", "listen address"},
        {"port", 8080, "listen port"}},
       serve_study},
      {"export-ratings",
       "write the study's ratings as CSV",
       {{"study", nullptr, "study directory", true},
        {"out", "ratings.csv", "output CSV", true},
        {"report", "", "optional MOS report (JSON)", true}},
       export_ratings},
  };
  return list;
}

int run(int argc, const char* const* argv, const EnvLookup& env) {
  CLI::App app{"svc-lab: singing voice conversion experiments"};
  app.name("svc-lab");
  app.require_subcommand(1);
  app.fallthrough();
  std::string workdir;
  std::string config_file;
  bool quiet = false;
  app.add_option("--workdir", workdir, "base directory for relative paths (env SVCLAB_WORKDIR)");
  app.add_option("--config", config_file, "JSON config file (env SVCLAB_CONFIG)");
  app.add_flag("--quiet", quiet, "warnings only");

  const auto& cmds = commands();
  std::map<std::string, std::map<std::string, std::string>> raw;
  std::map<std::string, std::map<std::string, CLI::Option*>> handles;
  std::map<std::string, CLI::App*> subs;
  for (const auto& c : cmds) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    subs[c.name] = sub;
    for (const auto& o : c.options) {
      std::string help = o.help;
      if (o.def.is_null())
        help += " (required)";
      else if (!(o.def.is_string() && o.def.get<std::string>().empty()))
        help += " [" + (o.def.is_string() ? o.def.get<std::string>() : o.def.dump()) + "]";
      handles[c.name][o.name] = sub->add_option("--" + o.name, raw[c.name][o.name], help);
    }
  }

  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--workdir" || a == "--config") {
      ++i;
      continue;
    }
    if (a.starts_with("-")) continue;
    if (!subs.contains(a)) {
      std::cerr << "svc-lab: unknown command '" << a << "'\n\n" << app.help();
      return 2;
    }
    break;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const CommandSpec* cmd = nullptr;
  for (const auto& c : cmds)
    if (subs[c.name]->parsed()) cmd = &c;
  if (!cmd) return 2;

  if (quiet) set_log_level(LogLevel::warn);
  if (workdir.empty()) workdir = env("SVCLAB_WORKDIR").value_or(".");
  if (config_file.empty()) config_file = env("SVCLAB_CONFIG").value_or("");

  std::map<std::string, std::string> flags;
  for (const auto& [name, opt] : handles[cmd->name])
    if (opt->count() > 0) flags[name] = raw[cmd->name][name];

  json resolved;
  try {
    json file_config = json::object();
    if (!config_file.empty()) {
      fs::path p = config_file;
      if (!p.is_absolute() && !fs::exists(p)) p = fs::path(workdir) / p;
      try {
        file_config = json::parse(read_text_file(p));
      } catch (const json::exception& e) {
        throw Error(Errc::config, p.string() + ": " + e.what());
      }
    }
    resolved = resolve_config(*cmd, file_config, flags, env);
  } catch (const Error& e) {
    std::cerr << "svc-lab " << cmd->name << ": " << e.what() << "\n\n" << subs[cmd->name]->help();
    return 2;
  }

  RunContext ctx(cmd->name, resolved, workdir);
  try {
    return cmd->run(ctx);
  } catch (const Error& e) {
    std::cerr << "svc-lab " << cmd->name << ": " << to_string(e.code()) << ": " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "svc-lab " << cmd->name << ": " << e.what() << "\n";
  }
  return 1;
}

}  // namespace svclab::cli
