#include "svclab/pitchmatch.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace svclab::pitch {

double F0Contour::voiced_fraction() const {
  if (f0_hz.size() == 0) return 0.0;
  return static_cast<double>((f0_hz.array() > 0).count()) / static_cast<double>(f0_hz.size());
}

F0Contour extract_f0(const dsp::Waveform& w, const YinOptions& opt) {
  if (opt.fmin <= 0 || opt.fmax <= opt.fmin) throw Error(Errc::config, "invalid F0 search range");
  const double sr = w.sample_rate;
  const Index tau_min = std::max<Index>(2, static_cast<Index>(std::floor(sr / opt.fmax)));
  const Index tau_max = static_cast<Index>(std::ceil(sr / opt.fmin));
  const Index win = opt.frame_size - tau_max;
  if (win < tau_max) throw Error(Errc::config, "frame too short for the lowest F0");
  if (w.size() < opt.frame_size)
    throw Error(Errc::too_short, "F0 tracking needs at least " + std::to_string(opt.frame_size) + " samples");

  const Index frames = 1 + (w.size() - opt.frame_size) / opt.hop_size;
  F0Contour out;
  out.frame_hop = static_cast<double>(opt.hop_size) / sr;
  out.f0_hz = VectorXf::Zero(frames);
  Eigen::VectorXd d(tau_max + 2), cmnd(tau_max + 2);

  for (Index f = 0; f < frames; ++f) {
    const Eigen::VectorXd x = w.samples.segment(f * opt.hop_size, opt.frame_size).cast<double>();
    if (dsp::to_dbfs(std::sqrt(x.squaredNorm() / static_cast<double>(x.size()))) < opt.min_level_db) continue;

    // Difference function d(tau) = sum_j (x_j - x_{j+tau})^2 over the integration window.
    const auto head = x.head(win);
    const double e0 = head.squaredNorm();
    for (Index tau = 1; tau <= tau_max + 1; ++tau) {
      const auto shifted = x.segment(tau, win);
      d(tau) = e0 + shifted.squaredNorm() - 2.0 * head.dot(shifted);
    }
    double running = 0;
    for (Index tau = 1; tau <= tau_max + 1; ++tau) {
      running += d(tau);
      cmnd(tau) = running > 0 ? d(tau) * static_cast<double>(tau) / running : 1.0;
    }
    Index best = -1;
    for (Index tau = tau_min; tau <= tau_max; ++tau) {
      if (cmnd(tau) < opt.threshold) {
        while (tau + 1 <= tau_max && cmnd(tau + 1) < cmnd(tau)) ++tau;
        best = tau;
        break;
      }
    }
    if (best < 0) continue;
    // Parabolic refinement of the dip.
    double t = static_cast<double>(best);
    const double a = cmnd(best - 1), b = cmnd(best), c = cmnd(best + 1);
    const double denom = a - 2 * b + c;
    if (denom > 0) t += 0.5 * (a - c) / denom;
    const double hz = sr / t;
    if (hz >= opt.fmin && hz <= opt.fmax) out.f0_hz(f) = static_cast<float>(hz);
  }
  return out;
}

double hz_to_semitones(double hz) { return 69.0 + 12.0 * std::log2(hz / 440.0); }

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(Errc::data, "percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(values.size() - 1, lo + 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

PitchRange pitch_range(const F0Contour& c) {
  std::vector<double> st;
  for (Index i = 0; i < c.f0_hz.size(); ++i)
    if (c.f0_hz(i) > 0) st.push_back(hz_to_semitones(c.f0_hz(i)));
  if (st.empty()) throw Error(Errc::no_voicing, "contour has no voiced frames");
  PitchRange r;
  r.median_st = percentile(st, 50);
  r.p10_st = percentile(st, 10);
  r.p90_st = percentile(st, 90);
  r.voiced_fraction = c.voiced_fraction();
  return r;
}

std::vector<Match> match_targets(const PitchRange& source, const Catalog& catalog, const MatchOptions& opt,
                                 const std::string& exclude_singer) {
  if (catalog.empty()) throw Error(Errc::config, "pitch catalog is empty");
  if (!(opt.tol_st > 0)) throw Error(Errc::config, "pitch tolerance must be positive");
  std::vector<Match> out;
  for (const auto& [singer, clips] : catalog) {
    if (singer == exclude_singer) continue;
    const ClipRange* best = nullptr;
    double best_delta = 0;
    for (const auto& c : clips) {
      const double delta = std::abs(c.range.median_st - source.median_st);
      if (!(delta < opt.tol_st)) continue;
      if (opt.require_overlap && (c.range.p90_st < source.p10_st || c.range.p10_st > source.p90_st)) continue;
      if (!best || delta < best_delta || (delta == best_delta && c.clip_id < best->clip_id)) {
        best = &c;
        best_delta = delta;
      }
    }
    if (best) out.push_back({singer, best->clip_id, best_delta});
  }
  std::sort(out.begin(), out.end(), [](const Match& a, const Match& b) {
    return a.delta_st != b.delta_st ? a.delta_st < b.delta_st : a.singer_id < b.singer_id;
  });
  return out;
}

void write_catalog(const fs::path& path, const Catalog& catalog) {
  std::ostringstream os;
  os << "singer_id,clip_id,median_st,p10_st,p90_st,voiced_fraction\n" << std::setprecision(10);
  for (const auto& [singer, clips] : catalog)
    for (const auto& c : clips)
      os << singer << ',' << c.clip_id << ',' << c.range.median_st << ',' << c.range.p10_st << ','
         << c.range.p90_st << ',' << c.range.voiced_fraction << '\n';
  write_text_file(path, os.str());
}

Catalog read_catalog(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  Catalog out;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.rfind("singer_id", 0) == 0) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 6) throw Error(Errc::format, path.string() + ":" + std::to_string(lineno) + ": expected 6 fields");
    try {
      out[f[0]].push_back({f[1], {std::stod(f[2]), std::stod(f[3]), std::stod(f[4]), std::stod(f[5])}});
    } catch (const std::exception&) {
      throw Error(Errc::format, path.string() + ":" + std::to_string(lineno) + ": bad number");
    }
  }
  return out;
}

std::pair<std::string, PitchRange> find_clip(const Catalog& catalog, const std::string& clip_id) {
  for (const auto& [singer, clips] : catalog)
    for (const auto& c : clips)
      if (c.clip_id == clip_id) return {singer, c.range};
  throw Error(Errc::not_found, "clip '" + clip_id + "' is not in the pitch catalog");
}

}  // namespace svclab::pitch
