#include "slimseiz/eeg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "slimseiz/errors.hpp"
#include "slimseiz/rng.hpp"

namespace slimseiz {

void EegRecording::validate() const {
  if (sample_rate_hz <= 0.0) throw Error("sample rate must be positive");
  if (samples.empty()) throw Error("recording has no channels");
  if (channel_labels.size() != samples.size())
    throw Error("channel label count does not match channel count");
  const std::size_t n = samples.front().size();
  for (const auto& row : samples)
    if (row.size() != n) throw Error("channels have differing lengths");
  const double dur = duration_s();
  double prev_offset = 0.0;
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const auto& a = annotations[i];
    if (a.onset_s < 0.0 || a.offset_s <= a.onset_s)
      throw OrderError("annotation offset must exceed a non-negative onset");
    if (i > 0 && a.onset_s < prev_offset)
      throw OrderError("annotations must be sorted and non-overlapping");
    if (a.offset_s > dur + 1e-9)
      throw OrderError("annotation extends past the end of the recording");
    prev_offset = a.offset_s;
  }
}

std::vector<SeizureAnnotation> load_annotations(std::istream& in) {
  std::vector<SeizureAnnotation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    if (line[first] == '#') continue;
    const std::size_t comma = line.find(',');
    if (comma == std::string::npos)
      throw ParseError("annotation line " + std::to_string(line_no) +
                       ": expected \"onset_s,offset_s\"");
    SeizureAnnotation a;
    try {
      std::size_t used = 0;
      a.onset_s = std::stod(line.substr(0, comma), &used);
      a.offset_s = std::stod(line.substr(comma + 1), &used);
    } catch (const std::exception&) {
      throw ParseError("annotation line " + std::to_string(line_no) +
                       ": malformed number");
    }
    if (a.onset_s < 0.0)
      throw OrderError("annotation line " + std::to_string(line_no) +
                       ": onset must be non-negative");
    if (a.offset_s <= a.onset_s)
      throw OrderError("annotation line " + std::to_string(line_no) +
                       ": offset must exceed onset");
    out.push_back(a);
  }
  std::sort(out.begin(), out.end(),
            [](const SeizureAnnotation& x, const SeizureAnnotation& y) {
              return x.onset_s < y.onset_s;
            });
  for (std::size_t i = 1; i < out.size(); ++i)
    if (out[i].onset_s < out[i - 1].offset_s)
      throw OrderError("annotations overlap");
  return out;
}

std::vector<SeizureAnnotation> load_annotations_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open annotation file: " + path);
  return load_annotations(in);
}

void save_annotations(std::ostream& out,
                      const std::vector<SeizureAnnotation>& annotations) {
  out << "# onset_s,offset_s\n";
  char buf[64];
  for (const auto& a : annotations) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f\n", a.onset_s, a.offset_s);
    out << buf;
  }
}

EegRecording synth_eeg(const SynthConfig& cfg) {
  if (cfg.num_channels < 1) throw Error("synth: need at least one channel");
  if (cfg.sample_rate_hz <= 0.0) throw Error("synth: sample rate must be positive");
  if (cfg.duration_s <= 0.0) throw Error("synth: duration must be positive");
  if (cfg.noise_sigma <= 0.0) throw Error("synth: noise sigma must be positive");
  for (int c : cfg.informative_channels)
    if (c < 0 || c >= cfg.num_channels)
      throw Error("synth: informative channel index out of range");
  for (std::size_t i = 1; i < cfg.preictal_onsets_s.size(); ++i)
    if (cfg.preictal_onsets_s[i] <= cfg.preictal_onsets_s[i - 1])
      throw Error("synth: onsets must be strictly increasing");
  for (std::size_t i = 1; i < cfg.preictal_onsets_s.size(); ++i)
    if (cfg.preictal_onsets_s[i] - cfg.preictal_onsets_s[i - 1] <
        kSynthIctalDuration_s)
      throw Error("synth: onsets closer than the ictal duration");
  for (double o : cfg.preictal_onsets_s)
    if (o <= 0.0 || o >= cfg.duration_s)
      throw Error("synth: onset outside the recording");

  const std::size_t n =
      static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.sample_rate_hz));
  EegRecording rec;
  rec.sample_rate_hz = cfg.sample_rate_hz;
  rec.samples.assign(static_cast<std::size_t>(cfg.num_channels),
                     std::vector<float>(n, 0.0f));
  rec.channel_labels.resize(static_cast<std::size_t>(cfg.num_channels));
  for (int c = 0; c < cfg.num_channels; ++c) {
    char label[17];
    std::snprintf(label, sizeof(label), "SYN%d", c);
    rec.channel_labels[static_cast<std::size_t>(c)] = label;
  }

  const Rng master(cfg.seed);
  for (int c = 0; c < cfg.num_channels; ++c) {
    auto& row = rec.samples[static_cast<std::size_t>(c)];
    Rng noise = master.child(static_cast<std::uint64_t>(c));
    for (std::size_t i = 0; i < n; ++i)
      row[i] = static_cast<float>(cfg.noise_sigma * noise.gaussian());
  }

  const bool any_informative = !cfg.informative_channels.empty();
  if (any_informative) {
    for (std::size_t oi = 0; oi < cfg.preictal_onsets_s.size(); ++oi) {
      const double onset = cfg.preictal_onsets_s[oi];
      const double win_start = std::max(0.0, onset - kSynthPreictalHorizon_s);
      const double win_len = onset - win_start;
      if (win_len <= 0.0) continue;
      for (int c : cfg.informative_channels) {
        Rng wave = master.child(0x1000 + static_cast<std::uint64_t>(oi) *
                                             static_cast<std::uint64_t>(cfg.num_channels) +
                                static_cast<std::uint64_t>(c));
        const double freq = 4.0 + 4.0 * wave.uniform();
        const double phase = 2.0 * M_PI * wave.uniform();
        auto& row = rec.samples[static_cast<std::size_t>(c)];
        const std::size_t i0 =
            static_cast<std::size_t>(std::llround(win_start * cfg.sample_rate_hz));
        const std::size_t i1 = std::min(
            n, static_cast<std::size_t>(std::llround(onset * cfg.sample_rate_hz)));
        for (std::size_t i = i0; i < i1; ++i) {
          const double t = static_cast<double>(i) / cfg.sample_rate_hz;
          const double frac = (t - win_start) / win_len;
          const double amp = cfg.noise_sigma * (1.0 + 2.0 * frac);
          row[i] += static_cast<float>(
              amp * std::sin(2.0 * M_PI * freq * (t - win_start) + phase));
        }
      }
    }
  }

  for (double onset : cfg.preictal_onsets_s) {
    SeizureAnnotation a;
    a.onset_s = onset;
    a.offset_s = std::min(cfg.duration_s, onset + kSynthIctalDuration_s);
    rec.annotations.push_back(a);
  }
  rec.validate();
  return rec;
}

}  // namespace slimseiz
