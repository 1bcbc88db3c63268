#include "slimseiz/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "slimseiz/errors.hpp"
#include "slimseiz/rng.hpp"

namespace slimseiz {

namespace {

struct Interval {
  double begin{0.0};
  double end{0.0};
  double span() const { return end - begin; }
};

// Class intervals on the recording timeline. PreIctal intervals are clipped
// so they never reach into a preceding event; Other intervals exclude the
// whole [onset - horizon, offset] band of every event.
struct Timeline {
  std::vector<Interval> preictal;
  std::vector<Interval> other;
};

Timeline build_timeline(double duration_s,
                        const std::vector<SeizureAnnotation>& merged,
                        const WindowingConfig& cfg) {
  Timeline tl;
  double cursor = 0.0;  // start of the not-yet-excluded region
  double prev_offset = 0.0;
  for (const auto& ev : merged) {
    const double horizon_start =
        std::max({0.0, ev.onset_s - cfg.preictal_horizon_s, prev_offset});
    if (horizon_start > cursor)
      tl.other.push_back({cursor, std::min(horizon_start, duration_s)});
    if (ev.onset_s > horizon_start)
      tl.preictal.push_back({horizon_start, std::min(ev.onset_s, duration_s)});
    cursor = std::max(cursor, std::min(ev.offset_s, duration_s));
    prev_offset = ev.offset_s;
  }
  if (duration_s > cursor) tl.other.push_back({cursor, duration_s});
  return tl;
}

void emit_windows(const Interval& iv, double window_s, double stride_s,
                  double rate, SegmentLabel label,
                  std::vector<std::pair<std::int64_t, SegmentLabel>>& out) {
  if (stride_s <= 0.0) throw Error("window stride must be positive");
  constexpr double kEps = 1e-9;
  for (std::int64_t i = 0;; ++i) {
    const double t = iv.begin + static_cast<double>(i) * stride_s;
    if (t + window_s > iv.end + kEps) break;
    out.emplace_back(std::llround(t * rate), label);
  }
}

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                        static_cast<unsigned char>((v >> 8) & 0xFF),
                        static_cast<unsigned char>((v >> 16) & 0xFF),
                        static_cast<unsigned char>((v >> 24) & 0xFF)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw TruncatedData("dataset cache ended inside the header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

std::size_t SegmentDataset::count(SegmentLabel l) const {
  std::size_t n = 0;
  for (std::uint8_t v : labels)
    if (v == static_cast<std::uint8_t>(l)) ++n;
  return n;
}

void SegmentDataset::append(const SegmentDataset& other) {
  if (size() == 0 && other.size() == 0) return;
  if (size() == 0) {
    *this = other;
    return;
  }
  if (other.num_channels != num_channels ||
      other.window_samples != window_samples ||
      other.sample_rate_hz != sample_rate_hz)
    throw ShapeMismatch("cannot append datasets with differing shapes");
  data.insert(data.end(), other.data.begin(), other.data.end());
  labels.insert(labels.end(), other.labels.begin(), other.labels.end());
  start_times_s.insert(start_times_s.end(), other.start_times_s.begin(),
                       other.start_times_s.end());
}

std::vector<SeizureAnnotation> merge_seizures(
    std::vector<SeizureAnnotation> annotations, double merge_gap_s) {
  for (std::size_t i = 1; i < annotations.size(); ++i)
    if (annotations[i].onset_s < annotations[i - 1].offset_s)
      throw OrderError("annotations must be sorted and non-overlapping");
  std::vector<SeizureAnnotation> out;
  for (const auto& a : annotations) {
    if (!out.empty() && a.onset_s - out.back().offset_s < merge_gap_s)
      out.back().offset_s = a.offset_s;
    else
      out.push_back(a);
  }
  return out;
}

WindowPlan plan_windows(const EegRecording& rec,
                        const std::vector<SeizureAnnotation>& merged,
                        const WindowingConfig& cfg) {
  rec.validate();
  if (cfg.window_s <= 0.0) throw Error("window length must be positive");
  const double rate = rec.sample_rate_hz;
  const double w_samples_real = cfg.window_s * rate;
  const std::int64_t w = std::llround(w_samples_real);
  if (std::abs(w_samples_real - static_cast<double>(w)) > 1e-6)
    throw Error("window length must be an integral number of samples");

  const Timeline tl = build_timeline(rec.duration_s(), merged, cfg);
  std::vector<std::pair<std::int64_t, SegmentLabel>> pairs;
  for (const auto& iv : tl.preictal)
    emit_windows(iv, cfg.window_s, cfg.stride_preictal_s, rate,
                 SegmentLabel::PreIctal, pairs);
  for (const auto& iv : tl.other)
    emit_windows(iv, cfg.window_s, cfg.stride_other_s, rate,
                 SegmentLabel::Other, pairs);
  std::sort(pairs.begin(), pairs.end());

  const std::int64_t n_total = static_cast<std::int64_t>(rec.num_samples());
  WindowPlan plan;
  plan.window_samples = static_cast<int>(w);
  for (const auto& [start, label] : pairs) {
    if (start < 0 || start + w > n_total) continue;
    plan.starts.push_back(start);
    plan.labels.push_back(static_cast<std::uint8_t>(label));
  }
  return plan;
}

SegmentDataset window_recording(const EegRecording& rec,
                                const std::vector<SeizureAnnotation>& merged,
                                const WindowingConfig& cfg) {
  const WindowPlan plan = plan_windows(rec, merged, cfg);
  const std::int64_t w = plan.window_samples;
  SegmentDataset ds;
  ds.num_channels = static_cast<int>(rec.num_channels());
  ds.window_samples = plan.window_samples;
  ds.sample_rate_hz = rec.sample_rate_hz;
  ds.channel_labels = rec.channel_labels;
  ds.labels = plan.labels;
  ds.data.reserve(plan.starts.size() * rec.num_channels() *
                  static_cast<std::size_t>(w));
  for (const std::int64_t start : plan.starts) {
    for (const auto& row : rec.samples)
      ds.data.insert(ds.data.end(), row.begin() + start, row.begin() + start + w);
    ds.start_times_s.push_back(static_cast<double>(start) / rec.sample_rate_hz);
  }
  return ds;
}

SegmentDataset label_windows(const EegRecording& rec,
                             const std::vector<SeizureAnnotation>& merged,
                             const WindowingConfig& cfg) {
  SegmentDataset ds = window_recording(rec, merged, cfg);
  if (ds.count(SegmentLabel::PreIctal) == 0)
    throw EmptyClass("no pre-ictal windows; recording is unusable for training");
  if (ds.count(SegmentLabel::Other) == 0)
    throw EmptyClass("no non-pre-ictal windows; recording is unusable for training");
  return ds;
}

double balanced_preictal_stride(const EegRecording& rec,
                                const std::vector<SeizureAnnotation>& merged,
                                const WindowingConfig& cfg) {
  const Timeline tl = build_timeline(rec.duration_s(), merged, cfg);
  std::size_t other_count = 0;
  for (const auto& iv : tl.other) {
    const double usable = iv.span() - cfg.window_s;
    if (usable >= 0.0)
      other_count += static_cast<std::size_t>(usable / cfg.stride_other_s) + 1;
  }
  double preictal_usable = 0.0;
  std::size_t intervals = 0;
  for (const auto& iv : tl.preictal) {
    if (iv.span() >= cfg.window_s) {
      preictal_usable += iv.span() - cfg.window_s;
      ++intervals;
    }
  }
  if (other_count == 0 || intervals == 0 || preictal_usable <= 0.0)
    return cfg.window_s;
  const double denom =
      static_cast<double>(std::max<std::size_t>(other_count - std::min(other_count, intervals), 1));
  double stride = preictal_usable / denom;
  stride = std::clamp(stride, cfg.window_s / 16.0, std::max(cfg.window_s, preictal_usable));
  // Snap to the sample grid so window starts are exact.
  const double samples = std::max(1.0, std::round(stride * rec.sample_rate_hz));
  return samples / rec.sample_rate_hz;
}

std::vector<std::uint32_t> SplitPlan::fold_test(int fold) const {
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] == fold) out.push_back(static_cast<std::uint32_t>(i));
  return out;
}

std::vector<std::uint32_t> SplitPlan::fold_train(int fold) const {
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] != fold) out.push_back(static_cast<std::uint32_t>(i));
  return out;
}

namespace {

// Indices of each class, shuffled under per-class child streams.
std::vector<std::vector<std::uint32_t>> shuffled_class_indices(
    std::span<const std::uint8_t> labels, std::uint64_t seed) {
  std::vector<std::vector<std::uint32_t>> by_class(2);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 1) throw Error("labels must be binary");
    by_class[labels[i]].push_back(static_cast<std::uint32_t>(i));
  }
  Rng rng(seed);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    Rng stream = rng.child(c);
    stream.shuffle(by_class[c]);
  }
  return by_class;
}

}  // namespace

SplitPlan make_split(std::span<const std::uint8_t> labels, KFold kind,
                     std::uint64_t seed) {
  const std::size_t n = labels.size();
  if (kind.k < 2) throw TooFewSamples("k-fold needs k >= 2");
  if (n < static_cast<std::size_t>(kind.k))
    throw TooFewSamples("need at least one segment per fold");
  SplitPlan plan;
  plan.kind = SplitPlan::Kind::KFold;
  plan.k = kind.k;
  plan.seed = seed;
  plan.fold_of.assign(n, -1);

  const auto by_class = shuffled_class_indices(labels, seed);
  std::vector<std::size_t> load(static_cast<std::size_t>(kind.k), 0);
  for (const auto& idx : by_class) {
    const std::size_t base = idx.size() / static_cast<std::size_t>(kind.k);
    const std::size_t extra = idx.size() % static_cast<std::size_t>(kind.k);
    // Extras go to the currently least-loaded folds, keeping overall fold
    // sizes within one of each other.
    std::vector<int> order(static_cast<std::size_t>(kind.k));
    for (int f = 0; f < kind.k; ++f) order[static_cast<std::size_t>(f)] = f;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return load[static_cast<std::size_t>(a)] < load[static_cast<std::size_t>(b)];
    });
    std::vector<std::size_t> take(static_cast<std::size_t>(kind.k), base);
    for (std::size_t e = 0; e < extra; ++e)
      ++take[static_cast<std::size_t>(order[e])];
    std::size_t pos = 0;
    for (int f = 0; f < kind.k; ++f) {
      for (std::size_t t = 0; t < take[static_cast<std::size_t>(f)]; ++t)
        plan.fold_of[idx[pos++]] = f;
      load[static_cast<std::size_t>(f)] += take[static_cast<std::size_t>(f)];
    }
  }
  return plan;
}

SplitPlan make_split(std::span<const std::uint8_t> labels, Holdout kind,
                     std::uint64_t seed) {
  const std::size_t n = labels.size();
  if (n < 2) throw TooFewSamples("holdout split needs at least 2 segments");
  if (!(kind.test_fraction > 0.0 && kind.test_fraction < 1.0))
    throw Error("test fraction must lie in (0, 1)");
  SplitPlan plan;
  plan.kind = SplitPlan::Kind::Holdout;
  plan.seed = seed;

  const auto by_class = shuffled_class_indices(labels, seed);
  const std::size_t target_total = static_cast<std::size_t>(
      std::llround(kind.test_fraction * static_cast<double>(n)));
  std::vector<std::size_t> take(by_class.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    const double exact = kind.test_fraction * static_cast<double>(by_class[c].size());
    take[c] = std::min(by_class[c].size(), static_cast<std::size_t>(exact));
    assigned += take[c];
    remainders.emplace_back(exact - std::floor(exact), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (const auto& [frac, c] : remainders) {
    (void)frac;
    if (assigned >= target_total) break;
    if (take[c] < by_class[c].size()) {
      ++take[c];
      ++assigned;
    }
  }
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    for (std::size_t i = 0; i < by_class[c].size(); ++i) {
      if (i < take[c])
        plan.test_indices.push_back(by_class[c][i]);
      else
        plan.train_indices.push_back(by_class[c][i]);
    }
  }
  std::sort(plan.train_indices.begin(), plan.train_indices.end());
  std::sort(plan.test_indices.begin(), plan.test_indices.end());
  if (plan.train_indices.empty() || plan.test_indices.empty())
    throw TooFewSamples("holdout split left one side empty");
  return plan;
}

void save_dataset(std::ostream& out, const SegmentDataset& ds) {
  out.write("SLSZ1", 5);
  const unsigned char version = 1;
  out.write(reinterpret_cast<const char*>(&version), 1);
  write_u32(out, static_cast<std::uint32_t>(ds.size()));
  write_u32(out, static_cast<std::uint32_t>(ds.num_channels));
  write_u32(out, static_cast<std::uint32_t>(ds.window_samples));
  static_assert(sizeof(double) == 8);
  out.write(reinterpret_cast<const char*>(&ds.sample_rate_hz), 8);
  std::string labels_block;
  for (std::size_t c = 0; c < ds.channel_labels.size(); ++c) {
    if (c) labels_block += '\n';
    labels_block += ds.channel_labels[c];
  }
  write_u32(out, static_cast<std::uint32_t>(labels_block.size()));
  out.write(labels_block.data(), static_cast<std::streamsize>(labels_block.size()));
  out.write(reinterpret_cast<const char*>(ds.data.data()),
            static_cast<std::streamsize>(ds.data.size() * sizeof(float)));
  out.write(reinterpret_cast<const char*>(ds.labels.data()),
            static_cast<std::streamsize>(ds.labels.size()));
  if (!out) throw Error("failed writing dataset cache");
}

void save_dataset_file(const std::string& path, const SegmentDataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open output file: " + path);
  save_dataset(out, ds);
}

SegmentDataset load_dataset(std::istream& in) {
  char magic[5];
  in.read(magic, 5);
  if (!in || std::memcmp(magic, "SLSZ1", 5) != 0)
    throw InvalidHeader("not a dataset cache (bad magic)");
  unsigned char version = 0;
  in.read(reinterpret_cast<char*>(&version), 1);
  if (!in || version != 1)
    throw InvalidHeader("unsupported dataset cache version");
  SegmentDataset ds;
  const std::uint32_t n = read_u32(in);
  ds.num_channels = static_cast<int>(read_u32(in));
  ds.window_samples = static_cast<int>(read_u32(in));
  in.read(reinterpret_cast<char*>(&ds.sample_rate_hz), 8);
  const std::uint32_t labels_len = read_u32(in);
  std::string labels_block(labels_len, '\0');
  in.read(labels_block.data(), labels_len);
  if (!in) throw TruncatedData("dataset cache ended inside the header");
  if (!labels_block.empty()) {
    std::size_t pos = 0;
    while (true) {
      const std::size_t nl = labels_block.find('\n', pos);
      if (nl == std::string::npos) {
        ds.channel_labels.push_back(labels_block.substr(pos));
        break;
      }
      ds.channel_labels.push_back(labels_block.substr(pos, nl - pos));
      pos = nl + 1;
    }
  }
  const std::size_t values = static_cast<std::size_t>(n) *
                             static_cast<std::size_t>(ds.num_channels) *
                             static_cast<std::size_t>(ds.window_samples);
  ds.data.resize(values);
  in.read(reinterpret_cast<char*>(ds.data.data()),
          static_cast<std::streamsize>(values * sizeof(float)));
  ds.labels.resize(n);
  in.read(reinterpret_cast<char*>(ds.labels.data()), n);
  if (!in) throw TruncatedData("dataset cache shorter than its header declares");
  ds.start_times_s.assign(n, 0.0);
  return ds;
}

SegmentDataset load_dataset_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset cache: " + path);
  return load_dataset(in);
}

}  // namespace slimseiz
