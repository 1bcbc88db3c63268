#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "slimseiz/eeg.hpp"

namespace slimseiz {

enum class SegmentLabel : std::uint8_t { Other = 0, PreIctal = 1 };

struct WindowingConfig {
  double window_s{4.0};
  double preictal_horizon_s{1800.0};
  double merge_gap_s{1800.0};
  double stride_preictal_s{4.0};
  double stride_other_s{4.0};
};

// One labeled window, viewing rows of a SegmentDataset.
struct SegmentView {
  std::span<const float> data;  // [num_channels x window_samples], row-major
  SegmentLabel label{SegmentLabel::Other};
  double start_time_s{0.0};
};

// Windowed segments in one contiguous block, layout [segment][channel][sample].
struct SegmentDataset {
  int num_channels{0};
  int window_samples{0};
  double sample_rate_hz{0.0};
  std::vector<std::string> channel_labels;
  std::vector<float> data;
  std::vector<std::uint8_t> labels;       // SegmentLabel values
  std::vector<double> start_times_s;      // not persisted in the cache

  std::size_t size() const { return labels.size(); }
  SegmentView operator[](std::size_t i) const {
    const std::size_t stride =
        static_cast<std::size_t>(num_channels) * static_cast<std::size_t>(window_samples);
    return SegmentView{{data.data() + i * stride, stride},
                       static_cast<SegmentLabel>(labels[i]),
                       start_times_s.empty() ? 0.0 : start_times_s[i]};
  }
  std::size_t count(SegmentLabel l) const;
  void append(const SegmentDataset& other);  // shapes must match
};

// Fuses consecutive events whose gap is below merge_gap_s, transitively.
// Input must be sorted and non-overlapping.
std::vector<SeizureAnnotation> merge_seizures(
    std::vector<SeizureAnnotation> annotations, double merge_gap_s);

// Window starts and labels without materialized data, sorted by start.
struct WindowPlan {
  std::vector<std::int64_t> starts;   // sample index of each window start
  std::vector<std::uint8_t> labels;   // SegmentLabel values
  int window_samples{0};
};

WindowPlan plan_windows(const EegRecording& rec,
                        const std::vector<SeizureAnnotation>& merged,
                        const WindowingConfig& cfg);

// Windows a recording: for every merged event, windows fully inside
// [onset - horizon, onset) become PreIctal at stride_preictal_s; windows
// touching [onset, offset] are dropped; windows fully outside every
// [onset - horizon, offset] band become Other at stride_other_s. Windows
// straddling a boundary are dropped. Does not require both classes.
SegmentDataset window_recording(const EegRecording& rec,
                                const std::vector<SeizureAnnotation>& merged,
                                const WindowingConfig& cfg);

// window_recording plus the both-classes check; throws EmptyClass when either
// class ends up with zero windows.
SegmentDataset label_windows(const EegRecording& rec,
                             const std::vector<SeizureAnnotation>& merged,
                             const WindowingConfig& cfg);

// Stride for the PreIctal class that approximately balances the two class
// counts for this recording: below window_s it oversamples via overlap, above
// it subsamples a long pre-ictal span. Clamped below at window_s/16 and
// snapped to the sample grid.
double balanced_preictal_stride(const EegRecording& rec,
                                const std::vector<SeizureAnnotation>& merged,
                                const WindowingConfig& cfg);

struct KFold {
  int k{10};
};
struct Holdout {
  double test_fraction{0.2};
};

struct SplitPlan {
  enum class Kind { KFold, Holdout } kind{Kind::Holdout};
  int k{0};
  std::vector<int> fold_of;  // KFold: segment index -> fold id
  std::vector<std::uint32_t> train_indices;  // Holdout
  std::vector<std::uint32_t> test_indices;   // Holdout
  std::uint64_t seed{0};

  std::vector<std::uint32_t> fold_test(int fold) const;
  std::vector<std::uint32_t> fold_train(int fold) const;
};

// Stratified deterministic splits: class proportions are preserved within
// +/-1 segment per class, and k-fold sizes differ by at most one.
SplitPlan make_split(std::span<const std::uint8_t> labels, KFold kind,
                     std::uint64_t seed);
SplitPlan make_split(std::span<const std::uint8_t> labels, Holdout kind,
                     std::uint64_t seed);

// Dataset cache (little-endian):
//   bytes 0..4   magic "SLSZ1"
//   u8           format version (1)
//   u32          segment count n
//   u32          channel count C
//   u32          window length W in samples
//   f64          sample rate in Hz
//   u32          byte length of the channel-label block
//   ...          channel labels, '\n'-separated
//   n*C*W  f32   segment data, [segment][channel][sample]
//   n      u8    labels (0 = other, 1 = pre-ictal)
void save_dataset(std::ostream& out, const SegmentDataset& ds);
void save_dataset_file(const std::string& path, const SegmentDataset& ds);
SegmentDataset load_dataset(std::istream& in);
SegmentDataset load_dataset_file(const std::string& path);

}  // namespace slimseiz
