#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace slimseiz {

struct SeizureAnnotation {
  double onset_s{0.0};
  double offset_s{0.0};
};

struct EegRecording {
  std::vector<std::string> channel_labels;
  double sample_rate_hz{0.0};
  // samples[c][i] is channel c at sample i, physical units (microvolts).
  // All channels have the same length.
  std::vector<std::vector<float>> samples;
  std::vector<SeizureAnnotation> annotations;

  std::size_t num_channels() const { return samples.size(); }
  std::size_t num_samples() const {
    return samples.empty() ? 0 : samples.front().size();
  }
  double duration_s() const {
    return sample_rate_hz > 0 ? static_cast<double>(num_samples()) / sample_rate_hz
                              : 0.0;
  }

  // Throws Error if channel lengths disagree, rate is non-positive, or
  // annotations are unsorted / overlapping / out of range.
  void validate() const;
};

struct SynthConfig {
  int num_channels{8};
  double duration_s{3600.0};
  double sample_rate_hz{256.0};
  std::vector<int> informative_channels;   // subset of [0, num_channels)
  std::vector<double> preictal_onsets_s;   // strictly increasing
  double noise_sigma{1.0};
  std::uint64_t seed{0};
};

// Fixed properties of generated recordings.
inline constexpr double kSynthIctalDuration_s = 60.0;
inline constexpr double kSynthPreictalHorizon_s = 1800.0;

// Deterministic synthetic EEG. Every channel is white Gaussian noise with
// sigma = noise_sigma; informative channels additionally carry a 4-8 Hz
// sinusoid whose amplitude ramps from 1x to 3x sigma across the 30 minutes
// preceding each configured onset. Annotations are [onset, onset + 60 s].
EegRecording synth_eeg(const SynthConfig& cfg);

// Annotation sidecar: UTF-8 CSV, one "onset_s,offset_s" pair per line,
// '#' comment lines and blank lines ignored.
std::vector<SeizureAnnotation> load_annotations(std::istream& in);
std::vector<SeizureAnnotation> load_annotations_file(const std::string& path);
void save_annotations(std::ostream& out,
                      const std::vector<SeizureAnnotation>& annotations);

}  // namespace slimseiz
