#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "slimseiz/eeg.hpp"
#include "slimseiz/mlcore.hpp"
#include "slimseiz/pipeline.hpp"

namespace slimseiz {

struct SelectionConfig {
  int k{8};   // channels to keep
  int m{30};  // voting iterations
  double test_fraction{0.2};
  double pca_variance_target{0.95};
  int pca_max_components{32};
  int smote_k_neighbors{5};
  TreeConfig tree{};
  // 5 s non-overlapping windows; SMOTE balances the training side instead of
  // window overlap.
  WindowingConfig windowing{5.0, 1800.0, 1800.0, 5.0, 5.0};
  std::uint64_t seed{0};
};

struct ChannelTally {
  Eigen::MatrixXd per_channel_accuracy;  // [m x C]
  std::vector<int> appearance_counts;    // [C], column sums of per-iteration top-k
  std::vector<double> mean_accuracy;     // [C], mean over the m iterations
  std::vector<int> selected;             // k channel indices, tally order
};

// Single-channel accuracy for one voting iteration: stratified 80/20 split of
// the recording's 5 s single-channel windows, PCA fitted on the training side
// (smallest component count reaching the variance target, capped), SMOTE
// balancing of the reduced training set, then a CART tree scored on the held
// out windows. All randomness (split, SMOTE) derives from iteration_seed, so
// every channel within an iteration sees the same partition.
double channel_accuracy(const EegRecording& rec, int channel,
                        const SelectionConfig& cfg, std::uint64_t iteration_seed);

// Runs m iterations of per-channel accuracy ranking; each iteration's top k
// channels (ties by higher mean accuracy over all iterations, then lower
// index) get an appearance. Selected = the k most frequent channels, same tie
// break. Iterations x channels are independent jobs; `jobs` sizes the worker
// pool without affecting results.
ChannelTally select_channels(const EegRecording& rec, const SelectionConfig& cfg,
                             int jobs = 1);

// Recording restricted to the given channels, in the given order.
// Annotations are unchanged. Throws IndexError on invalid or duplicate
// indices.
EegRecording apply_channel_mask(const EegRecording& rec,
                                std::span<const int> selected);

struct SelectionReport {
  std::vector<int> channel_index;
  std::vector<std::string> channel_label;
  std::vector<double> mean_accuracy;
  std::vector<int> appearances;
  std::vector<int> selected;  // selected channel indices, tally order
  int k{0};
  int m{0};
  std::uint64_t seed{0};
};

// Plain-text selection report: '#' metadata lines, then one
// "index label mean_accuracy appearances selected_rank" row per channel.
// Byte-stable for fixed inputs.
void write_selection_report(std::ostream& out, const ChannelTally& tally,
                            const std::vector<std::string>& labels,
                            const SelectionConfig& cfg);
SelectionReport read_selection_report(std::istream& in);
SelectionReport read_selection_report_file(const std::string& path);

}  // namespace slimseiz
