#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "slimseiz/chansel.hpp"
#include "slimseiz/mlcore.hpp"
#include "slimseiz/nn_ops.hpp"
#include "slimseiz/pipeline.hpp"
#include "slimseiz/tensor.hpp"

namespace slimseiz {

struct ModelConfig {
  int in_channels{8};
  int input_length{1024};  // 4 s at 256 Hz
  int front_kernel{21};
  int trunk_channels{32};
  int res_bottleneck{12};  // inner width of the residual blocks
  std::array<int, 3> res_kernels1{5, 3, 3};
  std::array<int, 3> res_kernels2{5, 3, 3};
  int pool1_window{4}, pool1_stride{4};
  int pool2_window{4}, pool2_stride{4};
  int mamba_inner{64};       // projection width inside the Mamba block
  int ssm_state{8};          // modes per channel
  int mamba_conv_kernel{4};  // depthwise causal conv width
  int dt_rank{4};            // low-rank timestep projection
  bool mamba_gate{true};
  int num_classes{2};

  double loss_lambda{1.0};  // total loss = CE + lambda * SupCon
  double supcon_tau{0.07};
  double learning_rate{1e-3};
  int epochs{50};
  int batch_size{64};
  std::int64_t max_parameters{25000};

  // Sequence length entering the Mamba block.
  int mamba_sequence_length() const;
  void validate() const;
};

struct ModelParams {
  ModelConfig config;
  std::vector<std::pair<std::string, nn::Tensor>> named;

  nn::Tensor& at(const std::string& name);
  const nn::Tensor& at(const std::string& name) const;
  std::vector<nn::Tensor> tensors() const;
  std::int64_t parameter_count() const;
  void zero_grad();
};

// Instantiates every layer with Kaiming-uniform fan-in weights (seeded,
// bitwise reproducible), zero biases, a_log rows log(1..N), and unit skip
// connections. Throws BudgetExceeded when the enumerated parameter count
// exceeds config.max_parameters.
ModelParams build_model(const ModelConfig& cfg, std::uint64_t seed);

struct ForwardResult {
  nn::Tensor logits;     // [B, num_classes]
  nn::Tensor embedding;  // [B, trunk_channels], pooled pre-head features
};

ForwardResult forward(const ModelParams& params, const nn::Tensor& x);

// Gathers dataset rows into a [B, channels, window] input tensor; each
// channel window is standardized to zero mean and unit variance (raw EEG
// amplitudes are arbitrary microvolt scales).
nn::Tensor batch_input(const SegmentDataset& ds,
                       std::span<const std::uint32_t> indices,
                       std::span<const int> channels);

struct TrainOptions {
  std::vector<std::uint32_t> indices;  // training subset; empty = every segment
  std::vector<int> channels;           // dataset channels to feed; empty = all
  std::uint64_t seed{0};
  int start_epoch{0};  // resume point; epoch shuffles depend only on (seed, epoch)
};

struct TrainResult {
  std::vector<double> epoch_loss;              // mean per-segment loss
  std::vector<MetricsReport> epoch_metrics;    // on the training subset
};

// Minibatch Adam on CE + lambda * SupCon. Batches where no anchor has a
// same-label positive contribute only the CE term. Throws NonFinite with
// epoch/batch context if training diverges.
TrainResult train(ModelParams& params, const SegmentDataset& ds,
                  const TrainOptions& opts, nn::OptimState& optim);

// Forward-only predictions (argmax logits, ties to class 0).
std::vector<int> predict(ModelParams& params, const SegmentDataset& ds,
                         std::span<const std::uint32_t> indices,
                         std::span<const int> channels);

struct EvalResult {
  std::vector<MetricsReport> folds;
  double mean_accuracy{0.0};
  double mean_sensitivity{0.0};
  double mean_specificity{0.0};
  ModelConfig config;
  std::uint64_t seed{0};
};

// Trains one model per fold (fresh seeded init, train on the other folds,
// test on the held-out fold) and averages the fold metrics. Folds are
// independent jobs.
EvalResult evaluate(const ModelConfig& cfg, const SegmentDataset& ds,
                    const SplitPlan& plan, std::span<const int> channels,
                    std::uint64_t seed, int jobs = 1);

struct SweepRow {
  int k{0};
  std::vector<int> channels;
  EvalResult result;
};

struct SweepOptions {
  std::vector<int> k_values{4, 6, 8, 10};
  bool include_all_channels{true};  // reference row using every channel
  int kfold{0};                     // 0 = holdout
  double holdout_fraction{0.2};
  int jobs{1};
};

// One shared channel tally (voted at the largest requested k), then one
// evaluation per k on the top-k channels of that tally; selected sets nest
// across k by construction.
std::vector<SweepRow> channel_sweep(const EegRecording& rec,
                                    const SelectionConfig& sel_cfg,
                                    const ModelConfig& model_cfg,
                                    const WindowingConfig& network_windowing,
                                    const SweepOptions& opts);

// Checkpoint container: magic "SLSZW1", then per-tensor records of
// (u32 name length, name bytes, u32 rank, u32 dims[rank], f32 payload),
// little-endian, until end of file. Byte-exact round trip.
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, nn::Tensor>>& tensors);
std::vector<std::pair<std::string, nn::Tensor>> load_checkpoint(
    const std::string& path);

// Checkpoint records for a training state (parameters plus optimizer moments
// and the next epoch index), and the inverse. restore_training returns the
// next epoch to run, or 0 when the checkpoint has no optimizer records.
std::vector<std::pair<std::string, nn::Tensor>> training_records(
    const ModelParams& params, const nn::OptimState& optim, int next_epoch);
int restore_training(ModelParams& params, nn::OptimState& optim,
                     const std::vector<std::pair<std::string, nn::Tensor>>& records);

}  // namespace slimseiz
