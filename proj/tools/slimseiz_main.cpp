// Command-line front end: synth | ingest | select | train | eval | sweep.
// Exit codes: 0 success, 1 internal error, 2 usage error, 3 data error.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "slimseiz/chansel.hpp"
#include "slimseiz/edf.hpp"
#include "slimseiz/eeg.hpp"
#include "slimseiz/errors.hpp"
#include "slimseiz/model.hpp"
#include "slimseiz/pipeline.hpp"
#include "slimseiz/rng.hpp"

namespace {

using namespace slimseiz;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stod(item));
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stoi(item));
  return out;
}

void require_file(const std::string& path) {
  if (!std::filesystem::exists(path))
    throw UsageError("file not found: " + path);
}

std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("file not found: " + path);
  std::uint64_t h = 1469598103934665603ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  return h;
}

std::string format_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

// ---------------------------------------------------------------- synth ----

struct SynthArgs {
  std::string out_prefix{"synthetic"};
  int channels{8};
  double duration_s{7200.0};
  double rate_hz{256.0};
  std::string informative{"1,3,5,7"};
  std::string onsets{"2400,4600,6800"};
  double noise_sigma{10.0};
  std::uint64_t seed{1};
};

int run_synth(const SynthArgs& args) {
  SynthConfig cfg;
  cfg.num_channels = args.channels;
  cfg.duration_s = args.duration_s;
  cfg.sample_rate_hz = args.rate_hz;
  cfg.informative_channels = parse_int_list(args.informative);
  cfg.preictal_onsets_s = parse_double_list(args.onsets);
  cfg.noise_sigma = args.noise_sigma;
  cfg.seed = args.seed;
  if (cfg.sample_rate_hz <= 0 ||
      cfg.sample_rate_hz != std::floor(cfg.sample_rate_hz))
    throw UsageError("--rate must be a positive integer for EDF export");

  const EegRecording rec = synth_eeg(cfg);
  write_edf_file(args.out_prefix + ".edf", rec);
  std::ofstream csv(args.out_prefix + ".csv");
  if (!csv) throw UsageError("cannot write: " + args.out_prefix + ".csv");
  save_annotations(csv, rec.annotations);
  std::cout << "wrote " << args.out_prefix << ".edf (" << rec.num_channels()
            << " channels, " << rec.duration_s() << " s) and "
            << args.out_prefix << ".csv (" << rec.annotations.size()
            << " seizures)\n";
  return 0;
}

// --------------------------------------------------------------- ingest ----

struct IngestArgs {
  std::vector<std::string> edf_paths;
  std::vector<std::string> annotation_paths;
  std::string out{"dataset.slsz"};
  double window_s{4.0};
  double horizon_s{1800.0};
  double merge_gap_s{1800.0};
  double stride_other_s{0.0};     // 0 = window_s
  double stride_preictal_s{0.0};  // 0 = auto-balance
};

int run_ingest(const IngestArgs& args) {
  if (args.edf_paths.empty()) throw UsageError("ingest needs at least one --edf");
  if (args.edf_paths.size() != args.annotation_paths.size())
    throw UsageError("need one --annotations per --edf");

  SegmentDataset combined;
  for (std::size_t i = 0; i < args.edf_paths.size(); ++i) {
    require_file(args.edf_paths[i]);
    require_file(args.annotation_paths[i]);
    EegRecording rec = parse_edf_file(args.edf_paths[i]);
    rec.annotations = load_annotations_file(args.annotation_paths[i]);
    rec.validate();

    WindowingConfig cfg;
    cfg.window_s = args.window_s;
    cfg.preictal_horizon_s = args.horizon_s;
    cfg.merge_gap_s = args.merge_gap_s;
    cfg.stride_other_s = args.stride_other_s > 0 ? args.stride_other_s : args.window_s;
    const auto merged = merge_seizures(rec.annotations, cfg.merge_gap_s);
    cfg.stride_preictal_s = args.stride_preictal_s > 0
                                ? args.stride_preictal_s
                                : balanced_preictal_stride(rec, merged, cfg);
    combined.append(window_recording(rec, merged, cfg));
  }
  if (combined.count(SegmentLabel::PreIctal) == 0)
    throw EmptyClass("ingest produced no pre-ictal segments");
  if (combined.count(SegmentLabel::Other) == 0)
    throw EmptyClass("ingest produced no non-pre-ictal segments");

  save_dataset_file(args.out, combined);
  std::cout << "wrote " << args.out << ": " << combined.size() << " segments ("
            << combined.count(SegmentLabel::PreIctal) << " pre-ictal, "
            << combined.count(SegmentLabel::Other) << " other), "
            << combined.num_channels << " channels x " << combined.window_samples
            << " samples\n";
  return 0;
}

// --------------------------------------------------------------- select ----

struct SelectArgs {
  std::string edf_path;
  std::string annotation_path;
  int k{8};
  int m{30};
  std::uint64_t seed{0};
  int jobs{1};
  std::string out{"selection.txt"};
  double window_s{5.0};
  double horizon_s{1800.0};
  double merge_gap_s{1800.0};
};

int run_select(const SelectArgs& args) {
  if (args.edf_path.empty()) throw UsageError("select needs --edf");
  require_file(args.edf_path);
  require_file(args.annotation_path);
  EegRecording rec = parse_edf_file(args.edf_path);
  rec.annotations = load_annotations_file(args.annotation_path);
  rec.validate();
  if (args.k < 1 || args.k > static_cast<int>(rec.num_channels()))
    throw UsageError("--k must lie in [1, " +
                     std::to_string(rec.num_channels()) + "]");
  if (args.m < 1) throw UsageError("--m must be at least 1");

  SelectionConfig cfg;
  cfg.k = args.k;
  cfg.m = args.m;
  cfg.seed = args.seed;
  cfg.windowing.window_s = args.window_s;
  cfg.windowing.stride_preictal_s = args.window_s;
  cfg.windowing.stride_other_s = args.window_s;
  cfg.windowing.preictal_horizon_s = args.horizon_s;
  cfg.windowing.merge_gap_s = args.merge_gap_s;

  const ChannelTally tally = select_channels(rec, cfg, args.jobs);
  std::ofstream out(args.out);
  if (!out) throw UsageError("cannot write: " + args.out);
  write_selection_report(out, tally, rec.channel_labels, cfg);
  std::cout << "selected channels:";
  for (int c : tally.selected) std::cout << " " << c;
  std::cout << " (report: " << args.out << ")\n";
  return 0;
}

// ---------------------------------------------------------------- train ----

struct TrainArgs {
  std::string cache;
  std::string selection;
  std::string out_dir{"train_out"};
  std::string resume;
  double holdout{0.2};
  double lr{1e-3};
  double lambda{1.0};
  double tau{0.07};
  int epochs{50};
  int batch{64};
  std::uint64_t seed{0};
};

std::vector<int> selection_channels(const std::string& selection_path,
                                    const SegmentDataset& ds) {
  std::vector<int> channels;
  if (!selection_path.empty()) {
    require_file(selection_path);
    const SelectionReport rep = read_selection_report_file(selection_path);
    channels = rep.selected;
    for (int c : channels)
      if (c < 0 || c >= ds.num_channels)
        throw UsageError("selection report channel " + std::to_string(c) +
                         " is outside the dataset");
  } else {
    channels.resize(static_cast<std::size_t>(ds.num_channels));
    std::iota(channels.begin(), channels.end(), 0);
  }
  return channels;
}

void write_manifest(const std::string& path,
                    const std::vector<std::pair<std::string, std::string>>& kv) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write: " + path);
  for (const auto& [k, v] : kv) out << k << "=" << v << "\n";
}

int run_train(const TrainArgs& args) {
  if (args.cache.empty()) throw UsageError("train needs --cache");
  require_file(args.cache);
  const SegmentDataset ds = load_dataset_file(args.cache);
  const std::vector<int> channels = selection_channels(args.selection, ds);

  ModelConfig cfg;
  cfg.in_channels = static_cast<int>(channels.size());
  cfg.input_length = ds.window_samples;
  cfg.learning_rate = args.lr;
  cfg.loss_lambda = args.lambda;
  cfg.supcon_tau = args.tau;
  cfg.epochs = args.epochs;
  cfg.batch_size = args.batch;

  std::filesystem::create_directories(args.out_dir);
  const SplitPlan plan = make_split(ds.labels, Holdout{args.holdout}, args.seed);

  ModelParams params = build_model(cfg, args.seed);
  nn::OptimState optim;
  TrainOptions topts;
  topts.indices = plan.train_indices;
  topts.channels = channels;
  topts.seed = args.seed;
  if (!args.resume.empty()) {
    require_file(args.resume);
    topts.start_epoch = restore_training(params, optim, load_checkpoint(args.resume));
  }
  std::cout << "model parameters: " << params.parameter_count() << "\n";

  const TrainResult tr = train(params, ds, topts, optim);

  const std::vector<int> pred = predict(params, ds, plan.test_indices, channels);
  std::vector<int> truth;
  for (std::uint32_t i : plan.test_indices) truth.push_back(ds.labels[i]);
  const MetricsReport test = compute_metrics(pred, truth);

  const std::string csv_path = args.out_dir + "/metrics.csv";
  std::ofstream csv(csv_path);
  csv << "epoch,split,loss,accuracy,sensitivity,specificity\n";
  for (std::size_t e = 0; e < tr.epoch_loss.size(); ++e) {
    const auto& m = tr.epoch_metrics[e];
    csv << (topts.start_epoch + static_cast<int>(e) + 1) << ",train,"
        << format_metric(tr.epoch_loss[e]) << "," << format_metric(m.accuracy)
        << "," << format_metric(m.sensitivity) << ","
        << format_metric(m.specificity) << "\n";
  }
  csv << cfg.epochs << ",test,," << format_metric(test.accuracy) << ","
      << format_metric(test.sensitivity) << "," << format_metric(test.specificity)
      << "\n";

  save_checkpoint(args.out_dir + "/checkpoint.slszw",
                  training_records(params, optim, cfg.epochs));

  std::vector<std::string> channel_text;
  for (int c : channels) channel_text.push_back(std::to_string(c));
  std::string joined;
  for (std::size_t i = 0; i < channel_text.size(); ++i)
    joined += (i ? "," : "") + channel_text[i];
  char hash_text[32];
  std::snprintf(hash_text, sizeof(hash_text), "%016" PRIx64,
                fnv1a64_file(args.cache));
  write_manifest(args.out_dir + "/manifest.txt",
                 {{"command", "train"},
                  {"cache", args.cache},
                  {"dataset_fnv1a64", hash_text},
                  {"channels", joined},
                  {"epochs", std::to_string(cfg.epochs)},
                  {"batch_size", std::to_string(cfg.batch_size)},
                  {"learning_rate", format_metric(cfg.learning_rate)},
                  {"loss_lambda", format_metric(cfg.loss_lambda)},
                  {"supcon_tau", format_metric(cfg.supcon_tau)},
                  {"holdout", format_metric(args.holdout)},
                  {"seed", std::to_string(args.seed)},
                  {"parameters", std::to_string(params.parameter_count())}});

  std::cout << "test accuracy " << format_metric(test.accuracy) << ", sensitivity "
            << format_metric(test.sensitivity) << ", specificity "
            << format_metric(test.specificity) << "\n";
  return 0;
}

// ----------------------------------------------------------------- eval ----

struct EvalArgs {
  std::string cache;
  std::string selection;
  std::string checkpoint;
  int kfold{0};
  double holdout{0.2};
  double lr{1e-3};
  double lambda{1.0};
  double tau{0.07};
  int epochs{50};
  int batch{64};
  std::uint64_t seed{0};
  int jobs{1};
  std::string out{"eval.csv"};
};

int run_eval(const EvalArgs& args) {
  if (args.cache.empty()) throw UsageError("eval needs --cache");
  require_file(args.cache);
  const SegmentDataset ds = load_dataset_file(args.cache);
  const std::vector<int> channels = selection_channels(args.selection, ds);

  std::ofstream out(args.out);
  if (!out) throw UsageError("cannot write: " + args.out);
  out << "fold,accuracy,sensitivity,specificity\n";

  if (args.kfold > 1) {
    ModelConfig cfg;
    cfg.in_channels = static_cast<int>(channels.size());
    cfg.input_length = ds.window_samples;
    cfg.learning_rate = args.lr;
    cfg.loss_lambda = args.lambda;
    cfg.supcon_tau = args.tau;
    cfg.epochs = args.epochs;
    cfg.batch_size = args.batch;
    const SplitPlan plan = make_split(ds.labels, KFold{args.kfold}, args.seed);
    const EvalResult res = evaluate(cfg, ds, plan, channels, args.seed, args.jobs);
    for (std::size_t f = 0; f < res.folds.size(); ++f) {
      const auto& m = res.folds[f];
      out << f << "," << format_metric(m.accuracy) << ","
          << format_metric(m.sensitivity) << "," << format_metric(m.specificity)
          << "\n";
    }
    out << "mean," << format_metric(res.mean_accuracy) << ","
        << format_metric(res.mean_sensitivity) << ","
        << format_metric(res.mean_specificity) << "\n";
    std::cout << "k-fold mean accuracy " << format_metric(res.mean_accuracy)
              << ", sensitivity " << format_metric(res.mean_sensitivity)
              << ", specificity " << format_metric(res.mean_specificity) << "\n";
    return 0;
  }

  if (args.checkpoint.empty())
    throw UsageError("eval needs --kfold or --checkpoint");
  require_file(args.checkpoint);
  ModelConfig cfg;
  cfg.in_channels = static_cast<int>(channels.size());
  cfg.input_length = ds.window_samples;
  ModelParams params = build_model(cfg, args.seed);
  nn::OptimState optim;
  restore_training(params, optim, load_checkpoint(args.checkpoint));

  const SplitPlan plan = make_split(ds.labels, Holdout{args.holdout}, args.seed);
  const std::vector<int> pred = predict(params, ds, plan.test_indices, channels);
  std::vector<int> truth;
  for (std::uint32_t i : plan.test_indices) truth.push_back(ds.labels[i]);
  const MetricsReport m = compute_metrics(pred, truth);
  out << "holdout," << format_metric(m.accuracy) << ","
      << format_metric(m.sensitivity) << "," << format_metric(m.specificity)
      << "\n";
  std::cout << "holdout accuracy " << format_metric(m.accuracy) << ", sensitivity "
            << format_metric(m.sensitivity) << ", specificity "
            << format_metric(m.specificity) << "\n";
  return 0;
}

// ---------------------------------------------------------------- sweep ----

struct SweepArgs {
  std::string edf_path;
  std::string annotation_path;
  std::string k_values{"4,6,8,10"};
  bool no_reference{false};
  int kfold{0};
  int m{30};
  int epochs{50};
  std::uint64_t seed{0};
  int jobs{1};
  std::string out_dir{"sweep_out"};
};

int run_sweep(const SweepArgs& args) {
  if (args.edf_path.empty()) throw UsageError("sweep needs --edf");
  require_file(args.edf_path);
  require_file(args.annotation_path);
  EegRecording rec = parse_edf_file(args.edf_path);
  rec.annotations = load_annotations_file(args.annotation_path);
  rec.validate();

  SelectionConfig sel_cfg;
  sel_cfg.m = args.m;
  sel_cfg.seed = args.seed;

  ModelConfig model_cfg;
  model_cfg.epochs = args.epochs;

  WindowingConfig network_windowing;  // 4 s windows, auto-balanced pre-ictal stride
  const auto merged = merge_seizures(rec.annotations, network_windowing.merge_gap_s);
  network_windowing.stride_preictal_s =
      balanced_preictal_stride(rec, merged, network_windowing);

  SweepOptions opts;
  opts.k_values = parse_int_list(args.k_values);
  opts.include_all_channels = !args.no_reference;
  opts.kfold = args.kfold;
  opts.jobs = args.jobs;

  const auto rows = channel_sweep(rec, sel_cfg, model_cfg, network_windowing, opts);

  std::filesystem::create_directories(args.out_dir);
  std::ofstream csv(args.out_dir + "/sweep.csv");
  csv << "k,channels,accuracy,sensitivity,specificity\n";
  std::cout << "k   channels                 acc      sens     spec\n";
  for (const auto& row : rows) {
    std::string chan_text;
    for (std::size_t i = 0; i < row.channels.size(); ++i)
      chan_text += (i ? "+" : "") + std::to_string(row.channels[i]);
    csv << row.k << "," << chan_text << ","
        << format_metric(row.result.mean_accuracy) << ","
        << format_metric(row.result.mean_sensitivity) << ","
        << format_metric(row.result.mean_specificity) << "\n";
    char line[160];
    std::snprintf(line, sizeof(line), "%-3d %-24s %.6f %.6f %.6f", row.k,
                  chan_text.c_str(), row.result.mean_accuracy,
                  row.result.mean_sensitivity, row.result.mean_specificity);
    std::cout << line << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SlimSeiz: channel-adaptive seizure prediction toolkit"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "generate a synthetic EEG + annotation pair");
  synth->add_option("--out-prefix", synth_args.out_prefix, "output path prefix")
      ->capture_default_str();
  synth->add_option("--channels", synth_args.channels, "channel count")
      ->capture_default_str();
  synth->add_option("--duration", synth_args.duration_s, "length in seconds")
      ->capture_default_str();
  synth->add_option("--rate", synth_args.rate_hz, "sample rate in Hz (integer)")
      ->capture_default_str();
  synth->add_option("--informative", synth_args.informative,
                    "comma-separated channels carrying the pre-ictal signature")
      ->capture_default_str();
  synth->add_option("--onsets", synth_args.onsets, "comma-separated seizure onsets (s)")
      ->capture_default_str();
  synth->add_option("--noise-sigma", synth_args.noise_sigma, "noise amplitude (uV)")
      ->capture_default_str();
  synth->add_option("--seed", synth_args.seed, "generator seed")->capture_default_str();

  IngestArgs ingest_args;
  auto* ingest = app.add_subcommand("ingest", "window EDF recordings into a dataset cache");
  ingest->add_option("--edf", ingest_args.edf_paths, "EDF file (repeatable)");
  ingest->add_option("--annotations", ingest_args.annotation_paths,
                     "seizure CSV matching each --edf");
  ingest->add_option("--out", ingest_args.out, "output cache path")->capture_default_str();
  ingest->add_option("--window", ingest_args.window_s, "window length (s)")
      ->capture_default_str();
  ingest->add_option("--horizon", ingest_args.horizon_s, "pre-ictal horizon (s)")
      ->capture_default_str();
  ingest->add_option("--merge-gap", ingest_args.merge_gap_s, "seizure merge gap (s)")
      ->capture_default_str();
  ingest->add_option("--stride-other", ingest_args.stride_other_s,
                     "stride for non-pre-ictal windows (0 = window length)")
      ->capture_default_str();
  ingest->add_option("--stride-preictal", ingest_args.stride_preictal_s,
                     "stride for pre-ictal windows (0 = balance classes)")
      ->capture_default_str();

  SelectArgs select_args;
  auto* select = app.add_subcommand("select", "vote for the most predictive channels");
  select->add_option("--edf", select_args.edf_path, "EDF recording");
  select->add_option("--annotations", select_args.annotation_path, "seizure CSV");
  select->add_option("--k", select_args.k, "channels to keep")->capture_default_str();
  select->add_option("--m", select_args.m, "voting iterations")->capture_default_str();
  select->add_option("--seed", select_args.seed, "seed")->capture_default_str();
  select->add_option("--jobs", select_args.jobs, "worker threads")->capture_default_str();
  select->add_option("--out", select_args.out, "report path")->capture_default_str();
  select->add_option("--window", select_args.window_s, "window length (s)")
      ->capture_default_str();
  select->add_option("--horizon", select_args.horizon_s, "pre-ictal horizon (s)")
      ->capture_default_str();
  select->add_option("--merge-gap", select_args.merge_gap_s, "seizure merge gap (s)")
      ->capture_default_str();

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train the network on a dataset cache");
  train_cmd->add_option("--cache", train_args.cache, "dataset cache from ingest");
  train_cmd->add_option("--selection", train_args.selection,
                        "selection report restricting the input channels");
  train_cmd->add_option("--out-dir", train_args.out_dir, "output directory")
      ->capture_default_str();
  train_cmd->add_option("--resume", train_args.resume, "checkpoint to continue from");
  train_cmd->add_option("--holdout", train_args.holdout, "test fraction")
      ->capture_default_str();
  train_cmd->add_option("--lr", train_args.lr, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--lambda", train_args.lambda, "contrastive loss weight")
      ->capture_default_str();
  train_cmd->add_option("--tau", train_args.tau, "contrastive temperature")
      ->capture_default_str();
  train_cmd->add_option("--epochs", train_args.epochs, "training epochs")
      ->capture_default_str();
  train_cmd->add_option("--batch", train_args.batch, "batch size")->capture_default_str();
  train_cmd->add_option("--seed", train_args.seed, "seed")->capture_default_str();

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate: k-fold CV or a checkpoint");
  eval_cmd->add_option("--cache", eval_args.cache, "dataset cache");
  eval_cmd->add_option("--selection", eval_args.selection, "selection report");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "trained checkpoint");
  eval_cmd->add_option("--kfold", eval_args.kfold, "fold count (0 = holdout)")
      ->capture_default_str();
  eval_cmd->add_option("--holdout", eval_args.holdout, "test fraction")
      ->capture_default_str();
  eval_cmd->add_option("--lr", eval_args.lr, "Adam learning rate")->capture_default_str();
  eval_cmd->add_option("--lambda", eval_args.lambda, "contrastive loss weight")
      ->capture_default_str();
  eval_cmd->add_option("--tau", eval_args.tau, "contrastive temperature")
      ->capture_default_str();
  eval_cmd->add_option("--epochs", eval_args.epochs, "epochs per fold")
      ->capture_default_str();
  eval_cmd->add_option("--batch", eval_args.batch, "batch size")->capture_default_str();
  eval_cmd->add_option("--seed", eval_args.seed, "seed")->capture_default_str();
  eval_cmd->add_option("--jobs", eval_args.jobs, "fold worker threads")
      ->capture_default_str();
  eval_cmd->add_option("--out", eval_args.out, "metrics CSV path")->capture_default_str();

  SweepArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "compare channel counts on one recording");
  sweep->add_option("--edf", sweep_args.edf_path, "EDF recording");
  sweep->add_option("--annotations", sweep_args.annotation_path, "seizure CSV");
  sweep->add_option("--k-values", sweep_args.k_values, "comma-separated channel counts")
      ->capture_default_str();
  sweep->add_flag("--no-reference", sweep_args.no_reference,
                  "skip the all-channels reference row");
  sweep->add_option("--kfold", sweep_args.kfold, "fold count (0 = holdout)")
      ->capture_default_str();
  sweep->add_option("--m", sweep_args.m, "voting iterations")->capture_default_str();
  sweep->add_option("--epochs", sweep_args.epochs, "training epochs")
      ->capture_default_str();
  sweep->add_option("--seed", sweep_args.seed, "seed")->capture_default_str();
  sweep->add_option("--jobs", sweep_args.jobs, "worker threads")->capture_default_str();
  sweep->add_option("--out-dir", sweep_args.out_dir, "output directory")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) return run_synth(synth_args);
    if (ingest->parsed()) return run_ingest(ingest_args);
    if (select->parsed()) return run_select(select_args);
    if (train_cmd->parsed()) return run_train(train_args);
    if (eval_cmd->parsed()) return run_eval(eval_args);
    if (sweep->parsed()) return run_sweep(sweep_args);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidHeader& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const TruncatedData& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const UnsupportedLayout& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const OrderError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const EmptyClass& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const TooFewSamples& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const TooFewMinority& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const DegenerateInput& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
