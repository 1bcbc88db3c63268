#include "slimseiz/chansel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "slimseiz/errors.hpp"
#include "slimseiz/rng.hpp"

namespace slimseiz {

namespace {

// One channel's windows as an n x W double matrix.
Eigen::MatrixXd channel_matrix(const EegRecording& rec, int channel,
                               const WindowPlan& plan) {
  const auto& row = rec.samples[static_cast<std::size_t>(channel)];
  Eigen::MatrixXd X(static_cast<Eigen::Index>(plan.starts.size()),
                    plan.window_samples);
  for (std::size_t i = 0; i < plan.starts.size(); ++i) {
    const std::int64_t start = plan.starts[i];
    for (int j = 0; j < plan.window_samples; ++j)
      X(static_cast<Eigen::Index>(i), j) =
          static_cast<double>(row[static_cast<std::size_t>(start + j)]);
  }
  return X;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& X,
                          std::span<const std::uint32_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = X.row(rows[i]);
  return out;
}

double eval_single_channel(const Eigen::MatrixXd& X,
                           const std::vector<std::uint8_t>& labels,
                           const SelectionConfig& cfg,
                           std::uint64_t iteration_seed) {
  const Rng iter_rng(iteration_seed);
  const SplitPlan split =
      make_split(labels, Holdout{cfg.test_fraction}, iter_rng.child_seed(0));

  const Eigen::MatrixXd x_train = take_rows(X, split.train_indices);
  const Eigen::MatrixXd x_test = take_rows(X, split.test_indices);
  std::vector<int> y_train, y_test;
  for (std::uint32_t i : split.train_indices) y_train.push_back(labels[i]);
  for (std::uint32_t i : split.test_indices) y_test.push_back(labels[i]);

  const PcaModel pca =
      pca_fit_auto(x_train, cfg.pca_variance_target, cfg.pca_max_components);
  Eigen::MatrixXd z_train = pca_transform(pca, x_train);
  const Eigen::MatrixXd z_test = pca_transform(pca, x_test);

  // Balance the reduced training set by synthesizing minority rows.
  std::int64_t n1 = std::accumulate(y_train.begin(), y_train.end(), std::int64_t{0});
  std::int64_t n0 = static_cast<std::int64_t>(y_train.size()) - n1;
  const int minority = n1 < n0 ? 1 : 0;
  const std::int64_t deficit = std::llabs(n1 - n0);
  const std::int64_t n_min = minority == 1 ? n1 : n0;
  if (deficit > 0 && n_min >= 2) {
    Eigen::MatrixXd z_min(static_cast<Eigen::Index>(n_min), z_train.cols());
    Eigen::Index at = 0;
    for (std::size_t i = 0; i < y_train.size(); ++i)
      if (y_train[i] == minority)
        z_min.row(at++) = z_train.row(static_cast<Eigen::Index>(i));
    const Eigen::MatrixXd synth =
        smote(z_min, static_cast<int>(deficit), cfg.smote_k_neighbors,
              iter_rng.child_seed(1));
    Eigen::MatrixXd augmented(z_train.rows() + synth.rows(), z_train.cols());
    augmented << z_train, synth;
    z_train = std::move(augmented);
    y_train.insert(y_train.end(), static_cast<std::size_t>(deficit), minority);
  }

  const DecisionTree tree = tree_fit(z_train, y_train, cfg.tree);
  const std::vector<int> pred = tree_predict(tree, z_test);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == y_test[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

void validate_selection(const EegRecording& rec, const SelectionConfig& cfg) {
  if (cfg.k < 1 || cfg.k > static_cast<int>(rec.num_channels()))
    throw Error("k must lie in [1, num_channels]");
  if (cfg.m < 1) throw Error("m must be at least 1");
}

WindowPlan selection_plan(const EegRecording& rec, const SelectionConfig& cfg) {
  const auto merged = merge_seizures(rec.annotations, cfg.windowing.merge_gap_s);
  WindowPlan plan = plan_windows(rec, merged, cfg.windowing);
  std::size_t n1 = 0;
  for (std::uint8_t l : plan.labels) n1 += l;
  if (n1 == 0 || n1 == plan.labels.size())
    throw EmptyClass("channel selection needs windows of both classes");
  return plan;
}

}  // namespace

double channel_accuracy(const EegRecording& rec, int channel,
                        const SelectionConfig& cfg,
                        std::uint64_t iteration_seed) {
  if (channel < 0 || channel >= static_cast<int>(rec.num_channels()))
    throw IndexError("channel index out of range");
  const WindowPlan plan = selection_plan(rec, cfg);
  const Eigen::MatrixXd X = channel_matrix(rec, channel, plan);
  return eval_single_channel(X, plan.labels, cfg, iteration_seed);
}

ChannelTally select_channels(const EegRecording& rec, const SelectionConfig& cfg,
                             int jobs) {
  validate_selection(rec, cfg);
  const WindowPlan plan = selection_plan(rec, cfg);
  const int num_channels = static_cast<int>(rec.num_channels());
  const Rng master(cfg.seed);
  std::vector<std::uint64_t> iteration_seeds(static_cast<std::size_t>(cfg.m));
  for (int it = 0; it < cfg.m; ++it)
    iteration_seeds[static_cast<std::size_t>(it)] =
        master.child_seed(static_cast<std::uint64_t>(it));

  ChannelTally tally;
  tally.per_channel_accuracy.resize(cfg.m, num_channels);

  // Channels are independent jobs; each worker owns whole columns of the
  // accuracy matrix, so the thread count never changes the result.
  std::atomic<int> next_channel{0};
  auto worker = [&]() {
    for (;;) {
      const int c = next_channel.fetch_add(1);
      if (c >= num_channels) return;
      const Eigen::MatrixXd X = channel_matrix(rec, c, plan);
      for (int it = 0; it < cfg.m; ++it)
        tally.per_channel_accuracy(it, c) = eval_single_channel(
            X, plan.labels, cfg, iteration_seeds[static_cast<std::size_t>(it)]);
    }
  };
  const int pool = std::max(1, std::min(jobs, num_channels));
  if (pool == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(pool));
    for (int t = 0; t < pool; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  tally.mean_accuracy.resize(static_cast<std::size_t>(num_channels));
  for (int c = 0; c < num_channels; ++c)
    tally.mean_accuracy[static_cast<std::size_t>(c)] =
        tally.per_channel_accuracy.col(c).mean();

  // Per-iteration top-k votes.
  tally.appearance_counts.assign(static_cast<std::size_t>(num_channels), 0);
  std::vector<int> order(static_cast<std::size_t>(num_channels));
  for (int it = 0; it < cfg.m; ++it) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const double aa = tally.per_channel_accuracy(it, a);
      const double ab = tally.per_channel_accuracy(it, b);
      if (aa != ab) return aa > ab;
      const double ma = tally.mean_accuracy[static_cast<std::size_t>(a)];
      const double mb = tally.mean_accuracy[static_cast<std::size_t>(b)];
      if (ma != mb) return ma > mb;
      return a < b;
    });
    for (int t = 0; t < cfg.k; ++t)
      ++tally.appearance_counts[static_cast<std::size_t>(order[static_cast<std::size_t>(t)])];
  }

  // Final pick: most frequent, ties by mean accuracy, then index.
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const int ca = tally.appearance_counts[static_cast<std::size_t>(a)];
    const int cb = tally.appearance_counts[static_cast<std::size_t>(b)];
    if (ca != cb) return ca > cb;
    const double ma = tally.mean_accuracy[static_cast<std::size_t>(a)];
    const double mb = tally.mean_accuracy[static_cast<std::size_t>(b)];
    if (ma != mb) return ma > mb;
    return a < b;
  });
  tally.selected.assign(order.begin(), order.begin() + cfg.k);
  return tally;
}

EegRecording apply_channel_mask(const EegRecording& rec,
                                std::span<const int> selected) {
  EegRecording out;
  out.sample_rate_hz = rec.sample_rate_hz;
  out.annotations = rec.annotations;
  std::vector<bool> seen(rec.num_channels(), false);
  for (int c : selected) {
    if (c < 0 || c >= static_cast<int>(rec.num_channels()))
      throw IndexError("channel index out of range: " + std::to_string(c));
    if (seen[static_cast<std::size_t>(c)])
      throw IndexError("duplicate channel index: " + std::to_string(c));
    seen[static_cast<std::size_t>(c)] = true;
    out.channel_labels.push_back(rec.channel_labels[static_cast<std::size_t>(c)]);
    out.samples.push_back(rec.samples[static_cast<std::size_t>(c)]);
  }
  if (out.samples.empty()) throw IndexError("channel mask selects nothing");
  return out;
}

void write_selection_report(std::ostream& out, const ChannelTally& tally,
                            const std::vector<std::string>& labels,
                            const SelectionConfig& cfg) {
  const int num_channels = static_cast<int>(tally.mean_accuracy.size());
  out << "# channel selection report\n";
  out << "# k " << cfg.k << "\n";
  out << "# m " << cfg.m << "\n";
  out << "# seed " << cfg.seed << "\n";
  out << "# columns: index label mean_accuracy appearances selected_rank\n";
  char buf[128];
  for (int c = 0; c < num_channels; ++c) {
    std::string label = c < static_cast<int>(labels.size())
                            ? labels[static_cast<std::size_t>(c)]
                            : "ch" + std::to_string(c);
    if (label.empty()) label = "ch" + std::to_string(c);
    for (char& ch : label)
      if (ch == ' ' || ch == '\t') ch = '_';
    int rank = 0;
    for (std::size_t s = 0; s < tally.selected.size(); ++s)
      if (tally.selected[s] == c) rank = static_cast<int>(s) + 1;
    std::snprintf(buf, sizeof(buf), "%d %s %.6f %d ", c, label.c_str(),
                  tally.mean_accuracy[static_cast<std::size_t>(c)],
                  tally.appearance_counts[static_cast<std::size_t>(c)]);
    out << buf;
    if (rank > 0)
      out << rank << "\n";
    else
      out << "-\n";
  }
}

SelectionReport read_selection_report(std::istream& in) {
  SelectionReport rep;
  std::string line;
  std::vector<std::pair<int, int>> ranked;  // (rank, channel)
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream meta(line.substr(1));
      std::string key;
      meta >> key;
      if (key == "k") meta >> rep.k;
      if (key == "m") meta >> rep.m;
      if (key == "seed") meta >> rep.seed;
      continue;
    }
    std::istringstream row(line);
    int index = 0, appearances = 0;
    double mean = 0.0;
    std::string label, rank_text;
    if (!(row >> index >> label >> mean >> appearances >> rank_text))
      throw ParseError("malformed selection report row: \"" + line + "\"");
    rep.channel_index.push_back(index);
    rep.channel_label.push_back(label);
    rep.mean_accuracy.push_back(mean);
    rep.appearances.push_back(appearances);
    if (rank_text != "-") {
      try {
        ranked.emplace_back(std::stoi(rank_text), index);
      } catch (const std::exception&) {
        throw ParseError("malformed selected rank: \"" + rank_text + "\"");
      }
    }
  }
  std::sort(ranked.begin(), ranked.end());
  for (const auto& [rank, channel] : ranked) {
    (void)rank;
    rep.selected.push_back(channel);
  }
  if (rep.channel_index.empty())
    throw ParseError("selection report has no channel rows");
  return rep;
}

SelectionReport read_selection_report_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open selection report: " + path);
  return read_selection_report(in);
}

}  // namespace slimseiz
