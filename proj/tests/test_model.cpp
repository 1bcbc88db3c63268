#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "slimseiz/errors.hpp"
#include "slimseiz/model.hpp"
#include "slimseiz/rng.hpp"
#include "support/oracles.hpp"

using namespace slimseiz;
using nn::Tensor;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.in_channels = 2;
  cfg.input_length = 64;
  cfg.trunk_channels = 8;
  cfg.res_bottleneck = 4;
  cfg.pool1_window = cfg.pool1_stride = 2;
  cfg.pool2_window = cfg.pool2_stride = 2;
  cfg.mamba_inner = 16;
  cfg.ssm_state = 2;
  cfg.dt_rank = 2;
  cfg.batch_size = 16;
  cfg.epochs = 5;
  return cfg;
}

// Class 1 carries a strong low-frequency sinusoid on both channels; class 0
// is pure noise.
SegmentDataset toy_dataset(int per_class, std::uint64_t seed, int channels = 2,
                           int window = 64) {
  SegmentDataset ds;
  ds.num_channels = channels;
  ds.window_samples = window;
  ds.sample_rate_hz = 16.0;
  for (int c = 0; c < channels; ++c)
    ds.channel_labels.push_back("t" + std::to_string(c));
  Rng rng(seed);
  for (int i = 0; i < 2 * per_class; ++i) {
    const int label = i % 2;
    const double phase = 2.0 * M_PI * rng.uniform();
    for (int c = 0; c < channels; ++c)
      for (int t = 0; t < window; ++t) {
        double v = 0.5 * rng.gaussian();
        if (label == 1)
          v += 2.0 * std::sin(2.0 * M_PI * 3.0 * t / window + phase);
        ds.data.push_back(static_cast<float>(v));
      }
    ds.labels.push_back(static_cast<std::uint8_t>(label));
    ds.start_times_s.push_back(i);
  }
  return ds;
}

SegmentDataset random_dataset(int n, std::uint64_t seed, int channels = 2,
                              int window = 64) {
  SegmentDataset ds;
  ds.num_channels = channels;
  ds.window_samples = window;
  ds.sample_rate_hz = 16.0;
  for (int c = 0; c < channels; ++c)
    ds.channel_labels.push_back("r" + std::to_string(c));
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < channels; ++c)
      for (int t = 0; t < window; ++t)
        ds.data.push_back(static_cast<float>(rng.gaussian()));
    ds.labels.push_back(static_cast<std::uint8_t>(rng.uniform_int(2)));
    ds.start_times_s.push_back(i);
  }
  // make sure both classes exist
  ds.labels[0] = 0;
  ds.labels[1] = 1;
  return ds;
}

std::vector<std::uint32_t> all_indices(const SegmentDataset& ds) {
  std::vector<std::uint32_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0u);
  return idx;
}

}  // namespace

// ------------------------------------------------------------------ build --

TEST_CASE("default config stays inside the parameter budget near the target scale") {
  const ModelConfig cfg;  // 8-channel default
  const ModelParams params = build_model(cfg, 1);
  const std::int64_t count = params.parameter_count();
  std::printf("default model parameter count: %lld\n",
              static_cast<long long>(count));
  CHECK(count <= 25000);
  CHECK(count >= 17000);  // within 20% of the 21.2K reference scale
  CHECK(count <= 25440);
}

TEST_CASE("front conv parameter count follows the closed form") {
  ModelConfig cfg;
  cfg.in_channels = 8;
  const ModelParams params = build_model(cfg, 1);
  const std::int64_t front =
      params.at("front.w").size() + params.at("front.b").size();
  CHECK(front == 8 * 32 * 21 + 32);
  CHECK(front == 5408);
  // full enumeration equals the sum of closed forms per layer
  std::int64_t expected = 0;
  for (const auto& [name, t] : params.named) {
    (void)name;
    std::int64_t sz = 1;
    for (int d = 0; d < t.rank(); ++d) sz *= t.dim(d);
    expected += sz;
  }
  CHECK(params.parameter_count() == expected);
}

TEST_CASE("identical seeds build bitwise-identical parameters") {
  const ModelConfig cfg = tiny_config();
  const ModelParams a = build_model(cfg, 77);
  const ModelParams b = build_model(cfg, 77);
  REQUIRE(a.named.size() == b.named.size());
  for (std::size_t i = 0; i < a.named.size(); ++i) {
    CHECK(a.named[i].first == b.named[i].first);
    CHECK(a.named[i].second.values() == b.named[i].second.values());
  }
  const ModelParams c = build_model(cfg, 78);
  CHECK(a.named[0].second.values() != c.named[0].second.values());
}

TEST_CASE("a too-small budget raises BudgetExceeded") {
  ModelConfig cfg = tiny_config();
  cfg.max_parameters = 100;
  CHECK_THROWS_AS(build_model(cfg, 1), BudgetExceeded);
}

TEST_CASE("ssm decay parameter starts as log(1..N)") {
  const ModelParams params = build_model(tiny_config(), 3);
  const Tensor& a_log = params.at("mamba.ssm.a_log");
  CHECK(a_log.data()[0] == doctest::Approx(std::log(1.0)));
  CHECK(a_log.data()[1] == doctest::Approx(std::log(2.0)));
}

// ---------------------------------------------------------------- forward --

TEST_CASE("batch permutation and duplication act on logits as expected") {
  const ModelConfig cfg = tiny_config();
  ModelParams params = build_model(cfg, 5);
  Rng rng(9);
  Tensor x({4, 2, 64});
  for (std::int64_t i = 0; i < x.size(); ++i)
    x.data()[i] = static_cast<float>(rng.gaussian());

  const ForwardResult out = forward(params, x);
  // permute rows 0 and 3
  Tensor xp({4, 2, 64});
  const std::int64_t row = 2 * 64;
  std::copy(x.data() + 3 * row, x.data() + 4 * row, xp.data());
  std::copy(x.data() + 1 * row, x.data() + 3 * row, xp.data() + row);
  std::copy(x.data() + 0 * row, x.data() + 1 * row, xp.data() + 3 * row);
  const ForwardResult outp = forward(params, xp);
  for (int j = 0; j < 2; ++j) {
    CHECK(outp.logits.data()[0 * 2 + j] == out.logits.data()[3 * 2 + j]);
    CHECK(outp.logits.data()[3 * 2 + j] == out.logits.data()[0 * 2 + j]);
    CHECK(outp.logits.data()[1 * 2 + j] == out.logits.data()[1 * 2 + j]);
  }

  // duplicate the batch
  Tensor xd({8, 2, 64});
  std::copy(x.data(), x.data() + x.size(), xd.data());
  std::copy(x.data(), x.data() + x.size(), xd.data() + x.size());
  const ForwardResult outd = forward(params, xd);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 2; ++j)
      CHECK(outd.logits.data()[i * 2 + j] ==
            out.logits.data()[(i % 4) * 2 + j]);
}

TEST_CASE("logits stay finite over random gaussian inputs") {
  const ModelConfig cfg = tiny_config();
  ModelParams params = build_model(cfg, 6);
  Rng rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor x({2, 2, 64});
    for (std::int64_t i = 0; i < x.size(); ++i)
      x.data()[i] = static_cast<float>(3.0 * rng.gaussian());
    const ForwardResult out = forward(params, x);
    for (std::int64_t i = 0; i < out.logits.size(); ++i)
      CHECK(std::isfinite(out.logits.data()[i]));
  }
}

TEST_CASE("swapping class labels and head rows swaps the logit columns") {
  const ModelConfig cfg = tiny_config();
  ModelParams params = build_model(cfg, 11);
  Rng rng(12);
  Tensor x({3, 2, 64});
  for (std::int64_t i = 0; i < x.size(); ++i)
    x.data()[i] = static_cast<float>(rng.gaussian());
  const ForwardResult before = forward(params, x);

  Tensor& w = params.at("head.w");
  for (int c = 0; c < cfg.trunk_channels; ++c)
    std::swap(w.data()[c], w.data()[cfg.trunk_channels + c]);
  Tensor& b = params.at("head.b");
  std::swap(b.data()[0], b.data()[1]);
  const ForwardResult after = forward(params, x);
  for (int i = 0; i < 3; ++i) {
    CHECK(after.logits.data()[i * 2 + 0] == before.logits.data()[i * 2 + 1]);
    CHECK(after.logits.data()[i * 2 + 1] == before.logits.data()[i * 2 + 0]);
  }
}

TEST_CASE("forward rejects mismatched input shapes") {
  const ModelConfig cfg = tiny_config();
  ModelParams params = build_model(cfg, 1);
  Tensor bad({2, 3, 64});
  CHECK_THROWS_AS(forward(params, bad), ShapeMismatch);
}

// ------------------------------------------------- end-to-end grad check ---

TEST_CASE("every parameter gradient of the tiny model matches finite differences") {
  const ModelConfig cfg = tiny_config();
  ModelParams params = build_model(cfg, 21);
  Rng rng(22);
  // The output projection is zero at init (identity block); randomize it so
  // every path, the scan included, carries gradient during this check.
  for (const char* name : {"mamba.w_out", "mamba.b_out"}) {
    Tensor& t = params.at(name);
    for (std::int64_t i = 0; i < t.size(); ++i)
      t.data()[i] = static_cast<float>(0.2 * rng.gaussian());
  }
  Tensor x({4, 2, 64});
  for (std::int64_t i = 0; i < x.size(); ++i)
    x.data()[i] = static_cast<float>(0.8 * rng.gaussian());
  const std::vector<int> labels{0, 1, 0, 1};
  // Moderate temperature keeps the normalized-embedding softmax smooth enough
  // for finite differences to resolve at 32-bit precision.
  const double tau = 0.2;

  auto loss_value = [&]() -> double {
    const ForwardResult out = forward(params, x);
    const Tensor ce = nn::cross_entropy(out.logits, labels);
    const Tensor sup = nn::supcon_loss(out.embedding, labels, tau);
    return static_cast<double>(ce.item()) + static_cast<double>(sup.item());
  };

  params.zero_grad();
  {
    const ForwardResult out = forward(params, x);
    const Tensor ce = nn::cross_entropy(out.logits, labels);
    const Tensor sup = nn::supcon_loss(out.embedding, labels, tau);
    nn::backward(nn::scale_add(ce, sup, 1.0));
  }

  std::size_t checked = 0, failed = 0;
  for (auto& [name, t] : params.named) {
    double gmax = 1e-4;
    for (std::int64_t i = 0; i < t.size(); ++i)
      gmax = std::max(gmax, std::abs(static_cast<double>(t.grad()[i])));
    for (std::int64_t i = 0; i < t.size(); ++i) {
      const double analytic = t.grad()[i];
      ++checked;
      // Two probe widths: the small step resolves steep directions (max-pool
      // selections switch inside a wide probe), the large one beats the f32
      // forward noise on near-zero gradients.
      bool ok = false;
      for (double h : {1e-3, 1e-2}) {
        const double numeric = oracles::central_difference(
            t.data(), static_cast<std::size_t>(i), loss_value, h);
        if (oracles::rel_err(analytic, numeric, 1e-4) < 1e-2 ||
            std::abs(analytic - numeric) < std::max(3e-3 * gmax, 2e-3)) {
          ok = true;
          break;
        }
      }
      if (!ok) {
        ++failed;
        MESSAGE("mismatch in " << name << "[" << i << "]");
      }
    }
  }
  CHECK(failed == 0);
  CHECK(checked > 1500);  // the tiny model still has every layer present
}

// ------------------------------------------------------------------ train --

TEST_CASE("training loss decreases on a separable task") {
  ModelConfig cfg = tiny_config();
  cfg.epochs = 20;
  cfg.learning_rate = 3e-3;
  const SegmentDataset ds = toy_dataset(40, 1);
  ModelParams params = build_model(cfg, 2);
  nn::OptimState optim;
  TrainOptions opts;
  opts.seed = 3;
  const TrainResult result = train(params, ds, opts, optim);
  REQUIRE(result.epoch_loss.size() == 20);
  CHECK(result.epoch_loss.back() < result.epoch_loss.front());
  CHECK(result.epoch_metrics.back().accuracy > 0.85);
}

TEST_CASE("a tiny batch is memorized perfectly") {
  ModelConfig cfg = tiny_config();
  cfg.epochs = 200;
  cfg.learning_rate = 3e-3;
  cfg.batch_size = 32;
  const SegmentDataset ds = random_dataset(32, 7);
  ModelParams params = build_model(cfg, 8);
  nn::OptimState optim;
  TrainOptions opts;
  opts.seed = 9;
  const TrainResult result = train(params, ds, opts, optim);
  CHECK(result.epoch_metrics.back().accuracy == doctest::Approx(1.0));
}

TEST_CASE("zero contrastive weight reduces the loss to cross-entropy") {
  ModelConfig cfg = tiny_config();
  cfg.epochs = 1;
  cfg.loss_lambda = 0.0;
  cfg.batch_size = 64;  // single batch covers the dataset
  const SegmentDataset ds = toy_dataset(16, 4);
  ModelParams params = build_model(cfg, 13);
  nn::OptimState optim;
  TrainOptions opts;
  opts.seed = 14;

  // replicate the pre-update cross-entropy on the same parameters
  ModelParams fresh = build_model(cfg, 13);
  const auto idx = all_indices(ds);
  std::vector<int> labels;
  for (std::uint32_t i : idx) labels.push_back(ds.labels[i]);
  std::vector<int> channels{0, 1};
  const Tensor x = batch_input(ds, idx, channels);
  const ForwardResult out = forward(fresh, x);
  const double ce = nn::cross_entropy(out.logits, labels).item();

  const TrainResult result = train(params, ds, opts, optim);
  CHECK(result.epoch_loss[0] == doctest::Approx(ce).epsilon(1e-6));
}

TEST_CASE("training is bitwise deterministic under a fixed seed") {
  ModelConfig cfg = tiny_config();
  cfg.epochs = 3;
  const SegmentDataset ds = toy_dataset(24, 5);
  auto run = [&]() {
    ModelParams params = build_model(cfg, 31);
    nn::OptimState optim;
    TrainOptions opts;
    opts.seed = 32;
    train(params, ds, opts, optim);
    return params;
  };
  const ModelParams a = run();
  const ModelParams b = run();
  for (std::size_t i = 0; i < a.named.size(); ++i)
    CHECK(a.named[i].second.values() == b.named[i].second.values());
}

TEST_CASE("training rejects a single-class subset") {
  ModelConfig cfg = tiny_config();
  SegmentDataset ds = toy_dataset(10, 6);
  std::fill(ds.labels.begin(), ds.labels.end(), std::uint8_t{1});
  ModelParams params = build_model(cfg, 1);
  nn::OptimState optim;
  TrainOptions opts;
  CHECK_THROWS_AS(train(params, ds, opts, optim), EmptyClass);
}

// --------------------------------------------------------------- evaluate --

TEST_CASE("cross-validation on a separable task reaches high accuracy") {
  ModelConfig cfg = tiny_config();
  cfg.epochs = 25;
  cfg.learning_rate = 3e-3;
  const SegmentDataset ds = toy_dataset(60, 8);
  const SplitPlan plan = make_split(ds.labels, KFold{3}, 77);
  const std::vector<int> channels{0, 1};
  const EvalResult res = evaluate(cfg, ds, plan, channels, 77, 2);
  REQUIRE(res.folds.size() == 3);
  CHECK(res.mean_accuracy > 0.9);
  // aggregate is the arithmetic mean of the folds
  double acc = 0.0;
  for (const auto& m : res.folds) acc += m.accuracy;
  CHECK(res.mean_accuracy == doctest::Approx(acc / 3.0));
}

TEST_CASE("evaluate is deterministic and independent of the job count") {
  ModelConfig cfg = tiny_config();
  cfg.epochs = 2;
  const SegmentDataset ds = toy_dataset(18, 9);
  const SplitPlan plan = make_split(ds.labels, KFold{3}, 5);
  const std::vector<int> channels{0, 1};
  const EvalResult a = evaluate(cfg, ds, plan, channels, 5, 1);
  const EvalResult b = evaluate(cfg, ds, plan, channels, 5, 3);
  REQUIRE(a.folds.size() == b.folds.size());
  for (std::size_t f = 0; f < a.folds.size(); ++f) {
    CHECK(a.folds[f].accuracy == b.folds[f].accuracy);
    CHECK(a.folds[f].tp == b.folds[f].tp);
    CHECK(a.folds[f].fp == b.folds[f].fp);
  }
}

// ------------------------------------------------------------- checkpoint --

TEST_CASE("checkpoints round-trip byte-exactly") {
  const std::string path = "tmp_test_checkpoint.slszw";
  const ModelConfig cfg = tiny_config();
  const ModelParams params = build_model(cfg, 55);
  save_checkpoint(path, params.named);
  const auto loaded = load_checkpoint(path);
  REQUIRE(loaded.size() == params.named.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].first == params.named[i].first);
    CHECK(loaded[i].second.shape() == params.named[i].second.shape());
    CHECK(loaded[i].second.values() == params.named[i].second.values());
  }
  // writing the loaded tensors again produces identical bytes
  const std::string path2 = "tmp_test_checkpoint2.slszw";
  save_checkpoint(path2, loaded);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)),
                       std::istreambuf_iterator<char>());
  const std::string b2((std::istreambuf_iterator<char>(f2)),
                       std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
  CHECK(b1.size() > 6);
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("resuming from a checkpoint replays the uninterrupted run") {
  ModelConfig cfg = tiny_config();
  const SegmentDataset ds = toy_dataset(24, 10);
  const std::string path = "tmp_test_resume.slszw";

  cfg.epochs = 4;
  ModelParams straight = build_model(cfg, 91);
  nn::OptimState optim_straight;
  TrainOptions opts;
  opts.seed = 92;
  const TrainResult full = train(straight, ds, opts, optim_straight);

  // stop after 2 epochs, checkpoint, restore, continue
  cfg.epochs = 2;
  ModelParams half = build_model(cfg, 91);
  nn::OptimState optim_half;
  train(half, ds, opts, optim_half);
  save_checkpoint(path, training_records(half, optim_half, 2));

  cfg.epochs = 4;
  ModelParams resumed = build_model(cfg, 91);
  nn::OptimState optim_resumed;
  TrainOptions resume_opts = opts;
  resume_opts.start_epoch =
      restore_training(resumed, optim_resumed, load_checkpoint(path));
  CHECK(resume_opts.start_epoch == 2);
  const TrainResult tail = train(resumed, ds, resume_opts, optim_resumed);

  REQUIRE(tail.epoch_loss.size() == 2);
  CHECK(std::abs(tail.epoch_loss[0] - full.epoch_loss[2]) < 1e-6);
  CHECK(std::abs(tail.epoch_loss[1] - full.epoch_loss[3]) < 1e-6);
  for (std::size_t i = 0; i < straight.named.size(); ++i)
    CHECK(straight.named[i].second.values() == resumed.named[i].second.values());
  std::filesystem::remove(path);
}
