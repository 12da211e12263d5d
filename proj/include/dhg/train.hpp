#pragma once

// Training and evaluation: experiment config, momentum SGD with step decay,
// the epoch loop, Top-k evaluation and two-stream score fusion reports.

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>

#include "dhg/model.hpp"

namespace dhg {

enum class Stream { kJoint, kBone };

struct TrainConfig {
  double lr = 0.1;
  double momentum = 0.9;
  bool nesterov = false;
  double weight_decay = 0.0;
  std::size_t batch_size = 16;
  std::vector<std::size_t> decay_epochs = {30, 40};
  std::size_t total_epochs = 50;
  std::uint64_t seed = 1;
  Stream stream = Stream::kJoint;
  std::size_t frames = 64;
  bool center = false;
  bool shuffle = true;
  std::size_t workers = 1;  // > 1 shards each batch across threads
  double target_train_accuracy = 0.0;  // stop after the first epoch at or above it; 0 disables
  bool bn_recalibrate = true;  // exact batchnorm statistics over the train split after the last epoch
  std::vector<std::size_t> topk = {1, 5};
  std::string train_manifest;
  std::string test_manifest;
  std::string tree;  // kinematic tree file for the bone stream; empty = built-in NTU-25
  std::string output_dir = "runs/dhg";
  ModelConfig model;

  void validate() const;
  // ConfigError for unknown keys or malformed values.
  void apply(const KeyValue& kv);
  void apply_text(const std::string& text);
  std::string to_text() const;
  static TrainConfig from_text(const std::string& text);
  // Every key accepted by apply(), including the model keys.
  static std::vector<std::string> keys();
};

// lr · 10^{-k}, k = number of decay epochs <= epoch (0-based epochs).
double learning_rate(const TrainConfig& cfg, std::size_t epoch);

struct SgdOptions {
  bool nesterov = false;
  double weight_decay = 0.0;
};

// v ← μ·v + g, p ← p − lr·v (Nesterov: p ← p − lr·(g + μ·v)). Velocities are
// created as zeros on first use.
template <typename T>
void sgd_step(const std::vector<Parameter<T>*>& params, double lr, double momentum, std::vector<Tensor<T>>& velocity,
              const SgdOptions& opts = {});

struct Dataset {
  std::vector<SkeletonSequence> samples;
  std::size_t num_classes = 0;
};

// Loads every manifest entry, then fits frames and persons, optionally
// centres, and converts to bones for the bone stream.
Dataset load_dataset(const DatasetManifest& manifest, Stream stream, std::size_t frames, bool center,
                     const std::string& tree_path = "");
Dataset prepare_dataset(std::vector<SkeletonSequence> raw, std::size_t num_classes, Stream stream, std::size_t frames,
                        bool center, const std::string& tree_path = "");

// Replaces every batchnorm running statistic with the average of its batch
// statistics over one ordered train-mode pass through data.
void recalibrate_batchnorm(DhstNetwork<float>& net, const Dataset& data, std::size_t batch_size);

struct EpochMetrics {
  std::size_t epoch = 0;
  double lr = 0;
  double loss = 0;
  double train_accuracy = 0;
  double seconds = 0;
};

struct EvalMetrics {
  std::size_t samples = 0;
  std::vector<std::pair<std::size_t, double>> topk;  // (k, accuracy)

  double top(std::size_t k) const;
};

struct MetricsReport {
  std::vector<EpochMetrics> epochs;
  std::optional<double> final_train_accuracy;  // eval-mode pass over the train split
  std::optional<EvalMetrics> eval;
  bool early_stopped = false;
  double wall_seconds = 0;
};

// JSON text; timing fields only when include_timing is set, so that reruns
// produce identical files without it.
std::string metrics_json(const MetricsReport& report, bool include_timing);

struct TrainResult {
  MetricsReport report;
  std::unique_ptr<DhstNetwork<float>> net;
  std::filesystem::path checkpoint;
};

// Trains on cfg.train_manifest and writes <output_dir>/model.dhgw,
// metrics.json, timing.json and config.cfg. DivergedLoss when a loss turns
// non-finite.
using EpochCallback = std::function<void(const EpochMetrics&)>;

TrainResult train(const TrainConfig& cfg, const EpochCallback& on_epoch = {});
TrainResult train(const TrainConfig& cfg, const Dataset& train_set, const Dataset* test_set,
                  const EpochCallback& on_epoch = {});

// Eval-mode logits per sample [num_classes].
std::vector<Tensor<float>> predict(DhstNetwork<float>& net, const Dataset& data, std::size_t batch_size = 16);

EvalMetrics score(const std::vector<Tensor<float>>& logits, const std::vector<std::size_t>& labels,
                  const std::vector<std::size_t>& topk);
EvalMetrics evaluate(DhstNetwork<float>& net, const Dataset& data, const std::vector<std::size_t>& topk,
                     std::size_t batch_size = 16);

struct TwoStreamReport {
  EvalMetrics joint;
  EvalMetrics bone;
  EvalMetrics fused;
};

// CheckpointMismatch when the streams disagree on num_classes.
TwoStreamReport two_stream_eval(DhstNetwork<float>& joint_net, DhstNetwork<float>& bone_net, const Dataset& joint_data,
                                const Dataset& bone_data, const std::vector<std::size_t>& topk,
                                std::size_t batch_size = 16);
TwoStreamReport fuse_reports(const std::vector<Tensor<float>>& joint_logits,
                             const std::vector<Tensor<float>>& bone_logits, const std::vector<std::size_t>& labels,
                             const std::vector<std::size_t>& topk);

}  // namespace dhg
