#include "dhg/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <sstream>
#include <thread>

#include "dhg/ntu25.hpp"
#include "dhg/rng.hpp"

namespace dhg {

namespace {

const std::vector<std::string> kTrainKeys = {
    "lr",     "momentum", "nesterov", "weight_decay", "batch_size",     "decay_epochs",   "total_epochs",
    "seed",   "stream",   "frames",   "center",       "shuffle",        "workers",        "target_train_accuracy",
    "bn_recalibrate", "topk",   "train_manifest", "test_manifest", "tree", "output_dir"};

const std::vector<std::string> kModelKeys = {
    "num_classes",   "in_channels", "channels",        "stride_blocks", "multi_dilation", "residual",
    "batchnorm",     "static_branch", "weight_branch", "topology_branch", "ablation",     "fusion",
    "weight_mode",   "weight_normalized", "embed_divisor", "k_n",         "k_m",            "kmeans_max_iter",
    "topology_seed", "topology_stride", "topology_space", "num_nodes",  "hypergraph",     "hypergraph_edges"};

const char* bool_text(bool b) { return b ? "true" : "false"; }

}  // namespace

void TrainConfig::validate() const {
  require(lr > 0, ErrorCode::kConfigError, "lr must be positive");
  require(momentum >= 0 && momentum < 1, ErrorCode::kConfigError, "momentum must lie in [0, 1)");
  require(weight_decay >= 0, ErrorCode::kConfigError, "weight_decay must be non-negative");
  require(batch_size >= 1, ErrorCode::kConfigError, "batch_size must be positive");
  require(frames >= 2, ErrorCode::kConfigError, "frames must be at least 2");
  require(workers >= 1, ErrorCode::kConfigError, "workers must be positive");
  require(target_train_accuracy >= 0 && target_train_accuracy <= 1, ErrorCode::kConfigError,
          "target_train_accuracy must lie in [0, 1]");
  for (std::size_t i = 0; i < decay_epochs.size(); ++i) {
    require(i == 0 || decay_epochs[i] > decay_epochs[i - 1], ErrorCode::kConfigError,
            "decay_epochs must be strictly increasing");
    require(decay_epochs[i] < total_epochs || total_epochs == 0, ErrorCode::kConfigError,
            "decay epoch " + std::to_string(decay_epochs[i]) + " is not before total_epochs");
  }
  require(!topk.empty(), ErrorCode::kConfigError, "topk is empty");
  for (std::size_t k : topk) require(k >= 1, ErrorCode::kConfigError, "topk entries must be positive");
  model.validate();
}

void TrainConfig::apply(const KeyValue& kv) {
  const std::string& k = kv.key;
  if (k == "lr") lr = parse_real(kv);
  else if (k == "momentum") momentum = parse_real(kv);
  else if (k == "nesterov") nesterov = parse_bool(kv);
  else if (k == "weight_decay") weight_decay = parse_real(kv);
  else if (k == "batch_size") batch_size = parse_size(kv);
  else if (k == "decay_epochs") decay_epochs = parse_size_list(kv);
  else if (k == "total_epochs") total_epochs = parse_size(kv);
  else if (k == "seed") seed = parse_u64(kv);
  else if (k == "stream") {
    if (kv.value == "joint") stream = Stream::kJoint;
    else if (kv.value == "bone") stream = Stream::kBone;
    else fail(ErrorCode::kConfigError, "stream must be joint or bone");
  } else if (k == "frames") frames = parse_size(kv);
  else if (k == "center") center = parse_bool(kv);
  else if (k == "shuffle") shuffle = parse_bool(kv);
  else if (k == "workers") workers = parse_size(kv);
  else if (k == "target_train_accuracy") target_train_accuracy = parse_real(kv);
  else if (k == "bn_recalibrate") bn_recalibrate = parse_bool(kv);
  else if (k == "topk") topk = parse_size_list(kv);
  else if (k == "train_manifest") train_manifest = kv.value;
  else if (k == "test_manifest") test_manifest = kv.value;
  else if (k == "tree") tree = kv.value;
  else if (k == "output_dir") output_dir = kv.value;
  else if (!model.apply(kv)) fail(ErrorCode::kConfigError, "line " + std::to_string(kv.line) + ": unknown key '" + k + "'");
}

void TrainConfig::apply_text(const std::string& text) {
  for (const KeyValue& kv : parse_key_values(text)) apply(kv);
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "lr = " << format_real(lr) << "\n"
     << "momentum = " << format_real(momentum) << "\n"
     << "nesterov = " << bool_text(nesterov) << "\n"
     << "weight_decay = " << format_real(weight_decay) << "\n"
     << "batch_size = " << batch_size << "\n"
     << "decay_epochs = " << format_size_list(decay_epochs) << "\n"
     << "total_epochs = " << total_epochs << "\n"
     << "seed = " << seed << "\n"
     << "stream = " << (stream == Stream::kJoint ? "joint" : "bone") << "\n"
     << "frames = " << frames << "\n"
     << "center = " << bool_text(center) << "\n"
     << "shuffle = " << bool_text(shuffle) << "\n"
     << "workers = " << workers << "\n"
     << "target_train_accuracy = " << format_real(target_train_accuracy) << "\n"
     << "bn_recalibrate = " << bool_text(bn_recalibrate) << "\n"
     << "topk = " << format_size_list(topk) << "\n"
     << "train_manifest = " << train_manifest << "\n"
     << "test_manifest = " << test_manifest << "\n"
     << "tree = " << tree << "\n"
     << "output_dir = " << output_dir << "\n"
     << model.to_text();
  return os.str();
}

TrainConfig TrainConfig::from_text(const std::string& text) {
  TrainConfig cfg;
  cfg.apply_text(text);
  return cfg;
}

std::vector<std::string> TrainConfig::keys() {
  std::vector<std::string> all = kTrainKeys;
  all.insert(all.end(), kModelKeys.begin(), kModelKeys.end());
  return all;
}

double learning_rate(const TrainConfig& cfg, std::size_t epoch) {
  int decays = 0;
  for (std::size_t d : cfg.decay_epochs)
    if (d <= epoch) ++decays;
  return cfg.lr * std::pow(10.0, -decays);
}

template <typename T>
void sgd_step(const std::vector<Parameter<T>*>& params, double lr, double momentum, std::vector<Tensor<T>>& velocity,
              const SgdOptions& opts) {
  if (velocity.empty())
    for (Parameter<T>* p : params) velocity.push_back(Tensor<T>::zeros_like(p->value));
  require(velocity.size() == params.size(), ErrorCode::kShapeMismatch,
          std::to_string(velocity.size()) + " velocities for " + std::to_string(params.size()) + " parameters");
  const T mu = static_cast<T>(momentum), step = static_cast<T>(lr), wd = static_cast<T>(opts.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = *params[i];
    require(p.grad.shape() == p.value.shape() && velocity[i].shape() == p.value.shape(), ErrorCode::kShapeMismatch,
            "sgd_step: shapes disagree for " + p.name);
    T* w = p.value.ptr();
    const T* g = p.grad.ptr();
    T* v = velocity[i].ptr();
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const T gk = g[k] + wd * w[k];
      v[k] = mu * v[k] + gk;
      w[k] -= step * (opts.nesterov ? gk + mu * v[k] : v[k]);
    }
  }
}

template void sgd_step<float>(const std::vector<Parameter<float>*>&, double, double, std::vector<Tensor<float>>&,
                              const SgdOptions&);
template void sgd_step<double>(const std::vector<Parameter<double>*>&, double, double, std::vector<Tensor<double>>&,
                               const SgdOptions&);

Dataset prepare_dataset(std::vector<SkeletonSequence> raw, std::size_t num_classes, Stream stream, std::size_t frames,
                        bool center, const std::string& tree_path) {
  require(!raw.empty(), ErrorCode::kDatasetError, "dataset is empty");
  KinematicTree tree = tree_path.empty() ? ntu25_tree() : KinematicTree::load(tree_path);
  tree.validate();
  Dataset out;
  out.num_classes = num_classes;
  for (SkeletonSequence& seq : raw) {
    require(seq.label < num_classes, ErrorCode::kDatasetError,
            "label " + std::to_string(seq.label) + " outside " + std::to_string(num_classes) + " classes");
    SkeletonSequence s = fit_persons(fit_frames(seq, frames), kMaxPersons);
    if (center) s = center_sequence(s, tree.root());
    if (stream == Stream::kBone) s = to_bone_stream(s, tree);
    out.samples.push_back(std::move(s));
  }
  for (const auto& s : out.samples)
    require(s.joints() == out.samples[0].joints(), ErrorCode::kDatasetError, "dataset mixes joint counts");
  return out;
}

Dataset load_dataset(const DatasetManifest& manifest, Stream stream, std::size_t frames, bool center,
                     const std::string& tree_path) {
  manifest.validate();
  std::vector<SkeletonSequence> raw;
  for (const ManifestEntry& e : manifest.entries) {
    SkeletonSequence s = load_sequence(manifest.resolve(e));
    s.label = e.label;
    raw.push_back(std::move(s));
  }
  return prepare_dataset(std::move(raw), manifest.num_classes, stream, frames, center, tree_path);
}

double EvalMetrics::top(std::size_t k) const {
  for (const auto& [kk, acc] : topk)
    if (kk == k) return acc;
  fail(ErrorCode::kConfigError, "top-" + std::to_string(k) + " was not evaluated");
}

std::string metrics_json(const MetricsReport& report, bool include_timing) {
  using nlohmann::ordered_json;
  ordered_json j;
  ordered_json epochs = ordered_json::array();
  for (const EpochMetrics& e : report.epochs) {
    ordered_json row{{"epoch", e.epoch}, {"lr", e.lr}, {"loss", e.loss}, {"train_accuracy", e.train_accuracy}};
    if (include_timing) row["seconds"] = e.seconds;
    epochs.push_back(row);
  }
  j["epochs"] = epochs;
  j["early_stopped"] = report.early_stopped;
  if (report.final_train_accuracy) j["final_train_accuracy"] = *report.final_train_accuracy;
  if (report.eval) {
    ordered_json ev{{"samples", report.eval->samples}};
    for (const auto& [k, acc] : report.eval->topk) ev["top" + std::to_string(k)] = acc;
    j["eval"] = ev;
  }
  if (include_timing) j["wall_seconds"] = report.wall_seconds;
  return j.dump(2) + "\n";
}

void recalibrate_batchnorm(DhstNetwork<float>& net, const Dataset& data, std::size_t batch_size) {
  const std::vector<BatchNormState<float>*> states = net.norm_states();
  if (states.empty() || data.samples.empty()) return;
  std::vector<float> saved;
  for (auto* st : states) saved.push_back(st->momentum);
  std::size_t seen = 0;
  for (std::size_t start = 0; start < data.samples.size(); start += batch_size) {
    std::vector<const SkeletonSequence*> seqs;
    for (std::size_t i = start; i < std::min(data.samples.size(), start + batch_size); ++i)
      seqs.push_back(&data.samples[i]);
    ++seen;
    for (auto* st : states) st->momentum = 1.0f / float(seen);
    Tape<float> tape(Tape<float>::Mode::kNoGrad);
    ForwardOptions opts;
    opts.train = true;
    opts.update_bn = true;
    net.forward(tape, make_batch<float>(seqs), opts);
  }
  for (std::size_t i = 0; i < states.size(); ++i) states[i]->momentum = saved[i];
}

std::vector<Tensor<float>> predict(DhstNetwork<float>& net, const Dataset& data, std::size_t batch_size) {
  std::vector<Tensor<float>> out;
  const std::size_t k = net.config().num_classes;
  for (std::size_t start = 0; start < data.samples.size(); start += batch_size) {
    std::vector<const SkeletonSequence*> seqs;
    for (std::size_t i = start; i < std::min(data.samples.size(), start + batch_size); ++i)
      seqs.push_back(&data.samples[i]);
    Tape<float> tape(Tape<float>::Mode::kNoGrad);
    const Tensor<float> logits = net.forward(tape, make_batch<float>(seqs)).value();
    for (std::size_t r = 0; r < seqs.size(); ++r)
      out.emplace_back(Shape{k}, std::vector<float>(logits.ptr() + r * k, logits.ptr() + (r + 1) * k));
  }
  return out;
}

EvalMetrics score(const std::vector<Tensor<float>>& logits, const std::vector<std::size_t>& labels,
                  const std::vector<std::size_t>& topk) {
  require(logits.size() == labels.size() && !labels.empty(), ErrorCode::kShapeMismatch,
          std::to_string(logits.size()) + " predictions for " + std::to_string(labels.size()) + " labels");
  EvalMetrics m;
  m.samples = labels.size();
  for (std::size_t k : topk) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hits += in_top_k(logits[i].data(), labels[i], k);
    m.topk.emplace_back(k, double(hits) / double(labels.size()));
  }
  return m;
}

namespace {

std::vector<std::size_t> labels_of(const Dataset& data) {
  std::vector<std::size_t> out;
  for (const auto& s : data.samples) out.push_back(s.label);
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out << text), ErrorCode::kIoError, "cannot write " + path.string());
}

struct StepResult {
  double loss_sum = 0;  // Σ per-sample loss
  std::size_t correct = 0;
};

void check_loss(double loss, std::size_t epoch) {
  require(std::isfinite(loss), ErrorCode::kDivergedLoss, "loss became non-finite in epoch " + std::to_string(epoch));
}

// Forward/backward over one batch; gradients land in Parameter::grad.
StepResult run_batch(DhstNetwork<float>& net, const std::vector<const SkeletonSequence*>& seqs, std::size_t workers,
                     std::size_t epoch) {
  const std::vector<Parameter<float>*> params = net.parameters();
  const std::size_t shards = std::min(workers, seqs.size());
  std::vector<StepResult> results(shards);
  std::vector<GradSink<float>> sinks(shards);
  std::vector<std::exception_ptr> errors(shards);
  auto shard_job = [&](std::size_t s) {
    try {
      const std::size_t lo = seqs.size() * s / shards, hi = seqs.size() * (s + 1) / shards;
      std::vector<const SkeletonSequence*> part(seqs.begin() + lo, seqs.begin() + hi);
      ModelBatch<float> batch = make_batch<float>(part);
      Tape<float> tape;
      ForwardOptions opts;
      opts.train = true;
      opts.update_bn = s == 0;
      Var<float> logits = net.forward(tape, batch, opts);
      Var<float> loss = ops::cross_entropy(logits, batch.labels);
      const double mean = loss.value()[0];
      check_loss(mean, epoch);
      Var<float> scaled = ops::scale(loss, float(part.size()) / float(seqs.size()));
      if (shards == 1) tape.backward(scaled);
      else tape.backward(scaled, sinks[s]);
      results[s].loss_sum = mean * double(part.size());
      const Tensor<float>& lv = logits.value();
      const std::size_t k = lv.shape()[1];
      for (std::size_t r = 0; r < part.size(); ++r)
        results[s].correct += argmax(std::span<const float>(lv.ptr() + r * k, k)) == batch.labels[r];
    } catch (...) {
      errors[s] = std::current_exception();
    }
  };
  if (shards == 1) {
    shard_job(0);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t s = 0; s < shards; ++s) threads.emplace_back(shard_job, s);
    for (auto& t : threads) t.join();
  }
  for (auto& e : errors)
    if (e) {
      try {
        std::rethrow_exception(e);
      } catch (const Error& err) {
        if (err.code() == ErrorCode::kNonFinite)
          fail(ErrorCode::kDivergedLoss, "non-finite values in epoch " + std::to_string(epoch) + ": " + err.what());
        throw;
      }
    }
  if (shards > 1)
    for (auto& sink : sinks)
      for (Parameter<float>* p : params) {
        auto it = sink.find(p);
        if (it != sink.end()) p->grad += it->second;
      }
  StepResult total;
  for (const auto& r : results) total.loss_sum += r.loss_sum, total.correct += r.correct;
  return total;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const Dataset& train_set, const Dataset* test_set,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  ModelConfig mc = cfg.model;
  require(train_set.num_classes == mc.num_classes, ErrorCode::kConfigError,
          "dataset has " + std::to_string(train_set.num_classes) + " classes, model " + std::to_string(mc.num_classes));
  TrainResult result;
  result.net = std::make_unique<DhstNetwork<float>>(mc, derive_seed(cfg.seed, 1));
  DhstNetwork<float>& net = *result.net;
  const std::vector<Parameter<float>*> params = net.parameters();
  std::vector<Tensor<float>> velocity;
  const SgdOptions sgd{cfg.nesterov, cfg.weight_decay};

  const std::size_t n = train_set.samples.size();
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 0; epoch < cfg.total_epochs; ++epoch) {
    const auto e0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), 0);
    if (cfg.shuffle) {
      std::mt19937_64 rng(derive_seed(cfg.seed, 2, epoch));
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    }
    const double lr = learning_rate(cfg, epoch);
    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      std::vector<const SkeletonSequence*> seqs;
      for (std::size_t i = start; i < std::min(n, start + cfg.batch_size); ++i) seqs.push_back(&train_set.samples[order[i]]);
      zero_grad(params);
      StepResult step = run_batch(net, seqs, cfg.workers, epoch);
      sgd_step(params, lr, cfg.momentum, velocity, sgd);
      loss_sum += step.loss_sum;
      correct += step.correct;
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.lr = lr;
    m.loss = loss_sum / double(n);
    m.train_accuracy = double(correct) / double(n);
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - e0).count();
    check_loss(m.loss, epoch);
    result.report.epochs.push_back(m);
    if (on_epoch) on_epoch(m);
    if (cfg.target_train_accuracy > 0 && m.train_accuracy >= cfg.target_train_accuracy) {
      result.report.early_stopped = epoch + 1 < cfg.total_epochs;
      break;
    }
  }
  if (cfg.bn_recalibrate && !result.report.epochs.empty()) recalibrate_batchnorm(net, train_set, cfg.batch_size);
  result.report.final_train_accuracy = evaluate(net, train_set, {1}, cfg.batch_size).top(1);
  if (test_set) result.report.eval = evaluate(net, *test_set, cfg.topk, cfg.batch_size);
  result.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const std::filesystem::path dir = cfg.output_dir;
  std::filesystem::create_directories(dir);
  result.checkpoint = dir / "model.dhgw";
  save_checkpoint(net, result.checkpoint);
  write_file(dir / "metrics.json", metrics_json(result.report, false));
  write_file(dir / "timing.json", metrics_json(result.report, true));
  write_file(dir / "config.cfg", cfg.to_text());
  return result;
}

TrainResult train(const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  require(!cfg.train_manifest.empty(), ErrorCode::kConfigError, "train_manifest is not set");
  DatasetManifest tm = load_manifest(cfg.train_manifest);
  TrainConfig resolved = cfg;
  resolved.model.num_classes = tm.num_classes;
  const Dataset train_set = load_dataset(tm, cfg.stream, cfg.frames, cfg.center, cfg.tree);
  std::optional<Dataset> test_set;
  if (!cfg.test_manifest.empty())
    test_set = load_dataset(load_manifest(cfg.test_manifest), cfg.stream, cfg.frames, cfg.center, cfg.tree);
  return train(resolved, train_set, test_set ? &*test_set : nullptr, on_epoch);
}

EvalMetrics evaluate(DhstNetwork<float>& net, const Dataset& data, const std::vector<std::size_t>& topk,
                     std::size_t batch_size) {
  require(data.num_classes == net.config().num_classes, ErrorCode::kCheckpointMismatch,
          "checkpoint predicts " + std::to_string(net.config().num_classes) + " classes, dataset has " +
              std::to_string(data.num_classes));
  return score(predict(net, data, batch_size), labels_of(data), topk);
}

TwoStreamReport fuse_reports(const std::vector<Tensor<float>>& joint_logits,
                             const std::vector<Tensor<float>>& bone_logits, const std::vector<std::size_t>& labels,
                             const std::vector<std::size_t>& topk) {
  require(joint_logits.size() == bone_logits.size(), ErrorCode::kShapeMismatch, "streams cover different samples");
  std::vector<Tensor<float>> fused;
  for (std::size_t i = 0; i < joint_logits.size(); ++i) fused.push_back(fuse_two_stream(joint_logits[i], bone_logits[i]).fused);
  return {score(joint_logits, labels, topk), score(bone_logits, labels, topk), score(fused, labels, topk)};
}

TwoStreamReport two_stream_eval(DhstNetwork<float>& joint_net, DhstNetwork<float>& bone_net, const Dataset& joint_data,
                                const Dataset& bone_data, const std::vector<std::size_t>& topk, std::size_t batch_size) {
  require(joint_net.config().num_classes == bone_net.config().num_classes, ErrorCode::kCheckpointMismatch,
          "joint and bone checkpoints disagree on num_classes");
  require(joint_data.samples.size() == bone_data.samples.size(), ErrorCode::kDatasetError,
          "joint and bone datasets differ in size");
  const auto labels = labels_of(joint_data);
  require(labels == labels_of(bone_data), ErrorCode::kDatasetError, "joint and bone datasets disagree on labels");
  require(joint_data.num_classes == joint_net.config().num_classes, ErrorCode::kCheckpointMismatch,
          "checkpoint and dataset disagree on num_classes");
  return fuse_reports(predict(joint_net, joint_data, batch_size), predict(bone_net, bone_data, batch_size), labels, topk);
}

}  // namespace dhg
