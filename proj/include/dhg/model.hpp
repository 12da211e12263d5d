#pragma once

// DHST blocks (static, motion-weighted and dynamic-topology hypergraph
// branches fused, then a 3×1 temporal convolution), the 10-block backbone with
// a person max-pooled classifier head, checkpoints and two-stream fusion.

#include <filesystem>
#include <memory>
#include <optional>
#include <random>

#include "dhg/config.hpp"
#include "dhg/dynamic_weight.hpp"
#include "dhg/topology.hpp"

namespace dhg {

struct BranchToggles {
  bool static_hypergraph = true;
  bool dynamic_weight = true;
  bool dynamic_topology = true;

  std::size_t count() const { return std::size_t(static_hypergraph) + dynamic_weight + dynamic_topology; }
  bool any() const { return count() > 0; }
  bool operator==(const BranchToggles&) const = default;
};

// none, no-static, no-joint, no-topology, no-dynamic ("no/static" also accepted).
BranchToggles ablation_toggles(const std::string& name);
std::vector<std::string> ablation_names();

enum class BranchFusion { kSum, kConcat };

struct DhstBlockConfig {
  std::size_t in_channels = 3;
  std::size_t out_channels = 64;
  std::size_t temporal_stride = 1;
  std::size_t temporal_dilation = 1;
  bool residual = true;
  bool batchnorm = true;
  BranchToggles branches;
  BranchFusion fusion = BranchFusion::kSum;
  std::size_t embed_dim = 16;

  void validate() const;
};

struct ModelConfig {
  std::size_t num_classes = 4;
  std::size_t in_channels = 3;
  std::vector<std::size_t> channels = {64, 64, 64, 64, 128, 128, 128, 256, 256, 256};
  std::vector<std::size_t> stride_blocks = {5, 8};  // 1-based blocks with temporal stride 2
  bool multi_dilation = false;                      // dilation 2 in the last three blocks
  bool residual = true;
  bool batchnorm = true;
  BranchToggles branches;
  BranchFusion fusion = BranchFusion::kSum;
  WeightMode weight_mode = WeightMode::kRatio;
  bool weight_normalized = false;
  std::size_t embed_divisor = 4;  // embedding width = max(8, out_channels / divisor)
  TopologyParams topology;
  std::size_t num_nodes = 25;
  Hypergraph hypergraph;  // defaults to the built-in NTU-25 grouping

  ModelConfig();

  std::vector<DhstBlockConfig> blocks() const;
  void validate() const;

  // Returns false for keys this config does not own.
  bool apply(const KeyValue& kv);
  // Canonical text; from_text(to_text()) reproduces the config.
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
  std::uint64_t digest() const { return fnv1a(to_text()); }
};

// One model input batch: rows are (sample, person) pairs with padding persons
// dropped (every sample keeps at least one row).
template <typename T>
struct ModelBatch {
  Tensor<T> x;                       // [R, C, T, N]
  std::vector<std::size_t> persons;  // rows per sample, in order
  std::vector<std::size_t> labels;

  std::size_t samples() const { return persons.size(); }
  std::size_t rows() const { return x.shape()[0]; }
};

template <typename T>
ModelBatch<T> make_batch(const std::vector<const SkeletonSequence*>& seqs);

// Per-row, per-frame dynamic hypergraphs recorded by a forward pass.
using TopologyTrace = std::vector<std::vector<std::vector<Hypergraph>>>;  // [block][row][frame]

template <typename T>
struct BlockContext {
  const Tensor<T>* static_op = nullptr;   // [N, N]
  const Tensor<T>* weight_ops = nullptr;  // [R, T_in, N, N]
  const Tensor<T>* raw_input = nullptr;   // [R, C, T_raw, N]
  std::size_t raw_step = 1;               // raw frames per input frame of this block
  TopologyParams topology;
  std::size_t block_index = 0;
  bool train = false;
  bool update_bn = true;
  std::vector<std::vector<Hypergraph>>* trace = nullptr;  // [row][frame]
};

template <typename T>
class DhstBlock {
 public:
  DhstBlock(const DhstBlockConfig& cfg, const std::string& prefix, std::mt19937_64& rng);
  DhstBlock(const DhstBlock&) = delete;
  DhstBlock& operator=(const DhstBlock&) = delete;

  const DhstBlockConfig& config() const { return cfg_; }

  // Fused branch output before normalization and activation: [R, C_out, T, N].
  Var<T> spatial(const Var<T>& x, const BlockContext<T>& ctx);
  Var<T> forward(const Var<T>& x, const BlockContext<T>& ctx);

  // Per-frame operators of the dynamic-topology branch for embedded features
  // e [R, d, T, N].
  Tensor<T> topology_operators(const Tensor<T>& embedded, const BlockContext<T>& ctx) const;

  std::vector<Parameter<T>*> parameters();
  std::vector<std::pair<std::string, Tensor<T>*>> buffers();
  std::vector<BatchNormState<T>*> norm_states();

 private:
  DhstBlockConfig cfg_;
  std::optional<Parameter<T>> theta_static_, theta_weight_, w_map_, theta_topo_, fuse_;
  std::optional<Parameter<T>> bn1_gamma_, bn1_beta_, bn2_gamma_, bn2_beta_, bnr_gamma_, bnr_beta_;
  std::optional<BatchNormState<T>> bn1_, bn2_, bnr_;
  Parameter<T> tcn_w_, tcn_b_;
  std::optional<Parameter<T>> res_w_;
  std::string prefix_;
};

struct ForwardOptions {
  bool train = false;
  bool update_bn = true;
  TopologyTrace* trace = nullptr;
  std::vector<Shape>* shapes = nullptr;  // input shape followed by every block output shape
};

template <typename T>
class DhstNetwork {
 public:
  DhstNetwork(ModelConfig cfg, std::uint64_t init_seed);
  DhstNetwork(const DhstNetwork&) = delete;
  DhstNetwork& operator=(const DhstNetwork&) = delete;

  const ModelConfig& config() const { return cfg_; }
  std::size_t num_blocks() const { return blocks_.size(); }
  DhstBlock<T>& block(std::size_t i) { return *blocks_[i]; }

  // Logits [B, num_classes].
  Var<T> forward(Tape<T>& tape, const ModelBatch<T>& batch, const ForwardOptions& opts = {});

  // Per-row stacked operators of the motion-weighted branch at raw step s:
  // [R, ceil(T/s), N, N].
  Tensor<T> weight_operators(const Tensor<T>& x, std::size_t step) const;

  std::vector<Parameter<T>*> parameters();
  std::vector<std::pair<std::string, Tensor<T>*>> buffers();
  std::vector<BatchNormState<T>*> norm_states();
  std::size_t parameter_count();

 private:
  ModelConfig cfg_;
  Tensor<T> static_op_;
  IncidenceMatrix incidence_;
  std::optional<Parameter<T>> data_gamma_, data_beta_;
  std::optional<BatchNormState<T>> data_bn_;
  std::vector<std::unique_ptr<DhstBlock<T>>> blocks_;
  Parameter<T> fc_w_, fc_b_;
};

// DHGW: magic, u32 version, u64 config digest, u32 + config text, then u32
// blob count and per blob u32 name length, name, u32 rank, u32 dims, f32 data.
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(DhstNetwork<T>& net, const std::filesystem::path& path);
ModelConfig read_checkpoint_config(const std::filesystem::path& path);
// Restores weights and buffers; CheckpointMismatch when the config digest or
// any blob name or shape differs.
template <typename T>
void load_checkpoint(DhstNetwork<T>& net, const std::filesystem::path& path);
template <typename T>
std::unique_ptr<DhstNetwork<T>> load_network(const std::filesystem::path& path);

struct TwoStreamScores {
  Tensor<float> joint_scores;
  Tensor<float> bone_scores;
  Tensor<float> fused;
  std::size_t predicted = 0;
};

TwoStreamScores fuse_two_stream(const Tensor<float>& joint_logits, const Tensor<float>& bone_logits);

// Index of the largest entry; ties to the lower index.
std::size_t argmax(std::span<const float> scores);
// True when fewer than k classes outrank `label` (equal scores at a lower
// index outrank it).
bool in_top_k(std::span<const float> scores, std::size_t label, std::size_t k);

}  // namespace dhg
