#include "dhg/model.hpp"

#include <exception>
#include <map>
#include <mutex>
#include <sstream>

#include "dhg/ntu25.hpp"
#include "dhg/rng.hpp"

namespace dhg {

BranchToggles ablation_toggles(const std::string& raw) {
  std::string name = raw;
  std::replace(name.begin(), name.end(), '/', '-');
  std::replace(name.begin(), name.end(), '_', '-');
  BranchToggles t;
  if (name == "none" || name == "full") return t;
  if (name == "no-static") t.static_hypergraph = false;
  else if (name == "no-joint") t.dynamic_weight = false;
  else if (name == "no-topology") t.dynamic_topology = false;
  else if (name == "no-dynamic") t.dynamic_weight = t.dynamic_topology = false;
  else fail(ErrorCode::kConfigError, "unknown ablation '" + raw + "'");
  return t;
}

std::vector<std::string> ablation_names() { return {"no-static", "no-joint", "no-topology", "no-dynamic"}; }

void DhstBlockConfig::validate() const {
  require(branches.any(), ErrorCode::kNoBranchEnabled, "every spatial branch is disabled");
  require(in_channels > 0 && out_channels > 0, ErrorCode::kConfigError, "block channels must be positive");
  require(temporal_stride == 1 || temporal_stride == 2, ErrorCode::kConfigError, "temporal stride must be 1 or 2");
  require(temporal_dilation >= 1, ErrorCode::kConfigError, "temporal dilation must be positive");
  require(embed_dim > 0, ErrorCode::kConfigError, "embedding width must be positive");
}

ModelConfig::ModelConfig() : hypergraph(ntu25_hypergraph()) {}

std::vector<DhstBlockConfig> ModelConfig::blocks() const {
  std::vector<DhstBlockConfig> out;
  std::size_t in = in_channels;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    DhstBlockConfig b;
    b.in_channels = in;
    b.out_channels = channels[i];
    b.temporal_stride = std::find(stride_blocks.begin(), stride_blocks.end(), i + 1) != stride_blocks.end() ? 2 : 1;
    b.temporal_dilation = multi_dilation && i + 3 >= channels.size() ? 2 : 1;
    b.residual = residual;
    b.batchnorm = batchnorm;
    b.branches = branches;
    b.fusion = fusion;
    b.embed_dim = std::max<std::size_t>(8, channels[i] / embed_divisor);
    out.push_back(b);
    in = channels[i];
  }
  return out;
}

void ModelConfig::validate() const {
  require(num_classes >= 1, ErrorCode::kConfigError, "num_classes must be positive");
  require(in_channels >= 1, ErrorCode::kConfigError, "in_channels must be positive");
  require(!channels.empty(), ErrorCode::kConfigError, "channel plan is empty");
  require(embed_divisor >= 1, ErrorCode::kConfigError, "embed_divisor must be positive");
  require(branches.any(), ErrorCode::kNoBranchEnabled, "every spatial branch is disabled");
  require(hypergraph.num_nodes == num_nodes, ErrorCode::kConfigError,
          "hypergraph has " + std::to_string(hypergraph.num_nodes) + " nodes, model expects " +
              std::to_string(num_nodes));
  for (std::size_t s : stride_blocks)
    require(s >= 1 && s <= channels.size(), ErrorCode::kConfigError, "stride block " + std::to_string(s) + " out of range");
  hypergraph.validate();
  if (branches.dynamic_topology) topology.validate(num_nodes);
  for (const auto& b : blocks()) b.validate();
}

namespace {

std::string edges_text(const Hypergraph& hg) {
  std::string out;
  for (std::size_t e = 0; e < hg.num_edges(); ++e) out += (e ? ";" : "") + format_size_list(hg.edges[e]);
  return out;
}

Hypergraph parse_edges_text(const KeyValue& kv, std::size_t num_nodes) {
  std::string text = kv.value;
  std::replace(text.begin(), text.end(), ';', '\n');
  return parse_hypergraph_config(text, num_nodes);
}

}  // namespace

bool ModelConfig::apply(const KeyValue& kv) {
  const std::string& k = kv.key;
  if (k == "num_classes") num_classes = parse_size(kv);
  else if (k == "in_channels") in_channels = parse_size(kv);
  else if (k == "channels") channels = parse_size_list(kv);
  else if (k == "stride_blocks") stride_blocks = parse_size_list(kv);
  else if (k == "multi_dilation") multi_dilation = parse_bool(kv);
  else if (k == "residual") residual = parse_bool(kv);
  else if (k == "batchnorm") batchnorm = parse_bool(kv);
  else if (k == "static_branch") branches.static_hypergraph = parse_bool(kv);
  else if (k == "weight_branch") branches.dynamic_weight = parse_bool(kv);
  else if (k == "topology_branch") branches.dynamic_topology = parse_bool(kv);
  else if (k == "ablation") branches = ablation_toggles(kv.value);
  else if (k == "fusion") {
    if (kv.value == "sum") fusion = BranchFusion::kSum;
    else if (kv.value == "concat") fusion = BranchFusion::kConcat;
    else fail(ErrorCode::kConfigError, "fusion must be sum or concat");
  } else if (k == "weight_mode") {
    if (kv.value == "ratio") weight_mode = WeightMode::kRatio;
    else if (kv.value == "softmax") weight_mode = WeightMode::kSoftmax;
    else fail(ErrorCode::kConfigError, "weight_mode must be ratio or softmax");
  } else if (k == "weight_normalized") weight_normalized = parse_bool(kv);
  else if (k == "embed_divisor") embed_divisor = parse_size(kv);
  else if (k == "k_n") topology.k_n = parse_size(kv);
  else if (k == "k_m") topology.k_m = parse_size(kv);
  else if (k == "kmeans_max_iter") topology.kmeans_max_iter = parse_size(kv);
  else if (k == "topology_seed") topology.seed = parse_u64(kv);
  else if (k == "topology_stride") topology.frame_stride = parse_size(kv);
  else if (k == "topology_space") {
    if (kv.value == "embedded") topology.space = TopologySpace::kEmbedded;
    else if (kv.value == "raw") topology.space = TopologySpace::kRaw;
    else fail(ErrorCode::kConfigError, "topology_space must be embedded or raw");
  } else if (k == "num_nodes") {
    num_nodes = parse_size(kv);
  } else if (k == "hypergraph") {
    hypergraph = static_skeleton_hypergraph(kv.value, num_nodes);
  } else if (k == "hypergraph_edges") {
    hypergraph = parse_edges_text(kv, num_nodes);
  } else {
    return false;
  }
  return true;
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os << "num_classes = " << num_classes << "\n"
     << "in_channels = " << in_channels << "\n"
     << "channels = " << format_size_list(channels) << "\n"
     << "stride_blocks = " << format_size_list(stride_blocks) << "\n"
     << "multi_dilation = " << (multi_dilation ? "true" : "false") << "\n"
     << "residual = " << (residual ? "true" : "false") << "\n"
     << "batchnorm = " << (batchnorm ? "true" : "false") << "\n"
     << "static_branch = " << (branches.static_hypergraph ? "true" : "false") << "\n"
     << "weight_branch = " << (branches.dynamic_weight ? "true" : "false") << "\n"
     << "topology_branch = " << (branches.dynamic_topology ? "true" : "false") << "\n"
     << "fusion = " << (fusion == BranchFusion::kSum ? "sum" : "concat") << "\n"
     << "weight_mode = " << (weight_mode == WeightMode::kRatio ? "ratio" : "softmax") << "\n"
     << "weight_normalized = " << (weight_normalized ? "true" : "false") << "\n"
     << "embed_divisor = " << embed_divisor << "\n"
     << "k_n = " << topology.k_n << "\n"
     << "k_m = " << topology.k_m << "\n"
     << "kmeans_max_iter = " << topology.kmeans_max_iter << "\n"
     << "topology_seed = " << topology.seed << "\n"
     << "topology_stride = " << topology.frame_stride << "\n"
     << "topology_space = " << (topology.space == TopologySpace::kEmbedded ? "embedded" : "raw") << "\n"
     << "num_nodes = " << num_nodes << "\n"
     << "hypergraph_edges = " << edges_text(hypergraph) << "\n";
  return os.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig cfg;
  for (const KeyValue& kv : parse_key_values(text))
    require(cfg.apply(kv), ErrorCode::kConfigError, "unknown model key '" + kv.key + "'");
  return cfg;
}

template <typename T>
ModelBatch<T> make_batch(const std::vector<const SkeletonSequence*>& seqs) {
  require(!seqs.empty(), ErrorCode::kShapeMismatch, "empty batch");
  const std::size_t t_len = seqs[0]->frames(), n = seqs[0]->joints(), c = seqs[0]->channels();
  ModelBatch<T> batch;
  std::vector<std::pair<const SkeletonSequence*, std::size_t>> rows;
  for (const SkeletonSequence* s : seqs) {
    require(s->frames() == t_len && s->joints() == n && s->channels() == c, ErrorCode::kShapeMismatch,
            "batch mixes sequence shapes " + shape_str(seqs[0]->coords.shape()) + " and " + shape_str(s->coords.shape()));
    std::size_t kept = 0;
    for (std::size_t m = 0; m < s->persons(); ++m)
      if (!s->person_is_padding(m)) rows.emplace_back(s, m), ++kept;
    if (kept == 0) rows.emplace_back(s, 0), ++kept;
    batch.persons.push_back(kept);
    batch.labels.push_back(s->label);
  }
  batch.x = Tensor<T>({rows.size(), c, t_len, n});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& [s, m] = rows[r];
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t t = 0; t < t_len; ++t)
        for (std::size_t j = 0; j < n; ++j) batch.x(r, ch, t, j) = static_cast<T>(s->coords(m, t, j, ch));
  }
  return batch;
}

template ModelBatch<float> make_batch<float>(const std::vector<const SkeletonSequence*>&);
template ModelBatch<double> make_batch<double>(const std::vector<const SkeletonSequence*>&);

namespace {

template <typename T>
Tensor<T> uniform_fan_in(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor<T> t(std::move(shape));
  for (T& v : t.data()) v = static_cast<T>((2.0 * (double(rng() >> 11) * 0x1.0p-53) - 1.0) * bound);
  return t;
}

// Runs body(i) for i in [0, n) across OpenMP threads and rethrows the first
// exception raised by any iteration.
template <typename F>
void parallel_for(std::size_t n, F&& body) {
  std::exception_ptr error;
  std::mutex mu;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
      std::lock_guard lock(mu);
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace

template <typename T>
DhstBlock<T>::DhstBlock(const DhstBlockConfig& cfg, const std::string& prefix, std::mt19937_64& rng)
    : cfg_(cfg),
      tcn_w_(prefix + ".tcn.weight", Tensor<T>({cfg.out_channels, cfg.out_channels, 3, 1})),
      tcn_b_(prefix + ".tcn.bias", Tensor<T>({cfg.out_channels})),
      prefix_(prefix) {
  cfg_.validate();
  const std::size_t ci = cfg.in_channels, co = cfg.out_channels, d = cfg.embed_dim;
  if (cfg.branches.static_hypergraph)
    theta_static_.emplace(prefix + ".static.theta", uniform_fan_in<T>({ci, co}, ci, rng));
  if (cfg.branches.dynamic_weight)
    theta_weight_.emplace(prefix + ".weight.theta", uniform_fan_in<T>({ci, co}, ci, rng));
  if (cfg.branches.dynamic_topology) {
    w_map_.emplace(prefix + ".topology.w_map", uniform_fan_in<T>({ci, d}, ci, rng));
    theta_topo_.emplace(prefix + ".topology.theta", uniform_fan_in<T>({d, co}, d, rng));
  }
  if (cfg.fusion == BranchFusion::kConcat && cfg.branches.count() > 1) {
    const std::size_t width = cfg.branches.count() * co;
    fuse_.emplace(prefix + ".fuse.theta", uniform_fan_in<T>({width, co}, width, rng));
  }
  if (cfg.batchnorm) {
    bn1_gamma_.emplace(prefix + ".bn1.gamma", Tensor<T>({co}, T{1}));
    bn1_beta_.emplace(prefix + ".bn1.beta", Tensor<T>({co}));
    bn1_.emplace(co);
  }
  tcn_w_.value = uniform_fan_in<T>({co, co, 3, 1}, co * 3, rng);
  tcn_b_.value = uniform_fan_in<T>({co}, co * 3, rng);
  if (cfg.batchnorm) {
    bn2_gamma_.emplace(prefix + ".bn2.gamma", Tensor<T>({co}, T{1}));
    bn2_beta_.emplace(prefix + ".bn2.beta", Tensor<T>({co}));
    bn2_.emplace(co);
  }
  if (cfg.residual && (ci != co || cfg.temporal_stride != 1))
    res_w_.emplace(prefix + ".residual.theta", uniform_fan_in<T>({ci, co}, ci, rng));
  if (res_w_ && cfg.batchnorm) {
    bnr_gamma_.emplace(prefix + ".residual.bn.gamma", Tensor<T>({co}, T{1}));
    bnr_beta_.emplace(prefix + ".residual.bn.beta", Tensor<T>({co}));
    bnr_.emplace(co);
  }
}

template <typename T>
Tensor<T> DhstBlock<T>::topology_operators(const Tensor<T>& embedded, const BlockContext<T>& ctx) const {
  const std::size_t rows = embedded.shape()[0], d = embedded.shape()[1], frames = embedded.shape()[2],
                    n = embedded.shape()[3];
  const TopologyParams& p = ctx.topology;
  const bool raw = p.space == TopologySpace::kRaw;
  if (raw)
    require(ctx.raw_input != nullptr && ctx.raw_input->shape()[0] == rows && ctx.raw_input->shape()[3] == n,
            ErrorCode::kShapeMismatch, "raw-space topology needs the raw input rows");
  const std::size_t step = std::max<std::size_t>(p.frame_stride, 1);
  Tensor<T> out({rows, frames, n, n});
  if (ctx.trace) ctx.trace->assign(rows, std::vector<Hypergraph>(frames));
  const std::size_t anchors = (frames + step - 1) / step;
  parallel_for(rows * anchors, [&](std::size_t idx) {
    const std::size_t r = idx / anchors, t = (idx % anchors) * step;
    const std::size_t raw_t = t * ctx.raw_step;
    Tensor<double> f;
    if (raw) {
      const Tensor<T>& x = *ctx.raw_input;
      const std::size_t c = x.shape()[1];
      f = Tensor<double>({n, c});
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < c; ++k) f(j, k) = static_cast<double>(x(r, k, raw_t, j));
    } else {
      f = Tensor<double>({n, d});
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < d; ++k) f(j, k) = static_cast<double>(embedded(r, k, t, j));
    }
    Hypergraph hg = dynamic_hypergraph(f, p, derive_seed(p.seed, ctx.block_index, raw_t));
    const Tensor<double> op = hconv_operator(hg);
    for (std::size_t tt = t; tt < std::min(frames, t + step); ++tt) {
      T* dst = out.ptr() + (r * frames + tt) * n * n;
      for (std::size_t k = 0; k < n * n; ++k) dst[k] = static_cast<T>(op[k]);
      if (ctx.trace) (*ctx.trace)[r][tt] = hg;
    }
  });
  return out;
}

template <typename T>
Var<T> DhstBlock<T>::spatial(const Var<T>& x, const BlockContext<T>& ctx) {
  Tape<T>& tape = x.tape();
  require(x.value().rank() == 4 && x.shape()[1] == cfg_.in_channels, ErrorCode::kShapeMismatch,
          prefix_ + ": input " + shape_str(x.shape()) + " for " + std::to_string(cfg_.in_channels) + " channels");
  std::vector<Var<T>> parts;
  if (theta_static_) {
    require(ctx.static_op != nullptr, ErrorCode::kShapeMismatch, prefix_ + ": missing static operator");
    parts.push_back(ops::channel_mix(ops::node_aggregate(x, *ctx.static_op), tape.param(*theta_static_)));
  }
  if (theta_weight_) {
    require(ctx.weight_ops != nullptr, ErrorCode::kShapeMismatch, prefix_ + ": missing motion-weight operators");
    parts.push_back(ops::channel_mix(ops::node_aggregate(x, *ctx.weight_ops), tape.param(*theta_weight_)));
  }
  if (w_map_) {
    Var<T> e = ops::relu(ops::channel_mix(x, tape.param(*w_map_)));
    const Tensor<T> topo = topology_operators(e.value(), ctx);
    parts.push_back(ops::channel_mix(ops::node_aggregate(e, topo), tape.param(*theta_topo_)));
  }
  if (parts.size() == 1) return parts[0];
  if (fuse_) return ops::channel_mix(ops::concat_channels(parts), tape.param(*fuse_));
  Var<T> acc = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) acc = ops::add(acc, parts[i]);
  return acc;
}

template <typename T>
Var<T> DhstBlock<T>::forward(const Var<T>& x, const BlockContext<T>& ctx) {
  Tape<T>& tape = x.tape();
  Var<T> s = spatial(x, ctx);
  if (bn1_) s = ops::batchnorm(s, tape.param(*bn1_gamma_), tape.param(*bn1_beta_), *bn1_, ctx.train, ctx.update_bn);
  s = ops::relu(s);
  Var<T> y = ops::bias_add(ops::conv_temporal(s, tape.param(tcn_w_), cfg_.temporal_stride, cfg_.temporal_dilation),
                           tape.param(tcn_b_));
  if (bn2_) y = ops::batchnorm(y, tape.param(*bn2_gamma_), tape.param(*bn2_beta_), *bn2_, ctx.train, ctx.update_bn);
  if (!cfg_.residual) return y;
  Var<T> r = cfg_.temporal_stride == 1 ? x : ops::frame_stride(x, cfg_.temporal_stride);
  if (res_w_) r = ops::channel_mix(r, tape.param(*res_w_));
  if (bnr_) r = ops::batchnorm(r, tape.param(*bnr_gamma_), tape.param(*bnr_beta_), *bnr_, ctx.train, ctx.update_bn);
  return ops::add(y, r);
}

template <typename T>
std::vector<Parameter<T>*> DhstBlock<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto* p : {&theta_static_, &theta_weight_, &w_map_, &theta_topo_, &fuse_, &bn1_gamma_, &bn1_beta_})
    if (*p) out.push_back(&**p);
  out.push_back(&tcn_w_);
  out.push_back(&tcn_b_);
  for (auto* p : {&bn2_gamma_, &bn2_beta_, &res_w_, &bnr_gamma_, &bnr_beta_})
    if (*p) out.push_back(&**p);
  return out;
}

template <typename T>
std::vector<BatchNormState<T>*> DhstBlock<T>::norm_states() {
  std::vector<BatchNormState<T>*> out;
  for (auto* s : {&bn1_, &bn2_, &bnr_})
    if (*s) out.push_back(&**s);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> DhstBlock<T>::buffers() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  if (bn1_) {
    out.emplace_back(prefix_ + ".bn1.running_mean", &bn1_->running_mean);
    out.emplace_back(prefix_ + ".bn1.running_var", &bn1_->running_var);
  }
  if (bn2_) {
    out.emplace_back(prefix_ + ".bn2.running_mean", &bn2_->running_mean);
    out.emplace_back(prefix_ + ".bn2.running_var", &bn2_->running_var);
  }
  if (bnr_) {
    out.emplace_back(prefix_ + ".residual.bn.running_mean", &bnr_->running_mean);
    out.emplace_back(prefix_ + ".residual.bn.running_var", &bnr_->running_var);
  }
  return out;
}

template <typename T>
DhstNetwork<T>::DhstNetwork(ModelConfig cfg, std::uint64_t init_seed)
    : cfg_(std::move(cfg)), fc_w_("fc.weight", Tensor<T>({1})), fc_b_("fc.bias", Tensor<T>({1})) {
  cfg_.validate();
  static_op_ = hconv_operator(cfg_.hypergraph).cast<T>();
  incidence_ = incidence(cfg_.hypergraph);
  std::mt19937_64 rng(init_seed);
  if (cfg_.batchnorm) {
    data_gamma_.emplace("data_bn.gamma", Tensor<T>({cfg_.in_channels}, T{1}));
    data_beta_.emplace("data_bn.beta", Tensor<T>({cfg_.in_channels}));
    data_bn_.emplace(cfg_.in_channels);
  }
  const auto plan = cfg_.blocks();
  for (std::size_t i = 0; i < plan.size(); ++i)
    blocks_.push_back(std::make_unique<DhstBlock<T>>(plan[i], "block" + std::to_string(i), rng));
  const std::size_t c = cfg_.channels.back();
  fc_w_ = Parameter<T>("fc.weight", uniform_fan_in<T>({c, cfg_.num_classes}, c, rng));
  fc_b_ = Parameter<T>("fc.bias", uniform_fan_in<T>({cfg_.num_classes}, c, rng));
}

template <typename T>
Tensor<T> DhstNetwork<T>::weight_operators(const Tensor<T>& x, std::size_t step) const {
  const std::size_t rows = x.shape()[0], c = x.shape()[1], frames = x.shape()[2], n = x.shape()[3];
  const std::size_t frames_out = (frames + step - 1) / step;
  Tensor<T> out({rows, frames_out, n, n});
  const std::size_t block = frames_out * n * n;
  parallel_for(rows, [&](std::size_t r) {
    const DisplacementField dis = displacement(x.ptr() + r * c * frames * n, c, frames, n);
    const DynamicWeightField wf = joint_weights(dis, cfg_.hypergraph, cfg_.weight_mode);
    const Tensor<double> g = frame_gram_operators(wf, incidence_, frames_out, step, cfg_.weight_normalized);
    for (std::size_t k = 0; k < block; ++k) out[r * block + k] = static_cast<T>(g[k]);
  });
  return out;
}

template <typename T>
Var<T> DhstNetwork<T>::forward(Tape<T>& tape, const ModelBatch<T>& batch, const ForwardOptions& opts) {
  const Shape& xs = batch.x.shape();
  require(batch.x.rank() == 4 && xs[1] == cfg_.in_channels && xs[3] == cfg_.num_nodes, ErrorCode::kShapeMismatch,
          "model input " + shape_str(xs) + " for " + std::to_string(cfg_.in_channels) + " channels and " +
              std::to_string(cfg_.num_nodes) + " joints");
  Var<T> h = tape.constant(batch.x);
  if (opts.shapes) opts.shapes->assign(1, h.shape());
  if (data_bn_)
    h = ops::batchnorm(h, tape.param(*data_gamma_), tape.param(*data_beta_), *data_bn_, opts.train, opts.update_bn);
  if (opts.trace) opts.trace->assign(blocks_.size(), {});

  std::map<std::size_t, Tensor<T>> weight_ops;
  std::size_t step = 1;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    DhstBlock<T>& b = *blocks_[i];
    BlockContext<T> ctx;
    ctx.static_op = &static_op_;
    if (b.config().branches.dynamic_weight) {
      auto it = weight_ops.find(step);
      if (it == weight_ops.end()) it = weight_ops.emplace(step, weight_operators(batch.x, step)).first;
      ctx.weight_ops = &it->second;
    }
    ctx.raw_input = &batch.x;
    ctx.raw_step = step;
    ctx.topology = cfg_.topology;
    ctx.block_index = i;
    ctx.train = opts.train;
    ctx.update_bn = opts.update_bn;
    ctx.trace = opts.trace ? &(*opts.trace)[i] : nullptr;
    h = b.forward(h, ctx);
    if (opts.shapes) opts.shapes->push_back(h.shape());
    step *= b.config().temporal_stride;
  }
  Var<T> pooled = ops::segment_max(ops::global_avg_pool(h), batch.persons);
  return ops::bias_add(ops::matmul(pooled, tape.param(fc_w_)), tape.param(fc_b_));
}

template <typename T>
std::vector<Parameter<T>*> DhstNetwork<T>::parameters() {
  std::vector<Parameter<T>*> out;
  if (data_gamma_) out.push_back(&*data_gamma_), out.push_back(&*data_beta_);
  for (auto& b : blocks_)
    for (Parameter<T>* p : b->parameters()) out.push_back(p);
  out.push_back(&fc_w_);
  out.push_back(&fc_b_);
  return out;
}

template <typename T>
std::vector<BatchNormState<T>*> DhstNetwork<T>::norm_states() {
  std::vector<BatchNormState<T>*> out;
  if (data_bn_) out.push_back(&*data_bn_);
  for (auto& b : blocks_)
    for (auto* st : b->norm_states()) out.push_back(st);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> DhstNetwork<T>::buffers() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  if (data_bn_) {
    out.emplace_back("data_bn.running_mean", &data_bn_->running_mean);
    out.emplace_back("data_bn.running_var", &data_bn_->running_var);
  }
  for (auto& b : blocks_)
    for (auto& entry : b->buffers()) out.push_back(entry);
  return out;
}

template <typename T>
std::size_t DhstNetwork<T>::parameter_count() {
  std::size_t total = 0;
  for (Parameter<T>* p : parameters()) total += p->value.size();
  return total;
}

template class DhstBlock<float>;
template class DhstBlock<double>;
template class DhstNetwork<float>;
template class DhstNetwork<double>;

std::size_t argmax(std::span<const float> scores) {
  require(!scores.empty(), ErrorCode::kShapeMismatch, "argmax of an empty score vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

bool in_top_k(std::span<const float> scores, std::size_t label, std::size_t k) {
  require(label < scores.size(), ErrorCode::kLabelOutOfRange,
          "label " + std::to_string(label) + " for " + std::to_string(scores.size()) + " classes");
  std::size_t above = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (scores[i] > scores[label] || (scores[i] == scores[label] && i < label)) ++above;
  return above < k;
}

TwoStreamScores fuse_two_stream(const Tensor<float>& joint_logits, const Tensor<float>& bone_logits) {
  require(joint_logits.size() == bone_logits.size() && !joint_logits.empty(), ErrorCode::kShapeMismatch,
          "fusing " + shape_str(joint_logits.shape()) + " with " + shape_str(bone_logits.shape()));
  TwoStreamScores s{joint_logits, bone_logits, joint_logits, 0};
  for (std::size_t i = 0; i < s.fused.size(); ++i) s.fused[i] = joint_logits[i] + bone_logits[i];
  s.predicted = argmax(s.fused.data());
  return s;
}

}  // namespace dhg
