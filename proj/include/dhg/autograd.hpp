#pragma once

// Reverse-mode differentiation over an explicit tape.
//
// A Tape owns the value of every recorded op plus the closure that pushes
// gradients back to the op's inputs. `backward` walks the records in exact
// reverse order. Parameters are bound to the tape as leaves; backward adds
// their gradient into Parameter::grad (or into a caller-provided sink), so
// gradients accumulate until zero_grad.

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dhg/tensor.hpp"

namespace dhg {

template <typename T>
struct Parameter {
  Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(Tensor<T>::zeros_like(value)) {}

  void zero_grad() { grad.fill(T{0}); }

  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

template <typename T>
void zero_grad(const std::vector<Parameter<T>*>& params) {
  for (Parameter<T>* p : params) p->zero_grad();
}

template <typename T>
using GradSink = std::unordered_map<const Parameter<T>*, Tensor<T>>;

template <typename T>
class Tape;

template <typename T>
class Var {
 public:
  Var() = default;

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Tape<T>& tape() const { return *tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;
  enum class Mode { kRecord, kNoGrad };

  explicit Tape(Mode mode = Mode::kRecord) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return mode_ == Mode::kRecord; }
  std::size_t size() const { return nodes_.size(); }

  // Checking every op output for NaN/Inf is on by default.
  void set_check_finite(bool on) { check_finite_ = on; }

  Var<T> constant(Tensor<T> value) { return push("constant", std::move(value), false, nullptr); }

  // Leaf whose gradient is kept on the tape (see grad()).
  Var<T> input(Tensor<T> value) { return push("input", std::move(value), recording(), nullptr); }

  Var<T> param(Parameter<T>& p) {
    Node node;
    node.op = "param";
    node.external = &p.value;
    node.param = &p;
    node.requires_grad = recording();
    nodes_.push_back(std::move(node));
    return Var<T>(this, nodes_.size() - 1);
  }

  Var<T> record(const char* op, Tensor<T> value, std::initializer_list<Var<T>> inputs, Backward fn) {
    return record(op, std::move(value), std::vector<Var<T>>(inputs), std::move(fn));
  }

  Var<T> record(const char* op, Tensor<T> value, const std::vector<Var<T>>& inputs, Backward fn) {
    if (check_finite_ && !value.all_finite()) fail(ErrorCode::kNonFinite, std::string("output of ") + op);
    bool needs = false;
    if (recording()) {
      for (const Var<T>& in : inputs) {
        require(in.tape_ == this, ErrorCode::kNoTape, std::string(op) + " mixes vars from different tapes");
        needs = needs || nodes_[in.id_].requires_grad;
      }
    }
    return push(op, std::move(value), needs, needs ? std::move(fn) : Backward{});
  }

  const Tensor<T>& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
  }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Upstream gradient of `id`; valid inside its backward closure.
  const Tensor<T>& grad_out(std::size_t id) const { return grads_[id]; }

  // Accumulation buffer for `id`, or nullptr if it needs no gradient.
  Tensor<T>* grad_target(std::size_t id) {
    if (!nodes_[id].requires_grad) return nullptr;
    Tensor<T>& g = grads_[id];
    if (g.empty()) g = Tensor<T>::zeros_like(value(id));
    return &g;
  }

  void backward(const Var<T>& loss) { run_backward(loss, nullptr); }
  void backward(const Var<T>& loss, GradSink<T>& sink) { run_backward(loss, &sink); }

  // Gradient of an input() leaf from the most recent backward.
  Tensor<T> grad(const Var<T>& v) const {
    if (v.id_ < grads_.size() && !grads_[v.id_].empty()) return grads_[v.id_];
    return Tensor<T>::zeros_like(value(v.id_));
  }

 private:
  struct Node {
    const char* op = "";
    Tensor<T> value;
    const Tensor<T>* external = nullptr;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
    Backward fn;
  };

  Var<T> push(const char* op, Tensor<T> value, bool requires_grad, Backward fn) {
    Node node;
    node.op = op;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    node.fn = std::move(fn);
    nodes_.push_back(std::move(node));
    return Var<T>(this, nodes_.size() - 1);
  }

  void run_backward(const Var<T>& loss, GradSink<T>* sink) {
    require(recording(), ErrorCode::kNoTape, "backward on a tape with recording disabled");
    require(loss.tape_ == this, ErrorCode::kNoTape, "loss belongs to another tape");
    require(value(loss.id_).size() == 1, ErrorCode::kShapeMismatch,
            "backward needs a scalar loss, got " + shape_str(value(loss.id_).shape()));
    grads_.assign(nodes_.size(), Tensor<T>{});
    if (!nodes_[loss.id_].requires_grad) return;
    grads_[loss.id_] = Tensor<T>(value(loss.id_).shape(), T{1});
    for (std::size_t i = loss.id_ + 1; i-- > 0;) {
      if (grads_[i].empty()) continue;
      Node& node = nodes_[i];
      if (node.fn) {
        node.fn(*this, i);
      } else if (node.param) {
        if (sink) {
          auto [it, inserted] = sink->try_emplace(node.param, grads_[i]);
          if (!inserted) it->second += grads_[i];
        } else {
          node.param->grad += grads_[i];
        }
      }
    }
  }

  Mode mode_;
  bool check_finite_ = true;
  std::deque<Node> nodes_;
  std::vector<Tensor<T>> grads_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

// Batch-norm running statistics; updated only by train-mode forwards that are
// handed the state.
template <typename T>
struct BatchNormState {
  explicit BatchNormState(std::size_t channels)
      : running_mean(Tensor<T>::zeros({channels})), running_var(Tensor<T>({channels}, T{1})) {}

  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);
};

// Differentiable primitives. Operators passed as Tensor (not Var) are treated
// as constants and receive no gradient.
namespace ops {

template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T s);
template <typename T> Var<T> relu(const Var<T>& a);
template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> softmax(const Var<T>& a, std::size_t axis);

// Mean cross-entropy of rows of logits [B×K] (or a single [K] row) against labels.
template <typename T> Var<T> cross_entropy(const Var<T>& logits, const std::vector<std::size_t>& labels);

// Channel axis is 1. `state` supplies running statistics; in train mode they
// are updated when `update_state` is set.
template <typename T>
Var<T> batchnorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, BatchNormState<T>& state, bool train,
                 bool update_state = true);

// [B, C, ...] -> [B, C]
template <typename T> Var<T> global_avg_pool(const Var<T>& x);

// x [B, C_in, T, N] (or [C_in, T, N]), w [C_out, C_in, 3, 1]; padding = dilation.
template <typename T>
Var<T> conv_temporal(const Var<T>& x, const Var<T>& w, std::size_t stride, std::size_t dilation);

// 1×1 convolution: x [B, C_in, T, N], theta [C_in, C_out] -> [B, C_out, T, N]
template <typename T> Var<T> channel_mix(const Var<T>& x, const Var<T>& theta);

// Keeps frames 0, s, 2s, ... of x [B, C, T, N].
template <typename T> Var<T> frame_stride(const Var<T>& x, std::size_t stride);

// x [B, C, ...] + b[C] broadcast over the channel axis.
template <typename T> Var<T> bias_add(const Var<T>& x, const Var<T>& b);

// y[b, c, t, n] = Σ_m op[n, m] x[b, c, t, m]; op is [N, N] (shared) or
// [B, T, N, N] (one operator per sample and frame).
template <typename T> Var<T> node_aggregate(const Var<T>& x, const Tensor<T>& op);

// x [R, C] with rows grouped consecutively by group_sizes -> [G, C] max per group.
template <typename T> Var<T> segment_max(const Var<T>& x, const std::vector<std::size_t>& group_sizes);

// Concatenate [B, C_i, ...] along axis 1.
template <typename T> Var<T> concat_channels(const std::vector<Var<T>>& parts);

}  // namespace ops
}  // namespace dhg
