#ifndef ACBVAE_NUMERICS_AUTOGRAD_HPP_
#define ACBVAE_NUMERICS_AUTOGRAD_HPP_

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "acbvae/numerics/tensor.hpp"

namespace acbvae {

template <typename T>
class Tape;

// Handle to a value recorded on a Tape. Default-constructed handles are
// untraced and rejected by every op.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  bool traced() const { return tape != nullptr; }
  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
};

template <typename T>
using Gradients = std::map<std::string, Tensor<T>>;

enum class GradMode { kEnabled, kDisabled };

// Tape-based reverse-mode differentiation. Values are recorded in execution
// order; backward() sweeps the tape in reverse and accumulates adjoints into
// nodes that depend on a named parameter.
//
// Parameters are recorded by reference: the referenced tensors must outlive
// the tape and must not change while it is alive.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(GradMode mode = GradMode::kEnabled) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  Var<T> parameter(const std::string& name, const Tensor<T>& value);

  /// Gradient of a scalar loss with respect to every parameter on this tape.
  /// Parameters the loss does not depend on get zero tensors. May be called
  /// repeatedly for different losses on the same tape.
  Gradients<T> backward(Var<T> loss);

  const Tensor<T>& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool grad_enabled() const { return mode_ == GradMode::kEnabled; }
  std::size_t size() const { return nodes_.size(); }

  // Op-author interface.
  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& parents, BackwardFn fn);
  const Tensor<T>& grad(std::size_t id) const { return *nodes_[id].grad; }
  /// Adjoint accumulator of `id`, zero-initialised on first access.
  Tensor<T>& grad_accumulator(std::size_t id);
  void check_owned(Var<T> v, const char* op) const;

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* external = nullptr;
    std::optional<std::string> param_name;
    bool requires_grad = false;
    BackwardFn backward;
    std::optional<Tensor<T>> grad;
  };

  GradMode mode_;
  std::vector<Node> nodes_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  if (!tape) throw UsageError("value of an untraced variable");
  return tape->value(id);
}

enum class Activation { kRelu, kTanh, kSigmoid, kSoftmax, kIdentity };

Activation parse_activation(const std::string& tag);
std::string activation_name(Activation a);

// Differentiable ops. Binary elementwise ops require identical shapes.
namespace ag {

/// x [B x in] * W^T [in x out] + b [out].
template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias, const std::string& layer = "linear");

template <typename T> Var<T> relu(Var<T> x);
template <typename T> Var<T> tanh(Var<T> x);
template <typename T> Var<T> sigmoid(Var<T> x);
template <typename T> Var<T> exp(Var<T> x);
template <typename T> Var<T> square(Var<T> x);
/// Row-wise softmax over the last dimension.
template <typename T> Var<T> softmax(Var<T> x);
template <typename T> Var<T> log_softmax(Var<T> x);
template <typename T> Var<T> activate(Var<T> x, Activation a);

template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> x, T factor);
template <typename T> Var<T> add_scalar(Var<T> x, T offset);

/// Values clamped to [lo, hi]; gradient passes only strictly inside.
template <typename T> Var<T> clamp(Var<T> x, T lo, T hi);

template <typename T> Var<T> sum(Var<T> x);
template <typename T> Var<T> mean(Var<T> x);
/// [B x C] -> [B x 1].
template <typename T> Var<T> row_sum(Var<T> x);

template <typename T> Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t end);
template <typename T> Var<T> concat_cols(Var<T> a, Var<T> b);
/// Picks column index[r] of each row r: [B x C] -> [B x 1].
template <typename T> Var<T> gather_cols(Var<T> x, const std::vector<std::size_t>& index);

/// Identity forward, zero backward.
template <typename T> Var<T> stop_gradient(Var<T> x);

/// Elementwise binary cross-entropy of sigmoid(logits) against constant
/// targets in [0, 1], computed from logits.
template <typename T> Var<T> bce_with_logits(Var<T> logits, const Tensor<T>& targets);

}  // namespace ag

}  // namespace acbvae

#endif  // ACBVAE_NUMERICS_AUTOGRAD_HPP_
