#include "acbvae/numerics/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace acbvae {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
ConstMatMap<T> as_matrix(const Tensor<T>& t) {
  return ConstMatMap<T>(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                        static_cast<Eigen::Index>(t.cols()));
}

template <typename T>
MatMap<T> as_matrix(Tensor<T>& t) {
  return MatMap<T>(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                   static_cast<Eigen::Index>(t.cols()));
}

template <typename T>
Shape matrix_shape(const Tensor<T>& t) {
  return {t.rows(), t.cols()};
}

template <typename T>
void require_same_shape(Var<T> a, Var<T> b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

// Unary elementwise op from a forward map and a derivative expressed through
// the input x and output y.
template <typename T, typename F, typename D>
Var<T> unary(Var<T> x, const char* name, F forward, D derivative) {
  if (!x.tape) throw UsageError(std::string(name) + ": input is untraced");
  const Tensor<T>& in = x.value();
  Tensor<T> out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward(in[i]);
  const std::size_t xid = x.id;
  return x.tape->record(std::move(out), {x}, [xid, derivative](Tape<T>& tape, std::size_t self) {
    const Tensor<T>& g = tape.grad(self);
    const Tensor<T>& xin = tape.value(xid);
    const Tensor<T>& y = tape.value(self);
    Tensor<T>& gx = tape.grad_accumulator(xid);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * derivative(xin[i], y[i]);
  });
}

template <typename T>
T sigmoid_scalar(T v) {
  if (v >= 0) {
    return T{1} / (T{1} + std::exp(-v));
  }
  const T e = std::exp(v);
  return e / (T{1} + e);
}

}  // namespace

Activation parse_activation(const std::string& tag) {
  if (tag == "relu") return Activation::kRelu;
  if (tag == "tanh") return Activation::kTanh;
  if (tag == "sigmoid") return Activation::kSigmoid;
  if (tag == "softmax") return Activation::kSoftmax;
  if (tag == "identity") return Activation::kIdentity;
  throw UsageError("unknown activation tag '" + tag + "'");
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kSoftmax: return "softmax";
    case Activation::kIdentity: return "identity";
  }
  return "identity";
}

// ---------------------------------------------------------------------------
// Tape

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node node;
  node.owned = std::move(value);
  nodes_.push_back(std::move(node));
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::parameter(const std::string& name, const Tensor<T>& value) {
  Node node;
  node.external = &value;
  node.param_name = name;
  node.requires_grad = grad_enabled();
  nodes_.push_back(std::move(node));
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
const Tensor<T>& Tape<T>::value(std::size_t id) const {
  const Node& n = nodes_.at(id);
  return n.external ? *n.external : n.owned;
}

template <typename T>
void Tape<T>::check_owned(Var<T> v, const char* op) const {
  if (v.tape != this) {
    throw UsageError(std::string(op) + ": variable is untraced or belongs to another tape");
  }
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, const std::vector<Var<T>>& parents, BackwardFn fn) {
  Node node;
  node.owned = std::move(value);
  if (grad_enabled()) {
    for (const Var<T>& p : parents) {
      check_owned(p, "record");
      if (nodes_[p.id].requires_grad) node.requires_grad = true;
    }
    if (node.requires_grad) node.backward = std::move(fn);
  }
  nodes_.push_back(std::move(node));
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Tensor<T>& Tape<T>::grad_accumulator(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.grad) n.grad = Tensor<T>(value(id).shape());
  return *n.grad;
}

template <typename T>
Gradients<T> Tape<T>::backward(Var<T> loss) {
  if (!loss.traced()) throw UsageError("backward: loss is an untraced value");
  check_owned(loss, "backward");
  if (!grad_enabled()) throw UsageError("backward: tape was recorded with gradients disabled");
  if (value(loss.id).size() != 1) {
    throw UsageError("backward: loss must be a scalar, got shape " +
                     shape_string(value(loss.id).shape()));
  }
  for (Node& n : nodes_) n.grad.reset();
  grad_accumulator(loss.id)[0] = T{1};
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.grad && n.backward) n.backward(*this, i);
  }
  Gradients<T> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    if (!n.param_name) continue;
    Tensor<T> g = n.grad ? *n.grad : Tensor<T>(value(i).shape());
    auto [it, inserted] = out.emplace(*n.param_name, g);
    if (!inserted) {
      for (std::size_t k = 0; k < g.size(); ++k) it->second[k] += g[k];
    }
  }
  return out;
}

template class Tape<float>;
template class Tape<double>;

// ---------------------------------------------------------------------------
// Ops

namespace ag {

template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias, const std::string& layer) {
  Tape<T>* tape = x.tape;
  if (!tape) throw UsageError("linear: input is untraced");
  tape->check_owned(weight, "linear");
  tape->check_owned(bias, "linear");
  const Tensor<T>& w = weight.value();
  const Tensor<T>& b = bias.value();
  const Tensor<T>& in = x.value();
  if (w.rank() != 2 || b.size() != w.rows()) {
    throw DimensionError("layer '" + layer + "': weight " + shape_string(w.shape()) +
                         " and bias " + shape_string(b.shape()) + " are inconsistent");
  }
  if (in.cols() != w.cols()) {
    throw DimensionError("layer '" + layer + "': expected input width " +
                         std::to_string(w.cols()) + ", got shape " + shape_string(in.shape()));
  }
  Tensor<T> out({in.rows(), w.rows()});
  auto y = as_matrix(out);
  y.noalias() = as_matrix(in) * as_matrix(w).transpose();
  y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(
      b.data().data(), static_cast<Eigen::Index>(b.size()));
  const std::size_t xid = x.id, wid = weight.id, bid = bias.id;
  return tape->record(std::move(out), {x, weight, bias}, [xid, wid, bid](Tape<T>& t, std::size_t self) {
    const auto g = as_matrix(t.grad(self));
    if (t.requires_grad(wid)) {
      as_matrix(t.grad_accumulator(wid)).noalias() += g.transpose() * as_matrix(t.value(xid));
    }
    if (t.requires_grad(bid)) {
      Tensor<T>& gb = t.grad_accumulator(bid);
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(gb.data().data(),
                                                       static_cast<Eigen::Index>(gb.size())) +=
          g.colwise().sum();
    }
    if (t.requires_grad(xid)) {
      Tensor<T>& gx = t.grad_accumulator(xid);
      as_matrix(gx).noalias() += g * as_matrix(t.value(wid));
    }
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  return unary(
      x, "relu", [](T v) { return v > T{0} ? v : T{0}; },
      [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

template <typename T>
Var<T> tanh(Var<T> x) {
  return unary(
      x, "tanh", [](T v) { return std::tanh(v); }, [](T, T y) { return T{1} - y * y; });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  return unary(
      x, "sigmoid", [](T v) { return sigmoid_scalar(v); }, [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
Var<T> exp(Var<T> x) {
  return unary(
      x, "exp", [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> square(Var<T> x) {
  return unary(
      x, "square", [](T v) { return v * v; }, [](T v, T) { return T{2} * v; });
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
  return unary(
      x, "scale", [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Var<T> add_scalar(Var<T> x, T offset) {
  return unary(
      x, "add_scalar", [offset](T v) { return v + offset; }, [](T, T) { return T{1}; });
}

template <typename T>
Var<T> clamp(Var<T> x, T lo, T hi) {
  return unary(
      x, "clamp", [lo, hi](T v) { return std::clamp(v, lo, hi); },
      [lo, hi](T v, T) { return (v > lo && v < hi) ? T{1} : T{0}; });
}

template <typename T>
Var<T> softmax(Var<T> x) {
  if (!x.tape) throw UsageError("softmax: input is untraced");
  const Tensor<T>& in = x.value();
  Tensor<T> out(in.shape());
  for (std::size_t r = 0; r < in.rows(); ++r) {
    auto src = in.row(r);
    auto dst = out.row(r);
    const T mx = *std::max_element(src.begin(), src.end());
    T total{0};
    for (std::size_t c = 0; c < src.size(); ++c) total += dst[c] = std::exp(src[c] - mx);
    for (T& v : dst) v /= total;
  }
  const std::size_t xid = x.id;
  return x.tape->record(std::move(out), {x}, [xid](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& y = t.value(self);
    Tensor<T>& gx = t.grad_accumulator(xid);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      auto yr = y.row(r);
      auto gr = g.row(r);
      T dot{0};
      for (std::size_t c = 0; c < yr.size(); ++c) dot += gr[c] * yr[c];
      auto gxr = gx.row(r);
      for (std::size_t c = 0; c < yr.size(); ++c) gxr[c] += yr[c] * (gr[c] - dot);
    }
  });
}

template <typename T>
Var<T> log_softmax(Var<T> x) {
  if (!x.tape) throw UsageError("log_softmax: input is untraced");
  const Tensor<T>& in = x.value();
  Tensor<T> out(in.shape());
  for (std::size_t r = 0; r < in.rows(); ++r) {
    auto src = in.row(r);
    auto dst = out.row(r);
    const T mx = *std::max_element(src.begin(), src.end());
    T total{0};
    for (T v : src) total += std::exp(v - mx);
    const T lse = mx + std::log(total);
    for (std::size_t c = 0; c < src.size(); ++c) dst[c] = src[c] - lse;
  }
  const std::size_t xid = x.id;
  return x.tape->record(std::move(out), {x}, [xid](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& y = t.value(self);
    Tensor<T>& gx = t.grad_accumulator(xid);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      auto yr = y.row(r);
      auto gr = g.row(r);
      T gsum{0};
      for (T v : gr) gsum += v;
      auto gxr = gx.row(r);
      for (std::size_t c = 0; c < yr.size(); ++c) gxr[c] += gr[c] - std::exp(yr[c]) * gsum;
    }
  });
}

template <typename T>
Var<T> activate(Var<T> x, Activation a) {
  switch (a) {
    case Activation::kRelu: return relu(x);
    case Activation::kTanh: return tanh(x);
    case Activation::kSigmoid: return sigmoid(x);
    case Activation::kSoftmax: return softmax(x);
    case Activation::kIdentity: return x;
  }
  return x;
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  if (!a.tape) throw UsageError("add: input is untraced");
  a.tape->check_owned(b, "add");
  require_same_shape(a, b, "add");
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::size_t aid = a.id, bid = b.id;
  return a.tape->record(std::move(out), {a, b}, [aid, bid](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    for (std::size_t id : {aid, bid}) {
      if (!t.requires_grad(id)) continue;
      Tensor<T>& gx = t.grad_accumulator(id);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  if (!a.tape) throw UsageError("sub: input is untraced");
  a.tape->check_owned(b, "sub");
  require_same_shape(a, b, "sub");
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const std::size_t aid = a.id, bid = b.id;
  return a.tape->record(std::move(out), {a, b}, [aid, bid](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    if (t.requires_grad(aid)) {
      Tensor<T>& ga = t.grad_accumulator(aid);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(bid)) {
      Tensor<T>& gb = t.grad_accumulator(bid);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  if (!a.tape) throw UsageError("mul: input is untraced");
  a.tape->check_owned(b, "mul");
  require_same_shape(a, b, "mul");
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t aid = a.id, bid = b.id;
  return a.tape->record(std::move(out), {a, b}, [aid, bid](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    if (t.requires_grad(aid)) {
      const Tensor<T>& bv = t.value(bid);
      Tensor<T>& ga = t.grad_accumulator(aid);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(bid)) {
      const Tensor<T>& av = t.value(aid);
      Tensor<T>& gb = t.grad_accumulator(bid);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  if (!x.tape) throw UsageError("sum: input is untraced");
  T total{0};
  for (T v : x.value().data()) total += v;
  const std::size_t xid = x.id;
  return x.tape->record(Tensor<T>({1}, {total}), {x}, [xid](Tape<T>& t, std::size_t self) {
    const T g = t.grad(self)[0];
    Tensor<T>& gx = t.grad_accumulator(xid);
    for (T& v : gx.data()) v += g;
  });
}

template <typename T>
Var<T> mean(Var<T> x) {
  if (!x.tape) throw UsageError("mean: input is untraced");
  return scale(sum(x), T{1} / static_cast<T>(x.value().size()));
}

template <typename T>
Var<T> row_sum(Var<T> x) {
  if (!x.tape) throw UsageError("row_sum: input is untraced");
  const Tensor<T>& in = x.value();
  Tensor<T> out({in.rows(), 1});
  for (std::size_t r = 0; r < in.rows(); ++r) {
    T total{0};
    for (T v : in.row(r)) total += v;
    out[r] = total;
  }
  const std::size_t xid = x.id;
  return x.tape->record(std::move(out), {x}, [xid](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad_accumulator(xid);
    for (std::size_t r = 0; r < gx.rows(); ++r) {
      for (T& v : gx.row(r)) v += g[r];
    }
  });
}

template <typename T>
Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t end) {
  if (!x.tape) throw UsageError("slice_cols: input is untraced");
  const Tensor<T>& in = x.value();
  if (begin >= end || end > in.cols()) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") outside " + shape_string(in.shape()));
  }
  const std::size_t width = end - begin;
  Tensor<T> out({in.rows(), width});
  for (std::size_t r = 0; r < in.rows(); ++r) {
    auto src = in.row(r);
    std::copy(src.begin() + begin, src.begin() + end, out.row(r).begin());
  }
  const std::size_t xid = x.id;
  return x.tape->record(std::move(out), {x}, [xid, begin, width](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad_accumulator(xid);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto gr = g.row(r);
      auto gxr = gx.row(r);
      for (std::size_t c = 0; c < width; ++c) gxr[begin + c] += gr[c];
    }
  });
}

template <typename T>
Var<T> concat_cols(Var<T> a, Var<T> b) {
  if (!a.tape) throw UsageError("concat_cols: input is untraced");
  a.tape->check_owned(b, "concat_cols");
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.rows() != bv.rows()) {
    throw DimensionError("concat_cols: row mismatch " + shape_string(av.shape()) + " vs " +
                         shape_string(bv.shape()));
  }
  const std::size_t wa = av.cols(), wb = bv.cols();
  Tensor<T> out({av.rows(), wa + wb});
  for (std::size_t r = 0; r < av.rows(); ++r) {
    auto dst = out.row(r);
    std::copy(av.row(r).begin(), av.row(r).end(), dst.begin());
    std::copy(bv.row(r).begin(), bv.row(r).end(), dst.begin() + wa);
  }
  const std::size_t aid = a.id, bid = b.id;
  return a.tape->record(std::move(out), {a, b}, [aid, bid, wa, wb](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto gr = g.row(r);
      if (t.requires_grad(aid)) {
        auto ga = t.grad_accumulator(aid).row(r);
        for (std::size_t c = 0; c < wa; ++c) ga[c] += gr[c];
      }
      if (t.requires_grad(bid)) {
        auto gb = t.grad_accumulator(bid).row(r);
        for (std::size_t c = 0; c < wb; ++c) gb[c] += gr[wa + c];
      }
    }
  });
}

template <typename T>
Var<T> gather_cols(Var<T> x, const std::vector<std::size_t>& index) {
  if (!x.tape) throw UsageError("gather_cols: input is untraced");
  const Tensor<T>& in = x.value();
  if (index.size() != in.rows()) {
    throw DimensionError("gather_cols: " + std::to_string(index.size()) + " indices for " +
                         std::to_string(in.rows()) + " rows");
  }
  Tensor<T> out({in.rows(), 1});
  for (std::size_t r = 0; r < in.rows(); ++r) {
    if (index[r] >= in.cols()) throw DimensionError("gather_cols: column index out of range");
    out[r] = in.at(r, index[r]);
  }
  const std::size_t xid = x.id;
  return x.tape->record(std::move(out), {x}, [xid, index](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad_accumulator(xid);
    for (std::size_t r = 0; r < index.size(); ++r) gx.at(r, index[r]) += g[r];
  });
}

template <typename T>
Var<T> stop_gradient(Var<T> x) {
  if (!x.tape) throw UsageError("stop_gradient: input is untraced");
  return x.tape->constant(x.value());
}

template <typename T>
Var<T> bce_with_logits(Var<T> logits, const Tensor<T>& targets) {
  if (!logits.tape) throw UsageError("bce_with_logits: input is untraced");
  const Tensor<T>& in = logits.value();
  if (in.size() != targets.size()) {
    throw DimensionError("bce_with_logits: logits " + shape_string(in.shape()) + " vs targets " +
                         shape_string(targets.shape()));
  }
  // max(l, 0) - l*y + log(1 + exp(-|l|))
  Tensor<T> out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const T l = in[i];
    out[i] = std::max(l, T{0}) - l * targets[i] + std::log1p(std::exp(-std::abs(l)));
  }
  const std::size_t xid = logits.id;
  return logits.tape->record(std::move(out), {logits}, [xid, targets](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& l = t.value(xid);
    Tensor<T>& gx = t.grad_accumulator(xid);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (sigmoid_scalar(l[i]) - targets[i]);
  });
}

#define ACBVAE_INSTANTIATE_OPS(T)                                                    \
  template Var<T> linear(Var<T>, Var<T>, Var<T>, const std::string&);                \
  template Var<T> relu(Var<T>);                                                      \
  template Var<T> tanh(Var<T>);                                                      \
  template Var<T> sigmoid(Var<T>);                                                   \
  template Var<T> exp(Var<T>);                                                       \
  template Var<T> square(Var<T>);                                                    \
  template Var<T> softmax(Var<T>);                                                   \
  template Var<T> log_softmax(Var<T>);                                               \
  template Var<T> activate(Var<T>, Activation);                                      \
  template Var<T> add(Var<T>, Var<T>);                                               \
  template Var<T> sub(Var<T>, Var<T>);                                               \
  template Var<T> mul(Var<T>, Var<T>);                                               \
  template Var<T> scale(Var<T>, T);                                                  \
  template Var<T> add_scalar(Var<T>, T);                                             \
  template Var<T> clamp(Var<T>, T, T);                                               \
  template Var<T> sum(Var<T>);                                                       \
  template Var<T> mean(Var<T>);                                                      \
  template Var<T> row_sum(Var<T>);                                                   \
  template Var<T> slice_cols(Var<T>, std::size_t, std::size_t);                      \
  template Var<T> concat_cols(Var<T>, Var<T>);                                       \
  template Var<T> gather_cols(Var<T>, const std::vector<std::size_t>&);              \
  template Var<T> stop_gradient(Var<T>);                                             \
  template Var<T> bce_with_logits(Var<T>, const Tensor<T>&);

ACBVAE_INSTANTIATE_OPS(float)
ACBVAE_INSTANTIATE_OPS(double)

#undef ACBVAE_INSTANTIATE_OPS

}  // namespace ag

}  // namespace acbvae
