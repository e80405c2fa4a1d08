#pragma once

// Dense row-major tensor with reverse-mode automatic differentiation.
// The tape is implicit: every op records its parents and a backward
// closure on the result node; backward() topologically sorts the graph
// reachable from a scalar loss and replays the closures in reverse.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

namespace epiwarp {

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

namespace detail {

template <class T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward_fn;

  std::size_t numel() const { return data.size(); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

}  // namespace detail

template <class T>
class Tensor {
 public:
  using Node = detail::Node<T>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), T(0), requires_grad);
  }
  static Tensor filled(Shape shape, T value, bool requires_grad = false) {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->data.assign(shape_numel(t.node_->shape), value);
    t.node_->requires_grad = requires_grad;
    return t;
  }
  static Tensor scalar(T value, bool requires_grad = false) {
    return from({1}, {value}, requires_grad);
  }
  static Tensor from(Shape shape, std::vector<T> values,
                     bool requires_grad = false) {
    if (shape_numel(shape) != values.size())
      throw DimensionError("tensor data size " + std::to_string(values.size()) +
                           " does not match shape " + shape_str(shape));
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->data = std::move(values);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape[i]; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  std::vector<T>& data() { return node_->data; }
  const std::vector<T>& data() const { return node_->data; }
  std::vector<T>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  const std::vector<T>& grad() const {
    node_->ensure_grad();
    return node_->grad;
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool r) { node_->requires_grad = r; }
  void zero_grad() { node_->grad.assign(node_->data.size(), T(0)); }

  T item() const {
    if (numel() != 1)
      throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
    return node_->data[0];
  }

  T& at(std::size_t flat) { return node_->data[flat]; }
  T at(std::size_t flat) const { return node_->data[flat]; }

  std::shared_ptr<Node> node() const { return node_; }

  // Runs reverse-mode accumulation from this scalar. All grads reachable
  // on the tape are reset first, so repeated calls are deterministic.
  void backward() const {
    if (numel() != 1)
      throw ContractError("backward() requires a scalar loss, got " +
                          shape_str(shape()));
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, i] = stack.back();
      if (i < n->parents.size()) {
        Node* p = n->parents[i++].get();
        if (seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    for (Node* n : order) n->grad.assign(n->data.size(), T(0));
    node_->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it)
      if ((*it)->backward_fn) (*it)->backward_fn();
  }

 private:
  std::shared_ptr<Node> node_;
};

// ---------------------------------------------------------------------------
// op plumbing

namespace detail {

template <class T>
bool any_requires_grad(const std::vector<Tensor<T>>& parents) {
  for (const auto& p : parents)
    if (p.requires_grad()) return true;
  return false;
}

}  // namespace detail

// Creates a result tensor wired into the tape. `backward` is only recorded
// when some parent participates in differentiation.
template <class T>
Tensor<T> make_op(Shape shape, std::vector<T> values,
                  const std::vector<Tensor<T>>& parents,
                  std::function<void()> backward) {
  Tensor<T> out = Tensor<T>::from(std::move(shape), std::move(values));
  if (detail::any_requires_grad(parents)) {
    out.set_requires_grad(true);
    auto n = out.node();
    n->parents.reserve(parents.size());
    for (const auto& p : parents) n->parents.push_back(p.node());
    for (const auto& p : parents) p.node()->ensure_grad();
    n->backward_fn = std::move(backward);
  }
  return out;
}

// ---------------------------------------------------------------------------
// broadcasting helpers (numpy rules: align trailing dims, extent 1 stretches)

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  Shape out(std::max(a.size(), b.size()));
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::size_t ea = i < out.size() - a.size() ? 1 : a[i - (out.size() - a.size())];
    std::size_t eb = i < out.size() - b.size() ? 1 : b[i - (out.size() - b.size())];
    if (ea != eb && ea != 1 && eb != 1)
      throw DimensionError("shapes " + shape_str(a) + " and " + shape_str(b) +
                           " are not broadcast-compatible");
    out[i] = std::max(ea, eb);
  }
  return out;
}

inline std::vector<std::size_t> contiguous_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// strides of `s` viewed as shape `out` (stride 0 on stretched dims)
inline std::vector<std::size_t> broadcast_strides(const Shape& s,
                                                  const Shape& out) {
  auto st = contiguous_strides(s);
  std::vector<std::size_t> r(out.size(), 0);
  std::size_t off = out.size() - s.size();
  for (std::size_t i = 0; i < s.size(); ++i)
    r[off + i] = (s[i] == 1 && out[off + i] != 1) ? 0 : st[i];
  return r;
}

namespace detail {

// iterate flat index of `out` yielding source offsets for two operands
template <class Fn>
void for_each_broadcast(const Shape& out, const Shape& sa, const Shape& sb,
                        Fn&& fn) {
  const std::size_t n = shape_numel(out);
  auto ost = contiguous_strides(out);
  auto ast = broadcast_strides(sa, out);
  auto bst = broadcast_strides(sb, out);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t rem = flat, ia = 0, ib = 0;
    for (std::size_t d = 0; d < out.size(); ++d) {
      std::size_t c = rem / ost[d];
      rem -= c * ost[d];
      ia += c * ast[d];
      ib += c * bst[d];
    }
    fn(flat, ia, ib);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise binary ops

enum class BinaryKind { Add, Sub, Mul, Div };

template <class T>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, BinaryKind kind) {
  Shape out_shape = broadcast_shape(a.shape(), b.shape());
  std::vector<T> out(shape_numel(out_shape));
  const auto& ad = a.data();
  const auto& bd = b.data();
  detail::for_each_broadcast(out_shape, a.shape(), b.shape(),
                             [&](std::size_t o, std::size_t ia, std::size_t ib) {
                               switch (kind) {
                                 case BinaryKind::Add: out[o] = ad[ia] + bd[ib]; break;
                                 case BinaryKind::Sub: out[o] = ad[ia] - bd[ib]; break;
                                 case BinaryKind::Mul: out[o] = ad[ia] * bd[ib]; break;
                                 case BinaryKind::Div: out[o] = ad[ia] / bd[ib]; break;
                               }
                             });
  Tensor<T> res = make_op<T>(out_shape, std::move(out), {a, b}, nullptr);
  if (res.requires_grad()) {
    auto* rc = res.node().get();  // non-owning: an owning capture would cycle
    res.node()->backward_fn = [a, b, rc, kind, out_shape]() {
      const auto& g = rc->grad;
      auto& ga = a.node()->grad;
      auto& gb = b.node()->grad;
      const auto& ad = a.data();
      const auto& bd = b.data();
      const bool na = a.requires_grad();
      const bool nb = b.requires_grad();
      detail::for_each_broadcast(
          out_shape, a.shape(), b.shape(),
          [&](std::size_t o, std::size_t ia, std::size_t ib) {
            switch (kind) {
              case BinaryKind::Add:
                if (na) ga[ia] += g[o];
                if (nb) gb[ib] += g[o];
                break;
              case BinaryKind::Sub:
                if (na) ga[ia] += g[o];
                if (nb) gb[ib] -= g[o];
                break;
              case BinaryKind::Mul:
                if (na) ga[ia] += g[o] * bd[ib];
                if (nb) gb[ib] += g[o] * ad[ia];
                break;
              case BinaryKind::Div:
                if (na) ga[ia] += g[o] / bd[ib];
                if (nb) gb[ib] -= g[o] * ad[ia] / (bd[ib] * bd[ib]);
                break;
            }
          });
    };
  }
  return res;
}

template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return binary_op(a, b, BinaryKind::Add); }
template <class T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) { return binary_op(a, b, BinaryKind::Sub); }
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return binary_op(a, b, BinaryKind::Mul); }
template <class T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) { return binary_op(a, b, BinaryKind::Div); }

// ---------------------------------------------------------------------------
// elementwise unary ops

template <class T, class F, class DF>
Tensor<T> unary_op(const Tensor<T>& a, F f, DF df) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a.data()[i]);
  Tensor<T> res = make_op<T>(a.shape(), std::move(out), {a}, nullptr);
  if (res.requires_grad()) {
    auto* rc = res.node().get();
    res.node()->backward_fn = [a, rc, df]() {
      const auto& g = rc->grad;
      auto& ga = a.node()->grad;
      const auto& ad = a.data();
      const auto& od = rc->data;
      for (std::size_t i = 0; i < g.size(); ++i)
        ga[i] += g[i] * df(ad[i], od[i]);
    };
  }
  return res;
}

template <class T>
Tensor<T> neg(const Tensor<T>& a) {
  return unary_op(a, [](T x) { return -x; }, [](T, T) { return T(-1); });
}
template <class T>
Tensor<T> abs_t(const Tensor<T>& a) {
  return unary_op(a, [](T x) { return std::abs(x); },
                  [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}
template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  return unary_op(a, [](T x) { return x > T(0) ? x : T(0); },
                  [](T x, T) { return x > T(0) ? T(1) : T(0); });
}
template <class T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope = T(0.01)) {
  return unary_op(a, [slope](T x) { return x > T(0) ? x : slope * x; },
                  [slope](T x, T) { return x > T(0) ? T(1) : slope; });
}
template <class T>
Tensor<T> exp_t(const Tensor<T>& a) {
  return unary_op(a, [](T x) { return std::exp(x); },
                  [](T, T y) { return y; });
}
template <class T>
Tensor<T> square(const Tensor<T>& a) {
  return unary_op(a, [](T x) { return x * x; },
                  [](T x, T) { return T(2) * x; });
}
template <class T>
Tensor<T> sqrt_t(const Tensor<T>& a) {
  return unary_op(a, [](T x) { return std::sqrt(x); },
                  [](T, T y) { return T(0.5) / y; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
  return unary_op(a, [c](T x) { return x + c; }, [](T, T) { return T(1); });
}
template <class T>
Tensor<T> mul_scalar(const Tensor<T>& a, T c) {
  return unary_op(a, [c](T x) { return x * c; }, [c](T, T) { return c; });
}

enum class ElementwiseKind { Add, Sub, Mul, Div, Abs, Relu, LeakyRelu };

// Dispatch form used by the op-table tests and the gradcheck CLI.
template <class T>
Tensor<T> elementwise(const Tensor<T>& a, const Tensor<T>& b,
                      ElementwiseKind kind) {
  switch (kind) {
    case ElementwiseKind::Add: return add(a, b);
    case ElementwiseKind::Sub: return sub(a, b);
    case ElementwiseKind::Mul: return mul(a, b);
    case ElementwiseKind::Div: return div(a, b);
    default: throw ContractError("elementwise: binary kind expected");
  }
}
template <class T>
Tensor<T> elementwise(const Tensor<T>& a, ElementwiseKind kind) {
  switch (kind) {
    case ElementwiseKind::Abs: return abs_t(a);
    case ElementwiseKind::Relu: return relu(a);
    case ElementwiseKind::LeakyRelu: return leaky_relu(a);
    default: throw ContractError("elementwise: unary kind expected");
  }
}

// ---------------------------------------------------------------------------
// matmul (2-D), Eigen-backed inner kernel

template <class T>
using EigenMap =
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class T>
using ConstEigenMap = Eigen::Map<
    const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw DimensionError("matmul expects 2-D tensors, got " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  if (a.dim(1) != b.dim(0))
    throw DimensionError("matmul inner extents differ: " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(m * n);
  {
    ConstEigenMap<T> A(a.data().data(), m, k), B(b.data().data(), k, n);
    EigenMap<T> C(out.data(), m, n);
    C.noalias() = A * B;
  }
  Tensor<T> res = make_op<T>({m, n}, std::move(out), {a, b}, nullptr);
  if (res.requires_grad()) {
    auto* rc = res.node().get();
    res.node()->backward_fn = [a, b, rc, m, k, n]() {
      ConstEigenMap<T> A(a.data().data(), m, k), B(b.data().data(), k, n);
      ConstEigenMap<T> G(rc->grad.data(), m, n);
      if (a.requires_grad()) {
        EigenMap<T> GA(a.node()->grad.data(), m, k);
        GA.noalias() += G * B.transpose();
      }
      if (b.requires_grad()) {
        EigenMap<T> GB(b.node()->grad.data(), k, n);
        GB.noalias() += A.transpose() * G;
      }
    };
  }
  return res;
}

// ---------------------------------------------------------------------------
// reductions

enum class ReduceKind { Sum, Mean, Variance };

template <class T>
Tensor<T> sum_all(const Tensor<T>& a) {
  T s = std::accumulate(a.data().begin(), a.data().end(), T(0));
  Tensor<T> res = make_op<T>({1}, {s}, {a}, nullptr);
  if (res.requires_grad()) {
    auto* rc = res.node().get();
    res.node()->backward_fn = [a, rc]() {
      const T g = rc->grad[0];
      for (auto& v : a.node()->grad) v += g;
    };
  }
  return res;
}

template <class T>
Tensor<T> mean_all(const Tensor<T>& a) {
  return mul_scalar(sum_all(a), T(1) / T(a.numel()));
}

// Reduce one axis; the axis is dropped from the result shape.
template <class T>
Tensor<T> reduce(const Tensor<T>& a, ReduceKind kind, std::size_t axis) {
  if (axis >= a.rank())
    throw DimensionError("reduce axis " + std::to_string(axis) +
                         " out of range for " + shape_str(a.shape()));
  if (a.dim(axis) == 0) throw DimensionError("reduce over empty axis");
  const std::size_t extent = a.dim(axis);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  Shape out_shape;
  for (std::size_t i = 0; i < a.rank(); ++i)
    if (i != axis) out_shape.push_back(a.dim(i));
  if (out_shape.empty()) out_shape.push_back(1);

  const auto& ad = a.data();
  std::vector<T> mean_vals(outer * inner, T(0));
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t e = 0; e < extent; ++e)
      for (std::size_t i = 0; i < inner; ++i)
        mean_vals[o * inner + i] += ad[(o * extent + e) * inner + i];
  for (auto& v : mean_vals) v /= T(extent);

  std::vector<T> out(outer * inner);
  if (kind == ReduceKind::Sum) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = mean_vals[i] * T(extent);
  } else if (kind == ReduceKind::Mean) {
    out = mean_vals;
  } else {  // population variance, 1/extent
    std::fill(out.begin(), out.end(), T(0));
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t e = 0; e < extent; ++e)
        for (std::size_t i = 0; i < inner; ++i) {
          T d = ad[(o * extent + e) * inner + i] - mean_vals[o * inner + i];
          out[o * inner + i] += d * d;
        }
    for (auto& v : out) v /= T(extent);
  }

  Tensor<T> res = make_op<T>(out_shape, std::move(out), {a}, nullptr);
  if (res.requires_grad()) {
    auto* rc = res.node().get();
    res.node()->backward_fn = [a, rc, kind, outer, extent, inner,
                               mean_vals = std::move(mean_vals)]() {
      const auto& g = rc->grad;
      auto& ga = a.node()->grad;
      const auto& ad = a.data();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t e = 0; e < extent; ++e)
          for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t ai = (o * extent + e) * inner + i;
            const std::size_t oi = o * inner + i;
            switch (kind) {
              case ReduceKind::Sum: ga[ai] += g[oi]; break;
              case ReduceKind::Mean: ga[ai] += g[oi] / T(extent); break;
              case ReduceKind::Variance:
                ga[ai] += g[oi] * T(2) * (ad[ai] - mean_vals[oi]) / T(extent);
                break;
            }
          }
    };
  }
  return res;
}

template <class T> Tensor<T> sum(const Tensor<T>& a, std::size_t axis) { return reduce(a, ReduceKind::Sum, axis); }
template <class T> Tensor<T> mean(const Tensor<T>& a, std::size_t axis) { return reduce(a, ReduceKind::Mean, axis); }
template <class T> Tensor<T> variance(const Tensor<T>& a, std::size_t axis) { return reduce(a, ReduceKind::Variance, axis); }

// ---------------------------------------------------------------------------
// softmax along an axis, stabilized by max subtraction

template <class T>
Tensor<T> softmax(const Tensor<T>& a, std::size_t axis) {
  if (axis >= a.rank())
    throw DimensionError("softmax axis out of range for " + shape_str(a.shape()));
  for (T v : a.data())
    if (std::isnan(v)) throw NumericError("softmax: NaN input");
  const std::size_t extent = a.dim(axis);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  const auto& ad = a.data();
  std::vector<T> out(a.numel());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t e = 0; e < extent; ++e)
        mx = std::max(mx, ad[(o * extent + e) * inner + i]);
      T denom = T(0);
      for (std::size_t e = 0; e < extent; ++e) {
        T v = std::exp(ad[(o * extent + e) * inner + i] - mx);
        out[(o * extent + e) * inner + i] = v;
        denom += v;
      }
      for (std::size_t e = 0; e < extent; ++e)
        out[(o * extent + e) * inner + i] /= denom;
    }
  Tensor<T> res = make_op<T>(a.shape(), std::move(out), {a}, nullptr);
  if (res.requires_grad()) {
    auto* rc = res.node().get();
    res.node()->backward_fn = [a, rc, outer, extent, inner]() {
      const auto& g = rc->grad;
      const auto& y = rc->data;
      auto& ga = a.node()->grad;
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) {
          T dot = T(0);
          for (std::size_t e = 0; e < extent; ++e) {
            const std::size_t k = (o * extent + e) * inner + i;
            dot += g[k] * y[k];
          }
          for (std::size_t e = 0; e < extent; ++e) {
            const std::size_t k = (o * extent + e) * inner + i;
            ga[k] += y[k] * (g[k] - dot);
          }
        }
    };
  }
  return res;
}

// ---------------------------------------------------------------------------
// shape ops

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw DimensionError("reshape " + shape_str(a.shape()) + " -> " +
                         shape_str(shape) + " changes element count");
  Tensor<T> res = make_op<T>(std::move(shape), std::vector<T>(a.data()), {a}, nullptr);
  if (res.requires_grad()) {
    auto* rc = res.node().get();
    res.node()->backward_fn = [a, rc]() {
      const auto& g = rc->grad;
      auto& ga = a.node()->grad;
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    };
  }
  return res;
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw DimensionError("concat axis out of range");
  std::size_t total_axis = 0;
  for (const auto& p : parts) {
    if (p.rank() != s0.size())
      throw DimensionError("concat rank mismatch");
    for (std::size_t d = 0; d < s0.size(); ++d)
      if (d != axis && p.dim(d) != s0[d])
        throw DimensionError("concat extent mismatch at dim " + std::to_string(d));
    total_axis += p.dim(axis);
  }
  Shape out_shape = s0;
  out_shape[axis] = total_axis;
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];

  std::vector<T> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;  // per part, start along axis
  {
    std::size_t off = 0;
    for (const auto& p : parts) {
      offsets.push_back(off);
      for (std::size_t o = 0; o < outer; ++o) {
        const std::size_t pe = p.dim(axis);
        std::copy(p.data().begin() + o * pe * inner,
                  p.data().begin() + (o + 1) * pe * inner,
                  out.begin() + (o * total_axis + off) * inner);
      }
      off += p.dim(axis);
    }
  }
  Tensor<T> res = make_op<T>(out_shape, std::move(out), parts, nullptr);
  if (res.requires_grad()) {
    auto* rc = res.node().get();
    res.node()->backward_fn = [parts, rc, offsets, outer, inner, total_axis]() {
      const auto& g = rc->grad;
      for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        if (!parts[pi].requires_grad()) continue;
        auto& gp = parts[pi].node()->grad;
        const std::size_t extent = parts[pi].numel() / (outer * inner);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t e = 0; e < extent; ++e)
            for (std::size_t i = 0; i < inner; ++i)
              gp[(o * extent + e) * inner + i] +=
                  g[(o * total_axis + offsets[pi] + e) * inner + i];
      }
    };
  }
  return res;
}

template <class T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t start,
                std::size_t len) {
  if (axis >= a.rank() || start + len > a.dim(axis))
    throw DimensionError("slice out of range on " + shape_str(a.shape()));
  Shape out_shape = a.shape();
  out_shape[axis] = len;
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  const std::size_t extent = a.dim(axis);
  std::vector<T> out(outer * len * inner);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy(a.data().begin() + (o * extent + start) * inner,
              a.data().begin() + (o * extent + start + len) * inner,
              out.begin() + o * len * inner);
  Tensor<T> res = make_op<T>(out_shape, std::move(out), {a}, nullptr);
  if (res.requires_grad()) {
    auto* rc = res.node().get();
    res.node()->backward_fn = [a, rc, outer, inner, extent, start, len]() {
      const auto& g = rc->grad;
      auto& ga = a.node()->grad;
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t e = 0; e < len; ++e)
          for (std::size_t i = 0; i < inner; ++i)
            ga[(o * extent + start + e) * inner + i] += g[(o * len + e) * inner + i];
    };
  }
  return res;
}

// ---------------------------------------------------------------------------
// seeded parameter init: uniform in [-sqrt(1/fan_in), +sqrt(1/fan_in)]

template <class T>
Tensor<T> init_param(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const T bound = std::sqrt(T(1) / T(fan_in));
  std::uniform_real_distribution<T> dist(-bound, bound);
  std::vector<T> vals(shape_numel(shape));
  for (auto& v : vals) v = dist(rng);
  return Tensor<T>::from(std::move(shape), std::move(vals), true);
}

}  // namespace epiwarp
