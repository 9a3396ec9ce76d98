#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "umk/tensor.hpp"

namespace umk {

// Reverse-mode tape over TensorT. Ops are free functions that take the graph
// as first argument; they always compute values, and additionally record a
// backward closure when the graph is recording and some input requires grad.
//
// Contract highlights:
//  * backward() visits nodes in exact reverse order of construction,
//  * backward() twice without reset() is an error,
//  * grads of every participating tensor are zeroed at the start of
//    backward() unless accumulation is explicitly requested.
template <typename Scalar>
class GraphT {
 public:
  using Tensor = TensorT<Scalar>;

  bool recording() const { return recording_; }
  void set_recording(bool on) { recording_ = on; }

  std::size_t node_count() const { return nodes_.size(); }

  void reset() {
    nodes_.clear();
    touched_.clear();
    backward_done_ = false;
  }

  void backward(const Tensor& loss, bool accumulate = false) {
    if (loss.size() != 1)
      throw graph_error("backward: loss must be scalar, got shape " +
                        Tensor::shape_string(loss.shape()));
    if (backward_done_) throw graph_error("backward: called twice without graph reset");
    bool attached = false;
    for (const auto& node : nodes_)
      if (node.output.same_storage(loss)) {
        attached = true;
        break;
      }
    if (!attached) throw graph_error("backward: loss is not attached to this graph");
    if (!accumulate)
      for (auto& t : touched_)
        if (t.requires_grad() || t.has_grad()) t.zero_grad();
    Tensor seed = loss;
    seed.grad()[0] += Scalar(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->vjp();
    backward_done_ = true;
  }

  // Used by ops; not part of the public surface.
  void record(Tensor output, std::vector<Tensor> inputs, std::function<void()> vjp) {
    output.set_requires_grad(true);
    for (auto& in : inputs) touch(in);
    touch(output);
    nodes_.push_back(Node{std::move(output), std::move(vjp)});
  }

  static bool wants_grad(const GraphT& g, std::initializer_list<const Tensor*> inputs) {
    if (!g.recording_) return false;
    for (const Tensor* t : inputs)
      if (t->requires_grad()) return true;
    return false;
  }

 private:
  struct Node {
    Tensor output;
    std::function<void()> vjp;
  };

  void touch(const Tensor& t) {
    for (const auto& seen : touched_)
      if (seen.same_storage(t)) return;
    touched_.push_back(t);
  }

  std::vector<Node> nodes_;
  std::vector<Tensor> touched_;
  bool recording_ = true;
  bool backward_done_ = false;
};

using Graph = GraphT<double>;

namespace detail {

template <typename Scalar>
[[noreturn]] void shape_fail(const char* op, const TensorT<Scalar>& a, const TensorT<Scalar>& b) {
  throw shape_error(std::string(op) + ": incompatible shapes " +
                    TensorT<Scalar>::shape_string(a.shape()) + " and " +
                    TensorT<Scalar>::shape_string(b.shape()));
}

inline std::size_t outer_count(const std::vector<std::size_t>& shape, std::size_t axis) {
  std::size_t n = 1;
  for (std::size_t i = 0; i < axis; ++i) n *= shape[i];
  return n;
}

inline std::size_t inner_count(const std::vector<std::size_t>& shape, std::size_t axis) {
  std::size_t n = 1;
  for (std::size_t i = axis + 1; i < shape.size(); ++i) n *= shape[i];
  return n;
}

}  // namespace detail

// --- linear algebra ---------------------------------------------------------

template <typename Scalar>
TensorT<Scalar> matmul(GraphT<Scalar>& g, const TensorT<Scalar>& a, const TensorT<Scalar>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) detail::shape_fail("matmul", a, b);
  auto out = TensorT<Scalar>::zeros({a.extent(0), b.extent(1)});
  out.matrix().noalias() = a.matrix() * b.matrix();
  if (GraphT<Scalar>::wants_grad(g, {&a, &b})) {
    g.record(out, {a, b}, [a = a, b = b, out]() mutable {
      if (a.requires_grad()) a.grad_matrix().noalias() += out.grad_matrix() * b.matrix().transpose();
      if (b.requires_grad()) b.grad_matrix().noalias() += a.matrix().transpose() * out.grad_matrix();
    });
  }
  return out;
}

// a . b^T without materializing the transpose.
template <typename Scalar>
TensorT<Scalar> matmul_nt(GraphT<Scalar>& g, const TensorT<Scalar>& a, const TensorT<Scalar>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(1))
    detail::shape_fail("matmul_nt", a, b);
  auto out = TensorT<Scalar>::zeros({a.extent(0), b.extent(0)});
  out.matrix().noalias() = a.matrix() * b.matrix().transpose();
  if (GraphT<Scalar>::wants_grad(g, {&a, &b})) {
    g.record(out, {a, b}, [a = a, b = b, out]() mutable {
      if (a.requires_grad()) a.grad_matrix().noalias() += out.grad_matrix() * b.matrix();
      if (b.requires_grad()) b.grad_matrix().noalias() += out.grad_matrix().transpose() * a.matrix();
    });
  }
  return out;
}

// Elementwise addition; also accepts a rank-1 bias broadcast across the rows
// of a rank-2 tensor (the only broadcast the engine supports).
template <typename Scalar>
TensorT<Scalar> add(GraphT<Scalar>& g, const TensorT<Scalar>& a, const TensorT<Scalar>& b) {
  const bool same = a.shape() == b.shape();
  const bool row_bcast = !same && a.rank() == 2 && b.rank() == 1 && b.extent(0) == a.extent(1);
  if (!same && !row_bcast) detail::shape_fail("add", a, b);
  auto out = TensorT<Scalar>::zeros(a.shape());
  if (same) {
    out.array() = a.array() + b.array();
  } else {
    out.matrix() = a.matrix().rowwise() + b.matrix().row(0);
  }
  if (GraphT<Scalar>::wants_grad(g, {&a, &b})) {
    g.record(out, {a, b}, [a = a, b = b, out, same]() mutable {
      if (a.requires_grad()) a.grad_array() += out.grad_array();
      if (b.requires_grad()) {
        if (same)
          b.grad_array() += out.grad_array();
        else
          b.grad_matrix().row(0) += out.grad_matrix().colwise().sum();
      }
    });
  }
  return out;
}

template <typename Scalar>
TensorT<Scalar> mul(GraphT<Scalar>& g, const TensorT<Scalar>& a, const TensorT<Scalar>& b) {
  if (a.shape() != b.shape()) detail::shape_fail("mul", a, b);
  auto out = TensorT<Scalar>::zeros(a.shape());
  out.array() = a.array() * b.array();
  if (GraphT<Scalar>::wants_grad(g, {&a, &b})) {
    g.record(out, {a, b}, [a = a, b = b, out]() mutable {
      if (a.requires_grad()) a.grad_array() += out.grad_array() * b.array();
      if (b.requires_grad()) b.grad_array() += out.grad_array() * a.array();
    });
  }
  return out;
}

template <typename Scalar>
TensorT<Scalar> scale(GraphT<Scalar>& g, const TensorT<Scalar>& a, Scalar c) {
  auto out = TensorT<Scalar>::zeros(a.shape());
  out.array() = a.array() * c;
  if (GraphT<Scalar>::wants_grad(g, {&a})) {
    g.record(out, {a}, [a = a, out, c]() mutable {
      if (a.requires_grad()) a.grad_array() += out.grad_array() * c;
    });
  }
  return out;
}

template <typename Scalar>
TensorT<Scalar> sum(GraphT<Scalar>& g, const TensorT<Scalar>& a) {
  auto out = TensorT<Scalar>::scalar(a.array().sum());
  if (GraphT<Scalar>::wants_grad(g, {&a})) {
    g.record(out, {a}, [a = a, out]() mutable {
      if (a.requires_grad()) a.grad_array() += out.grad()[0];
    });
  }
  return out;
}

// --- shape manipulation ------------------------------------------------------

template <typename Scalar>
TensorT<Scalar> reshape(GraphT<Scalar>& g, const TensorT<Scalar>& a,
                        typename TensorT<Scalar>::Shape shape) {
  if (TensorT<Scalar>::count(shape) != a.size())
    throw shape_error("reshape: cannot view " + TensorT<Scalar>::shape_string(a.shape()) + " as " +
                      TensorT<Scalar>::shape_string(shape));
  auto out = TensorT<Scalar>::from_data(std::move(shape), a.buffer());
  if (GraphT<Scalar>::wants_grad(g, {&a})) {
    g.record(out, {a}, [a = a, out]() mutable {
      if (a.requires_grad()) a.grad_array() += out.grad_array();
    });
  }
  return out;
}

template <typename Scalar>
TensorT<Scalar> slice(GraphT<Scalar>& g, const TensorT<Scalar>& a, std::size_t axis,
                      std::size_t start, std::size_t length) {
  if (axis >= a.rank() || start + length > a.extent(axis))
    throw shape_error("slice: range [" + std::to_string(start) + ", " +
                      std::to_string(start + length) + ") on axis " + std::to_string(axis) +
                      " of " + TensorT<Scalar>::shape_string(a.shape()));
  auto shape = a.shape();
  shape[axis] = length;
  auto out = TensorT<Scalar>::zeros(shape);
  const std::size_t outer = detail::outer_count(a.shape(), axis);
  const std::size_t inner = detail::inner_count(a.shape(), axis);
  const std::size_t mid = a.extent(axis);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(a.data() + (o * mid + start) * inner, length * inner,
                out.data() + o * length * inner);
  if (GraphT<Scalar>::wants_grad(g, {&a})) {
    g.record(out, {a}, [a = a, out, outer, inner, mid, start, length]() mutable {
      if (!a.requires_grad()) return;
      Scalar* ag = a.grad();
      const Scalar* og = out.grad();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < length * inner; ++i)
          ag[(o * mid + start) * inner + i] += og[o * length * inner + i];
    });
  }
  return out;
}

template <typename Scalar>
TensorT<Scalar> concat(GraphT<Scalar>& g, std::span<const TensorT<Scalar>> parts,
                       std::size_t axis) {
  if (parts.empty()) throw shape_error("concat: no inputs");
  auto shape = parts[0].shape();
  if (axis >= shape.size()) throw shape_error("concat: axis out of range");
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != shape.size()) detail::shape_fail("concat", parts[0], p);
    for (std::size_t d = 0; d < shape.size(); ++d)
      if (d != axis && p.extent(d) != shape[d]) detail::shape_fail("concat", parts[0], p);
    total += p.extent(axis);
  }
  shape[axis] = total;
  auto out = TensorT<Scalar>::zeros(shape);
  const std::size_t outer = detail::outer_count(shape, axis);
  const std::size_t inner = detail::inner_count(shape, axis);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t len = p.extent(axis);
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(p.data() + o * len * inner, len * inner,
                  out.data() + (o * total + offset) * inner);
    offset += len;
  }
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (g.recording() && any) {
    std::vector<TensorT<Scalar>> held(parts.begin(), parts.end());
    g.record(out, held, [held, out, axis, outer, inner, total]() mutable {
      const Scalar* og = out.grad();
      std::size_t offset = 0;
      for (auto& p : held) {
        const std::size_t len = p.extent(axis);
        if (p.requires_grad()) {
          Scalar* pg = p.grad();
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t i = 0; i < len * inner; ++i)
              pg[o * len * inner + i] += og[(o * total + offset) * inner + i];
        }
        offset += len;
      }
    });
  }
  return out;
}

template <typename Scalar>
TensorT<Scalar> concat(GraphT<Scalar>& g, const std::vector<TensorT<Scalar>>& parts,
                       std::size_t axis) {
  return concat(g, std::span<const TensorT<Scalar>>(parts.data(), parts.size()), axis);
}

// Arbitrary element gather by flat index; backward scatter-adds.
template <typename Scalar>
TensorT<Scalar> gather_flat(GraphT<Scalar>& g, const TensorT<Scalar>& a,
                            std::vector<std::size_t> indices,
                            typename TensorT<Scalar>::Shape shape) {
  if (TensorT<Scalar>::count(shape) != indices.size())
    throw shape_error("gather_flat: index count does not match output shape");
  auto out = TensorT<Scalar>::zeros(std::move(shape));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= a.size())
      throw index_error("gather_flat: index " + std::to_string(indices[i]) + " out of range " +
                        std::to_string(a.size()));
    out.data()[i] = a.data()[indices[i]];
  }
  if (GraphT<Scalar>::wants_grad(g, {&a})) {
    g.record(out, {a}, [a = a, out, indices = std::move(indices)]() mutable {
      if (!a.requires_grad()) return;
      Scalar* ag = a.grad();
      const Scalar* og = out.grad();
      for (std::size_t i = 0; i < indices.size(); ++i) ag[indices[i]] += og[i];
    });
  }
  return out;
}

template <typename Scalar>
TensorT<Scalar> embedding_gather(GraphT<Scalar>& g, const TensorT<Scalar>& table,
                                 std::span<const int> ids) {
  if (table.rank() != 2) throw shape_error("embedding_gather: table must be rank-2");
  const std::size_t vocab = table.extent(0);
  const std::size_t dim = table.extent(1);
  auto out = TensorT<Scalar>::zeros({ids.size(), dim});
  for (std::size_t p = 0; p < ids.size(); ++p) {
    const int id = ids[p];
    if (id < 0 || static_cast<std::size_t>(id) >= vocab)
      throw index_error("embedding_gather: token id " + std::to_string(id) +
                        " outside vocabulary of " + std::to_string(vocab));
    out.matrix().row(static_cast<Eigen::Index>(p)) =
        table.matrix().row(static_cast<Eigen::Index>(id));
  }
  if (GraphT<Scalar>::wants_grad(g, {&table})) {
    std::vector<int> held(ids.begin(), ids.end());
    g.record(out, {table}, [table = table, out, held = std::move(held)]() mutable {
      if (!table.requires_grad()) return;
      for (std::size_t p = 0; p < held.size(); ++p)
        table.grad_matrix().row(held[p]) += out.grad_matrix().row(static_cast<Eigen::Index>(p));
    });
  }
  return out;
}

// --- nonlinearities ----------------------------------------------------------

template <typename Scalar>
TensorT<Scalar> softmax(GraphT<Scalar>& g, const TensorT<Scalar>& a) {
  if (a.rank() < 1) throw shape_error("softmax: rank-0 input");
  auto out = TensorT<Scalar>::zeros(a.shape());
  const std::size_t cols = a.extent(a.rank() - 1);
  const std::size_t rows = a.size() / cols;
  for (std::size_t r = 0; r < rows; ++r) {
    const Scalar* x = a.data() + r * cols;
    Scalar* y = out.data() + r * cols;
    Scalar mx = x[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
    Scalar total = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      y[c] = std::exp(x[c] - mx);
      total += y[c];
    }
    for (std::size_t c = 0; c < cols; ++c) y[c] /= total;
  }
  if (GraphT<Scalar>::wants_grad(g, {&a})) {
    g.record(out, {a}, [a = a, out, rows, cols]() mutable {
      if (!a.requires_grad()) return;
      Scalar* ag = a.grad();
      const Scalar* y = out.data();
      const Scalar* og = out.grad();
      for (std::size_t r = 0; r < rows; ++r) {
        Scalar dot = 0;
        for (std::size_t c = 0; c < cols; ++c) dot += og[r * cols + c] * y[r * cols + c];
        for (std::size_t c = 0; c < cols; ++c)
          ag[r * cols + c] += y[r * cols + c] * (og[r * cols + c] - dot);
      }
    });
  }
  return out;
}

template <typename Scalar>
TensorT<Scalar> log_softmax(GraphT<Scalar>& g, const TensorT<Scalar>& a) {
  if (a.rank() < 1) throw shape_error("log_softmax: rank-0 input");
  auto out = TensorT<Scalar>::zeros(a.shape());
  const std::size_t cols = a.extent(a.rank() - 1);
  const std::size_t rows = a.size() / cols;
  for (std::size_t r = 0; r < rows; ++r) {
    const Scalar* x = a.data() + r * cols;
    Scalar* y = out.data() + r * cols;
    Scalar mx = x[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
    Scalar total = 0;
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(x[c] - mx);
    const Scalar lse = mx + std::log(total);
    for (std::size_t c = 0; c < cols; ++c) y[c] = x[c] - lse;
  }
  if (GraphT<Scalar>::wants_grad(g, {&a})) {
    g.record(out, {a}, [a = a, out, rows, cols]() mutable {
      if (!a.requires_grad()) return;
      Scalar* ag = a.grad();
      const Scalar* y = out.data();
      const Scalar* og = out.grad();
      for (std::size_t r = 0; r < rows; ++r) {
        Scalar total = 0;
        for (std::size_t c = 0; c < cols; ++c) total += og[r * cols + c];
        for (std::size_t c = 0; c < cols; ++c)
          ag[r * cols + c] += og[r * cols + c] - std::exp(y[r * cols + c]) * total;
      }
    });
  }
  return out;
}

// Normalizes over the last dimension with affine parameters.
template <typename Scalar>
TensorT<Scalar> layer_norm(GraphT<Scalar>& g, const TensorT<Scalar>& a,
                           const TensorT<Scalar>& gamma, const TensorT<Scalar>& beta,
                           Scalar eps = Scalar(1e-5)) {
  const std::size_t cols = a.extent(a.rank() - 1);
  if (gamma.size() != cols || beta.size() != cols) detail::shape_fail("layer_norm", a, gamma);
  const std::size_t rows = a.size() / cols;
  auto out = TensorT<Scalar>::zeros(a.shape());
  std::vector<Scalar> xhat(a.size());
  std::vector<Scalar> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const Scalar* x = a.data() + r * cols;
    Scalar mean = 0;
    for (std::size_t c = 0; c < cols; ++c) mean += x[c];
    mean /= static_cast<Scalar>(cols);
    Scalar var = 0;
    for (std::size_t c = 0; c < cols; ++c) var += (x[c] - mean) * (x[c] - mean);
    var /= static_cast<Scalar>(cols);
    const Scalar is = Scalar(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < cols; ++c) {
      xhat[r * cols + c] = (x[c] - mean) * is;
      out.data()[r * cols + c] = xhat[r * cols + c] * gamma.data()[c] + beta.data()[c];
    }
  }
  if (GraphT<Scalar>::wants_grad(g, {&a, &gamma, &beta})) {
    g.record(out, {a, gamma, beta},
             [a = a, gamma = gamma, beta = beta, out, rows, cols, xhat = std::move(xhat),
              inv_std = std::move(inv_std)]() mutable {
               const Scalar* og = out.grad();
               for (std::size_t r = 0; r < rows; ++r) {
                 const Scalar* xh = xhat.data() + r * cols;
                 const Scalar* dy = og + r * cols;
                 if (gamma.requires_grad() || beta.requires_grad()) {
                   Scalar* gg = gamma.grad();
                   Scalar* bg = beta.grad();
                   for (std::size_t c = 0; c < cols; ++c) {
                     if (gamma.requires_grad()) gg[c] += dy[c] * xh[c];
                     if (beta.requires_grad()) bg[c] += dy[c];
                   }
                 }
                 if (a.requires_grad()) {
                   Scalar mean_dxhat = 0, mean_dxhat_xhat = 0;
                   for (std::size_t c = 0; c < cols; ++c) {
                     const Scalar dxhat = dy[c] * gamma.data()[c];
                     mean_dxhat += dxhat;
                     mean_dxhat_xhat += dxhat * xh[c];
                   }
                   mean_dxhat /= static_cast<Scalar>(cols);
                   mean_dxhat_xhat /= static_cast<Scalar>(cols);
                   Scalar* ag = a.grad() + r * cols;
                   for (std::size_t c = 0; c < cols; ++c) {
                     const Scalar dxhat = dy[c] * gamma.data()[c];
                     ag[c] += inv_std[r] * (dxhat - mean_dxhat - xh[c] * mean_dxhat_xhat);
                   }
                 }
               }
             });
  }
  return out;
}

// Exact (erf-based) GELU.
template <typename Scalar>
TensorT<Scalar> gelu(GraphT<Scalar>& g, const TensorT<Scalar>& a) {
  auto out = TensorT<Scalar>::zeros(a.shape());
  constexpr Scalar inv_sqrt2 = Scalar(0.7071067811865475244);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Scalar x = a.data()[i];
    out.data()[i] = Scalar(0.5) * x * (Scalar(1) + std::erf(x * inv_sqrt2));
  }
  if (GraphT<Scalar>::wants_grad(g, {&a})) {
    g.record(out, {a}, [a = a, out]() mutable {
      if (!a.requires_grad()) return;
      constexpr Scalar inv_sqrt2pi = Scalar(0.3989422804014326779);
      for (std::size_t i = 0; i < a.size(); ++i) {
        const Scalar x = a.data()[i];
        const Scalar cdf = Scalar(0.5) * (Scalar(1) + std::erf(x * inv_sqrt2));
        const Scalar pdf = inv_sqrt2pi * std::exp(Scalar(-0.5) * x * x);
        a.grad()[i] += out.grad()[i] * (cdf + x * pdf);
      }
    });
  }
  return out;
}

// Sum over rows of -log p(target | logits row). Returns a scalar tensor.
template <typename Scalar>
TensorT<Scalar> cross_entropy_nll(GraphT<Scalar>& g, const TensorT<Scalar>& logits,
                                  std::span<const int> targets) {
  if (logits.rank() != 2)
    throw shape_error("cross_entropy_nll: logits must be rank-2, got " +
                      TensorT<Scalar>::shape_string(logits.shape()));
  const std::size_t rows = logits.extent(0);
  const std::size_t vocab = logits.extent(1);
  if (targets.size() != rows)
    throw shape_error("cross_entropy_nll: " + std::to_string(targets.size()) + " targets for " +
                      std::to_string(rows) + " logit rows");
  std::vector<Scalar> probs(logits.size());
  Scalar nll = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int t = targets[r];
    if (t < 0 || static_cast<std::size_t>(t) >= vocab)
      throw index_error("cross_entropy_nll: target id " + std::to_string(t) +
                        " outside vocabulary of " + std::to_string(vocab));
    const Scalar* x = logits.data() + r * vocab;
    Scalar mx = x[0];
    for (std::size_t c = 1; c < vocab; ++c) mx = std::max(mx, x[c]);
    Scalar total = 0;
    for (std::size_t c = 0; c < vocab; ++c) {
      probs[r * vocab + c] = std::exp(x[c] - mx);
      total += probs[r * vocab + c];
    }
    for (std::size_t c = 0; c < vocab; ++c) probs[r * vocab + c] /= total;
    nll += mx + std::log(total) - x[t];
  }
  auto out = TensorT<Scalar>::scalar(nll);
  if (GraphT<Scalar>::wants_grad(g, {&logits})) {
    std::vector<int> held(targets.begin(), targets.end());
    g.record(out, {logits},
             [logits = logits, out, held = std::move(held), probs = std::move(probs), rows,
              vocab]() mutable {
               if (!logits.requires_grad()) return;
               const Scalar go = out.grad()[0];
               Scalar* lg = logits.grad();
               for (std::size_t r = 0; r < rows; ++r) {
                 for (std::size_t c = 0; c < vocab; ++c)
                   lg[r * vocab + c] += go * probs[r * vocab + c];
                 lg[r * vocab + static_cast<std::size_t>(held[r])] -= go;
               }
             });
  }
  return out;
}

}  // namespace umk
