#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "fpci/errors.hpp"

// Reverse-mode autodiff over dense row-major tensors. The tape is dynamic:
// every op allocates a node holding its result and a closure that performs
// the vector-Jacobian product into its parents. Kernels are single-threaded
// with fixed reduction order; independent graphs may live on separate
// threads.

namespace fpci::ad {

using Shape = std::vector<int64_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

// Strict mode: ops reject non-finite inputs. Thread-local so concurrent
// graphs can differ.
inline bool& strict_mode() {
  thread_local bool strict = false;
  return strict;
}

template <class R>
struct Node {
  Shape shape;
  std::vector<R> values;
  std::vector<R> grad;  // allocated on first use, same length as values
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // accumulates d(loss)/d(parent)

  int64_t numel() const { return static_cast<int64_t>(values.size()); }
  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), R(0));
  }
};

template <class R>
class Tensor {
 public:
  Tensor() = default;

  static Tensor leaf(Shape shape, std::vector<R> values, bool requires_grad = false) {
    if (shape_numel(shape) != static_cast<int64_t>(values.size()))
      throw ShapeError("leaf: shape " + shape_str(shape) + " does not match value count " +
                       std::to_string(values.size()));
    auto n = std::make_shared<Node<R>>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<R> v(static_cast<size_t>(shape_numel(shape)), R(0));
    return leaf(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor full(Shape shape, R value, bool requires_grad = false) {
    std::vector<R> v(static_cast<size_t>(shape_numel(shape)), value);
    return leaf(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor scalar(R value, bool requires_grad = false) {
    return leaf({1}, {value}, requires_grad);
  }

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  int64_t numel() const { return n_->numel(); }
  int64_t rows() const { return dim(0); }
  int64_t cols() const { return dim(1); }
  int64_t dim(size_t i) const { return i < n_->shape.size() ? n_->shape[i] : 1; }
  bool requires_grad() const { return n_->requires_grad; }

  std::vector<R>& values() { return n_->values; }
  const std::vector<R>& values() const { return n_->values; }
  R value(int64_t i = 0) const { return n_->values[static_cast<size_t>(i)]; }
  R at(int64_t r, int64_t c) const { return n_->values[static_cast<size_t>(r * cols() + c)]; }

  const std::vector<R>& grad() const { return n_->grad; }
  std::vector<R>& grad_mut() {
    n_->ensure_grad();
    return n_->grad;
  }
  bool has_grad() const { return !n_->grad.empty(); }
  void zero_grad() { std::fill(n_->grad.begin(), n_->grad.end(), R(0)); }

  Node<R>* node() const { return n_.get(); }
  const std::shared_ptr<Node<R>>& ptr() const { return n_; }

  // Populates d(this)/d(leaf) for every reachable requires_grad leaf.
  // Grads accumulate; callers are responsible for zeroing between passes.
  void backward() const {
    if (numel() != 1)
      throw ContractError("backward: loss must be scalar, got shape " + shape_str(shape()));
    if (!n_->requires_grad) return;

    // Post-order DFS, iterative; each node visited exactly once.
    std::vector<Node<R>*> order;
    std::unordered_set<Node<R>*> seen;
    struct Frame {
      Node<R>* node;
      size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({n_.get(), 0});
    seen.insert(n_.get());
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next_parent < f.node->parents.size()) {
        Node<R>* p = f.node->parents[f.next_parent++].get();
        if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
      } else {
        order.push_back(f.node);
        stack.pop_back();
      }
    }

    n_->ensure_grad();
    n_->grad[0] += R(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<R>* node = *it;
      if (node->backward) node->backward(*node);
    }
  }

  explicit Tensor(std::shared_ptr<Node<R>> n) : n_(std::move(n)) {}

 private:
  std::shared_ptr<Node<R>> n_;
};

namespace detail {

template <class R>
void check_finite(const Tensor<R>& t, const char* op) {
  if (!strict_mode()) return;
  for (R v : t.values())
    if (!std::isfinite(static_cast<double>(v)))
      throw NumericError(std::string(op) + ": non-finite input in strict mode");
}

template <class R>
Tensor<R> make_op(const char* op, Shape shape, std::vector<R> values,
                  std::vector<Tensor<R>> parents,
                  std::function<void(Node<R>&)> backward) {
  auto n = std::make_shared<Node<R>>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->op = op;
  bool rg = false;
  for (const auto& p : parents) rg = rg || p.requires_grad();
  n->requires_grad = rg;
  if (rg) {
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.ptr());
    n->backward = std::move(backward);
  }
  return Tensor<R>(std::move(n));
}

template <class R>
void require_same_shape(const Tensor<R>& a, const Tensor<R>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

template <class R>
void require_2d(const Tensor<R>& a, const char* op) {
  if (a.shape().size() != 2)
    throw ShapeError(std::string(op) + ": expected 2-D tensor, got " + shape_str(a.shape()));
}

template <class R>
using MatMap = Eigen::Map<Eigen::Matrix<R, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class R>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<R, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops

template <class R>
Tensor<R> add(const Tensor<R>& a, const Tensor<R>& b) {
  detail::require_same_shape(a, b, "add");
  detail::check_finite(a, "add");
  detail::check_finite(b, "add");
  std::vector<R> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return detail::make_op<R>("add", a.shape(), std::move(out), {a, b}, [](Node<R>& n) {
    for (int k = 0; k < 2; ++k) {
      Node<R>* p = n.parents[k].get();
      if (!p->requires_grad) continue;
      p->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i];
    }
  });
}

template <class R>
Tensor<R> sub(const Tensor<R>& a, const Tensor<R>& b) {
  detail::require_same_shape(a, b, "sub");
  detail::check_finite(a, "sub");
  detail::check_finite(b, "sub");
  std::vector<R> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return detail::make_op<R>("sub", a.shape(), std::move(out), {a, b}, [](Node<R>& n) {
    Node<R>* pa = n.parents[0].get();
    Node<R>* pb = n.parents[1].get();
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) pb->grad[i] -= n.grad[i];
    }
  });
}

template <class R>
Tensor<R> mul(const Tensor<R>& a, const Tensor<R>& b) {
  detail::require_same_shape(a, b, "mul");
  detail::check_finite(a, "mul");
  detail::check_finite(b, "mul");
  std::vector<R> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return detail::make_op<R>("mul", a.shape(), std::move(out), {a, b}, [](Node<R>& n) {
    Node<R>* pa = n.parents[0].get();
    Node<R>* pb = n.parents[1].get();
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i] * pb->values[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) pb->grad[i] += n.grad[i] * pa->values[i];
    }
  });
}

template <class R>
Tensor<R> scale(const Tensor<R>& a, double s) {
  detail::check_finite(a, "scale");
  std::vector<R> out(a.values().size());
  const R rs = static_cast<R>(s);
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * rs;
  return detail::make_op<R>("scale", a.shape(), std::move(out), {a}, [rs](Node<R>& n) {
    Node<R>* p = n.parents[0].get();
    p->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i] * rs;
  });
}

template <class R>
Tensor<R> relu(const Tensor<R>& a) {
  detail::check_finite(a, "relu");
  std::vector<R> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] > R(0) ? a.values()[i] : R(0);
  return detail::make_op<R>("relu", a.shape(), std::move(out), {a}, [](Node<R>& n) {
    Node<R>* p = n.parents[0].get();
    p->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i)
      if (p->values[i] > R(0)) p->grad[i] += n.grad[i];
  });
}

template <class R>
Tensor<R> leaky_relu(const Tensor<R>& a, double slope) {
  if (!(slope > 0.0 && slope < 1.0))
    throw ArgumentError("leaky_relu: slope must be in (0,1), got " + std::to_string(slope));
  detail::check_finite(a, "leaky_relu");
  const R s = static_cast<R>(slope);
  std::vector<R> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] > R(0) ? a.values()[i] : a.values()[i] * s;
  return detail::make_op<R>("leaky_relu", a.shape(), std::move(out), {a}, [s](Node<R>& n) {
    Node<R>* p = n.parents[0].get();
    p->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i)
      p->grad[i] += n.grad[i] * (p->values[i] > R(0) ? R(1) : s);
  });
}

template <class R>
Tensor<R> sigmoid(const Tensor<R>& a) {
  detail::check_finite(a, "sigmoid");
  std::vector<R> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) {
    const R x = a.values()[i];
    out[i] = x >= R(0) ? R(1) / (R(1) + std::exp(-x))
                       : std::exp(x) / (R(1) + std::exp(x));
  }
  return detail::make_op<R>("sigmoid", a.shape(), std::move(out), {a}, [](Node<R>& n) {
    Node<R>* p = n.parents[0].get();
    p->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) {
      const R y = n.values[i];
      p->grad[i] += n.grad[i] * y * (R(1) - y);
    }
  });
}

template <class R>
Tensor<R> square(const Tensor<R>& a) {
  detail::check_finite(a, "square");
  std::vector<R> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * a.values()[i];
  return detail::make_op<R>("square", a.shape(), std::move(out), {a}, [](Node<R>& n) {
    Node<R>* p = n.parents[0].get();
    p->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i] * R(2) * p->values[i];
  });
}

// Subgradient 0 at x == 0.
template <class R>
Tensor<R> sqrt(const Tensor<R>& a) {
  detail::check_finite(a, "sqrt");
  std::vector<R> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) {
    if (a.values()[i] < R(0)) throw NumericError("sqrt: negative input");
    out[i] = std::sqrt(a.values()[i]);
  }
  return detail::make_op<R>("sqrt", a.shape(), std::move(out), {a}, [](Node<R>& n) {
    Node<R>* p = n.parents[0].get();
    p->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i)
      if (n.values[i] > R(0)) p->grad[i] += n.grad[i] / (R(2) * n.values[i]);
  });
}

template <class R>
Tensor<R> reciprocal(const Tensor<R>& a) {
  detail::check_finite(a, "reciprocal");
  std::vector<R> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) {
    if (a.values()[i] == R(0)) throw NumericError("reciprocal: zero input");
    out[i] = R(1) / a.values()[i];
  }
  return detail::make_op<R>("reciprocal", a.shape(), std::move(out), {a}, [](Node<R>& n) {
    Node<R>* p = n.parents[0].get();
    p->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) p->grad[i] -= n.grad[i] * n.values[i] * n.values[i];
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

template <class R>
Tensor<R> matmul(const Tensor<R>& a, const Tensor<R>& b) {
  detail::require_2d(a, "matmul");
  detail::require_2d(b, "matmul");
  if (a.cols() != b.rows())
    throw ShapeError("matmul: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  detail::check_finite(a, "matmul");
  detail::check_finite(b, "matmul");
  const int64_t n = a.rows(), k = a.cols(), m = b.cols();
  std::vector<R> out(static_cast<size_t>(n * m));
  {
    detail::ConstMatMap<R> ma(a.values().data(), n, k);
    detail::ConstMatMap<R> mb(b.values().data(), k, m);
    detail::MatMap<R> mo(out.data(), n, m);
    mo.noalias() = ma * mb;
  }
  return detail::make_op<R>("matmul", {n, m}, std::move(out), {a, b}, [n, k, m](Node<R>& nd) {
    Node<R>* pa = nd.parents[0].get();
    Node<R>* pb = nd.parents[1].get();
    detail::ConstMatMap<R> g(nd.grad.data(), n, m);
    if (pa->requires_grad) {
      pa->ensure_grad();
      detail::ConstMatMap<R> mb(pb->values.data(), k, m);
      detail::MatMap<R> ga(pa->grad.data(), n, k);
      ga.noalias() += g * mb.transpose();
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      detail::ConstMatMap<R> ma(pa->values.data(), n, k);
      detail::MatMap<R> gb(pb->grad.data(), k, m);
      gb.noalias() += ma.transpose() * g;
    }
  });
}

template <class R>
Tensor<R> transpose_last2(const Tensor<R>& a) {
  detail::require_2d(a, "transpose_last2");
  const int64_t n = a.rows(), m = a.cols();
  std::vector<R> out(static_cast<size_t>(n * m));
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < m; ++j) out[static_cast<size_t>(j * n + i)] = a.at(i, j);
  return detail::make_op<R>("transpose_last2", {m, n}, std::move(out), {a}, [n, m](Node<R>& nd) {
    Node<R>* p = nd.parents[0].get();
    p->ensure_grad();
    for (int64_t j = 0; j < m; ++j)
      for (int64_t i = 0; i < n; ++i)
        p->grad[static_cast<size_t>(i * m + j)] += nd.grad[static_cast<size_t>(j * n + i)];
  });
}

// Broadcast-add a row vector [c] to every row of x [n,c].
template <class R>
Tensor<R> add_rowvec(const Tensor<R>& x, const Tensor<R>& v) {
  detail::require_2d(x, "add_rowvec");
  if (v.numel() != x.cols())
    throw ShapeError("add_rowvec: vector " + shape_str(v.shape()) + " vs cols of " +
                     shape_str(x.shape()));
  const int64_t n = x.rows(), c = x.cols();
  std::vector<R> out(x.values().size());
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < c; ++j)
      out[static_cast<size_t>(i * c + j)] = x.at(i, j) + v.value(j);
  return detail::make_op<R>("add_rowvec", x.shape(), std::move(out), {x, v}, [n, c](Node<R>& nd) {
    Node<R>* px = nd.parents[0].get();
    Node<R>* pv = nd.parents[1].get();
    if (px->requires_grad) {
      px->ensure_grad();
      for (size_t i = 0; i < nd.grad.size(); ++i) px->grad[i] += nd.grad[i];
    }
    if (pv->requires_grad) {
      pv->ensure_grad();
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < c; ++j)
          pv->grad[static_cast<size_t>(j)] += nd.grad[static_cast<size_t>(i * c + j)];
    }
  });
}

// Per-point linear layer y = x W (+ b). Realizes kernel-size-1 convolutions.
template <class R>
Tensor<R> linear(const Tensor<R>& x, const Tensor<R>& w) {
  return matmul(x, w);
}

template <class R>
Tensor<R> linear(const Tensor<R>& x, const Tensor<R>& w, const Tensor<R>& b) {
  return add_rowvec(matmul(x, w), b);
}

// ---------------------------------------------------------------------------
// Structure ops

template <class R>
Tensor<R> concat_rows(const std::vector<Tensor<R>>& parts) {
  if (parts.empty()) throw ArgumentError("concat_rows: no inputs");
  const int64_t c = parts[0].cols();
  int64_t n = 0;
  for (const auto& p : parts) {
    detail::require_2d(p, "concat_rows");
    if (p.cols() != c)
      throw ShapeError("concat_rows: column mismatch " + shape_str(parts[0].shape()) + " vs " +
                       shape_str(p.shape()));
    n += p.rows();
  }
  std::vector<R> out;
  out.reserve(static_cast<size_t>(n * c));
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  std::vector<int64_t> row_offsets;
  int64_t off = 0;
  for (const auto& p : parts) {
    row_offsets.push_back(off);
    off += p.rows();
  }
  return detail::make_op<R>("concat_rows", {n, c}, std::move(out), parts,
                            [row_offsets, c](Node<R>& nd) {
                              for (size_t k = 0; k < nd.parents.size(); ++k) {
                                Node<R>* p = nd.parents[k].get();
                                if (!p->requires_grad) continue;
                                p->ensure_grad();
                                const size_t base = static_cast<size_t>(row_offsets[k] * c);
                                for (size_t i = 0; i < p->grad.size(); ++i)
                                  p->grad[i] += nd.grad[base + i];
                              }
                            });
}

template <class R>
Tensor<R> concat_cols(const std::vector<Tensor<R>>& parts) {
  if (parts.empty()) throw ArgumentError("concat_cols: no inputs");
  const int64_t n = parts[0].rows();
  int64_t c = 0;
  for (const auto& p : parts) {
    detail::require_2d(p, "concat_cols");
    if (p.rows() != n)
      throw ShapeError("concat_cols: row mismatch " + shape_str(parts[0].shape()) + " vs " +
                       shape_str(p.shape()));
    c += p.cols();
  }
  std::vector<R> out(static_cast<size_t>(n * c));
  std::vector<int64_t> col_offsets;
  {
    int64_t off = 0;
    for (const auto& p : parts) {
      col_offsets.push_back(off);
      for (int64_t i = 0; i < n; ++i)
        std::copy(p.values().begin() + i * p.cols(), p.values().begin() + (i + 1) * p.cols(),
                  out.begin() + i * c + off);
      off += p.cols();
    }
  }
  std::vector<int64_t> widths;
  for (const auto& p : parts) widths.push_back(p.cols());
  return detail::make_op<R>("concat_cols", {n, c}, std::move(out), parts,
                            [col_offsets, widths, n, c](Node<R>& nd) {
                              for (size_t k = 0; k < nd.parents.size(); ++k) {
                                Node<R>* p = nd.parents[k].get();
                                if (!p->requires_grad) continue;
                                p->ensure_grad();
                                const int64_t w = widths[k], off = col_offsets[k];
                                for (int64_t i = 0; i < n; ++i)
                                  for (int64_t j = 0; j < w; ++j)
                                    p->grad[static_cast<size_t>(i * w + j)] +=
                                        nd.grad[static_cast<size_t>(i * c + off + j)];
                              }
                            });
}

template <class R>
Tensor<R> gather_rows(const Tensor<R>& x, std::vector<int64_t> indices) {
  detail::require_2d(x, "gather_rows");
  const int64_t n = x.rows(), c = x.cols();
  for (int64_t i : indices)
    if (i < 0 || i >= n)
      throw ArgumentError("gather_rows: index " + std::to_string(i) + " out of range [0," +
                          std::to_string(n) + ")");
  const int64_t q = static_cast<int64_t>(indices.size());
  std::vector<R> out(static_cast<size_t>(q * c));
  for (int64_t i = 0; i < q; ++i)
    std::copy(x.values().begin() + indices[i] * c, x.values().begin() + (indices[i] + 1) * c,
              out.begin() + i * c);
  return detail::make_op<R>("gather_rows", {q, c}, std::move(out), {x},
                            [indices = std::move(indices), c](Node<R>& nd) {
                              Node<R>* p = nd.parents[0].get();
                              p->ensure_grad();
                              for (size_t i = 0; i < indices.size(); ++i)
                                for (int64_t j = 0; j < c; ++j)
                                  p->grad[static_cast<size_t>(indices[i] * c + j)] +=
                                      nd.grad[i * static_cast<size_t>(c) + j];
                            });
}

template <class R>
Tensor<R> reshape(const Tensor<R>& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  std::vector<R> out = x.values();
  return detail::make_op<R>("reshape", std::move(shape), std::move(out), {x}, [](Node<R>& nd) {
    Node<R>* p = nd.parents[0].get();
    p->ensure_grad();
    for (size_t i = 0; i < nd.grad.size(); ++i) p->grad[i] += nd.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions and row-structured ops

template <class R>
Tensor<R> reduce_sum(const Tensor<R>& x) {
  detail::check_finite(x, "reduce_sum");
  R s = R(0);
  for (R v : x.values()) s += v;
  return detail::make_op<R>("reduce_sum", {1}, {s}, {x}, [](Node<R>& nd) {
    Node<R>* p = nd.parents[0].get();
    p->ensure_grad();
    for (size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += nd.grad[0];
  });
}

template <class R>
Tensor<R> reduce_mean(const Tensor<R>& x) {
  detail::check_finite(x, "reduce_mean");
  R s = R(0);
  for (R v : x.values()) s += v;
  const R inv = R(1) / static_cast<R>(x.numel());
  return detail::make_op<R>("reduce_mean", {1}, {s * inv}, {x}, [inv](Node<R>& nd) {
    Node<R>* p = nd.parents[0].get();
    p->ensure_grad();
    for (size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += nd.grad[0] * inv;
  });
}

// Per-row minimum over columns -> [n,1]. Ties break to the lowest column;
// the gradient is routed to the selected element only.
template <class R>
Tensor<R> min_over_rows(const Tensor<R>& x, std::vector<int64_t>* argmin_out = nullptr) {
  detail::require_2d(x, "min_over_rows_with_index");
  detail::check_finite(x, "min_over_rows_with_index");
  const int64_t n = x.rows(), c = x.cols();
  if (c == 0) throw ShapeError("min_over_rows_with_index: zero columns");
  std::vector<R> out(static_cast<size_t>(n));
  std::vector<int64_t> arg(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    R best = x.at(i, 0);
    int64_t bj = 0;
    for (int64_t j = 1; j < c; ++j)
      if (x.at(i, j) < best) {
        best = x.at(i, j);
        bj = j;
      }
    out[static_cast<size_t>(i)] = best;
    arg[static_cast<size_t>(i)] = bj;
  }
  if (argmin_out) *argmin_out = arg;
  return detail::make_op<R>("min_over_rows_with_index", {n, 1}, std::move(out), {x},
                            [arg = std::move(arg), c](Node<R>& nd) {
                              Node<R>* p = nd.parents[0].get();
                              p->ensure_grad();
                              for (size_t i = 0; i < arg.size(); ++i)
                                p->grad[i * static_cast<size_t>(c) +
                                        static_cast<size_t>(arg[i])] += nd.grad[i];
                            });
}

template <class R>
Tensor<R> softmax_lastdim(const Tensor<R>& x) {
  detail::require_2d(x, "softmax_lastdim");
  detail::check_finite(x, "softmax_lastdim");
  const int64_t n = x.rows(), c = x.cols();
  std::vector<R> out(x.values().size());
  for (int64_t i = 0; i < n; ++i) {
    R mx = x.at(i, 0);
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, x.at(i, j));
    R denom = R(0);
    for (int64_t j = 0; j < c; ++j) {
      const R e = std::exp(x.at(i, j) - mx);
      out[static_cast<size_t>(i * c + j)] = e;
      denom += e;
    }
    const R inv = R(1) / denom;
    for (int64_t j = 0; j < c; ++j) out[static_cast<size_t>(i * c + j)] *= inv;
  }
  return detail::make_op<R>("softmax_lastdim", x.shape(), std::move(out), {x}, [n, c](Node<R>& nd) {
    Node<R>* p = nd.parents[0].get();
    p->ensure_grad();
    for (int64_t i = 0; i < n; ++i) {
      R dot = R(0);
      for (int64_t j = 0; j < c; ++j) {
        const size_t k = static_cast<size_t>(i * c + j);
        dot += nd.grad[k] * nd.values[k];
      }
      for (int64_t j = 0; j < c; ++j) {
        const size_t k = static_cast<size_t>(i * c + j);
        p->grad[k] += (nd.grad[k] - dot) * nd.values[k];
      }
    }
  });
}

// Row L2 norms -> [n,1]. Subgradient 0 at zero rows.
template <class R>
Tensor<R> l2norm_rows(const Tensor<R>& x) {
  detail::require_2d(x, "l2norm_rows");
  detail::check_finite(x, "l2norm_rows");
  const int64_t n = x.rows(), c = x.cols();
  std::vector<R> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    R s = R(0);
    for (int64_t j = 0; j < c; ++j) s += x.at(i, j) * x.at(i, j);
    out[static_cast<size_t>(i)] = std::sqrt(s);
  }
  return detail::make_op<R>("l2norm_rows", {n, 1}, std::move(out), {x}, [n, c](Node<R>& nd) {
    Node<R>* p = nd.parents[0].get();
    p->ensure_grad();
    for (int64_t i = 0; i < n; ++i) {
      const R norm = nd.values[static_cast<size_t>(i)];
      if (norm <= R(0)) continue;
      const R g = nd.grad[static_cast<size_t>(i)] / norm;
      for (int64_t j = 0; j < c; ++j)
        p->grad[static_cast<size_t>(i * c + j)] += g * p->values[static_cast<size_t>(i * c + j)];
    }
  });
}

// All-pairs L2 distances: x [n,c], y [m,c] -> [n,m].
template <class R>
Tensor<R> pairwise_dist(const Tensor<R>& x, const Tensor<R>& y) {
  detail::require_2d(x, "pairwise_dist");
  detail::require_2d(y, "pairwise_dist");
  if (x.cols() != y.cols())
    throw ShapeError("pairwise_dist: column mismatch " + shape_str(x.shape()) + " vs " +
                     shape_str(y.shape()));
  detail::check_finite(x, "pairwise_dist");
  detail::check_finite(y, "pairwise_dist");
  const int64_t n = x.rows(), m = y.rows(), c = x.cols();
  std::vector<R> out(static_cast<size_t>(n * m));
  const R* xv = x.values().data();
  const R* yv = y.values().data();
  for (int64_t i = 0; i < n; ++i) {
    const R* xi = xv + i * c;
    R* row = out.data() + i * m;
    for (int64_t j = 0; j < m; ++j) {
      const R* yj = yv + j * c;
      R s = R(0);
      for (int64_t k = 0; k < c; ++k) {
        const R d = xi[k] - yj[k];
        s += d * d;
      }
      row[j] = std::sqrt(s);
    }
  }
  return detail::make_op<R>("pairwise_dist", {n, m}, std::move(out), {x, y}, [n, m, c](Node<R>& nd) {
    Node<R>* px = nd.parents[0].get();
    Node<R>* py = nd.parents[1].get();
    if (px->requires_grad) px->ensure_grad();
    if (py->requires_grad) py->ensure_grad();
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j < m; ++j) {
        const size_t k = static_cast<size_t>(i * m + j);
        const R dist = nd.values[k];
        if (nd.grad[k] == R(0) || dist <= R(0)) continue;
        const R g = nd.grad[k] / dist;
        for (int64_t d = 0; d < c; ++d) {
          const R diff = px->values[static_cast<size_t>(i * c + d)] -
                         py->values[static_cast<size_t>(j * c + d)];
          if (px->requires_grad) px->grad[static_cast<size_t>(i * c + d)] += g * diff;
          if (py->requires_grad) py->grad[static_cast<size_t>(j * c + d)] -= g * diff;
        }
      }
    }
  });
}

// Per-row layer normalization with learned affine: rows of x are normalized
// to mean 0, variance 1 over channels, then scaled by gamma and shifted by
// beta (both shape [c]).
template <class R>
Tensor<R> layer_norm_rows(const Tensor<R>& x, const Tensor<R>& gamma, const Tensor<R>& beta,
                          double eps = 1e-5) {
  detail::require_2d(x, "layer_norm_rows");
  const int64_t n = x.rows(), c = x.cols();
  if (gamma.numel() != c || beta.numel() != c)
    throw ShapeError("layer_norm_rows: affine params must have " + std::to_string(c) +
                     " elements");
  detail::check_finite(x, "layer_norm_rows");
  const R reps = static_cast<R>(eps);
  std::vector<R> out(x.values().size());
  std::vector<R> inv_sigma(static_cast<size_t>(n));
  std::vector<R> xhat(x.values().size());
  for (int64_t i = 0; i < n; ++i) {
    R mean = R(0);
    for (int64_t j = 0; j < c; ++j) mean += x.at(i, j);
    mean /= static_cast<R>(c);
    R var = R(0);
    for (int64_t j = 0; j < c; ++j) {
      const R d = x.at(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<R>(c);
    const R is = R(1) / std::sqrt(var + reps);
    inv_sigma[static_cast<size_t>(i)] = is;
    for (int64_t j = 0; j < c; ++j) {
      const size_t k = static_cast<size_t>(i * c + j);
      xhat[k] = (x.at(i, j) - mean) * is;
      out[k] = xhat[k] * gamma.value(j) + beta.value(j);
    }
  }
  return detail::make_op<R>(
      "layer_norm_rows", x.shape(), std::move(out), {x, gamma, beta},
      [n, c, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)](Node<R>& nd) {
        Node<R>* px = nd.parents[0].get();
        Node<R>* pg = nd.parents[1].get();
        Node<R>* pb = nd.parents[2].get();
        if (pg->requires_grad) pg->ensure_grad();
        if (pb->requires_grad) pb->ensure_grad();
        if (px->requires_grad) px->ensure_grad();
        for (int64_t i = 0; i < n; ++i) {
          // dxhat = dy * gamma; dx = (dxhat - mean(dxhat) - xhat*mean(dxhat*xhat)) / sigma
          R mean_dxhat = R(0), mean_dxhat_xhat = R(0);
          for (int64_t j = 0; j < c; ++j) {
            const size_t k = static_cast<size_t>(i * c + j);
            const R dy = nd.grad[k];
            if (pg->requires_grad) pg->grad[static_cast<size_t>(j)] += dy * xhat[k];
            if (pb->requires_grad) pb->grad[static_cast<size_t>(j)] += dy;
            const R dxh = dy * pg->values[static_cast<size_t>(j)];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xhat[k];
          }
          if (!px->requires_grad) continue;
          mean_dxhat /= static_cast<R>(c);
          mean_dxhat_xhat /= static_cast<R>(c);
          const R is = inv_sigma[static_cast<size_t>(i)];
          for (int64_t j = 0; j < c; ++j) {
            const size_t k = static_cast<size_t>(i * c + j);
            const R dxh = nd.grad[k] * pg->values[static_cast<size_t>(j)];
            px->grad[k] += (dxh - mean_dxhat - xhat[k] * mean_dxhat_xhat) * is;
          }
        }
      });
}

// out[q,:] = sum_k weights[q,k] * values[indices[q*K+k],:]. Differentiable in
// both values and weights; indices are fixed. Backbone of flow upsampling,
// feature interpolation, and fusion.
template <class R>
Tensor<R> gather_weighted_sum(const Tensor<R>& values, std::vector<int64_t> indices,
                              const Tensor<R>& weights) {
  detail::require_2d(values, "gather_weighted_sum");
  detail::require_2d(weights, "gather_weighted_sum");
  const int64_t q = weights.rows(), kk = weights.cols(), c = values.cols();
  if (static_cast<int64_t>(indices.size()) != q * kk)
    throw ShapeError("gather_weighted_sum: indices size " + std::to_string(indices.size()) +
                     " != " + std::to_string(q * kk));
  const int64_t vrows = values.rows();
  for (int64_t i : indices)
    if (i < 0 || i >= vrows)
      throw ArgumentError("gather_weighted_sum: index " + std::to_string(i) + " out of range");
  std::vector<R> out(static_cast<size_t>(q * c), R(0));
  for (int64_t i = 0; i < q; ++i)
    for (int64_t k = 0; k < kk; ++k) {
      const R w = weights.at(i, k);
      const int64_t src = indices[static_cast<size_t>(i * kk + k)];
      for (int64_t j = 0; j < c; ++j)
        out[static_cast<size_t>(i * c + j)] += w * values.at(src, j);
    }
  return detail::make_op<R>(
      "gather_weighted_sum", {q, c}, std::move(out), {values, weights},
      [indices = std::move(indices), q, kk, c](Node<R>& nd) {
        Node<R>* pv = nd.parents[0].get();
        Node<R>* pw = nd.parents[1].get();
        if (pv->requires_grad) pv->ensure_grad();
        if (pw->requires_grad) pw->ensure_grad();
        for (int64_t i = 0; i < q; ++i)
          for (int64_t k = 0; k < kk; ++k) {
            const size_t wi = static_cast<size_t>(i * kk + k);
            const int64_t src = indices[wi];
            if (pv->requires_grad) {
              const R w = pw->values[wi];
              for (int64_t j = 0; j < c; ++j)
                pv->grad[static_cast<size_t>(src * c + j)] +=
                    w * nd.grad[static_cast<size_t>(i * c + j)];
            }
            if (pw->requires_grad) {
              R dot = R(0);
              for (int64_t j = 0; j < c; ++j)
                dot += nd.grad[static_cast<size_t>(i * c + j)] *
                       pv->values[static_cast<size_t>(src * c + j)];
              pw->grad[wi] += dot;
            }
          }
      });
}

// Max over consecutive row groups of size k: x [(q*k),c] -> [q,c]. Gradient
// routes to the argmax row (lowest row on ties).
template <class R>
Tensor<R> rowgroup_max(const Tensor<R>& x, int64_t k) {
  detail::require_2d(x, "rowgroup_max");
  if (k < 1 || x.rows() % k != 0)
    throw ShapeError("rowgroup_max: rows " + std::to_string(x.rows()) +
                     " not divisible by group size " + std::to_string(k));
  const int64_t q = x.rows() / k, c = x.cols();
  std::vector<R> out(static_cast<size_t>(q * c));
  std::vector<int32_t> arg(static_cast<size_t>(q * c));
  for (int64_t g = 0; g < q; ++g)
    for (int64_t j = 0; j < c; ++j) {
      R best = x.at(g * k, j);
      int32_t bi = 0;
      for (int64_t r = 1; r < k; ++r)
        if (x.at(g * k + r, j) > best) {
          best = x.at(g * k + r, j);
          bi = static_cast<int32_t>(r);
        }
      out[static_cast<size_t>(g * c + j)] = best;
      arg[static_cast<size_t>(g * c + j)] = bi;
    }
  return detail::make_op<R>("rowgroup_max", {q, c}, std::move(out), {x},
                            [arg = std::move(arg), q, k, c](Node<R>& nd) {
                              Node<R>* p = nd.parents[0].get();
                              p->ensure_grad();
                              for (int64_t g = 0; g < q; ++g)
                                for (int64_t j = 0; j < c; ++j) {
                                  const size_t o = static_cast<size_t>(g * c + j);
                                  p->grad[static_cast<size_t>((g * k + arg[o]) * c + j)] +=
                                      nd.grad[o];
                                }
                            });
}

// Sum over consecutive row groups of size k: x [(q*k),c] -> [q,c].
template <class R>
Tensor<R> rowgroup_sum(const Tensor<R>& x, int64_t k) {
  detail::require_2d(x, "rowgroup_sum");
  if (k < 1 || x.rows() % k != 0)
    throw ShapeError("rowgroup_sum: rows " + std::to_string(x.rows()) +
                     " not divisible by group size " + std::to_string(k));
  const int64_t q = x.rows() / k, c = x.cols();
  std::vector<R> out(static_cast<size_t>(q * c), R(0));
  for (int64_t g = 0; g < q; ++g)
    for (int64_t r = 0; r < k; ++r)
      for (int64_t j = 0; j < c; ++j)
        out[static_cast<size_t>(g * c + j)] += x.at(g * k + r, j);
  return detail::make_op<R>("rowgroup_sum", {q, c}, std::move(out), {x}, [q, k, c](Node<R>& nd) {
    Node<R>* p = nd.parents[0].get();
    p->ensure_grad();
    for (int64_t g = 0; g < q; ++g)
      for (int64_t r = 0; r < k; ++r)
        for (int64_t j = 0; j < c; ++j)
          p->grad[static_cast<size_t>((g * k + r) * c + j)] +=
              nd.grad[static_cast<size_t>(g * c + j)];
  });
}

// Softmax across each row group of size k, independently per channel.
// Used by vector attention where weights are per-channel.
template <class R>
Tensor<R> rowgroup_softmax(const Tensor<R>& x, int64_t k) {
  detail::require_2d(x, "rowgroup_softmax");
  if (k < 1 || x.rows() % k != 0)
    throw ShapeError("rowgroup_softmax: rows " + std::to_string(x.rows()) +
                     " not divisible by group size " + std::to_string(k));
  detail::check_finite(x, "rowgroup_softmax");
  const int64_t q = x.rows() / k, c = x.cols();
  std::vector<R> out(x.values().size());
  for (int64_t g = 0; g < q; ++g)
    for (int64_t j = 0; j < c; ++j) {
      R mx = x.at(g * k, j);
      for (int64_t r = 1; r < k; ++r) mx = std::max(mx, x.at(g * k + r, j));
      R denom = R(0);
      for (int64_t r = 0; r < k; ++r) {
        const R e = std::exp(x.at(g * k + r, j) - mx);
        out[static_cast<size_t>((g * k + r) * c + j)] = e;
        denom += e;
      }
      const R inv = R(1) / denom;
      for (int64_t r = 0; r < k; ++r) out[static_cast<size_t>((g * k + r) * c + j)] *= inv;
    }
  return detail::make_op<R>("rowgroup_softmax", x.shape(), std::move(out), {x},
                            [q, k, c](Node<R>& nd) {
                              Node<R>* p = nd.parents[0].get();
                              p->ensure_grad();
                              for (int64_t g = 0; g < q; ++g)
                                for (int64_t j = 0; j < c; ++j) {
                                  R dot = R(0);
                                  for (int64_t r = 0; r < k; ++r) {
                                    const size_t i = static_cast<size_t>((g * k + r) * c + j);
                                    dot += nd.grad[i] * nd.values[i];
                                  }
                                  for (int64_t r = 0; r < k; ++r) {
                                    const size_t i = static_cast<size_t>((g * k + r) * c + j);
                                    p->grad[i] += (nd.grad[i] - dot) * nd.values[i];
                                  }
                                }
                            });
}

// Convenience: sum of squares as a scalar.
template <class R>
Tensor<R> sum_squares(const Tensor<R>& x) {
  return reduce_sum(square(x));
}

}  // namespace fpci::ad
