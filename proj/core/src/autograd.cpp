#include "maeday/autograd.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace maeday {

namespace {

thread_local bool g_grad_enabled = true;

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMatrix<T>>;

template <typename T>
ConstMap<T> as_matrix(const T* data, std::size_t rows, std::size_t cols) {
  return ConstMap<T>(data, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename T>
MutMap<T> as_matrix(T* data, std::size_t rows, std::size_t cols) {
  return MutMap<T>(data, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

template <typename T>
void require_matrix(const Var<T>& x, const char* op) {
  require(x.defined(), std::string(op) + ": undefined input");
  require(x.value().rank() == 2, std::string(op) + ": expected a matrix, got shape " + shape_to_string(x.shape()));
}

// Gradient buffer of a parent, or nullptr if it does not take gradients.
template <typename T>
T* grad_of(detail::Node<T>& node) {
  return node.requires_grad ? node.value.ensure_grad().data() : nullptr;
}

template <typename T>
Var<T> record(Tensor<T> out, std::vector<Var<T>> inputs, std::function<void(detail::Node<T>&)> backward) {
  auto node = std::make_shared<detail::Node<T>>();
  node->value = std::move(out);
  if (g_grad_enabled) {
    const bool needs = std::any_of(inputs.begin(), inputs.end(), [](const Var<T>& v) { return v.requires_grad(); });
    if (needs) {
      node->requires_grad = true;
      node->parents.reserve(inputs.size());
      for (auto& v : inputs) node->parents.push_back(v.shared_node());
      node->backward = std::move(backward);
    }
  }
  return Var<T>::from_node(std::move(node));
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Var<T> Var<T>::constant(Tensor<T> value) {
  return leaf(std::move(value), false);
}

template <typename T>
Var<T> Var<T>::leaf(Tensor<T> value, bool requires_grad) {
  auto node = std::make_shared<detail::Node<T>>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return from_node(std::move(node));
}

template <typename T>
Var<T> Var<T>::from_node(std::shared_ptr<detail::Node<T>> node) {
  Var v;
  v.node_ = std::move(node);
  return v;
}

template <typename T>
void Var<T>::backward() const {
  require(defined(), "backward: undefined value");
  require(value().size() == 1, "backward: root must hold a single element, got shape " + shape_to_string(shape()));
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<detail::Node<T>*> order;
  std::unordered_set<detail::Node<T>*> visited;
  std::vector<std::pair<detail::Node<T>*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [current, next] = stack.back();
    if (next < current->parents.size()) {
      detail::Node<T>* parent = current->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(current);
      stack.pop_back();
    }
  }

  node_->value.ensure_grad()[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node<T>* n = *it;
    if (n->backward && n->value.has_grad()) n->backward(*n);
  }
}

template <typename T>
Parameter<T>::Parameter(Tensor<T> value, bool trainable) : var_(Var<T>::leaf(std::move(value), trainable)) {}

template <typename T>
Parameter<T>::Parameter(const Parameter& other) {
  if (other.var_.defined()) {
    Tensor<T> copy(other.value().shape(), other.value().storage());
    var_ = Var<T>::leaf(std::move(copy), other.trainable());
  }
}

template <typename T>
Parameter<T>& Parameter<T>::operator=(const Parameter& other) {
  if (this != &other) *this = Parameter(other);
  return *this;
}

template <typename T>
void Parameter<T>::set_trainable(bool trainable) {
  var_.node()->requires_grad = trainable;
  if (!trainable) var_.mutable_value().drop_grad();
}

template <typename T>
void Parameter<T>::zero_grad() {
  if (var_.defined()) var_.mutable_value().zero_grad();
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  require(b.shape()[0] == k, "matmul: inner extents differ: " + shape_to_string(a.shape()) + " x " +
                                 shape_to_string(b.shape()));
  Tensor<T> out({m, n});
  as_matrix(out.data(), m, n).noalias() = as_matrix(a.value().data(), m, k) * as_matrix(b.value().data(), k, n);
  return record<T>(std::move(out), {a, b}, [m, k, n](detail::Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    auto g = as_matrix(self.value.grad().data(), m, n);
    if (T* ga = grad_of(pa)) as_matrix(ga, m, k).noalias() += g * as_matrix(pb.value.data(), k, n).transpose();
    if (T* gb = grad_of(pb)) as_matrix(gb, k, n).noalias() += as_matrix(pa.value.data(), m, k).transpose() * g;
  });
}

template <typename T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  require(b.shape()[1] == k, "matmul_nt: inner extents differ: " + shape_to_string(a.shape()) + " x " +
                                 shape_to_string(b.shape()) + "^T");
  Tensor<T> out({m, n});
  as_matrix(out.data(), m, n).noalias() =
      as_matrix(a.value().data(), m, k) * as_matrix(b.value().data(), n, k).transpose();
  return record<T>(std::move(out), {a, b}, [m, k, n](detail::Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    auto g = as_matrix(self.value.grad().data(), m, n);
    if (T* ga = grad_of(pa)) as_matrix(ga, m, k).noalias() += g * as_matrix(pb.value.data(), n, k);
    if (T* gb = grad_of(pb)) as_matrix(gb, n, k).noalias() += g.transpose() * as_matrix(pa.value.data(), m, k);
  });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor<T> out({n, m});
  as_matrix(out.data(), n, m) = as_matrix(a.value().data(), m, n).transpose();
  return record<T>(std::move(out), {a}, [m, n](detail::Node<T>& self) {
    if (T* ga = grad_of(*self.parents[0]))
      as_matrix(ga, m, n) += as_matrix(self.value.grad().data(), n, m).transpose();
  });
}

namespace {

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  require(a.defined() && b.defined(), std::string(op) + ": undefined input");
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                                      shape_to_string(b.shape()));
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = a.value()[i] + b.value()[i];
  return record<T>(std::move(out), {a, b}, [n](detail::Node<T>& self) {
    const T* g = self.value.grad().data();
    for (auto& p : self.parents)
      if (T* gp = grad_of(*p))
        for (std::size_t i = 0; i < n; ++i) gp[i] += g[i];
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "sub");
  Tensor<T> out(a.shape());
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = a.value()[i] - b.value()[i];
  return record<T>(std::move(out), {a, b}, [n](detail::Node<T>& self) {
    const T* g = self.value.grad().data();
    if (T* ga = grad_of(*self.parents[0]))
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
    if (T* gb = grad_of(*self.parents[1]))
      for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = a.value()[i] * b.value()[i];
  return record<T>(std::move(out), {a, b}, [n](detail::Node<T>& self) {
    const T* g = self.value.grad().data();
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (T* ga = grad_of(pa))
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * pb.value[i];
    if (T* gb = grad_of(pb))
      for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * pa.value[i];
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  require(a.defined(), "scale: undefined input");
  Tensor<T> out(a.shape());
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = a.value()[i] * factor;
  return record<T>(std::move(out), {a}, [n, factor](detail::Node<T>& self) {
    const T* g = self.value.grad().data();
    if (T* ga = grad_of(*self.parents[0]))
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * factor;
  });
}

template <typename T>
Var<T> add_row(const Var<T>& x, const Var<T>& bias) {
  require(x.defined() && bias.defined(), "add_row: undefined input");
  const std::size_t d = x.value().cols(), rows = x.value().rows();
  require(bias.value().size() == d, "add_row: bias length " + std::to_string(bias.value().size()) +
                                        " does not match row length " + std::to_string(d));
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] = x.value()[r * d + c] + bias.value()[c];
  return record<T>(std::move(out), {x, bias}, [rows, d](detail::Node<T>& self) {
    const T* g = self.value.grad().data();
    if (T* gx = grad_of(*self.parents[0]))
      for (std::size_t i = 0; i < rows * d; ++i) gx[i] += g[i];
    if (T* gb = grad_of(*self.parents[1]))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < d; ++c) gb[c] += g[r * d + c];
  });
}

template <typename T>
Var<T> layernorm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps) {
  require(x.defined() && gain.defined() && bias.defined(), "layernorm: undefined input");
  require(eps > T{0}, "layernorm: eps must be positive");
  const std::size_t d = x.value().cols(), rows = x.value().rows();
  require(gain.value().size() == d && bias.value().size() == d,
          "layernorm: gain/bias length must equal row length " + std::to_string(d));
  Tensor<T> out(x.shape());
  std::vector<T> xhat(rows * d);
  std::vector<T> rstd(rows);
  const T* xv = x.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv + r * d;
    T mu = 0;
    for (std::size_t c = 0; c < d; ++c) mu += row[c];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::size_t c = 0; c < d; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<T>(d);
    rstd[r] = T{1} / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      xhat[r * d + c] = (row[c] - mu) * rstd[r];
      out[r * d + c] = xhat[r * d + c] * gain.value()[c] + bias.value()[c];
    }
  }
  return record<T>(std::move(out), {x, gain, bias},
                   [rows, d, xhat = std::move(xhat), rstd = std::move(rstd)](detail::Node<T>& self) {
                     const T* g = self.value.grad().data();
                     auto& px = *self.parents[0];
                     auto& pg = *self.parents[1];
                     if (T* gx = grad_of(px)) {
                       std::vector<T> dxhat(d);
                       for (std::size_t r = 0; r < rows; ++r) {
                         T mean_d = 0, mean_dx = 0;
                         for (std::size_t c = 0; c < d; ++c) {
                           dxhat[c] = g[r * d + c] * pg.value[c];
                           mean_d += dxhat[c];
                           mean_dx += dxhat[c] * xhat[r * d + c];
                         }
                         mean_d /= static_cast<T>(d);
                         mean_dx /= static_cast<T>(d);
                         for (std::size_t c = 0; c < d; ++c)
                           gx[r * d + c] += rstd[r] * (dxhat[c] - mean_d - xhat[r * d + c] * mean_dx);
                       }
                     }
                     if (T* gg = grad_of(pg))
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t c = 0; c < d; ++c) gg[c] += g[r * d + c] * xhat[r * d + c];
                     if (T* gb = grad_of(*self.parents[2]))
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t c = 0; c < d; ++c) gb[c] += g[r * d + c];
                   });
}

template <typename T>
Var<T> softmax(const Var<T>& x) {
  require(x.defined(), "softmax: undefined input");
  const std::size_t d = x.value().cols(), rows = x.value().rows();
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = x.value().data() + r * d;
    T* o = out.data() + r * d;
    const T peak = *std::max_element(row, row + d);
    T total = 0;
    for (std::size_t c = 0; c < d; ++c) total += (o[c] = std::exp(row[c] - peak));
    for (std::size_t c = 0; c < d; ++c) o[c] /= total;
  }
  return record<T>(std::move(out), {x}, [rows, d](detail::Node<T>& self) {
    T* gx = grad_of(*self.parents[0]);
    if (!gx) return;
    const T* g = self.value.grad().data();
    const T* y = self.value.data();
    for (std::size_t r = 0; r < rows; ++r) {
      T dot = 0;
      for (std::size_t c = 0; c < d; ++c) dot += g[r * d + c] * y[r * d + c];
      for (std::size_t c = 0; c < d; ++c) gx[r * d + c] += y[r * d + c] * (g[r * d + c] - dot);
    }
  });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  require(x.defined(), "gelu: undefined input");
  constexpr T kAlpha = T(0.7978845608028654);  // sqrt(2 / pi)
  constexpr T kBeta = T(0.044715);
  const std::size_t n = x.value().size();
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const T v = x.value()[i];
    out[i] = T(0.5) * v * (T{1} + std::tanh(kAlpha * (v + kBeta * v * v * v)));
  }
  return record<T>(std::move(out), {x}, [n](detail::Node<T>& self) {
    auto& px = *self.parents[0];
    T* gx = grad_of(px);
    if (!gx) return;
    const T* g = self.value.grad().data();
    for (std::size_t i = 0; i < n; ++i) {
      const T v = px.value[i];
      const T t = std::tanh(kAlpha * (v + kBeta * v * v * v));
      const T dt = (T{1} - t * t) * kAlpha * (T{1} + T{3} * kBeta * v * v);
      gx[i] += g[i] * (T(0.5) * (T{1} + t) + T(0.5) * v * dt);
    }
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  require(x.defined(), "reshape: undefined input");
  Tensor<T> out = x.value().reshaped(std::move(shape));
  const std::size_t n = out.size();
  return record<T>(std::move(out), {x}, [n](detail::Node<T>& self) {
    const T* g = self.value.grad().data();
    if (T* gx = grad_of(*self.parents[0]))
      for (std::size_t i = 0; i < n; ++i) gx[i] += g[i];
  });
}

template <typename T>
Var<T> gather_rows(const Var<T>& x, std::span<const std::size_t> index) {
  require_matrix(x, "gather_rows");
  const std::size_t rows = x.shape()[0], d = x.shape()[1];
  require(!index.empty(), "gather_rows: empty index list");
  for (auto i : index)
    require(i < rows, "gather_rows: index " + std::to_string(i) + " out of range for " + std::to_string(rows) + " rows");
  Tensor<T> out({index.size(), d});
  for (std::size_t k = 0; k < index.size(); ++k)
    std::copy_n(x.value().data() + index[k] * d, d, out.data() + k * d);
  std::vector<std::size_t> idx(index.begin(), index.end());
  return record<T>(std::move(out), {x}, [d, idx = std::move(idx)](detail::Node<T>& self) {
    T* gx = grad_of(*self.parents[0]);
    if (!gx) return;
    const T* g = self.value.grad().data();
    for (std::size_t k = 0; k < idx.size(); ++k)
      for (std::size_t c = 0; c < d; ++c) gx[idx[k] * d + c] += g[k * d + c];
  });
}

template <typename T>
Var<T> scatter_rows(const Var<T>& src, std::span<const std::size_t> index, std::size_t n_rows) {
  require_matrix(src, "scatter_rows");
  const std::size_t k = src.shape()[0], d = src.shape()[1];
  require(index.size() == k, "scatter_rows: index count must equal source rows");
  require(n_rows > 0, "scatter_rows: target must have rows");
  std::vector<bool> used(n_rows, false);
  for (auto i : index) {
    require(i < n_rows, "scatter_rows: index " + std::to_string(i) + " out of range for " + std::to_string(n_rows) + " rows");
    require(!used[i], "scatter_rows: duplicate index " + std::to_string(i));
    used[i] = true;
  }
  Tensor<T> out({n_rows, d});
  for (std::size_t r = 0; r < k; ++r) std::copy_n(src.value().data() + r * d, d, out.data() + index[r] * d);
  std::vector<std::size_t> idx(index.begin(), index.end());
  return record<T>(std::move(out), {src}, [d, idx = std::move(idx)](detail::Node<T>& self) {
    T* gs = grad_of(*self.parents[0]);
    if (!gs) return;
    const T* g = self.value.grad().data();
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t c = 0; c < d; ++c) gs[r * d + c] += g[idx[r] * d + c];
  });
}

template <typename T>
Var<T> broadcast_rows(const Var<T>& v, std::size_t n) {
  require(v.defined(), "broadcast_rows: undefined input");
  require(n > 0, "broadcast_rows: row count must be positive");
  const std::size_t d = v.value().size();
  Tensor<T> out({n, d});
  for (std::size_t r = 0; r < n; ++r) std::copy_n(v.value().data(), d, out.data() + r * d);
  return record<T>(std::move(out), {v}, [n, d](detail::Node<T>& self) {
    T* gv = grad_of(*self.parents[0]);
    if (!gv) return;
    const T* g = self.value.grad().data();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) gv[c] += g[r * d + c];
  });
}

template <typename T>
Var<T> slice_cols(const Var<T>& x, std::size_t start, std::size_t count) {
  require_matrix(x, "slice_cols");
  const std::size_t rows = x.shape()[0], d = x.shape()[1];
  require(count > 0 && start + count <= d, "slice_cols: columns [" + std::to_string(start) + ", " +
                                               std::to_string(start + count) + ") out of range for " +
                                               std::to_string(d));
  Tensor<T> out({rows, count});
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(x.value().data() + r * d + start, count, out.data() + r * count);
  return record<T>(std::move(out), {x}, [rows, d, start, count](detail::Node<T>& self) {
    T* gx = grad_of(*self.parents[0]);
    if (!gx) return;
    const T* g = self.value.grad().data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < count; ++c) gx[r * d + start + c] += g[r * count + c];
  });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t rows = parts.front().value().rank() == 2 ? parts.front().shape()[0] : 0;
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    require_matrix(p, "concat_cols");
    require(p.shape()[0] == rows, "concat_cols: row counts differ");
    widths.push_back(p.shape()[1]);
    total += p.shape()[1];
  }
  Tensor<T> out({rows, total});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.shape()[1];
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(p.value().data() + r * w, w, out.data() + r * total + offset);
    offset += w;
  }
  return record<T>(std::move(out), parts, [rows, total, widths = std::move(widths)](detail::Node<T>& self) {
    const T* g = self.value.grad().data();
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      const std::size_t w = widths[k];
      if (T* gp = grad_of(*self.parents[k]))
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < w; ++c) gp[r * w + c] += g[r * total + off + c];
      off += w;
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  require(x.defined(), "sum: undefined input");
  T total = 0;
  for (T v : x.value().values()) total += v;
  const std::size_t n = x.value().size();
  return record<T>(Tensor<T>({1}, std::vector<T>{total}), {x}, [n](detail::Node<T>& self) {
    const T g = self.value.grad()[0];
    if (T* gx = grad_of(*self.parents[0]))
      for (std::size_t i = 0; i < n; ++i) gx[i] += g;
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  require(x.defined(), "mean: undefined input");
  return scale(sum(x), T{1} / static_cast<T>(x.value().size()));
}

template <typename T>
Var<T> weighted_row_mse(const Var<T>& pred, const Tensor<T>& target, std::span<const T> row_weights) {
  require(pred.defined(), "weighted_row_mse: undefined input");
  require(pred.shape() == target.shape(), "weighted_row_mse: prediction " + shape_to_string(pred.shape()) +
                                              " vs target " + shape_to_string(target.shape()));
  const std::size_t rows = target.rows(), d = target.cols();
  require(row_weights.size() == rows, "weighted_row_mse: one weight per row required");
  T weight_total = 0;
  for (T w : row_weights) weight_total += w;
  require(weight_total > T{0}, "weighted_row_mse: weights sum to zero");
  const T norm = T{1} / (weight_total * static_cast<T>(d));
  T total = 0;
  std::vector<T> residual(rows * d);
  for (std::size_t r = 0; r < rows; ++r) {
    T row_total = 0;
    for (std::size_t c = 0; c < d; ++c) {
      const T diff = pred.value()[r * d + c] - target[r * d + c];
      residual[r * d + c] = diff;
      row_total += diff * diff;
    }
    total += row_weights[r] * row_total;
  }
  std::vector<T> weights(row_weights.begin(), row_weights.end());
  return record<T>(Tensor<T>({1}, std::vector<T>{total * norm}), {pred},
                   [rows, d, norm, residual = std::move(residual), weights = std::move(weights)](detail::Node<T>& self) {
                     T* gp = grad_of(*self.parents[0]);
                     if (!gp) return;
                     const T g = self.value.grad()[0] * T{2} * norm;
                     for (std::size_t r = 0; r < rows; ++r) {
                       if (weights[r] == T{0}) continue;
                       for (std::size_t c = 0; c < d; ++c) gp[r * d + c] += g * weights[r] * residual[r * d + c];
                     }
                   });
}

#define MAEDAY_INSTANTIATE_OPS(T)                                                                    \
  template class Var<T>;                                                                             \
  template class Parameter<T>;                                                                       \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                              \
  template Var<T> matmul_nt(const Var<T>&, const Var<T>&);                                           \
  template Var<T> transpose(const Var<T>&);                                                          \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                 \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                                 \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                 \
  template Var<T> scale(const Var<T>&, T);                                                           \
  template Var<T> add_row(const Var<T>&, const Var<T>&);                                             \
  template Var<T> layernorm(const Var<T>&, const Var<T>&, const Var<T>&, T);                         \
  template Var<T> softmax(const Var<T>&);                                                            \
  template Var<T> gelu(const Var<T>&);                                                               \
  template Var<T> reshape(const Var<T>&, Shape);                                                     \
  template Var<T> gather_rows(const Var<T>&, std::span<const std::size_t>);                          \
  template Var<T> scatter_rows(const Var<T>&, std::span<const std::size_t>, std::size_t);            \
  template Var<T> broadcast_rows(const Var<T>&, std::size_t);                                        \
  template Var<T> slice_cols(const Var<T>&, std::size_t, std::size_t);                               \
  template Var<T> concat_cols(const std::vector<Var<T>>&);                                           \
  template Var<T> sum(const Var<T>&);                                                                \
  template Var<T> mean(const Var<T>&);                                                               \
  template Var<T> weighted_row_mse(const Var<T>&, const Tensor<T>&, std::span<const T>);

MAEDAY_INSTANTIATE_OPS(float)
MAEDAY_INSTANTIATE_OPS(double)

#undef MAEDAY_INSTANTIATE_OPS

}  // namespace maeday
