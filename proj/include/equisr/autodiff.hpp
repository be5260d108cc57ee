#pragma once

// Minimal reverse-mode differentiation over dense row-major tensors.
//
// A Tape owns every node value produced while it is alive. Primitive
// applications whose inputs require gradients are recorded as entries in
// application order; backward() walks those entries once, in reverse, and
// accumulates input gradients by summation.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "equisr/errors.hpp"

namespace equisr::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <class T>
struct Tensor {
  Shape shape{0};
  std::vector<T> data;
  bool requires_grad = false;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T{0}) : shape(std::move(s)), data(numel(shape), fill) {}
  Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != numel(shape)) {
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + to_string(shape));
    }
  }

  static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  Tensor& with_grad(bool on = true) {
    requires_grad = on;
    return *this;
  }
};

enum class Primitive {
  add,
  sub,
  mul,
  matmul,
  conv2d,
  relu,
  sin,
  cos,
  concat,
  sum,
  scale,
  gather,
  reshape,
};

inline constexpr std::array<std::pair<std::string_view, Primitive>, 13> kCatalogue{{
    {"add", Primitive::add},
    {"sub", Primitive::sub},
    {"mul", Primitive::mul},
    {"matmul", Primitive::matmul},
    {"conv2d", Primitive::conv2d},
    {"relu", Primitive::relu},
    {"sin", Primitive::sin},
    {"cos", Primitive::cos},
    {"concat", Primitive::concat},
    {"sum", Primitive::sum},
    {"scale", Primitive::scale},
    {"gather", Primitive::gather},
    {"reshape", Primitive::reshape},
}};

inline Primitive primitive_from_name(std::string_view name) {
  for (const auto& [n, p] : kCatalogue)
    if (n == name) return p;
  throw CatalogueError("unknown primitive '" + std::string(name) + "'");
}

inline std::string_view primitive_name(Primitive p) {
  for (const auto& [n, q] : kCatalogue)
    if (q == p) return n;
  return "?";
}

enum class Padding { valid, same };

using IndexMap = std::shared_ptr<const std::vector<std::int64_t>>;

inline IndexMap make_index(std::vector<std::int64_t> idx) {
  return std::make_shared<const std::vector<std::int64_t>>(std::move(idx));
}

struct Attrs {
  bool trans_a = false;                // matmul
  bool trans_b = false;                // matmul
  Padding padding = Padding::valid;    // conv2d
  std::size_t axis = 0;                // concat
  std::vector<std::size_t> axes;       // sum; empty reduces everything
  double factor = 1.0;                 // scale
  IndexMap index;                      // gather; -1 reads as zero
  Shape shape;                         // reshape / gather output shape
};

struct NodeId {
  std::size_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
  friend auto operator<=>(NodeId, NodeId) = default;
};

template <class T>
using Gradients = std::map<NodeId, Tensor<T>>;

namespace detail {

template <class T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
using MapR = Eigen::Map<MatR<T>>;

template <class T>
using CMapR = Eigen::Map<const MatR<T>>;

struct ConvGeometry {
  std::size_t n, c, h, w, o, kh, kw, ph, pw, oh, ow;
};

inline ConvGeometry conv_geometry(const Shape& x, const Shape& k, Padding pad) {
  if (x.size() != 3 && x.size() != 4) throw ShapeError("conv2d input must be [C,H,W] or [N,C,H,W], got " + to_string(x));
  if (k.size() != 4) throw ShapeError("conv2d kernel must be [O,C,KH,KW], got " + to_string(k));
  ConvGeometry g{};
  const std::size_t off = x.size() == 4 ? 1 : 0;
  g.n = off ? x[0] : 1;
  g.c = x[off];
  g.h = x[off + 1];
  g.w = x[off + 2];
  g.o = k[0];
  g.kh = k[2];
  g.kw = k[3];
  if (k[1] != g.c) throw ShapeError("conv2d channel mismatch: input " + to_string(x) + ", kernel " + to_string(k));
  if (pad == Padding::same) {
    if (g.kh % 2 == 0 || g.kw % 2 == 0) throw ShapeError("same padding needs an odd kernel, got " + to_string(k));
    g.ph = (g.kh - 1) / 2;
    g.pw = (g.kw - 1) / 2;
  }
  if (g.h + 2 * g.ph < g.kh || g.w + 2 * g.pw < g.kw)
    throw ShapeError("conv2d kernel " + to_string(k) + " larger than input " + to_string(x));
  g.oh = g.h + 2 * g.ph - g.kh + 1;
  g.ow = g.w + 2 * g.pw - g.kw + 1;
  return g;
}

// col[(c*kh + p)*kw + q][y*ow + x] = img[c][y + p - ph][x + q - pw]
template <class T>
void im2col(const T* img, const ConvGeometry& g, T* col) {
  const std::size_t cols = g.oh * g.ow;
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t p = 0; p < g.kh; ++p) {
      for (std::size_t q = 0; q < g.kw; ++q) {
        T* row = col + ((c * g.kh + p) * g.kw + q) * cols;
        for (std::size_t y = 0; y < g.oh; ++y) {
          const auto sy = static_cast<std::ptrdiff_t>(y + p) - static_cast<std::ptrdiff_t>(g.ph);
          T* dst = row + y * g.ow;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.ow, T{0});
            continue;
          }
          const T* src = img + (c * g.h + static_cast<std::size_t>(sy)) * g.w;
          for (std::size_t x = 0; x < g.ow; ++x) {
            const auto sx = static_cast<std::ptrdiff_t>(x + q) - static_cast<std::ptrdiff_t>(g.pw);
            dst[x] = (sx < 0 || sx >= static_cast<std::ptrdiff_t>(g.w)) ? T{0} : src[sx];
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, const ConvGeometry& g, T* img) {
  const std::size_t cols = g.oh * g.ow;
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t p = 0; p < g.kh; ++p) {
      for (std::size_t q = 0; q < g.kw; ++q) {
        const T* row = col + ((c * g.kh + p) * g.kw + q) * cols;
        for (std::size_t y = 0; y < g.oh; ++y) {
          const auto sy = static_cast<std::ptrdiff_t>(y + p) - static_cast<std::ptrdiff_t>(g.ph);
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          T* dst = img + (c * g.h + static_cast<std::size_t>(sy)) * g.w;
          const T* src = row + y * g.ow;
          for (std::size_t x = 0; x < g.ow; ++x) {
            const auto sx = static_cast<std::ptrdiff_t>(x + q) - static_cast<std::ptrdiff_t>(g.pw);
            if (sx >= 0 && sx < static_cast<std::ptrdiff_t>(g.w)) dst[sx] += src[x];
          }
        }
      }
    }
  }
}

inline Shape conv_out_shape(const Shape& x, const ConvGeometry& g) {
  if (x.size() == 4) return {g.n, g.o, g.oh, g.ow};
  return {g.o, g.oh, g.ow};
}

// Output strides of a reduction: stride 0 along reduced axes.
inline std::vector<std::size_t> reduction_strides(const Shape& in, const std::vector<bool>& reduced,
                                                  Shape& out_shape) {
  out_shape.clear();
  for (std::size_t a = 0; a < in.size(); ++a)
    if (!reduced[a]) out_shape.push_back(in[a]);
  std::vector<std::size_t> strides(in.size(), 0);
  std::size_t s = 1;
  for (std::size_t a = in.size(); a-- > 0;) {
    if (!reduced[a]) {
      strides[a] = s;
      s *= in[a];
    }
  }
  return strides;
}

// Calls fn(input_flat, output_flat) for every input element, row-major.
template <class Fn>
void for_each_reduced(const Shape& in, const std::vector<std::size_t>& out_strides, Fn&& fn) {
  const std::size_t total = numel(in);
  if (total == 0) return;
  const std::size_t rank = in.size();
  std::vector<std::size_t> counter(rank, 0);
  std::size_t out = 0;
  for (std::size_t i = 0; i < total; ++i) {
    fn(i, out);
    for (std::size_t a = rank; a-- > 0;) {
      ++counter[a];
      out += out_strides[a];
      if (counter[a] < in[a]) break;
      out -= out_strides[a] * counter[a];
      counter[a] = 0;
    }
  }
}

inline std::vector<bool> reduced_axes(const Shape& in, const std::vector<std::size_t>& axes) {
  std::vector<bool> reduced(in.size(), axes.empty());
  for (auto a : axes) {
    if (a >= in.size()) throw ShapeError("sum axis " + std::to_string(a) + " out of range for " + to_string(in));
    reduced[a] = true;
  }
  return reduced;
}

}  // namespace detail

template <class T>
class Tape {
 public:
  using Value = Tensor<T>;

  struct Entry {
    Primitive op;
    std::vector<NodeId> inputs;
    NodeId output;
    Attrs attrs;
  };

  NodeId leaf(Value v) {
    for (const T& x : v.data)
      if (!std::isfinite(static_cast<double>(x))) throw EvaluationError("non-finite leaf value");
    nodes_.push_back(Node{std::move(v)});
    return NodeId{nodes_.size() - 1};
  }

  NodeId apply(std::string_view name, std::span<const NodeId> inputs, const Attrs& attrs = {}) {
    return apply(primitive_from_name(name), inputs, attrs);
  }

  NodeId apply(Primitive op, std::span<const NodeId> inputs, const Attrs& attrs = {}) {
    for (auto id : inputs)
      if (id.index >= nodes_.size()) throw IndexError("node id out of range");
    Value out = forward(op, inputs, attrs);
    bool grad = false;
    for (auto id : inputs) grad = grad || nodes_[id.index].value.requires_grad;
    out.requires_grad = grad;
    nodes_.push_back(Node{std::move(out)});
    NodeId id{nodes_.size() - 1};
    if (grad) entries_.push_back(Entry{op, {inputs.begin(), inputs.end()}, id, attrs});
    return id;
  }

  const Value& value(NodeId id) const { return nodes_.at(id.index).value; }
  bool requires_grad(NodeId id) const { return nodes_.at(id.index).value.requires_grad; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t node_count() const { return nodes_.size(); }

  // Gradients of a scalar loss with respect to every requires-grad leaf.
  Gradients<T> backward(NodeId loss) const {
    const Value& lv = value(loss);
    if (lv.size() != 1) throw ContractError("backward needs a scalar loss, got shape " + to_string(lv.shape));
    std::vector<std::optional<Value>> grads(nodes_.size());
    grads[loss.index] = Value(lv.shape, T{1});
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      auto& g = grads[it->output.index];
      if (!g) continue;
      backward_entry(*it, *g, grads);
    }
    Gradients<T> out;
    std::vector<bool> produced(nodes_.size(), false);
    for (const auto& e : entries_) produced[e.output.index] = true;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (!nodes_[i].value.requires_grad || produced[i]) continue;
      out.emplace(NodeId{i}, grads[i] ? std::move(*grads[i]) : Value(nodes_[i].value.shape));
    }
    return out;
  }

 private:
  struct Node {
    Value value;
  };

  std::vector<Node> nodes_;
  std::vector<Entry> entries_;

  const Value& in(std::span<const NodeId> inputs, std::size_t k) const { return nodes_[inputs[k].index].value; }

  static void require_arity(Primitive op, std::span<const NodeId> inputs, std::size_t n) {
    if (inputs.size() != n) {
      throw ShapeError(std::string(primitive_name(op)) + " expects " + std::to_string(n) + " inputs, got " +
                       std::to_string(inputs.size()));
    }
  }

  Value forward(Primitive op, std::span<const NodeId> inputs, const Attrs& at) const {
    switch (op) {
      case Primitive::add:
      case Primitive::sub:
      case Primitive::mul: {
        require_arity(op, inputs, 2);
        const Value& a = in(inputs, 0);
        const Value& b = in(inputs, 1);
        if (a.shape != b.shape)
          throw ShapeError(std::string(primitive_name(op)) + " shape mismatch " + to_string(a.shape) + " vs " +
                           to_string(b.shape));
        Value out(a.shape);
        for (std::size_t i = 0; i < a.size(); ++i)
          out[i] = op == Primitive::add ? a[i] + b[i] : op == Primitive::sub ? a[i] - b[i] : a[i] * b[i];
        return out;
      }
      case Primitive::matmul: {
        require_arity(op, inputs, 2);
        const Value& a = in(inputs, 0);
        const Value& b = in(inputs, 1);
        if (a.rank() != 2 || b.rank() != 2)
          throw ShapeError("matmul needs rank-2 operands, got " + to_string(a.shape) + " and " + to_string(b.shape));
        const std::size_t m = at.trans_a ? a.shape[1] : a.shape[0];
        const std::size_t ka = at.trans_a ? a.shape[0] : a.shape[1];
        const std::size_t kb = at.trans_b ? b.shape[1] : b.shape[0];
        const std::size_t n = at.trans_b ? b.shape[0] : b.shape[1];
        if (ka != kb) throw ShapeError("matmul inner extent mismatch " + to_string(a.shape) + " x " + to_string(b.shape));
        Value out(Shape{m, n});
        detail::CMapR<T> A(a.data.data(), a.shape[0], a.shape[1]);
        detail::CMapR<T> B(b.data.data(), b.shape[0], b.shape[1]);
        detail::MapR<T> C(out.data.data(), m, n);
        if (at.trans_a && at.trans_b) C.noalias() = A.transpose() * B.transpose();
        else if (at.trans_a) C.noalias() = A.transpose() * B;
        else if (at.trans_b) C.noalias() = A * B.transpose();
        else C.noalias() = A * B;
        return out;
      }
      case Primitive::conv2d: {
        require_arity(op, inputs, 2);
        const Value& x = in(inputs, 0);
        const Value& k = in(inputs, 1);
        const auto g = detail::conv_geometry(x.shape, k.shape, at.padding);
        Value out(detail::conv_out_shape(x.shape, g));
        const std::size_t rows = g.c * g.kh * g.kw;
        const std::size_t cols = g.oh * g.ow;
        std::vector<T> col(rows * cols);
        detail::CMapR<T> K(k.data.data(), g.o, rows);
        for (std::size_t s = 0; s < g.n; ++s) {
          detail::im2col(x.data.data() + s * g.c * g.h * g.w, g, col.data());
          detail::CMapR<T> Col(col.data(), rows, cols);
          detail::MapR<T> O(out.data.data() + s * g.o * cols, g.o, cols);
          O.noalias() = K * Col;
        }
        return out;
      }
      case Primitive::relu:
      case Primitive::sin:
      case Primitive::cos: {
        require_arity(op, inputs, 1);
        const Value& a = in(inputs, 0);
        Value out(a.shape);
        for (std::size_t i = 0; i < a.size(); ++i) {
          if (op == Primitive::relu) out[i] = a[i] > T{0} ? a[i] : T{0};
          else if (op == Primitive::sin) out[i] = std::sin(a[i]);
          else out[i] = std::cos(a[i]);
        }
        return out;
      }
      case Primitive::concat: {
        if (inputs.empty()) throw ShapeError("concat needs at least one input");
        const Value& first = in(inputs, 0);
        if (at.axis >= first.rank()) throw ShapeError("concat axis out of range for " + to_string(first.shape));
        Shape shape = first.shape;
        shape[at.axis] = 0;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          const Value& v = in(inputs, k);
          if (v.rank() != first.rank()) throw ShapeError("concat rank mismatch");
          for (std::size_t a = 0; a < v.rank(); ++a)
            if (a != at.axis && v.shape[a] != first.shape[a])
              throw ShapeError("concat extent mismatch " + to_string(first.shape) + " vs " + to_string(v.shape));
          shape[at.axis] += v.shape[at.axis];
        }
        Value out(shape);
        const std::size_t outer = numel(Shape(shape.begin(), shape.begin() + static_cast<std::ptrdiff_t>(at.axis)));
        const std::size_t inner = numel(Shape(shape.begin() + static_cast<std::ptrdiff_t>(at.axis) + 1, shape.end()));
        std::size_t offset = 0;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          const Value& v = in(inputs, k);
          const std::size_t chunk = v.shape[at.axis] * inner;
          for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(v.data.begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                        out.data.begin() + static_cast<std::ptrdiff_t>(o * shape[at.axis] * inner + offset));
          offset += chunk;
        }
        return out;
      }
      case Primitive::sum: {
        require_arity(op, inputs, 1);
        const Value& a = in(inputs, 0);
        Shape out_shape;
        const auto strides = detail::reduction_strides(a.shape, detail::reduced_axes(a.shape, at.axes), out_shape);
        Value out(out_shape);
        detail::for_each_reduced(a.shape, strides, [&](std::size_t i, std::size_t o) { out[o] += a[i]; });
        return out;
      }
      case Primitive::scale: {
        require_arity(op, inputs, 1);
        const Value& a = in(inputs, 0);
        Value out(a.shape);
        const T f = static_cast<T>(at.factor);
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * f;
        return out;
      }
      case Primitive::gather: {
        require_arity(op, inputs, 1);
        const Value& a = in(inputs, 0);
        if (!at.index) throw ShapeError("gather needs an index map");
        const auto& idx = *at.index;
        if (numel(at.shape) != idx.size())
          throw ShapeError("gather output shape " + to_string(at.shape) + " does not match index length " +
                           std::to_string(idx.size()));
        Value out(at.shape);
        const auto n = static_cast<std::int64_t>(a.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
          const auto j = idx[i];
          if (j < -1 || j >= n) throw IndexError("gather index " + std::to_string(j) + " out of range");
          out[i] = j < 0 ? T{0} : a.data[static_cast<std::size_t>(j)];
        }
        return out;
      }
      case Primitive::reshape: {
        require_arity(op, inputs, 1);
        const Value& a = in(inputs, 0);
        if (numel(at.shape) != a.size())
          throw ShapeError("cannot reshape " + to_string(a.shape) + " to " + to_string(at.shape));
        return Value(at.shape, a.data);
      }
    }
    throw CatalogueError("unhandled primitive");
  }

  void accumulate(std::vector<std::optional<Value>>& grads, NodeId id, Value g) const {
    auto& slot = grads[id.index];
    if (!slot) {
      slot = std::move(g);
      return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) (*slot)[i] += g[i];
  }

  bool wants(NodeId id) const { return nodes_[id.index].value.requires_grad; }

  void backward_entry(const Entry& e, const Value& g, std::vector<std::optional<Value>>& grads) const {
    std::span<const NodeId> inputs(e.inputs);
    const Attrs& at = e.attrs;
    switch (e.op) {
      case Primitive::add:
      case Primitive::sub: {
        if (wants(inputs[0])) accumulate(grads, inputs[0], g);
        if (wants(inputs[1])) {
          Value gb = g;
          if (e.op == Primitive::sub)
            for (auto& v : gb.data) v = -v;
          accumulate(grads, inputs[1], std::move(gb));
        }
        return;
      }
      case Primitive::mul: {
        const Value& a = in(inputs, 0);
        const Value& b = in(inputs, 1);
        if (wants(inputs[0])) {
          Value ga(a.shape);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * b[i];
          accumulate(grads, inputs[0], std::move(ga));
        }
        if (wants(inputs[1])) {
          Value gb(b.shape);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * a[i];
          accumulate(grads, inputs[1], std::move(gb));
        }
        return;
      }
      case Primitive::matmul: {
        const Value& a = in(inputs, 0);
        const Value& b = in(inputs, 1);
        detail::CMapR<T> A(a.data.data(), a.shape[0], a.shape[1]);
        detail::CMapR<T> B(b.data.data(), b.shape[0], b.shape[1]);
        detail::CMapR<T> G(g.data.data(), g.shape[0], g.shape[1]);
        if (wants(inputs[0])) {
          Value ga(a.shape);
          detail::MapR<T> GA(ga.data.data(), a.shape[0], a.shape[1]);
          // C = op(A) op(B); d op(A) = G op(B)^T
          if (!at.trans_a && !at.trans_b) GA.noalias() = G * B.transpose();
          else if (!at.trans_a && at.trans_b) GA.noalias() = G * B;
          else if (at.trans_a && !at.trans_b) GA.noalias() = B * G.transpose();
          else GA.noalias() = B.transpose() * G.transpose();
          accumulate(grads, inputs[0], std::move(ga));
        }
        if (wants(inputs[1])) {
          Value gb(b.shape);
          detail::MapR<T> GB(gb.data.data(), b.shape[0], b.shape[1]);
          // d op(B) = op(A)^T G
          if (!at.trans_a && !at.trans_b) GB.noalias() = A.transpose() * G;
          else if (at.trans_a && !at.trans_b) GB.noalias() = A * G;
          else if (!at.trans_a && at.trans_b) GB.noalias() = G.transpose() * A;
          else GB.noalias() = G.transpose() * A.transpose();
          accumulate(grads, inputs[1], std::move(gb));
        }
        return;
      }
      case Primitive::conv2d: {
        const Value& x = in(inputs, 0);
        const Value& k = in(inputs, 1);
        const auto geo = detail::conv_geometry(x.shape, k.shape, at.padding);
        const std::size_t rows = geo.c * geo.kh * geo.kw;
        const std::size_t cols = geo.oh * geo.ow;
        std::vector<T> col(rows * cols);
        detail::CMapR<T> K(k.data.data(), geo.o, rows);
        const bool gx = wants(inputs[0]);
        const bool gk = wants(inputs[1]);
        Value dx = gx ? Value(x.shape) : Value();
        Value dk = gk ? Value(k.shape) : Value();
        for (std::size_t s = 0; s < geo.n; ++s) {
          detail::CMapR<T> G(g.data.data() + s * geo.o * cols, geo.o, cols);
          if (gk) {
            detail::im2col(x.data.data() + s * geo.c * geo.h * geo.w, geo, col.data());
            detail::CMapR<T> Col(col.data(), rows, cols);
            detail::MapR<T> DK(dk.data.data(), geo.o, rows);
            DK.noalias() += G * Col.transpose();
          }
          if (gx) {
            detail::MapR<T> DCol(col.data(), rows, cols);
            DCol.noalias() = K.transpose() * G;
            detail::col2im_add(col.data(), geo, dx.data.data() + s * geo.c * geo.h * geo.w);
          }
        }
        if (gx) accumulate(grads, inputs[0], std::move(dx));
        if (gk) accumulate(grads, inputs[1], std::move(dk));
        return;
      }
      case Primitive::relu:
      case Primitive::sin:
      case Primitive::cos: {
        const Value& a = in(inputs, 0);
        Value ga(a.shape);
        for (std::size_t i = 0; i < a.size(); ++i) {
          if (e.op == Primitive::relu) ga[i] = a[i] > T{0} ? g[i] : T{0};
          else if (e.op == Primitive::sin) ga[i] = g[i] * std::cos(a[i]);
          else ga[i] = -g[i] * std::sin(a[i]);
        }
        accumulate(grads, inputs[0], std::move(ga));
        return;
      }
      case Primitive::concat: {
        const Shape& shape = g.shape;
        const std::size_t outer = numel(Shape(shape.begin(), shape.begin() + static_cast<std::ptrdiff_t>(at.axis)));
        const std::size_t inner = numel(Shape(shape.begin() + static_cast<std::ptrdiff_t>(at.axis) + 1, shape.end()));
        std::size_t offset = 0;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          const Value& v = in(inputs, k);
          const std::size_t chunk = v.shape[at.axis] * inner;
          if (wants(inputs[k])) {
            Value gv(v.shape);
            for (std::size_t o = 0; o < outer; ++o)
              std::copy_n(g.data.begin() + static_cast<std::ptrdiff_t>(o * shape[at.axis] * inner + offset), chunk,
                          gv.data.begin() + static_cast<std::ptrdiff_t>(o * chunk));
            accumulate(grads, inputs[k], std::move(gv));
          }
          offset += chunk;
        }
        return;
      }
      case Primitive::sum: {
        const Value& a = in(inputs, 0);
        Shape out_shape;
        const auto strides = detail::reduction_strides(a.shape, detail::reduced_axes(a.shape, at.axes), out_shape);
        Value ga(a.shape);
        detail::for_each_reduced(a.shape, strides, [&](std::size_t i, std::size_t o) { ga[i] = g[o]; });
        accumulate(grads, inputs[0], std::move(ga));
        return;
      }
      case Primitive::scale: {
        Value ga(g.shape);
        const T f = static_cast<T>(at.factor);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * f;
        accumulate(grads, inputs[0], std::move(ga));
        return;
      }
      case Primitive::gather: {
        const Value& a = in(inputs, 0);
        Value ga(a.shape);
        const auto& idx = *at.index;
        for (std::size_t i = 0; i < idx.size(); ++i)
          if (idx[i] >= 0) ga[static_cast<std::size_t>(idx[i])] += g[i];
        accumulate(grads, inputs[0], std::move(ga));
        return;
      }
      case Primitive::reshape: {
        accumulate(grads, inputs[0], Value(in(inputs, 0).shape, g.data));
        return;
      }
    }
  }
};

// Handle to a node on a tape; the tape must outlive every Var referring to it.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>& tape, NodeId id) : tape_(&tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  NodeId id() const { return id_; }
  const Tensor<T>& value() const { return tape_->value(id_); }
  Shape shape() const { return value().shape; }  // by value: the tape may reallocate
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  NodeId id_{};
};

template <class T>
Var<T> leaf(Tape<T>& tape, Tensor<T> value) {
  return Var<T>(tape, tape.leaf(std::move(value)));
}

template <class T>
Var<T> constant(Tape<T>& tape, Tensor<T> value) {
  value.requires_grad = false;
  return Var<T>(tape, tape.leaf(std::move(value)));
}

template <class T>
Var<T> apply(Primitive op, std::initializer_list<Var<T>> inputs, const Attrs& attrs = {}) {
  std::vector<NodeId> ids;
  Tape<T>* tape = nullptr;
  for (const auto& v : inputs) {
    if (tape && &v.tape() != tape) throw ContractError("operands live on different tapes");
    tape = &v.tape();
    ids.push_back(v.id());
  }
  return Var<T>(*tape, tape->apply(op, ids, attrs));
}

template <class T> Var<T> operator+(Var<T> a, Var<T> b) { return apply(Primitive::add, {a, b}); }
template <class T> Var<T> operator-(Var<T> a, Var<T> b) { return apply(Primitive::sub, {a, b}); }
template <class T> Var<T> operator*(Var<T> a, Var<T> b) { return apply(Primitive::mul, {a, b}); }

template <class T>
Var<T> matmul(Var<T> a, Var<T> b, bool trans_a = false, bool trans_b = false) {
  Attrs at;
  at.trans_a = trans_a;
  at.trans_b = trans_b;
  return apply(Primitive::matmul, {a, b}, at);
}

template <class T>
Var<T> conv2d(Var<T> x, Var<T> kernel, Padding pad = Padding::valid) {
  Attrs at;
  at.padding = pad;
  return apply(Primitive::conv2d, {x, kernel}, at);
}

template <class T> Var<T> relu(Var<T> a) { return apply(Primitive::relu, {a}); }
template <class T> Var<T> sin(Var<T> a) { return apply(Primitive::sin, {a}); }
template <class T> Var<T> cos(Var<T> a) { return apply(Primitive::cos, {a}); }

template <class T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat needs at least one input");
  std::vector<NodeId> ids;
  for (const auto& v : parts) ids.push_back(v.id());
  Attrs at;
  at.axis = axis;
  return Var<T>(parts.front().tape(), parts.front().tape().apply(Primitive::concat, ids, at));
}

template <class T>
Var<T> sum(Var<T> a, std::vector<std::size_t> axes = {}) {
  Attrs at;
  at.axes = std::move(axes);
  return apply(Primitive::sum, {a}, at);
}

template <class T>
Var<T> scale(Var<T> a, double factor) {
  Attrs at;
  at.factor = factor;
  return apply(Primitive::scale, {a}, at);
}

template <class T>
Var<T> gather(Var<T> a, IndexMap index, Shape shape) {
  Attrs at;
  at.index = std::move(index);
  at.shape = std::move(shape);
  return apply(Primitive::gather, {a}, at);
}

template <class T>
Var<T> reshape(Var<T> a, Shape shape) {
  Attrs at;
  at.shape = std::move(shape);
  return apply(Primitive::reshape, {a}, at);
}

// Mean absolute value, built from the catalogue: |d| = relu(d) + relu(-d).
template <class T>
Var<T> mean_abs(Var<T> d) {
  const double n = static_cast<double>(d.value().size());
  return scale(sum(relu(d) + relu(scale(d, -1.0))), 1.0 / n);
}

}  // namespace equisr::ad
