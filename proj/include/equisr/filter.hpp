#pragma once

// Bicubic filter parametrization and the two rotation-equivariant
// convolutions built on it.
//
// A filter is a continuous function phi(x) = sum_k w_k phi_k(x) over a p x p
// grid of basis functions. Rotating the filter by A resamples phi(A^-1 u) at
// the grid nodes u; since the basis is fixed, that resampling is a constant
// p^2 x p^2 matrix per group element, computed once and reused.

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "equisr/autodiff.hpp"
#include "equisr/group.hpp"
#include "equisr/params.hpp"

namespace equisr {

using ad::Padding;

// Keys cubic convolution kernel with a = -0.5.
inline double phi_bic(double y) {
  const double a = std::abs(y);
  if (a <= 1.0) return 1.5 * a * a * a - 2.5 * a * a + 1.0;
  if (a <= 2.0) return -0.5 * a * a * a + 2.5 * a * a - 4.0 * a + 2.0;
  return 0.0;
}

// A family of p*p continuous basis functions attached to the nodes of a
// p x p grid. Grid index (r, c) sits at filter coordinate (c - h, h - r),
// h = (p-1)/2, in units of the filter mesh.
class FilterBasis {
 public:
  virtual ~FilterBasis() = default;
  virtual std::size_t size() const = 0;
  virtual double evaluate(std::size_t k, const Vec2& x) const = 0;

  std::size_t count() const { return size() * size(); }

  Vec2 node(std::size_t k) const {
    const auto p = static_cast<double>(size());
    const double h = (p - 1.0) / 2.0;
    const auto r = static_cast<double>(k / size()), c = static_cast<double>(k % size());
    return {c - h, h - r};
  }
};

class BicubicBasis final : public FilterBasis {
 public:
  explicit BicubicBasis(std::size_t p) : p_(p) {
    if (p == 0 || p % 2 == 0) throw ConfigError("filter size must be odd, got " + std::to_string(p));
  }

  std::size_t size() const override { return p_; }

  double evaluate(std::size_t k, const Vec2& x) const override {
    const Vec2 n = node(k);
    return phi_bic(x[0] - n[0]) * phi_bic(x[1] - n[1]);
  }

 private:
  std::size_t p_;
};

// M[u][k] = phi_k(A^-1 u_node). With `disk_mask`, rows whose node lies
// outside radius (p+1)/2 are zero.
inline std::vector<double> resampling_matrix(const FilterBasis& basis, const Mat2& a, bool disk_mask = false) {
  if (!a.is_orthogonal()) throw MatrixError("filter rotation matrix is not orthogonal");
  const std::size_t n = basis.count();
  const double radius = (static_cast<double>(basis.size()) + 1.0) / 2.0;
  const Mat2 inv = a.transpose();
  std::vector<double> m(n * n, 0.0);
  for (std::size_t u = 0; u < n; ++u) {
    const Vec2 node = basis.node(u);
    if (disk_mask && std::hypot(node[0], node[1]) > radius) continue;
    const Vec2 src = inv * node;
    for (std::size_t k = 0; k < n; ++k) m[u * n + k] = basis.evaluate(k, src);
  }
  return m;
}

// Coefficients [c_out, g_in, c_in, p, p]; g_in is 1 for lifting filters and t for group filters.
template <class T>
struct ParamFilter {
  Tensor<T> coeffs;

  std::size_t c_out() const { return coeffs.shape.at(0); }
  std::size_t g_in() const { return coeffs.shape.at(1); }
  std::size_t c_in() const { return coeffs.shape.at(2); }
  std::size_t p() const { return coeffs.shape.at(3); }

  static ParamFilter zeros(std::size_t c_out, std::size_t g_in, std::size_t c_in, std::size_t p) {
    return ParamFilter{Tensor<T>(Shape{c_out, g_in, c_in, p, p})};
  }
};

// Kernel value at node u is sum_k w_k phi_k(A^-1 u).
template <class T>
Tensor<T> synthesize_kernel(const ParamFilter<T>& f, const Mat2& a, bool disk_mask = false) {
  if (f.coeffs.rank() != 5 || f.coeffs.shape[3] != f.coeffs.shape[4])
    throw ShapeError("filter coefficients must be [c_out,g_in,c_in,p,p], got " + ad::to_string(f.coeffs.shape));
  const BicubicBasis basis(f.p());
  const auto m = resampling_matrix(basis, a, disk_mask);
  const std::size_t n = basis.count();
  const std::size_t rows = f.coeffs.size() / n;
  Tensor<T> out(f.coeffs.shape);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t u = 0; u < n; ++u) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += m[u * n + k] * static_cast<double>(f.coeffs[r * n + k]);
      out[r * n + u] = static_cast<T>(acc);
    }
  return out;
}

// Cached resampling matrices for every element of a group.
template <class T>
class KernelSynthesizer {
 public:
  KernelSynthesizer(std::size_t p, const RotationGroup& group, bool disk_mask = false)
      : p_(p), group_(group), disk_mask_(disk_mask) {
    const BicubicBasis basis(p);
    for (std::size_t k = 0; k < group.order(); ++k) {
      const auto m = resampling_matrix(basis, group.element(k), disk_mask);
      Tensor<T> mt(Shape{basis.count(), basis.count()});
      for (std::size_t i = 0; i < m.size(); ++i) mt[i] = static_cast<T>(m[i]);
      mats_.push_back(std::move(mt));
    }
  }

  std::size_t p() const { return p_; }
  std::size_t order() const { return group_.order(); }
  const RotationGroup& group() const { return group_; }
  bool disk_mask() const { return disk_mask_; }
  const Tensor<T>& matrix(std::size_t k) const { return mats_.at(k); }

  // Kernels for every group element, stacked: [t * rows, p*p] from flat coefficients [rows, p*p].
  Var<T> rotated_stack(Var<T> flat) const {
    if (order() == 1 && !disk_mask_) return flat;
    std::vector<Var<T>> parts;
    for (const auto& m : mats_) parts.push_back(ad::matmul(flat, ad::constant(flat.tape(), m), false, true));
    return ad::concat(parts, 0);
  }

 private:
  std::size_t p_;
  RotationGroup group_;
  bool disk_mask_;
  std::vector<Tensor<T>> mats_;
};

// Slot a of the output is img convolved with the filter rotated by A_a.
// img: [C,H,W] or [N,C,H,W]; coeffs: [c_out, 1, c_in, p, p].
template <class T>
Var<T> lifting_conv(Var<T> img, Var<T> coeffs, const KernelSynthesizer<T>& synth, Padding pad) {
  const Shape cs = coeffs.shape();
  if (cs.size() != 5 || cs[1] != 1 || cs[3] != synth.p() || cs[4] != synth.p())
    throw ShapeError("lifting filter must be [c_out,1,c_in,p,p] with p=" + std::to_string(synth.p()) + ", got " +
                     ad::to_string(cs));
  const std::size_t c_in = img.shape()[img.shape().size() - 3];
  if (cs[2] != c_in)
    throw ShapeError("lifting filter expects " + std::to_string(cs[2]) + " input channels, image has " +
                     std::to_string(c_in));
  const std::size_t p = synth.p(), t = synth.order();
  auto flat = ad::reshape(coeffs, Shape{cs[0] * c_in, p * p});
  auto kernel = ad::reshape(synth.rotated_stack(flat), Shape{t * cs[0], c_in, p, p});
  return ad::conv2d(img, kernel, pad);
}

namespace detail {

// Gather map assembling the full group-conv kernel from the stack of rotated
// filters R[a][o][g][i][uv]: K[a][o][b][i][uv] = R[a][o][(b - a) mod t][i][uv].
inline ad::IndexMap group_kernel_index(std::size_t t, std::size_t c_out, std::size_t c_in, std::size_t pp) {
  std::vector<std::int64_t> idx(t * c_out * t * c_in * pp);
  std::size_t pos = 0;
  for (std::size_t a = 0; a < t; ++a)
    for (std::size_t o = 0; o < c_out; ++o)
      for (std::size_t b = 0; b < t; ++b)
        for (std::size_t i = 0; i < c_in; ++i)
          for (std::size_t uv = 0; uv < pp; ++uv) {
            const std::size_t g = (b + t - a) % t;
            idx[pos++] = static_cast<std::int64_t>((((a * c_out + o) * t + g) * c_in + i) * pp + uv);
          }
  return ad::make_index(std::move(idx));
}

}  // namespace detail

// Output slot A: sum over input slots B of conv(x_B, W^{A^-1 B} rotated by A).
// x: [t*c_in,H,W] or [N,t*c_in,H,W]; coeffs: [c_out, t, c_in, p, p].
template <class T>
Var<T> group_conv(Var<T> x, Var<T> coeffs, const KernelSynthesizer<T>& synth, Padding pad) {
  const Shape cs = coeffs.shape();
  const std::size_t t = synth.order(), p = synth.p();
  if (cs.size() != 5 || cs[3] != p || cs[4] != p)
    throw ShapeError("group filter must be [c_out,t,c_in,p,p] with p=" + std::to_string(p) + ", got " +
                     ad::to_string(cs));
  if (cs[1] != t)
    throw GroupError("group filter has g_in=" + std::to_string(cs[1]) + " but group order is " + std::to_string(t));
  const std::size_t channels = x.shape()[x.shape().size() - 3];
  if (channels != t * cs[2])
    throw ShapeError("group conv expects " + std::to_string(t * cs[2]) + " input channels, got " +
                     std::to_string(channels));
  const std::size_t c_out = cs[0], c_in = cs[2], pp = p * p;
  auto flat = ad::reshape(coeffs, Shape{c_out * t * c_in, pp});
  auto stack = synth.rotated_stack(flat);
  auto kernel = ad::gather(stack, detail::group_kernel_index(t, c_out, c_in, pp), Shape{t * c_out, t * c_in, p, p});
  return ad::conv2d(x, kernel, pad);
}

// Value-level conveniences on a private tape.

inline GroupFeatureMap lifting_conv(const Image& img, const ParamFilter<double>& f, const RotationGroup& group,
                                    Padding pad, bool disk_mask = false) {
  if (f.g_in() != 1) throw ShapeError("lifting filter must have g_in = 1");
  if (f.c_in() != img.c)
    throw ShapeError("lifting filter expects " + std::to_string(f.c_in()) + " channels, image has " +
                     std::to_string(img.c));
  ad::Tape<double> tape;
  KernelSynthesizer<double> synth(f.p(), group, disk_mask);
  auto out = lifting_conv(ad::constant(tape, to_tensor<double>(img)), ad::constant(tape, f.coeffs), synth, pad);
  return to_feature_map(out.value(), group.order());
}

inline GroupFeatureMap group_conv(const GroupFeatureMap& in, const ParamFilter<double>& f, const RotationGroup& group,
                                  Padding pad, bool disk_mask = false) {
  if (in.t != group.order() || f.g_in() != group.order())
    throw GroupError("group order mismatch: feature t=" + std::to_string(in.t) + ", filter g_in=" +
                     std::to_string(f.g_in()) + ", group t=" + std::to_string(group.order()));
  if (f.c_in() != in.n)
    throw ShapeError("group filter expects " + std::to_string(f.c_in()) + " channels per slot, feature has " +
                     std::to_string(in.n));
  ad::Tape<double> tape;
  KernelSynthesizer<double> synth(f.p(), group, disk_mask);
  auto out = group_conv(ad::constant(tape, to_tensor<double>(in)), ad::constant(tape, f.coeffs), synth, pad);
  return to_feature_map(out.value(), group.order());
}

}  // namespace equisr
