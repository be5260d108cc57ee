#pragma once

// Cyclic rotation groups and their action on images and group feature maps.
//
// Coordinates are cell-centered on [-1,1]^2 with x to the right and y up:
// pixel (i, j) of an h x w raster sits at (-1 + (j+0.5)*2/w, 1 - (i+0.5)*2/h).
// Rotating a raster by a matrix R produces out(x) = in(R^-1 x).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "equisr/errors.hpp"

namespace equisr {

using Vec2 = std::array<double, 2>;

struct Mat2 {
  double m00 = 1, m01 = 0, m10 = 0, m11 = 1;

  static Mat2 identity() { return {}; }

  // Counter-clockwise rotation by `angle` radians.
  static Mat2 rotation(double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    return {c, -s, s, c};
  }

  Vec2 operator*(const Vec2& x) const { return {m00 * x[0] + m01 * x[1], m10 * x[0] + m11 * x[1]}; }

  Mat2 operator*(const Mat2& o) const {
    return {m00 * o.m00 + m01 * o.m10, m00 * o.m01 + m01 * o.m11, m10 * o.m00 + m11 * o.m10,
            m10 * o.m01 + m11 * o.m11};
  }

  double det() const { return m00 * m11 - m01 * m10; }
  Mat2 transpose() const { return {m00, m10, m01, m11}; }

  Mat2 inverse() const {
    const double d = det();
    if (d == 0.0) throw MatrixError("singular 2x2 matrix");
    return {m11 / d, -m01 / d, -m10 / d, m00 / d};
  }

  bool is_orthogonal(double tol = 1e-9) const {
    const Mat2 p = transpose() * *this;
    return std::abs(p.m00 - 1) <= tol && std::abs(p.m11 - 1) <= tol && std::abs(p.m01) <= tol &&
           std::abs(p.m10) <= tol;
  }

  double max_abs_diff(const Mat2& o) const {
    return std::max({std::abs(m00 - o.m00), std::abs(m01 - o.m01), std::abs(m10 - o.m10), std::abs(m11 - o.m11)});
  }
};

// Number of counter-clockwise quarter turns if `r` is (to 1e-12) a right-angle rotation.
inline std::optional<int> quarter_turns(const Mat2& r) {
  for (int q = 0; q < 4; ++q) {
    const double c = std::array<double, 4>{1, 0, -1, 0}[q];
    const double s = std::array<double, 4>{0, 1, 0, -1}[q];
    if (r.max_abs_diff(Mat2{c, -s, s, c}) < 1e-12) return q;
  }
  return std::nullopt;
}

inline std::optional<int> quarter_turns(double angle) {
  const double half_pi = std::numbers::pi / 2;
  const double k = std::round(angle / half_pi);
  if (std::abs(angle - k * half_pi) >= 1e-12) return std::nullopt;
  return static_cast<int>(((static_cast<long long>(k) % 4) + 4) % 4);
}

inline Mat2 quarter_turn_matrix(int q) {
  const double c = std::array<double, 4>{1, 0, -1, 0}[q & 3];
  const double s = std::array<double, 4>{0, 1, 0, -1}[q & 3];
  return {c, -s, s, c};
}

// The cyclic group S = {A_k}, A_k = [[cos 2pi k/t, sin 2pi k/t], [-sin 2pi k/t, cos 2pi k/t]].
// A_k turns the plane clockwise by 2pi k/t; right-angle elements are stored exactly.
class RotationGroup {
 public:
  explicit RotationGroup(std::size_t t) : t_(t) {
    if (t == 0) throw InvalidOrderError("rotation group order must be at least 1");
    elements_.reserve(t);
    for (std::size_t k = 0; k < t; ++k) {
      double c, s;
      if ((4 * k) % t == 0) {
        const auto q = (4 * k / t) % 4;
        c = std::array<double, 4>{1, 0, -1, 0}[q];
        s = std::array<double, 4>{0, 1, 0, -1}[q];
      } else {
        const double theta = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(t);
        c = std::cos(theta);
        s = std::sin(theta);
      }
      elements_.push_back(Mat2{c, s, -s, c});
    }
  }

  std::size_t order() const { return t_; }

  const Mat2& element(std::size_t k) const {
    check(k);
    return elements_[k];
  }

  Mat2 inverse_element(std::size_t k) const { return element(k).transpose(); }

  std::size_t compose(std::size_t k, std::size_t j) const {
    check(k);
    check(j);
    return (k + j) % t_;
  }

  std::size_t inverse(std::size_t k) const {
    check(k);
    return (t_ - k) % t_;
  }

  // Counter-clockwise angle of A_k.
  double angle(std::size_t k) const {
    check(k);
    return -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(t_);
  }

  // Group index of the counter-clockwise rotation by `angle`, if it belongs to S.
  std::optional<std::size_t> index_of_angle(double angle) const {
    const double step = 2.0 * std::numbers::pi / static_cast<double>(t_);
    const double r = -angle / step;
    const double k = std::round(r);
    if (std::abs(r - k) > 1e-9) return std::nullopt;
    const auto t = static_cast<long long>(t_);
    return static_cast<std::size_t>(((static_cast<long long>(k) % t) + t) % t);
  }

  // Lifted coordinate: entry k is A_k^-1 x.
  std::vector<Vec2> lift(const Vec2& x) const {
    std::vector<Vec2> out;
    out.reserve(t_);
    for (const auto& a : elements_) out.push_back(a.transpose() * x);
    return out;
  }

 private:
  void check(std::size_t k) const {
    if (k >= t_) throw IndexError("group index " + std::to_string(k) + " outside [0, " + std::to_string(t_) + ")");
  }

  std::size_t t_;
  std::vector<Mat2> elements_;
};

inline RotationGroup make_group(std::size_t t) { return RotationGroup(t); }

// h x w x c raster, stored channel-planar.
struct Image {
  std::size_t h = 0, w = 0, c = 0;
  std::vector<double> data;

  Image() = default;
  Image(std::size_t h_, std::size_t w_, std::size_t c_, double fill = 0.0)
      : h(h_), w(w_), c(c_), data(h_ * w_ * c_, fill) {}

  double& at(std::size_t i, std::size_t j, std::size_t ch) { return data[(ch * h + i) * w + j]; }
  double at(std::size_t i, std::size_t j, std::size_t ch) const { return data[(ch * h + i) * w + j]; }

  double delta() const { return 2.0 / static_cast<double>(h); }

  Vec2 coordinate(std::size_t i, std::size_t j) const {
    return {-1.0 + (static_cast<double>(j) + 0.5) * 2.0 / static_cast<double>(w),
            1.0 - (static_cast<double>(i) + 0.5) * 2.0 / static_cast<double>(h)};
  }

  bool same_shape(const Image& o) const { return h == o.h && w == o.w && c == o.c; }

  bool finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

// h x w x n x t feature tensor; slot k holds F^{A_k}. Stored as [t][n][h][w].
struct GroupFeatureMap {
  std::size_t h = 0, w = 0, n = 0, t = 0;
  std::vector<double> data;

  GroupFeatureMap() = default;
  GroupFeatureMap(std::size_t h_, std::size_t w_, std::size_t n_, std::size_t t_, double fill = 0.0)
      : h(h_), w(w_), n(n_), t(t_), data(h_ * w_ * n_ * t_, fill) {}

  double& at(std::size_t i, std::size_t j, std::size_t ch, std::size_t k) { return data[((k * n + ch) * h + i) * w + j]; }
  double at(std::size_t i, std::size_t j, std::size_t ch, std::size_t k) const {
    return data[((k * n + ch) * h + i) * w + j];
  }
};

namespace detail {

// Rotates `planes` stacked h x w planes; out(x) = in(R^-1 x).
inline void rotate_planes(const double* src, double* dst, std::size_t planes, std::size_t h, std::size_t w,
                          const Mat2& r) {
  if (auto q = quarter_turns(r)) {
    if (*q % 2 == 1 && h != w)
      throw ShapeError("exact quarter-turn rotation needs a square raster, got " + std::to_string(h) + "x" +
                       std::to_string(w));
    if (*q == 0) {
      std::copy(src, src + planes * h * w, dst);
      return;
    }
    const auto hh = static_cast<long long>(h), ww = static_cast<long long>(w);
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        // Doubled centered coordinates keep the index chase in integers.
        const long long u = 2 * static_cast<long long>(j) - (ww - 1);
        const long long v = (hh - 1) - 2 * static_cast<long long>(i);
        long long su = u, sv = v;
        switch (*q) {
          case 1: su = v; sv = -u; break;
          case 2: su = -u; sv = -v; break;
          case 3: su = -v; sv = u; break;
          default: break;
        }
        const auto sj = static_cast<std::size_t>((su + ww - 1) / 2);
        const auto si = static_cast<std::size_t>((hh - 1 - sv) / 2);
        for (std::size_t p = 0; p < planes; ++p) dst[(p * h + i) * w + j] = src[(p * h + si) * w + sj];
      }
    }
    return;
  }
  const Mat2 inv = r.inverse();
  const double dx = 2.0 / static_cast<double>(w), dy = 2.0 / static_cast<double>(h);
  const auto hh = static_cast<long long>(h), ww = static_cast<long long>(w);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const Vec2 x{-1.0 + (static_cast<double>(j) + 0.5) * dx, 1.0 - (static_cast<double>(i) + 0.5) * dy};
      const Vec2 s = inv * x;
      const double fj = (s[0] + 1.0) / dx - 0.5;
      const double fi = (1.0 - s[1]) / dy - 0.5;
      const double j0 = std::floor(fj), i0 = std::floor(fi);
      const double ax = fj - j0, ay = fi - i0;
      const auto jj = static_cast<long long>(j0), ii = static_cast<long long>(i0);
      for (std::size_t p = 0; p < planes; ++p) {
        auto px = [&](long long y, long long xx) {
          if (y < 0 || y >= hh || xx < 0 || xx >= ww) return 0.0;
          return src[(p * h + static_cast<std::size_t>(y)) * w + static_cast<std::size_t>(xx)];
        };
        dst[(p * h + i) * w + j] = (1 - ay) * ((1 - ax) * px(ii, jj) + ax * px(ii, jj + 1)) +
                                   ay * ((1 - ax) * px(ii + 1, jj) + ax * px(ii + 1, jj + 1));
      }
    }
  }
}

}  // namespace detail

// Right-angle rotations are exact index permutations; other angles use
// bilinear interpolation with zero fill outside the domain.
inline Image rotate_image(const Image& img, const Mat2& r) {
  Image out(img.h, img.w, img.c);
  detail::rotate_planes(img.data.data(), out.data.data(), img.c, img.h, img.w, r);
  return out;
}

// Positive angles turn counter-clockwise.
inline Image rotate_image(const Image& img, double angle) {
  if (auto q = quarter_turns(angle)) return rotate_image(img, quarter_turn_matrix(*q));
  return rotate_image(img, Mat2::rotation(angle));
}

// Output slot j holds the spatially rotated input slot (j - k) mod t.
inline GroupFeatureMap rotate_feature(const GroupFeatureMap& f, const RotationGroup& group, std::size_t k) {
  if (f.t != group.order())
    throw GroupError("feature map has t=" + std::to_string(f.t) + " but group order is " +
                     std::to_string(group.order()));
  const Mat2& r = group.element(k);
  GroupFeatureMap out(f.h, f.w, f.n, f.t);
  const std::size_t slot = f.n * f.h * f.w;
  for (std::size_t j = 0; j < f.t; ++j) {
    const std::size_t src = (j + f.t - k) % f.t;
    detail::rotate_planes(f.data.data() + src * slot, out.data.data() + j * slot, f.n, f.h, f.w, r);
  }
  return out;
}

// Pixels whose centers lie within the disk through the outermost pixel
// centers; rotated samples there never touch the zero fill.
inline std::vector<std::uint8_t> inscribed_disk_mask(std::size_t h, std::size_t w) {
  const double radius = 1.0 - std::max(1.0 / static_cast<double>(h), 1.0 / static_cast<double>(w));
  std::vector<std::uint8_t> mask(h * w, 0);
  Image probe(h, w, 0);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const Vec2 x = probe.coordinate(i, j);
      mask[i * w + j] = std::hypot(x[0], x[1]) <= radius + 1e-12 ? 1 : 0;
    }
  return mask;
}

}  // namespace equisr
