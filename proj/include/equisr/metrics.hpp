#pragma once

// Norm-ratio error metrics and PSNR.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "equisr/group.hpp"

namespace equisr {

// Per-pixel selection shared by every channel; empty means all pixels.
using PixelMask = std::vector<std::uint8_t>;

namespace detail {

inline void check_pair(const Image& a, const Image& b, const PixelMask& mask) {
  if (!a.same_shape(b))
    throw ShapeError("metric operands differ in shape: " + std::to_string(a.h) + "x" + std::to_string(a.w) + "x" +
                     std::to_string(a.c) + " vs " + std::to_string(b.h) + "x" + std::to_string(b.w) + "x" +
                     std::to_string(b.c));
  if (!mask.empty() && mask.size() != a.h * a.w) throw ShapeError("mask size does not match the image");
}

// Lp norms (p = 1 or 2) of the difference and of the reference.
inline std::pair<double, double> norm_pair(const Image& xr, const Image& x0, const PixelMask& mask, int p) {
  check_pair(xr, x0, mask);
  const std::size_t plane = x0.h * x0.w;
  double diff = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < x0.data.size(); ++i) {
    if (!mask.empty() && !mask[i % plane]) continue;
    const double d = std::abs(xr.data[i] - x0.data[i]), r = std::abs(x0.data[i]);
    diff += p == 1 ? d : d * d;
    ref += p == 1 ? r : r * r;
  }
  if (ref == 0.0) throw UndefinedMetricError("reference image has zero norm");
  return p == 1 ? std::pair{diff, ref} : std::pair{std::sqrt(diff), std::sqrt(ref)};
}

}  // namespace detail

// ||x_r - x_0||_2 / ||x_0||_2
inline double nmse(const Image& xr, const Image& x0, const PixelMask& mask = {}) {
  const auto [d, r] = detail::norm_pair(xr, x0, mask, 2);
  return d / r;
}

// ||x_r - x_0||_1 / ||x_0||_1
inline double nmae(const Image& xr, const Image& x0, const PixelMask& mask = {}) {
  const auto [d, r] = detail::norm_pair(xr, x0, mask, 1);
  return d / r;
}

// 10 log10(1 / MSE) over every channel; +infinity for identical images.
inline double psnr(const Image& a, const Image& b) {
  detail::check_pair(a, b, {});
  if (a.data.empty()) throw UndefinedMetricError("PSNR of empty images");
  double se = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) se += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(static_cast<double>(a.data.size()) / se);
}

inline std::string format_psnr(double db) {
  if (std::isinf(db)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", db);
  return buf;
}

}  // namespace equisr
