#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "equisr/filter.hpp"
#include "equisr/gradcheck.hpp"
#include "test_util.hpp"

using namespace equisr;
using equisr::testing::max_abs_diff;
using equisr::testing::random_feature;
using equisr::testing::random_image;

namespace {

ParamFilter<double> random_filter(std::size_t c_out, std::size_t g_in, std::size_t c_in, std::size_t p,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto f = ParamFilter<double>::zeros(c_out, g_in, c_in, p);
  f.coeffs = uniform_tensor<double>(f.coeffs.shape, 1.0, rng);
  return f;
}

// Counter-clockwise quarter turn of every p x p slice.
Tensor<double> rot90_slices(const Tensor<double>& k) {
  const std::size_t p = k.shape[3];
  Tensor<double> out(k.shape);
  for (std::size_t s = 0; s < k.size() / (p * p); ++s)
    for (std::size_t r = 0; r < p; ++r)
      for (std::size_t c = 0; c < p; ++c) out[s * p * p + r * p + c] = k[s * p * p + c * p + (p - 1 - r)];
  return out;
}

// Plain valid/same correlation, independent of the tape.
std::vector<double> direct_conv(const Image& img, const std::vector<double>& k, std::size_t p) {
  const long h = static_cast<long>(p / 2);
  std::vector<double> out(img.h * img.w, 0.0);
  for (std::size_t i = 0; i < img.h; ++i)
    for (std::size_t j = 0; j < img.w; ++j)
      for (std::size_t c = 0; c < img.c; ++c)
        for (std::size_t r = 0; r < p; ++r)
          for (std::size_t q = 0; q < p; ++q) {
            const long y = static_cast<long>(i + r) - h, x = static_cast<long>(j + q) - h;
            if (y < 0 || x < 0 || y >= static_cast<long>(img.h) || x >= static_cast<long>(img.w)) continue;
            out[i * img.w + j] += img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c) *
                                  k[(c * p + r) * p + q];
          }
  return out;
}

}  // namespace

TEST(PhiBic, Values) {
  EXPECT_EQ(phi_bic(0.0), 1.0);
  EXPECT_EQ(phi_bic(1.0), 0.0);
  EXPECT_EQ(phi_bic(2.0), 0.0);
  EXPECT_EQ(phi_bic(-1.0), 0.0);
  EXPECT_EQ(phi_bic(2.5), 0.0);
  EXPECT_DOUBLE_EQ(phi_bic(0.5), 0.5625);
  EXPECT_DOUBLE_EQ(phi_bic(-1.5), -0.0625);
}

TEST(BicubicBasis, InterpolationProperty) {
  for (std::size_t p : {1u, 3u, 5u, 7u}) {
    const BicubicBasis b(p);
    for (std::size_t k = 0; k < b.count(); ++k)
      for (std::size_t u = 0; u < b.count(); ++u) EXPECT_NEAR(b.evaluate(k, b.node(u)), k == u ? 1.0 : 0.0, 1e-14);
  }
  EXPECT_THROW(BicubicBasis(4), ConfigError);
  const BicubicBasis b3(3);
  EXPECT_EQ(b3.node(0), (Vec2{-1.0, 1.0}));
  EXPECT_EQ(b3.node(5), (Vec2{1.0, 0.0}));
}

TEST(Synthesis, IdentityAndQuarterTurn) {
  for (std::size_t p : {3u, 5u, 7u}) {
    const auto f = random_filter(2, 3, 2, p, p);
    EXPECT_LE(max_abs_diff(synthesize_kernel(f, Mat2::identity()).data, f.coeffs.data), 1e-12);
    const auto k90 = synthesize_kernel(f, Mat2::rotation(std::numbers::pi / 2));
    EXPECT_LE(max_abs_diff(k90.data, rot90_slices(f.coeffs).data), 1e-12);
  }
}

TEST(Synthesis, CenterImpulseAt45Degrees) {
  auto f = ParamFilter<double>::zeros(1, 1, 1, 5);
  f.coeffs[12] = 1.0;
  const Mat2 a = Mat2::rotation(std::numbers::pi / 4);
  const auto k = synthesize_kernel(f, a);
  const BicubicBasis b(5);
  const double s = std::sqrt(0.5);
  for (std::size_t u = 0; u < 25; ++u) {
    const Vec2 n = b.node(u);
    const Vec2 src{s * n[0] + s * n[1], -s * n[0] + s * n[1]};
    EXPECT_NEAR(k[u], phi_bic(src[0]) * phi_bic(src[1]), 1e-15);
  }
}

TEST(Synthesis, LinearityAndErrors) {
  const auto f = random_filter(2, 1, 3, 5, 1), g = random_filter(2, 1, 3, 5, 2);
  auto fg = f;
  for (std::size_t i = 0; i < fg.coeffs.size(); ++i) fg.coeffs[i] = 2.0 * f.coeffs[i] - 0.5 * g.coeffs[i];
  const Mat2 a = Mat2::rotation(0.7);
  const auto kf = synthesize_kernel(f, a), kg = synthesize_kernel(g, a), kfg = synthesize_kernel(fg, a);
  for (std::size_t i = 0; i < kf.size(); ++i) EXPECT_NEAR(kfg[i], 2.0 * kf[i] - 0.5 * kg[i], 1e-13);
  EXPECT_THROW(synthesize_kernel(f, Mat2{1.0, 0.5, 0.0, 1.0}), MatrixError);
}

TEST(Synthesis, DiskMaskZeroesCorners) {
  const auto f = random_filter(1, 1, 1, 7, 3);
  const auto k = synthesize_kernel(f, Mat2::identity(), true);
  EXPECT_EQ(k[0], 0.0);
  EXPECT_EQ(k[24], f.coeffs[24]);
  // p = 5 fits inside the disk entirely.
  const auto f5 = random_filter(1, 1, 1, 5, 3);
  EXPECT_EQ(synthesize_kernel(f5, Mat2::identity(), true).data, f5.coeffs.data);
}

TEST(LiftingConv, TrivialGroupIsPlainConv) {
  const auto img = random_image(8, 8, 2, 4);
  const auto f = random_filter(1, 1, 2, 3, 5);
  const auto out = lifting_conv(img, f, make_group(1), Padding::same);
  EXPECT_LE(max_abs_diff(out.data, direct_conv(img, f.coeffs.data, 3)), 1e-13);
}

TEST(LiftingConv, SymmetricFilterGivesIdenticalSlots) {
  const auto img = random_image(8, 8, 1, 6);
  auto f = ParamFilter<double>::zeros(2, 1, 1, 3);
  for (auto& v : f.coeffs.data) v = 0.25;
  const auto out = lifting_conv(img, f, make_group(4), Padding::same);
  const std::size_t slot = 2 * 64;
  for (std::size_t k = 1; k < 4; ++k)
    for (std::size_t i = 0; i < slot; ++i) EXPECT_NEAR(out.data[k * slot + i], out.data[i], 1e-14);
}

TEST(LiftingConv, ExactRightAngleEquivariance) {
  for (std::size_t t : {1u, 2u, 4u}) {
    const auto g = make_group(t);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto img = random_image(9, 9, 2, seed);
      const auto f = random_filter(3, 1, 2, 5, seed + 50);
      const auto base = lifting_conv(img, f, g, Padding::same);
      for (std::size_t k = 0; k < t; ++k) {
        const auto lhs = lifting_conv(rotate_image(img, g.element(k)), f, g, Padding::same);
        EXPECT_LE(max_abs_diff(lhs.data, rotate_feature(base, g, k).data), 1e-10);
      }
    }
  }
}

TEST(LiftingConv, Errors) {
  EXPECT_THROW(lifting_conv(random_image(5, 5, 3, 1), random_filter(1, 1, 2, 3, 1), make_group(4), Padding::same),
               ShapeError);
  EXPECT_THROW(lifting_conv(random_image(5, 5, 2, 1), random_filter(1, 2, 2, 3, 1), make_group(2), Padding::same),
               ShapeError);
}

TEST(GroupConv, PointwiseTwoSlotHandExample) {
  const auto g = make_group(2);
  GroupFeatureMap in(1, 1, 1, 2);
  in.data = {3.0, 5.0};  // H(A_0), H(A_1)
  auto f = ParamFilter<double>::zeros(1, 2, 1, 1);
  f.coeffs.data = {2.0, 7.0};  // W^{A_0}, W^{A_1}
  const auto out = group_conv(in, f, g, Padding::same);
  // Slot A: sum_B W^{A^-1 B} H(B).
  EXPECT_EQ(out.data, (std::vector<double>{2.0 * 3.0 + 7.0 * 5.0, 7.0 * 3.0 + 2.0 * 5.0}));
}

TEST(GroupConv, IdentityFilter) {
  const auto g = make_group(4);
  const auto in = random_feature(6, 6, 2, 4, 7);
  auto f = ParamFilter<double>::zeros(2, 4, 2, 3);
  for (std::size_t c = 0; c < 2; ++c) f.coeffs[((c * 4 + 0) * 2 + c) * 9 + 4] = 1.0;
  EXPECT_LE(max_abs_diff(group_conv(in, f, g, Padding::same).data, in.data), 1e-15);
}

TEST(GroupConv, ExactRightAngleEquivariance) {
  for (std::size_t t : {1u, 2u, 4u}) {
    const auto g = make_group(t);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto x = random_feature(8, 8, 2, t, seed);
      const auto f = random_filter(2, t, 2, 5, seed + 100);
      const auto base = group_conv(x, f, g, Padding::same);
      for (std::size_t k = 0; k < t; ++k) {
        const auto lhs = group_conv(rotate_feature(x, g, k), f, g, Padding::same);
        EXPECT_LE(max_abs_diff(lhs.data, rotate_feature(base, g, k).data), 1e-10);
      }
    }
  }
}

TEST(GroupConv, Errors) {
  const auto x = random_feature(5, 5, 2, 4, 1);
  EXPECT_THROW(group_conv(x, random_filter(1, 2, 2, 3, 1), make_group(4), Padding::same), GroupError);
  EXPECT_THROW(group_conv(x, random_filter(1, 4, 3, 3, 1), make_group(4), Padding::same), ShapeError);
}

TEST(FilterGrad, CompositeLayers) {
  using namespace equisr::ad;
  const auto g = make_group(4);
  const KernelSynthesizer<double> synth(3, g);
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto img = to_tensor<double>(random_image(5, 5, 1, seed));
    const auto f1 = random_filter(1, 1, 1, 3, seed).coeffs;
    const auto f2 = random_filter(1, 4, 1, 3, seed + 9).coeffs;
    TapeFunction<double> fn = [&](Tape<double>& tape, const std::vector<Var<double>>& v) {
      auto h = relu(lifting_conv(v[0], v[1], synth, Padding::same));
      auto y = group_conv(h, v[2], synth, Padding::same);
      return mean_abs(y - constant(tape, Tensor<double>(y.shape(), 0.1)));
    };
    const auto r = check_gradients(fn, {img, f1, f2});
    EXPECT_LE(r.max_rel_error, 1e-4);
  }
}
