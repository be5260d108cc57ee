#include <gtest/gtest.h>

#include <numbers>

#include "equisr/group.hpp"
#include "test_util.hpp"

using namespace equisr;
using equisr::testing::max_abs_diff;
using equisr::testing::random_feature;
using equisr::testing::random_image;

TEST(Group, QuarterTurnElement) {
  const auto g = make_group(4);
  const Mat2& a = g.element(1);
  EXPECT_EQ(a.m00, 0.0);
  EXPECT_EQ(a.m01, 1.0);
  EXPECT_EQ(a.m10, -1.0);
  EXPECT_EQ(a.m11, 0.0);
}

TEST(Group, TrivialAndEighth) {
  const auto g1 = make_group(1);
  EXPECT_EQ(g1.order(), 1u);
  EXPECT_EQ(g1.element(0).max_abs_diff(Mat2::identity()), 0.0);
  const auto g8 = make_group(8);
  const double r = std::sqrt(2.0) / 2.0;
  const Mat2& a = g8.element(1);
  EXPECT_NEAR(a.m00, r, 1e-12);
  EXPECT_NEAR(a.m01, r, 1e-12);
  EXPECT_NEAR(a.m10, -r, 1e-12);
  EXPECT_NEAR(a.m11, r, 1e-12);
}

TEST(Group, ZeroOrderRejected) { EXPECT_THROW(make_group(0), InvalidOrderError); }

TEST(Group, TablesMatchMatrixAlgebra) {
  for (std::size_t t : {1u, 2u, 3u, 4u, 8u, 16u}) {
    const auto g = make_group(t);
    EXPECT_EQ(g.element(0).max_abs_diff(Mat2::identity()), 0.0);
    for (std::size_t k = 0; k < t; ++k) {
      EXPECT_TRUE(g.element(k).is_orthogonal(1e-12));
      EXPECT_NEAR(g.element(k).det(), 1.0, 1e-12);
      EXPECT_LE(g.element(g.inverse(k)).max_abs_diff(g.element(k).inverse()), 1e-12);
      for (std::size_t j = 0; j < t; ++j)
        EXPECT_LE(g.element(g.compose(k, j)).max_abs_diff(g.element(k) * g.element(j)), 1e-12);
    }
  }
  EXPECT_THROW(make_group(4).element(4), IndexError);
}

TEST(Group, LiftCoordinate) {
  const auto g = make_group(4);
  const auto l0 = g.lift({0.0, 0.0});
  ASSERT_EQ(l0.size(), 4u);
  for (const auto& v : l0) EXPECT_EQ(v, (Vec2{0.0, 0.0}));
  const auto l = g.lift({1.0, 0.0});
  // A_k^-1 turns counter-clockwise by k quarter turns.
  const Vec2 expect[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  for (int k = 0; k < 4; ++k) {
    EXPECT_NEAR(l[k][0], expect[k][0], 1e-12);
    EXPECT_NEAR(l[k][1], expect[k][1], 1e-12);
  }
  const auto g8 = make_group(8);
  for (const auto& v : g8.lift({0.3, -0.7})) EXPECT_NEAR(std::hypot(v[0], v[1]), std::hypot(0.3, 0.7), 1e-12);
}

TEST(RotateImage, TwoByTwoQuarterTurn) {
  Image img(2, 2, 1);
  img.data = {1, 2, 3, 4};  // [[a,b],[c,d]]
  const auto r = rotate_image(img, std::numbers::pi / 2);
  EXPECT_EQ(r.data, (std::vector<double>{2, 4, 1, 3}));
}

TEST(RotateImage, FourQuarterTurnsIdentity) {
  const auto img = random_image(7, 7, 3, 1);
  Image r = img;
  for (int i = 0; i < 4; ++i) r = rotate_image(r, std::numbers::pi / 2);
  EXPECT_EQ(r.data, img.data);
  EXPECT_EQ(rotate_image(img, 0.0).data, img.data);
}

TEST(RotateImage, ConstantInsideDisk) {
  Image img(16, 16, 1, 0.37);
  const auto r = rotate_image(img, std::numbers::pi / 6);
  const auto mask = inscribed_disk_mask(16, 16);
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) { EXPECT_NEAR(r.data[i], 0.37, 1e-12); }
  const auto q = rotate_image(img, std::numbers::pi);
  EXPECT_EQ(q.data, img.data);
}

TEST(RotateImage, NonSquareQuarterTurnThrows) {
  EXPECT_THROW(rotate_image(Image(3, 4, 1), std::numbers::pi / 2), ShapeError);
  EXPECT_NO_THROW(rotate_image(Image(3, 4, 1), std::numbers::pi));
}

TEST(RotateFeature, TrivialGroupMatchesImage) {
  const auto g = make_group(1);
  auto f = random_feature(6, 6, 2, 1, 3);
  Image img(6, 6, 2);
  img.data = f.data;
  EXPECT_EQ(rotate_feature(f, g, 0).data, f.data);
  const auto g4 = make_group(4);
  EXPECT_EQ(rotate_feature(f, g, 0).data, rotate_image(img, g4.element(0)).data);
}

TEST(RotateFeature, ActionComposes) {
  for (std::size_t t : {2u, 4u}) {
    const auto g = make_group(t);
    const auto f = random_feature(5, 5, 2, t, 9);
    for (std::size_t k = 0; k < t; ++k)
      for (std::size_t j = 0; j < t; ++j)
        EXPECT_EQ(rotate_feature(rotate_feature(f, g, k), g, j).data, rotate_feature(f, g, g.compose(j, k)).data);
  }
}

TEST(RotateFeature, InterpolatedActionInsideDisk) {
  const auto g = make_group(8);
  const auto f = random_feature(12, 12, 1, 8, 4);
  const auto mask = inscribed_disk_mask(12, 12);
  // Composition of two non-right-angle bilinear rotations is only approximate
  // in general, but the cyclic index algebra is exact: test with quarter turns mixed in.
  const auto a = rotate_feature(rotate_feature(f, g, 2), g, 4);
  const auto b = rotate_feature(f, g, 6);
  for (std::size_t k = 0; k < 8; ++k)
    for (std::size_t p = 0; p < 144; ++p)
      if (mask[p]) { EXPECT_NEAR(a.data[k * 144 + p], b.data[k * 144 + p], 1e-10); }
}

TEST(RotateFeature, OneHotIndexChase) {
  const auto g = make_group(4);
  GroupFeatureMap f(4, 4, 1, 4);
  f.at(0, 1, 0, 0) = 1.0;
  const auto r = rotate_feature(f, g, 1);
  // A_1 turns clockwise: pixel (row 0, col 1) moves to (row 1, col 3).
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        EXPECT_EQ(r.at(i, j, 0, k), (k == 1 && i == 1 && j == 3) ? 1.0 : 0.0);
  EXPECT_THROW(rotate_feature(f, g, 4), IndexError);
  EXPECT_THROW(rotate_feature(f, make_group(2), 1), GroupError);
}

TEST(RotateImage, DiskMask) {
  const auto m = inscribed_disk_mask(4, 4);
  EXPECT_EQ(m[0], 0);
  EXPECT_EQ(m[5], 1);
}
