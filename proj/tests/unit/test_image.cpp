#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "stylecore/error.hpp"
#include "stylecore/image.hpp"
#include "stylecore/imageio.hpp"
#include "support.hpp"

using namespace stylecore;

namespace {

ImageBuffer gray(int h, int w, std::vector<double> v) { return ImageBuffer(h, w, 1, std::move(v)); }

}  // namespace

TEST(Resize, ConstantIsPreserved) {
  const ImageBuffer img(4, 4, 3, Colorspace::SRGB, 0.5);
  const ImageBuffer out = resize_bilinear(img, 8, 8);
  for (double v : out.storage()) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(Resize, SameSizeIsIdentity) {
  const ImageBuffer img = gray(2, 2, {0.1, 0.7, 0.3, 0.9});
  EXPECT_EQ(resize_bilinear(img, 2, 2).storage(), img.storage());
}

TEST(Resize, HalfPixelCentersOnAColumn) {
  // Output centers map to source y = -0.25, 0.25, 0.75, 1.25, clamped at the border.
  const ImageBuffer out = resize_bilinear(gray(2, 1, {0.0, 1.0}), 4, 1);
  const std::vector<double> golden{0.0, 0.25, 0.75, 1.0};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(out.at(i, 0, 0), golden[i], 1e-15);
}

TEST(Resize, LongSideKeepsAspect) {
  const ImageBuffer out = resize_long_side(ImageBuffer(30, 60, 3), 32);
  EXPECT_EQ(out.width(), 32);
  EXPECT_EQ(out.height(), 16);
}

TEST(Downsample, OddTrailingRowAveragesWithItself) {
  const ImageBuffer out = downsample_box2(gray(3, 2, {1, 3, 2, 4, 8, 6}));
  ASSERT_EQ(out.height(), 2);
  ASSERT_EQ(out.width(), 1);
  EXPECT_DOUBLE_EQ(out.at(0, 0, 0), 2.5);
  EXPECT_DOUBLE_EQ(out.at(1, 0, 0), 7.0);
}

TEST(Rotate, QuarterTurnCounterClockwise) {
  const ImageBuffer out = rotate90(gray(2, 3, {1, 2, 3, 4, 5, 6}), 1);
  ASSERT_EQ(out.height(), 3);
  ASSERT_EQ(out.width(), 2);
  EXPECT_EQ(out.storage(), (std::vector<double>{3, 6, 2, 5, 1, 4}));
  EXPECT_EQ(rotate90(rotate90(out, 2), 1).storage(), gray(2, 3, {1, 2, 3, 4, 5, 6}).storage());
}

TEST(Pyramid, ConstantImageHasZeroBands) {
  const ImageBuffer img(16, 16, 3, Colorspace::SRGB, 0.4);
  const LaplacianPyramid p = build_laplacian_pyramid(img, 4);
  ASSERT_EQ(p.levels.size(), 4u);
  for (std::size_t l = 0; l + 1 < p.levels.size(); ++l) {
    for (double v : p.levels[l].storage()) EXPECT_DOUBLE_EQ(v, 0.0);
  }
  for (double v : p.levels.back().storage()) EXPECT_DOUBLE_EQ(v, 0.4);
}

TEST(Pyramid, SingleLevelIsTheImage) {
  Rng rng(1);
  const ImageBuffer img = testing_support::random_image(5, 7, 3, rng);
  const LaplacianPyramid p = build_laplacian_pyramid(img, 1);
  ASSERT_EQ(p.levels.size(), 1u);
  EXPECT_EQ(p.levels[0].storage(), img.storage());
}

TEST(Pyramid, RoundTrip) {
  Rng rng(2);
  const ImageBuffer img = testing_support::random_image(8, 8, 3, rng);
  EXPECT_LE(max_abs_difference(collapse_laplacian_pyramid(build_laplacian_pyramid(img, 3)), img), 1e-5);
  const ImageBuffer odd = testing_support::random_image(13, 22, 3, rng);
  EXPECT_LE(max_abs_difference(collapse_laplacian_pyramid(build_laplacian_pyramid(odd, 4)), odd), 1e-12);
}

TEST(Pyramid, AllZeroCollapsesToZero) {
  LaplacianPyramid p;
  p.levels = {ImageBuffer(8, 8, 3), ImageBuffer(4, 4, 3), ImageBuffer(2, 2, 3)};
  const ImageBuffer out = collapse_laplacian_pyramid(p);
  for (double v : out.storage()) EXPECT_EQ(v, 0.0);
}

TEST(Pyramid, TooManyLevelsRejected) {
  EXPECT_THROW(build_laplacian_pyramid(ImageBuffer(4, 4, 1), 5), Error);
}

TEST(Lab, BlackAndWhite) {
  const ImageBuffer bw(1, 2, 3, {0, 0, 0, 1, 1, 1});
  const ImageBuffer lab = rgb_to_lab(bw);
  EXPECT_NEAR(lab.at(0, 0, 0), 0.0, 1e-9);
  EXPECT_NEAR(lab.at(0, 0, 1), 0.0, 1e-9);
  EXPECT_NEAR(lab.at(0, 0, 2), 0.0, 1e-9);
  EXPECT_NEAR(lab.at(0, 1, 0), 100.0, 1e-6);
  EXPECT_NEAR(lab.at(0, 1, 1), 0.0, 1e-3);
  EXPECT_NEAR(lab.at(0, 1, 2), 0.0, 1e-3);
  EXPECT_EQ(lab.colorspace(), Colorspace::Lab);
}

TEST(Lab, SaturatedRed) {
  const ImageBuffer lab = rgb_to_lab(ImageBuffer(1, 1, 3, {1, 0, 0}));
  EXPECT_NEAR(lab.at(0, 0, 0), 53.24, 0.01);
  EXPECT_NEAR(lab.at(0, 0, 1), 80.09, 0.01);
  EXPECT_NEAR(lab.at(0, 0, 2), 67.20, 0.01);
}

TEST(Lab, RoundTrip) {
  Rng rng(3);
  const ImageBuffer img = testing_support::random_image(9, 11, 3, rng);
  EXPECT_LE(max_abs_difference(lab_to_rgb(rgb_to_lab(img)), img), 1e-9);
}

TEST(Opponent, GrayAndRed) {
  const ImageBuffer opp = to_opponent_space(ImageBuffer(1, 2, 3, {0.4, 0.4, 0.4, 1, 0, 0}));
  EXPECT_NEAR(opp.at(0, 0, 0), 0.4 * std::sqrt(3.0), 1e-12);
  EXPECT_NEAR(opp.at(0, 0, 1), 0.0, 1e-12);
  EXPECT_NEAR(opp.at(0, 0, 2), 0.0, 1e-12);
  EXPECT_NEAR(opp.at(0, 1, 0), 1 / std::sqrt(3.0), 1e-12);
  EXPECT_NEAR(opp.at(0, 1, 1), 1 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(opp.at(0, 1, 2), 1 / std::sqrt(6.0), 1e-12);
}

TEST(Opponent, MatrixIsOrthonormal) {
  const auto& m = opponent_matrix();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double d = 0;
      for (int k = 0; k < 3; ++k) d += m[i][k] * m[j][k];
      EXPECT_NEAR(d, i == j ? 1.0 : 0.0, 1e-12);
    }
  }
}

TEST(Srgb, LinearRoundTrip) {
  Rng rng(4);
  const ImageBuffer img = testing_support::random_image(4, 4, 3, rng);
  EXPECT_LE(max_abs_difference(linear_to_srgb(srgb_to_linear(img)), img), 1e-12);
}

TEST(ImageIo, PngRoundTripIsEightBitExact) {
  Rng rng(5);
  ImageBuffer img(6, 5, 3);
  for (auto& v : img.storage()) v = rng.below(256) / 255.0;
  const auto path = std::filesystem::temp_directory_path() / "stylecore_image_io_test.png";
  write_image(img, path);
  const ImageBuffer back = read_image(path);
  std::filesystem::remove(path);
  ASSERT_TRUE(back.same_shape(img));
  EXPECT_LE(max_abs_difference(back, img), 1e-12);
}

TEST(ImageIo, DataImagesDecode) {
  const ImageBuffer a = testing_support::load_data_image("astronaut");
  EXPECT_EQ(a.channels(), 3);
  EXPECT_EQ(a.height(), 256);
}

TEST(ImageIo, GarbageIsAFormatError) {
  try {
    decode_image({1, 2, 3, 4});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Format);
  }
}
