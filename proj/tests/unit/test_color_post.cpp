#include <gtest/gtest.h>

#include <cmath>

#include "stylecore/color_post.hpp"
#include "support.hpp"

using namespace stylecore;

namespace {

ImageBuffer lab_image(int h, int w, Rng& rng, double l_lo, double l_hi, double ab) {
  ImageBuffer img(h, w, 3, Colorspace::Lab);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      img.at(y, x, 0) = rng.uniform(l_lo, l_hi);
      img.at(y, x, 1) = rng.uniform(-ab, ab);
      img.at(y, x, 2) = rng.uniform(-ab, ab) + 0.3 * img.at(y, x, 1);
    }
  }
  return img;
}

std::array<double, 3> mean3(const ImageBuffer& img) {
  std::array<double, 3> m{};
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    for (int c = 0; c < 3; ++c) m[c] += img.storage()[3 * p + c];
  }
  for (auto& v : m) v /= static_cast<double>(img.pixel_count());
  return m;
}

// Gaussian blur with the truncated, renormalized window the filter uses.
ImageBuffer gaussian_oracle(const ImageBuffer& ab, double sigma) {
  const int r = static_cast<int>(std::ceil(3 * sigma));
  ImageBuffer out(ab.height(), ab.width(), ab.channels());
  for (int y = 0; y < ab.height(); ++y) {
    for (int x = 0; x < ab.width(); ++x) {
      double ws = 0;
      std::vector<double> acc(static_cast<std::size_t>(ab.channels()), 0.0);
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          const int yy = y + dy;
          const int xx = x + dx;
          if (yy < 0 || xx < 0 || yy >= ab.height() || xx >= ab.width()) continue;
          const double w = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
          ws += w;
          for (int c = 0; c < ab.channels(); ++c) acc[static_cast<std::size_t>(c)] += w * ab.at(yy, xx, c);
        }
      }
      for (int c = 0; c < ab.channels(); ++c) out.at(y, x, c) = acc[static_cast<std::size_t>(c)] / ws;
    }
  }
  return out;
}

}  // namespace

TEST(Bilateral, ConstantGuideIsGaussianBlur) {
  Rng rng(1);
  const ImageBuffer ab = testing_support::random_image(12, 15, 2, rng, -50, 50);
  const ImageBuffer guide(12, 15, 1, Colorspace::SRGB, 40.0);
  EXPECT_LE(max_abs_difference(guided_bilateral_filter(ab, guide, 1.5, 10), gaussian_oracle(ab, 1.5)), 1e-10);
}

TEST(Bilateral, ConstantInputUnchanged) {
  Rng rng(2);
  const ImageBuffer ab(10, 10, 2, Colorspace::SRGB, 7.0);
  const ImageBuffer guide = testing_support::random_image(10, 10, 1, rng, 0, 100);
  const ImageBuffer out = guided_bilateral_filter(ab, guide, 2, 5);
  for (double v : out.storage()) EXPECT_NEAR(v, 7.0, 1e-12);
}

TEST(Bilateral, EdgeMovesTowardGuide) {
  // Guide steps at x = 10, AB steps at x = 12; the filtered AB profile should
  // sit closer to the guide's step than the input does.
  const int w = 24;
  ImageBuffer guide(1, w, 1);
  ImageBuffer ab(1, w, 2);
  for (int x = 0; x < w; ++x) {
    guide.at(0, x, 0) = x < 10 ? 20.0 : 80.0;
    ab.at(0, x, 0) = x < 12 ? -40.0 : 40.0;
    ab.at(0, x, 1) = 0.0;
  }
  const ImageBuffer out = guided_bilateral_filter(ab, guide, 3, 5);
  for (int x = 10; x < 12; ++x) EXPECT_GT(out.at(0, x, 0), ab.at(0, x, 0));
  for (int x = 0; x + 1 < w; ++x) EXPECT_LE(out.at(0, x, 0), out.at(0, x + 1, 0) + 1e-12);
}

TEST(MomentMatch, SelfIsIdentity) {
  Rng rng(3);
  const ImageBuffer img = lab_image(16, 16, rng, 20, 80, 30);
  EXPECT_LE(max_abs_difference(match_color_moments(img, img), img), 1e-4);
}

TEST(MomentMatch, GrayInputTakesStyleMean) {
  Rng rng(4);
  ImageBuffer gray = lab_image(16, 16, rng, 20, 80, 0);
  const ImageBuffer style = lab_image(20, 20, rng, 30, 70, 40);
  const auto m = mean3(match_color_moments(gray, style, false));
  const auto s = mean3(style);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(m[c], s[c], 1e-9);
}

TEST(Monochrome, GrayAndColorful) {
  ImageBuffer gray(8, 8, 3);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      for (int c = 0; c < 3; ++c) gray.at(y, x, c) = (x + y) / 14.0;
    }
  }
  EXPECT_TRUE(is_monochrome(rgb_to_lab(gray)));
  ImageBuffer two(8, 8, 3);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      two.at(y, x, 0) = x < 4 ? 1.0 : 0.0;
      two.at(y, x, 2) = x < 4 ? 0.0 : 1.0;
    }
  }
  EXPECT_FALSE(is_monochrome(rgb_to_lab(two)));
}

TEST(Monochrome, ThresholdBoundary) {
  // Half the pixels at a = +s, half at -s: biased variance of a/256 is (s/256)^2.
  auto make = [](double var) {
    ImageBuffer img(10, 10, 3, Colorspace::Lab);
    const double s = 256.0 * std::sqrt(var);
    for (int y = 0; y < 10; ++y) {
      for (int x = 0; x < 10; ++x) {
        img.at(y, x, 0) = 50;
        img.at(y, x, 1) = (x + y) % 2 ? s : -s;
      }
    }
    return img;
  };
  EXPECT_TRUE(is_monochrome(make(0.99 * kMonochromeThreshold)));
  EXPECT_FALSE(is_monochrome(make(1.01 * kMonochromeThreshold)));
}

TEST(PostProcess, DisabledAndMonochromeAreIdentity) {
  const ImageBuffer st = testing_support::smooth_image(16, 16, 0.2);
  const ImageBuffer c = testing_support::smooth_image(16, 16, 1.2);
  EXPECT_EQ(post_process(st, c, c, {false}).storage(), st.storage());
  const ImageBuffer gray_style(10, 12, 3, Colorspace::SRGB, 0.5);
  EXPECT_EQ(post_process(st, c, gray_style).storage(), st.storage());
}

TEST(PostProcess, LuminanceIsKeptExactly) {
  const ImageBuffer st = testing_support::smooth_image(20, 24, 0.2);
  const ImageBuffer c = testing_support::smooth_image(20, 24, 1.2);
  const ImageBuffer s = testing_support::smooth_image(18, 18, 2.5);
  const ImageBuffer out = post_process_lab(st, c, s);
  const ImageBuffer ref = rgb_to_lab(st);
  for (std::size_t p = 0; p < out.pixel_count(); ++p) EXPECT_EQ(out.storage()[3 * p], ref.storage()[3 * p]);
}

TEST(PostProcess, SelfInputsStayWithinFilterBlur) {
  // With stylized = content = style the only loss is the AB blur; moment
  // matching should not add to it on average.
  const int n = 64;
  const ImageBuffer img = testing_support::smooth_image(n, n, 0.7);
  const ImageBuffer lab = rgb_to_lab(img);
  ImageBuffer ab(n, n, 2);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      ab.at(y, x, 0) = lab.at(y, x, 1);
      ab.at(y, x, 1) = lab.at(y, x, 2);
    }
  }
  const ColorPostConfig cfg;
  const ImageBuffer f = guided_bilateral_filter(ab, extract_channel(lab, 0), cfg.sigma_s, cfg.sigma_r);
  ImageBuffer blurred = lab;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      blurred.at(y, x, 1) = f.at(y, x, 0);
      blurred.at(y, x, 2) = f.at(y, x, 1);
    }
  }
  auto mean_err = [&](const ImageBuffer& a) {
    double e = 0;
    for (std::size_t i = 0; i < img.size(); ++i) e += std::abs(a.storage()[i] - img.storage()[i]);
    return e / static_cast<double>(img.size());
  };
  const double post = mean_err(post_process(img, img, img, cfg));
  EXPECT_LE(post, mean_err(clamp01(lab_to_rgb(blurred))));
  EXPECT_LT(post, 0.02);
}
