#include <gtest/gtest.h>

#include "stylecore/error.hpp"
#include "stylecore/image_tensor.hpp"
#include "stylecore/strotss.hpp"
#include "support.hpp"

using namespace stylecore;
using ad::Tape;
using ad::Tensor;

namespace {

const FeatureBank& bank() {
  static const FeatureBank b;
  return b;
}

StrotssConfig small_config() {
  StrotssConfig cfg;
  cfg.base_long_side = 32;
  cfg.scales = 1;
  cfg.steps = 5;
  cfg.samples = 64;
  return cfg;
}

}  // namespace

TEST(StrotssConfig, AlphaHalvesBeforeEveryScale) {
  StrotssConfig cfg;
  EXPECT_DOUBLE_EQ(cfg.alpha_at(0), 8.0);
  EXPECT_DOUBLE_EQ(cfg.alpha_at(1), 4.0);
  EXPECT_DOUBLE_EQ(cfg.alpha_at(3), 1.0);
  EXPECT_EQ(cfg.long_side_at(2), 256);
}

TEST(StrotssConfig, ValidateRejectsBadValues) {
  StrotssConfig cfg;
  cfg.alpha = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.steps = -1;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(InitOutput, ConstantContentGivesStyleMean) {
  const ImageBuffer content(40, 40, 3, Colorspace::SRGB, 0.3);
  const ImageBuffer style = testing_support::smooth_image(40, 40, 1.0);
  const ImageBuffer init = init_output(content, style, 32);
  const auto mu = mean_color(style);
  for (int y = 0; y < init.height(); ++y) {
    for (int x = 0; x < init.width(); ++x) {
      for (int c = 0; c < 3; ++c) EXPECT_NEAR(init.at(y, x, c), mu[c], 1e-12);
    }
  }
}

TEST(InitOutput, SelfStyleStillReplacesLowFrequencies) {
  const ImageBuffer img = testing_support::smooth_image(32, 32, 0.5);
  EXPECT_GT(max_abs_difference(init_output(img, img, 32), img), 1e-3);
}

TEST(TotalLoss, AlphaOneWeightsTermsEqually) {
  Rng rng(1);
  Tape t;
  auto o = t.constant(testing_support::random_tensor({6, 5}, rng));
  auto c = t.constant(testing_support::random_tensor({6, 5}, rng));
  auto s = t.constant(testing_support::random_tensor({7, 5}, rng));
  auto oc = t.constant(testing_support::random_tensor({6, 3}, rng, 0, 1));
  auto sc = t.constant(testing_support::random_tensor({7, 3}, rng, 0, 1));
  const StrotssLosses l = strotss_total_loss(o, c, s, oc, sc, 1.0);
  const double sum = l.content.value().item() + l.moment.value().item() + l.remd.value().item() +
                     l.palette.value().item();
  EXPECT_NEAR(l.total.value().item(), sum / 4.0, 1e-14);
  const StrotssLosses l2 = strotss_total_loss(o, c, s, oc, sc, 2.0);
  const double w = 2.0 * l2.content.value().item() + l2.moment.value().item() + l2.remd.value().item() +
                   l2.palette.value().item() / 2.0;
  EXPECT_NEAR(l2.total.value().item(), w / 4.5, 1e-14);
}

TEST(TotalLoss, IdenticalSetsGiveZero) {
  Rng rng(2);
  Tape t;
  auto f = t.constant(testing_support::random_tensor({8, 5}, rng));
  auto col = t.constant(testing_support::random_tensor({8, 3}, rng, 0, 1));
  const StrotssLosses l = strotss_total_loss(f, f, f, col, col, 4.0);
  EXPECT_NEAR(l.total.value().item(), 0.0, 1e-12);
}

TEST(Samples, GuidanceCellsAreAppended) {
  const ImageBuffer c = testing_support::smooth_image(32, 32, 0.1);
  const ImageBuffer s = testing_support::smooth_image(32, 32, 1.1);
  GuidanceSpec g;
  g.points.push_back({{2, 2}, {30, 30}});
  g.spacing = 0;
  const StrotssScaleInputs in = prepare_strotss_scale(bank(), c, s, 32, g);
  Rng rng(3);
  const StrotssSamples smp = draw_strotss_samples(in, 4, rng);
  EXPECT_NE(std::find(smp.out_cells.begin(), smp.out_cells.end(), 0), smp.out_cells.end());
  EXPECT_NE(std::find(smp.style_cells.begin(), smp.style_cells.end(), 63), smp.style_cells.end());
}

TEST(StylizeScale, ZeroStepsReturnsInit) {
  const ImageBuffer c = testing_support::smooth_image(32, 32, 0.1);
  const ImageBuffer s = testing_support::smooth_image(32, 32, 1.1);
  const StrotssScaleInputs in = prepare_strotss_scale(bank(), c, s, 32, {});
  const ImageBuffer init = init_output(c, s, 32);
  StrotssConfig cfg = small_config();
  ScaleSchedule sched;
  sched.steps = 0;
  Rng rng(4);
  EXPECT_LE(max_abs_difference(stylize_scale(in, init, sched, cfg, bank(), rng), init), 1e-12);
}

TEST(Stylize, FixedSeedIsBitIdentical) {
  const ImageBuffer c = testing_support::smooth_image(32, 40, 0.1);
  const ImageBuffer s = testing_support::smooth_image(36, 36, 1.1);
  StrotssConfig cfg = small_config();
  cfg.base_long_side = 40;
  const StrotssResult a = stylize_strotss(c, s, cfg);
  const StrotssResult b = stylize_strotss(c, s, cfg);
  EXPECT_EQ(a.image.storage(), b.image.storage());
  ASSERT_EQ(a.scales.size(), 1u);
  EXPECT_EQ(a.scales[0].long_side, 40);
  EXPECT_EQ(a.scales[0].losses.size(), 5u);
  EXPECT_EQ(a.image.height(), 32);
  EXPECT_EQ(a.image.width(), 40);
}

TEST(Stylize, CancellationSurfacesAsError) {
  std::atomic<bool> cancel{true};
  StrotssHooks hooks;
  hooks.control.cancel = &cancel;
  try {
    stylize_strotss(testing_support::smooth_image(32, 32, 0), testing_support::smooth_image(32, 32, 1), small_config(),
                    {}, &hooks);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Cancelled);
  }
}

TEST(Stylize, ShortDescentAtThirtyTwoPixels) {
  const ImageBuffer c = testing_support::smooth_image(32, 32, 0.2);
  const ImageBuffer s = testing_support::smooth_image(32, 32, 2.0);
  StrotssConfig cfg = small_config();
  cfg.steps = 30;
  const StrotssScaleInputs in = prepare_strotss_scale(bank(), c, s, 32, {});
  const ImageBuffer init = init_output(c, s, 32);
  ScaleSchedule sched{cfg.alpha_at(0), cfg.lr, cfg.steps, 0, 1};
  Rng rng(5);
  const ImageBuffer out = stylize_scale(in, init, sched, cfg, bank(), rng);
  const double before = evaluate_strotss_loss(init, in, sched.alpha, bank(), 64, 77, cfg.norm_eps);
  const double after = evaluate_strotss_loss(out, in, sched.alpha, bank(), 64, 77, cfg.norm_eps);
  EXPECT_LT(after, before);
}

TEST(GridColors, ConstantImage) {
  Tape t;
  const Tensor img({3, 8, 8}, 0.25);
  const Tensor g = grid_colors(t.constant(img), 2, 2).value();
  EXPECT_EQ(g.shape(), (ad::Shape{4, 3}));
  for (double v : g.storage()) EXPECT_DOUBLE_EQ(v, 0.25);
}
