#include <gtest/gtest.h>

#include "stylecore/gram.hpp"
#include "stylecore/image_tensor.hpp"
#include "support.hpp"

using namespace stylecore;
using ad::Tape;
using ad::Tensor;

TEST(Gram, ZeroActivations) {
  Tape t;
  const Tensor g = gram_matrix(t.constant(Tensor({3, 2, 2}, 0.0))).value();
  EXPECT_EQ(g.shape(), (ad::Shape{3, 3}));
  for (double v : g.storage()) EXPECT_EQ(v, 0.0);
}

TEST(Gram, SingleLocationOuterProduct) {
  Tape t;
  const Tensor g = gram_matrix(t.constant(Tensor({2, 1}, std::vector<double>{1, 2}))).value();
  EXPECT_EQ(g.storage(), (std::vector<double>{1, 2, 2, 4}));
}

TEST(Gram, StyleLossHandCase) {
  Tape t;
  auto o = t.constant(Tensor({2, 1}, std::vector<double>{1, 2}));
  auto s = t.constant(Tensor({2, 1}, std::vector<double>{0, 0}));
  // ||[[1,2],[2,4]]||_F^2 = 25.
  EXPECT_DOUBLE_EQ(gram_style_loss({o}, {s}, {0.5}).value().item(), 12.5);
  EXPECT_EQ(gram_style_loss({o}, {o}, {1.0}).value().item(), 0.0);
}

TEST(Gram, ContentLossUnitPerturbation) {
  Rng rng(1);
  Tensor c = testing_support::random_tensor({2, 3, 3}, rng);
  Tensor o = c;
  o[7] += 1.0;
  Tape t;
  EXPECT_EQ(l2_content_loss(t.constant(c), t.constant(c)).value().item(), 0.0);
  EXPECT_NEAR(l2_content_loss(t.constant(o), t.constant(c)).value().item(), 1.0, 1e-12);
  const Tensor r = testing_support::random_tensor({2, 3, 3}, rng);
  double want = 0;
  for (std::size_t i = 0; i < r.numel(); ++i) want += (r[i] - c[i]) * (r[i] - c[i]);
  EXPECT_NEAR(l2_content_loss(t.constant(r), t.constant(c)).value().item(), want, 1e-12);
}

TEST(Gram, LayerWeight) {
  Tape t;
  EXPECT_DOUBLE_EQ(gram_layer_weight(t.constant(Tensor({4, 2, 3}, 0.0))), 1.0 / (4.0 * 16 * 36));
}

TEST(Gram, DefaultLayersComeFromTheBank) {
  const FeatureBank bank;
  const GramLayers l = default_gram_layers(bank);
  EXPECT_EQ(l.style.size(), bank.spec().blocks.size());
  for (int id : l.style) {
    EXPECT_GE(id, 0);
    EXPECT_LT(id, bank.layer_count());
  }
  EXPECT_GE(l.content, 0);
  EXPECT_LT(l.content, bank.layer_count());
}
