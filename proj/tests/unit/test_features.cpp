#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "stylecore/error.hpp"
#include "stylecore/features.hpp"
#include "stylecore/image_tensor.hpp"
#include "support.hpp"

using namespace stylecore;

TEST(FeatureBank, ShapeOfDefaultSpec) {
  const FeatureBank bank;
  Rng rng(1);
  const FeatureTensor f = bank.extract(testing_support::random_image(64, 64, 3, rng));
  EXPECT_EQ(f.grid_h, 16);
  EXPECT_EQ(f.grid_w, 16);
  EXPECT_EQ(f.dim, 2 * (16 + 32 + 64 + 128));
  EXPECT_EQ(bank.dim(), 480);
  EXPECT_EQ(f.data.size(), 16u * 16u * 480u);
}

TEST(FeatureBank, NonSquareGridRoundsUp) {
  const FeatureBank bank;
  const FeatureTensor f = bank.extract(testing_support::smooth_image(34, 50, 0.0));
  EXPECT_EQ(f.grid_h, 9);
  EXPECT_EQ(f.grid_w, 13);
}

TEST(FeatureBank, DeterministicAcrossInstances) {
  const ImageBuffer img = testing_support::smooth_image(40, 48, 0.7);
  const FeatureTensor a = FeatureBank().extract(img);
  const FeatureTensor b = FeatureBank().extract(img);
  EXPECT_EQ(a.data, b.data);
  FilterBankSpec other;
  other.seed = 99;
  EXPECT_NE(FeatureBank(other).extract(img).data, a.data);
}

TEST(FeatureBank, ZeroImageGivesZeroFeatures) {
  const FeatureTensor f = FeatureBank().extract(ImageBuffer(32, 32, 3));
  for (double v : f.data) EXPECT_EQ(v, 0.0);
}

TEST(FeatureBank, ConstantSquareImageIsRotationInvariant) {
  const ImageBuffer img(32, 32, 3, Colorspace::SRGB, 0.6);
  const auto rots = extract_with_rotations(img, FeatureBank());
  ASSERT_EQ(rots.size(), 4u);
  for (int k = 1; k < 4; ++k) EXPECT_EQ(rots[k].data, rots[0].data);
}

TEST(FeatureBank, RotationsSwapGrid) {
  const auto rots = extract_with_rotations(testing_support::smooth_image(32, 48, 0.1), FeatureBank());
  EXPECT_EQ(rots[1].grid_h, rots[0].grid_w);
  EXPECT_EQ(rots[1].grid_w, rots[0].grid_h);
}

TEST(FeatureBank, TooSmallImageRejected) {
  EXPECT_THROW(FeatureBank().extract(ImageBuffer(16, 64, 3)), Error);
}

TEST(FeatureBank, TapeAndPlainExtractionAgree) {
  const FeatureBank bank;
  const ImageBuffer img = testing_support::smooth_image(32, 40, 0.4);
  ad::Tape t;
  const Hypercolumns h = bank.extract(t, t.constant(image_to_tensor(img)));
  const FeatureTensor f = bank.extract(img);
  EXPECT_EQ(h.features.value().storage(), f.data);
}

TEST(FeatureBank, IncludedLayersSelectBlocks) {
  FilterBankSpec spec;
  spec.included_layers = {1, 4};
  const FeatureBank bank(spec);
  EXPECT_EQ(bank.dim(), 16 + 64);
  ASSERT_EQ(bank.blocks().size(), 2u);
  EXPECT_EQ(bank.blocks()[1].offset, 16);
  EXPECT_EQ(bank.blocks()[1].width, 64);
}

TEST(Sampling, AllCellsExactlyOnce) {
  for (SampleMode mode : {SampleMode::RandomUniform, SampleMode::JitteredGrid}) {
    Rng rng(3);
    const auto coords = sample_coords(5, 7, 35, mode, rng);
    std::set<std::pair<int, int>> seen;
    for (const auto& c : coords) seen.insert({c.row, c.col});
    EXPECT_EQ(seen.size(), 35u);
  }
}

TEST(Sampling, JitteredLatticeShape) {
  Rng rng(4);
  const auto coords = sample_coords(32, 32, 16, SampleMode::JitteredGrid, rng);
  ASSERT_EQ(coords.size(), 16u);
  const int oy = coords[0].row;
  const int ox = coords[0].col;
  EXPECT_GE(oy, 0);
  EXPECT_LT(oy, 8);
  EXPECT_GE(ox, 0);
  EXPECT_LT(ox, 8);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      EXPECT_EQ(coords[static_cast<std::size_t>(r * 4 + c)], (GridCoord{oy + 8 * r, ox + 8 * c}));
    }
  }
}

TEST(Sampling, DistinctAndInRange) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int h = 1 + rng.below(20);
    const int w = 1 + rng.below(20);
    const int n = 1 + rng.below(h * w);
    for (SampleMode mode : {SampleMode::RandomUniform, SampleMode::JitteredGrid}) {
      const auto idx = flat_indices(sample_coords(h, w, n, mode, rng), w);
      ASSERT_EQ(static_cast<int>(idx.size()), n);
      std::set<int> s(idx.begin(), idx.end());
      EXPECT_EQ(static_cast<int>(s.size()), n);
      EXPECT_GE(*s.begin(), 0);
      EXPECT_LT(*s.rbegin(), h * w);
    }
  }
}

TEST(Sampling, TooManySamplesRejected) {
  Rng rng(6);
  EXPECT_THROW(sample_coords(2, 2, 5, SampleMode::RandomUniform, rng), Error);
}

TEST(Sampling, VectorsComeFromTheirCells) {
  FeatureTensor t{3, 4, 2, {}};
  for (int i = 0; i < 24; ++i) t.data.push_back(i);
  Rng rng(7);
  const FeatureSample s = sample_features(t, 5, SampleMode::RandomUniform, rng);
  for (std::size_t i = 0; i < 5; ++i) {
    const int cell = s.coords[i].row * 4 + s.coords[i].col;
    EXPECT_EQ(s.vectors[i * 2], 2.0 * cell);
    EXPECT_EQ(s.vectors[i * 2 + 1], 2.0 * cell + 1);
  }
}

TEST(ExternalFeatures, RoundTrip) {
  FeatureTensor t{2, 3, 4, {}};
  Rng rng(8);
  for (int i = 0; i < 24; ++i) t.data.push_back(static_cast<float>(rng.uniform(-3, 3)));
  const FeatureTensor back = decode_features(encode_features(t));
  EXPECT_EQ(back.grid_h, 2);
  EXPECT_EQ(back.grid_w, 3);
  EXPECT_EQ(back.dim, 4);
  EXPECT_EQ(back.data, t.data);
}

TEST(ExternalFeatures, TruncatedAndEmptyRejected) {
  FeatureTensor t{2, 2, 2, std::vector<double>(8, 1.0)};
  auto bytes = encode_features(t);
  bytes.pop_back();
  EXPECT_THROW(decode_features(bytes), Error);
  auto zero = encode_features(t);
  zero[5] = zero[6] = zero[7] = zero[8] = 0;  // grid_h = 0
  EXPECT_THROW(decode_features(zero), Error);
  EXPECT_THROW(decode_features({'F', 'E', 'A', 'T'}), Error);
}
