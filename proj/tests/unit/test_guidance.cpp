#include <gtest/gtest.h>

#include <string>

#include "stylecore/error.hpp"
#include "stylecore/guidance.hpp"

using namespace stylecore;

namespace {

ImageBuffer rect_mask(int h, int w, int y0, int y1, int x0, int x1) {
  ImageBuffer m(h, w, 1);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) m.at(y, x, 0) = 1.0;
  }
  return m;
}

std::string error_of(const GuidanceSpec& g) {
  try {
    validate_guidance(g, 64, 64, 48, 80);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(ExpandPoints, CenteredClickGivesNinePairs) {
  const auto out = expand_point_guidance({{{32, 32}, {40, 24}}}, 20, 64, 64, 48, 80);
  ASSERT_EQ(out.size(), 9u);
  EXPECT_EQ(out[4].content, (std::array<double, 2>{32, 32}));
  EXPECT_EQ(out[0].content, (std::array<double, 2>{12, 12}));
  EXPECT_EQ(out[0].style, (std::array<double, 2>{20, 4}));
}

TEST(ExpandPoints, CornerClampsAndDeduplicates) {
  const auto out = expand_point_guidance({{{0, 0}, {0, 0}}}, 20, 64, 64, 48, 80);
  ASSERT_EQ(out.size(), 4u);
  for (const auto& p : out) {
    EXPECT_GE(p.content[0], 0);
    EXPECT_GE(p.content[1], 0);
  }
}

TEST(ExpandPoints, NoInputNoOutput) { EXPECT_TRUE(expand_point_guidance({}, 20, 64, 64, 48, 80).empty()); }

TEST(Validate, FieldLevelMessages) {
  GuidanceSpec g;
  g.regions.push_back({rect_mask(64, 64, 0, 8, 0, 8), rect_mask(40, 80, 0, 8, 0, 8)});
  EXPECT_NE(error_of(g).find("regions[0].style_mask: expected 80x48, got 80x40"), std::string::npos) << error_of(g);
  g.regions[0].style_mask = ImageBuffer(48, 80, 1);
  EXPECT_NE(error_of(g).find("regions[0].style_mask: mask is empty"), std::string::npos);
  g.regions.clear();
  g.points.push_back({{10, 10}, {100, 10}});
  EXPECT_NE(error_of(g).find("points[0].style"), std::string::npos);
  g.points[0].style = {10, 10};
  EXPECT_EQ(error_of(g), "");
  g.beta = 0;
  EXPECT_NE(error_of(g).find("beta"), std::string::npos);
}

TEST(GridFrame, CellOfClamps) {
  const GridFrame f{4, 8, 16, 32};
  EXPECT_EQ(f.cell_of(0, 0), 0);
  EXPECT_EQ(f.cell_of(31.9, 15.9), 31);
  EXPECT_EQ(f.cell_of(40, 40), 31);
  EXPECT_EQ(f.cell_of(5, 5), 1 * 8 + 1);
}

TEST(GridGuidance, RegionMembership) {
  GuidanceSpec g;
  g.regions.push_back({rect_mask(16, 16, 0, 8, 0, 16), rect_mask(16, 16, 8, 16, 0, 16)});
  const GridGuidance gg(g, {4, 4, 16, 16}, {4, 4, 16, 16});
  EXPECT_FALSE(gg.empty());
  const RegionMembership m = gg.membership({0, 5, 10, 15}, {1, 9, 14});
  ASSERT_EQ(m.pairs(), 1u);
  EXPECT_EQ(m.rows[0], (std::vector<unsigned char>{1, 1, 0, 0}));
  EXPECT_EQ(m.cols[0], (std::vector<unsigned char>{0, 1, 1}));
  // Style side unsampled: the region cannot bind this step.
  EXPECT_EQ(gg.membership({0, 5}, {1, 2}).pairs(), 0u);
  EXPECT_FALSE(gg.required_style_cells({1, 2}).empty());
}

TEST(GridGuidance, PointsBecomeRequiredCells) {
  GuidanceSpec g;
  g.points.push_back({{2, 2}, {13, 13}});
  g.spacing = 0;
  const GridGuidance gg(g, {4, 4, 16, 16}, {4, 4, 16, 16});
  EXPECT_EQ(gg.required_out_cells(), (std::vector<int>{0}));
  EXPECT_EQ(gg.required_style_cells({}), (std::vector<int>{15}));
  const RegionMembership m = gg.membership({0, 1}, {15, 3});
  ASSERT_EQ(m.pairs(), 1u);
  EXPECT_EQ(m.rows[0], (std::vector<unsigned char>{1, 0}));
  EXPECT_EQ(m.cols[0], (std::vector<unsigned char>{1, 0}));
}

TEST(AppendUnique, KeepsOrder) {
  EXPECT_EQ(append_unique({3, 1}, {1, 4, 3, 5}), (std::vector<int>{3, 1, 4, 5}));
}
