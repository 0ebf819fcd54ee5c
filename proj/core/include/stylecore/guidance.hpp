#pragma once

#include <array>
#include <vector>

#include "stylecore/image.hpp"
#include "stylecore/transport.hpp"

namespace stylecore {

/// Paired masks; nonzero pixels are inside the region. The content mask
/// matches the content image, the style mask the style image.
struct RegionPair {
  ImageBuffer content_mask;
  ImageBuffer style_mask;
};

/// A clicked correspondence, (x, y) in pixels of each image.
struct PointPair {
  std::array<double, 2> content{};
  std::array<double, 2> style{};
};

struct GuidanceSpec {
  std::vector<RegionPair> regions;
  std::vector<PointPair> points;
  double beta = 5.0;
  double spacing = 20.0;

  bool empty() const { return regions.empty() && points.empty(); }
};

/// Throws InvalidArgument naming the offending field.
void validate_guidance(const GuidanceSpec& g, int content_h, int content_w, int style_h, int style_w);

/// Expands each click into a 3x3 lattice (the click plus 8 neighbours at
/// `spacing` px), clamped to both images; duplicate pairs are dropped.
std::vector<PointPair> expand_point_guidance(const std::vector<PointPair>& points, double spacing,
                                             int content_h, int content_w, int style_h, int style_w);

/// A quarter-resolution feature grid and the full-resolution frame its
/// guidance coordinates live in.
struct GridFrame {
  int grid_h = 0;
  int grid_w = 0;
  int image_h = 0;
  int image_w = 0;

  int cell_of(double x, double y) const;
};

/// Guidance projected onto a pair of feature grids.
class GridGuidance {
 public:
  GridGuidance() = default;
  GridGuidance(const GuidanceSpec& g, const GridFrame& out, const GridFrame& style);

  bool empty() const { return out_regions_.empty(); }
  double beta() const { return beta_; }

  /// Cells that must be present in the samples for the constraints to bind.
  std::vector<int> required_out_cells() const;
  std::vector<int> required_style_cells(const std::vector<int>& style_samples) const;

  RegionMembership membership(const std::vector<int>& out_samples, const std::vector<int>& style_samples) const;

 private:
  double beta_ = 5.0;
  int out_cells_ = 0;
  int style_cells_ = 0;
  std::vector<std::vector<unsigned char>> out_regions_;    // [K][out grid cells]
  std::vector<std::vector<unsigned char>> style_regions_;  // [K][style grid cells]
  std::vector<int> point_regions_;                         // region ids that come from clicks
};

/// Appends the entries of `extra` missing from `cells`, keeping order.
std::vector<int> append_unique(std::vector<int> cells, const std::vector<int>& extra);

}  // namespace stylecore
