#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "stylecore/autodiff.hpp"
#include "stylecore/image.hpp"
#include "stylecore/rng.hpp"

namespace stylecore {

struct BlockSpec {
  int layers = 2;
  int width = 16;
};

/// Architecture and seed of the built-in convolutional feature bank.
struct FilterBankSpec {
  std::uint64_t seed = 0x5eed5eedULL;
  std::vector<BlockSpec> blocks{{2, 16}, {2, 32}, {2, 64}, {2, 128}};
  double leaky_slope = 0.2;
  /// Flat conv-layer ids to concatenate into hypercolumns; empty = all.
  std::vector<int> included_layers;

  int layer_count() const;
};

/// Dense hypercolumn grid at quarter resolution, stored [gh][gw][D].
struct FeatureTensor {
  int grid_h = 0;
  int grid_w = 0;
  int dim = 0;
  std::vector<double> data;

  std::size_t cells() const { return static_cast<std::size_t>(grid_h) * grid_w; }
  const double* cell(std::size_t i) const { return data.data() + i * static_cast<std::size_t>(dim); }
  /// Rows = cells, columns = channels.
  ad::Tensor as_matrix() const;
};

/// Channel range [offset, offset + width) occupied by one conv layer inside a
/// hypercolumn.
struct LayerBlock {
  int layer = 0;
  int offset = 0;
  int width = 0;
};

struct Hypercolumns {
  ad::Var features;  // [cells, D]
  int grid_h = 0;
  int grid_w = 0;
};

/// Seeded, bias-free 3x3 conv stack with leaky-relu and 2x average pooling
/// between blocks. Weights are a pure function of the FilterBankSpec.
class FeatureBank {
 public:
  static constexpr int kMinSide = 32;

  explicit FeatureBank(FilterBankSpec spec = {});

  const FilterBankSpec& spec() const { return spec_; }
  int dim() const { return dim_; }
  const std::vector<LayerBlock>& blocks() const { return blocks_; }
  int layer_count() const { return static_cast<int>(weights_.size()); }
  int layer_width(int layer) const { return weights_[static_cast<std::size_t>(layer)].dim(0); }
  const ad::Tensor& weights(int layer) const { return weights_[static_cast<std::size_t>(layer)]; }
  double layer_scale(int layer) const { return scales_[static_cast<std::size_t>(layer)]; }

  static int grid_size(int pixels) { return (pixels + 3) / 4; }

  /// Scaled activations of every conv layer for a [3, H, W] image variable.
  std::vector<ad::Var> activations(ad::Tape& tape, ad::Var image) const;

  /// Differentiable hypercolumns on the quarter-resolution grid.
  Hypercolumns extract(ad::Tape& tape, ad::Var image) const;

  FeatureTensor extract(const ImageBuffer& img) const;

 private:
  std::vector<ad::Var> raw_activations(ad::Tape& tape, ad::Var image) const;

  FilterBankSpec spec_;
  std::vector<ad::Tensor> weights_;
  std::vector<int> pool_before_;  // 1 when a 2x pool precedes the layer
  std::vector<double> scales_;
  std::vector<int> included_;
  std::vector<LayerBlock> blocks_;
  int dim_ = 0;
};

FeatureTensor extract_hypercolumns(const ImageBuffer& img, const FeatureBank& bank);

/// Features of the image rotated by 0, 90, 180 and 270 degrees.
std::vector<FeatureTensor> extract_with_rotations(const ImageBuffer& img, const FeatureBank& bank);

enum class SampleMode { RandomUniform, JitteredGrid };

struct GridCoord {
  int row = 0;
  int col = 0;
  friend bool operator==(const GridCoord&, const GridCoord&) = default;
};

struct FeatureSample {
  std::vector<GridCoord> coords;
  ad::Tensor vectors;  // [n, D]
};

/// Picks n distinct grid cells. RandomUniform draws without replacement;
/// JitteredGrid lays a near-square lattice with one shared random offset.
std::vector<GridCoord> sample_coords(int grid_h, int grid_w, int n, SampleMode mode, Rng& rng);

std::vector<int> flat_indices(const std::vector<GridCoord>& coords, int grid_w);

FeatureSample sample_features(const FeatureTensor& t, int n, SampleMode mode, Rng& rng);

// "FEAT1" + u32 gh, gw, D (little endian) + gh*gw*D little-endian f32.
FeatureTensor load_external_features(const std::filesystem::path& path);
FeatureTensor decode_features(const std::vector<std::uint8_t>& bytes);
void save_features(const FeatureTensor& t, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_features(const FeatureTensor& t);

}  // namespace stylecore
