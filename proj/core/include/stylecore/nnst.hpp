#pragma once

#include <cstdint>
#include <vector>

#include "stylecore/autodiff.hpp"
#include "stylecore/features.hpp"
#include "stylecore/run_control.hpp"

namespace stylecore {

/// Per-cell target hypercolumns assembled from a style feature pool.
struct TargetFeatures {
  int grid_h = 0;
  int grid_w = 0;
  int dim = 0;
  std::vector<double> data;          // [cells][dim]
  std::vector<LayerBlock> blocks;    // matched independently; one block in whole-column mode
  std::vector<int> source_rotation;  // [cells][blocks], index into the pool
  std::vector<int> source_index;     // [cells][blocks], flat cell within that pool tensor

  std::size_t cells() const { return static_cast<std::size_t>(grid_h) * grid_w; }
  const double* cell(std::size_t i) const { return data.data() + i * static_cast<std::size_t>(dim); }
};

struct MatchOptions {
  bool centered = true;
  /// Match every block of `blocks` separately and splice the winners.
  bool per_layer = false;
  std::vector<LayerBlock> blocks;
  /// 0 = strict (zero vectors are an error); otherwise norms use sqrt(|x|^2 + eps^2).
  double norm_eps = 0.0;
  /// Content rows per distance tile; 0 picks a size that bounds memory.
  int tile_rows = 0;
};

/// Nearest pool vector of every content cell under (centered) cosine
/// distance; the first pool entry wins ties.
TargetFeatures match_features(const FeatureTensor& content, const std::vector<FeatureTensor>& pool,
                              const MatchOptions& opts);

/// -(1/P) sum_i cos(Phi(O)_i, T_i) for output hypercolumns [P, D].
ad::Var nn_objective(ad::Var output_features, const TargetFeatures& t, double norm_eps = 0.0);

struct NnstConfig {
  double alpha_blend = 0.25;
  int scales = 4;
  int size = 256;  // long side of the finest scale
  int updates = 200;
  double lr = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int pyramid_levels = 8;
  bool split_phase = true;
  int split_updates = 200;
  bool rotations = true;
  std::uint64_t seed = 1;
  FilterBankSpec bank;
  double norm_eps = 1e-3;

  void validate() const;
};

struct NnstScaleReport {
  int long_side = 0;
  bool split = false;
  std::vector<double> objective;  // per update, before the step
};

struct NnstResult {
  ImageBuffer image;  // before colour post-processing
  std::vector<NnstScaleReport> scales;
};

/// Coarse-to-fine NNST-Opt: Adam on Laplacian-pyramid coefficients toward
/// nearest-neighbour targets, then per-layer re-matching at the finest scale.
NnstResult stylize_nnst(const ImageBuffer& content, const ImageBuffer& style, const NnstConfig& cfg,
                        const RunControl* control = nullptr);

}  // namespace stylecore
