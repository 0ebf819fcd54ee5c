#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "stylecore/autodiff.hpp"
#include "stylecore/features.hpp"
#include "stylecore/guidance.hpp"
#include "stylecore/run_control.hpp"
#include "stylecore/transport.hpp"

namespace stylecore {

struct StrotssConfig {
  double alpha = 16.0;
  int scales = 4;
  int base_long_side = 64;  // coarsest scale; each later scale doubles it
  int steps = 200;
  double lr = 0.002;
  double final_lr = 0.001;
  int samples = 1024;
  int pyramid_levels = 5;
  double rms_decay = 0.99;
  double rms_eps = 1e-8;
  std::uint64_t seed = 1;
  FilterBankSpec bank;
  /// Added in quadrature to feature norms so black regions stay well defined.
  double norm_eps = 1e-3;

  void validate() const;
  /// alpha / 2^(s+1) for scale s (halved before every scale).
  double alpha_at(int scale) const;
  int long_side_at(int scale) const { return base_long_side << scale; }
};

/// Content, style and derived constants for one resolution.
struct StrotssScaleInputs {
  ImageBuffer content;
  ImageBuffer style;
  FeatureTensor content_features;
  FeatureTensor style_features;
  ad::Tensor style_colors;  // [style cells, 3], the style image on its feature grid
  GridGuidance guidance;
};

StrotssScaleInputs prepare_strotss_scale(const FeatureBank& bank, const ImageBuffer& content,
                                         const ImageBuffer& style, int long_side, const GuidanceSpec& guidance);

/// Flat grid indices drawn for one step.
struct StrotssSamples {
  std::vector<int> out_cells;    // content/output grid, jittered lattice plus guidance cells
  std::vector<int> style_cells;  // style grid, uniform without replacement plus guidance cells
};

StrotssSamples draw_strotss_samples(const StrotssScaleInputs& in, int n, Rng& rng);

struct StrotssLosses {
  ad::Var total;
  ad::Var content;
  ad::Var moment;
  ad::Var remd;
  ad::Var palette;
};

/// Inspection of one step's transport selections.
struct GuidanceProbe {
  std::vector<unsigned char> allowed;  // [n * m] mask after guidance (empty = unguided)
  int rows = 0;
  int cols = 0;
  RemdTrace trace;
  long beta_entries = 0;  // entries rescaled by beta
};

/// (alpha*l_C + l_m + l_r + l_p/alpha) / (2 + alpha + 1/alpha) for an output
/// image variable [3, H, W] at the scale described by `in`.
StrotssLosses strotss_total_loss(ad::Tape& tape, ad::Var output, const StrotssScaleInputs& in,
                                 const StrotssSamples& samples, double alpha, const FeatureBank& bank,
                                 double norm_eps, GuidanceProbe* probe = nullptr);

/// Same as above on plain sampled sets ([n,D], [n,D], [m,D], [n,3], [m,3]).
StrotssLosses strotss_total_loss(ad::Var out_features, ad::Var content_features, ad::Var style_features,
                                 ad::Var out_colors, ad::Var style_colors, double alpha,
                                 const RegionMembership* guidance = nullptr, double beta = 5.0,
                                 double norm_eps = 0.0, GuidanceProbe* probe = nullptr);

/// Objective value of a finished image on samples drawn from `sample_seed`.
double evaluate_strotss_loss(const ImageBuffer& output, const StrotssScaleInputs& in, double alpha,
                             const FeatureBank& bank, int samples, std::uint64_t sample_seed,
                             double norm_eps);

/// Style mean colour plus the content's finest Laplacian band at `long_side`.
ImageBuffer init_output(const ImageBuffer& content, const ImageBuffer& style, int long_side);

struct StrotssScaleReport {
  int long_side = 0;
  double alpha = 0.0;
  double lr = 0.0;
  std::vector<double> losses;  // one per step
  long guided_steps = 0;
  long beta_entries = 0;
  long forbidden_selections = 0;  // must stay 0
};

struct StrotssHooks {
  RunControl control;
  /// Called after every step's loss evaluation.
  std::function<void(int scale, int step, const GuidanceProbe&)> on_probe;
};

struct ScaleSchedule {
  double alpha = 1.0;
  double lr = 0.002;
  int steps = 200;
  int scale = 0;
  int scales = 1;
};

/// RMSprop on Laplacian-pyramid coefficients, fresh samples each step.
ImageBuffer stylize_scale(const StrotssScaleInputs& in, const ImageBuffer& init, const ScaleSchedule& schedule,
                          const StrotssConfig& cfg, const FeatureBank& bank, Rng& rng,
                          StrotssScaleReport* report = nullptr, const StrotssHooks* hooks = nullptr);

struct StrotssResult {
  ImageBuffer image;
  std::vector<StrotssScaleReport> scales;
};

StrotssResult stylize_strotss(const ImageBuffer& content, const ImageBuffer& style, const StrotssConfig& cfg,
                              const GuidanceSpec& guidance = {}, const StrotssHooks* hooks = nullptr);

/// Per-level coefficients of `img` as leaf variables on `tape`.
std::vector<ad::Var> pyramid_leaves(ad::Tape& tape, const LaplacianPyramid& pyr);
LaplacianPyramid pyramid_from_tensors(const std::vector<ad::Tensor>& levels);

/// [3, H, W] image -> [gh*gw, 3] colours on the quarter-resolution grid.
ad::Var grid_colors(ad::Var image, int grid_h, int grid_w);

}  // namespace stylecore
