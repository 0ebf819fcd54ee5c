#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "stylecore/autodiff.hpp"
#include "stylecore/features.hpp"
#include "stylecore/run_control.hpp"
#include "stylecore/strotss.hpp"

namespace stylecore {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

/// Source point in the content frame, target point (style keypoint after
/// alignment into the content frame, or raw style coordinates before it).
struct Correspondence {
  Point2 source;
  Point2 target;
  double activation = 1.0;
};

using CorrespondenceSet = std::vector<Correspondence>;

struct CleanOptions {
  int max_pairs = 80;
  double min_dist = 10.0;
  /// Pairs with activation below this are dropped after the greedy pass.
  double activation_threshold = 0.0;
};

/// Greedy selection by descending activation: a candidate is kept only if its
/// source point is at least `min_dist` px from every kept source point.
CorrespondenceSet clean_keypoints(const CorrespondenceSet& raw, const CleanOptions& opts = {});

/// dst ~= scale * R * src + t in the least-squares sense.
struct Similarity2 {
  double scale = 1.0;
  std::array<std::array<double, 2>, 2> rotation{{{1.0, 0.0}, {0.0, 1.0}}};
  std::array<double, 2> translation{0.0, 0.0};

  Point2 apply(Point2 p) const;
};

Similarity2 align_umeyama(const std::vector<Point2>& src, const std::vector<Point2>& dst);

/// Segments (source -> target) cross in their interiors.
bool segments_cross(Point2 a, Point2 b, Point2 c, Point2 d);

/// Drops the lower-activation pair of the first crossing until none remain.
CorrespondenceSet remove_crossings(const CorrespondenceSet& c);

struct PrepareOptions {
  bool clean = true;
  CleanOptions clean_opts;
};

/// Raw pairs (source in content px, target in style px) -> cleaned pairs with
/// targets mapped into the content frame by a similarity transform.
CorrespondenceSet prepare_correspondences(const CorrespondenceSet& raw, const PrepareOptions& opts = {});

enum class TpsKernel {
  ThinPlate,  // U(r) = r^2 log r
  Quadratic,  // U(r) = r^2; needs reg > 0 beyond 4 points
};

struct TpsOptions {
  TpsKernel kernel = TpsKernel::ThinPlate;
  double reg = 0.0;  // added to the kernel diagonal
};

/// f(q) = sum_i w_i U(|q - c_i|) + v^T q + b with centers c.
struct TpsSolution {
  std::vector<Point2> centers;
  std::vector<std::array<double, 2>> w;
  std::array<std::array<double, 2>, 2> v{};  // v[input axis][output axis]
  std::array<double, 2> b{};
  TpsKernel kernel = TpsKernel::ThinPlate;

  Point2 operator()(Point2 q) const;
};

double tps_kernel(TpsKernel kernel, double r2);

/// Spline through f(src_i) = dst_i. Throws Singular on collinear or
/// duplicate points (reg = 0).
TpsSolution solve_tps(const std::vector<Point2>& src, const std::vector<Point2>& dst, const TpsOptions& opts = {});

/// [h, w, 2] offsets f(q) - q at every pixel q = (x, y).
ad::Tensor render_flow_field(const TpsSolution& sol, int h, int w);

/// Differentiable in `centers` ([k, 2]): offsets g(q) - q for the spline
/// g with g(centers_i) = values_i.
ad::Var tps_flow(ad::Var centers, const std::vector<Point2>& values, int h, int w, const TpsOptions& opts = {});

/// out(q) = bilinear(img, q + flow(q)), clamped to the border.
ImageBuffer warp_image(const ImageBuffer& img, const ad::Tensor& flow);

/// (1/k) sum_i |p'_i - (p_i + theta_i)|_2 with theta as [k, 2].
ad::Var deformation_loss(const CorrespondenceSet& c, ad::Var theta);

/// (1/(W H)) sum of L1 forward differences of a [H, W, 2] field.
ad::Var tv_regularizer(ad::Var flow);

enum class DstBase { Strotss, Gram };
enum class DstRegime { Low, Med, High };

struct DstWeights {
  double beta = 0.0;
  double gamma = 0.0;
};

DstWeights regime_weights(DstBase base, DstRegime regime);

struct DstConfig {
  DstBase base = DstBase::Strotss;
  /// Content weight; defaults to 16 (halved per scale) for STROTSS and 1 for Gram.
  std::optional<double> alpha;
  double beta = 0.5;
  double gamma = 50.0;
  int scales = 4;
  int base_long_side = 64;
  int steps = 200;
  double lr = 0.002;
  double final_lr = 0.001;
  double theta_lr = 0.1;  // Adam step for displacements, in content pixels
  int samples = 1024;
  int pyramid_levels = 5;
  std::uint64_t seed = 1;
  FilterBankSpec bank;
  double norm_eps = 1e-3;
  TpsOptions tps;

  void validate() const;
  double alpha_at(int scale) const;
  int long_side_at(int scale) const { return base_long_side << scale; }
};

/// Everything one DST step needs at one resolution.
struct DstScaleInputs {
  DstBase base = DstBase::Strotss;
  // Full-resolution content px -> scale px: x' = (x + 0.5) * sx - 0.5.
  double sx = 1.0;
  double sy = 1.0;
  StrotssScaleInputs strotss;
  // Gram base
  std::vector<ad::Tensor> style_layers;  // scaled by 1/sqrt(N)
  ad::Tensor content_layer;
  std::vector<int> style_layer_ids;
  int content_layer_id = 0;
};

DstScaleInputs prepare_dst_scale(const FeatureBank& bank, const ImageBuffer& content, const ImageBuffer& style,
                                 int long_side, DstBase base);

/// Initial output at the coarsest scale.
ImageBuffer dst_init_output(const DstScaleInputs& in, const ImageBuffer& style);

struct DstTerms {
  ad::Var total;
  ad::Var content;
  ad::Var style;
  ad::Var style_warped;
  ad::Var warp;
  ad::Var tv;
  ad::Var flow;
  ad::Var warped;
};

/// alpha L_con + L_sty(S,O) + L_sty(S,W(O,theta)) + beta L_warp + gamma R_TV.
/// `theta` is [k, 2] in content pixels; `samples` is required for STROTSS.
DstTerms dst_objective(ad::Tape& tape, ad::Var output, ad::Var theta, const CorrespondenceSet& c,
                       const DstScaleInputs& in, const StrotssSamples* samples, double alpha, const DstConfig& cfg,
                       const FeatureBank& bank);

/// Objective of a finished (O, theta) on samples drawn from `sample_seed`.
double evaluate_dst_objective(const ImageBuffer& output, const std::vector<Point2>& theta, const CorrespondenceSet& c,
                              const DstScaleInputs& in, double alpha, const DstConfig& cfg, const FeatureBank& bank,
                              std::uint64_t sample_seed);

struct DstResult {
  ImageBuffer image;     // W(O, theta)
  ImageBuffer unwarped;  // O
  std::vector<Point2> theta;
  std::vector<std::vector<double>> losses;  // per scale, per step
  double warp_loss = 0.0;
};

DstResult dst_stylize(const ImageBuffer& content, const ImageBuffer& style, const CorrespondenceSet& c,
                      const DstConfig& cfg, const RunControl* control = nullptr);

}  // namespace stylecore
