#include "stylecore/nnst.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "stylecore/error.hpp"
#include "stylecore/image_tensor.hpp"
#include "stylecore/strotss.hpp"

namespace stylecore {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Normalizes each row of a column block; strict mode rejects zero rows.
RowMatrix normalized_block(const RowMatrix& m, int offset, int width, double eps, const char* what) {
  RowMatrix out = m.middleCols(offset, width);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double sq = out.row(i).squaredNorm();
    double norm;
    if (eps > 0.0) {
      norm = std::sqrt(sq + eps * eps);
    } else {
      norm = std::sqrt(sq);
      if (norm < 1e-12) {
        raise(ErrorKind::ZeroVector, std::string("nearest-neighbour matching: zero-norm ") + what + " vector");
      }
    }
    out.row(i) /= norm;
  }
  return out;
}

}  // namespace

TargetFeatures match_features(const FeatureTensor& content, const std::vector<FeatureTensor>& pool,
                              const MatchOptions& opts) {
  require(!pool.empty(), ErrorKind::InvalidArgument, "matching needs a nonempty style pool");
  require(content.cells() > 0 && content.dim > 0, ErrorKind::InvalidArgument, "empty content features");
  const int d = content.dim;
  std::vector<int> offsets;
  int total = 0;
  for (const auto& p : pool) {
    if (p.dim != d) {
      raise(ErrorKind::ShapeMismatch, "style pool dim " + std::to_string(p.dim) + " differs from content dim " +
                                          std::to_string(d));
    }
    offsets.push_back(total);
    total += static_cast<int>(p.cells());
  }
  require(total > 0, ErrorKind::InvalidArgument, "matching needs a nonempty style pool");

  std::vector<LayerBlock> blocks;
  if (opts.per_layer) {
    require(!opts.blocks.empty(), ErrorKind::InvalidArgument, "per-layer matching needs layer blocks");
    for (const auto& b : opts.blocks) {
      require(b.offset >= 0 && b.width > 0 && b.offset + b.width <= d, ErrorKind::ShapeMismatch,
              "layer block lies outside the feature vector");
    }
    blocks = opts.blocks;
  } else {
    blocks.push_back({0, 0, d});
  }

  const int n = static_cast<int>(content.cells());
  RowMatrix x = Eigen::Map<const RowMatrix>(content.data.data(), n, d);
  RowMatrix y(total, d);
  for (std::size_t r = 0; r < pool.size(); ++r) {
    y.middleRows(offsets[r], static_cast<Eigen::Index>(pool[r].cells())) =
        Eigen::Map<const RowMatrix>(pool[r].data.data(), static_cast<Eigen::Index>(pool[r].cells()), d);
  }
  if (opts.centered) {
    const Eigen::RowVectorXd mx = x.colwise().mean();
    const Eigen::RowVectorXd my = y.colwise().mean();
    x.rowwise() -= mx;
    y.rowwise() -= my;
  }

  int tile = opts.tile_rows;
  if (tile <= 0) tile = std::max(1, static_cast<int>((std::size_t{1} << 24) / static_cast<std::size_t>(total)));
  tile = std::min(tile, n);

  TargetFeatures t;
  t.grid_h = content.grid_h;
  t.grid_w = content.grid_w;
  t.dim = d;
  t.blocks = blocks;
  t.data.assign(static_cast<std::size_t>(n) * d, 0.0);
  const std::size_t nb = blocks.size();
  t.source_rotation.assign(static_cast<std::size_t>(n) * nb, 0);
  t.source_index.assign(static_cast<std::size_t>(n) * nb, 0);

  for (std::size_t b = 0; b < nb; ++b) {
    const auto& blk = blocks[b];
    const RowMatrix xn = normalized_block(x, blk.offset, blk.width, opts.norm_eps, "content");
    const RowMatrix yn = normalized_block(y, blk.offset, blk.width, opts.norm_eps, "style");
    for (int start = 0; start < n; start += tile) {
      const int rows = std::min(tile, n - start);
      const RowMatrix sim = xn.middleRows(start, rows) * yn.transpose();
      for (int i = 0; i < rows; ++i) {
        Eigen::Index best = 0;
        double best_v = sim(i, 0);
        for (Eigen::Index j = 1; j < sim.cols(); ++j) {
          if (sim(i, j) > best_v) {
            best_v = sim(i, j);
            best = j;
          }
        }
        const int cell = start + i;
        const int p = static_cast<int>(best);
        const int r = static_cast<int>(std::upper_bound(offsets.begin(), offsets.end(), p) - offsets.begin()) - 1;
        const int idx = p - offsets[static_cast<std::size_t>(r)];
        t.source_rotation[static_cast<std::size_t>(cell) * nb + b] = r;
        t.source_index[static_cast<std::size_t>(cell) * nb + b] = idx;
        const double* src = pool[static_cast<std::size_t>(r)].cell(static_cast<std::size_t>(idx)) + blk.offset;
        std::copy_n(src, blk.width, t.data.begin() + static_cast<long>(cell) * d + blk.offset);
      }
    }
  }
  return t;
}

ad::Var nn_objective(ad::Var output_features, const TargetFeatures& t, double norm_eps) {
  require(output_features.value().rank() == 2, ErrorKind::ShapeMismatch, "nn objective expects [P, D] features");
  const int p = output_features.dim(0);
  const int d = output_features.dim(1);
  if (static_cast<std::size_t>(p) != t.cells() || d != t.dim) {
    raise(ErrorKind::ShapeMismatch, "output features [" + std::to_string(p) + ", " + std::to_string(d) +
                                        "] do not match targets [" + std::to_string(t.cells()) + ", " +
                                        std::to_string(t.dim) + "]");
  }
  ad::Tensor unit({p, d});
  for (int i = 0; i < p; ++i) {
    const double* v = t.cell(static_cast<std::size_t>(i));
    double sq = 0.0;
    for (int k = 0; k < d; ++k) sq += v[k] * v[k];
    double norm = std::sqrt(sq + norm_eps * norm_eps);
    if (norm_eps <= 0.0 && norm < 1e-12) raise(ErrorKind::ZeroVector, "nn objective: zero-norm target vector");
    for (int k = 0; k < d; ++k) unit[static_cast<std::size_t>(i) * d + k] = v[k] / norm;
  }
  ad::Var sq = ad::sum(ad::square(output_features), 1);
  ad::Var norms;
  if (norm_eps > 0.0) {
    norms = ad::sqrt(ad::add_scalar(sq, norm_eps * norm_eps));
  } else {
    norms = ad::sqrt(sq);
    for (double v : norms.value().storage()) {
      if (v < 1e-12) raise(ErrorKind::ZeroVector, "nn objective: zero-norm output feature vector");
    }
  }
  ad::Var dots = ad::sum(ad::mul(output_features, output_features.tape()->constant(std::move(unit))), 1);
  return ad::neg(ad::mean(ad::div(dots, norms)));
}

void NnstConfig::validate() const {
  require(alpha_blend >= 0.0 && alpha_blend <= 1.0, ErrorKind::InvalidArgument, "alpha-blend must lie in [0, 1]");
  require(scales >= 1, ErrorKind::InvalidArgument, "scales must be at least 1");
  require(size >= FeatureBank::kMinSide, ErrorKind::InvalidArgument, "size must be at least 32 px");
  require(updates >= 0 && split_updates >= 0, ErrorKind::InvalidArgument, "update counts must be non-negative");
  require(lr > 0.0, ErrorKind::InvalidArgument, "learning rate must be positive");
  require(pyramid_levels >= 1, ErrorKind::InvalidArgument, "pyramid levels must be at least 1");
}

namespace {

struct PyramidOptimizer {
  std::vector<ad::Tensor> params;
  ad::Adam adam;

  PyramidOptimizer(const ImageBuffer& init, int levels, const ad::AdamConfig& cfg) : adam(cfg) {
    const int n = std::min(levels, max_pyramid_levels(init.height(), init.width()));
    const LaplacianPyramid pyr = build_laplacian_pyramid(init, n);
    for (std::size_t l = 0; l < pyr.levels.size(); ++l) params.push_back(image_to_tensor(pyr, l));
  }

  ImageBuffer image() const { return collapse_laplacian_pyramid(pyramid_from_tensors(params)); }
};

FeatureTensor to_feature_tensor(const Hypercolumns& hc) {
  FeatureTensor t;
  t.grid_h = hc.grid_h;
  t.grid_w = hc.grid_w;
  t.dim = hc.features.dim(1);
  t.data = hc.features.value().storage();
  return t;
}

ImageBuffer blend(const ImageBuffer& a, const ImageBuffer& b, double alpha) {
  ImageBuffer out = a;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.storage()[i] = alpha * a.storage()[i] + (1.0 - alpha) * b.storage()[i];
  }
  return out;
}

}  // namespace

NnstResult stylize_nnst(const ImageBuffer& content, const ImageBuffer& style, const NnstConfig& cfg,
                        const RunControl* control) {
  cfg.validate();
  require(content.channels() == 3 && style.channels() == 3, ErrorKind::InvalidArgument,
          "content and style images must have 3 channels");
  const FeatureBank bank(cfg.bank);

  // Scales too small for the feature bank are skipped.
  std::vector<int> sides;
  for (int s = cfg.scales - 1; s >= 0; --s) {
    const int side = cfg.size >> s;
    const ImageBuffer c = resize_long_side(content, side);
    const ImageBuffer st = resize_long_side(style, side);
    if (std::min(c.height(), c.width()) >= FeatureBank::kMinSide &&
        std::min(st.height(), st.width()) >= FeatureBank::kMinSide) {
      sides.push_back(side);
    }
  }
  if (sides.empty()) raise(ErrorKind::InvalidArgument, "no scale is large enough for feature extraction");

  const int phases = static_cast<int>(sides.size()) + (cfg.split_phase ? 1 : 0);
  const ad::AdamConfig adam_cfg{cfg.lr, cfg.beta1, cfg.beta2, 1e-8};
  NnstResult result;
  ImageBuffer prev;

  auto run_updates = [&](PyramidOptimizer& opt, int phase, int updates, const std::vector<FeatureTensor>& pool,
                         const TargetFeatures* fixed, NnstScaleReport& report) {
    MatchOptions split_opts;
    split_opts.per_layer = true;
    split_opts.blocks = bank.blocks();
    split_opts.norm_eps = cfg.norm_eps;
    for (int u = 1; u <= updates; ++u) {
      if (control) control->check_cancelled();
      ad::Tape tape;
      std::vector<ad::Var> leaves;
      for (const auto& p : opt.params) leaves.push_back(tape.leaf(p));
      ad::Var out = collapse_pyramid(leaves);
      const Hypercolumns hc = bank.extract(tape, out);
      TargetFeatures rematched;
      if (!fixed) rematched = match_features(to_feature_tensor(hc), pool, split_opts);
      ad::Var loss = nn_objective(hc.features, fixed ? *fixed : rematched, cfg.norm_eps);
      tape.backward(loss);
      std::vector<ad::Tensor> grads;
      std::vector<ad::Tensor*> ptrs;
      for (std::size_t k = 0; k < opt.params.size(); ++k) {
        grads.push_back(tape.grad(leaves[k]));
        ptrs.push_back(&opt.params[k]);
      }
      opt.adam.step(ptrs, grads);
      const double value = loss.value().item();
      report.objective.push_back(value);
      if (control && control->on_progress) {
        ProgressEvent ev{phase, phases, u, updates, value, nullptr};
        ImageBuffer preview;
        if (control->wants_preview(u, updates)) {
          preview = clamp01(opt.image());
          ev.preview = &preview;
        }
        control->on_progress(ev);
      }
    }
  };

  for (std::size_t s = 0; s < sides.size(); ++s) {
    const int side = sides[s];
    const ImageBuffer c = resize_long_side(content, side);
    const ImageBuffer st = resize_long_side(style, side);
    std::vector<FeatureTensor> pool;
    if (cfg.rotations) {
      pool = extract_with_rotations(st, bank);
    } else {
      pool.push_back(bank.extract(st));
    }
    ImageBuffer init;
    ImageBuffer source;
    if (s == 0) {
      init = c;
      source = c;
    } else {
      init = resize_bilinear(prev, c.height(), c.width());
      source = blend(init, c, cfg.alpha_blend);
    }
    MatchOptions whole;
    whole.norm_eps = cfg.norm_eps;
    const TargetFeatures target = match_features(bank.extract(source), pool, whole);

    PyramidOptimizer opt(init, cfg.pyramid_levels, adam_cfg);
    NnstScaleReport report;
    report.long_side = side;
    run_updates(opt, static_cast<int>(s), cfg.updates, pool, &target, report);
    result.scales.push_back(std::move(report));

    if (s + 1 == sides.size() && cfg.split_phase) {
      NnstScaleReport split;
      split.long_side = side;
      split.split = true;
      run_updates(opt, static_cast<int>(s) + 1, cfg.split_updates, pool, nullptr, split);
      result.scales.push_back(std::move(split));
    }
    prev = opt.image();
  }
  result.image = clamp01(prev);
  result.image.set_colorspace(Colorspace::SRGB);
  return result;
}

}  // namespace stylecore
