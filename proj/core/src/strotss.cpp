#include "stylecore/strotss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stylecore/error.hpp"
#include "stylecore/image_tensor.hpp"
#include "stylecore/self_similarity.hpp"

namespace stylecore {

void StrotssConfig::validate() const {
  require(alpha > 0.0, ErrorKind::InvalidArgument, "alpha must be positive");
  require(scales >= 1, ErrorKind::InvalidArgument, "scales must be at least 1");
  require(base_long_side >= FeatureBank::kMinSide, ErrorKind::InvalidArgument,
          "base long side must be at least 32 px");
  require(steps >= 0, ErrorKind::InvalidArgument, "steps must be non-negative");
  require(lr > 0.0 && final_lr > 0.0, ErrorKind::InvalidArgument, "learning rates must be positive");
  require(samples >= 1, ErrorKind::InvalidArgument, "samples must be positive");
  require(pyramid_levels >= 1, ErrorKind::InvalidArgument, "pyramid levels must be at least 1");
  require(norm_eps >= 0.0, ErrorKind::InvalidArgument, "norm_eps must be non-negative");
}

double StrotssConfig::alpha_at(int scale) const { return alpha / std::ldexp(1.0, scale + 1); }

namespace {

ad::Tensor rows_of(const FeatureTensor& t, const std::vector<int>& cells) {
  ad::Tensor out({static_cast<int>(cells.size()), t.dim});
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const double* src = t.cell(static_cast<std::size_t>(cells[i]));
    std::copy_n(src, t.dim, out.storage().begin() + static_cast<long>(i) * t.dim);
  }
  return out;
}

ad::Tensor rows_of(const ad::Tensor& m, const std::vector<int>& cells) {
  const int d = m.dim(1);
  ad::Tensor out({static_cast<int>(cells.size()), d});
  for (std::size_t i = 0; i < cells.size(); ++i) {
    std::copy_n(m.storage().begin() + static_cast<long>(cells[i]) * d, d,
                out.storage().begin() + static_cast<long>(i) * d);
  }
  return out;
}

void require_rgb(const ImageBuffer& img, const char* what) {
  if (img.channels() != 3) {
    raise(ErrorKind::InvalidArgument, std::string(what) + " must have 3 channels, got " +
                                          std::to_string(img.channels()));
  }
}

}  // namespace

ad::Var grid_colors(ad::Var image, int grid_h, int grid_w) {
  ad::Var small = ad::bilinear_resize(image, grid_h, grid_w);
  return ad::transpose(ad::reshape(small, {image.dim(0), grid_h * grid_w}));
}

StrotssScaleInputs prepare_strotss_scale(const FeatureBank& bank, const ImageBuffer& content,
                                         const ImageBuffer& style, int long_side, const GuidanceSpec& guidance) {
  require_rgb(content, "content image");
  require_rgb(style, "style image");
  StrotssScaleInputs in;
  in.content = resize_long_side(content, long_side);
  in.style = resize_long_side(style, long_side);
  in.content_features = bank.extract(in.content);
  in.style_features = bank.extract(in.style);
  {
    ad::Tape tape;
    ad::Var s = tape.constant(image_to_tensor(in.style));
    in.style_colors = grid_colors(s, in.style_features.grid_h, in.style_features.grid_w).value();
  }
  if (!guidance.empty()) {
    const GridFrame out_frame{in.content_features.grid_h, in.content_features.grid_w, content.height(),
                              content.width()};
    const GridFrame style_frame{in.style_features.grid_h, in.style_features.grid_w, style.height(), style.width()};
    in.guidance = GridGuidance(guidance, out_frame, style_frame);
  }
  return in;
}

StrotssSamples draw_strotss_samples(const StrotssScaleInputs& in, int n, Rng& rng) {
  const auto& c = in.content_features;
  const auto& s = in.style_features;
  StrotssSamples out;
  const int n_out = std::min<int>(n, static_cast<int>(c.cells()));
  const int n_style = std::min<int>(n, static_cast<int>(s.cells()));
  out.out_cells = flat_indices(sample_coords(c.grid_h, c.grid_w, n_out, SampleMode::JitteredGrid, rng), c.grid_w);
  out.style_cells =
      flat_indices(sample_coords(s.grid_h, s.grid_w, n_style, SampleMode::RandomUniform, rng), s.grid_w);
  if (!in.guidance.empty()) {
    out.out_cells = append_unique(std::move(out.out_cells), in.guidance.required_out_cells());
    out.style_cells = append_unique(out.style_cells, in.guidance.required_style_cells(out.style_cells));
  }
  return out;
}

StrotssLosses strotss_total_loss(ad::Var out_features, ad::Var content_features, ad::Var style_features,
                                 ad::Var out_colors, ad::Var style_colors, double alpha,
                                 const RegionMembership* guidance, double beta, double norm_eps,
                                 GuidanceProbe* probe) {
  require(alpha > 0.0, ErrorKind::InvalidArgument, "alpha must be positive");
  StrotssLosses l;
  l.content = content_loss(out_features, content_features, norm_eps);
  l.moment = moment_loss(out_features, style_features);
  DistanceMatrix cost = cosine_distance_matrix(out_features, style_features, false, norm_eps);
  RemdOptions opts;
  const bool guided = guidance && guidance->pairs() > 0;
  if (guided) {
    cost = apply_guidance_costs(cost, *guidance, beta);
    opts.skip_unmatched_columns = true;
  }
  RemdTrace trace;
  l.remd = remd(cost, &trace, opts);
  l.palette = palette_loss(out_colors, style_colors);
  ad::Var num = ad::add(ad::add(ad::scale(l.content, alpha), l.moment), ad::add(l.remd, ad::scale(l.palette, 1.0 / alpha)));
  l.total = ad::scale(num, 1.0 / (2.0 + alpha + 1.0 / alpha));
  if (probe) {
    probe->rows = cost.rows();
    probe->cols = cost.cols();
    probe->allowed = cost.allowed;
    probe->trace = std::move(trace);
    probe->beta_entries = 0;
    if (guided) {
      for (int i = 0; i < probe->rows; ++i) {
        for (int j = 0; j < probe->cols; ++j) {
          if (cost.forbidden(i, j)) continue;
          for (std::size_t k = 0; k < guidance->pairs(); ++k) {
            if (guidance->rows[k][static_cast<std::size_t>(i)] && guidance->cols[k][static_cast<std::size_t>(j)]) {
              ++probe->beta_entries;
              break;
            }
          }
        }
      }
    }
  }
  return l;
}

StrotssLosses strotss_total_loss(ad::Tape& tape, ad::Var output, const StrotssScaleInputs& in,
                                 const StrotssSamples& samples, double alpha, const FeatureBank& bank,
                                 double norm_eps, GuidanceProbe* probe) {
  const Hypercolumns hc = bank.extract(tape, output);
  const auto& cf = in.content_features;
  if (hc.grid_h != cf.grid_h || hc.grid_w != cf.grid_w) {
    raise(ErrorKind::ShapeMismatch, "output and content feature grids differ");
  }
  ad::Var a = ad::gather_rows(hc.features, samples.out_cells);
  ad::Var c = tape.constant(rows_of(cf, samples.out_cells));
  ad::Var b = tape.constant(rows_of(in.style_features, samples.style_cells));
  ad::Var oc = ad::gather_rows(grid_colors(output, hc.grid_h, hc.grid_w), samples.out_cells);
  ad::Var sc = tape.constant(rows_of(in.style_colors, samples.style_cells));
  RegionMembership membership;
  if (!in.guidance.empty()) membership = in.guidance.membership(samples.out_cells, samples.style_cells);
  return strotss_total_loss(a, c, b, oc, sc, alpha, in.guidance.empty() ? nullptr : &membership,
                            in.guidance.beta(), norm_eps, probe);
}

double evaluate_strotss_loss(const ImageBuffer& output, const StrotssScaleInputs& in, double alpha,
                             const FeatureBank& bank, int samples, std::uint64_t sample_seed, double norm_eps) {
  Rng rng(sample_seed);
  const StrotssSamples s = draw_strotss_samples(in, samples, rng);
  ad::Tape tape;
  ad::Var o = tape.constant(image_to_tensor(output));
  return strotss_total_loss(tape, o, in, s, alpha, bank, norm_eps).total.value().item();
}

namespace {

ImageBuffer finest_band(const ImageBuffer& img) {
  if (std::min(img.height(), img.width()) < 2) return ImageBuffer(img.height(), img.width(), img.channels());
  return build_laplacian_pyramid(img, 2).levels[0];
}

ImageBuffer plus_color(ImageBuffer img, const std::array<double, 3>& color) {
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < 3; ++c) img.at(y, x, c) += color[static_cast<std::size_t>(c)];
    }
  }
  return img;
}

}  // namespace

ImageBuffer init_output(const ImageBuffer& content, const ImageBuffer& style, int long_side) {
  require_rgb(content, "content image");
  require_rgb(style, "style image");
  ImageBuffer out = plus_color(finest_band(resize_long_side(content, long_side)), mean_color(style));
  out.set_colorspace(Colorspace::SRGB);
  return out;
}

std::vector<ad::Var> pyramid_leaves(ad::Tape& tape, const LaplacianPyramid& pyr) {
  std::vector<ad::Var> leaves;
  for (std::size_t l = 0; l < pyr.levels.size(); ++l) leaves.push_back(tape.leaf(image_to_tensor(pyr, l)));
  return leaves;
}

LaplacianPyramid pyramid_from_tensors(const std::vector<ad::Tensor>& levels) {
  LaplacianPyramid pyr;
  for (const auto& t : levels) pyr.levels.push_back(tensor_to_image(t));
  return pyr;
}

ImageBuffer stylize_scale(const StrotssScaleInputs& in, const ImageBuffer& init, const ScaleSchedule& schedule,
                          const StrotssConfig& cfg, const FeatureBank& bank, Rng& rng, StrotssScaleReport* report,
                          const StrotssHooks* hooks) {
  require(init.height() == in.content.height() && init.width() == in.content.width() && init.channels() == 3,
          ErrorKind::ShapeMismatch, "initialization does not match the scale's content image");
  const int levels = std::min(cfg.pyramid_levels, max_pyramid_levels(init.height(), init.width()));
  std::vector<ad::Tensor> params;
  {
    const LaplacianPyramid pyr = build_laplacian_pyramid(init, levels);
    for (std::size_t l = 0; l < pyr.levels.size(); ++l) params.push_back(image_to_tensor(pyr, l));
  }
  ad::Rmsprop opt({schedule.lr, cfg.rms_decay, cfg.rms_eps});
  if (report) {
    report->long_side = std::max(init.height(), init.width());
    report->alpha = schedule.alpha;
    report->lr = schedule.lr;
  }
  auto current = [&] { return collapse_laplacian_pyramid(pyramid_from_tensors(params)); };

  for (int step = 1; step <= schedule.steps; ++step) {
    if (hooks) hooks->control.check_cancelled();
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (const auto& p : params) leaves.push_back(tape.leaf(p));
    ad::Var out = collapse_pyramid(leaves);
    const StrotssSamples samples = draw_strotss_samples(in, cfg.samples, rng);
    GuidanceProbe probe;
    const StrotssLosses l = strotss_total_loss(tape, out, in, samples, schedule.alpha, bank, cfg.norm_eps, &probe);
    tape.backward(l.total);
    std::vector<ad::Tensor> grads;
    std::vector<ad::Tensor*> ptrs;
    for (std::size_t k = 0; k < params.size(); ++k) {
      grads.push_back(tape.grad(leaves[k]));
      ptrs.push_back(&params[k]);
    }
    opt.step(ptrs, grads);

    const double loss = l.total.value().item();
    if (report) {
      report->losses.push_back(loss);
      if (!probe.allowed.empty()) {
        ++report->guided_steps;
        report->beta_entries += probe.beta_entries;
        const auto& t = probe.trace;
        for (int i = 0; i < probe.rows; ++i) {
          if (!probe.allowed[static_cast<std::size_t>(i) * probe.cols + t.row_choice[static_cast<std::size_t>(i)]]) {
            ++report->forbidden_selections;
          }
        }
        for (int j = 0; j < probe.cols; ++j) {
          const int i = t.col_choice[static_cast<std::size_t>(j)];
          if (i >= 0 && !probe.allowed[static_cast<std::size_t>(i) * probe.cols + j]) ++report->forbidden_selections;
        }
      }
    }
    if (hooks) {
      if (hooks->on_probe) hooks->on_probe(schedule.scale, step, probe);
      if (hooks->control.on_progress) {
        ProgressEvent ev{schedule.scale, schedule.scales, step, schedule.steps, loss, nullptr};
        ImageBuffer preview;
        if (hooks->control.wants_preview(step, schedule.steps)) {
          preview = clamp01(current());
          ev.preview = &preview;
        }
        hooks->control.on_progress(ev);
      }
    }
  }
  if (schedule.steps == 0) return init;
  ImageBuffer result = current();
  result.set_colorspace(Colorspace::SRGB);
  return result;
}

StrotssResult stylize_strotss(const ImageBuffer& content, const ImageBuffer& style, const StrotssConfig& cfg,
                              const GuidanceSpec& guidance, const StrotssHooks* hooks) {
  cfg.validate();
  require_rgb(content, "content image");
  require_rgb(style, "style image");
  if (!guidance.empty()) {
    validate_guidance(guidance, content.height(), content.width(), style.height(), style.width());
  }
  const FeatureBank bank(cfg.bank);
  Rng rng(cfg.seed);
  StrotssResult result;
  ImageBuffer prev;
  for (int s = 0; s < cfg.scales; ++s) {
    const int long_side = cfg.long_side_at(s);
    const StrotssScaleInputs in = prepare_strotss_scale(bank, content, style, long_side, guidance);
    ImageBuffer init;
    if (s == 0) {
      init = init_output(content, style, long_side);
    } else {
      // Upsampled result plus the content detail that only exists at this resolution.
      init = add(resize_bilinear(prev, in.content.height(), in.content.width()), finest_band(in.content));
    }
    ScaleSchedule schedule;
    schedule.alpha = cfg.alpha_at(s);
    schedule.lr = s + 1 == cfg.scales ? cfg.final_lr : cfg.lr;
    schedule.steps = cfg.steps;
    schedule.scale = s;
    schedule.scales = cfg.scales;
    StrotssScaleReport report;
    prev = stylize_scale(in, init, schedule, cfg, bank, rng, &report, hooks);
    result.scales.push_back(std::move(report));
  }
  result.image = clamp01(prev);
  return result;
}

}  // namespace stylecore
