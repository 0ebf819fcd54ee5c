#include "stylecore/dst.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "stylecore/error.hpp"
#include "stylecore/gram.hpp"
#include "stylecore/image_tensor.hpp"
#include "stylecore/self_similarity.hpp"
#include "stylecore/transport.hpp"

namespace stylecore {

namespace {

double dist2(Point2 a, Point2 b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

double orient(Point2 a, Point2 b, Point2 c) { return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x); }

// dU(|a-b|)/da = kernel_slope(r^2) * (a - b)
double kernel_slope(TpsKernel kernel, double r2) {
  if (kernel == TpsKernel::Quadratic) return 2.0;
  return r2 > 0.0 ? std::log(r2) + 1.0 : 0.0;
}

struct TpsSystem {
  Eigen::FullPivLU<Eigen::MatrixXd> lu;
  // Fitted to the displacement values - centers, so equal point sets give
  // exactly zero coefficients. [k+3, 2]: w_i, then v_x, v_y, b.
  Eigen::MatrixXd coeffs;
};

TpsSystem fit_tps(const std::vector<Point2>& centers, const std::vector<Point2>& values, const TpsOptions& opts) {
  const int k = static_cast<int>(centers.size());
  require(values.size() == centers.size(), ErrorKind::ShapeMismatch, "tps point sets differ in size");
  require(opts.reg >= 0.0 && std::isfinite(opts.reg), ErrorKind::InvalidArgument,
          "tps regularization must be non-negative");
  if (k < 3) raise(ErrorKind::Singular, "tps needs at least 3 points, got " + std::to_string(k));
  const int n = k + 3;
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, 2);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) L(i, j) = tps_kernel(opts.kernel, dist2(centers[static_cast<std::size_t>(i)], centers[static_cast<std::size_t>(j)]));
    L(i, i) += opts.reg;
    const Point2 c = centers[static_cast<std::size_t>(i)];
    L(i, k) = L(k, i) = c.x;
    L(i, k + 1) = L(k + 1, i) = c.y;
    L(i, k + 2) = L(k + 2, i) = 1.0;
    B(i, 0) = values[static_cast<std::size_t>(i)].x - c.x;
    B(i, 1) = values[static_cast<std::size_t>(i)].y - c.y;
  }
  TpsSystem sys{Eigen::FullPivLU<Eigen::MatrixXd>(L), {}};
  if (!sys.lu.isInvertible()) {
    raise(ErrorKind::Singular, "tps system is singular (duplicate or collinear points)");
  }
  sys.coeffs = sys.lu.solve(B);
  return sys;
}

TpsSolution to_solution(const std::vector<Point2>& centers, const Eigen::MatrixXd& a, TpsKernel kernel) {
  const int k = static_cast<int>(centers.size());
  TpsSolution s;
  s.centers = centers;
  s.kernel = kernel;
  for (int i = 0; i < k; ++i) s.w.push_back({a(i, 0), a(i, 1)});
  s.v = {{{1.0 + a(k, 0), a(k, 1)}, {a(k + 1, 0), 1.0 + a(k + 1, 1)}}};
  s.b = {a(k + 2, 0), a(k + 2, 1)};
  return s;
}

ad::Tensor flow_of(const TpsSolution& sol, int h, int w) {
  require(h >= 1 && w >= 1, ErrorKind::InvalidArgument, "flow field must be non-empty");
  ad::Tensor out({h, w, 2});
  auto& d = out.storage();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Point2 q{static_cast<double>(x), static_cast<double>(y)};
      const Point2 f = sol(q);
      const std::size_t i = (static_cast<std::size_t>(y) * w + x) * 2;
      d[i] = f.x - q.x;
      d[i + 1] = f.y - q.y;
    }
  }
  return out;
}

ImageBuffer finest_band(const ImageBuffer& img) {
  if (std::min(img.height(), img.width()) < 2) return ImageBuffer(img.height(), img.width(), img.channels());
  return build_laplacian_pyramid(img, 2).levels[0];
}

ad::Tensor rows_of(const FeatureTensor& t, const std::vector<int>& cells) {
  ad::Tensor out({static_cast<int>(cells.size()), t.dim});
  for (std::size_t i = 0; i < cells.size(); ++i) {
    std::copy_n(t.cell(static_cast<std::size_t>(cells[i])), t.dim,
                out.storage().begin() + static_cast<long>(i) * t.dim);
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

ad::Tensor points_tensor(const std::vector<Point2>& p) {
  ad::Tensor t({static_cast<int>(p.size()), 2});
  for (std::size_t i = 0; i < p.size(); ++i) {
    t[2 * i] = p[i].x;
    t[2 * i + 1] = p[i].y;
  }
  return t;
}

std::vector<Point2> sources_of(const CorrespondenceSet& c) {
  std::vector<Point2> out;
  for (const auto& p : c) out.push_back(p.source);
  return out;
}

}  // namespace

// ---- keypoints -------------------------------------------------------------

CorrespondenceSet clean_keypoints(const CorrespondenceSet& raw, const CleanOptions& opts) {
  require(opts.max_pairs >= 1, ErrorKind::InvalidArgument, "max_pairs must be positive");
  require(opts.min_dist >= 0.0, ErrorKind::InvalidArgument, "min_dist must be non-negative");
  std::vector<std::size_t> order(raw.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return raw[a].activation > raw[b].activation; });
  const double min2 = opts.min_dist * opts.min_dist;
  CorrespondenceSet kept;
  for (std::size_t idx : order) {
    if (static_cast<int>(kept.size()) >= opts.max_pairs) break;
    const auto& cand = raw[idx];
    const bool far = std::all_of(kept.begin(), kept.end(),
                                 [&](const Correspondence& k) { return dist2(k.source, cand.source) >= min2; });
    if (far) kept.push_back(cand);
  }
  std::erase_if(kept, [&](const Correspondence& c) { return c.activation < opts.activation_threshold; });
  if (kept.empty()) raise(ErrorKind::InvalidArgument, "no correspondences left after cleaning");
  return kept;
}

Point2 Similarity2::apply(Point2 p) const {
  return {scale * (rotation[0][0] * p.x + rotation[0][1] * p.y) + translation[0],
          scale * (rotation[1][0] * p.x + rotation[1][1] * p.y) + translation[1]};
}

Similarity2 align_umeyama(const std::vector<Point2>& src, const std::vector<Point2>& dst) {
  require(src.size() == dst.size(), ErrorKind::ShapeMismatch, "alignment point sets differ in size");
  require(src.size() >= 2, ErrorKind::InvalidArgument, "alignment needs at least 2 point pairs");
  const int k = static_cast<int>(src.size());
  Eigen::Matrix2Xd a(2, k);
  Eigen::Matrix2Xd b(2, k);
  for (int i = 0; i < k; ++i) {
    a(0, i) = src[static_cast<std::size_t>(i)].x;
    a(1, i) = src[static_cast<std::size_t>(i)].y;
    b(0, i) = dst[static_cast<std::size_t>(i)].x;
    b(1, i) = dst[static_cast<std::size_t>(i)].y;
  }
  const Eigen::Vector2d mean = a.rowwise().mean();
  if ((a.colwise() - mean).squaredNorm() < 1e-18) {
    raise(ErrorKind::Singular, "alignment source points coincide");
  }
  const Eigen::Matrix3d t = Eigen::umeyama(a, b, true);
  Similarity2 s;
  const Eigen::Matrix2d sr = t.topLeftCorner<2, 2>();
  s.scale = std::sqrt(std::abs(sr.determinant()));
  if (!(s.scale > 0.0)) raise(ErrorKind::Singular, "alignment collapsed to zero scale");
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) s.rotation[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = sr(r, c) / s.scale;
    s.translation[static_cast<std::size_t>(r)] = t(r, 2);
  }
  return s;
}

bool segments_cross(Point2 a, Point2 b, Point2 c, Point2 d) {
  const double o1 = orient(a, b, c);
  const double o2 = orient(a, b, d);
  const double o3 = orient(c, d, a);
  const double o4 = orient(c, d, b);
  return ((o1 > 0 && o2 < 0) || (o1 < 0 && o2 > 0)) && ((o3 > 0 && o4 < 0) || (o3 < 0 && o4 > 0));
}

CorrespondenceSet remove_crossings(const CorrespondenceSet& c) {
  CorrespondenceSet out = c;
  for (;;) {
    bool found = false;
    for (std::size_t i = 0; i < out.size() && !found; ++i) {
      for (std::size_t j = i + 1; j < out.size() && !found; ++j) {
        if (!segments_cross(out[i].source, out[i].target, out[j].source, out[j].target)) continue;
        // ties drop the later pair
        const std::size_t drop = out[j].activation <= out[i].activation ? j : i;
        out.erase(out.begin() + static_cast<long>(drop));
        found = true;
      }
    }
    if (!found) return out;
  }
}

CorrespondenceSet prepare_correspondences(const CorrespondenceSet& raw, const PrepareOptions& opts) {
  if (raw.empty()) raise(ErrorKind::InvalidArgument, "no correspondences given");
  for (const auto& p : raw) {
    if (!std::isfinite(p.source.x) || !std::isfinite(p.source.y) || !std::isfinite(p.target.x) ||
        !std::isfinite(p.target.y) || !std::isfinite(p.activation)) {
      raise(ErrorKind::InvalidArgument, "correspondence coordinates must be finite");
    }
  }
  CorrespondenceSet c = opts.clean ? clean_keypoints(raw, opts.clean_opts) : raw;
  std::vector<Point2> style_pts;
  for (const auto& p : c) style_pts.push_back(p.target);
  const Similarity2 s = align_umeyama(style_pts, sources_of(c));
  for (auto& p : c) p.target = s.apply(p.target);
  if (opts.clean) c = remove_crossings(c);
  return c;
}

// ---- thin-plate spline -----------------------------------------------------

double tps_kernel(TpsKernel kernel, double r2) {
  if (kernel == TpsKernel::Quadratic) return r2;
  return r2 > 0.0 ? 0.5 * r2 * std::log(r2) : 0.0;
}

Point2 TpsSolution::operator()(Point2 q) const {
  double fx = v[0][0] * q.x + v[1][0] * q.y + b[0];
  double fy = v[0][1] * q.x + v[1][1] * q.y + b[1];
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const double u = tps_kernel(kernel, dist2(q, centers[i]));
    fx += w[i][0] * u;
    fy += w[i][1] * u;
  }
  return {fx, fy};
}

TpsSolution solve_tps(const std::vector<Point2>& src, const std::vector<Point2>& dst, const TpsOptions& opts) {
  for (const auto& p : src) {
    require(std::isfinite(p.x) && std::isfinite(p.y), ErrorKind::InvalidArgument, "tps points must be finite");
  }
  const TpsSystem sys = fit_tps(src, dst, opts);
  return to_solution(src, sys.coeffs, opts.kernel);
}

ad::Tensor render_flow_field(const TpsSolution& sol, int h, int w) { return flow_of(sol, h, w); }

ad::Var tps_flow(ad::Var centers, const std::vector<Point2>& values, int h, int w, const TpsOptions& opts) {
  ad::Tape& tape = ad::tape_of({centers});
  require(centers.value().rank() == 2 && centers.dim(1) == 2, ErrorKind::ShapeMismatch, "centers must be [k, 2]");
  const int k = centers.dim(0);
  require(static_cast<std::size_t>(k) == values.size(), ErrorKind::ShapeMismatch,
          "centers and values differ in count");
  std::vector<Point2> c(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) c[static_cast<std::size_t>(i)] = {centers.value()[2 * i], centers.value()[2 * i + 1]};
  auto sys = std::make_shared<TpsSystem>(fit_tps(c, values, opts));
  ad::Tensor out = flow_of(to_solution(c, sys->coeffs, opts.kernel), h, w);
  const int cid = centers.id();
  const TpsKernel kernel = opts.kernel;
  return tape.record(std::move(out), {centers}, [cid, c, sys, kernel, k, h, w](ad::Tape& tp, const ad::Tensor& g) {
    ad::Tensor* gc = tp.grad_buffer(cid);
    if (!gc) return;
    const Eigen::MatrixXd& a = sys->coeffs;
    Eigen::MatrixXd abar = Eigen::MatrixXd::Zero(k + 3, 2);
    std::vector<double> dc(static_cast<std::size_t>(2 * k), 0.0);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t q = (static_cast<std::size_t>(y) * w + x) * 2;
        const double gx = g[q];
        const double gy = g[q + 1];
        if (gx == 0.0 && gy == 0.0) continue;
        for (int i = 0; i < k; ++i) {
          const Point2 ci = c[static_cast<std::size_t>(i)];
          const double r2 = (x - ci.x) * (x - ci.x) + (y - ci.y) * (y - ci.y);
          abar(i, 0) += tps_kernel(kernel, r2) * gx;
          abar(i, 1) += tps_kernel(kernel, r2) * gy;
          const double s = (gx * a(i, 0) + gy * a(i, 1)) * kernel_slope(kernel, r2);
          dc[2 * static_cast<std::size_t>(i)] += s * (ci.x - x);
          dc[2 * static_cast<std::size_t>(i) + 1] += s * (ci.y - y);
        }
        abar(k, 0) += x * gx;
        abar(k, 1) += x * gy;
        abar(k + 1, 0) += y * gx;
        abar(k + 1, 1) += y * gy;
        abar(k + 2, 0) += gx;
        abar(k + 2, 1) += gy;
      }
    }
    // A = L^-1 B with symmetric L, so dLoss/dL = -(L^-1 Abar) A^T.
    const Eigen::MatrixXd z = sys->lu.solve(abar);
    const Eigen::MatrixXd m = -z * a.transpose();
    for (int i = 0; i < k; ++i) {
      const Point2 ci = c[static_cast<std::size_t>(i)];
      for (int j = 0; j < k; ++j) {
        if (j == i) continue;
        const Point2 cj = c[static_cast<std::size_t>(j)];
        const double s = (m(i, j) + m(j, i)) * kernel_slope(kernel, dist2(ci, cj));
        dc[2 * static_cast<std::size_t>(i)] += s * (ci.x - cj.x);
        dc[2 * static_cast<std::size_t>(i) + 1] += s * (ci.y - cj.y);
      }
      // The right-hand side values - centers depends on the centers too.
      dc[2 * static_cast<std::size_t>(i)] += m(i, k) + m(k, i) - z(i, 0);
      dc[2 * static_cast<std::size_t>(i) + 1] += m(i, k + 1) + m(k + 1, i) - z(i, 1);
    }
    for (std::size_t i = 0; i < dc.size(); ++i) gc->storage()[i] += dc[i];
  });
}

ImageBuffer warp_image(const ImageBuffer& img, const ad::Tensor& flow) {
  ad::Tape tape;
  ad::Var i = tape.constant(image_to_tensor(img));
  ad::Var f = tape.constant(flow);
  ImageBuffer out = tensor_to_image(ad::warp_bilinear(i, f).value(), img.colorspace());
  return out;
}

// ---- losses ----------------------------------------------------------------

ad::Var deformation_loss(const CorrespondenceSet& c, ad::Var theta) {
  const int k = static_cast<int>(c.size());
  require(k >= 1, ErrorKind::InvalidArgument, "deformation loss needs correspondences");
  require(theta.value().rank() == 2 && theta.dim(0) == k && theta.dim(1) == 2, ErrorKind::ShapeMismatch,
          "theta must be [k, 2]");
  ad::Tensor gap({k, 2});
  for (int i = 0; i < k; ++i) {
    gap[2 * static_cast<std::size_t>(i)] = c[static_cast<std::size_t>(i)].target.x - c[static_cast<std::size_t>(i)].source.x;
    gap[2 * static_cast<std::size_t>(i) + 1] = c[static_cast<std::size_t>(i)].target.y - c[static_cast<std::size_t>(i)].source.y;
  }
  ad::Tape& tape = ad::tape_of({theta});
  ad::Var d = ad::sub(tape.constant(std::move(gap)), theta);
  return ad::mean(ad::sqrt(ad::sum(ad::square(d), 1)));
}

ad::Var tv_regularizer(ad::Var flow) {
  ad::Tape& tape = ad::tape_of({flow});
  require(flow.value().rank() == 3 && flow.dim(2) == 2, ErrorKind::ShapeMismatch, "flow must be [H, W, 2]");
  const int h = flow.dim(0);
  const int w = flow.dim(1);
  require(h >= 1 && w >= 1, ErrorKind::InvalidArgument, "flow must be non-empty");
  const auto& f = flow.value().storage();
  const double norm = 1.0 / (static_cast<double>(h) * w);
  auto at = [w](int y, int x, int c) { return (static_cast<std::size_t>(y) * w + x) * 2 + c; };
  double total = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 2; ++c) {
        if (y + 1 < h) total += std::abs(f[at(y + 1, x, c)] - f[at(y, x, c)]);
        if (x + 1 < w) total += std::abs(f[at(y, x + 1, c)] - f[at(y, x, c)]);
      }
    }
  }
  const int fid = flow.id();
  return tape.record(ad::Tensor::scalar(total * norm), {flow}, [fid, h, w, norm, at](ad::Tape& tp, const ad::Tensor& g) {
    ad::Tensor* gf = tp.grad_buffer(fid);
    if (!gf) return;
    const auto& v = tp.value(fid).storage();
    auto& d = gf->storage();
    const double s = g[0] * norm;
    auto edge = [&](std::size_t a, std::size_t b) {
      const double diff = v[a] - v[b];
      const double sg = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
      d[a] += s * sg;
      d[b] -= s * sg;
    };
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 2; ++c) {
          if (y + 1 < h) edge(at(y + 1, x, c), at(y, x, c));
          if (x + 1 < w) edge(at(y, x + 1, c), at(y, x, c));
        }
      }
    }
  });
}

DstWeights regime_weights(DstBase base, DstRegime regime) {
  if (base == DstBase::Strotss) {
    switch (regime) {
      case DstRegime::Low: return {0.3, 75.0};
      case DstRegime::Med: return {0.5, 50.0};
      case DstRegime::High: return {0.7, 10.0};
    }
  } else {
    switch (regime) {
      case DstRegime::Low: return {3.0, 750.0};
      case DstRegime::Med: return {7.0, 100.0};
      case DstRegime::High: return {15.0, 100.0};
    }
  }
  raise(ErrorKind::InvalidArgument, "unknown deformation regime");
}

// ---- optimization ----------------------------------------------------------

void DstConfig::validate() const {
  require(!alpha || *alpha > 0.0, ErrorKind::InvalidArgument, "alpha must be positive");
  require(beta >= 0.0 && gamma >= 0.0, ErrorKind::InvalidArgument, "beta and gamma must be non-negative");
  require(scales >= 1, ErrorKind::InvalidArgument, "scales must be at least 1");
  require(base_long_side >= FeatureBank::kMinSide, ErrorKind::InvalidArgument,
          "base long side must be at least 32 px");
  require(steps >= 0, ErrorKind::InvalidArgument, "steps must be non-negative");
  require(lr > 0.0 && final_lr > 0.0 && theta_lr > 0.0, ErrorKind::InvalidArgument,
          "learning rates must be positive");
  require(samples >= 1, ErrorKind::InvalidArgument, "samples must be positive");
  require(pyramid_levels >= 1, ErrorKind::InvalidArgument, "pyramid levels must be at least 1");
  require(norm_eps >= 0.0, ErrorKind::InvalidArgument, "norm_eps must be non-negative");
}

double DstConfig::alpha_at(int scale) const {
  if (base == DstBase::Gram) return alpha.value_or(1.0);
  return alpha.value_or(16.0) / std::ldexp(1.0, scale + 1);
}

DstScaleInputs prepare_dst_scale(const FeatureBank& bank, const ImageBuffer& content, const ImageBuffer& style,
                                 int long_side, DstBase base) {
  DstScaleInputs in;
  in.base = base;
  if (base == DstBase::Strotss) {
    in.strotss = prepare_strotss_scale(bank, content, style, long_side, {});
  } else {
    require(content.channels() == 3 && style.channels() == 3, ErrorKind::InvalidArgument,
            "images must have 3 channels");
    in.strotss.content = resize_long_side(content, long_side);
    in.strotss.style = resize_long_side(style, long_side);
    const GramLayers layers = default_gram_layers(bank);
    in.style_layer_ids = layers.style;
    in.content_layer_id = layers.content;
    ad::Tape tape;
    const auto sa = bank.activations(tape, tape.constant(image_to_tensor(in.strotss.style)));
    for (int l : layers.style) {
      ad::Var a = sa[static_cast<std::size_t>(l)];
      const double n = static_cast<double>(a.dim(1)) * a.dim(2);
      in.style_layers.push_back(ad::scale(a, 1.0 / std::sqrt(n)).value());
    }
    const auto ca = bank.activations(tape, tape.constant(image_to_tensor(in.strotss.content)));
    in.content_layer = ca[static_cast<std::size_t>(layers.content)].value();
  }
  in.sx = static_cast<double>(in.strotss.content.width()) / content.width();
  in.sy = static_cast<double>(in.strotss.content.height()) / content.height();
  return in;
}

ImageBuffer dst_init_output(const DstScaleInputs& in, const ImageBuffer& style) {
  if (in.base == DstBase::Strotss) {
    return init_output(in.strotss.content, style, std::max(in.strotss.content.height(), in.strotss.content.width()));
  }
  return in.strotss.content;
}

namespace {

ad::Var strotss_style(ad::Tape& tape, ad::Var image, const DstScaleInputs& in, const StrotssSamples& s, double alpha,
                      const FeatureBank& bank, double norm_eps, ad::Var* features) {
  const Hypercolumns hc = bank.extract(tape, image);
  ad::Var a = ad::gather_rows(hc.features, s.out_cells);
  ad::Var b = tape.constant(rows_of(in.strotss.style_features, s.style_cells));
  ad::Var oc = ad::gather_rows(grid_colors(image, hc.grid_h, hc.grid_w), s.out_cells);
  ad::Var sc = tape.constant(rows_of(in.strotss.style_colors, s.style_cells));
  if (features) *features = a;
  ad::Var r = remd(cosine_distance_matrix(a, b, false, norm_eps));
  return ad::add(ad::add(moment_loss(a, b), r), ad::scale(palette_loss(oc, sc), 1.0 / alpha));
}

ad::Var gram_style(ad::Tape& tape, const std::vector<ad::Var>& acts, const DstScaleInputs& in) {
  std::vector<ad::Var> o;
  std::vector<ad::Var> s;
  std::vector<double> w;
  for (std::size_t k = 0; k < in.style_layer_ids.size(); ++k) {
    ad::Var a = acts[static_cast<std::size_t>(in.style_layer_ids[k])];
    const double f = a.dim(0);
    const double n = static_cast<double>(a.dim(1)) * a.dim(2);
    o.push_back(ad::scale(a, 1.0 / std::sqrt(n)));
    s.push_back(tape.constant(in.style_layers[k]));
    // N is already folded into the activations.
    w.push_back(1.0 / (4.0 * f * f));
  }
  return gram_style_loss(o, s, w);
}

}  // namespace

DstTerms dst_objective(ad::Tape& tape, ad::Var output, ad::Var theta, const CorrespondenceSet& c,
                       const DstScaleInputs& in, const StrotssSamples* samples, double alpha, const DstConfig& cfg,
                       const FeatureBank& bank) {
  require(alpha > 0.0, ErrorKind::InvalidArgument, "alpha must be positive");
  const int h = output.dim(1);
  const int w = output.dim(2);
  const int k = static_cast<int>(c.size());
  DstTerms t;
  ad::Var base = tape.constant(points_tensor(sources_of(c)));
  ad::Var frame = tape.constant(ad::Tensor({1, 2}, std::vector<double>{in.sx, in.sy}));
  ad::Var centers = ad::add_scalar(ad::mul(ad::add_scalar(ad::add(base, theta), 0.5), frame), -0.5);
  std::vector<Point2> values(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    const Point2 p = c[static_cast<std::size_t>(i)].source;
    values[static_cast<std::size_t>(i)] = {(p.x + 0.5) * in.sx - 0.5, (p.y + 0.5) * in.sy - 0.5};
  }
  t.flow = tps_flow(centers, values, h, w, cfg.tps);
  t.warped = ad::warp_bilinear(output, t.flow);
  if (in.base == DstBase::Strotss) {
    require(samples != nullptr, ErrorKind::InvalidArgument, "STROTSS objective needs samples");
    ad::Var feats;
    t.style = strotss_style(tape, output, in, *samples, alpha, bank, cfg.norm_eps, &feats);
    t.style_warped = strotss_style(tape, t.warped, in, *samples, alpha, bank, cfg.norm_eps, nullptr);
    ad::Var cf = tape.constant(rows_of(in.strotss.content_features, samples->out_cells));
    t.content = content_loss(feats, cf, cfg.norm_eps);
  } else {
    const auto oa = bank.activations(tape, output);
    const auto wa = bank.activations(tape, t.warped);
    t.style = gram_style(tape, oa, in);
    t.style_warped = gram_style(tape, wa, in);
    ad::Var co = oa[static_cast<std::size_t>(in.content_layer_id)];
    t.content = ad::scale(l2_content_loss(co, tape.constant(in.content_layer)), 1.0 / static_cast<double>(co.value().numel()));
  }
  t.warp = deformation_loss(c, theta);
  t.tv = tv_regularizer(t.flow);
  t.total = ad::add(ad::add(ad::scale(t.content, alpha), ad::add(t.style, t.style_warped)),
                    ad::add(ad::scale(t.warp, cfg.beta), ad::scale(t.tv, cfg.gamma)));
  return t;
}

double evaluate_dst_objective(const ImageBuffer& output, const std::vector<Point2>& theta, const CorrespondenceSet& c,
                              const DstScaleInputs& in, double alpha, const DstConfig& cfg, const FeatureBank& bank,
                              std::uint64_t sample_seed) {
  ad::Tape tape;
  ad::Var o = tape.constant(image_to_tensor(output));
  ad::Var th = tape.constant(points_tensor(theta));
  StrotssSamples s;
  if (in.base == DstBase::Strotss) {
    Rng rng(sample_seed);
    s = draw_strotss_samples(in.strotss, cfg.samples, rng);
  }
  return dst_objective(tape, o, th, c, in, &s, alpha, cfg, bank).total.value().item();
}

DstResult dst_stylize(const ImageBuffer& content, const ImageBuffer& style, const CorrespondenceSet& c,
                      const DstConfig& cfg, const RunControl* control) {
  cfg.validate();
  require(content.channels() == 3 && style.channels() == 3, ErrorKind::InvalidArgument,
          "images must have 3 channels");
  require(c.size() >= 3, ErrorKind::InvalidArgument, "deformation needs at least 3 correspondences");
  const FeatureBank bank(cfg.bank);
  Rng rng(cfg.seed);
  const int k = static_cast<int>(c.size());
  ad::Tensor theta({k, 2});
  ad::Adam theta_opt({cfg.theta_lr, 0.9, 0.999, 1e-8});
  DstResult result;
  ImageBuffer prev;
  ad::Tensor last_flow;

  for (int sc = 0; sc < cfg.scales; ++sc) {
    const DstScaleInputs in = prepare_dst_scale(bank, content, style, cfg.long_side_at(sc), cfg.base);
    ImageBuffer init = sc == 0 ? dst_init_output(in, style)
                               : add(resize_bilinear(prev, in.strotss.content.height(), in.strotss.content.width()),
                                     finest_band(in.strotss.content));
    const double alpha = cfg.alpha_at(sc);
    const int levels = std::min(cfg.pyramid_levels, max_pyramid_levels(init.height(), init.width()));
    std::vector<ad::Tensor> params;
    {
      const LaplacianPyramid pyr = build_laplacian_pyramid(init, levels);
      for (std::size_t l = 0; l < pyr.levels.size(); ++l) params.push_back(image_to_tensor(pyr, l));
    }
    ad::Rmsprop opt({sc + 1 == cfg.scales ? cfg.final_lr : cfg.lr, 0.99, 1e-8});
    auto current = [&] { return collapse_laplacian_pyramid(pyramid_from_tensors(params)); };
    std::vector<double> losses;

    for (int step = 1; step <= cfg.steps; ++step) {
      if (control) control->check_cancelled();
      ad::Tape tape;
      std::vector<ad::Var> leaves;
      for (const auto& p : params) leaves.push_back(tape.leaf(p));
      ad::Var th = tape.leaf(theta);
      ad::Var out = collapse_pyramid(leaves);
      StrotssSamples samples;
      if (cfg.base == DstBase::Strotss) samples = draw_strotss_samples(in.strotss, cfg.samples, rng);
      const DstTerms terms = dst_objective(tape, out, th, c, in, &samples, alpha, cfg, bank);
      tape.backward(terms.total);
      std::vector<ad::Tensor> grads;
      std::vector<ad::Tensor*> ptrs;
      for (std::size_t l = 0; l < params.size(); ++l) {
        grads.push_back(tape.grad(leaves[l]));
        ptrs.push_back(&params[l]);
      }
      opt.step(ptrs, grads);
      // Linear decay keeps theta from rattling around the TV kink at the end of a scale.
      theta_opt.set_lr(cfg.theta_lr * (cfg.steps - step + 1) / cfg.steps);
      theta_opt.step({&theta}, {tape.grad(th)});
      const double loss = terms.total.value().item();
      losses.push_back(loss);
      if (control && control->on_progress) {
        ProgressEvent ev{sc, cfg.scales, step, cfg.steps, loss, nullptr};
        ImageBuffer preview;
        if (control->wants_preview(step, cfg.steps)) {
          preview = clamp01(tensor_to_image(terms.warped.value()));
          ev.preview = &preview;
        }
        control->on_progress(ev);
      }
    }
    prev = cfg.steps == 0 ? init : current();
    result.losses.push_back(std::move(losses));

    if (sc + 1 == cfg.scales) {
      ad::Tape tape;
      ad::Var th = tape.constant(theta);
      ad::Var base = tape.constant(points_tensor(sources_of(c)));
      ad::Var frame = tape.constant(ad::Tensor({1, 2}, std::vector<double>{in.sx, in.sy}));
      ad::Var centers = ad::add_scalar(ad::mul(ad::add_scalar(ad::add(base, th), 0.5), frame), -0.5);
      std::vector<Point2> values;
      for (const auto& p : c) values.push_back({(p.source.x + 0.5) * in.sx - 0.5, (p.source.y + 0.5) * in.sy - 0.5});
      last_flow = tps_flow(centers, values, prev.height(), prev.width(), cfg.tps).value();
      result.warp_loss = deformation_loss(c, th).value().item();
    }
  }
  result.unwarped = clamp01(prev);
  result.image = clamp01(warp_image(prev, last_flow));
  result.image.set_colorspace(Colorspace::SRGB);
  for (int i = 0; i < k; ++i) result.theta.push_back({theta[2 * static_cast<std::size_t>(i)], theta[2 * static_cast<std::size_t>(i) + 1]});
  return result;
}

}  // namespace stylecore
