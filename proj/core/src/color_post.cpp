#include "stylecore/color_post.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "stylecore/error.hpp"

namespace stylecore {

ImageBuffer guided_bilateral_filter(const ImageBuffer& ab, const ImageBuffer& guide_l, double sigma_s,
                                    double sigma_r) {
  require(sigma_s > 0.0 && sigma_r > 0.0, ErrorKind::InvalidArgument, "bilateral sigmas must be positive");
  require(guide_l.channels() == 1, ErrorKind::InvalidArgument, "guide must have one channel");
  if (ab.height() != guide_l.height() || ab.width() != guide_l.width()) {
    raise(ErrorKind::ShapeMismatch, "bilateral filter: guide and input sizes differ");
  }
  const int h = ab.height();
  const int w = ab.width();
  const int ch = ab.channels();
  const int radius = static_cast<int>(std::ceil(3.0 * sigma_s));
  std::vector<double> spatial(static_cast<std::size_t>(2 * radius + 1));
  for (int d = -radius; d <= radius; ++d) {
    spatial[static_cast<std::size_t>(d + radius)] = std::exp(-(d * d) / (2.0 * sigma_s * sigma_s));
  }
  const double range_k = -1.0 / (2.0 * sigma_r * sigma_r);
  ImageBuffer out(h, w, ch, ab.colorspace());
  std::vector<double> acc(static_cast<std::size_t>(ch));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double g0 = guide_l.at(y, x, 0);
      std::fill(acc.begin(), acc.end(), 0.0);
      double wsum = 0.0;
      for (int yy = std::max(0, y - radius); yy <= std::min(h - 1, y + radius); ++yy) {
        const double wy = spatial[static_cast<std::size_t>(yy - y + radius)];
        for (int xx = std::max(0, x - radius); xx <= std::min(w - 1, x + radius); ++xx) {
          const double dg = guide_l.at(yy, xx, 0) - g0;
          const double wt = wy * spatial[static_cast<std::size_t>(xx - x + radius)] * std::exp(range_k * dg * dg);
          wsum += wt;
          for (int c = 0; c < ch; ++c) acc[static_cast<std::size_t>(c)] += wt * ab.at(yy, xx, c);
        }
      }
      for (int c = 0; c < ch; ++c) out.at(y, x, c) = acc[static_cast<std::size_t>(c)] / wsum;
    }
  }
  return out;
}

namespace {

struct Moments {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
};

Moments moments(const ImageBuffer& img) {
  Moments m;
  const double n = static_cast<double>(img.pixel_count());
  const auto& d = img.storage();
  for (std::size_t p = 0; p < img.pixel_count(); ++p) m.mean += Eigen::Vector3d(d[3 * p], d[3 * p + 1], d[3 * p + 2]);
  m.mean /= n;
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    const Eigen::Vector3d v = Eigen::Vector3d(d[3 * p], d[3 * p + 1], d[3 * p + 2]) - m.mean;
    m.cov += v * v.transpose();
  }
  m.cov /= n;
  return m;
}

Eigen::Matrix3d sym_power(const Eigen::Matrix3d& m, double power) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(m);
  Eigen::Vector3d ev = es.eigenvalues().cwiseMax(0.0);
  for (int i = 0; i < 3; ++i) ev[i] = std::pow(ev[i], power);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

void require_lab(const ImageBuffer& img, const char* what) {
  if (img.channels() != 3 || img.colorspace() != Colorspace::Lab) {
    raise(ErrorKind::InvalidArgument, std::string(what) + " must be a 3-channel Lab image");
  }
}

}  // namespace

ImageBuffer match_color_moments(const ImageBuffer& img, const ImageBuffer& style, bool clamp) {
  require_lab(img, "moment matching input");
  require_lab(style, "moment matching style");
  require(img.pixel_count() > 0 && style.pixel_count() > 0, ErrorKind::InvalidArgument, "empty image");
  const Moments mi = moments(img);
  const Moments ms = moments(style);
  const Eigen::Matrix3d ridge = 1e-6 * Eigen::Matrix3d::Identity();
  const Eigen::Matrix3d a = sym_power(ms.cov + ridge, 0.5) * sym_power(mi.cov + ridge, -0.5);
  ImageBuffer out = img;
  auto& d = out.storage();
  for (std::size_t p = 0; p < out.pixel_count(); ++p) {
    const Eigen::Vector3d v = a * (Eigen::Vector3d(d[3 * p], d[3 * p + 1], d[3 * p + 2]) - mi.mean) + ms.mean;
    for (int c = 0; c < 3; ++c) {
      double x = v[c];
      if (clamp) x = c == 0 ? std::clamp(x, 0.0, 100.0) : std::clamp(x, -128.0, 128.0);
      d[3 * p + static_cast<std::size_t>(c)] = x;
    }
  }
  return out;
}

bool is_monochrome(const ImageBuffer& style_lab, double threshold) {
  require_lab(style_lab, "monochrome test input");
  const double n = static_cast<double>(style_lab.pixel_count());
  require(n > 0, ErrorKind::InvalidArgument, "empty image");
  const auto& d = style_lab.storage();
  double ma = 0.0;
  double mb = 0.0;
  for (std::size_t p = 0; p < style_lab.pixel_count(); ++p) {
    ma += d[3 * p + 1] / 256.0;
    mb += d[3 * p + 2] / 256.0;
  }
  ma /= n;
  mb /= n;
  double saa = 0.0;
  double sab = 0.0;
  double sbb = 0.0;
  for (std::size_t p = 0; p < style_lab.pixel_count(); ++p) {
    const double a = d[3 * p + 1] / 256.0 - ma;
    const double b = d[3 * p + 2] / 256.0 - mb;
    saa += a * a;
    sab += a * b;
    sbb += b * b;
  }
  const double peak = std::max({std::abs(saa), std::abs(sab), std::abs(sbb)}) / n;
  return peak < threshold;
}

ImageBuffer post_process_lab(const ImageBuffer& stylized, const ImageBuffer& content, const ImageBuffer& style,
                             const ColorPostConfig& cfg) {
  require(stylized.channels() == 3 && content.channels() == 3 && style.channels() == 3,
          ErrorKind::InvalidArgument, "colour post-processing needs RGB images");
  require(stylized.height() == content.height() && stylized.width() == content.width(), ErrorKind::ShapeMismatch,
          "stylized and content images must have the same size");
  const ImageBuffer out_lab = rgb_to_lab(stylized);
  if (!cfg.enabled) return out_lab;
  const ImageBuffer style_lab = rgb_to_lab(style);
  if (is_monochrome(style_lab)) return out_lab;

  const ImageBuffer content_lab = rgb_to_lab(content);
  ImageBuffer content_ab(content.height(), content.width(), 2);
  for (int y = 0; y < content.height(); ++y) {
    for (int x = 0; x < content.width(); ++x) {
      content_ab.at(y, x, 0) = content_lab.at(y, x, 1);
      content_ab.at(y, x, 1) = content_lab.at(y, x, 2);
    }
  }
  const ImageBuffer l = extract_channel(out_lab, 0);
  const ImageBuffer ab = guided_bilateral_filter(content_ab, l, cfg.sigma_s, cfg.sigma_r);
  ImageBuffer joined = out_lab;
  for (int y = 0; y < joined.height(); ++y) {
    for (int x = 0; x < joined.width(); ++x) {
      joined.at(y, x, 1) = ab.at(y, x, 0);
      joined.at(y, x, 2) = ab.at(y, x, 1);
    }
  }
  // Moments are matched on the joint (L, a, b) distribution; only the
  // transformed AB is kept so the stylized luminance survives untouched.
  const ImageBuffer matched = match_color_moments(joined, style_lab, true);
  ImageBuffer result = out_lab;
  for (int y = 0; y < result.height(); ++y) {
    for (int x = 0; x < result.width(); ++x) {
      result.at(y, x, 1) = matched.at(y, x, 1);
      result.at(y, x, 2) = matched.at(y, x, 2);
    }
  }
  return result;
}

ImageBuffer post_process(const ImageBuffer& stylized, const ImageBuffer& content, const ImageBuffer& style,
                         const ColorPostConfig& cfg) {
  if (!cfg.enabled) return stylized;
  if (is_monochrome(rgb_to_lab(style))) return stylized;
  ImageBuffer rgb = clamp01(lab_to_rgb(post_process_lab(stylized, content, style, cfg)));
  rgb.set_colorspace(Colorspace::SRGB);
  return rgb;
}

}  // namespace stylecore
