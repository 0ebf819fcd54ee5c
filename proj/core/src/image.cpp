#include "stylecore/image.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "stylecore/error.hpp"

namespace stylecore {

const char* to_string(Colorspace cs) {
  switch (cs) {
    case Colorspace::LinearRGB: return "linear-rgb";
    case Colorspace::SRGB: return "srgb";
    case Colorspace::Lab: return "lab";
    case Colorspace::Opponent: return "opponent";
  }
  return "unknown";
}

ImageBuffer::ImageBuffer(int height, int width, int channels, Colorspace cs,
                         double fill)
    : height_(height), width_(width), channels_(channels), colorspace_(cs) {
  require(height >= 0 && width >= 0 && channels >= 1, ErrorKind::InvalidArgument,
          "image dimensions must be non-negative with at least one channel");
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

ImageBuffer::ImageBuffer(int height, int width, int channels,
                         std::vector<double> data, Colorspace cs)
    : height_(height),
      width_(width),
      channels_(channels),
      colorspace_(cs),
      data_(std::move(data)) {
  require(height >= 0 && width >= 0 && channels >= 1, ErrorKind::InvalidArgument,
          "image dimensions must be non-negative with at least one channel");
  require(data_.size() == static_cast<std::size_t>(height) * width * channels,
          ErrorKind::ShapeMismatch, "image data length must equal H*W*C");
}

std::vector<LinearTap> linear_taps(int src_size, int dst_size) {
  require(src_size >= 1 && dst_size >= 1, ErrorKind::InvalidArgument,
          "resampling sizes must be positive");
  std::vector<LinearTap> taps(static_cast<std::size_t>(dst_size));
  const double scale = static_cast<double>(src_size) / dst_size;
  for (int i = 0; i < dst_size; ++i) {
    double s = (i + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src_size - 1));
    const int lo = static_cast<int>(std::floor(s));
    const int hi = std::min(lo + 1, src_size - 1);
    taps[static_cast<std::size_t>(i)] = {lo, hi, s - lo};
  }
  return taps;
}

ImageBuffer resize_bilinear(const ImageBuffer& img, int new_h, int new_w) {
  require(!img.empty(), ErrorKind::InvalidArgument, "cannot resize an empty image");
  require(new_h >= 1 && new_w >= 1, ErrorKind::InvalidArgument,
          "target size must be at least 1x1");
  const auto ty = linear_taps(img.height(), new_h);
  const auto tx = linear_taps(img.width(), new_w);
  const int c = img.channels();
  ImageBuffer out(new_h, new_w, c, img.colorspace());
  for (int y = 0; y < new_h; ++y) {
    const auto& a = ty[static_cast<std::size_t>(y)];
    for (int x = 0; x < new_w; ++x) {
      const auto& b = tx[static_cast<std::size_t>(x)];
      for (int k = 0; k < c; ++k) {
        const double top = (1.0 - b.weight) * img.at(a.lo, b.lo, k) +
                           b.weight * img.at(a.lo, b.hi, k);
        const double bottom = (1.0 - b.weight) * img.at(a.hi, b.lo, k) +
                              b.weight * img.at(a.hi, b.hi, k);
        out.at(y, x, k) = (1.0 - a.weight) * top + a.weight * bottom;
      }
    }
  }
  return out;
}

ImageBuffer downsample_box2(const ImageBuffer& img) {
  require(!img.empty(), ErrorKind::InvalidArgument, "cannot downsample an empty image");
  const int h = (img.height() + 1) / 2;
  const int w = (img.width() + 1) / 2;
  ImageBuffer out(h, w, img.channels(), img.colorspace());
  for (int y = 0; y < h; ++y) {
    const int y0 = 2 * y;
    const int y1 = std::min(y0 + 1, img.height() - 1);
    for (int x = 0; x < w; ++x) {
      const int x0 = 2 * x;
      const int x1 = std::min(x0 + 1, img.width() - 1);
      for (int k = 0; k < img.channels(); ++k) {
        out.at(y, x, k) = 0.25 * (img.at(y0, x0, k) + img.at(y0, x1, k) +
                                  img.at(y1, x0, k) + img.at(y1, x1, k));
      }
    }
  }
  return out;
}

ImageBuffer rotate90(const ImageBuffer& img, int quarter_turns) {
  const int k = ((quarter_turns % 4) + 4) % 4;
  if (k == 0) return img;
  const int h = img.height();
  const int w = img.width();
  const int oh = (k % 2 == 0) ? h : w;
  const int ow = (k % 2 == 0) ? w : h;
  ImageBuffer out(oh, ow, img.channels(), img.colorspace());
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      int sy = 0;
      int sx = 0;
      switch (k) {
        case 1: sy = x; sx = w - 1 - y; break;
        case 2: sy = h - 1 - y; sx = w - 1 - x; break;
        default: sy = h - 1 - x; sx = y; break;
      }
      for (int c = 0; c < img.channels(); ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  return out;
}

ImageBuffer resize_long_side(const ImageBuffer& img, int long_side) {
  require(long_side >= 1, ErrorKind::InvalidArgument, "long side must be positive");
  const int h = img.height();
  const int w = img.width();
  int nh = long_side;
  int nw = long_side;
  if (h >= w) {
    nw = std::max(1, static_cast<int>(std::lround(static_cast<double>(w) * long_side / h)));
  } else {
    nh = std::max(1, static_cast<int>(std::lround(static_cast<double>(h) * long_side / w)));
  }
  if (nh == h && nw == w) return img;
  return resize_bilinear(img, nh, nw);
}

std::array<double, 3> mean_color(const ImageBuffer& img) {
  require(img.channels() == 3, ErrorKind::InvalidArgument, "mean_color needs 3 channels");
  std::array<double, 3> sum{0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    for (int c = 0; c < 3; ++c) sum[static_cast<std::size_t>(c)] += img.storage()[i * 3 + c];
  }
  const double n = static_cast<double>(img.pixel_count());
  for (auto& v : sum) v /= n;
  return sum;
}

ImageBuffer clamp01(ImageBuffer img) {
  for (auto& v : img.storage()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

ImageBuffer add(const ImageBuffer& a, const ImageBuffer& b) {
  require(a.same_shape(b), ErrorKind::ShapeMismatch, "add: image shapes differ");
  ImageBuffer out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.storage()[i] += b.storage()[i];
  return out;
}

ImageBuffer subtract(const ImageBuffer& a, const ImageBuffer& b) {
  require(a.same_shape(b), ErrorKind::ShapeMismatch, "subtract: image shapes differ");
  ImageBuffer out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.storage()[i] -= b.storage()[i];
  return out;
}

ImageBuffer extract_channel(const ImageBuffer& img, int channel) {
  require(channel >= 0 && channel < img.channels(), ErrorKind::InvalidArgument,
          "channel index out of range");
  ImageBuffer out(img.height(), img.width(), 1, img.colorspace());
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    out.storage()[i] = img.storage()[i * img.channels() + channel];
  }
  return out;
}

double max_abs_difference(const ImageBuffer& a, const ImageBuffer& b) {
  require(a.same_shape(b), ErrorKind::ShapeMismatch, "image shapes differ");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a.storage()[i] - b.storage()[i]));
  }
  return m;
}

int max_pyramid_levels(int height, int width) {
  const int side = std::min(height, width);
  int levels = 1;
  while ((1 << levels) <= side) ++levels;
  return levels;
}

LaplacianPyramid build_laplacian_pyramid(const ImageBuffer& img, int n_levels) {
  require(!img.empty(), ErrorKind::InvalidArgument, "cannot decompose an empty image");
  require(n_levels >= 1, ErrorKind::InvalidArgument, "pyramid needs at least one level");
  require(n_levels <= max_pyramid_levels(img.height(), img.width()),
          ErrorKind::InvalidArgument, "too many pyramid levels for image size");
  LaplacianPyramid pyr;
  ImageBuffer current = img;
  for (int i = 0; i + 1 < n_levels; ++i) {
    ImageBuffer down = downsample_box2(current);
    ImageBuffer up = resize_bilinear(down, current.height(), current.width());
    pyr.levels.push_back(subtract(current, up));
    current = std::move(down);
  }
  pyr.levels.push_back(std::move(current));
  return pyr;
}

ImageBuffer collapse_laplacian_pyramid(const LaplacianPyramid& pyr) {
  require(!pyr.levels.empty(), ErrorKind::InvalidArgument, "empty pyramid");
  for (std::size_t i = 0; i + 1 < pyr.levels.size(); ++i) {
    const auto& fine = pyr.levels[i];
    const auto& coarse = pyr.levels[i + 1];
    require(coarse.height() == (fine.height() + 1) / 2 &&
                coarse.width() == (fine.width() + 1) / 2 &&
                coarse.channels() == fine.channels(),
            ErrorKind::ShapeMismatch, "inconsistent pyramid level shapes");
  }
  ImageBuffer current = pyr.levels.back();
  for (std::size_t i = pyr.levels.size() - 1; i-- > 0;) {
    const auto& band = pyr.levels[i];
    current = add(resize_bilinear(current, band.height(), band.width()), band);
  }
  return current;
}

namespace {

// Linear sRGB -> XYZ (D65). The inverse is derived from it, and the
// reference white is the image of RGB (1, 1, 1), so white maps to L = 100,
// a = b = 0 and the round trip is exact up to rounding.
const Eigen::Matrix3d& rgb_to_xyz_matrix() {
  static const Eigen::Matrix3d m = (Eigen::Matrix3d() << 0.4124564, 0.3575761, 0.1804375,  //
                                    0.2126729, 0.7151522, 0.0721750,                          //
                                    0.0193339, 0.1191920, 0.9503041)
                                       .finished();
  return m;
}

const Eigen::Matrix3d& xyz_to_rgb_matrix() {
  static const Eigen::Matrix3d m = rgb_to_xyz_matrix().inverse();
  return m;
}

const Eigen::Vector3d& reference_white() {
  static const Eigen::Vector3d w = rgb_to_xyz_matrix() * Eigen::Vector3d::Ones();
  return w;
}

double srgb_decode(double v) {
  return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

double srgb_encode(double v) {
  return v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

double lab_f(double t) {
  constexpr double delta = 6.0 / 29.0;
  return t > delta * delta * delta ? std::cbrt(t) : t / (3.0 * delta * delta) + 4.0 / 29.0;
}

double lab_f_inv(double t) {
  constexpr double delta = 6.0 / 29.0;
  return t > delta ? t * t * t : 3.0 * delta * delta * (t - 4.0 / 29.0);
}

ImageBuffer map_pixels3(const ImageBuffer& img, Colorspace out_cs, auto&& fn) {
  require(img.channels() == 3, ErrorKind::InvalidArgument,
          "colorspace conversion needs 3 channels");
  ImageBuffer out(img.height(), img.width(), 3, out_cs);
  const auto& in = img.storage();
  auto& dst = out.storage();
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const auto r = fn(in[3 * i], in[3 * i + 1], in[3 * i + 2]);
    dst[3 * i] = r[0];
    dst[3 * i + 1] = r[1];
    dst[3 * i + 2] = r[2];
  }
  return out;
}

}  // namespace

ImageBuffer srgb_to_linear(const ImageBuffer& img) {
  require(img.colorspace() == Colorspace::SRGB, ErrorKind::InvalidArgument,
          "srgb_to_linear expects an SRGB image");
  ImageBuffer out = img;
  for (auto& v : out.storage()) v = srgb_decode(v);
  out.set_colorspace(Colorspace::LinearRGB);
  return out;
}

ImageBuffer linear_to_srgb(const ImageBuffer& img) {
  require(img.colorspace() == Colorspace::LinearRGB, ErrorKind::InvalidArgument,
          "linear_to_srgb expects a LinearRGB image");
  ImageBuffer out = img;
  for (auto& v : out.storage()) v = srgb_encode(v);
  out.set_colorspace(Colorspace::SRGB);
  return out;
}

ImageBuffer rgb_to_lab(const ImageBuffer& img) {
  require(img.colorspace() == Colorspace::SRGB || img.colorspace() == Colorspace::LinearRGB,
          ErrorKind::InvalidArgument, "rgb_to_lab expects SRGB or LinearRGB input");
  const bool encoded = img.colorspace() == Colorspace::SRGB;
  return map_pixels3(img, Colorspace::Lab, [encoded](double r, double g, double b) {
    if (encoded) {
      r = srgb_decode(r);
      g = srgb_decode(g);
      b = srgb_decode(b);
    }
    const Eigen::Vector3d xyz = rgb_to_xyz_matrix() * Eigen::Vector3d(r, g, b);
    const Eigen::Vector3d& w = reference_white();
    const double fx = lab_f(xyz[0] / w[0]);
    const double fy = lab_f(xyz[1] / w[1]);
    const double fz = lab_f(xyz[2] / w[2]);
    return std::array<double, 3>{116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
  });
}

ImageBuffer lab_to_rgb(const ImageBuffer& img) {
  require(img.colorspace() == Colorspace::Lab, ErrorKind::InvalidArgument,
          "lab_to_rgb expects a Lab image");
  return map_pixels3(img, Colorspace::SRGB, [](double l, double a, double bb) {
    const double fy = (l + 16.0) / 116.0;
    const double fx = fy + a / 500.0;
    const double fz = fy - bb / 200.0;
    const Eigen::Vector3d& w = reference_white();
    const Eigen::Vector3d xyz(w[0] * lab_f_inv(fx), w[1] * lab_f_inv(fy), w[2] * lab_f_inv(fz));
    const Eigen::Vector3d rgb = xyz_to_rgb_matrix() * xyz;
    return std::array<double, 3>{srgb_encode(rgb[0]), srgb_encode(rgb[1]), srgb_encode(rgb[2])};
  });
}

const std::array<std::array<double, 3>, 3>& opponent_matrix() {
  static const std::array<std::array<double, 3>, 3> m = [] {
    const double s3 = 1.0 / std::sqrt(3.0);
    const double s2 = 1.0 / std::sqrt(2.0);
    const double s6 = 1.0 / std::sqrt(6.0);
    return std::array<std::array<double, 3>, 3>{
        std::array<double, 3>{s3, s3, s3},
        std::array<double, 3>{s2, -s2, 0.0},
        std::array<double, 3>{s6, s6, -2.0 * s6}};
  }();
  return m;
}

ImageBuffer to_opponent_space(const ImageBuffer& img) {
  require(img.channels() == 3, ErrorKind::InvalidArgument,
          "opponent transform needs a 3-channel RGB image");
  require(img.colorspace() != Colorspace::Lab && img.colorspace() != Colorspace::Opponent,
          ErrorKind::InvalidArgument, "opponent transform expects RGB input");
  const auto& m = opponent_matrix();
  return map_pixels3(img, Colorspace::Opponent, [&m](double r, double g, double b) {
    std::array<double, 3> o{};
    for (std::size_t i = 0; i < 3; ++i) o[i] = m[i][0] * r + m[i][1] * g + m[i][2] * b;
    return o;
  });
}

}  // namespace stylecore
