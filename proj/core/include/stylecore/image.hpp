#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace stylecore {

enum class Colorspace { LinearRGB, SRGB, Lab, Opponent };

const char* to_string(Colorspace cs);

/// H x W x C raster of doubles, row-major with the channel index fastest.
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(int height, int width, int channels,
              Colorspace cs = Colorspace::SRGB, double fill = 0.0);
  ImageBuffer(int height, int width, int channels, std::vector<double> data,
              Colorspace cs = Colorspace::SRGB);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  Colorspace colorspace() const { return colorspace_; }
  void set_colorspace(Colorspace cs) { colorspace_ = cs; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }

  double& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  double at(int y, int x, int c) const { return data_[index(y, x, c)]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  bool same_shape(const ImageBuffer& other) const {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels_) +
           static_cast<std::size_t>(c);
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  Colorspace colorspace_ = Colorspace::SRGB;
  std::vector<double> data_;
};

// One output sample of a 1-D linear resampling: out = (1-w)*in[lo] + w*in[hi].
struct LinearTap {
  int lo = 0;
  int hi = 0;
  double weight = 0.0;
};

/// Half-pixel-center taps with clamp-to-border, shared by every bilinear
/// operation in the library.
std::vector<LinearTap> linear_taps(int src_size, int dst_size);

ImageBuffer resize_bilinear(const ImageBuffer& img, int new_h, int new_w);

/// 2x box average; odd trailing rows/columns average with themselves.
ImageBuffer downsample_box2(const ImageBuffer& img);

/// Rotates counter-clockwise by k quarter turns. Dimensions swap for odd k.
ImageBuffer rotate90(const ImageBuffer& img, int quarter_turns);

/// Scales so that max(H, W) == long_side, preserving aspect ratio.
ImageBuffer resize_long_side(const ImageBuffer& img, int long_side);

std::array<double, 3> mean_color(const ImageBuffer& img);

ImageBuffer clamp01(ImageBuffer img);

ImageBuffer add(const ImageBuffer& a, const ImageBuffer& b);
ImageBuffer subtract(const ImageBuffer& a, const ImageBuffer& b);
ImageBuffer extract_channel(const ImageBuffer& img, int channel);

double max_abs_difference(const ImageBuffer& a, const ImageBuffer& b);

/// Band-pass decomposition, finest level first; the last level is the
/// low-pass residual.
struct LaplacianPyramid {
  std::vector<ImageBuffer> levels;
};

/// Largest level count build_laplacian_pyramid accepts for this image.
int max_pyramid_levels(int height, int width);

LaplacianPyramid build_laplacian_pyramid(const ImageBuffer& img, int n_levels);
ImageBuffer collapse_laplacian_pyramid(const LaplacianPyramid& pyr);

// sRGB <-> CIE-Lab (D65). Accepts SRGB or LinearRGB input.
ImageBuffer rgb_to_lab(const ImageBuffer& img);
ImageBuffer lab_to_rgb(const ImageBuffer& img);

ImageBuffer srgb_to_linear(const ImageBuffer& img);
ImageBuffer linear_to_srgb(const ImageBuffer& img);

/// Orthonormal decorrelated basis: rows are the luminance axis (R+G+B)/sqrt3
/// and the opponent axes (R-G)/sqrt2, (R+G-2B)/sqrt6.
const std::array<std::array<double, 3>, 3>& opponent_matrix();

ImageBuffer to_opponent_space(const ImageBuffer& img);

}  // namespace stylecore
