#pragma once

#include "stylecore/image.hpp"

namespace stylecore {

/// Joint bilateral filter of a 2-channel AB image guided by a 1-channel L
/// image over a (2*ceil(3*sigma_s)+1)^2 window. Taps outside the raster are
/// dropped and the remaining weights renormalized.
ImageBuffer guided_bilateral_filter(const ImageBuffer& ab, const ImageBuffer& guide_l, double sigma_s,
                                    double sigma_r);

/// x <- A (x - mu_img) + mu_style with A = Sigma_style^{1/2} Sigma_img^{-1/2}
/// (symmetric roots, 1e-6 ridge). Both inputs are Lab. With `clamp`, the
/// result is limited to L in [0,100] and a, b in [-128,128].
ImageBuffer match_color_moments(const ImageBuffer& img, const ImageBuffer& style, bool clamp = true);

inline constexpr double kMonochromeThreshold = 4e-5;

/// Max |entry| of the covariance of AB/256 is below the threshold.
bool is_monochrome(const ImageBuffer& style_lab, double threshold = kMonochromeThreshold);

struct ColorPostConfig {
  bool enabled = true;
  double sigma_s = 5.0;
  double sigma_r = 10.0;
};

/// The Lab result of colour post-processing: L taken verbatim from the
/// stylized image, AB from the content after guided filtering and moment
/// matching against the style. Returns rgb_to_lab(stylized) when disabled or
/// when the style is monochrome.
ImageBuffer post_process_lab(const ImageBuffer& stylized, const ImageBuffer& content, const ImageBuffer& style,
                             const ColorPostConfig& cfg = {});

/// sRGB wrapper around post_process_lab; returns `stylized` untouched when
/// the step does not apply.
ImageBuffer post_process(const ImageBuffer& stylized, const ImageBuffer& content, const ImageBuffer& style,
                         const ColorPostConfig& cfg = {});

}  // namespace stylecore
