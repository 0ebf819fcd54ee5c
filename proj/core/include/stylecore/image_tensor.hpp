#pragma once

#include "stylecore/autodiff.hpp"
#include "stylecore/image.hpp"

namespace stylecore {

/// HWC image -> [C, H, W] tensor.
ad::Tensor image_to_tensor(const ImageBuffer& img);
ad::Tensor image_to_tensor(const LaplacianPyramid& pyr, std::size_t level);
/// [C, H, W] tensor -> HWC image.
ImageBuffer tensor_to_image(const ad::Tensor& t, Colorspace cs = Colorspace::SRGB);

/// Differentiable pyramid collapse over [C, h, w] level variables, finest first.
ad::Var collapse_pyramid(const std::vector<ad::Var>& levels);

}  // namespace stylecore
