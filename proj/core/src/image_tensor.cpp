#include "stylecore/image_tensor.hpp"

#include "stylecore/error.hpp"

namespace stylecore {

ad::Tensor image_to_tensor(const ImageBuffer& img) {
  const int c = img.channels();
  const int h = img.height();
  const int w = img.width();
  ad::Tensor t({c, h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int k = 0; k < c; ++k) {
        t[(static_cast<std::size_t>(k) * h + y) * w + x] = img.at(y, x, k);
      }
    }
  }
  return t;
}

ad::Tensor image_to_tensor(const LaplacianPyramid& pyr, std::size_t level) {
  require(level < pyr.levels.size(), ErrorKind::InvalidArgument, "pyramid level out of range");
  return image_to_tensor(pyr.levels[level]);
}

ImageBuffer tensor_to_image(const ad::Tensor& t, Colorspace cs) {
  require(t.rank() == 3, ErrorKind::ShapeMismatch, "image tensor must be [C,H,W]");
  const int c = t.dim(0);
  const int h = t.dim(1);
  const int w = t.dim(2);
  ImageBuffer img(h, w, c, cs);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int k = 0; k < c; ++k) {
        img.at(y, x, k) = t[(static_cast<std::size_t>(k) * h + y) * w + x];
      }
    }
  }
  return img;
}

ad::Var collapse_pyramid(const std::vector<ad::Var>& levels) {
  require(!levels.empty(), ErrorKind::InvalidArgument, "empty pyramid");
  ad::Var current = levels.back();
  for (std::size_t i = levels.size() - 1; i-- > 0;) {
    const ad::Var& band = levels[i];
    current = ad::add(ad::bilinear_resize(current, band.dim(1), band.dim(2)), band);
  }
  return current;
}

}  // namespace stylecore
