#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "stylecore/autodiff.hpp"
#include "stylecore/features.hpp"
#include "stylecore/image.hpp"
#include "stylecore/nnst.hpp"
#include "stylecore/rng.hpp"

namespace testing_support {

using stylecore::ImageBuffer;
using stylecore::Rng;
namespace ad = stylecore::ad;

std::filesystem::path data_path(const std::string& name);
ImageBuffer load_data_image(const std::string& name);  // astronaut, coffee, chelsea

ImageBuffer random_image(int h, int w, int c, Rng& rng, double lo = 0.0, double hi = 1.0);
ad::Tensor random_tensor(const ad::Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0);

/// Small smooth test image (sum of sinusoids), values inside (0, 1).
ImageBuffer smooth_image(int h, int w, double phase);

/// sum(y * W) for a fixed random W of y's shape.
ad::Var weighted_sum(ad::Var y, std::uint64_t seed);

// ---- independent oracles ---------------------------------------------------

/// max(mean_i min_j C_ij, mean_j min_i C_ij) by direct loops.
double oracle_remd(const ad::Tensor& c);

/// 1 - cos(a_i, b_j) by direct loops, with optional per-set centering.
ad::Tensor oracle_cosine(const ad::Tensor& a, const ad::Tensor& b, bool center);

/// Exhaustive nearest neighbour of every content cell over the pool; returns
/// (rotation, flat index) per cell and block. Ties keep the first candidate.
struct NnChoice {
  int rotation = 0;
  int index = 0;
};
std::vector<std::vector<NnChoice>> oracle_nn(const stylecore::FeatureTensor& content,
                                             const std::vector<stylecore::FeatureTensor>& pool, bool centered,
                                             const std::vector<stylecore::LayerBlock>& blocks);

// ---- gradient catalogue ----------------------------------------------------

struct GradCase {
  std::string name;
  ad::ScalarFn f;
  ad::Tensor x;
  double eps = 1e-5;
  std::vector<std::size_t> coords;  // empty = every coordinate
};

/// One case per differentiable op (and per differentiable argument).
std::vector<GradCase> op_gradient_cases();

/// The four composite objectives on <= 32x32 inputs.
std::vector<GradCase> objective_gradient_cases();

}  // namespace testing_support
