#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "stylecore/features.hpp"

namespace stylecore::service {

struct EmdCheckOptions {
  int n = 1024;
  int trials = 100;
  std::uint64_t seed = 1;
  /// Two images to draw features from; procedural textures when empty.
  std::vector<std::filesystem::path> images;
  /// Two FEAT1 files used instead of images when set.
  std::vector<std::filesystem::path> features;
  FilterBankSpec bank;
};

struct EmdTrial {
  int trial = 0;
  double remd = 0.0;
  double emd = 0.0;
  double ratio = 0.0;
  long pivots = 0;
};

struct EmdCheckReport {
  int n = 0;
  std::vector<EmdTrial> trials;
  double mean_ratio = 0.0;
  double std_ratio = 0.0;  // population standard deviation
  double max_ratio = 0.0;

  void write_csv(std::ostream& out) const;
};

/// Pair of deterministic RGB test textures with at least `min_side` px on the short side.
std::vector<ImageBuffer> procedural_images(int min_side);

/// REMD against the exact EMD on cosine costs between n sampled hypercolumns of each source.
EmdCheckReport run_emd_check(const EmdCheckOptions& opts);

}  // namespace stylecore::service
