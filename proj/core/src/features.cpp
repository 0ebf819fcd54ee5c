#include "stylecore/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include "stylecore/error.hpp"
#include "stylecore/image_tensor.hpp"

namespace stylecore {

int FilterBankSpec::layer_count() const {
  int n = 0;
  for (const auto& b : blocks) n += b.layers;
  return n;
}

ad::Tensor FeatureTensor::as_matrix() const {
  return ad::Tensor({static_cast<int>(cells()), dim}, data);
}

namespace {

// Deterministic texture used once to measure per-layer activation scale.
ImageBuffer calibration_image(std::uint64_t seed) {
  constexpr int kSize = 64;
  ImageBuffer img(kSize, kSize, 3, Colorspace::SRGB);
  Rng rng(seed ^ 0xca11b4a7e5ULL);
  for (int y = 0; y < kSize; ++y) {
    for (int x = 0; x < kSize; ++x) {
      img.at(y, x, 0) = 0.5 + 0.5 * std::sin(0.31 * x + 0.11 * y);
      img.at(y, x, 1) = 0.25 + 0.5 * rng.uniform();
      img.at(y, x, 2) = ((x / 8 + y / 8) % 2 == 0 ? 0.8 : 0.2) * (y + 1.0) / kSize;
    }
  }
  return img;
}

}  // namespace

FeatureBank::FeatureBank(FilterBankSpec spec) : spec_(std::move(spec)) {
  require(!spec_.blocks.empty(), ErrorKind::InvalidArgument, "filter bank needs at least one block");
  Rng rng(spec_.seed);
  int in_channels = 3;
  for (std::size_t b = 0; b < spec_.blocks.size(); ++b) {
    const BlockSpec& block = spec_.blocks[b];
    require(block.layers >= 1 && block.width >= 1, ErrorKind::InvalidArgument,
            "each block needs at least one layer of positive width");
    for (int l = 0; l < block.layers; ++l) {
      const int fan_in = in_channels * 9;
      // He-uniform bound for leaky-relu gain.
      const double gain = std::sqrt(2.0 / (1.0 + spec_.leaky_slope * spec_.leaky_slope));
      const double bound = gain * std::sqrt(3.0 / fan_in);
      ad::Tensor w({block.width, in_channels, 3, 3});
      for (auto& v : w.storage()) v = rng.uniform(-bound, bound);
      weights_.push_back(std::move(w));
      pool_before_.push_back(b > 0 && l == 0 ? 1 : 0);
      in_channels = block.width;
    }
  }

  const int total = layer_count();
  if (spec_.included_layers.empty()) {
    included_.resize(static_cast<std::size_t>(total));
    std::iota(included_.begin(), included_.end(), 0);
  } else {
    included_ = spec_.included_layers;
    std::sort(included_.begin(), included_.end());
    included_.erase(std::unique(included_.begin(), included_.end()), included_.end());
    for (int id : included_) {
      require(id >= 0 && id < total, ErrorKind::InvalidArgument, "included layer id out of range");
    }
  }
  for (int id : included_) {
    blocks_.push_back({id, dim_, layer_width(id)});
    dim_ += layer_width(id);
  }

  scales_.assign(static_cast<std::size_t>(total), 1.0);
  ad::Tape tape;
  const auto acts = raw_activations(tape, tape.constant(image_to_tensor(calibration_image(spec_.seed))));
  for (int l = 0; l < total; ++l) {
    const auto& v = acts[static_cast<std::size_t>(l)].value().storage();
    double ss = 0.0;
    for (double x : v) ss += x * x;
    const double rms = std::sqrt(ss / static_cast<double>(v.size()));
    scales_[static_cast<std::size_t>(l)] = rms > 0.0 ? 1.0 / rms : 1.0;
  }
}

std::vector<ad::Var> FeatureBank::raw_activations(ad::Tape& tape, ad::Var image) const {
  require(image.value().rank() == 3 && image.dim(0) == 3, ErrorKind::ShapeMismatch,
          "feature extraction expects a [3,H,W] image");
  std::vector<ad::Var> out;
  ad::Var x = image;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    if (pool_before_[l]) x = ad::avg_pool2(x);
    x = ad::conv2d(x, tape.constant(weights_[l]), 1, 1);
    x = ad::leaky_relu(x, spec_.leaky_slope);
    out.push_back(x);
  }
  return out;
}

std::vector<ad::Var> FeatureBank::activations(ad::Tape& tape, ad::Var image) const {
  auto acts = raw_activations(tape, image);
  for (std::size_t l = 0; l < acts.size(); ++l) acts[l] = ad::scale(acts[l], scales_[l]);
  return acts;
}

Hypercolumns FeatureBank::extract(ad::Tape& tape, ad::Var image) const {
  const int h = image.dim(1);
  const int w = image.dim(2);
  if (std::min(h, w) < kMinSide) {
    raise(ErrorKind::InvalidArgument, "image too small for feature extraction (min side " +
                                          std::to_string(kMinSide) + ", got " +
                                          std::to_string(std::min(h, w)) + ")");
  }
  const int gh = grid_size(h);
  const int gw = grid_size(w);
  const auto acts = activations(tape, image);
  std::vector<ad::Var> parts;
  for (int id : included_) {
    ad::Var a = ad::bilinear_resize(acts[static_cast<std::size_t>(id)], gh, gw);
    parts.push_back(ad::reshape(a, {a.dim(0), gh * gw}));
  }
  ad::Var stacked = parts.size() == 1 ? parts.front() : ad::concat(parts, 0);
  return {ad::transpose(stacked), gh, gw};
}

FeatureTensor FeatureBank::extract(const ImageBuffer& img) const {
  require(img.channels() == 3, ErrorKind::InvalidArgument, "feature extraction needs RGB input");
  ad::Tape tape;
  const Hypercolumns hc = extract(tape, tape.constant(image_to_tensor(img)));
  FeatureTensor t;
  t.grid_h = hc.grid_h;
  t.grid_w = hc.grid_w;
  t.dim = dim_;
  t.data = hc.features.value().storage();
  return t;
}

FeatureTensor extract_hypercolumns(const ImageBuffer& img, const FeatureBank& bank) {
  return bank.extract(img);
}

std::vector<FeatureTensor> extract_with_rotations(const ImageBuffer& img, const FeatureBank& bank) {
  std::vector<FeatureTensor> out;
  out.reserve(4);
  for (int k = 0; k < 4; ++k) out.push_back(bank.extract(rotate90(img, k)));
  return out;
}

std::vector<GridCoord> sample_coords(int grid_h, int grid_w, int n, SampleMode mode, Rng& rng) {
  require(grid_h >= 1 && grid_w >= 1, ErrorKind::InvalidArgument, "empty feature grid");
  const int cells = grid_h * grid_w;
  require(n >= 1, ErrorKind::InvalidArgument, "sample count must be positive");
  if (n > cells) {
    raise(ErrorKind::InvalidArgument, "cannot sample " + std::to_string(n) + " coordinates from " +
                                          std::to_string(cells) + " grid cells");
  }
  std::vector<GridCoord> coords;
  coords.reserve(static_cast<std::size_t>(n));
  if (mode == SampleMode::RandomUniform) {
    std::vector<int> pool(static_cast<std::size_t>(cells));
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < n; ++i) {
      const int j = i + rng.below(cells - i);
      std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
      const int c = pool[static_cast<std::size_t>(i)];
      coords.push_back({c / grid_w, c % grid_w});
    }
    return coords;
  }
  int rows = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n) * grid_h / grid_w)));
  rows = std::clamp(rows, 1, grid_h);
  int cols = std::clamp((n + rows - 1) / rows, 1, grid_w);
  while (rows * cols < n) {
    if (rows < grid_h) ++rows;
    cols = std::clamp((n + rows - 1) / rows, 1, grid_w);
  }
  const int stride_y = grid_h / rows;
  const int stride_x = grid_w / cols;
  const int off_y = rng.below(stride_y);
  const int off_x = rng.below(stride_x);
  for (int r = 0; r < rows && static_cast<int>(coords.size()) < n; ++r) {
    for (int c = 0; c < cols && static_cast<int>(coords.size()) < n; ++c) {
      coords.push_back({off_y + r * stride_y, off_x + c * stride_x});
    }
  }
  return coords;
}

std::vector<int> flat_indices(const std::vector<GridCoord>& coords, int grid_w) {
  std::vector<int> idx;
  idx.reserve(coords.size());
  for (const auto& c : coords) idx.push_back(c.row * grid_w + c.col);
  return idx;
}

FeatureSample sample_features(const FeatureTensor& t, int n, SampleMode mode, Rng& rng) {
  FeatureSample s;
  s.coords = sample_coords(t.grid_h, t.grid_w, n, mode, rng);
  s.vectors = ad::Tensor({n, t.dim});
  for (int i = 0; i < n; ++i) {
    const auto& c = s.coords[static_cast<std::size_t>(i)];
    const double* src = t.cell(static_cast<std::size_t>(c.row * t.grid_w + c.col));
    std::copy_n(src, t.dim, s.vectors.storage().begin() + static_cast<long>(i) * t.dim);
  }
  return s;
}

namespace {

constexpr char kMagic[5] = {'F', 'E', 'A', 'T', '1'};
constexpr std::size_t kHeader = 5 + 3 * 4;

std::uint32_t read_u32_le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace

FeatureTensor decode_features(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kHeader) raise(ErrorKind::Format, "feature file truncated in header");
  if (!std::equal(kMagic, kMagic + 5, bytes.begin())) {
    raise(ErrorKind::Format, "feature file has bad magic (expected FEAT1)");
  }
  const std::uint32_t gh = read_u32_le(bytes.data() + 5);
  const std::uint32_t gw = read_u32_le(bytes.data() + 9);
  const std::uint32_t d = read_u32_le(bytes.data() + 13);
  if (gh == 0 || gw == 0 || d == 0) raise(ErrorKind::Format, "feature file declares a zero dimension");
  const std::uint64_t count = static_cast<std::uint64_t>(gh) * gw * d;
  const std::uint64_t expected = kHeader + count * 4;
  if (bytes.size() < expected) {
    raise(ErrorKind::Format, "feature file truncated: expected " + std::to_string(expected) +
                                 " bytes, got " + std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) raise(ErrorKind::Format, "feature file has trailing bytes");
  FeatureTensor t;
  t.grid_h = static_cast<int>(gh);
  t.grid_w = static_cast<int>(gw);
  t.dim = static_cast<int>(d);
  t.data.resize(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    const std::uint32_t bits = read_u32_le(bytes.data() + kHeader + 4 * i);
    t.data[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return t;
}

FeatureTensor load_external_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::Io, "cannot open feature file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_features(bytes);
}

std::vector<std::uint8_t> encode_features(const FeatureTensor& t) {
  require(t.grid_h > 0 && t.grid_w > 0 && t.dim > 0, ErrorKind::InvalidArgument,
          "cannot encode an empty feature tensor");
  require(t.data.size() == t.cells() * static_cast<std::size_t>(t.dim), ErrorKind::ShapeMismatch,
          "feature data length does not match its dimensions");
  std::vector<std::uint8_t> out(kMagic, kMagic + 5);
  write_u32_le(out, static_cast<std::uint32_t>(t.grid_h));
  write_u32_le(out, static_cast<std::uint32_t>(t.grid_w));
  write_u32_le(out, static_cast<std::uint32_t>(t.dim));
  out.reserve(kHeader + t.data.size() * 4);
  for (double v : t.data) write_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

void save_features(const FeatureTensor& t, const std::filesystem::path& path) {
  const auto bytes = encode_features(t);
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace stylecore
