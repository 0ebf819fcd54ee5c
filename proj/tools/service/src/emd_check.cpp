#include "stylecore/service/emd_check.hpp"

#include <cmath>
#include <ostream>

#include "stylecore/error.hpp"
#include "stylecore/imageio.hpp"
#include "stylecore/transport.hpp"

namespace stylecore::service {

namespace {

// Short side large enough that the feature grid holds n cells.
ImageBuffer fit_for_cells(const ImageBuffer& img, int n) {
  const int side =
      std::max(FeatureBank::kMinSide, 4 * static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n)))));
  const int short_side = std::min(img.height(), img.width());
  const double s = static_cast<double>(side) / short_side;
  const int h = std::max(side, static_cast<int>(std::lround(img.height() * s)));
  const int w = std::max(side, static_cast<int>(std::lround(img.width() * s)));
  return resize_bilinear(img, h, w);
}

}  // namespace

std::vector<ImageBuffer> procedural_images(int min_side) {
  std::vector<ImageBuffer> out;
  const int h = min_side;
  const int w = min_side + min_side / 2;
  ImageBuffer a(h, w, 3);
  ImageBuffer b(h, w, 3);
  Rng rng(7);
  std::vector<double> noise(static_cast<std::size_t>(h) * w);
  for (auto& v : noise) v = rng.uniform();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double u = static_cast<double>(x) / w;
      const double v = static_cast<double>(y) / h;
      const double r = std::hypot(u - 0.4, v - 0.5);
      a.at(y, x, 0) = 0.5 + 0.4 * std::sin(12.0 * r);
      a.at(y, x, 1) = 0.3 + 0.6 * v;
      a.at(y, x, 2) = r < 0.25 ? 0.9 : 0.2 + 0.3 * u;
      const double n = noise[static_cast<std::size_t>(y) * w + x];
      b.at(y, x, 0) = 0.5 + 0.3 * std::sin(0.7 * x + 3.0 * n);
      b.at(y, x, 1) = 0.5 + 0.3 * std::cos(0.45 * y - 0.3 * x);
      b.at(y, x, 2) = 0.6 * n + 0.2;
    }
  }
  out.push_back(std::move(a));
  out.push_back(std::move(b));
  return out;
}

EmdCheckReport run_emd_check(const EmdCheckOptions& opts) {
  require(opts.n >= 1, ErrorKind::InvalidArgument, "n must be positive");
  require(opts.trials >= 1, ErrorKind::InvalidArgument, "trials must be positive");
  require(static_cast<std::size_t>(opts.n) * static_cast<std::size_t>(opts.n) <= kMaxEmdEntries,
          ErrorKind::SizeLimit, "n * n exceeds the exact solver limit");
  std::vector<FeatureTensor> pools;
  if (!opts.features.empty()) {
    require(opts.features.size() == 2, ErrorKind::InvalidArgument, "expected two feature files");
    for (const auto& p : opts.features) pools.push_back(load_external_features(p));
  } else {
    std::vector<ImageBuffer> imgs;
    if (opts.images.empty()) {
      imgs = procedural_images(64);
    } else {
      require(opts.images.size() == 2, ErrorKind::InvalidArgument, "expected two images");
      for (const auto& p : opts.images) imgs.push_back(read_image(p));
    }
    const FeatureBank bank(opts.bank);
    for (const auto& img : imgs) {
      require(img.channels() == 3, ErrorKind::InvalidArgument, "emd-check images must be RGB");
      pools.push_back(bank.extract(fit_for_cells(img, opts.n)));
    }
  }
  for (const auto& p : pools) {
    if (p.cells() < static_cast<std::size_t>(opts.n)) {
      raise(ErrorKind::InvalidArgument, "feature grid has " + std::to_string(p.cells()) + " cells, fewer than n");
    }
  }
  Rng rng(opts.seed);
  EmdCheckReport rep;
  rep.n = opts.n;
  for (int t = 0; t < opts.trials; ++t) {
    const FeatureSample a = sample_features(pools[0], opts.n, SampleMode::RandomUniform, rng);
    const FeatureSample b = sample_features(pools[1], opts.n, SampleMode::RandomUniform, rng);
    ad::Tape tape;
    const DistanceMatrix c =
        cosine_distance_matrix(tape.constant(a.vectors), tape.constant(b.vectors), false, 1e-3);
    EmdTrial tr;
    tr.trial = t;
    tr.remd = remd(c).value().item();
    const EmdResult e = exact_emd(c);
    tr.emd = e.cost;
    tr.pivots = e.pivots;
    tr.ratio = e.cost > 0.0 ? tr.remd / e.cost : 1.0;
    rep.trials.push_back(tr);
  }
  double sum = 0.0;
  for (const auto& t : rep.trials) {
    sum += t.ratio;
    rep.max_ratio = std::max(rep.max_ratio, t.ratio);
  }
  rep.mean_ratio = sum / rep.trials.size();
  double var = 0.0;
  for (const auto& t : rep.trials) var += (t.ratio - rep.mean_ratio) * (t.ratio - rep.mean_ratio);
  rep.std_ratio = std::sqrt(var / rep.trials.size());
  return rep;
}

void EmdCheckReport::write_csv(std::ostream& out) const {
  out.precision(12);
  out << "trial,n,remd,emd,ratio,pivots\n";
  for (const auto& t : trials) {
    out << t.trial << ',' << n << ',' << t.remd << ',' << t.emd << ',' << t.ratio << ',' << t.pivots << '\n';
  }
  out << "# mean_ratio=" << mean_ratio << " std_ratio=" << std_ratio << " max_ratio=" << max_ratio << '\n';
}

}  // namespace stylecore::service
