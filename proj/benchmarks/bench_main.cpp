#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "stylecore/dst.hpp"
#include "stylecore/features.hpp"
#include "stylecore/image.hpp"
#include "stylecore/nnst.hpp"
#include "stylecore/rng.hpp"
#include "stylecore/transport.hpp"

using namespace stylecore;

namespace {

ad::Tensor random_matrix(int n, int m, Rng& rng) {
  ad::Tensor t({n, m});
  for (auto& v : t.storage()) v = rng.uniform(-1, 1);
  return t;
}

ImageBuffer texture(int side) {
  ImageBuffer img(side, side, 3);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = 0.5 + 0.4 * std::sin(0.21 * x * (c + 1) + 0.13 * y);
    }
  }
  return img;
}

DistanceMatrix cosine_costs(ad::Tape& t, int n, int d) {
  Rng rng(static_cast<std::uint64_t>(n));
  return cosine_distance_matrix(t.constant(random_matrix(n, d, rng)), t.constant(random_matrix(n, d, rng)));
}

}  // namespace

static void BM_ExactEmd(benchmark::State& state) {
  ad::Tape t;
  const ad::Tensor c = cosine_costs(t, static_cast<int>(state.range(0)), 64).cost.value();
  for (auto _ : state) benchmark::DoNotOptimize(exact_emd(c).cost);
}
BENCHMARK(BM_ExactEmd)->Arg(32)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_RemdForwardBackward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(1);
  const ad::Tensor a = random_matrix(n, 480, rng);
  const ad::Tensor b = random_matrix(n, 480, rng);
  for (auto _ : state) {
    ad::Tape t;
    ad::Var x = t.leaf(a);
    ad::Var r = remd(cosine_distance_matrix(x, t.constant(b)));
    t.backward(r);
    ad::Tensor g = t.grad(x);
    benchmark::DoNotOptimize(g.storage());
  }
}
BENCHMARK(BM_RemdForwardBackward)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

static void BM_FeatureExtraction(benchmark::State& state) {
  const FeatureBank bank;
  const ImageBuffer img = texture(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    FeatureTensor f = bank.extract(img);
    benchmark::DoNotOptimize(f.data);
  }
}
BENCHMARK(BM_FeatureExtraction)->Arg(64)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_NnMatch(benchmark::State& state) {
  const FeatureBank bank;
  const int side = static_cast<int>(state.range(0));
  const FeatureTensor c = bank.extract(texture(side));
  const auto pool = extract_with_rotations(resize_bilinear(texture(side), side, side), bank);
  MatchOptions mo;
  mo.norm_eps = 1e-3;
  for (auto _ : state) {
    TargetFeatures t = match_features(c, pool, mo);
    benchmark::DoNotOptimize(t.data);
  }
}
BENCHMARK(BM_NnMatch)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

static void BM_TpsFlow(benchmark::State& state) {
  Rng rng(2);
  std::vector<Point2> p, q;
  for (int i = 0; i < state.range(0); ++i) {
    p.push_back({rng.uniform(0, 128), rng.uniform(0, 128)});
    q.push_back({p.back().x + rng.uniform(-5, 5), p.back().y + rng.uniform(-5, 5)});
  }
  for (auto _ : state) {
    ad::Tensor f = render_flow_field(solve_tps(p, q), 128, 128);
    benchmark::DoNotOptimize(f.storage());
  }
}
BENCHMARK(BM_TpsFlow)->Arg(16)->Arg(80)->Unit(benchmark::kMillisecond);

static void BM_LaplacianRoundTrip(benchmark::State& state) {
  const ImageBuffer img = texture(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    ImageBuffer out = collapse_laplacian_pyramid(build_laplacian_pyramid(img, 5));
    benchmark::DoNotOptimize(out.storage());
  }
}
BENCHMARK(BM_LaplacianRoundTrip)->Arg(256)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
