#include "support.hpp"

#include <cmath>
#include <limits>
#include <memory>

#include "stylecore/dst.hpp"
#include "stylecore/gram.hpp"
#include "stylecore/image_tensor.hpp"
#include "stylecore/imageio.hpp"
#include "stylecore/self_similarity.hpp"
#include "stylecore/strotss.hpp"
#include "stylecore/transport.hpp"

#ifndef STYLECORE_TEST_DATA_DIR
#error "STYLECORE_TEST_DATA_DIR must be defined"
#endif

namespace testing_support {

using namespace stylecore;

std::filesystem::path data_path(const std::string& name) { return std::filesystem::path(STYLECORE_TEST_DATA_DIR) / name; }

ImageBuffer load_data_image(const std::string& name) { return read_image(data_path(name + ".png")); }

ImageBuffer random_image(int h, int w, int c, Rng& rng, double lo, double hi) {
  ImageBuffer img(h, w, c);
  for (auto& v : img.storage()) v = rng.uniform(lo, hi);
  return img;
}

ad::Tensor random_tensor(const ad::Shape& shape, Rng& rng, double lo, double hi) {
  ad::Tensor t(shape);
  for (auto& v : t.storage()) v = rng.uniform(lo, hi);
  return t;
}

ImageBuffer smooth_image(int h, int w, double phase) {
  ImageBuffer img(h, w, 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double u = static_cast<double>(x) / w;
      const double v = static_cast<double>(y) / h;
      img.at(y, x, 0) = 0.5 + 0.35 * std::sin(6.0 * u + phase) * std::cos(4.0 * v);
      img.at(y, x, 1) = 0.5 + 0.3 * std::cos(5.0 * (u + v) - phase);
      img.at(y, x, 2) = 0.45 + 0.3 * std::sin(7.0 * v + 2.0 * phase) + 0.1 * u;
    }
  }
  return img;
}

ad::Var weighted_sum(ad::Var y, std::uint64_t seed) {
  Rng rng(seed);
  ad::Var w = y.tape()->constant(random_tensor(y.shape(), rng, -1.0, 1.0));
  return ad::sum(ad::mul(y, w));
}

// ---- oracles ---------------------------------------------------------------

double oracle_remd(const ad::Tensor& c) {
  const int n = c.dim(0);
  const int m = c.dim(1);
  double ra = 0.0;
  for (int i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j) best = std::min(best, c[static_cast<std::size_t>(i) * m + j]);
    ra += best;
  }
  double rb = 0.0;
  for (int j = 0; j < m; ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) best = std::min(best, c[static_cast<std::size_t>(i) * m + j]);
    rb += best;
  }
  return std::max(ra / n, rb / m);
}

namespace {

std::vector<std::vector<double>> rows_of(const ad::Tensor& t) {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(t.dim(0)), std::vector<double>(t.dim(1)));
  for (int i = 0; i < t.dim(0); ++i) {
    for (int k = 0; k < t.dim(1); ++k) out[i][k] = t[static_cast<std::size_t>(i) * t.dim(1) + k];
  }
  return out;
}

void center_rows(std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return;
  std::vector<double> mu(rows[0].size(), 0.0);
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < r.size(); ++k) mu[k] += r[k];
  }
  for (auto& v : mu) v /= static_cast<double>(rows.size());
  for (auto& r : rows) {
    for (std::size_t k = 0; k < r.size(); ++k) r[k] -= mu[k];
  }
}

double cosine(const std::vector<double>& a, const std::vector<double>& b, int offset, int width) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (int k = offset; k < offset + width; ++k) {
    ab += a[k] * b[k];
    aa += a[k] * a[k];
    bb += b[k] * b[k];
  }
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

}  // namespace

ad::Tensor oracle_cosine(const ad::Tensor& a, const ad::Tensor& b, bool center) {
  auto ra = rows_of(a);
  auto rb = rows_of(b);
  if (center) {
    center_rows(ra);
    center_rows(rb);
  }
  ad::Tensor out({a.dim(0), b.dim(0)});
  for (std::size_t i = 0; i < ra.size(); ++i) {
    for (std::size_t j = 0; j < rb.size(); ++j) {
      out[i * rb.size() + j] = 1.0 - cosine(ra[i], rb[j], 0, a.dim(1));
    }
  }
  return out;
}

std::vector<std::vector<NnChoice>> oracle_nn(const FeatureTensor& content, const std::vector<FeatureTensor>& pool,
                                             bool centered, const std::vector<LayerBlock>& blocks) {
  const int d = content.dim;
  std::vector<std::vector<double>> x(content.cells(), std::vector<double>(d));
  for (std::size_t i = 0; i < content.cells(); ++i) x[i].assign(content.cell(i), content.cell(i) + d);
  std::vector<std::vector<double>> y;
  std::vector<NnChoice> origin;
  for (std::size_t r = 0; r < pool.size(); ++r) {
    for (std::size_t i = 0; i < pool[r].cells(); ++i) {
      y.emplace_back(pool[r].cell(i), pool[r].cell(i) + d);
      origin.push_back({static_cast<int>(r), static_cast<int>(i)});
    }
  }
  if (centered) {
    center_rows(x);
    center_rows(y);
  }
  std::vector<LayerBlock> bl = blocks;
  if (bl.empty()) bl.push_back({0, 0, d});
  std::vector<std::vector<NnChoice>> out(x.size(), std::vector<NnChoice>(bl.size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t b = 0; b < bl.size(); ++b) {
      double best = -std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (std::size_t j = 0; j < y.size(); ++j) {
        const double s = cosine(x[i], y[j], bl[b].offset, bl[b].width);
        if (s > best) {
          best = s;
          arg = j;
        }
      }
      out[i][b] = origin[arg];
    }
  }
  return out;
}

// ---- gradient catalogue ----------------------------------------------------

namespace {

ad::Tensor rnd(const ad::Shape& s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  return random_tensor(s, rng, lo, hi);
}

// Values whose magnitude stays in [lo, hi] with random sign, so kinks at 0
// sit far from the evaluation point.
ad::Tensor away_from_zero(const ad::Shape& s, std::uint64_t seed, double lo, double hi) {
  Rng rng(seed);
  ad::Tensor t(s);
  for (auto& v : t.storage()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(lo, hi);
  return t;
}

// Distinct, well separated values (for argmin / max selections).
ad::Tensor separated(const ad::Shape& s, std::uint64_t seed) {
  Rng rng(seed);
  ad::Tensor t(s);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = 0.1 * static_cast<double>(i);
  for (std::size_t i = t.numel(); i > 1; --i) std::swap(t[i - 1], t[static_cast<std::size_t>(rng.below(static_cast<int>(i)))]);
  return t;
}

std::vector<std::size_t> pick_coords(std::size_t numel, std::size_t count, std::uint64_t seed) {
  if (count >= numel) return {};
  Rng rng(seed);
  std::vector<std::size_t> all(numel);
  for (std::size_t i = 0; i < numel; ++i) all[i] = i;
  for (std::size_t i = 0; i < count; ++i) std::swap(all[i], all[i + rng.below(static_cast<std::uint64_t>(numel - i))]);
  all.resize(count);
  return all;
}

ad::Var unit(ad::Tape&, ad::Var y, std::uint64_t seed) { return weighted_sum(y, seed); }

// Smallest |pre-activation| over every bank layer for this image.
double kink_margin(const FeatureBank& bank, const ad::Tensor& img) {
  ad::Tape t;
  double m = std::numeric_limits<double>::infinity();
  for (const auto& a : bank.activations(t, t.constant(img))) {
    for (double v : a.value().storage()) m = std::min(m, std::abs(v));
  }
  return m;
}

// An output image whose activations all sit at least `margin` away from the
// leaky-relu kink, so central differences at `eps` << margin never straddle it.
ad::Tensor kink_free_image(const FeatureBank& bank, double margin) {
  for (int k = 0;; ++k) {
    ad::Tensor t = image_to_tensor(smooth_image(32, 32, 1.2 + 0.1 * k));
    if (kink_margin(bank, t) >= margin) return t;
  }
}

}  // namespace

std::vector<GradCase> op_gradient_cases() {
  std::vector<GradCase> cs;
  auto add_case = [&](std::string name, ad::Tensor x, ad::ScalarFn f, double eps = 1e-5) {
    cs.push_back({std::move(name), std::move(f), std::move(x), eps, {}});
  };
  const ad::Tensor b34 = rnd({3, 4}, 11);
  const ad::Tensor row14 = rnd({1, 4}, 12);

  add_case("add lhs broadcast", rnd({3, 4}, 1), [row14](ad::Tape& t, ad::Var x) {
    return unit(t, ad::add(x, t.constant(row14)), 100);
  });
  add_case("add rhs broadcast", rnd({1, 4}, 2), [b34](ad::Tape& t, ad::Var x) {
    return unit(t, ad::add(t.constant(b34), x), 101);
  });
  add_case("sub lhs", rnd({3, 4}, 3), [b34](ad::Tape& t, ad::Var x) { return unit(t, ad::sub(x, t.constant(b34)), 102); });
  add_case("sub rhs broadcast column", rnd({3, 1}, 4), [b34](ad::Tape& t, ad::Var x) {
    return unit(t, ad::sub(t.constant(b34), x), 103);
  });
  add_case("mul lhs", rnd({3, 4}, 5), [b34](ad::Tape& t, ad::Var x) { return unit(t, ad::mul(x, t.constant(b34)), 104); });
  add_case("mul rhs broadcast", rnd({1, 4}, 6), [b34](ad::Tape& t, ad::Var x) {
    return unit(t, ad::mul(t.constant(b34), x), 105);
  });
  add_case("mul self", rnd({2, 3}, 7), [](ad::Tape& t, ad::Var x) { return unit(t, ad::mul(x, x), 106); });
  add_case("div numerator", rnd({3, 4}, 8), [](ad::Tape& t, ad::Var x) {
    return unit(t, ad::div(x, t.constant(away_from_zero({3, 4}, 9, 0.5, 2.0))), 107);
  });
  add_case("div denominator broadcast", away_from_zero({1, 4}, 10, 0.5, 2.0), [b34](ad::Tape& t, ad::Var x) {
    return unit(t, ad::div(t.constant(b34), x), 108);
  });
  add_case("maximum lhs", separated({3, 4}, 13), [](ad::Tape& t, ad::Var x) {
    ad::Tensor other = separated({3, 4}, 14);
    for (auto& v : other.storage()) v += 0.05;
    return unit(t, ad::maximum(x, t.constant(other)), 109);
  });
  add_case("maximum rhs", separated({3, 4}, 15), [](ad::Tape& t, ad::Var x) {
    ad::Tensor other = separated({3, 4}, 16);
    for (auto& v : other.storage()) v += 0.05;
    return unit(t, ad::maximum(t.constant(other), x), 110);
  });
  add_case("add_scalar", rnd({5}, 17), [](ad::Tape& t, ad::Var x) { return unit(t, ad::add_scalar(x, 0.7), 111); });
  add_case("scale", rnd({5}, 18), [](ad::Tape& t, ad::Var x) { return unit(t, ad::scale(x, -2.5), 112); });
  add_case("neg", rnd({5}, 19), [](ad::Tape& t, ad::Var x) { return unit(t, ad::neg(x), 113); });
  add_case("square", rnd({2, 3}, 20), [](ad::Tape& t, ad::Var x) { return unit(t, ad::square(x), 114); });
  add_case("sqrt", rnd({2, 3}, 21, 0.2, 3.0), [](ad::Tape& t, ad::Var x) { return unit(t, ad::sqrt(x), 115); });
  add_case("abs", away_from_zero({2, 3}, 22, 0.1, 1.0), [](ad::Tape& t, ad::Var x) { return unit(t, ad::abs(x), 116); });
  add_case("leaky_relu", away_from_zero({2, 5}, 23, 0.1, 1.0), [](ad::Tape& t, ad::Var x) {
    return unit(t, ad::leaky_relu(x, 0.2), 117);
  });
  add_case("sum", rnd({3, 4}, 24), [](ad::Tape& t, ad::Var x) { return ad::scale(ad::sum(x), 1.3); });
  add_case("mean", rnd({3, 4}, 25), [](ad::Tape& t, ad::Var x) { return ad::mean(ad::square(x)); });
  add_case("sum axis 0", rnd({3, 4}, 26), [](ad::Tape& t, ad::Var x) { return unit(t, ad::sum(x, 0), 118); });
  add_case("sum axis 1", rnd({3, 4}, 27), [](ad::Tape& t, ad::Var x) { return unit(t, ad::sum(x, 1), 119); });
  add_case("mean axis 1 rank 3", rnd({2, 3, 4}, 28), [](ad::Tape& t, ad::Var x) { return unit(t, ad::mean(x, 1), 120); });
  add_case("min_reduce axis 0", separated({4, 5}, 29), [](ad::Tape& t, ad::Var x) {
    return unit(t, ad::min_reduce(x, 0).value, 121);
  });
  add_case("min_reduce axis 1 masked", separated({4, 5}, 30), [](ad::Tape& t, ad::Var x) {
    std::vector<unsigned char> mask(20, 1);
    mask[0] = mask[7] = mask[13] = 0;
    return unit(t, ad::min_reduce(x, 1, mask).value, 122);
  });
  add_case("max_reduce axis 1", separated({4, 5}, 31), [](ad::Tape& t, ad::Var x) {
    return unit(t, ad::max_reduce(x, 1).value, 123);
  });
  add_case("reshape", rnd({3, 4}, 32), [](ad::Tape& t, ad::Var x) { return unit(t, ad::reshape(x, {2, 6}), 124); });
  add_case("transpose", rnd({3, 4}, 33), [](ad::Tape& t, ad::Var x) { return unit(t, ad::transpose(x), 125); });
  add_case("concat axis 0", rnd({2, 3}, 34), [](ad::Tape& t, ad::Var x) {
    return unit(t, ad::concat({x, t.constant(rnd({1, 3}, 35)), ad::square(x)}, 0), 126);
  });
  add_case("concat axis 1", rnd({3, 2}, 36), [](ad::Tape& t, ad::Var x) {
    return unit(t, ad::concat({t.constant(rnd({3, 1}, 37)), x}, 1), 127);
  });
  add_case("gather_rows repeated", rnd({4, 3}, 38), [](ad::Tape& t, ad::Var x) {
    const std::vector<int> rows{2, 0, 2, 3, 2};
    return unit(t, ad::gather_rows(x, rows), 128);
  });
  add_case("slice_cols", rnd({3, 6}, 39), [](ad::Tape& t, ad::Var x) { return unit(t, ad::slice_cols(x, 1, 4), 129); });
  add_case("matmul lhs", rnd({3, 4}, 40), [](ad::Tape& t, ad::Var x) {
    return unit(t, ad::matmul(x, t.constant(rnd({4, 2}, 41))), 130);
  });
  add_case("matmul rhs", rnd({4, 2}, 42), [](ad::Tape& t, ad::Var x) {
    return unit(t, ad::matmul(t.constant(rnd({3, 4}, 43)), x), 131);
  });
  add_case("matmul_nt lhs", rnd({3, 4}, 44), [](ad::Tape& t, ad::Var x) {
    return unit(t, ad::matmul_nt(x, t.constant(rnd({5, 4}, 45))), 132);
  });
  add_case("matmul_nt rhs", rnd({5, 4}, 46), [](ad::Tape& t, ad::Var x) {
    return unit(t, ad::matmul_nt(t.constant(rnd({3, 4}, 47)), x), 133);
  });
  add_case("matmul_nt self", rnd({3, 4}, 48), [](ad::Tape& t, ad::Var x) { return unit(t, ad::matmul_nt(x, x), 134); });
  add_case("conv2d input stride 1 pad 1", rnd({2, 5, 6}, 49), [](ad::Tape& t, ad::Var x) {
    return unit(t, ad::conv2d(x, t.constant(rnd({3, 2, 3, 3}, 50)), 1, 1), 135);
  });
  add_case("conv2d kernel stride 2 pad 1", rnd({3, 2, 3, 3}, 51), [](ad::Tape& t, ad::Var k) {
    return unit(t, ad::conv2d(t.constant(rnd({2, 7, 5}, 52)), k, 2, 1), 136);
  });
  add_case("conv2d input 1x1 no pad", rnd({2, 3, 3}, 53), [](ad::Tape& t, ad::Var x) {
    return unit(t, ad::conv2d(x, t.constant(rnd({2, 2, 1, 1}, 54)), 1, 0), 137);
  });
  add_case("avg_pool2 odd", rnd({2, 5, 7}, 55), [](ad::Tape& t, ad::Var x) { return unit(t, ad::avg_pool2(x), 138); });
  add_case("bilinear_resize up", rnd({2, 3, 4}, 56), [](ad::Tape& t, ad::Var x) {
    return unit(t, ad::bilinear_resize(x, 7, 9), 139);
  });
  add_case("bilinear_resize down", rnd({1, 9, 8}, 57), [](ad::Tape& t, ad::Var x) {
    return unit(t, ad::bilinear_resize(x, 4, 3), 140);
  });
  add_case("warp_bilinear image", rnd({2, 5, 6}, 58), [](ad::Tape& t, ad::Var x) {
    return unit(t, ad::warp_bilinear(x, t.constant(rnd({5, 6, 2}, 59, -1.3, 1.3))), 141);
  });
  {
    // Fractional parts kept away from 0 so every sample stays inside one cell.
    Rng rng(60);
    ad::Tensor flow({5, 6, 2});
    for (auto& v : flow.storage()) v = (rng.uniform() < 0.5 ? -1.0 : 0.0) + rng.uniform(0.2, 0.8);
    add_case("warp_bilinear flow", flow, [](ad::Tape& t, ad::Var f) {
      return unit(t, ad::warp_bilinear(t.constant(rnd({2, 5, 6}, 61)), f), 142);
    });
  }
  add_case("collapse_pyramid level 1", rnd({3, 4, 5}, 62), [](ad::Tape& t, ad::Var x) {
    return unit(t, collapse_pyramid({t.constant(rnd({3, 8, 9}, 63)), x, t.constant(rnd({3, 2, 3}, 64))}), 143);
  });
  add_case("grid_colors", rnd({3, 8, 12}, 65, 0.0, 1.0), [](ad::Tape& t, ad::Var x) {
    return unit(t, grid_colors(x, 2, 3), 144);
  });

  // Losses built on the ops above.
  add_case("cosine_distance_matrix", rnd({4, 5}, 66), [](ad::Tape& t, ad::Var x) {
    return unit(t, cosine_distance_matrix(x, t.constant(rnd({3, 5}, 67))).cost, 145);
  });
  add_case("cosine_distance_matrix centered rhs", rnd({3, 5}, 68), [](ad::Tape& t, ad::Var x) {
    return unit(t, cosine_distance_matrix(t.constant(rnd({4, 5}, 69)), x, true).cost, 146);
  });
  add_case("cosine_distance_matrix norm_eps", rnd({4, 5}, 70), [](ad::Tape& t, ad::Var x) {
    return unit(t, cosine_distance_matrix(x, x, false, 1e-3).cost, 147);
  });
  add_case("euclidean_distance_matrix", rnd({4, 3}, 71), [](ad::Tape& t, ad::Var x) {
    return unit(t, euclidean_distance_matrix(x, t.constant(rnd({5, 3}, 72))).cost, 148);
  });
  add_case("remd on cosine costs", rnd({8, 6}, 73), [](ad::Tape& t, ad::Var x) {
    return remd(cosine_distance_matrix(x, t.constant(rnd({7, 6}, 74))));
  });
  add_case("moment_loss", rnd({6, 3}, 75), [](ad::Tape& t, ad::Var x) {
    return moment_loss(x, t.constant(rnd({8, 3}, 76)));
  });
  add_case("palette_loss", rnd({6, 3}, 77, 0.0, 1.0), [](ad::Tape& t, ad::Var x) {
    return palette_loss(x, t.constant(rnd({7, 3}, 78, 0.0, 1.0)));
  });
  add_case("self_sim_matrix", rnd({5, 4}, 79), [](ad::Tape& t, ad::Var x) { return unit(t, self_sim_matrix(x), 149); });
  add_case("content_loss", rnd({6, 4}, 80), [](ad::Tape& t, ad::Var x) {
    return content_loss(x, t.constant(rnd({6, 4}, 81)));
  });
  add_case("gram_matrix", rnd({3, 4, 5}, 82), [](ad::Tape& t, ad::Var x) { return unit(t, gram_matrix(x), 150); });
  add_case("gram_style_loss", rnd({3, 4, 4}, 83), [](ad::Tape& t, ad::Var x) {
    return gram_style_loss({x, ad::avg_pool2(x)}, {t.constant(rnd({3, 4, 4}, 84)), t.constant(rnd({3, 2, 2}, 85))},
                           {0.5, 2.0});
  });
  add_case("l2_content_loss", rnd({3, 4, 4}, 86), [](ad::Tape& t, ad::Var x) {
    return l2_content_loss(x, t.constant(rnd({3, 4, 4}, 87)));
  });
  {
    const std::vector<Point2> values{{3.0, 4.0}, {17.0, 5.5}, {6.5, 18.0}, {15.0, 16.0}};
    const ad::Tensor centers({4, 2}, std::vector<double>{4.0, 3.0, 16.0, 6.0, 5.0, 17.0, 17.0, 15.0});
    add_case("tps_flow centers", centers, [values](ad::Tape& t, ad::Var c) {
      return unit(t, tps_flow(c, values, 20, 20), 151);
    });
    add_case("tps_flow centers quadratic", centers, [values](ad::Tape& t, ad::Var c) {
      return unit(t, tps_flow(c, values, 12, 14, {TpsKernel::Quadratic, 0.5}), 152);
    });
  }
  {
    const CorrespondenceSet corr{{{1.0, 2.0}, {4.0, 6.0}, 1.0}, {{10.0, 3.0}, {8.0, 1.0}, 1.0}};
    add_case("deformation_loss", rnd({2, 2}, 88), [corr](ad::Tape& t, ad::Var th) { return deformation_loss(corr, th); });
  }
  {
    // Forward differences kept away from zero so |.| stays smooth.
    ad::Tensor field({4, 5, 2});
    Rng rng(89);
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 5; ++x) {
        for (int c = 0; c < 2; ++c) field[(static_cast<std::size_t>(y) * 5 + x) * 2 + c] = (c + 1) * x + 3 * y * y + 0.2 * rng.uniform();
      }
    }
    // Piecewise linear: a coarse step is exact and keeps roundoff off the
    // coordinates whose true gradient is 0.
    add_case("tv_regularizer", field, [](ad::Tape&, ad::Var f) { return tv_regularizer(f); }, 1e-3);
  }
  {
    TargetFeatures tf;
    tf.grid_h = 2;
    tf.grid_w = 3;
    tf.dim = 4;
    tf.data = rnd({6, 4}, 90).storage();
    add_case("nn_objective", rnd({6, 4}, 91), [tf](ad::Tape& t, ad::Var x) { return nn_objective(x, tf, 1e-3); });
  }
  add_case("feature bank hypercolumns", rnd({3, 32, 32}, 92, 0.0, 1.0), [](ad::Tape& t, ad::Var x) {
    static const FeatureBank bank;
    return unit(t, bank.extract(t, x).features, 153);
  });
  cs.back().coords = pick_coords(3 * 32 * 32, 24, 93);
  return cs;
}

std::vector<GradCase> objective_gradient_cases() {
  std::vector<GradCase> cs;
  static const FeatureBank bank;
  const ImageBuffer content = smooth_image(32, 32, 0.3);
  const ImageBuffer style = smooth_image(32, 32, 2.1);
  const ad::Tensor out0 = kink_free_image(bank, 1e-5);
  const double eps = 1e-6;
  const auto coords = pick_coords(out0.numel(), 24, 200);

  {
    auto in = std::make_shared<StrotssScaleInputs>(prepare_strotss_scale(bank, content, style, 32, {}));
    Rng rng(201);
    auto samples = std::make_shared<StrotssSamples>(draw_strotss_samples(*in, 48, rng));
    cs.push_back({"STROTSS total objective", [in, samples](ad::Tape& t, ad::Var o) {
                    return strotss_total_loss(t, o, *in, *samples, 2.0, bank, 1e-3).total;
                  },
                  out0, eps, coords});
  }
  {
    const FeatureTensor cf = bank.extract(content);
    const std::vector<FeatureTensor> pool = extract_with_rotations(style, bank);
    MatchOptions mo;
    mo.norm_eps = 1e-3;
    auto target = std::make_shared<TargetFeatures>(match_features(cf, pool, mo));
    cs.push_back({"NNST nearest-neighbour objective", [target](ad::Tape& t, ad::Var o) {
                    return nn_objective(bank.extract(t, o).features, *target, 1e-3);
                  },
                  out0, eps, coords});
  }
  {
    const GramLayers layers = default_gram_layers(bank);
    ad::Tape st;
    const auto s_acts = bank.activations(st, st.constant(image_to_tensor(style)));
    const auto c_acts = bank.activations(st, st.constant(image_to_tensor(content)));
    auto s_vals = std::make_shared<std::vector<ad::Tensor>>();
    for (int id : layers.style) s_vals->push_back(s_acts[static_cast<std::size_t>(id)].value());
    const ad::Tensor c_val = c_acts[static_cast<std::size_t>(layers.content)].value();
    cs.push_back({"Gram baseline objective", [layers, s_vals, c_val](ad::Tape& t, ad::Var o) {
                    const auto acts = bank.activations(t, o);
                    std::vector<ad::Var> ol, sl;
                    std::vector<double> w;
                    for (std::size_t k = 0; k < layers.style.size(); ++k) {
                      ol.push_back(acts[static_cast<std::size_t>(layers.style[k])]);
                      sl.push_back(t.constant((*s_vals)[k]));
                      w.push_back(gram_layer_weight(ol.back()));
                    }
                    ad::Var content_term =
                        l2_content_loss(acts[static_cast<std::size_t>(layers.content)], t.constant(c_val));
                    return ad::add(ad::scale(content_term, 1e-3), gram_style_loss(ol, sl, w));
                  },
                  out0, eps, coords});
  }
  {
    const CorrespondenceSet corr{{{6.0, 7.0}, {8.5, 6.0}, 1.0},
                                 {{24.0, 6.0}, {23.0, 9.5}, 1.0},
                                 {{7.0, 25.0}, {9.0, 23.5}, 1.0},
                                 {{25.0, 24.0}, {22.0, 25.5}, 1.0}};
    for (DstBase base : {DstBase::Strotss, DstBase::Gram}) {
      const std::string tag = base == DstBase::Strotss ? "STROTSS" : "Gram";
      auto in = std::make_shared<DstScaleInputs>(prepare_dst_scale(bank, content, style, 32, base));
      DstConfig cfg;
      cfg.base = base;
      Rng rng(202);
      std::shared_ptr<StrotssSamples> samples;
      if (base == DstBase::Strotss) samples = std::make_shared<StrotssSamples>(draw_strotss_samples(in->strotss, 48, rng));
      const double alpha = cfg.alpha_at(0);
      const ad::Tensor theta0({4, 2}, std::vector<double>{1.2, -0.4, -0.7, 1.9, 0.8, -0.6, -1.4, 0.9});
      cs.push_back({"DST objective (" + tag + ") wrt theta",
                    [=](ad::Tape& t, ad::Var th) {
                      return dst_objective(t, t.constant(out0), th, corr, *in, samples.get(), alpha, cfg, bank).total;
                    },
                    theta0, 1e-5, {}});
      cs.push_back({"DST objective (" + tag + ") wrt output",
                    [=](ad::Tape& t, ad::Var o) {
                      return dst_objective(t, o, t.constant(theta0), corr, *in, samples.get(), alpha, cfg, bank).total;
                    },
                    out0, eps, coords});
    }
  }
  return cs;
}

}  // namespace testing_support
