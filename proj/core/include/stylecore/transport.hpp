#pragma once

#include <cstddef>
#include <vector>

#include "stylecore/autodiff.hpp"

namespace stylecore {

enum class Metric { Cosine, Euclidean };

/// Pairwise ground costs between n output-side and m style-side vectors.
/// Forbidden entries are tracked in `allowed` (1 = usable); an empty mask
/// means every entry is usable.
struct DistanceMatrix {
  ad::Var cost;  // [n, m]
  std::vector<unsigned char> allowed;
  Metric metric = Metric::Cosine;

  int rows() const { return cost.dim(0); }
  int cols() const { return cost.dim(1); }
  bool has_forbidden() const;
  bool forbidden(int i, int j) const {
    return !allowed.empty() && allowed[static_cast<std::size_t>(i) * cols() + j] == 0;
  }
};

/// 1 - cos(a_i, b_j). With `center`, each set is shifted by its own mean
/// first. Throws ZeroVector when a (centered) vector has norm below 1e-12,
/// unless `norm_eps` > 0, in which case norms become sqrt(|x|^2 + eps^2).
DistanceMatrix cosine_distance_matrix(ad::Var a, ad::Var b, bool center = false, double norm_eps = 0.0);

/// ||a_i - b_j||_2. The gradient at coincident points is taken as 0.
DistanceMatrix euclidean_distance_matrix(ad::Var a, ad::Var b);

/// Argmin selections made by one remd evaluation.
struct RemdTrace {
  std::vector<int> row_choice;  // per row i, the column j of its minimum
  std::vector<int> col_choice;  // per column j, the row i of its minimum (-1 if skipped)
  double r_a = 0.0;
  double r_b = 0.0;
};

struct RemdOptions {
  /// Leave columns with no usable entry out of R_B instead of failing.
  bool skip_unmatched_columns = false;
};

/// max(mean_i min_j C_ij, mean_j min_i C_ij) over usable entries.
ad::Var remd(const DistanceMatrix& c, RemdTrace* trace = nullptr, RemdOptions opts = {});

/// Dense n x m flow with uniform marginals 1/n (rows) and 1/m (columns).
struct TransportPlan {
  int rows = 0;
  int cols = 0;
  std::vector<double> flow;

  double at(int i, int j) const { return flow[static_cast<std::size_t>(i) * cols + j]; }
};

struct EmdResult {
  double cost = 0.0;
  TransportPlan plan;
  long pivots = 0;
};

inline constexpr std::size_t kMaxEmdEntries = 1024 * 1024;

/// Exact uniform-marginal EMD by network simplex on the transportation
/// network. Rejects forbidden entries and problems above kMaxEmdEntries.
EmdResult exact_emd(const DistanceMatrix& c);
EmdResult exact_emd(const ad::Tensor& cost);

/// The same LP through a dense two-phase tableau with Bland's rule.
/// Limited to n, m <= 32; meant as a cross-check.
EmdResult exact_emd_dense_lp(const ad::Tensor& cost);

/// (1/d)|mu_a - mu_b|_1 + (1/d^2)|Sigma_a - Sigma_b|_1 with biased covariance.
ad::Var moment_loss(ad::Var a, ad::Var b);

/// REMD between RGB pixel sets ([n,3], [m,3]) in opponent space under the
/// Euclidean ground metric.
ad::Var palette_loss(ad::Var out_pixels, ad::Var style_pixels);

/// Membership of output rows / style columns in K paired regions.
struct RegionMembership {
  std::vector<std::vector<unsigned char>> rows;  // [K][n]
  std::vector<std::vector<unsigned char>> cols;  // [K][m]

  std::size_t pairs() const { return rows.size(); }
};

/// Scales C_ij by beta when i and j share a region pair; forbids (i, j) when
/// some region holds i but not j; leaves the rest untouched.
DistanceMatrix apply_guidance_costs(const DistanceMatrix& c, const RegionMembership& g, double beta);

}  // namespace stylecore
