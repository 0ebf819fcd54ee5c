#include "stylecore/self_similarity.hpp"

#include "stylecore/error.hpp"
#include "stylecore/transport.hpp"

namespace stylecore {

ad::Var self_sim_matrix(ad::Var a, double norm_eps) {
  const int n = a.dim(0);
  ad::Tensor off_diag({n, n}, 1.0);
  for (int i = 0; i < n; ++i) off_diag[static_cast<std::size_t>(i) * n + i] = 0.0;
  ad::Var d = cosine_distance_matrix(a, a, false, norm_eps).cost;
  return ad::mul(d, a.tape()->constant(std::move(off_diag)));
}

namespace {

// Distances of identical vectors come out at rounding level, not exactly 0.
constexpr double kDegenerateColumnSum = 1e-12;

ad::Var column_normalized(ad::Var d, const char* which) {
  ad::Var sums = ad::sum(d, 0);
  for (double v : sums.value().storage()) {
    if (v <= kDegenerateColumnSum) {
      raise(ErrorKind::InvalidArgument,
            std::string("content loss: a column of the ") + which +
                " self-similarity matrix sums to zero (all sampled features identical)");
    }
  }
  return ad::div(d, sums);
}

}  // namespace

ad::Var content_loss(ad::Var o, ad::Var c, double norm_eps) {
  require(o.value().rank() == 2 && c.value().rank() == 2, ErrorKind::ShapeMismatch,
          "content loss expects [n, D] samples");
  require(o.dim(0) == c.dim(0), ErrorKind::ShapeMismatch, "content loss needs paired samples of equal size");
  ad::Var no = column_normalized(self_sim_matrix(o, norm_eps), "output");
  ad::Var nc = column_normalized(self_sim_matrix(c, norm_eps), "content");
  return ad::mean(ad::abs(ad::sub(no, nc)));
}

}  // namespace stylecore
