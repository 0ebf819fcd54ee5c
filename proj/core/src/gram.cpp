#include "stylecore/gram.hpp"

#include <string>

#include "stylecore/error.hpp"

namespace stylecore {

namespace {

ad::Var as_rows(ad::Var layer) {
  const auto& s = layer.shape();
  require(!s.empty() && layer.value().numel() > 0, ErrorKind::InvalidArgument, "gram matrix of an empty layer");
  if (s.size() == 2) return layer;
  require(s.size() == 3, ErrorKind::ShapeMismatch, "gram matrix expects [F, H, W] or [F, N] activations");
  return ad::reshape(layer, {s[0], s[1] * s[2]});
}

}  // namespace

ad::Var gram_matrix(ad::Var layer) {
  ad::Var x = as_rows(layer);
  return ad::matmul_nt(x, x);
}

ad::Var gram_style_loss(const std::vector<ad::Var>& o_layers, const std::vector<ad::Var>& s_layers,
                        const std::vector<double>& weights) {
  require(!o_layers.empty(), ErrorKind::InvalidArgument, "gram style loss needs at least one layer");
  if (o_layers.size() != s_layers.size() || o_layers.size() != weights.size()) {
    raise(ErrorKind::ShapeMismatch, "gram style loss: " + std::to_string(o_layers.size()) + " output layers, " +
                                        std::to_string(s_layers.size()) + " style layers, " +
                                        std::to_string(weights.size()) + " weights");
  }
  ad::Var total;
  for (std::size_t l = 0; l < o_layers.size(); ++l) {
    ad::Var go = gram_matrix(o_layers[l]);
    ad::Var gs = gram_matrix(s_layers[l]);
    require(go.shape() == gs.shape(), ErrorKind::ShapeMismatch, "gram style loss: channel counts differ");
    ad::Var term = ad::scale(ad::sum(ad::square(ad::sub(go, gs))), weights[l]);
    total = l == 0 ? term : ad::add(total, term);
  }
  return total;
}

ad::Var l2_content_loss(ad::Var o_layer, ad::Var c_layer) {
  require(o_layer.shape() == c_layer.shape(), ErrorKind::ShapeMismatch, "l2 content loss: layer shapes differ");
  return ad::sum(ad::square(ad::sub(o_layer, c_layer)));
}

GramLayers default_gram_layers(const FeatureBank& bank) {
  GramLayers g;
  int layer = 0;
  const auto& blocks = bank.spec().blocks;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    g.style.push_back(layer);
    if (b == std::min<std::size_t>(3, blocks.size() - 1)) g.content = layer;
    layer += blocks[b].layers;
  }
  return g;
}

double gram_layer_weight(ad::Var layer) {
  const auto& s = layer.shape();
  const double f = s[0];
  const double n = static_cast<double>(layer.value().numel()) / f;
  return 1.0 / (4.0 * f * f * n * n);
}

}  // namespace stylecore
