#pragma once

#include <vector>

#include "stylecore/autodiff.hpp"
#include "stylecore/features.hpp"

namespace stylecore {

/// Uncentered channel co-occurrence of [F, H, W] or [F, N] activations.
ad::Var gram_matrix(ad::Var layer);

/// sum_l w_l ||G(o_l) - G(s_l)||_F^2.
ad::Var gram_style_loss(const std::vector<ad::Var>& o_layers, const std::vector<ad::Var>& s_layers,
                        const std::vector<double>& weights);

/// ||o - c||_F^2 on one layer.
ad::Var l2_content_loss(ad::Var o_layer, ad::Var c_layer);

/// Bank layers standing in for the conv*_1 style layers and the conv4_2
/// content layer.
struct GramLayers {
  std::vector<int> style;
  int content = 0;
};

GramLayers default_gram_layers(const FeatureBank& bank);

/// 1 / (4 F^2 N^2) for a layer with F channels over N positions.
double gram_layer_weight(ad::Var layer);

}  // namespace stylecore
