#pragma once

#include "stylecore/autodiff.hpp"

namespace stylecore {

/// Pairwise uncentered cosine distances of one sample set [n, D] -> [n, n],
/// with an exactly zero diagonal.
ad::Var self_sim_matrix(ad::Var a, double norm_eps = 0.0);

/// (1/n^2) sum_ij |D^O_ij / sum_i D^O_ij - D^C_ij / sum_i D^C_ij|. Rows of `o`
/// and `c` must describe the same coordinates.
ad::Var content_loss(ad::Var o, ad::Var c, double norm_eps = 0.0);

}  // namespace stylecore
