#pragma once

#include "bnndp/model.hpp"
#include "bnndp/parallel.hpp"
#include "bnndp/relaxcore.hpp"

#include <utility>
#include <vector>

namespace bnndp {

struct AffineRow {
  Vec coef;
  double offset = 0.0;
  double at(const Vec& z) const { return coef.dot(z) + offset; }
};

// m_i(z), s_i(z) and their relaxations for one node over one box U.
struct NodeMoments {
  Index node = 0;
  AffineRow m;
  Range m_range, s_range, r_range;
  AffineRow s_lo, s_hi, r_lo, r_hi;
  // values at the box center
  Vec center;
  double m_c = 0.0, s_c = 0.0;
  Vec grad_s_c;
};

// (m(z), s(z)) for every node of the layer
std::pair<Vec, Vec> eval_moments(const LayerPosterior& layer, const Vec& z);

// gradient of s_i at z
Vec variance_gradient(const LayerPosterior& layer, Index node, const Vec& z);

NodeMoments node_moments(const LayerPosterior& layer, Index node, const Box& U);
std::vector<NodeMoments> layer_moments(const LayerPosterior& layer, const Box& U, Exec exec = Exec::parallel);

// Lower: tangent at the box center. Upper: chord of each diagonalized parabola.
AffineRelaxation relax_s_on_box(const LayerPosterior& layer, Index node, const Box& U);
// r = sqrt(s)
AffineRelaxation relax_r_on_box(const LayerPosterior& layer, Index node, const Box& U);

struct AffinePair {
  AffineRow lo;
  AffineRow hi;
};

// Enclosure of z -> g(sign*m(z) + shift, r(z)) on U.
AffinePair relax_g(const NodeMoments& nm, double sign = 1.0, double shift = 0.0);
AffineRelaxation relax_g_on_region(const LayerPosterior& layer, Index node, const Box& U);

// Enclosure of z -> E[phi(zeta)] for all nodes (rows) on U.
AffineRelaxation expected_activation(const std::vector<NodeMoments>& nms, Activation act);

// z -> E[A phi(W (z,1)) + b] on U, for an affine value function (A, b).
AffineRelaxation prop_affine_value(const Mat& A, const Vec& b, const LayerPosterior& layer, const Box& U,
                                   Exec exec = Exec::parallel);

AffineRelaxation stack_rows(const std::vector<AffinePair>& rows);

}  // namespace bnndp
