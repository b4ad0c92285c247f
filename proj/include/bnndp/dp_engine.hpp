#pragma once

#include "bnndp/model.hpp"
#include "bnndp/parallel.hpp"
#include "bnndp/relaxcore.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace bnndp {

// outer: main box covers the per-node quantile band over the whole carrier.
// inner: the tighter variant that intersects the band over the carrier.
enum class Orientation { outer, inner };

double default_mass_epsilon(int hidden_layers);

struct DpConfig {
  // Per partitioned layer, in order from the input side. Empty uses the
  // depth default; a single entry is broadcast.
  std::vector<double> mass_epsilon;
  // Regions per partitioned layer, complement included (so 2 means one box
  // plus its complement). Missing entries default to 2.
  std::vector<int> regions;
  Orientation orientation = Orientation::outer;
  Exec exec = Exec::parallel;

  double epsilon_at(size_t idx, int hidden_layers) const;
  int regions_at(size_t idx) const;
  void validate() const;
};

struct LayerPartition {
  int layer = 0;  // partitions zeta_layer
  Activation activation = Activation::identity;
  Box carrier;  // Z_{layer-1}, post-activation space of the previous layer
  Box main;     // pre-activation space
  std::vector<Box> pieces;
  double epsilon = 0.0;
  double mass_lower = 0.0;  // min over carrier of P[zeta in main]

  Box post_main() const { return activate(activation, main); }
  std::vector<Box> post_pieces() const;
};

// Piecewise-affine enclosure of V_k. Relaxation j is valid on
// activate(activation, pieces[j]); the complement covers everything outside
// activate(activation, main).
struct ValueRelaxation {
  int layer = 0;
  Activation activation = Activation::identity;
  bool whole_space = false;
  Box main;
  std::vector<Box> pieces;
  std::vector<AffineRelaxation> relax;
  std::optional<ComplementBound> complement;

  Index out_dim() const { return relax.front().rows(); }
  Index in_dim() const { return relax.front().cols(); }
  PwaRelaxation as_pwa() const;
};

// Terminal value function supplied by the decision layer.
struct Terminal {
  int layer = 0;                     // K for regression, K+1 for softmax
  bool needs_output_partition = false;
  Mat lipschitz;                     // per output, per coordinate of the terminal argument
  std::optional<Interval> clamp;     // known global range of every V_k, if any
  std::function<ValueRelaxation(const LayerPartition*)> build;
};

struct DpResult {
  AffineRelaxation v0;  // valid on the query box
  Interval bounds;      // range of v0 over the query box
  std::vector<LayerPartition> partitions;
  double mass_chain = 1.0;  // product of the per-layer mass lower bounds
};

Box main_box(const LayerPosterior& layer, const Box& carrier, double eps, Orientation o = Orientation::outer);
double main_box_mass_lower(const LayerPosterior& layer, const Box& carrier, const Box& main);
// quantile factor q with P[|N(0,1)| <= q] = (1-eps)^(1/n)
double mass_quantile(double eps, Index n);

// Deterministic greedy bisection; scale weights each dimension (default 1).
std::vector<Box> refine(const Box& main, int n_pieces, const Vec& scale = Vec());

LayerPartition make_partition(const LayerPosterior& layer, int k, const Box& carrier, double eps, int regions,
                              Orientation o);

// Enclosure of z -> E[V(phi(W(z,1)))] on target (a box of layer inputs).
AffineRelaxation bp_step(const ValueRelaxation& V, const LayerPosterior& layer, const Box& target,
                         Exec exec = Exec::parallel);

// Assembles V_k from per-piece relaxations and a coordinatewise Lipschitz bound.
ValueRelaxation assemble_value(const LayerPartition& part, std::vector<AffineRelaxation> relax, const Mat& lipschitz,
                               const std::optional<Interval>& clamp);

std::vector<int> partitioned_layers(const BnnModel& m);
DpResult run_dp(const BnnModel& m, const Box& T, const DpConfig& cfg, const Terminal& terminal);

}  // namespace bnndp
