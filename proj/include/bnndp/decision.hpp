#pragma once

#include "bnndp/dp_engine.hpp"
#include "bnndp/model.hpp"

#include <vector>

namespace bnndp {

// V_K = mean affine map of the output layer, valid everywhere.
Terminal regression_terminal(const BnnModel& m);
// V_{K+1} from interval softmax bounds on the output partition.
Terminal softmax_terminal(const BnnModel& m);
Terminal terminal_for(const BnnModel& m);

// Softmax bounds over a box of logits.
Interval ibp_softmax(const Box& logits);
std::vector<Interval> ibp_softmax(const std::vector<Box>& pieces);

// Sufficient condition for E[softmax_j - softmax_i] <= 0 from the output
// main box and a lower bound p_lo on the probability of landing in it.
bool logit_margin_check(const Box& box, double p_lo, Index i, Index j);

double log_sum_exp(const Vec& v);

}  // namespace bnndp
