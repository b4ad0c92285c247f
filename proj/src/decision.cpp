#include "bnndp/decision.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bnndp {

double log_sum_exp(const Vec& v) {
  if (v.size() == 0) return -kInf;
  const double m = v.maxCoeff();
  if (m == -kInf) return -kInf;
  if (m == kInf) return kInf;
  return m + std::log((v.array() - m).exp().sum());
}

namespace {

// 1 / (1 + e^L)
double inv_one_plus_exp(double L) {
  if (L > 0) {
    const double e = std::exp(-L);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(L));
}

}  // namespace

Interval ibp_softmax(const Box& z) {
  if (!z.bounded()) throw std::invalid_argument("ibp_softmax: logit box must be bounded");
  const Index n = z.dim();
  Vec lo(n), hi(n);
  Vec others(n - 1);
  for (Index i = 0; i < n; ++i) {
    // lower: own logit low, others high
    for (Index l = 0, c = 0; l < n; ++l)
      if (l != i) others[c++] = z.upper(l) - z.lower(i);
    lo[i] = inv_one_plus_exp(log_sum_exp(others));
    for (Index l = 0, c = 0; l < n; ++l)
      if (l != i) others[c++] = z.lower(l) - z.upper(i);
    hi[i] = inv_one_plus_exp(log_sum_exp(others));
  }
  return Interval(lo.cwiseMax(0.0), hi.cwiseMin(1.0).cwiseMax(lo.cwiseMax(0.0)));
}

std::vector<Interval> ibp_softmax(const std::vector<Box>& pieces) {
  std::vector<Interval> out;
  out.reserve(pieces.size());
  for (const Box& b : pieces) out.push_back(ibp_softmax(b));
  return out;
}

bool logit_margin_check(const Box& box, double p_lo, Index i, Index j) {
  if (!(p_lo > 0)) throw std::invalid_argument("logit_margin_check: p_lo must be positive");
  if (!box.bounded()) throw std::invalid_argument("logit_margin_check: box must be bounded");
  p_lo = std::min(p_lo, 1.0);
  // e^{zhat_j} + eta * sum_l e^{zhat_l} <= e^{zcheck_i}, eta = 1/p - 1
  const double log_eta = p_lo >= 1.0 ? -kInf : std::log1p(-p_lo) - std::log(p_lo);
  Vec terms(2);
  terms[0] = box.upper(j);
  terms[1] = log_eta + log_sum_exp(box.hi());
  return log_sum_exp(terms) <= box.lower(i);
}

Terminal regression_terminal(const BnnModel& m) {
  const int K = m.hidden();
  const LayerPosterior& out = m.layer(K);
  const Index n = out.in_dim();
  Terminal t;
  t.layer = K;
  t.needs_output_partition = false;
  t.lipschitz = out.abs_weight_mean();
  const Activation act = K >= 1 ? m.layer(K - 1).activation() : Activation::identity;
  const Mat A = out.mean().leftCols(n);
  const Vec b = out.mean().col(n);
  t.build = [A, b, act, K](const LayerPartition*) {
    ValueRelaxation V;
    V.layer = K;
    V.activation = act;
    V.whole_space = true;
    V.relax.push_back(AffineRelaxation::exact(A, b));
    return V;
  };
  return t;
}

Terminal softmax_terminal(const BnnModel& m) {
  const int K = m.hidden();
  const Index l = m.output_dim();
  Terminal t;
  t.layer = K + 1;
  t.needs_output_partition = true;
  // |d softmax_o / d z_t| <= 1/4
  t.lipschitz = Mat::Constant(l, l, 0.25);
  t.clamp = Interval(Vec::Zero(l), Vec::Ones(l));
  const Mat lip = t.lipschitz;
  const Interval clamp = *t.clamp;
  t.build = [lip, clamp](const LayerPartition* part) {
    if (!part) throw std::logic_error("softmax terminal needs the output partition");
    std::vector<AffineRelaxation> rel;
    for (const Interval& iv : ibp_softmax(part->pieces)) rel.push_back(AffineRelaxation::constant(iv, iv.dim()));
    return assemble_value(*part, std::move(rel), lip, clamp);
  };
  return t;
}

Terminal terminal_for(const BnnModel& m) {
  return m.task() == Task::classification ? softmax_terminal(m) : regression_terminal(m);
}

}  // namespace bnndp
