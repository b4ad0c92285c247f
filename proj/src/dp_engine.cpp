#include "bnndp/dp_engine.hpp"

#include "bnndp/gausskit.hpp"
#include "bnndp/layerprop.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace bnndp {

double default_mass_epsilon(int hidden_layers) {
  if (hidden_layers <= 1) return 1e-2;
  if (hidden_layers == 2) return 1e-3;
  return 5e-4;
}

double DpConfig::epsilon_at(size_t idx, int hidden_layers) const {
  if (mass_epsilon.empty()) return default_mass_epsilon(hidden_layers);
  if (mass_epsilon.size() == 1) return mass_epsilon[0];
  return idx < mass_epsilon.size() ? mass_epsilon[idx] : mass_epsilon.back();
}

int DpConfig::regions_at(size_t idx) const { return idx < regions.size() ? regions[idx] : 2; }

void DpConfig::validate() const {
  for (double e : mass_epsilon)
    if (!(e > 0 && e < 1)) throw std::invalid_argument("mass epsilon must lie in (0,1)");
  for (int r : regions)
    if (r < 1) throw std::invalid_argument("regions per layer must be >= 1");
}

std::vector<Box> LayerPartition::post_pieces() const {
  std::vector<Box> out;
  out.reserve(pieces.size());
  for (const Box& b : pieces) out.push_back(activate(activation, b));
  return out;
}

PwaRelaxation ValueRelaxation::as_pwa() const {
  PwaRelaxation p;
  if (whole_space) {
    p.pieces.push_back(Box::whole(in_dim()));
  } else {
    for (const Box& b : pieces) p.pieces.push_back(activate(activation, b));
  }
  p.relax = relax;
  p.complement = complement;
  return p;
}

double mass_quantile(double eps, Index n) {
  if (!(eps > 0 && eps < 1)) throw std::invalid_argument("mass_quantile: eps outside (0,1)");
  // 1 - (1-eps)^(1/n), without cancellation
  const double delta = -std::expm1(std::log1p(-eps) / double(n));
  return std::numbers::sqrt2 * gauss::erfcinv(delta);
}

namespace {

// Frank-Wolfe on the concave map z -> sign*m(z) - q r(z) over a box.
double concave_max(const LayerPosterior& layer, Index i, const Box& box, double sign, double q) {
  const Index n = layer.in_dim();
  const Vec a = layer.mean().row(i).head(n).transpose();
  const double a0 = layer.mean()(i, n);
  auto f = [&](const Vec& z) { return sign * (a.dot(z) + a0) - q * std::sqrt(layer.variance_at(i, z)); };
  Vec z = box.center();
  double best = f(z);
  for (int t = 0; t < 15; ++t) {
    const double s = layer.variance_at(i, z);
    Vec g = sign * a;
    if (s > 1e-300) g -= (q / (2.0 * std::sqrt(s))) * variance_gradient(layer, i, z);
    Vec v(n);
    for (Index d = 0; d < n; ++d) v[d] = g[d] >= 0 ? box.upper(d) : box.lower(d);
    const double step = 2.0 / (t + 2.0);
    z += step * (v - z);
    best = std::max({best, f(z), f(v)});
  }
  return best;
}

}  // namespace

Box main_box(const LayerPosterior& layer, const Box& carrier, double eps, Orientation o) {
  const Index n = layer.out_dim();
  const double q = mass_quantile(eps, n);
  Vec lo(n), hi(n);
  if (o == Orientation::outer) {
    for (Index i = 0; i < n; ++i) {
      const NodeMoments nm = node_moments(layer, i, carrier);
      lo[i] = nm.m_range.lo - q * nm.r_range.hi;
      hi[i] = nm.m_range.hi + q * nm.r_range.hi;
    }
  } else {
    for (Index i = 0; i < n; ++i) {
      lo[i] = concave_max(layer, i, carrier, 1.0, q);
      hi[i] = -concave_max(layer, i, carrier, -1.0, q);
      if (lo[i] > hi[i]) lo[i] = hi[i] = 0.5 * (lo[i] + hi[i]);
    }
  }
  return Box(lo, hi);
}

double main_box_mass_lower(const LayerPosterior& layer, const Box& carrier, const Box& main) {
  double p = 1.0;
  for (Index i = 0; i < layer.out_dim(); ++i) {
    const NodeMoments nm = node_moments(layer, i, carrier);
    p *= gauss::interval_prob_range(nm.m_range, nm.r_range, main.lower(i), main.upper(i)).lo;
  }
  return p;
}

std::vector<Box> refine(const Box& main, int n_pieces, const Vec& scale) {
  if (n_pieces < 1) throw std::invalid_argument("refine: need at least one piece");
  if (!main.bounded()) throw std::invalid_argument("refine: main box must be bounded");
  const Vec w = scale.size() == main.dim() ? scale : Vec::Ones(main.dim());
  std::vector<Box> pieces{main};
  while (int(pieces.size()) < n_pieces) {
    double best = 0.0;
    size_t bj = 0;
    Index bd = -1;
    for (size_t j = 0; j < pieces.size(); ++j) {
      const Vec width = pieces[j].width();
      for (Index d = 0; d < width.size(); ++d) {
        const double sc = width[d] * w[d];
        if (sc > best) {
          best = sc;
          bj = j;
          bd = d;
        }
      }
    }
    if (bd < 0) break;  // nothing left to split
    auto [a, b] = pieces[bj].bisect(bd);
    pieces[bj] = std::move(a);
    pieces.insert(pieces.begin() + long(bj) + 1, std::move(b));
  }
  return pieces;
}

LayerPartition make_partition(const LayerPosterior& layer, int k, const Box& carrier, double eps, int regions,
                              Orientation o) {
  LayerPartition p;
  p.layer = k;
  p.activation = layer.activation();
  p.carrier = carrier;
  p.epsilon = eps;
  p.main = main_box(layer, carrier, eps, o);
  p.mass_lower = main_box_mass_lower(layer, carrier, p.main);
  Vec scale(layer.out_dim());
  for (Index i = 0; i < layer.out_dim(); ++i) scale[i] = node_moments(layer, i, carrier).r_range.mid();
  if (scale.maxCoeff() <= 0) scale.setOnes();
  p.pieces = refine(p.main, std::max(1, regions - 1), scale);
  return p;
}

namespace {

// E[phi(zeta) 1{zeta in [lo,hi]}] for one node, as an affine enclosure on the box.
AffinePair trunc_mass_relax(const NodeMoments& nm, Activation act, double lo, double hi, double& tmin) {
  const Index n = nm.m.coef.size();
  double a = lo, b = hi;
  if (act == Activation::relu) {
    a = std::max(lo, 0.0);
    b = std::max(hi, 0.0);
  }
  AffinePair out{{Vec::Zero(n), 0.0}, {Vec::Zero(n), 0.0}};
  if (!(a < b)) {
    tmin = 0.0;
    return out;
  }
  const AffinePair ga = relax_g(nm, 1.0, -a);
  const AffinePair gb = relax_g(nm, 1.0, -b);
  const Range sa = a * gauss::tail_prob_range(nm.m_range, nm.r_range, a);
  const Range sb = b * gauss::tail_prob_range(nm.m_range, nm.r_range, b);
  out.lo.coef = ga.lo.coef - gb.hi.coef;
  out.lo.offset = ga.lo.offset - gb.hi.offset + sa.lo - sb.hi;
  out.hi.coef = ga.hi.coef - gb.lo.coef;
  out.hi.offset = ga.hi.offset - gb.lo.offset + sa.hi - sb.lo;
  tmin = gauss::first_moment_range(nm.m_range, nm.r_range, a, b).lo;
  return out;
}

Range trunc_mass_range(const NodeMoments& nm, Activation act, double lo, double hi) {
  if (act == Activation::relu) return gauss::trunc_relu_mass_range(nm.m_range, nm.r_range, lo, hi);
  return gauss::first_moment_range(nm.m_range, nm.r_range, lo, hi);
}

// leave-one-out products of nonnegative ranges
std::vector<Range> loo_products(const std::vector<Range>& p, Range* total) {
  const size_t n = p.size();
  std::vector<Range> pre(n + 1, Range{1.0, 1.0}), suf(n + 1, Range{1.0, 1.0});
  for (size_t i = 0; i < n; ++i) pre[i + 1] = {pre[i].lo * p[i].lo, pre[i].hi * p[i].hi};
  for (size_t i = n; i-- > 0;) suf[i] = {suf[i + 1].lo * p[i].lo, suf[i + 1].hi * p[i].hi};
  std::vector<Range> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = {pre[i].lo * suf[i + 1].lo, pre[i].hi * suf[i + 1].hi};
  if (total) *total = pre[n];
  return out;
}

// lower(A (x) R) and upper(A (x) R) added onto (Alo,blo), (Ahi,bhi)
void accumulate(const Mat& Dlo, const Mat& Dhi, const AffineRelaxation& R, Mat& Alo, Vec& blo, Mat& Ahi, Vec& bhi) {
  Mat A;
  Vec b;
  compose_lower(Dlo, R, A, b);
  Alo += A;
  blo += b;
  compose_upper(Dhi, R, A, b);
  Ahi += A;
  bhi += b;
}

double lower_times(double c, Range r) { return c >= 0 ? c * r.lo : c * r.hi; }
double upper_times(double c, Range r) { return c >= 0 ? c * r.hi : c * r.lo; }

}  // namespace

AffineRelaxation bp_step(const ValueRelaxation& V, const LayerPosterior& layer, const Box& target, Exec exec) {
  if (V.in_dim() != layer.out_dim()) throw std::invalid_argument("bp_step: value function does not match layer width");
  if (target.dim() != layer.in_dim()) throw std::invalid_argument("bp_step: target does not match layer input");
  const Activation act = layer.activation();
  const Index n = layer.out_dim(), np = layer.in_dim(), l = V.out_dim();
  const bool par = exec == Exec::parallel;

  const std::vector<NodeMoments> nms = layer_moments(layer, target, exec);
  std::vector<AffinePair> erows(static_cast<size_t>(n));
#pragma omp parallel for schedule(static) if (par)
  for (Index i = 0; i < n; ++i) {
    const NodeMoments& nm = nms[size_t(i)];
    erows[size_t(i)] = act == Activation::relu ? relax_g(nm) : AffinePair{nm.m, nm.m};
  }
  const AffineRelaxation E = stack_rows(erows);

  if (V.whole_space) {
    AffineRelaxation out;
    compose_lower(V.relax[0].A_lo, E, out.A_lo, out.b_lo);
    compose_upper(V.relax[0].A_hi, E, out.A_hi, out.b_hi);
    out.b_lo += V.relax[0].b_lo;
    out.b_hi += V.relax[0].b_hi;
    return out;
  }
  if (!V.complement) throw std::invalid_argument("bp_step: partitioned value function needs a complement bound");
  const ComplementBound& C = *V.complement;
  if (!C.has_cone && !C.clamp) throw std::invalid_argument("bp_step: complement bound is empty");

  // reference affine map
  Mat Ar_lo, Ar_hi;
  Vec br_lo, br_hi;
  if (C.has_cone) {
    Ar_lo = C.cone.A_lo;
    br_lo = C.cone.b_lo;
    Ar_hi = C.cone.A_hi;
    br_hi = C.cone.b_hi;
  } else {
    size_t best = 0;
    double bp = -1.0;
    for (size_t j = 0; j < V.pieces.size(); ++j) {
      double p = 1.0;
      for (Index i = 0; i < n; ++i)
        p *= gauss::interval_prob({nms[size_t(i)].m_c, std::sqrt(nms[size_t(i)].s_c)}, V.pieces[j].lower(i),
                                  V.pieces[j].upper(i));
      if (p > bp) {
        bp = p;
        best = j;
      }
    }
    Ar_lo = V.relax[best].A_lo;
    br_lo = V.relax[best].b_lo;
    Ar_hi = V.relax[best].A_hi;
    br_hi = V.relax[best].b_hi;
  }

  Mat Alo(l, np), Ahi(l, np);
  Vec blo(l), bhi(l);
  compose_lower(Ar_lo, E, Alo, blo);
  compose_upper(Ar_hi, E, Ahi, bhi);
  blo += br_lo;
  bhi += br_hi;

  // bounded pieces: (A_j - A_r) (x) NE_j + (b_j - b_r) (x) P_j
  for (size_t j = 0; j < V.pieces.size(); ++j) {
    const Box& B = V.pieces[j];
    const Mat Dlo = V.relax[j].A_lo - Ar_lo, Dhi = V.relax[j].A_hi - Ar_hi;
    const Vec dlo = V.relax[j].b_lo - br_lo, dhi = V.relax[j].b_hi - br_hi;
    const bool need_ne = Dlo.cwiseAbs().maxCoeff() > 0 || Dhi.cwiseAbs().maxCoeff() > 0;
    const bool need_p = dlo.cwiseAbs().maxCoeff() > 0 || dhi.cwiseAbs().maxCoeff() > 0;
    if (!need_ne && !need_p) continue;

    std::vector<Range> P(static_cast<size_t>(n));
#pragma omp parallel for schedule(static) if (par)
    for (Index i = 0; i < n; ++i)
      P[size_t(i)] = gauss::interval_prob_range(nms[size_t(i)].m_range, nms[size_t(i)].r_range, B.lower(i), B.upper(i));
    Range Pj;
    const std::vector<Range> Q = loo_products(P, &Pj);

    if (need_ne) {
      std::vector<AffinePair> ne(static_cast<size_t>(n));
#pragma omp parallel for schedule(static) if (par)
      for (Index i = 0; i < n; ++i) {
        double tmin = 0.0;
        const AffinePair T = trunc_mass_relax(nms[size_t(i)], act, B.lower(i), B.upper(i), tmin);
        const Range q = Q[size_t(i)];
        const double slack = std::max(0.0, -tmin) * (q.hi - q.lo);
        AffinePair r;
        r.lo.coef = q.lo * T.lo.coef;
        r.lo.offset = q.lo * T.lo.offset - slack;
        r.hi.coef = q.hi * T.hi.coef;
        r.hi.offset = q.hi * T.hi.offset + slack;
        ne[size_t(i)] = std::move(r);
      }
      accumulate(Dlo, Dhi, stack_rows(ne), Alo, blo, Ahi, bhi);
    }
    for (Index o = 0; o < l; ++o) {
      blo[o] += lower_times(dlo[o], Pj);
      bhi[o] += upper_times(dhi[o], Pj);
    }
  }

  // complement of the main box
  std::vector<Range> Pm(static_cast<size_t>(n)), NEc(static_cast<size_t>(n));
  std::vector<double> D(static_cast<size_t>(n));
#pragma omp parallel for schedule(static) if (par)
  for (Index i = 0; i < n; ++i) {
    const NodeMoments& nm = nms[size_t(i)];
    Pm[size_t(i)] = gauss::interval_prob_range(nm.m_range, nm.r_range, V.main.lower(i), V.main.upper(i));
    const double lo = V.main.lower(i), hi = V.main.upper(i);
    // E[dist(phi(zeta), phi(main))] upper bound
    double d;
    if (act == Activation::relu) {
      d = gauss::rect_mean_range({nm.m_range.lo - std::max(hi, 0.0), nm.m_range.hi - std::max(hi, 0.0)}, nm.r_range).hi;
      if (lo > 0) d += gauss::rect_mean_range({lo - nm.m_range.hi, lo - nm.m_range.lo}, nm.r_range).hi;
    } else {
      d = gauss::rect_mean_range({nm.m_range.lo - hi, nm.m_range.hi - hi}, nm.r_range).hi +
          gauss::rect_mean_range({lo - nm.m_range.hi, lo - nm.m_range.lo}, nm.r_range).hi;
    }
    D[size_t(i)] = d;
  }
  Range Pmain;
  const std::vector<Range> Qm = loo_products(Pm, &Pmain);
  const Range Pc{std::clamp(1.0 - Pmain.hi, 0.0, 1.0), std::clamp(1.0 - Pmain.lo, 0.0, 1.0)};
  if (C.clamp) {
    for (Index i = 0; i < n; ++i) {
      const NodeMoments& nm = nms[size_t(i)];
      const double lo = V.main.lower(i), hi = V.main.upper(i);
      const Range tail = trunc_mass_range(nm, act, -kInf, lo) + trunc_mass_range(nm, act, hi, kInf);
      const Range inside = trunc_mass_range(nm, act, lo, hi);
      const Range q = Qm[size_t(i)];
      NEc[size_t(i)] = tail + inside * Range{1.0 - q.hi, 1.0 - q.lo};
    }
  }
  const Vec Dv = Eigen::Map<const Vec>(D.data(), n);
  for (Index o = 0; o < l; ++o) {
    double add_lo = -kInf, add_hi = kInf;
    if (C.has_cone) {
      add_lo = -C.growth_lo.row(o).dot(Dv);
      add_hi = C.growth_hi.row(o).dot(Dv);
    }
    if (C.clamp) {
      double cl = lower_times(C.clamp->lo[o] - br_lo[o], Pc);
      double ch = upper_times(C.clamp->hi[o] - br_hi[o], Pc);
      for (Index i = 0; i < n; ++i) {
        cl += lower_times(-Ar_lo(o, i), NEc[size_t(i)]);
        ch += upper_times(-Ar_hi(o, i), NEc[size_t(i)]);
      }
      add_lo = std::max(add_lo, cl);
      add_hi = std::min(add_hi, ch);
    }
    blo[o] += add_lo;
    bhi[o] += add_hi;
  }
  return AffineRelaxation(std::move(Alo), std::move(blo), std::move(Ahi), std::move(bhi));
}

ValueRelaxation assemble_value(const LayerPartition& part, std::vector<AffineRelaxation> relax, const Mat& lipschitz,
                               const std::optional<Interval>& clamp) {
  if (relax.size() != part.pieces.size()) throw std::invalid_argument("assemble_value: one relaxation per piece");
  ValueRelaxation V;
  V.layer = part.layer;
  V.activation = part.activation;
  V.main = part.main;
  V.pieces = part.pieces;
  V.relax = std::move(relax);

  const Box anchor = part.post_main();
  const std::vector<Box> post = part.post_pieces();
  size_t r = 0;
  const Vec c = anchor.center();
  for (size_t j = 0; j < post.size(); ++j)
    if (post[j].contains(c)) {
      r = j;
      break;
    }
  const AffineRelaxation& R = V.relax[r];
  const Index l = R.rows();
  Vec off_lo = Vec::Zero(l), off_hi = Vec::Zero(l);
  for (size_t j = 0; j < post.size(); ++j) {
    if (j == r) continue;
    const Interval dl = affine_range_on_box(V.relax[j].A_lo - R.A_lo, V.relax[j].b_lo - R.b_lo, post[j]);
    const Interval dh = affine_range_on_box(V.relax[j].A_hi - R.A_hi, V.relax[j].b_hi - R.b_hi, post[j]);
    off_lo = off_lo.cwiseMin(dl.lo);
    off_hi = off_hi.cwiseMax(dh.hi);
  }
  ComplementBound C;
  C.anchor = anchor;
  C.has_cone = true;
  C.cone = AffineRelaxation(R.A_lo, R.b_lo + off_lo, R.A_hi, R.b_hi + off_hi);
  C.growth_lo = R.A_lo.cwiseAbs() + lipschitz;
  C.growth_hi = R.A_hi.cwiseAbs() + lipschitz;
  C.clamp = clamp;
  V.complement = std::move(C);
  return V;
}

std::vector<int> partitioned_layers(const BnnModel& m) {
  std::vector<int> ks;
  const int K = m.hidden();
  const int top = m.task() == Task::classification ? K + 1 : K - 1;
  for (int k = 1; k <= top; ++k) ks.push_back(k);
  return ks;
}

DpResult run_dp(const BnnModel& m, const Box& T, const DpConfig& cfg, const Terminal& terminal) {
  cfg.validate();
  if (T.dim() != m.input_dim()) throw std::invalid_argument("query box dimension does not match model input");
  if (!T.bounded()) throw std::invalid_argument("query box must be bounded");
  const int K = m.hidden();
  const std::vector<int> ks = partitioned_layers(m);

  DpResult res;
  Box carrier = T;
  for (size_t idx = 0; idx < ks.size(); ++idx) {
    const int k = ks[idx];
    const LayerPosterior& layer = m.layer(k - 1);
    LayerPartition p = make_partition(layer, k, carrier, cfg.epsilon_at(idx, K), cfg.regions_at(idx), cfg.orientation);
    carrier = p.post_main();
    res.mass_chain *= p.mass_lower;
    res.partitions.push_back(std::move(p));
  }
  auto partition_of = [&](int k) -> const LayerPartition& { return res.partitions.at(size_t(k - 1)); };

  const LayerPartition* top_part = terminal.needs_output_partition ? &res.partitions.back() : nullptr;
  ValueRelaxation V = terminal.build(top_part);
  Mat beta = terminal.lipschitz;
  int k = terminal.layer;
  if (k == 0) {
    res.v0 = V.relax.front();
  }
  while (k >= 1) {
    const LayerPosterior& layer = m.layer(k - 1);
    if (k == 1) {
      res.v0 = bp_step(V, layer, T, cfg.exec);
      break;
    }
    const LayerPartition& prev = partition_of(k - 1);
    const std::vector<Box> targets = prev.post_pieces();
    std::vector<AffineRelaxation> rel;
    rel.reserve(targets.size());
    for (const Box& U : targets) rel.push_back(bp_step(V, layer, U, cfg.exec));
    beta = beta * layer.abs_weight_mean();
    V = assemble_value(prev, std::move(rel), beta, terminal.clamp);
    --k;
  }
  res.bounds = Interval(affine_range_on_box(res.v0.A_lo, res.v0.b_lo, T).lo,
                        affine_range_on_box(res.v0.A_hi, res.v0.b_hi, T).hi.cwiseMax(
                            affine_range_on_box(res.v0.A_lo, res.v0.b_lo, T).lo));
  if (terminal.clamp) {
    res.bounds.lo = res.bounds.lo.cwiseMax(terminal.clamp->lo);
    res.bounds.hi = res.bounds.hi.cwiseMin(terminal.clamp->hi).cwiseMax(res.bounds.lo);
  }
  return res;
}

}  // namespace bnndp
