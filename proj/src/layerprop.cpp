#include "bnndp/layerprop.hpp"

#include "bnndp/gausskit.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bnndp {

namespace {

constexpr double kTinyVar = 1e-12;

Range square_range(double lo, double hi) {
  const double a = lo * lo, b = hi * hi;
  if (lo <= 0 && hi >= 0) return {0.0, std::max(a, b)};
  return {std::min(a, b), std::max(a, b)};
}

void require_box(const LayerPosterior& layer, const Box& U) {
  if (U.dim() != layer.in_dim()) throw std::invalid_argument("layerprop: box dimension does not match layer input");
  if (!U.bounded()) throw std::invalid_argument("layerprop: box must be bounded");
}

}  // namespace

std::pair<Vec, Vec> eval_moments(const LayerPosterior& layer, const Vec& z) {
  return {layer.means_at(z), layer.variances_at(z)};
}

Vec variance_gradient(const LayerPosterior& layer, Index node, const Vec& z) {
  const Index n = layer.in_dim();
  if (layer.kind() == CovKind::diagonal)
    return 2.0 * layer.marginal_variance().row(node).head(n).transpose().cwiseProduct(z);
  const DiagonalizedForm& f = layer.spectrum(node);
  const auto top = f.basis.topRows(n);
  const Vec y = top.transpose() * z + f.basis.row(n).transpose();
  return 2.0 * (top * f.eigenvalues.cwiseProduct(y));
}

NodeMoments node_moments(const LayerPosterior& layer, Index i, const Box& U) {
  require_box(layer, U);
  const Index n = layer.in_dim();
  NodeMoments nm;
  nm.node = i;
  nm.m.coef = layer.mean().row(i).head(n).transpose();
  nm.m.offset = layer.mean()(i, n);
  nm.center = U.center();
  nm.m_range = affine_range_on_box(nm.m.coef.transpose(), nm.m.offset, U);
  nm.m_c = nm.m.at(nm.center);

  const Vec& lo = U.lo();
  const Vec& hi = U.hi();
  if (layer.kind() == CovKind::diagonal) {
    const Vec v = layer.marginal_variance().row(i).head(n).transpose();
    const double vb = layer.marginal_variance()(i, n);
    Range sr{vb, vb};
    for (Index d = 0; d < n; ++d) {
      const Range q = square_range(lo[d], hi[d]);
      sr.lo += v[d] * q.lo;
      sr.hi += v[d] * q.hi;
    }
    nm.s_range = sr;
    nm.s_hi.coef = v.cwiseProduct(lo + hi);
    nm.s_hi.offset = vb - v.dot(lo.cwiseProduct(hi));
    nm.s_c = v.dot(nm.center.cwiseAbs2()) + vb;
    nm.grad_s_c = 2.0 * v.cwiseProduct(nm.center);
  } else {
    const DiagonalizedForm& f = layer.spectrum(i);
    const auto top = f.basis.topRows(n);
    const Vec last = f.basis.row(n).transpose();
    const Vec yc = top.transpose() * nm.center + last;
    const Vec yr = top.cwiseAbs().transpose() * (0.5 * (hi - lo));
    const Vec ylo = yc - yr, yhi = yc + yr;
    const Vec& lam = f.eigenvalues;
    Range sr{0.0, 0.0};
    for (Index e = 0; e < lam.size(); ++e) {
      const Range q = square_range(ylo[e], yhi[e]);
      sr.lo += lam[e] * q.lo;
      sr.hi += lam[e] * q.hi;
    }
    nm.s_range = sr;
    const Vec w = lam.cwiseProduct(ylo + yhi);
    nm.s_hi.coef = top * w;
    nm.s_hi.offset = last.dot(w) - lam.dot(ylo.cwiseProduct(yhi));
    nm.s_c = lam.dot(yc.cwiseAbs2());
    nm.grad_s_c = 2.0 * (top * lam.cwiseProduct(yc));
  }
  nm.s_range.lo = std::max(0.0, nm.s_range.lo);
  nm.s_lo.coef = nm.grad_s_c;
  nm.s_lo.offset = nm.s_c - nm.grad_s_c.dot(nm.center);

  // r = sqrt(s)
  const double slo = nm.s_range.lo, shi = nm.s_range.hi;
  nm.r_range = {std::sqrt(slo), std::sqrt(shi)};
  if (nm.s_c > kTinyVar) {
    const double rc = std::sqrt(nm.s_c);
    nm.r_hi.coef = nm.s_hi.coef / (2.0 * rc);
    nm.r_hi.offset = nm.s_hi.offset / (2.0 * rc) + 0.5 * rc;
  } else {
    nm.r_hi.coef = Vec::Zero(n);
    nm.r_hi.offset = nm.r_range.hi;
  }
  if (shi - slo > 0) {
    const double k = (nm.r_range.hi - nm.r_range.lo) / (shi - slo);
    nm.r_lo.coef = k * nm.s_lo.coef;
    nm.r_lo.offset = nm.r_range.lo + k * (nm.s_lo.offset - slo);
  } else {
    nm.r_lo.coef = Vec::Zero(n);
    nm.r_lo.offset = nm.r_range.lo;
  }
  return nm;
}

std::vector<NodeMoments> layer_moments(const LayerPosterior& layer, const Box& U, Exec exec) {
  require_box(layer, U);
  const Index n = layer.out_dim();
  std::vector<NodeMoments> out(static_cast<size_t>(n));
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (Index i = 0; i < n; ++i) out[size_t(i)] = node_moments(layer, i, U);
  return out;
}

namespace {

AffineRelaxation single_row(const AffineRow& lo, const AffineRow& hi) {
  return AffineRelaxation(lo.coef.transpose(), Vec::Constant(1, lo.offset), hi.coef.transpose(),
                          Vec::Constant(1, hi.offset));
}

}  // namespace

AffineRelaxation relax_s_on_box(const LayerPosterior& layer, Index node, const Box& U) {
  const NodeMoments nm = node_moments(layer, node, U);
  return single_row(nm.s_lo, nm.s_hi);
}

AffineRelaxation relax_r_on_box(const LayerPosterior& layer, Index node, const Box& U) {
  const NodeMoments nm = node_moments(layer, node, U);
  return single_row(nm.r_lo, nm.r_hi);
}

AffinePair relax_g(const NodeMoments& nm, double sign, double shift) {
  const Index n = nm.m.coef.size();
  AffinePair out;
  const Vec mu_coef = sign * nm.m.coef;
  const double mu_off = sign * nm.m.offset + shift;
  const Range mu = sign >= 0 ? Range{sign * nm.m_range.lo + shift, sign * nm.m_range.hi + shift}
                             : Range{sign * nm.m_range.hi + shift, sign * nm.m_range.lo + shift};

  // lower: tangent of the convex composition at the center
  const double mu_c = sign * nm.m_c + shift;
  const double r_c = std::sqrt(nm.s_c);
  if (r_c > 1e-150 && nm.s_c > 0) {
    const double g_c = gauss::rect_mean({mu_c, r_c});
    const auto gr = gauss::rect_mean_grad({mu_c, r_c});
    out.lo.coef = gr.d_mu * mu_coef + (gr.d_sigma / (2.0 * r_c)) * nm.grad_s_c;
    out.lo.offset = g_c - out.lo.coef.dot(nm.center);
  } else if (mu_c >= 0) {
    out.lo.coef = mu_coef;
    out.lo.offset = mu_off;
  } else {
    out.lo.coef = Vec::Zero(n);
    out.lo.offset = 0.0;
  }

  // upper: plane through three corners of the (mu, sigma) rectangle, lifted over the fourth
  const Range sg = nm.r_range;
  const double g11 = gauss::rect_mean({mu.hi, sg.hi});
  const double g01 = gauss::rect_mean({mu.lo, sg.hi});
  const double g10 = gauss::rect_mean({mu.hi, sg.lo});
  const double g00 = gauss::rect_mean({mu.lo, sg.lo});
  const double dmu = mu.hi - mu.lo, dsg = sg.hi - sg.lo;
  const double cmu = dmu > 0 ? std::max(0.0, (g11 - g01) / dmu) : 0.0;
  const double csg = dsg > 0 ? std::max(0.0, (g11 - g10) / dsg) : 0.0;
  auto plane = [&](double m, double s) { return g11 + cmu * (m - mu.hi) + csg * (s - sg.hi); };
  double lift = 0.0;
  lift = std::max(lift, g00 - plane(mu.lo, sg.lo));
  lift = std::max(lift, g01 - plane(mu.lo, sg.hi));
  lift = std::max(lift, g10 - plane(mu.hi, sg.lo));
  lift += 1e-14 * (1.0 + std::abs(g11) + std::abs(mu.lo) + std::abs(mu.hi) + sg.hi);
  out.hi.coef = cmu * mu_coef + csg * nm.r_hi.coef;
  out.hi.offset = g11 + cmu * (mu_off - mu.hi) + csg * (nm.r_hi.offset - sg.hi) + lift;
  return out;
}

AffineRelaxation relax_g_on_region(const LayerPosterior& layer, Index node, const Box& U) {
  const AffinePair p = relax_g(node_moments(layer, node, U));
  return single_row(p.lo, p.hi);
}

AffineRelaxation stack_rows(const std::vector<AffinePair>& rows) {
  const Index n = Index(rows.size());
  const Index c = n > 0 ? rows[0].lo.coef.size() : 0;
  Mat Alo(n, c), Ahi(n, c);
  Vec blo(n), bhi(n);
  for (Index i = 0; i < n; ++i) {
    Alo.row(i) = rows[size_t(i)].lo.coef.transpose();
    Ahi.row(i) = rows[size_t(i)].hi.coef.transpose();
    blo[i] = rows[size_t(i)].lo.offset;
    bhi[i] = rows[size_t(i)].hi.offset;
  }
  return AffineRelaxation(std::move(Alo), std::move(blo), std::move(Ahi), std::move(bhi));
}

AffineRelaxation expected_activation(const std::vector<NodeMoments>& nms, Activation act) {
  std::vector<AffinePair> rows(nms.size());
  for (size_t i = 0; i < nms.size(); ++i) {
    if (act == Activation::relu) rows[i] = relax_g(nms[i]);
    else rows[i] = {nms[i].m, nms[i].m};
  }
  return stack_rows(rows);
}

AffineRelaxation prop_affine_value(const Mat& A, const Vec& b, const LayerPosterior& layer, const Box& U, Exec exec) {
  if (A.cols() != layer.out_dim() || A.rows() != b.size())
    throw std::invalid_argument("prop_affine_value: value function shape mismatch");
  const auto nms = layer_moments(layer, U, exec);
  const AffineRelaxation E = expected_activation(nms, layer.activation());
  AffineRelaxation out = linmap_affine(A, E);
  out.b_lo += b;
  out.b_hi += b;
  return out;
}

}  // namespace bnndp
