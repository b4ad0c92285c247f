#include "bnndp/relaxcore.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace bnndp {

namespace {

// 0 * inf is taken as 0: a zero coefficient never sees an unbounded side.
double mul0(double a, double b) { return (a == 0.0 || b == 0.0) ? 0.0 : a * b; }

}  // namespace

Range operator+(Range a, Range b) { return {a.lo + b.lo, a.hi + b.hi}; }
Range operator-(Range a, Range b) { return {a.lo - b.hi, a.hi - b.lo}; }

Range operator*(Range a, Range b) {
  const double p[4] = {mul0(a.lo, b.lo), mul0(a.lo, b.hi), mul0(a.hi, b.lo), mul0(a.hi, b.hi)};
  return {*std::min_element(p, p + 4), *std::max_element(p, p + 4)};
}

Range operator*(double c, Range a) {
  if (c >= 0) return {mul0(c, a.lo), mul0(c, a.hi)};
  return {mul0(c, a.hi), mul0(c, a.lo)};
}

Range intersect(Range a, Range b) {
  Range r{std::max(a.lo, b.lo), std::min(a.hi, b.hi)};
  if (r.lo > r.hi) {
    // only reachable through rounding; keep a sound-looking degenerate answer
    const double m = (r.lo + r.hi) * 0.5;
    r = {m, m};
  }
  return r;
}

Range widen(Range a, double abs_tol, double rel_tol) {
  return {a.lo - abs_tol - rel_tol * std::abs(a.lo), a.hi + abs_tol + rel_tol * std::abs(a.hi)};
}

Interval::Interval(Vec lo_, Vec hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {
  if (lo.size() != hi.size()) throw std::invalid_argument("interval: dimension mismatch");
  for (Index i = 0; i < lo.size(); ++i) {
    if (lo[i] <= hi[i]) continue;
    if (lo[i] - hi[i] <= 1e-12 * (1.0 + std::abs(lo[i]))) {
      hi[i] = lo[i];
      continue;
    }
    throw std::invalid_argument("interval: lo > hi at index " + std::to_string(i));
  }
}

bool Interval::contains(const Vec& x, double slack) const {
  for (Index i = 0; i < lo.size(); ++i)
    if (x[i] < lo[i] - slack || x[i] > hi[i] + slack) return false;
  return true;
}

Box::Box(Vec lo, Vec hi) : lo_(std::move(lo)), hi_(std::move(hi)) {
  if (lo_.size() != hi_.size()) throw std::invalid_argument("box: dimension mismatch");
  const auto n = static_cast<size_t>(lo_.size());
  lo_open_.assign(n, false);
  hi_open_.assign(n, false);
  for (Index i = 0; i < lo_.size(); ++i) {
    if (std::isnan(lo_[i]) || std::isnan(hi_[i]) || lo_[i] > hi_[i])
      throw std::invalid_argument("box: lo > hi at index " + std::to_string(i));
    if (lo_[i] == -kInf) lo_open_[static_cast<size_t>(i)] = true;
    if (hi_[i] == kInf) hi_open_[static_cast<size_t>(i)] = true;
  }
}

Box Box::whole(Index n) { return Box(Vec::Constant(n, -kInf), Vec::Constant(n, kInf)); }

Box Box::ball(const Vec& center, double radius) {
  if (!(radius >= 0)) throw std::invalid_argument("box: negative radius");
  return Box(center.array() - radius, center.array() + radius);
}

void Box::set_lower_unbounded(Index i) {
  lo_[i] = -kInf;
  lo_open_[static_cast<size_t>(i)] = true;
}

void Box::set_upper_unbounded(Index i) {
  hi_[i] = kInf;
  hi_open_[static_cast<size_t>(i)] = true;
}

bool Box::bounded() const {
  for (size_t i = 0; i < lo_open_.size(); ++i)
    if (lo_open_[i] || hi_open_[i]) return false;
  return true;
}

Vec Box::center() const {
  if (!bounded()) throw std::logic_error("box: center of unbounded box");
  return 0.5 * (lo_ + hi_);
}

Vec Box::width() const { return hi_ - lo_; }

bool Box::contains(const Vec& x, double slack) const {
  for (Index i = 0; i < lo_.size(); ++i)
    if (x[i] < lo_[i] - slack || x[i] > hi_[i] + slack) return false;
  return true;
}

std::pair<Box, Box> Box::bisect(Index d) const {
  if (lower_unbounded(d) || upper_unbounded(d)) throw std::logic_error("box: bisect along unbounded dim");
  const double m = 0.5 * (lo_[d] + hi_[d]);
  Vec h1 = hi_, l2 = lo_;
  h1[d] = m;
  l2[d] = m;
  return {Box(lo_, h1), Box(l2, hi_)};
}

Box relu_image(const Box& b) { return Box(b.lo().cwiseMax(0.0), b.hi().cwiseMax(0.0)); }

AffineRelaxation::AffineRelaxation(Mat Alo, Vec blo, Mat Ahi, Vec bhi)
    : A_lo(std::move(Alo)), b_lo(std::move(blo)), A_hi(std::move(Ahi)), b_hi(std::move(bhi)) {
  if (A_lo.rows() != b_lo.size() || A_hi.rows() != b_hi.size() || A_lo.rows() != A_hi.rows() ||
      A_lo.cols() != A_hi.cols())
    throw std::invalid_argument("affine relaxation: shape mismatch");
}

AffineRelaxation AffineRelaxation::exact(const Mat& A, const Vec& b) { return {A, b, A, b}; }

AffineRelaxation AffineRelaxation::constant(const Interval& c, Index in_dim) {
  return {Mat::Zero(c.dim(), in_dim), c.lo, Mat::Zero(c.dim(), in_dim), c.hi};
}

Interval linmap_interval(const Mat& M, const Interval& x) {
  if (M.cols() != x.dim()) throw std::invalid_argument("linmap_interval: shape mismatch");
  Vec lo(M.rows()), hi(M.rows());
  for (Index r = 0; r < M.rows(); ++r) {
    const Range v = linmap_row(M.row(r), x);
    lo[r] = v.lo;
    hi[r] = v.hi;
  }
  return Interval(lo, hi);
}

Range linmap_row(const Eigen::Ref<const Eigen::RowVectorXd>& row, const Interval& x) {
  double lo = 0, hi = 0;
  for (Index c = 0; c < row.size(); ++c) {
    const double m = row[c];
    if (m > 0) {
      lo += mul0(m, x.lo[c]);
      hi += mul0(m, x.hi[c]);
    } else if (m < 0) {
      lo += mul0(m, x.hi[c]);
      hi += mul0(m, x.lo[c]);
    }
  }
  return {lo, hi};
}

void compose_lower(const Mat& M, const AffineRelaxation& R, Mat& A, Vec& b) {
  const Mat Mp = pos_part(M), Mn = neg_part(M);
  A = Mp * R.A_lo + Mn * R.A_hi;
  b = Mp * R.b_lo + Mn * R.b_hi;
}

void compose_upper(const Mat& M, const AffineRelaxation& R, Mat& A, Vec& b) {
  const Mat Mp = pos_part(M), Mn = neg_part(M);
  A = Mp * R.A_hi + Mn * R.A_lo;
  b = Mp * R.b_hi + Mn * R.b_lo;
}

AffineRelaxation linmap_affine(const Mat& M, const AffineRelaxation& R) {
  if (M.cols() != R.rows()) throw std::invalid_argument("linmap_affine: shape mismatch");
  AffineRelaxation out;
  compose_lower(M, R, out.A_lo, out.b_lo);
  compose_upper(M, R, out.A_hi, out.b_hi);
  return out;
}

Range affine_range_on_box(const Eigen::Ref<const Eigen::RowVectorXd>& a, double b, const Box& box) {
  // centered form on bounded dims, one-sided sums on half-open ones
  double c = b, rad = 0, lo_extra = 0, hi_extra = 0;
  bool lo_inf = false, hi_inf = false;
  for (Index d = 0; d < a.size(); ++d) {
    const double w = a[d];
    if (w == 0) continue;
    const bool lu = box.lower_unbounded(d), hu = box.upper_unbounded(d);
    if (lu || hu) {
      const bool low_end_inf = w > 0 ? lu : hu;
      const bool high_end_inf = w > 0 ? hu : lu;
      if (low_end_inf) lo_inf = true;
      else lo_extra += w * (w > 0 ? box.lower(d) : box.upper(d));
      if (high_end_inf) hi_inf = true;
      else hi_extra += w * (w > 0 ? box.upper(d) : box.lower(d));
      continue;
    }
    const double mid = 0.5 * (box.lower(d) + box.upper(d));
    const double half = 0.5 * (box.upper(d) - box.lower(d));
    c += w * mid;
    rad += std::abs(w) * half;
  }
  Range r{c - rad + lo_extra, c + rad + hi_extra};
  if (lo_inf) r.lo = -kInf;
  if (hi_inf) r.hi = kInf;
  return r;
}

Interval affine_range_on_box(const Mat& A, const Vec& b, const Box& box) {
  if (A.cols() != box.dim() || A.rows() != b.size())
    throw std::invalid_argument("affine_range_on_box: shape mismatch");
  Vec lo(A.rows()), hi(A.rows());
  for (Index r = 0; r < A.rows(); ++r) {
    const Range v = affine_range_on_box(A.row(r), b[r], box);
    lo[r] = v.lo;
    hi[r] = v.hi;
  }
  return Interval(lo, hi);
}

Vec box_distance(const Vec& z, const Box& anchor) {
  Vec d(z.size());
  for (Index i = 0; i < z.size(); ++i)
    d[i] = std::max(0.0, anchor.lower(i) - z[i]) + std::max(0.0, z[i] - anchor.upper(i));
  return d;
}

Interval ComplementBound::evaluate(const Vec& z) const {
  const Index l = has_cone ? cone.rows() : clamp->dim();
  Vec lo = Vec::Constant(l, -kInf), hi = Vec::Constant(l, kInf);
  if (has_cone) {
    const Vec d = box_distance(z, anchor);
    lo = cone.lower_at(z) - growth_lo * d;
    hi = cone.upper_at(z) + growth_hi * d;
  }
  if (clamp) {
    lo = lo.cwiseMax(clamp->lo);
    hi = hi.cwiseMin(clamp->hi);
  }
  return Interval(lo, hi.cwiseMax(lo));
}

Interval PwaRelaxation::evaluate(const Vec& z) const {
  for (size_t j = 0; j < pieces.size(); ++j)
    if (pieces[j].contains(z)) return relax[j].evaluate(z);
  if (!complement) throw std::out_of_range("pwa relaxation: point outside every piece");
  return complement->evaluate(z);
}

}  // namespace bnndp
