#include "bnndp/relaxcore.hpp"

#include "support.hpp"

#include <doctest.h>

using namespace bnndp;

TEST_SUITE("relaxcore") {

TEST_CASE("saturation parts") {
  Mat M(1, 2);
  M << -1, 2;
  CHECK(pos_part(M)(0, 0) == 0.0);
  CHECK(pos_part(M)(0, 1) == 2.0);
  CHECK(neg_part(M)(0, 0) == -1.0);
  CHECK(neg_part(M)(0, 1) == 0.0);
  CHECK(pos_part(Mat::Zero(2, 2)).isZero());
  testkit::Rng rng(1);
  const Mat R = rng.mat(5, 7, -3, 3);
  CHECK((pos_part(R) + neg_part(R) - R).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("range arithmetic treats 0 * inf as 0") {
  const Range r = Range{0.0, 0.0} * Range{-kInf, kInf};
  CHECK(r.lo == 0.0);
  CHECK(r.hi == 0.0);
  const Range s = Range{-1, 2} * Range{3, 4};
  CHECK(s.lo == -4.0);
  CHECK(s.hi == 8.0);
}

TEST_CASE("interval validation") {
  CHECK_THROWS_AS(Interval(Vec::Ones(2), Vec::Zero(2)), std::invalid_argument);
  CHECK_THROWS_AS(Interval(Vec::Ones(2), Vec::Ones(3)), std::invalid_argument);
  Vec lo(1), hi(1);
  lo << 1.0 + 1e-14;
  hi << 1.0;
  const Interval iv(lo, hi);
  CHECK(iv.lo[0] == iv.hi[0]);
}

TEST_CASE("box basics") {
  Vec c(2);
  c << 1, -1;
  const Box b = Box::ball(c, 0.5);
  CHECK(b.bounded());
  CHECK(b.width().isApprox(Vec::Constant(2, 1.0)));
  CHECK(b.contains(c));
  const auto [l, r] = b.bisect(0);
  CHECK(l.upper(0) == doctest::Approx(1.0));
  CHECK(r.lower(0) == doctest::Approx(1.0));
  const Box w = Box::whole(3);
  CHECK_FALSE(w.bounded());
  CHECK(w.lower_unbounded(1));
  CHECK(w.upper_unbounded(2));
  CHECK_THROWS(w.center());
  CHECK_THROWS(Box::ball(c, -1.0));
  CHECK_THROWS(Box(Vec::Ones(2), Vec::Zero(2)));
}

TEST_CASE("linmap_interval hand example and identity") {
  Mat M(1, 2);
  M << 1, -1;
  Vec lo(2), hi(2);
  lo << 0, 0;
  hi << 1, 2;
  const Interval r = linmap_interval(M, Interval(lo, hi));
  CHECK(r.lo[0] == -2.0);
  CHECK(r.hi[0] == 1.0);
  const Interval id = linmap_interval(Mat::Identity(2, 2), Interval(lo, hi));
  CHECK(id.lo == lo);
  CHECK(id.hi == hi);
}

TEST_CASE("linmap_interval contains sampled images and equals the box range") {
  testkit::Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const Index n = rng.integer(1, 6), m = rng.integer(1, 4);
    const Mat M = rng.mat(m, n, -2, 2);
    const Box b = rng.box(n, 3, 2);
    const Interval x(b.lo(), b.hi());
    const Interval r = linmap_interval(M, x);
    const Interval a = affine_range_on_box(M, Vec::Zero(m), b);
    CHECK((r.lo - a.lo).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((r.hi - a.hi).cwiseAbs().maxCoeff() < 1e-12);
    for (int s = 0; s < 200; ++s) CHECK(r.contains(M * rng.in_box(b), 1e-12));
  }
}

TEST_CASE("affine_range_on_box matches vertex enumeration") {
  testkit::Rng rng(3);
  for (int t = 0; t < 40; ++t) {
    const Index n = rng.integer(1, 10), m = rng.integer(1, 3);
    const Mat A = rng.mat(m, n, -1, 1);
    const Vec b = rng.vec(m, -1, 1);
    const Box box = rng.box(n, 2, 1);
    Vec lo = Vec::Constant(m, kInf), hi = Vec::Constant(m, -kInf);
    for (long long mask = 0; mask < (1LL << n); ++mask) {
      Vec v(n);
      for (Index i = 0; i < n; ++i) v[i] = (mask >> i) & 1 ? box.upper(i) : box.lower(i);
      const Vec y = A * v + b;
      lo = lo.cwiseMin(y);
      hi = hi.cwiseMax(y);
    }
    const Interval r = affine_range_on_box(A, b, box);
    CHECK((r.lo - lo).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((r.hi - hi).cwiseAbs().maxCoeff() < 1e-12);
  }
  // A = 0 and the 1-D example
  const Interval z = affine_range_on_box(Mat::Zero(1, 2), Vec::Constant(1, 3.0), Box::ball(Vec::Zero(2), 1));
  CHECK(z.lo[0] == 3.0);
  CHECK(z.hi[0] == 3.0);
  const Interval one = affine_range_on_box(Mat::Ones(1, 1), Vec::Zero(1), Box::ball(Vec::Zero(1), 1));
  CHECK(one.lo[0] == -1.0);
  CHECK(one.hi[0] == 1.0);
}

TEST_CASE("affine range over unbounded sides") {
  Box b = Box::ball(Vec::Zero(2), 1.0);
  b.set_upper_unbounded(0);
  Mat A(2, 2);
  A << 1, 0, 0, 1;
  const Interval r = affine_range_on_box(A, Vec::Zero(2), b);
  CHECK(r.hi[0] == kInf);
  CHECK(r.lo[0] == -1.0);
  CHECK(r.hi[1] == 1.0);
}

TEST_CASE("linmap_affine: nonnegative M and exact relaxations") {
  testkit::Rng rng(4);
  const Mat Alo = rng.mat(3, 2, -1, 1), Ahi = rng.mat(3, 2, -1, 1);
  const AffineRelaxation R(Alo, rng.vec(3, -1, 0), Ahi, rng.vec(3, 0, 1));
  const Mat Mp = rng.mat(2, 3, 0, 1);
  const AffineRelaxation out = linmap_affine(Mp, R);
  CHECK((out.A_lo - Mp * R.A_lo).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((out.b_lo - Mp * R.b_lo).cwiseAbs().maxCoeff() < 1e-15);
  const Mat A = rng.mat(3, 2, -1, 1);
  const Vec b = rng.vec(3, -1, 1);
  const Mat M = rng.mat(2, 3, -1, 1);
  const AffineRelaxation ex = linmap_affine(M, AffineRelaxation::exact(A, b));
  CHECK((ex.A_lo - M * A).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((ex.A_hi - M * A).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((ex.b_hi - M * b).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("relaxation chains stay sound") {
  // |sin z - z| <= |z|^3/6 <= 1/6 on the unit box
  testkit::Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    const Index n = rng.integer(1, 4);
    const Box b = Box::ball(Vec::Zero(n), 1.0);
    AffineRelaxation R(Mat::Identity(n, n), Vec::Constant(n, -1.0 / 6), Mat::Identity(n, n), Vec::Constant(n, 1.0 / 6));
    std::vector<Mat> chain;
    const int depth = int(rng.integer(1, 4));
    for (int d = 0; d < depth; ++d) chain.push_back(rng.mat(rng.integer(1, 4), d == 0 ? n : chain.back().rows(), -1, 1));
    for (const Mat& M : chain) R = linmap_affine(M, R);
    for (int s = 0; s < 50; ++s) {
      const Vec z = rng.in_box(b);
      Vec y = z.array().sin();
      for (const Mat& M : chain) y = M * y;
      CHECK(R.evaluate(z).contains(y, 1e-12));
    }
  }
}

TEST_CASE("complement bound and pwa evaluation") {
  ComplementBound C;
  C.anchor = Box::ball(Vec::Zero(1), 1.0);
  C.has_cone = true;
  C.cone = AffineRelaxation::exact(Mat::Zero(1, 1), Vec::Zero(1));
  C.growth_lo = C.growth_hi = Mat::Ones(1, 1);
  Vec z(1);
  z << 3.0;
  const Interval e = C.evaluate(z);
  CHECK(e.lo[0] == -2.0);
  CHECK(e.hi[0] == 2.0);
  C.clamp = Interval(Vec::Constant(1, -0.5), Vec::Constant(1, 0.5));
  CHECK(C.evaluate(z).hi[0] == 0.5);

  PwaRelaxation p;
  p.pieces.push_back(C.anchor);
  p.relax.push_back(AffineRelaxation::exact(Mat::Ones(1, 1), Vec::Zero(1)));
  z << 0.25;
  CHECK(p.evaluate(z).lo[0] == 0.25);
  z << 5.0;
  CHECK_THROWS_AS(p.evaluate(z), std::out_of_range);
  p.complement = C;
  CHECK(p.evaluate(z).hi[0] == 0.5);
}

}
