#include "bnndp/decision.hpp"
#include "bnndp/dp_engine.hpp"
#include "bnndp/gausskit.hpp"
#include "bnndp/layerprop.hpp"
#include "bnndp/mc_oracle.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace bnndp;

namespace {

LayerPosterior random_layer(testkit::Rng& rng, Index in, Index out, bool full, Activation act = Activation::relu) {
  const Mat M = rng.mat(out, in + 1, -1, 1);
  if (!full) return LayerPosterior::diagonal(M, rng.mat(out, in + 1, 0.01, 0.3), act);
  std::vector<Mat> covs;
  for (Index i = 0; i < out; ++i) {
    const Mat G = rng.mat(in + 1, in + 1, -0.5, 0.5);
    covs.push_back(G * G.transpose() / double(in + 1) + 1e-3 * Mat::Identity(in + 1, in + 1));
  }
  LayerPosterior l = LayerPosterior::full(M, covs, act);
  l.validate(0);
  return l;
}

// exact-cover check: volumes add up and no interior point is in two pieces
bool tiles(const Box& main, const std::vector<Box>& pieces, testkit::Rng& rng) {
  double vol = 0.0;
  for (const Box& b : pieces) vol += b.width().prod();
  if (std::abs(vol - main.width().prod()) > 1e-12 * main.width().prod()) return false;
  for (const Box& b : pieces)
    if ((b.lo() - main.lo()).minCoeff() < 0 || (main.hi() - b.hi()).minCoeff() < 0) return false;
  for (int t = 0; t < 2000; ++t) {
    const Vec z = rng.in_box(main);
    int hits = 0;
    for (const Box& b : pieces) hits += b.contains(z);
    if (hits < 1) return false;
    bool interior_twice = false;
    int inner = 0;
    for (const Box& b : pieces) {
      bool in = true;
      for (Index d = 0; d < z.size(); ++d) in = in && z[d] > b.lower(d) && z[d] < b.upper(d);
      inner += in;
    }
    interior_twice = inner > 1;
    if (interior_twice) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("dp_engine") {

TEST_CASE("mass quantile and defaults") {
  CHECK(mass_quantile(0.05, 1) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  // (1-eps)^(1/n) per coordinate
  const double q = mass_quantile(0.01, 64);
  CHECK(std::pow(gauss::interval_prob({0, 1}, -q, q), 64) == doctest::Approx(0.99).epsilon(1e-12));
  CHECK_THROWS(mass_quantile(0.0, 1));
  CHECK_THROWS(mass_quantile(1.0, 1));
  CHECK(default_mass_epsilon(1) == 1e-2);
  CHECK(default_mass_epsilon(2) == 1e-3);
  CHECK(default_mass_epsilon(3) == 5e-4);
  CHECK(default_mass_epsilon(5) == 5e-4);
  DpConfig cfg;
  CHECK(cfg.regions_at(3) == 2);
  cfg.mass_epsilon = {0.1};
  CHECK(cfg.epsilon_at(2, 3) == 0.1);
  cfg.mass_epsilon = {0.0};
  CHECK_THROWS(cfg.validate());
  cfg.mass_epsilon = {};
  cfg.regions = {0};
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("main box for a point carrier is m +- 1.96 sigma") {
  Mat M(1, 2), V(1, 2);
  M << 2.0, 0.5;
  V << 0.3, 0.1;
  const LayerPosterior l = LayerPosterior::diagonal(M, V, Activation::relu);
  const Vec x = Vec::Constant(1, 0.7);
  const Box b = main_box(l, Box::point(x), 0.05);
  const double m = 2.0 * 0.7 + 0.5, s = std::sqrt(0.3 * 0.49 + 0.1);
  CHECK(b.lower(0) == doctest::Approx(m - 1.959963984540054 * s).epsilon(1e-12));
  CHECK(b.upper(0) == doctest::Approx(m + 1.959963984540054 * s).epsilon(1e-12));
  const Box tiny = main_box(l, Box::point(x), 1.0 - 1e-12);
  CHECK(tiny.width()[0] < 1e-10);
  // inner orientation is never wider
  testkit::Rng rng(51);
  for (int t = 0; t < 20; ++t) {
    const LayerPosterior r = random_layer(rng, 3, 4, t % 2 == 0);
    const Box c = rng.box(3, 1, 1);
    const Box o = main_box(r, c, 0.01, Orientation::outer), in = main_box(r, c, 0.01, Orientation::inner);
    CHECK((o.lo() - in.lo()).maxCoeff() <= 1e-12);
    CHECK((in.hi() - o.hi()).maxCoeff() <= 1e-12);
  }
}

TEST_CASE("main box holds its mass at sampled carrier points") {
  testkit::Rng rng(52);
  for (int t = 0; t < 5; ++t) {
    const BnnModel m = testkit::random_model({3, 16, 1}, 100 + std::uint64_t(t), Task::regression,
                                             t % 2 ? CovKind::full : CovKind::diagonal);
    const LayerPosterior& l = m.layer(0);
    const Box carrier = rng.box(3, 1, 0.5);
    const double eps = 0.05;
    const Box b = main_box(l, carrier, eps);
    CHECK(main_box_mass_lower(l, carrier, b) >= 1.0 - eps - 1e-12);
    const WeightSampler sampler(m);
    Weights w;
    const int N = 20000;
    for (int p = 0; p < 5; ++p) {
      Vec aug(4);
      aug << rng.in_box(carrier), 1.0;
      int in = 0;
      for (int d = 0; d < N; ++d) {
        sampler.sample_into(7 + std::uint64_t(p), std::uint32_t(d), w);
        in += b.contains(w[0] * aug);
      }
      const double freq = double(in) / N;
      CHECK(freq >= 1.0 - eps - 4.0 * std::sqrt(eps * (1 - eps) / N));
    }
  }
}

TEST_CASE("refine tiles the main box") {
  testkit::Rng rng(53);
  const Box unit(Vec::Zero(2), Vec::Ones(2));
  CHECK(refine(unit, 1).size() == 1);
  const auto halves = refine(unit, 2);
  REQUIRE(halves.size() == 2);
  CHECK(halves[0].width().isApprox(halves[1].width()));
  CHECK(halves[0].width().prod() == doctest::Approx(0.5));
  CHECK_THROWS(refine(unit, 0));
  for (int t = 0; t < 20; ++t) {
    const Box b = rng.box(rng.integer(1, 4), 2, 2);
    const auto pieces = refine(b, 7, rng.vec(b.dim(), 0.1, 1));
    CHECK(pieces.size() == 7);
    CHECK(tiles(b, pieces, rng));
  }
  // deterministic
  const auto a = refine(unit, 5), c = refine(unit, 5);
  for (size_t j = 0; j < a.size(); ++j) CHECK(a[j].lo() == c[j].lo());
}

TEST_CASE("bp_step with a whole-space affine value is prop_affine_value") {
  testkit::Rng rng(54);
  const LayerPosterior l = random_layer(rng, 2, 4, false);
  const Mat A = rng.mat(2, 4, -1, 1);
  const Vec b = rng.vec(2, -1, 1);
  ValueRelaxation V;
  V.whole_space = true;
  V.relax.push_back(AffineRelaxation::exact(A, b));
  const Box T = rng.box(2, 1, 1);
  const AffineRelaxation x = bp_step(V, l, T), y = prop_affine_value(A, b, l, T);
  CHECK((x.A_lo - y.A_lo).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((x.A_hi - y.A_hi).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((x.b_lo - y.b_lo).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((x.b_hi - y.b_hi).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("bp_step of a constant value is that constant") {
  testkit::Rng rng(55);
  for (Activation act : {Activation::relu, Activation::identity}) {
    const LayerPosterior l = random_layer(rng, 2, 3, false, act);
    const Box T = rng.box(2, 1, 0.5);
    const LayerPartition part = make_partition(l, 1, T, 0.01, 4, Orientation::outer);
    std::vector<AffineRelaxation> rel;
    for (size_t j = 0; j < part.pieces.size(); ++j)
      rel.push_back(AffineRelaxation::exact(Mat::Zero(1, 3), Vec::Constant(1, 2.5)));
    const ValueRelaxation V = assemble_value(part, rel, Mat::Zero(1, 3), std::nullopt);
    const AffineRelaxation out = bp_step(V, l, T);
    CHECK(out.A_lo.cwiseAbs().maxCoeff() < 1e-12);
    CHECK(out.A_hi.cwiseAbs().maxCoeff() < 1e-12);
    CHECK(out.b_lo[0] == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(out.b_hi[0] == doctest::Approx(2.5).epsilon(1e-12));
  }
}

TEST_CASE("bp_step contains the quadrature truth") {
  testkit::Rng rng(56);
  for (int t = 0; t < 40; ++t) {
    const Index n = rng.integer(1, 3), m = rng.integer(1, 4);
    const Activation act = t % 4 == 3 ? Activation::identity : Activation::relu;
    const LayerPosterior l = random_layer(rng, n, m, t % 3 == 0, act);
    const Box carrier = rng.box(n, 1, 1);
    const LayerPartition part =
        make_partition(l, 1, carrier, t % 2 ? 0.2 : 0.01, int(rng.integer(1, 5)), Orientation::outer);
    testkit::AbsValue f{rng.vec(m, -1, 1), rng.vec(m, -1, 2)};
    const ValueRelaxation V = f.value(part);
    // value relaxation itself
    const PwaRelaxation pwa = V.as_pwa();
    for (int s = 0; s < 200; ++s) {
      const Vec y = activate(act, rng.vec(m, -4, 4));
      double v = 0;
      for (Index i = 0; i < m; ++i) v += f.w[i] * std::abs(y[i] - f.c[i]);
      CHECK(pwa.evaluate(y).contains(Vec::Constant(1, v), 1e-9));
    }
    // one step down, on a sub-box of the carrier
    const Box target = t % 2 ? carrier : part.carrier.bisect(0).first;
    const AffineRelaxation out = bp_step(V, l, target);
    for (const Vec& z : testkit::grid_points(rng, target, 60)) {
      const double e = f.truth(l, z);
      CHECK(out.lower_at(z)[0] <= e + 1e-9);
      CHECK(out.upper_at(z)[0] >= e - 1e-9);
    }
  }
}

TEST_CASE("bp_step is bit-identical serial and parallel") {
  testkit::Rng rng(57);
  const LayerPosterior l = random_layer(rng, 3, 40, false);
  const Box T = rng.box(3, 1, 0.5);
  const LayerPartition part = make_partition(l, 1, T, 0.01, 3, Orientation::outer);
  testkit::AbsValue f{rng.vec(40, -1, 1), rng.vec(40, -1, 1)};
  const ValueRelaxation V = f.value(part);
  const AffineRelaxation a = bp_step(V, l, T, Exec::serial), b = bp_step(V, l, T, Exec::parallel);
  CHECK(a.A_lo == b.A_lo);
  CHECK(a.A_hi == b.A_hi);
  CHECK(a.b_lo == b.b_lo);
  CHECK(a.b_hi == b.b_hi);
}

TEST_CASE("run_dp without hidden layers is the mean map") {
  testkit::Rng rng(58);
  const BnnModel m = testkit::random_model({3, 2}, 59);
  const Box T = rng.box(3, 1, 1);
  const DpResult r = run_dp(m, T, DpConfig{}, terminal_for(m));
  const Mat& W = m.layer(0).mean();
  CHECK(r.v0.A_lo == W.leftCols(3));
  CHECK(r.v0.A_hi == W.leftCols(3));
  CHECK(r.partitions.empty());
  CHECK(r.mass_chain == 1.0);
}

TEST_CASE("run_dp on deterministic nets contains the forward pass") {
  testkit::Rng rng(60);
  for (int t = 0; t < 4; ++t) {
    GenOptions go;
    go.widths = {2, 8, 8, 1};
    go.seed = 61 + std::uint64_t(t);
    go.var_ratio = 0.0;
    const BnnModel m = gen_model(go);
    const Box T = rng.box(2, 1, 0.4);
    const DpResult r = run_dp(m, T, DpConfig{}, terminal_for(m));
    const Weights w = sample_weights(m, 1);
    for (const Vec& x : testkit::grid_points(rng, T, 1000)) {
      const double y = mc_forward(m, w, x)[0];
      CHECK(r.v0.lower_at(x)[0] <= y + 1e-9);
      CHECK(r.v0.upper_at(x)[0] >= y - 1e-9);
    }
  }
}

TEST_CASE("run_dp brackets Monte Carlo on a 2-hidden-layer net") {
  testkit::Rng rng(62);
  const BnnModel m = testkit::random_model({2, 12, 12, 1}, 63, Task::regression, CovKind::diagonal, 0.05);
  const Box T = rng.box(2, 1, 0.2);
  DpConfig cfg;
  const DpResult r = run_dp(m, T, cfg, terminal_for(m));
  CHECK(r.partitions.size() == 1);
  int k = 0;
  for (const Vec& x : testkit::grid_points(rng, T, 20)) {
    const McEstimate e = mc_expectation(m, x, OutputMap::identity, 100000, 64 + std::uint64_t(k++));
    CHECK(r.v0.lower_at(x)[0] <= e.mean[0] + 4 * e.std_error[0]);
    CHECK(r.v0.upper_at(x)[0] >= e.mean[0] - 4 * e.std_error[0]);
  }
  // determinism
  const DpResult r2 = run_dp(m, T, cfg, terminal_for(m));
  CHECK(r.v0.A_lo == r2.v0.A_lo);
  CHECK(r.v0.b_hi == r2.v0.b_hi);
  cfg.exec = Exec::serial;
  const DpResult r3 = run_dp(m, T, cfg, terminal_for(m));
  CHECK(r.v0.A_hi == r3.v0.A_hi);
  CHECK(r.v0.b_lo == r3.v0.b_lo);
}

TEST_CASE("run_dp rejects bad queries") {
  const BnnModel m = testkit::random_model({2, 4, 1}, 65);
  CHECK_THROWS(run_dp(m, Box::ball(Vec::Zero(3), 0.1), DpConfig{}, terminal_for(m)));
  CHECK_THROWS(run_dp(m, Box::whole(2), DpConfig{}, terminal_for(m)));
}

}
