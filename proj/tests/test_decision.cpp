#include "bnndp/decision.hpp"
#include "bnndp/mc_oracle.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace bnndp;

namespace {

Vec softmax(const Vec& z) {
  const Vec e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

}  // namespace

TEST_SUITE("decision") {

TEST_CASE("log_sum_exp") {
  Vec v(3);
  v << 1000.0, 1000.0, -kInf;
  CHECK(log_sum_exp(v) == doctest::Approx(1000.0 + std::log(2.0)));
  CHECK(log_sum_exp(Vec::Constant(2, -kInf)) == -kInf);
  CHECK(log_sum_exp(Vec()) == -kInf);
}

TEST_CASE("ibp_softmax on points and symmetric boxes") {
  Vec z(3);
  z << 0.3, -1.2, 2.0;
  const Interval p = ibp_softmax(Box::point(z));
  const Vec s = softmax(z);
  CHECK((p.lo - s).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((p.hi - s).cwiseAbs().maxCoeff() < 1e-15);
  const Interval h = ibp_softmax(Box::point(Vec::Zero(2)));
  CHECK(h.lo[0] == 0.5);
  CHECK(h.hi[1] == 0.5);
  // extreme logits stay finite
  z << 800.0, -800.0, 0.0;
  const Interval e = ibp_softmax(Box::ball(z, 1.0));
  CHECK(std::isfinite(e.lo.sum()));
  CHECK(e.hi[0] == doctest::Approx(1.0));
  CHECK_THROWS(ibp_softmax(Box::whole(2)));
}

TEST_CASE("ibp_softmax contains softmax on random boxes") {
  testkit::Rng rng(71);
  for (int t = 0; t < 50; ++t) {
    const Box b = rng.box(3, 3, 2);
    const Interval iv = ibp_softmax(b);
    CHECK(iv.lo.minCoeff() >= 0.0);
    CHECK(iv.hi.maxCoeff() <= 1.0);
    CHECK(iv.lo.sum() <= 1.0 + 1e-15);
    CHECK(iv.hi.sum() >= 1.0 - 1e-15);
    for (const Vec& z : testkit::grid_points(rng, b, 1000)) CHECK(iv.contains(softmax(z), 1e-15));
  }
}

TEST_CASE("logit_margin_check examples") {
  Vec lo(2), hi(2);
  lo << 3.0, 0.0;
  hi << 4.0, 2.0;
  const Box b(lo, hi);
  CHECK(logit_margin_check(b, 1.0, 0, 1));
  CHECK_FALSE(logit_margin_check(b, 1.0, 1, 0));
  const Box flat = Box::point(Vec::Zero(3));
  CHECK_FALSE(logit_margin_check(flat, 0.5, 0, 1));
  CHECK_THROWS(logit_margin_check(b, 0.0, 0, 1));
  // huge logits in log domain
  lo << 1000.0, 0.0;
  hi << 1001.0, 1.0;
  CHECK(logit_margin_check(Box(lo, hi), 0.99, 0, 1));
}

TEST_CASE("logit_margin_check is monotone in p") {
  testkit::Rng rng(72);
  for (int t = 0; t < 500; ++t) {
    const Box b = rng.box(3, 5, 2);
    const double p = rng.uniform(0.5, 1.0);
    if (logit_margin_check(b, p, 0, 1)) {
      CHECK(logit_margin_check(b, std::min(1.0, p + rng.uniform(0, 0.5)), 0, 1));
    }
  }
}

TEST_CASE("regression terminal is the output mean map") {
  const BnnModel m = testkit::random_model({2, 5, 2}, 73);
  const Terminal t = regression_terminal(m);
  CHECK(t.layer == 1);
  CHECK_FALSE(t.needs_output_partition);
  CHECK_FALSE(t.clamp.has_value());
  const ValueRelaxation V = t.build(nullptr);
  CHECK(V.whole_space);
  CHECK(V.relax[0].A_lo == m.layer(1).mean().leftCols(5));
  CHECK(V.relax[0].b_hi == m.layer(1).mean().col(5));
  // sampled output layer averages to the same map
  const WeightSampler sampler(m);
  Weights w;
  testkit::Rng rng(74);
  const Vec z = rng.vec(5, 0, 1);
  Vec aug(6);
  aug << z, 1.0;
  const int N = 100000;
  Vec sum = Vec::Zero(2), sq = Vec::Zero(2);
  for (int d = 0; d < N; ++d) {
    sampler.sample_into(75, std::uint32_t(d), w);
    const Vec y = w[1] * aug;
    sum += y;
    sq += y.cwiseAbs2();
  }
  const Vec mean = sum / N;
  const Vec se = ((sq / N - mean.cwiseAbs2()) / N).cwiseSqrt();
  CHECK(((mean - V.relax[0].lower_at(z)).cwiseAbs() - 4 * se).maxCoeff() <= 0.0);
}

TEST_CASE("softmax terminal pieces use interval bounds") {
  const BnnModel m = testkit::random_model({2, 6, 3}, 76, Task::classification);
  const Terminal t = softmax_terminal(m);
  CHECK(t.layer == 2);
  CHECK(t.needs_output_partition);
  REQUIRE(t.clamp.has_value());
  CHECK_THROWS(t.build(nullptr));
  const LayerPartition part = make_partition(m.layer(1), 2, Box(Vec::Zero(6), Vec::Ones(6)), 0.01, 3, Orientation::outer);
  const ValueRelaxation V = t.build(&part);
  REQUIRE(V.relax.size() == part.pieces.size());
  for (size_t j = 0; j < V.relax.size(); ++j) {
    const Interval iv = ibp_softmax(part.pieces[j]);
    CHECK(V.relax[j].b_lo == iv.lo);
    CHECK(V.relax[j].b_hi == iv.hi);
  }
}

}
