#pragma once

#include "bnndp/dp_engine.hpp"
#include "bnndp/gausskit.hpp"
#include "bnndp/layerprop.hpp"
#include "bnndp/mc_oracle.hpp"
#include "bnndp/model.hpp"
#include "bnndp/relaxcore.hpp"

#include <cmath>
#include <cstdint>
#include <random>

namespace testkit {

using bnndp::Box;
using bnndp::Index;
using bnndp::Mat;
using bnndp::Vec;

// mt19937_64 is fully specified; the std distributions are not, so map bits by hand.
struct Rng {
  std::mt19937_64 eng;
  explicit Rng(std::uint64_t seed) : eng(seed) {}
  double uniform() { return double(eng() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  long long integer(long long a, long long b) { return a + (long long)(eng() % std::uint64_t(b - a + 1)); }
  double normal() {
    double u = uniform();
    while (u <= 0) u = uniform();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(6.283185307179586 * uniform());
  }
  Vec vec(Index n, double a, double b) {
    Vec v(n);
    for (Index i = 0; i < n; ++i) v[i] = uniform(a, b);
    return v;
  }
  Mat mat(Index r, Index c, double a, double b) {
    Mat m(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) m(i, j) = uniform(a, b);
    return m;
  }
  Box box(Index n, double span, double max_width) {
    Vec lo = vec(n, -span, span);
    Vec hi = lo;
    for (Index i = 0; i < n; ++i) hi[i] += uniform(0.0, max_width);
    return Box(lo, hi);
  }
  Vec in_box(const Box& b) {
    Vec v(b.dim());
    for (Index i = 0; i < b.dim(); ++i) v[i] = uniform(b.lower(i), b.upper(i));
    return v;
  }
  Vec vertex(const Box& b) {
    Vec v(b.dim());
    for (Index i = 0; i < b.dim(); ++i) v[i] = uniform() < 0.5 ? b.lower(i) : b.upper(i);
    return v;
  }
};

// Random points of a box: all vertices when cheap, then uniform interior points.
inline std::vector<Vec> grid_points(Rng& rng, const Box& b, int count) {
  std::vector<Vec> pts;
  const Index n = b.dim();
  if (n <= 8) {
    for (long long mask = 0; mask < (1LL << n) && int(pts.size()) < count / 2; ++mask) {
      Vec v(n);
      for (Index i = 0; i < n; ++i) v[i] = (mask >> i) & 1 ? b.upper(i) : b.lower(i);
      pts.push_back(v);
    }
  }
  pts.push_back(b.center());
  while (int(pts.size()) < count) pts.push_back(rng.in_box(b));
  return pts;
}

inline bnndp::BnnModel random_model(std::vector<Index> widths, std::uint64_t seed,
                                    bnndp::Task task = bnndp::Task::regression,
                                    bnndp::CovKind cov = bnndp::CovKind::diagonal, double var_ratio = 1.0) {
  bnndp::GenOptions go;
  go.widths = std::move(widths);
  go.seed = seed;
  go.task = task;
  go.covariance = cov;
  go.var_ratio = var_ratio;
  return bnndp::gen_model(go);
}

// V(y) = sum_i w_i |y_i - c_i| on post-activation space, relaxed piecewise on a
// partition of the layer output. The exact expectation through one layer is a
// sum of 1-D integrals, so it serves as a quadrature truth for bp_step.
struct AbsValue {
  Vec w, c;

  static std::pair<bnndp::AffineRow, bnndp::AffineRow> relax_1d(double a, double b, double c) {
    bnndp::AffineRow lo{Vec::Zero(1), 0.0}, hi{Vec::Zero(1), 0.0};
    if (c <= a) lo = {Vec::Constant(1, 1.0), -c};
    else if (c >= b) lo = {Vec::Constant(1, -1.0), c};
    const double fa = std::abs(a - c), fb = std::abs(b - c);
    const double k = b > a ? (fb - fa) / (b - a) : 0.0;
    hi = {Vec::Constant(1, k), fa - k * a};
    return {lo, hi};
  }

  bnndp::AffineRelaxation relax_on(const Box& post) const {
    const Index n = w.size();
    Mat Alo = Mat::Zero(1, n), Ahi = Mat::Zero(1, n);
    double blo = 0, bhi = 0;
    for (Index i = 0; i < n; ++i) {
      const auto [lo, hi] = relax_1d(post.lower(i), post.upper(i), c[i]);
      const auto& L = w[i] >= 0 ? lo : hi;
      const auto& U = w[i] >= 0 ? hi : lo;
      Alo(0, i) = w[i] * L.coef[0];
      blo += w[i] * L.offset;
      Ahi(0, i) = w[i] * U.coef[0];
      bhi += w[i] * U.offset;
    }
    return bnndp::AffineRelaxation(Alo, Vec::Constant(1, blo), Ahi, Vec::Constant(1, bhi));
  }

  bnndp::ValueRelaxation value(const bnndp::LayerPartition& part) const {
    std::vector<bnndp::AffineRelaxation> rel;
    for (const Box& b : part.post_pieces()) rel.push_back(relax_on(b));
    return bnndp::assemble_value(part, std::move(rel), w.cwiseAbs().transpose(), std::nullopt);
  }

  // E[V(phi(W (z,1)))] by quadrature, or by the closed-form rectified mean
  double truth(const bnndp::LayerPosterior& layer, const Vec& z, bool quadrature = true) const {
    using bnndp::QuadKernel;
    using bnndp::quad_kernel;
    const Vec m = layer.means_at(z);
    double total = 0.0;
    for (Index i = 0; i < w.size(); ++i) {
      const double mu = m[i], sg = std::sqrt(std::max(0.0, layer.variance_at(i, z))), ci = c[i];
      auto rect = [&](double shift, double sign) {
        // E[relu(sign*zeta + shift)]
        if (!quadrature) return bnndp::gauss::rect_mean({sign * mu + shift, sg});
        return quad_kernel(QuadKernel::relu_moment, sign * mu + shift, sg, -bnndp::kInf, bnndp::kInf);
      };
      double e;
      if (layer.activation() == bnndp::Activation::identity) e = rect(-ci, 1) + rect(ci, -1);
      else if (ci <= 0) e = rect(0, 1) - ci;
      else e = rect(0, 1) - ci + 2.0 * (rect(ci, -1) - rect(0, -1));
      total += w[i] * e;
    }
    return total;
  }
};

}  // namespace testkit
