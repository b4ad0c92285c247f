#include "bnndp/mc_oracle.hpp"

#include "bnndp/certify.hpp"
#include "bnndp/rng.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bnndp {

namespace {

constexpr long long kChunk = 4096;      // local mode, samples per stream
constexpr long long kDrawChunk = 256;   // weights mode, draws per reduction slot
constexpr std::uint32_t kLocalTag = 0x6c6f6361u;

struct Moments {
  long long n = 0;
  Vec mean;
  Mat m2;

  static Moments of_rows(const Mat& Y) {
    Moments s;
    s.n = Y.rows();
    s.mean = Y.colwise().mean().transpose();
    const Mat c = Y.rowwise() - s.mean.transpose();
    s.m2 = c.transpose() * c;
    return s;
  }

  // Chan et al. pairwise merge; order of merges is fixed by the caller.
  void merge(const Moments& o) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    const double na = double(n), nb = double(o.n), nt = na + nb;
    const Vec d = o.mean - mean;
    mean += d * (nb / nt);
    m2 += o.m2 + d * d.transpose() * (na * nb / nt);
    n += o.n;
  }

  McEstimate finish(std::uint64_t seed) const {
    McEstimate e;
    e.n = n;
    e.seed = seed;
    e.mean = mean;
    e.covariance = n > 1 ? Mat(m2 / double(n - 1)) : Mat::Zero(m2.rows(), m2.cols());
    e.std_error = (e.covariance.diagonal().cwiseMax(0.0) / double(std::max<long long>(n, 1))).cwiseSqrt();
    return e;
  }
};

void apply_rows(OutputMap h, Mat& Y) {
  if (h == OutputMap::identity) return;
  for (Index r = 0; r < Y.rows(); ++r) {
    const double mx = Y.row(r).maxCoeff();
    Y.row(r) = (Y.row(r).array() - mx).exp();
    Y.row(r) /= Y.row(r).sum();
  }
}

void relu_inplace(Mat& Z) { Z = Z.cwiseMax(0.0); }

// b samples of f(x) by layerwise conditional sampling
Mat local_chunk(const BnnModel& m, const Vec& x, long long b, NormalStream& rng) {
  Mat Z = x.transpose().replicate(b, 1);
  for (const LayerPosterior& l : m.layers()) {
    const Index n = l.in_dim();
    Mat Za(b, n + 1);
    Za.leftCols(n) = Z;
    Za.col(n).setOnes();
    Mat M = Za * l.mean().transpose();
    Mat S(b, l.out_dim());
    if (l.kind() == CovKind::diagonal) {
      S = Za.cwiseAbs2() * l.marginal_variance().transpose();
    } else {
      for (Index i = 0; i < l.out_dim(); ++i) S.col(i) = (Za * l.factor(i)).rowwise().squaredNorm();
    }
    for (Index r = 0; r < b; ++r)
      for (Index i = 0; i < l.out_dim(); ++i) M(r, i) += std::sqrt(std::max(S(r, i), 0.0)) * rng.normal();
    if (l.activation() == Activation::relu) relu_inplace(M);
    Z = std::move(M);
  }
  return Z;
}

void check_input(const BnnModel& m, const Vec& x, long long n) {
  if (x.size() != m.input_dim()) throw std::invalid_argument("mc: input dimension mismatch");
  if (n <= 0) throw std::invalid_argument("mc: sample count must be positive");
}

}  // namespace

std::pair<double, double> McEstimate::contrast(Index j, Index i) const {
  const double v = covariance(j, j) + covariance(i, i) - 2.0 * covariance(i, j);
  return {mean[j] - mean[i], std::sqrt(std::max(v, 0.0) / double(std::max<long long>(n, 1)))};
}

Vec mc_forward(const BnnModel& m, const Weights& w, const Vec& x) {
  Vec z = x;
  for (size_t k = 0; k < w.size(); ++k) {
    const Index n = w[k].cols() - 1;
    Vec zeta = w[k].leftCols(n) * z + w[k].col(n);
    if (m.layers()[k].activation() == Activation::relu) zeta = zeta.cwiseMax(0.0);
    z = std::move(zeta);
  }
  return z;
}

McEstimate mc_expectation(const BnnModel& m, const Vec& x, OutputMap h, long long n, std::uint64_t seed, Exec exec,
                          McMode mode) {
  check_input(m, x, n);
  if (mode == McMode::weights) return mc_expectation_multi(m, {x}, h, n, seed, exec).front();
  const long long chunks = (n + kChunk - 1) / kChunk;
  std::vector<Moments> part(static_cast<size_t>(chunks));
  const bool par = exec == Exec::parallel;
#pragma omp parallel for schedule(dynamic) if (par)
  for (long long c = 0; c < chunks; ++c) {
    const long long b = std::min(kChunk, n - c * kChunk);
    NormalStream rng(seed, static_cast<std::uint32_t>(c), kLocalTag);
    Mat Y = local_chunk(m, x, b, rng);
    apply_rows(h, Y);
    part[size_t(c)] = Moments::of_rows(Y);
  }
  Moments total;
  for (const Moments& p : part) total.merge(p);
  return total.finish(seed);
}

std::vector<McEstimate> mc_expectation_multi(const BnnModel& m, const std::vector<Vec>& xs, OutputMap h, long long n,
                                             std::uint64_t seed, Exec exec) {
  if (xs.empty()) return {};
  for (const Vec& x : xs) check_input(m, x, n);
  const Index P = Index(xs.size());
  Mat X(m.input_dim(), P);
  for (Index p = 0; p < P; ++p) X.col(p) = xs[size_t(p)];
  const long long chunks = (n + kDrawChunk - 1) / kDrawChunk;
  const Index l = m.output_dim();
  std::vector<std::vector<Moments>> part(static_cast<size_t>(chunks));
  const WeightSampler sampler(m);
  const bool par = exec == Exec::parallel;
#pragma omp parallel for schedule(dynamic) if (par)
  for (long long c = 0; c < chunks; ++c) {
    const long long b = std::min(kDrawChunk, n - c * kDrawChunk);
    std::vector<Mat> Y(size_t(P), Mat(b, l));
    Weights w;
    for (long long d = 0; d < b; ++d) {
      sampler.sample_into(seed, static_cast<std::uint32_t>(c * kDrawChunk + d), w);
      Mat Z = X;
      for (size_t k = 0; k < w.size(); ++k) {
        const Index ni = w[k].cols() - 1;
        Mat zeta = w[k].leftCols(ni) * Z;
        zeta.colwise() += w[k].col(ni);
        if (m.layers()[k].activation() == Activation::relu) relu_inplace(zeta);
        Z = std::move(zeta);
      }
      for (Index p = 0; p < P; ++p) Y[size_t(p)].row(d) = Z.col(p).transpose();
    }
    auto& slot = part[size_t(c)];
    slot.resize(size_t(P));
    for (Index p = 0; p < P; ++p) {
      apply_rows(h, Y[size_t(p)]);
      slot[size_t(p)] = Moments::of_rows(Y[size_t(p)]);
    }
  }
  std::vector<McEstimate> out;
  out.reserve(size_t(P));
  for (Index p = 0; p < P; ++p) {
    Moments total;
    for (const auto& slot : part) total.merge(slot[size_t(p)]);
    out.push_back(total.finish(seed));
  }
  return out;
}

double quad_kernel(QuadKernel k, double mu, double sigma, double a, double b) {
  if (!(sigma >= 0) || !std::isfinite(mu) || !std::isfinite(sigma)) throw std::invalid_argument("quad_kernel: bad parameters");
  if (a > b) throw std::invalid_argument("quad_kernel: a > b");
  auto phi = [k](double z) {
    switch (k) {
      case QuadKernel::density: return 1.0;
      case QuadKernel::first_moment: return z;
      case QuadKernel::relu_moment: return z > 0 ? z : 0.0;
    }
    return 0.0;
  };
  if (sigma == 0) return (mu >= a && mu <= b) ? phi(mu) : 0.0;
  const double lo = std::max(a, mu - 40 * sigma), hi = std::min(b, mu + 40 * sigma);
  if (!(lo < hi)) return 0.0;
  std::vector<double> cuts{lo, hi};
  for (double s : {-16.0, -8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0, 16.0}) cuts.push_back(mu + s * sigma);
  cuts.push_back(0.0);
  std::sort(cuts.begin(), cuts.end());
  const double c = 1.0 / (sigma * std::sqrt(2.0 * std::numbers::pi));
  auto f = [&](double z) {
    const double t = (z - mu) / sigma;
    return phi(z) * c * std::exp(-0.5 * t * t);
  };
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  double sum = 0.0;
  for (size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double u = std::max(cuts[i], lo), v = std::min(cuts[i + 1], hi);
    if (!(u < v)) continue;
    sum += GK::integrate(f, u, v, 12, 1e-14);
  }
  return sum;
}

nlohmann::ordered_json soundness_audit(const AuditFamily& fam, int trials, std::uint64_t seed, Exec exec,
                                       bool timing) {
  using clock = std::chrono::steady_clock;
  using nlohmann::ordered_json;
  if (trials < 0) throw std::invalid_argument("audit: trials must be >= 0");
  if (fam.min_hidden < 1 || fam.max_hidden < fam.min_hidden || fam.min_width < 1 || fam.max_width < fam.min_width ||
      fam.min_input < 1 || fam.max_input < fam.min_input || fam.outputs < 1 || fam.points < 1 || fam.samples < 2 ||
      !(fam.min_var_ratio > 0) || fam.max_var_ratio < fam.min_var_ratio)
    throw std::invalid_argument("audit: inconsistent family");
  if (fam.task == Task::classification && fam.outputs < 2) throw std::invalid_argument("audit: classifier needs >= 2 outputs");

  const auto t_start = clock::now();
  ordered_json records = ordered_json::array();
  ordered_json times = ordered_json::array();
  long long violations = 0, checks = 0;
  double gap_sum = 0.0;
  const OutputMap h = fam.task == Task::classification ? OutputMap::softmax : OutputMap::identity;

  for (int t = 0; t < trials; ++t) {
    NormalStream rng(seed, static_cast<std::uint32_t>(t), 0x61756474u);
    auto pick = [&](long long lo, long long hi) { return lo + std::min<long long>(hi - lo, (long long)(rng.uniform() * double(hi - lo + 1))); };
    const bool full = fam.full_every > 0 && t % fam.full_every == fam.full_every - 1;
    const Index wmax = full ? std::min(fam.max_width, fam.max_full_width) : fam.max_width;
    const Index wmin = std::min(fam.min_width, wmax);
    const int hidden = int(pick(fam.min_hidden, fam.max_hidden));
    GenOptions go;
    go.widths.push_back(Index(pick(fam.min_input, fam.max_input)));
    for (int k = 0; k < hidden; ++k) go.widths.push_back(Index(pick(wmin, wmax)));
    go.widths.push_back(fam.outputs);
    go.scale = fam.scale;
    go.var_ratio = fam.min_var_ratio * std::pow(fam.max_var_ratio / fam.min_var_ratio, rng.uniform());
    go.task = fam.task;
    go.covariance = full ? CovKind::full : CovKind::diagonal;
    go.seed = static_cast<std::uint64_t>(rng.uniform() * 9007199254740992.0);
    const BnnModel model = gen_model(go);

    const Index d = model.input_dim();
    Vec center(d);
    for (Index i = 0; i < d; ++i) center[i] = 2.0 * rng.uniform() - 1.0;
    const double radius = fam.min_radius + (fam.max_radius - fam.min_radius) * rng.uniform();
    std::vector<Vec> pts{center};
    for (int p = 1; p < fam.points; ++p) {
      Vec v(d);
      for (Index i = 0; i < d; ++i) v[i] = center[i] + (rng.uniform() < 0.5 ? -radius : radius);
      pts.push_back(v);
    }

    DpConfig cfg;
    cfg.mass_epsilon = fam.mass_epsilon;
    cfg.exec = exec;
    const auto t0 = clock::now();
    const Interval bounds = bound_expectation(model, Box::ball(center, radius), cfg).bounds;
    const auto t1 = clock::now();

    int trial_viol = 0;
    double worst = kInf;  // smallest slack in units of the standard error
    ordered_json mc = ordered_json::array();
    for (size_t p = 0; p < pts.size(); ++p) {
      const std::uint64_t mc_seed = seed ^ (std::uint64_t(t) << 32) ^ (std::uint64_t(p) << 16) ^ 0x5eedULL;
      const McEstimate e = mc_expectation(model, pts[p], h, fam.samples, mc_seed, exec, McMode::local);
      for (Index o = 0; o < e.mean.size(); ++o) {
        const double se = e.std_error[o];
        const double tol = fam.sigmas * se + 1e-12 * (1.0 + std::abs(e.mean[o]));
        const bool bad = e.mean[o] < bounds.lo[o] - tol || e.mean[o] > bounds.hi[o] + tol;
        trial_viol += bad;
        ++checks;
        const double slack = std::min(e.mean[o] - bounds.lo[o], bounds.hi[o] - e.mean[o]);
        worst = std::min(worst, se > 0 ? slack / se : (slack >= 0 ? kInf : -kInf));
      }
      mc.push_back({{"mean", std::vector<double>(e.mean.begin(), e.mean.end())},
                    {"std_error", std::vector<double>(e.std_error.begin(), e.std_error.end())}});
    }
    const auto t2 = clock::now();

    const double gap = (bounds.hi - bounds.lo).mean();
    gap_sum += gap;
    violations += trial_viol;
    ordered_json rec;
    rec["trial"] = t;
    rec["widths"] = std::vector<long long>(go.widths.begin(), go.widths.end());
    rec["covariance"] = to_string(go.covariance);
    rec["model_seed"] = go.seed;
    rec["var_ratio"] = go.var_ratio;
    rec["center"] = std::vector<double>(center.begin(), center.end());
    rec["radius"] = radius;
    rec["lower"] = std::vector<double>(bounds.lo.begin(), bounds.lo.end());
    rec["upper"] = std::vector<double>(bounds.hi.begin(), bounds.hi.end());
    rec["mc"] = std::move(mc);
    rec["violations"] = trial_viol;
    rec["mean_gap"] = gap;
    rec["min_slack_sigmas"] = std::isfinite(worst) ? ordered_json(worst) : ordered_json(nullptr);
    records.push_back(std::move(rec));
    times.push_back({{"trial", t},
                     {"bound_seconds", std::chrono::duration<double>(t1 - t0).count()},
                     {"mc_seconds", std::chrono::duration<double>(t2 - t1).count()}});
  }

  ordered_json rep;
  rep["schema"] = "bnn-dp-audit/v1";
  rep["engine_version"] = kEngineVersion;
  rep["seed"] = seed;
  rep["family"] = {{"hidden", {fam.min_hidden, fam.max_hidden}},
                   {"width", {fam.min_width, fam.max_width}},
                   {"input", {fam.min_input, fam.max_input}},
                   {"outputs", fam.outputs},
                   {"task", to_string(fam.task)},
                   {"full_every", fam.full_every},
                   {"max_full_width", fam.max_full_width},
                   {"scale", fam.scale},
                   {"var_ratio", {fam.min_var_ratio, fam.max_var_ratio}},
                   {"radius", {fam.min_radius, fam.max_radius}},
                   {"points", fam.points},
                   {"samples", fam.samples},
                   {"sigmas", fam.sigmas},
                   {"mass_epsilon", fam.mass_epsilon}};
  rep["trials"] = trials;
  rep["checks"] = checks;
  rep["violations"] = violations;
  rep["mean_gap"] = trials > 0 ? gap_sum / trials : 0.0;
  rep["records"] = std::move(records);
  if (timing) {
    rep["timing"] = {{"total_seconds", std::chrono::duration<double>(clock::now() - t_start).count()},
                     {"trials", std::move(times)}};
  }
  return rep;
}

}  // namespace bnndp
