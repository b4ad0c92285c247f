#include "bnndp/certify.hpp"

#include "bnndp/decision.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace bnndp {

Box query_box(const Query& q) {
  if (!(q.radius >= 0) || !std::isfinite(q.radius)) throw std::invalid_argument("query radius must be finite and >= 0");
  return Box::ball(q.center, q.radius);
}

const char* to_string(Verdict v) { return v == Verdict::robust ? "robust" : "not-certified"; }

BoundResult bound_expectation(const BnnModel& m, const Box& T, const DpConfig& cfg) {
  BoundResult r;
  r.dp = run_dp(m, T, cfg, terminal_for(m));
  r.bounds = r.dp.bounds;
  return r;
}

namespace {

double p_norm(const Vec& v, double p) {
  if (std::isinf(p)) return v.cwiseAbs().maxCoeff();
  if (p == 1.0) return v.cwiseAbs().sum();
  return std::pow(v.cwiseAbs().array().pow(p).sum(), 1.0 / p);
}

void fill_common(Certificate& c, const Query& q, const BnnModel& m, BoundResult&& br) {
  c.query = q;
  c.task = m.task();
  c.bounds = br.bounds;
  c.v0 = br.dp.v0;
  c.partitions = std::move(br.dp.partitions);
  c.mass_chain = br.dp.mass_chain;
}

}  // namespace

Vec gamma_robustness(const BnnModel& m, const Query& q, const DpConfig& cfg) {
  const BoundResult br = bound_expectation(m, query_box(q), cfg);
  return (br.bounds.hi - br.bounds.lo).cwiseMax(0.0);
}

Index center_class(const BnnModel& m, const Vec& x, const DpConfig& cfg, Interval* bounds) {
  if (m.task() != Task::classification) throw std::invalid_argument("center_class: classification model required");
  BoundResult br = bound_expectation(m, Box::point(x), cfg);
  if (bounds) *bounds = br.bounds;
  Index best = 0;
  for (Index i = 1; i < br.bounds.dim(); ++i)
    if (br.bounds.lo[i] > br.bounds.lo[best]) best = i;
  const Box& out_main = br.dp.partitions.back().main;
  for (Index j = 0; j < br.bounds.dim(); ++j) {
    if (j == best) continue;
    const bool separated = br.bounds.hi[j] < br.bounds.lo[best];
    const bool margin = br.dp.mass_chain > 0 && logit_margin_check(out_main, br.dp.mass_chain, best, j);
    if (!separated && !margin) return -1;
  }
  return best;
}

Certificate check_classification_robust(const BnnModel& m, const Query& q, const DpConfig& cfg) {
  if (m.task() != Task::classification) throw std::invalid_argument("classification check on a regression model");
  const auto t0 = std::chrono::steady_clock::now();
  Certificate c;
  Index cls = -1;
  if (q.class_override) {
    cls = *q.class_override;
    if (cls < 0 || cls >= m.output_dim()) throw std::invalid_argument("class override out of range");
  } else {
    cls = center_class(m, q.center, cfg);
  }
  fill_common(c, q, m, bound_expectation(m, query_box(q), cfg));
  c.predicted_class = cls;
  c.pair_methods.assign(size_t(m.output_dim()), "");
  if (cls < 0) {
    c.verdict = Verdict::not_certified;
    c.reason = "ambiguous center";
  } else {
    const Box& out_main = c.partitions.back().main;
    bool ok = true;
    for (Index j = 0; j < m.output_dim(); ++j) {
      if (j == cls) {
        c.pair_methods[size_t(j)] = "predicted";
        continue;
      }
      if (c.mass_chain > 0 && logit_margin_check(out_main, c.mass_chain, cls, j)) {
        c.pair_methods[size_t(j)] = "logit-margin";
      } else if (c.bounds.hi[j] < c.bounds.lo[cls]) {
        c.pair_methods[size_t(j)] = "bounds";
      } else {
        c.pair_methods[size_t(j)] = "open";
        ok = false;
      }
    }
    c.verdict = ok ? Verdict::robust : Verdict::not_certified;
    c.reason = ok ? "decision invariant on the query box" : "class intervals overlap";
  }
  c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return c;
}

Certificate check_regression_robust(const BnnModel& m, const Query& q, const DpConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  Certificate c;
  fill_common(c, q, m, bound_expectation(m, query_box(q), cfg));
  c.gamma = (c.bounds.hi - c.bounds.lo).cwiseMax(0.0);
  c.gamma_norm = p_norm(c.gamma, q.norm_p);
  if (!q.gamma) {
    c.verdict = Verdict::not_certified;
    c.reason = "no gamma threshold given";
  } else if (c.gamma_norm <= *q.gamma) {
    c.verdict = Verdict::robust;
    c.reason = "gamma-robust";
  } else {
    c.verdict = Verdict::not_certified;
    c.reason = "bound width exceeds gamma";
  }
  c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return c;
}

Certificate certify(const BnnModel& m, const Query& q, const DpConfig& cfg) {
  return m.task() == Task::classification ? check_classification_robust(m, q, cfg) : check_regression_robust(m, q, cfg);
}

RadiusResult max_certified_radius(const BnnModel& m, const Query& q0, const DpConfig& cfg, double tol) {
  if (!(tol > 0)) throw std::invalid_argument("radius search tolerance must be positive");
  RadiusResult res;
  Query q = q0;
  if (m.task() == Task::classification) {
    if (!q.class_override) {
      const Index cls = center_class(m, q.center, cfg);
      res.predicted_class = cls;
      if (cls < 0) return res;
      q.class_override = cls;
    } else {
      res.predicted_class = *q.class_override;
    }
  } else if (!q.gamma) {
    throw std::invalid_argument("regression radius search needs a gamma threshold");
  }
  auto certified = [&](double r) {
    q.radius = r;
    ++res.evaluations;
    return certify(m, q, cfg).verdict == Verdict::robust;
  };
  if (!certified(0.0)) return res;
  double lo = 0.0, hi = 1e-3;
  for (;;) {
    if (!certified(hi)) break;
    lo = hi;
    if (hi >= 1.0) {
      res.radius = res.bracket_hi = 1.0;
      return res;
    }
    hi = std::min(2.0 * hi, 1.0);
  }
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (certified(mid)) lo = mid;
    else hi = mid;
  }
  res.radius = lo;
  res.bracket_hi = hi;
  return res;
}

}  // namespace bnndp
