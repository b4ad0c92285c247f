#include "bnndp/gausskit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bnndp::gauss {

namespace {

constexpr double kSqrt2 = std::numbers::sqrt2;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kSqrtPiOver2 = 1.25331413731550025121;
constexpr double k2OverSqrtPi = 1.12837916709551257390;

// Cody's rational Chebyshev approximations, jint: 0 erf, 1 erfc, 2 erfcx.
double calerf(double x, int jint) {
  static constexpr double a[5] = {3.1611237438705656, 113.864154151050156, 377.485237685302021,
                                  3209.37758913846947, .185777706184603153};
  static constexpr double b[4] = {23.6012909523441209, 244.024637934444173, 1282.61652607737228,
                                  2844.23683343917062};
  static constexpr double c[9] = {.564188496988670089, 8.88314979438837594, 66.1191906371416295,
                                  298.635138197400131, 881.95222124176909,  1712.04761263407058,
                                  2051.07837782607147, 1230.33935479799725, 2.15311535474403846e-8};
  static constexpr double d[8] = {15.7449261107098347, 117.693950891312499, 537.181101862009858,
                                  1621.38957456669019, 3290.79923573345963, 4362.61909014324716,
                                  3439.36767414372164, 1230.33935480374942};
  static constexpr double p[6] = {.305326634961232344,    .360344899949804439,  .125781726111229246,
                                  .0160837851487422766,   6.58749161529837803e-4, .0163153871373020978};
  static constexpr double q[5] = {2.56852019228982242, 1.87295284992346047, .527905102951428412,
                                  .0605183413124413191, .00233520497626869185};
  constexpr double sqrpi = 0.56418958354775628695;
  constexpr double thresh = 0.46875;
  constexpr double xneg = -26.628, xsmall = 1.11e-16, xbig = 26.543, xhuge = 6.71e7, xmax = 2.53e307;

  if (std::isnan(x)) return x;
  const double y = std::abs(x);
  double result;
  // exp(-y*y) split so that the rounding of y*y does not leak into the tail
  auto scaled_exp = [](double v) {
    const double vsq = std::trunc(v * 16.0) / 16.0;
    const double del = (v - vsq) * (v + vsq);
    return std::exp(-vsq * vsq) * std::exp(-del);
  };

  if (y <= thresh) {
    const double ysq = y > xsmall ? y * y : 0.0;
    double xnum = a[4] * ysq, xden = ysq;
    for (int i = 0; i < 3; ++i) {
      xnum = (xnum + a[i]) * ysq;
      xden = (xden + b[i]) * ysq;
    }
    result = x * (xnum + a[3]) / (xden + b[3]);
    if (jint != 0) result = 1.0 - result;
    if (jint == 2) result *= std::exp(ysq);
    return result;
  }
  if (y <= 4.0) {
    double xnum = c[8] * y, xden = y;
    for (int i = 0; i < 7; ++i) {
      xnum = (xnum + c[i]) * y;
      xden = (xden + d[i]) * y;
    }
    result = (xnum + c[7]) / (xden + d[7]);
    if (jint != 2) result *= scaled_exp(y);
  } else {
    result = 0.0;
    bool done = false;
    if (y >= xbig) {
      if (jint != 2 || y >= xmax) done = true;
      else if (y >= xhuge) {
        result = sqrpi / y;
        done = true;
      }
    }
    if (!done) {
      const double ysq = 1.0 / (y * y);
      double xnum = p[5] * ysq, xden = ysq;
      for (int i = 0; i < 4; ++i) {
        xnum = (xnum + p[i]) * ysq;
        xden = (xden + q[i]) * ysq;
      }
      result = ysq * (xnum + p[4]) / (xden + q[4]);
      result = (sqrpi - result) / y;
      if (jint != 2) result *= scaled_exp(y);
    }
  }
  if (jint == 0) {
    result = (0.5 - result) + 0.5;
    if (x < 0) result = -result;
  } else if (jint == 1) {
    if (x < 0) result = 2.0 - result;
  } else if (x < 0) {
    if (x < xneg) return std::numeric_limits<double>::max();
    const double e = 1.0 / scaled_exp(x);
    result = e + e - result;
  }
  return result;
}

// Single-precision quality starting point (Giles), refined below.
double erfinv_seed(double w_log, double x) {
  double w = w_log, p;
  if (w < 5.0) {
    w -= 2.5;
    p = 2.81022636e-08;
    p = 3.43273939e-07 + p * w;
    p = -3.5233877e-06 + p * w;
    p = -4.39150654e-06 + p * w;
    p = 0.00021858087 + p * w;
    p = -0.00125372503 + p * w;
    p = -0.00417768164 + p * w;
    p = 0.246640727 + p * w;
    p = 1.50140941 + p * w;
  } else {
    w = std::sqrt(w) - 3.0;
    p = -0.000200214257;
    p = 0.000100950558 + p * w;
    p = 0.00134934322 + p * w;
    p = -0.00367342844 + p * w;
    p = 0.00573950773 + p * w;
    p = -0.0076224613 + p * w;
    p = 0.00943887047 + p * w;
    p = 1.00167406 + p * w;
    p = 2.83297682 + p * w;
  }
  return p * x;
}

double phi_at(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

// Output widening for kernel enclosures: covers the rounding of the
// closed forms (erf to ~1e-16, a handful of flops on top).
Range widen_prob(Range r) {
  r = widen(r, 1e-15, 1e-14);
  return {std::clamp(r.lo, 0.0, 1.0), std::clamp(r.hi, 0.0, 1.0)};
}

Range widen_scaled(Range r, double scale) {
  const double e = 1e-14 * (scale + std::max(std::abs(r.lo), std::abs(r.hi)));
  return {r.lo - e, r.hi + e};
}

double mag(Range r) { return std::max(std::abs(r.lo), std::abs(r.hi)); }

}  // namespace

double erf(double x) { return calerf(x, 0); }
double erfc(double x) { return calerf(x, 1); }
double erfcx(double x) { return calerf(x, 2); }

double erfinv(double p) {
  if (std::isnan(p) || p < -1.0 || p > 1.0) throw std::domain_error("erfinv: argument outside [-1,1]");
  if (p == 1.0) return kInf;
  if (p == -1.0) return -kInf;
  if (p == 0.0) return 0.0;
  const double ap = std::abs(p);
  if (ap > 0.5) {
    const double r = erfcinv(1.0 - ap);  // 1 - ap is exact here
    return p < 0 ? -r : r;
  }
  double x = erfinv_seed(-std::log((1.0 - p) * (1.0 + p)), p);
  for (int it = 0; it < 8; ++it) {
    const double f = erf(x) - p;
    const double u = f / (k2OverSqrtPi * std::exp(-x * x));
    const double step = u / (1.0 + x * u);
    x -= step;
    if (std::abs(step) <= 1e-17 * std::abs(x)) break;
  }
  return x;
}

double erfcinv(double q) {
  if (std::isnan(q) || q < 0.0 || q > 2.0) throw std::domain_error("erfcinv: argument outside [0,2]");
  if (q == 0.0) return kInf;
  if (q == 2.0) return -kInf;
  if (q == 1.0) return 0.0;
  if (q > 1.0) return -erfcinv(2.0 - q);
  if (q > 0.5) return erfinv(1.0 - q);
  const double lq = std::log(q);
  const double w = -std::log(q * (2.0 - q));
  double x = w < 30.0 ? erfinv_seed(w, 1.0 - q) : std::sqrt(-lq - 0.5 * std::log(-lq) - 0.5723649429247001);
  for (int it = 0; it < 40; ++it) {
    // Newton on log erfc(x) = log q; erfcx keeps it finite in the tail
    const double ex = erfcx(x);
    const double g = std::log(ex) - x * x - lq;
    const double step = g * ex / -k2OverSqrtPi;
    x -= step;
    if (std::abs(step) <= 1e-16 * std::abs(x)) break;
  }
  return x;
}

double norm_pdf(double t) { return phi_at(t); }
double norm_cdf(double t) { return 0.5 * erfc(-t / kSqrt2); }
double norm_sf(double t) { return 0.5 * erfc(t / kSqrt2); }

double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("norm_quantile: p outside (0,1)");
  return -kSqrt2 * erfcinv(2.0 * p);
}

double rect_mean(GaussParam p) {
  if (p.sigma < 0) throw std::domain_error("rect_mean: negative sigma");
  if (p.sigma == 0.0) return std::max(p.mu, 0.0);
  const double t = p.mu / p.sigma;
  if (t >= -1.0) return p.mu * norm_cdf(t) + p.sigma * phi_at(t);
  // sigma phi(t) (1 - x R(x)) with x = -t and R the Mills ratio
  const double x = -t;
  const double mills = kSqrtPiOver2 * erfcx(x / kSqrt2);
  return std::max(0.0, p.sigma * phi_at(t) * (1.0 - x * mills));
}

RectMeanGrad rect_mean_grad(GaussParam p) {
  if (!(p.sigma > 0)) throw std::domain_error("rect_mean_grad: sigma must be positive");
  const double t = p.mu / p.sigma;
  return {norm_cdf(t), phi_at(t)};
}

RectMeanHessian rect_mean_hessian(GaussParam p) {
  if (!(p.sigma > 0)) throw std::domain_error("rect_mean_hessian: sigma must be positive");
  const double t = p.mu / p.sigma;
  const double c = phi_at(t) / p.sigma;
  return {c, -t * c, t * t * c};
}

double tail_prob(GaussParam p, double t) {
  if (t == -kInf) return 1.0;
  if (t == kInf) return 0.0;
  if (p.sigma == 0.0) return p.mu >= t ? 1.0 : 0.0;
  return norm_sf((t - p.mu) / p.sigma);
}

double interval_prob(GaussParam p, double a, double b) {
  if (a > b) return 0.0;
  if (p.sigma == 0.0) return (p.mu >= a && p.mu <= b) ? 1.0 : 0.0;
  if (a == b) return 0.0;
  const double za = (a - p.mu) / p.sigma, zb = (b - p.mu) / p.sigma;
  double r;
  if (za >= 0) r = norm_sf(za) - norm_sf(zb);
  else if (zb <= 0) r = norm_cdf(zb) - norm_cdf(za);
  else r = 1.0 - norm_cdf(za) - norm_sf(zb);
  return std::clamp(r, 0.0, 1.0);
}

double box_prob(std::span<const GaussParam> ps, const Box& box) {
  if (static_cast<Index>(ps.size()) != box.dim()) throw std::invalid_argument("box_prob: dimension mismatch");
  double prod = 1.0;
  for (size_t i = 0; i < ps.size(); ++i) prod *= interval_prob(ps[i], box.lower(Index(i)), box.upper(Index(i)));
  return prod;
}

double first_moment(GaussParam p, double a, double b) {
  if (!(a < b)) return 0.0;
  if (p.sigma == 0.0) return (p.mu >= a && p.mu <= b) ? p.mu : 0.0;
  const double P = interval_prob(p, a, b);
  const double pa = std::isinf(a) ? 0.0 : phi_at((a - p.mu) / p.sigma);
  const double pb = std::isinf(b) ? 0.0 : phi_at((b - p.mu) / p.sigma);
  return p.mu * P + p.sigma * (pa - pb);
}

double trunc_relu_mass(GaussParam p, double a, double b) {
  if (a > b) throw std::invalid_argument("trunc_relu_mass: a > b");
  return first_moment(p, std::max(a, 0.0), std::max(b, 0.0));
}

double trunc_id_mass(GaussParam p, double a, double b) {
  if (a > b) throw std::invalid_argument("trunc_id_mass: a > b");
  return first_moment(p, a, b);
}

double tail_relu_mass_exact(GaussParam p, double a) { return first_moment(p, std::max(a, 0.0), kInf); }

Range tail_relu_mass_bounds(GaussParam p, double a) {
  if (std::max(a, 0.0) < p.mu) throw std::domain_error("tail_relu_mass_bounds: needs max(a,0) >= mu");
  const double lo = std::max(0.0, 0.5 * std::min(p.mu, 0.0));
  const double hi = 0.5 * std::max(p.mu, 0.0) + p.sigma * kInvSqrt2Pi;
  return {lo, hi};
}

Range rect_mean_range(Range mu, Range sigma) {
  // increasing in both arguments
  const Range r{rect_mean({mu.lo, sigma.lo}), rect_mean({mu.hi, sigma.hi})};
  Range w = widen_scaled(r, mag(mu) + sigma.hi);
  w.lo = std::max(w.lo, 0.0);
  return w;
}

Range tail_prob_range(Range mu, Range sigma, double t) {
  if (t == -kInf) return {1.0, 1.0};
  if (t == kInf) return {0.0, 0.0};
  // increasing in mu; in sigma the extremes sit at the endpoints
  const double hi = std::max(tail_prob({mu.hi, sigma.lo}, t), tail_prob({mu.hi, sigma.hi}, t));
  const double lo = std::min(tail_prob({mu.lo, sigma.lo}, t), tail_prob({mu.lo, sigma.hi}, t));
  return widen_prob({lo, hi});
}

Range interval_prob_range(Range mu, Range sigma, double a, double b) {
  if (!(a < b)) {
    if (a == b && sigma.lo == 0.0 && mu.lo <= a && a <= mu.hi) return {0.0, 1.0};
    return {0.0, 0.0};
  }
  if (a == -kInf && b == kInf) return {1.0, 1.0};
  double lo = kInf;
  for (double m : {mu.lo, mu.hi})
    for (double s : {sigma.lo, sigma.hi}) lo = std::min(lo, interval_prob({m, s}, a, b));
  double mstar;
  if (a == -kInf) mstar = mu.lo;
  else if (b == kInf) mstar = mu.hi;
  else mstar = std::clamp(0.5 * (a + b), mu.lo, mu.hi);
  double hi = std::max(interval_prob({mstar, sigma.lo}, a, b), interval_prob({mstar, sigma.hi}, a, b));
  if (std::isfinite(a) && std::isfinite(b) && (mstar < a || mstar > b)) {
    const double d1 = mstar < a ? a - mstar : mstar - b;
    const double d2 = mstar < a ? b - mstar : mstar - a;
    const double s2 = (d2 * d2 - d1 * d1) / (2.0 * std::log(d2 / d1));
    const double sstar = std::clamp(std::sqrt(s2), sigma.lo, sigma.hi);
    hi = std::max(hi, interval_prob({mstar, sstar}, a, b));
  }
  return widen_prob({lo, hi});
}

namespace {

// G(t) = int_t^inf x N(x) dx = g(mu - t, sigma) + t P[zeta >= t]
Range upper_tail_moment_range(Range mu, Range sigma, double t) {
  if (t == -kInf) return mu;
  if (t == kInf) return {0.0, 0.0};
  const Range g = rect_mean_range({mu.lo - t, mu.hi - t}, sigma);
  const Range s = tail_prob_range(mu, sigma, t);
  return widen_scaled(g + t * s, std::abs(t));
}

}  // namespace

Range first_moment_range(Range mu, Range sigma, double a, double b) {
  if (!(a < b)) return {0.0, 0.0};
  if (a == -kInf && b == kInf) return mu;
  Range r;
  if (a == -kInf) {
    // int_{-inf}^b x N = -int_{-b}^{inf} u N(u; -mu)
    const Range m = upper_tail_moment_range({-mu.hi, -mu.lo}, sigma, -b);
    r = {-m.hi, -m.lo};
  } else {
    r = upper_tail_moment_range(mu, sigma, a) - upper_tail_moment_range(mu, sigma, b);
  }
  const Range P = interval_prob_range(mu, sigma, a, b);
  Range bracket{-kInf, kInf};
  if (std::isfinite(a)) bracket.lo = std::min(a * P.lo, a * P.hi);
  if (std::isfinite(b)) bracket.hi = std::max(b * P.lo, b * P.hi);
  return intersect(r, widen_scaled(bracket, 0.0));
}

Range trunc_relu_mass_range(Range mu, Range sigma, double a, double b) {
  const double ap = std::max(a, 0.0), bp = std::max(b, 0.0);
  Range r = first_moment_range(mu, sigma, ap, bp);
  r.lo = std::max(r.lo, 0.0);
  r.hi = std::max(r.hi, 0.0);
  return r;
}

Range kernel_range(Kernel k, Range mu, Range sigma, double a, double b) {
  if (sigma.lo < 0 || mu.lo > mu.hi || sigma.lo > sigma.hi) throw std::invalid_argument("kernel_range: bad rectangle");
  switch (k) {
    case Kernel::box_prob_1d: return interval_prob_range(mu, sigma, a, b);
    case Kernel::trunc_relu_mass: return trunc_relu_mass_range(mu, sigma, a, b);
    case Kernel::trunc_id_mass: return first_moment_range(mu, sigma, a, b);
    case Kernel::rect_mean: return rect_mean_range(mu, sigma);
  }
  return {-kInf, kInf};
}

double kernel_value(Kernel k, GaussParam p, double a, double b) {
  switch (k) {
    case Kernel::box_prob_1d: return interval_prob(p, a, b);
    case Kernel::trunc_relu_mass: return trunc_relu_mass(p, a, b);
    case Kernel::trunc_id_mass: return trunc_id_mass(p, a, b);
    case Kernel::rect_mean: return rect_mean(p);
  }
  return 0.0;
}

}  // namespace bnndp::gauss
