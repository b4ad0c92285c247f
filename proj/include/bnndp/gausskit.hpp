#pragma once

#include "bnndp/relaxcore.hpp"

#include <span>

namespace bnndp::gauss {

double erf(double x);
double erfc(double x);
double erfcx(double x);  // exp(x^2) erfc(x)
double erfinv(double p);
double erfcinv(double q);

double norm_pdf(double t);
double norm_cdf(double t);
double norm_sf(double t);  // 1 - cdf, accurate in the upper tail
double norm_quantile(double p);

// N(mu, sigma^2); sigma == 0 is a point mass.
struct GaussParam {
  double mu = 0.0;
  double sigma = 1.0;
};

// E[max(zeta, 0)]
double rect_mean(GaussParam p);

struct RectMeanGrad {
  double d_mu;
  double d_sigma;
};
RectMeanGrad rect_mean_grad(GaussParam p);  // throws std::domain_error at sigma == 0

struct RectMeanHessian {
  double mm, ms, ss;
};
RectMeanHessian rect_mean_hessian(GaussParam p);

double tail_prob(GaussParam p, double t);               // P[zeta >= t]
double interval_prob(GaussParam p, double a, double b);  // P[a <= zeta <= b]
double box_prob(std::span<const GaussParam> ps, const Box& box);

// int_a^b x N(x) dx, a or b may be infinite
double first_moment(GaussParam p, double a, double b);
// E[relu(zeta) 1{zeta in [a,b]}]
double trunc_relu_mass(GaussParam p, double a, double b);
// E[zeta 1{zeta in [a,b]}]
double trunc_id_mass(GaussParam p, double a, double b);
// E[relu(zeta) 1{zeta >= a}]
double tail_relu_mass_exact(GaussParam p, double a);
// closed-form enclosure of the same quantity; needs max(a,0) >= mu
Range tail_relu_mass_bounds(GaussParam p, double a);

enum class Kernel { box_prob_1d, trunc_relu_mass, trunc_id_mass, rect_mean };

// Sound enclosure of a kernel over mu in [mu.lo, mu.hi], sigma in [sigma.lo, sigma.hi].
Range kernel_range(Kernel k, Range mu, Range sigma, double a = -kInf, double b = kInf);
double kernel_value(Kernel k, GaussParam p, double a = -kInf, double b = kInf);

Range rect_mean_range(Range mu, Range sigma);
Range tail_prob_range(Range mu, Range sigma, double t);
Range interval_prob_range(Range mu, Range sigma, double a, double b);
Range first_moment_range(Range mu, Range sigma, double a, double b);
Range trunc_relu_mass_range(Range mu, Range sigma, double a, double b);

}  // namespace bnndp::gauss
