#pragma once

#include "bnndp/model.hpp"
#include "bnndp/parallel.hpp"

#include <cstdint>
#include <json.hpp>
#include <vector>

namespace bnndp {

enum class OutputMap { identity, softmax };

// weights: one full weight draw per sample (shared across points).
// local: per-layer pre-activations drawn from their exact conditional
// Gaussians given the previous layer; same law for a single input.
enum class McMode { weights, local };

struct McEstimate {
  Vec mean;
  Vec std_error;
  Mat covariance;  // sample covariance of h(f(x)), for contrasts
  long long n = 0;
  std::uint64_t seed = 0;

  // mean and standard error of h_j - h_i
  std::pair<double, double> contrast(Index j, Index i) const;
};

McEstimate mc_expectation(const BnnModel& m, const Vec& x, OutputMap h, long long n, std::uint64_t seed,
                          Exec exec = Exec::parallel, McMode mode = McMode::weights);

// All points see the same weight draws.
std::vector<McEstimate> mc_expectation_multi(const BnnModel& m, const std::vector<Vec>& xs, OutputMap h, long long n,
                                             std::uint64_t seed, Exec exec = Exec::parallel);

// Plain forward pass with explicit weights.
Vec mc_forward(const BnnModel& m, const Weights& w, const Vec& x);

enum class QuadKernel { density, first_moment, relu_moment };
// int_a^b phi(z) N(z; mu, sigma^2) dz with phi = 1, z, relu(z)
double quad_kernel(QuadKernel k, double mu, double sigma, double a, double b);

struct AuditFamily {
  int min_hidden = 1, max_hidden = 3;
  Index min_width = 16, max_width = 64;
  Index min_input = 1, max_input = 4;
  Index outputs = 1;
  Task task = Task::regression;
  // every full_every-th trial uses full node covariances, width-capped
  int full_every = 5;
  Index max_full_width = 40;
  double scale = 1.0;
  // per-trial variance ratio, log-uniform
  double min_var_ratio = 1e-3, max_var_ratio = 1.0;
  double min_radius = 0.01, max_radius = 0.2;
  int points = 3;  // center plus random vertices of T
  long long samples = 100000;
  double sigmas = 4.0;
  std::vector<double> mass_epsilon;  // empty: depth default
};

nlohmann::ordered_json soundness_audit(const AuditFamily& fam, int trials, std::uint64_t seed,
                                       Exec exec = Exec::parallel, bool timing = true);

}  // namespace bnndp
