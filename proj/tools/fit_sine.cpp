// Builds the 1-D noisy-sine demo model: a random 1x256 relu posterior whose
// output-layer means are refit by ridge regression on the expected hidden
// activations.
//
//   fit_sine [--out PATH] [--seed S] [--hidden N] [--noise SD] [--var-ratio R]

#include "bnndp/gausskit.hpp"
#include "bnndp/model.hpp"
#include "bnndp/layerprop.hpp"
#include "bnndp/rng.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <numbers>

using namespace bnndp;

int main(int argc, char** argv) {
  CLI::App app{"fit the noisy-sine demo model"};
  std::string out = "data/sine_demo.json";
  std::uint64_t seed = 7;
  long long hidden = 256, samples = 200;
  double noise = 0.1, var_ratio = 0.05, scale = 3.0, ridge = 1e-3;
  app.add_option("--out", out);
  app.add_option("--seed", seed);
  app.add_option("--hidden", hidden)->check(CLI::PositiveNumber);
  app.add_option("--samples", samples)->check(CLI::PositiveNumber);
  app.add_option("--noise", noise);
  app.add_option("--var-ratio", var_ratio);
  app.add_option("--scale", scale);
  app.add_option("--ridge", ridge);
  CLI11_PARSE(app, argc, argv);

  GenOptions go;
  go.widths = {1, Index(hidden), 1};
  go.scale = scale;
  go.seed = seed;
  go.var_ratio = var_ratio;
  const BnnModel base = gen_model(go);
  const LayerPosterior& l0 = base.layer(0);

  NormalStream rng(seed, 0x73696e65u, 0);
  Mat Phi(samples, hidden + 1);
  Vec y(samples);
  for (Index s = 0; s < samples; ++s) {
    Vec x(1);
    x[0] = 2.0 * rng.uniform() - 1.0;
    y[s] = std::sin(std::numbers::pi * x[0]) + noise * rng.normal();
    const auto [mu, var] = eval_moments(l0, x);
    for (Index i = 0; i < hidden; ++i) Phi(s, i) = gauss::rect_mean({mu[i], std::sqrt(std::max(var[i], 0.0))});
    Phi(s, hidden) = 1.0;
  }
  Mat G = Phi.transpose() * Phi;
  G.diagonal().array() += ridge;
  const Vec w = G.ldlt().solve(Phi.transpose() * y);

  const LayerPosterior& l1 = base.layer(1);
  Mat mean = w.transpose();
  std::vector<LayerPosterior> layers{l0, LayerPosterior::diagonal(mean, l1.marginal_variance(), Activation::identity)};
  const BnnModel fitted(std::move(layers), Task::regression);
  save_model(fitted, out);
  const double rmse = std::sqrt((Phi * w - y).squaredNorm() / double(samples));
  std::cerr << "{\"level\":\"info\",\"message\":\"wrote " << out << "\",\"train_rmse\":" << rmse << "}\n";
  return 0;
}
