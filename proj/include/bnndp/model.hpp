#pragma once

#include "bnndp/relaxcore.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace bnndp {

enum class Activation { relu, identity };
enum class Task { regression, classification };
enum class CovKind { diagonal, full };

const char* to_string(Activation a);
const char* to_string(Task t);
const char* to_string(CovKind c);
Activation parse_activation(const std::string& s);
Task parse_task(const std::string& s);

inline double activate(Activation a, double v) { return a == Activation::relu ? (v > 0 ? v : 0.0) : v; }
Vec activate(Activation a, const Vec& v);
Box activate(Activation a, const Box& b);

struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// s(z) = sum_e lambda_e (u_e . (z,1))^2, lambda >= 0 after clamping.
struct DiagonalizedForm {
  Vec eigenvalues;
  Mat basis;  // columns u_e
};

// Gaussian posterior of one layer; node i has weights w_i in R^{n_in+1}
// (bias last) with mean mean().row(i). Full-covariance layers need validate()
// before use; BnnModel does it for its layers.
class LayerPosterior {
 public:
  static LayerPosterior diagonal(Mat mean, Mat variances, Activation act);
  static LayerPosterior full(Mat mean, std::vector<Mat> covariances, Activation act);

  Index in_dim() const { return mean_.cols() - 1; }
  Index out_dim() const { return mean_.rows(); }
  CovKind kind() const { return kind_; }
  Activation activation() const { return act_; }
  void force_identity() { act_ = Activation::identity; }

  const Mat& mean() const { return mean_; }
  // per-weight marginal variances, out x (in+1)
  const Mat& marginal_variance() const { return marg_var_; }
  const Mat& covariance(Index node) const { return cov_.at(static_cast<size_t>(node)); }
  const DiagonalizedForm& spectrum(Index node) const { return spec_.at(static_cast<size_t>(node)); }
  // factor F with Sigma_i = F F^T (full only)
  const Mat& factor(Index node) const { return factor_.at(static_cast<size_t>(node)); }

  // s_i(z) for the augmented input (z,1)
  double variance_at(Index node, const Vec& z) const;
  Vec variances_at(const Vec& z) const;
  Vec means_at(const Vec& z) const;

  // E|W| per weight (folded normal), bias column dropped
  Mat abs_weight_mean() const;

  void validate(Index layer_index);

 private:
  Mat mean_;
  CovKind kind_ = CovKind::diagonal;
  Activation act_ = Activation::relu;
  Mat marg_var_;
  std::vector<Mat> cov_;
  std::vector<DiagonalizedForm> spec_;
  std::vector<Mat> factor_;
};

class BnnModel {
 public:
  BnnModel(std::vector<LayerPosterior> layers, Task task);

  Task task() const { return task_; }
  // number of hidden layers K; layers() has K+1 entries
  int hidden() const { return int(layers_.size()) - 1; }
  const std::vector<LayerPosterior>& layers() const { return layers_; }
  const LayerPosterior& layer(int k) const { return layers_.at(static_cast<size_t>(k)); }
  Index input_dim() const { return layers_.front().in_dim(); }
  Index output_dim() const { return layers_.back().out_dim(); }
  std::vector<Index> widths() const;

 private:
  std::vector<LayerPosterior> layers_;
  Task task_;
};

BnnModel load_model(const std::string& path);
BnnModel parse_model(const std::string& json_text);
std::string serialize_model(const BnnModel& m);
void save_model(const BnnModel& m, const std::string& path);

struct GenOptions {
  std::vector<Index> widths;  // input, hidden..., output
  Activation activation = Activation::relu;
  double scale = 1.0;
  std::uint64_t seed = 0;
  Task task = Task::regression;
  CovKind covariance = CovKind::diagonal;
  double var_ratio = 1.0;  // multiplies every sampled variance
};
BnnModel gen_model(const GenOptions& opt);

using Weights = std::vector<Mat>;

// Draws weight realizations; factors are prepared once.
class WeightSampler {
 public:
  explicit WeightSampler(const BnnModel& m) : model_(&m) {}
  Weights sample(std::uint64_t seed, std::uint32_t draw) const;
  void sample_into(std::uint64_t seed, std::uint32_t draw, Weights& w) const;

 private:
  const BnnModel* model_;
};

Weights sample_weights(const BnnModel& m, std::uint64_t seed);
Vec forward(const BnnModel& m, const Weights& w, const Vec& x);

}  // namespace bnndp
