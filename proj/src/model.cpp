#include "bnndp/model.hpp"

#include "bnndp/gausskit.hpp"
#include "bnndp/rng.hpp"

#include <json.hpp>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <fstream>
#include <sstream>

namespace bnndp {

using json = nlohmann::ordered_json;

namespace {

constexpr double kPsdTol = 1e-10;

std::string where(Index layer, Index node = -1) {
  std::string s = "layer " + std::to_string(layer);
  if (node >= 0) s += " node " + std::to_string(node);
  return s;
}

bool all_finite(const Mat& m) { return m.allFinite(); }

}  // namespace

const char* to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }
const char* to_string(Task t) { return t == Task::regression ? "regression" : "classification"; }
const char* to_string(CovKind c) { return c == CovKind::diagonal ? "diagonal" : "full"; }

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "identity" || s == "linear") return Activation::identity;
  throw ModelError("unknown activation '" + s + "'");
}

Task parse_task(const std::string& s) {
  if (s == "regression") return Task::regression;
  if (s == "classification") return Task::classification;
  throw ModelError("unknown task '" + s + "'");
}

Vec activate(Activation a, const Vec& v) { return a == Activation::relu ? Vec(v.cwiseMax(0.0)) : v; }

Box activate(Activation a, const Box& b) { return a == Activation::relu ? relu_image(b) : b; }

LayerPosterior LayerPosterior::diagonal(Mat mean, Mat variances, Activation act) {
  LayerPosterior l;
  l.mean_ = std::move(mean);
  l.marg_var_ = std::move(variances);
  l.kind_ = CovKind::diagonal;
  l.act_ = act;
  return l;
}

LayerPosterior LayerPosterior::full(Mat mean, std::vector<Mat> covariances, Activation act) {
  LayerPosterior l;
  l.mean_ = std::move(mean);
  l.cov_ = std::move(covariances);
  l.kind_ = CovKind::full;
  l.act_ = act;
  return l;
}

void LayerPosterior::validate(Index layer_index) {
  const Index n_out = mean_.rows(), n_aug = mean_.cols();
  if (n_out < 1 || n_aug < 2) throw ModelError(where(layer_index) + ": mean must be n_out x (n_in+1) with n_in >= 1");
  if (!all_finite(mean_)) throw ModelError(where(layer_index) + ": non-finite mean");
  if (kind_ == CovKind::diagonal) {
    if (marg_var_.rows() != n_out || marg_var_.cols() != n_aug)
      throw ModelError(where(layer_index) + ": diagonal covariance shape does not match mean");
    for (Index i = 0; i < n_out; ++i)
      for (Index j = 0; j < n_aug; ++j)
        if (!std::isfinite(marg_var_(i, j)) || marg_var_(i, j) < 0)
          throw ModelError(where(layer_index, i) + ": variance must be finite and >= 0 (entry " +
                           std::to_string(j) + ")");
    return;
  }
  if (Index(cov_.size()) != n_out)
    throw ModelError(where(layer_index) + ": expected one covariance per node");
  marg_var_.resize(n_out, n_aug);
  spec_.clear();
  factor_.clear();
  for (Index i = 0; i < n_out; ++i) {
    const Mat& S = cov_[size_t(i)];
    if (S.rows() != n_aug || S.cols() != n_aug)
      throw ModelError(where(layer_index, i) + ": covariance must be (n_in+1) x (n_in+1)");
    if (!all_finite(S)) throw ModelError(where(layer_index, i) + ": non-finite covariance");
    const double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
    if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
      throw ModelError(where(layer_index, i) + ": covariance is not symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (S + S.transpose()));
    if (es.info() != Eigen::Success) throw ModelError(where(layer_index, i) + ": eigendecomposition failed");
    if (es.eigenvalues().minCoeff() < -kPsdTol)
      throw ModelError(where(layer_index, i) + ": covariance is not positive semidefinite (min eigenvalue " +
                       std::to_string(es.eigenvalues().minCoeff()) + ")");
    DiagonalizedForm f{es.eigenvalues().cwiseMax(0.0), es.eigenvectors()};
    factor_.push_back(f.basis * f.eigenvalues.cwiseSqrt().asDiagonal());
    spec_.push_back(std::move(f));
    marg_var_.row(i) = S.diagonal().cwiseMax(0.0).transpose();
  }
}

double LayerPosterior::variance_at(Index node, const Vec& z) const {
  const Index n = in_dim();
  if (kind_ == CovKind::diagonal) {
    const auto v = marg_var_.row(node);
    return v.head(n).dot(z.cwiseAbs2()) + v[n];
  }
  const DiagonalizedForm& f = spec_[size_t(node)];
  const Vec y = f.basis.topRows(n).transpose() * z + f.basis.row(n).transpose();
  return std::max(0.0, f.eigenvalues.dot(y.cwiseAbs2()));
}

Vec LayerPosterior::variances_at(const Vec& z) const {
  Vec s(out_dim());
  if (kind_ == CovKind::diagonal) {
    const Index n = in_dim();
    s = marg_var_.leftCols(n) * z.cwiseAbs2() + marg_var_.col(n);
    return s;
  }
  for (Index i = 0; i < out_dim(); ++i) s[i] = variance_at(i, z);
  return s;
}

Vec LayerPosterior::means_at(const Vec& z) const {
  const Index n = in_dim();
  return mean_.leftCols(n) * z + mean_.col(n);
}

Mat LayerPosterior::abs_weight_mean() const {
  const Index n = in_dim();
  Mat out(out_dim(), n);
  for (Index i = 0; i < out_dim(); ++i)
    for (Index j = 0; j < n; ++j) {
      const double mu = mean_(i, j), sd = std::sqrt(marg_var_(i, j));
      out(i, j) = std::max(std::abs(mu), 2.0 * gauss::rect_mean({mu, sd}) - mu);
    }
  return out;
}

BnnModel::BnnModel(std::vector<LayerPosterior> layers, Task task) : layers_(std::move(layers)), task_(task) {
  if (layers_.empty()) throw ModelError("model has no layers");
  for (size_t k = 0; k < layers_.size(); ++k) {
    layers_[k].validate(Index(k));
    if (k > 0 && layers_[k].in_dim() != layers_[k - 1].out_dim())
      throw ModelError(where(Index(k)) + ": input width " + std::to_string(layers_[k].in_dim()) +
                       " does not match previous output width " + std::to_string(layers_[k - 1].out_dim()));
  }
  layers_.back().force_identity();
  if (task_ == Task::classification && output_dim() < 2)
    throw ModelError("classification model needs at least 2 outputs");
}

std::vector<Index> BnnModel::widths() const {
  std::vector<Index> w{input_dim()};
  for (const auto& l : layers_) w.push_back(l.out_dim());
  return w;
}

namespace {

Mat matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw ModelError(what + ": expected a non-empty 2-d array");
  const Index r = Index(j.size());
  const Index c = Index(j[0].size());
  Mat m(r, c);
  for (Index i = 0; i < r; ++i) {
    const json& row = j[size_t(i)];
    if (!row.is_array() || Index(row.size()) != c) throw ModelError(what + ": ragged row " + std::to_string(i));
    for (Index k = 0; k < c; ++k) {
      if (!row[size_t(k)].is_number()) throw ModelError(what + ": non-numeric entry in row " + std::to_string(i));
      m(i, k) = row[size_t(k)].get<double>();
    }
  }
  return m;
}

json matrix_to_json(const Mat& m) {
  json a = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    a.push_back(std::move(row));
  }
  return a;
}

}  // namespace

BnnModel parse_model(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ModelError(std::string("model json: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "bnn-dp-model/v1")
    throw ModelError("model json: missing or unsupported format tag (want bnn-dp-model/v1)");
  const Task task = parse_task(j.value("task", "regression"));
  if (!j.contains("layers") || !j["layers"].is_array() || j["layers"].empty())
    throw ModelError("model json: 'layers' must be a non-empty array");
  std::vector<LayerPosterior> layers;
  for (size_t k = 0; k < j["layers"].size(); ++k) {
    const json& lj = j["layers"][k];
    const std::string tag = where(Index(k));
    const Activation act = parse_activation(lj.value("activation", "relu"));
    if (!lj.contains("mean")) throw ModelError(tag + ": missing mean");
    Mat mean = matrix_from_json(lj["mean"], tag + " mean");
    if (!lj.contains("covariance")) throw ModelError(tag + ": missing covariance");
    const json& cj = lj["covariance"];
    const std::string type = cj.value("type", "");
    if (type == "diagonal") {
      layers.push_back(LayerPosterior::diagonal(std::move(mean), matrix_from_json(cj["values"], tag + " covariance"), act));
    } else if (type == "full") {
      const json& vals = cj["values"];
      if (!vals.is_array()) throw ModelError(tag + ": full covariance values must be an array per node");
      std::vector<Mat> covs;
      for (size_t i = 0; i < vals.size(); ++i)
        covs.push_back(matrix_from_json(vals[i], where(Index(k), Index(i)) + " covariance"));
      layers.push_back(LayerPosterior::full(std::move(mean), std::move(covs), act));
    } else {
      throw ModelError(tag + ": covariance type must be 'diagonal' or 'full'");
    }
  }
  return BnnModel(std::move(layers), task);
}

BnnModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open model file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

std::string serialize_model(const BnnModel& m) {
  json j;
  j["format"] = "bnn-dp-model/v1";
  j["task"] = to_string(m.task());
  j["layers"] = json::array();
  for (const auto& l : m.layers()) {
    json lj;
    lj["activation"] = to_string(l.activation());
    lj["mean"] = matrix_to_json(l.mean());
    json cj;
    cj["type"] = to_string(l.kind());
    if (l.kind() == CovKind::diagonal) {
      cj["values"] = matrix_to_json(l.marginal_variance());
    } else {
      json arr = json::array();
      for (Index i = 0; i < l.out_dim(); ++i) arr.push_back(matrix_to_json(l.covariance(i)));
      cj["values"] = std::move(arr);
    }
    lj["covariance"] = std::move(cj);
    j["layers"].push_back(std::move(lj));
  }
  return j.dump() + "\n";
}

void save_model(const BnnModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ModelError("cannot write model file '" + path + "'");
  out << serialize_model(m);
}

BnnModel gen_model(const GenOptions& opt) {
  if (opt.widths.size() < 2) throw ModelError("gen_model: need at least input and output widths");
  for (Index w : opt.widths)
    if (w < 1) throw ModelError("gen_model: widths must be positive");
  if (!(opt.scale > 0) || !std::isfinite(opt.scale)) throw ModelError("gen_model: scale must be positive");
  if (!(opt.var_ratio >= 0) || !std::isfinite(opt.var_ratio)) throw ModelError("gen_model: var_ratio must be >= 0");
  if (opt.task == Task::classification && opt.widths.back() < 2)
    throw ModelError("gen_model: classification needs at least 2 outputs");

  std::vector<LayerPosterior> layers;
  const size_t L = opt.widths.size() - 1;
  for (size_t k = 0; k < L; ++k) {
    const Index n_in = opt.widths[k], n_out = opt.widths[k + 1];
    const double var = opt.scale * opt.scale / double(n_in);
    const double sd = std::sqrt(var);
    NormalStream rng(opt.seed, 0x67656e00u, std::uint32_t(k));
    Mat mean(n_out, n_in + 1);
    for (Index i = 0; i < n_out; ++i)
      for (Index j = 0; j <= n_in; ++j) mean(i, j) = sd * rng.normal();
    const Activation act = (k + 1 == L) ? Activation::identity : opt.activation;
    if (opt.covariance == CovKind::diagonal) {
      Mat v(n_out, n_in + 1);
      for (Index i = 0; i < n_out; ++i)
        for (Index j = 0; j <= n_in; ++j) v(i, j) = opt.var_ratio * var * rng.uniform();
      layers.push_back(LayerPosterior::diagonal(std::move(mean), std::move(v), act));
    } else {
      std::vector<Mat> covs;
      for (Index i = 0; i < n_out; ++i) {
        Mat G(n_in + 1, n_in + 1);
        for (Index r = 0; r <= n_in; ++r)
          for (Index c = 0; c <= n_in; ++c) G(r, c) = rng.normal();
        const double c = opt.var_ratio * var * rng.uniform() / double(n_in + 1);
        Mat S = c * (G * G.transpose());
        S = 0.5 * (S + S.transpose()).eval();
        covs.push_back(std::move(S));
      }
      layers.push_back(LayerPosterior::full(std::move(mean), std::move(covs), act));
    }
  }
  return BnnModel(std::move(layers), opt.task);
}

void WeightSampler::sample_into(std::uint64_t seed, std::uint32_t draw, Weights& w) const {
  const auto& layers = model_->layers();
  w.resize(layers.size());
  NormalStream rng(seed, draw, 0x77736d70u);
  for (size_t k = 0; k < layers.size(); ++k) {
    const LayerPosterior& l = layers[k];
    const Index n_aug = l.in_dim() + 1;
    Mat& W = w[k];
    W.resize(l.out_dim(), n_aug);
    if (l.kind() == CovKind::diagonal) {
      const Mat& v = l.marginal_variance();
      for (Index i = 0; i < l.out_dim(); ++i)
        for (Index j = 0; j < n_aug; ++j) W(i, j) = l.mean()(i, j) + std::sqrt(v(i, j)) * rng.normal();
    } else {
      Vec eps(n_aug);
      for (Index i = 0; i < l.out_dim(); ++i) {
        for (Index j = 0; j < n_aug; ++j) eps[j] = rng.normal();
        W.row(i) = l.mean().row(i) + (l.factor(i) * eps).transpose();
      }
    }
  }
}

Weights WeightSampler::sample(std::uint64_t seed, std::uint32_t draw) const {
  Weights w;
  sample_into(seed, draw, w);
  return w;
}

Weights sample_weights(const BnnModel& m, std::uint64_t seed) { return WeightSampler(m).sample(seed, 0); }

Vec forward(const BnnModel& m, const Weights& w, const Vec& x) {
  if (w.size() != m.layers().size()) throw std::invalid_argument("forward: weight count mismatch");
  if (x.size() != m.input_dim()) throw std::invalid_argument("forward: input dimension mismatch");
  Vec z = x;
  for (size_t k = 0; k < w.size(); ++k) {
    const Index n = w[k].cols() - 1;
    Vec zeta = w[k].leftCols(n) * z + w[k].col(n);
    z = activate(m.layers()[k].activation(), zeta);
  }
  return z;
}

}  // namespace bnndp
