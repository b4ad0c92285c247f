#pragma once

#include "bnndp/dp_engine.hpp"
#include "bnndp/model.hpp"

#include <optional>
#include <string>
#include <vector>

namespace bnndp {

inline constexpr const char* kEngineVersion = "0.3.0";

struct Query {
  Vec center;
  double radius = 0.0;  // l-infinity
  std::optional<double> gamma;
  double norm_p = kInf;  // norm used to aggregate the per-output gamma
  std::optional<Index> class_override;
};

Box query_box(const Query& q);

enum class Verdict { robust, not_certified };
const char* to_string(Verdict v);

struct Certificate {
  Query query;
  Task task = Task::regression;
  Interval bounds;  // per output [pi_lo, pi_hi]
  AffineRelaxation v0;
  Verdict verdict = Verdict::not_certified;
  std::string reason;
  Vec gamma;  // regression: per-output width
  double gamma_norm = 0.0;
  Index predicted_class = -1;
  std::vector<std::string> pair_methods;  // classification: per class, how it was separated
  std::vector<LayerPartition> partitions;
  double mass_chain = 1.0;
  double seconds = 0.0;
};

struct BoundResult {
  Interval bounds;
  DpResult dp;
};

BoundResult bound_expectation(const BnnModel& m, const Box& T, const DpConfig& cfg);
Vec gamma_robustness(const BnnModel& m, const Query& q, const DpConfig& cfg);

// Predicted class from the radius-0 bounds; -1 when the intervals overlap.
Index center_class(const BnnModel& m, const Vec& x, const DpConfig& cfg, Interval* bounds = nullptr);

Certificate certify(const BnnModel& m, const Query& q, const DpConfig& cfg);
Certificate check_classification_robust(const BnnModel& m, const Query& q, const DpConfig& cfg);
Certificate check_regression_robust(const BnnModel& m, const Query& q, const DpConfig& cfg);

struct RadiusResult {
  double radius = 0.0;
  double bracket_hi = 0.0;
  int evaluations = 0;
  Index predicted_class = -1;
};

// For classification the query's gamma is ignored; regression needs it.
RadiusResult max_certified_radius(const BnnModel& m, const Query& q, const DpConfig& cfg, double tol = 1e-5);

}  // namespace bnndp
