#pragma once

#include "bnndp/certify.hpp"

#include <json.hpp>
#include <optional>
#include <string>

namespace bnndp {

inline constexpr const char* kReportSchema = "bnn-dp-report/v1";

struct RunInfo {
  std::string command;  // "certify" or "radius"
  std::string model_path;
  std::uint64_t seed = 0;
  double tol = 1e-5;
  std::optional<RadiusResult> radius;
};

// Everything except "timing" is a pure function of the inputs.
nlohmann::ordered_json make_report(const BnnModel& m, const Certificate& c, const DpConfig& cfg, const RunInfo& info);

// Pretty-printed with a trailing newline.
std::string dump_report(const nlohmann::ordered_json& r);
nlohmann::ordered_json strip_timing(nlohmann::ordered_json r);

// JSON helpers shared with the CLI; non-finite values become null.
nlohmann::ordered_json vec_json(const Vec& v);
nlohmann::ordered_json mat_json(const Mat& M);
nlohmann::ordered_json box_json(const Box& b);

}  // namespace bnndp
