#include "bnndp/report.hpp"

#include <cmath>

namespace bnndp {

using nlohmann::ordered_json;

namespace {

ordered_json num(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

}  // namespace

ordered_json vec_json(const Vec& v) {
  ordered_json a = ordered_json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(num(v[i]));
  return a;
}

ordered_json mat_json(const Mat& M) {
  ordered_json a = ordered_json::array();
  for (Index r = 0; r < M.rows(); ++r) a.push_back(vec_json(M.row(r).transpose()));
  return a;
}

ordered_json box_json(const Box& b) { return {{"lower", vec_json(b.lo())}, {"upper", vec_json(b.hi())}}; }

ordered_json make_report(const BnnModel& m, const Certificate& c, const DpConfig& cfg, const RunInfo& info) {
  ordered_json r;
  r["schema"] = kReportSchema;
  r["engine_version"] = kEngineVersion;
  r["command"] = info.command;

  const auto widths = m.widths();
  r["model"] = {{"path", info.model_path},
                {"task", to_string(m.task())},
                {"widths", std::vector<long long>(widths.begin(), widths.end())}};

  ordered_json q;
  q["center"] = vec_json(c.query.center);
  q["radius"] = c.query.radius;
  q["norm"] = "linf";
  q["gamma"] = c.query.gamma ? num(*c.query.gamma) : ordered_json(nullptr);
  q["gamma_norm_p"] = std::isinf(c.query.norm_p) ? ordered_json("inf") : ordered_json(c.query.norm_p);
  q["class_override"] = c.query.class_override ? ordered_json(*c.query.class_override) : ordered_json(nullptr);
  r["query"] = std::move(q);

  ordered_json eps = ordered_json::array(), regions = ordered_json::array();
  for (const LayerPartition& p : c.partitions) {
    eps.push_back(p.epsilon);
    regions.push_back(int(p.pieces.size()) + 1);
  }
  r["config"] = {{"mass_epsilon", std::move(eps)},
                 {"regions", std::move(regions)},
                 {"orientation", cfg.orientation == Orientation::outer ? "outer" : "inner"},
                 {"tol", info.tol},
                 {"seed", info.seed},
                 {"audit_sigmas", 4.0}};

  ordered_json res;
  res["verdict"] = to_string(c.verdict);
  res["reason"] = c.reason;
  res["lower"] = vec_json(c.bounds.lo);
  res["upper"] = vec_json(c.bounds.hi);
  if (c.task == Task::regression) {
    res["gamma"] = vec_json(c.gamma);
    res["gamma_achieved"] = num(c.gamma_norm);
  } else {
    res["predicted_class"] = c.predicted_class >= 0 ? ordered_json(c.predicted_class) : ordered_json(nullptr);
    res["pair_methods"] = c.pair_methods;
  }
  if (info.radius) {
    res["max_certified_radius"] = info.radius->radius;
    res["radius_bracket"] = {info.radius->radius, info.radius->bracket_hi};
    res["radius_evaluations"] = info.radius->evaluations;
  }
  res["mass_chain"] = c.mass_chain;
  r["result"] = std::move(res);

  // affine envelopes over the query box, for plotting elsewhere
  r["v0"] = {{"A_lo", mat_json(c.v0.A_lo)},
             {"b_lo", vec_json(c.v0.b_lo)},
             {"A_hi", mat_json(c.v0.A_hi)},
             {"b_hi", vec_json(c.v0.b_hi)}};

  ordered_json parts = ordered_json::array();
  for (const LayerPartition& p : c.partitions) {
    parts.push_back({{"layer", p.layer},
                     {"epsilon", p.epsilon},
                     {"mass_lower", p.mass_lower},
                     {"pieces", p.pieces.size()},
                     {"main", box_json(p.main)}});
  }
  r["partitions"] = std::move(parts);
  r["timing"] = {{"seconds", c.seconds}};
  return r;
}

std::string dump_report(const ordered_json& r) { return r.dump(2) + "\n"; }

ordered_json strip_timing(ordered_json r) {
  r.erase("timing");
  return r;
}

}  // namespace bnndp
