// bnndp: certify / radius / audit / gen-model / mc
//
// Exit codes: 0 certified (or success), 2 not certified, 1 error.

#include "bnndp/certify.hpp"
#include "bnndp/mc_oracle.hpp"
#include "bnndp/report.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

using namespace bnndp;
using nlohmann::ordered_json;

namespace {

void diag(const std::string& level, const std::string& msg) {
  std::cerr << ordered_json{{"level", level}, {"message", msg}}.dump() << "\n";
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::string tok;
  std::stringstream ss(s);
  while (ss >> std::ws && std::getline(ss, tok, ',')) {
    std::stringstream ts(tok);
    double v;
    while (ts >> v) out.push_back(v);
    if (!ts.eof()) throw std::invalid_argument("cannot parse number list '" + s + "'");
  }
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// CSV, or @file holding CSV / whitespace separated numbers / a JSON array
Vec parse_center(const std::string& arg) {
  std::vector<double> v;
  if (!arg.empty() && arg[0] == '@') {
    const std::string text = slurp(arg.substr(1));
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '[') {
      v = nlohmann::json::parse(text).get<std::vector<double>>();
    } else {
      std::string flat = text;
      for (char& c : flat)
        if (c == '\n' || c == '\r' || c == '\t') c = ' ';
      v = parse_list(flat);
    }
  } else {
    v = parse_list(arg);
  }
  if (v.empty()) throw std::invalid_argument("empty center");
  return Eigen::Map<Vec>(v.data(), Index(v.size()));
}

void write_out(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

struct QueryFlags {
  std::string model, center, task = "auto", out, mass_eps, splits, orientation = "outer";
  double radius = 0.0, tol = 1e-5, gamma_norm = kInf;
  std::optional<double> gamma;
  std::optional<long long> cls;
  std::uint64_t seed = 0;
  bool serial = false;
};

void add_query_flags(CLI::App* c, QueryFlags& f) {
  c->add_option("--model", f.model, "model JSON (bnn-dp-model/v1)")->required();
  c->add_option("--center", f.center, "query center: CSV or @file")->required();
  c->add_option("--radius", f.radius, "l-infinity radius")->check(CLI::NonNegativeNumber);
  c->add_option("--task", f.task, "auto|regression|classification")
      ->check(CLI::IsMember({"auto", "regression", "classification"}));
  c->add_option("--gamma", f.gamma, "regression threshold on the bound width");
  c->add_option("--gamma-norm", f.gamma_norm, "p of the norm over outputs (default inf)");
  c->add_option("--class", f.cls, "fix the class instead of taking it from radius 0");
  c->add_option("--mass-epsilon", f.mass_eps, "per partitioned layer, CSV (one value broadcasts)");
  c->add_option("--splits", f.splits, "regions per partitioned layer incl. the complement, CSV");
  c->add_option("--orientation", f.orientation, "outer|inner main box")->check(CLI::IsMember({"outer", "inner"}));
  c->add_option("--tol", f.tol, "radius search tolerance")->check(CLI::PositiveNumber);
  c->add_option("--out", f.out, "report path (default stdout)");
  c->add_option("--seed", f.seed, "recorded in the report");
  c->add_flag("--serial", f.serial, "disable OpenMP kernels");
}

BnnModel load_for(const QueryFlags& f) {
  BnnModel m = load_model(f.model);
  if (f.task == "auto") return m;
  const Task t = parse_task(f.task);
  if (t == m.task()) return m;
  return BnnModel(m.layers(), t);
}

DpConfig config_for(const QueryFlags& f) {
  DpConfig cfg;
  if (!f.mass_eps.empty()) cfg.mass_epsilon = parse_list(f.mass_eps);
  if (!f.splits.empty())
    for (double v : parse_list(f.splits)) {
      if (v != std::floor(v)) throw std::invalid_argument("--splits takes integers");
      cfg.regions.push_back(int(v));
    }
  cfg.orientation = f.orientation == "inner" ? Orientation::inner : Orientation::outer;
  cfg.exec = f.serial ? Exec::serial : Exec::parallel;
  cfg.validate();
  return cfg;
}

Query query_for(const QueryFlags& f, const BnnModel& m) {
  Query q;
  q.center = parse_center(f.center);
  if (q.center.size() != m.input_dim())
    throw std::invalid_argument("center has " + std::to_string(q.center.size()) + " entries, model input is " +
                                std::to_string(m.input_dim()));
  q.radius = f.radius;
  q.gamma = f.gamma;
  q.norm_p = f.gamma_norm;
  if (!(q.norm_p >= 1)) throw std::invalid_argument("--gamma-norm must be >= 1");
  if (f.cls) q.class_override = Index(*f.cls);
  return q;
}

int cmd_certify(const QueryFlags& f) {
  const BnnModel m = load_for(f);
  const DpConfig cfg = config_for(f);
  const Query q = query_for(f, m);
  const Certificate c = certify(m, q, cfg);
  RunInfo info{"certify", f.model, f.seed, f.tol, std::nullopt};
  write_out(f.out, dump_report(make_report(m, c, cfg, info)));
  return c.verdict == Verdict::robust ? 0 : 2;
}

int cmd_radius(const QueryFlags& f) {
  const BnnModel m = load_for(f);
  const DpConfig cfg = config_for(f);
  Query q = query_for(f, m);
  const RadiusResult rr = max_certified_radius(m, q, cfg, f.tol);
  q.radius = rr.radius;
  if (m.task() == Task::classification && rr.predicted_class >= 0) q.class_override = rr.predicted_class;
  Certificate c = certify(m, q, cfg);
  if (m.task() == Task::classification && !f.cls) c.query.class_override.reset();
  RunInfo info{"radius", f.model, f.seed, f.tol, rr};
  write_out(f.out, dump_report(make_report(m, c, cfg, info)));
  return rr.radius > 0 && c.verdict == Verdict::robust ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  configure_threads();
  CLI::App app{"Bounds and robustness certificates for Gaussian-posterior BNNs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kEngineVersion);

  QueryFlags cf, rf;
  auto* c_cert = app.add_subcommand("certify", "bound the expected output over an l-inf ball and decide robustness");
  add_query_flags(c_cert, cf);
  auto* c_rad = app.add_subcommand("radius", "largest certified l-inf radius");
  add_query_flags(c_rad, rf);

  AuditFamily fam;
  int trials = 10;
  std::uint64_t audit_seed = 0;
  std::string audit_out, audit_task = "regression", audit_eps;
  std::vector<int> hid{1, 3};
  std::vector<long long> wid{16, 64}, inp{1, 4};
  std::vector<double> rad{0.01, 0.2};
  bool no_timing = false, audit_serial = false;
  auto* c_aud = app.add_subcommand("audit", "Monte-Carlo soundness audit over random models");
  c_aud->add_option("--trials", trials)->check(CLI::NonNegativeNumber);
  c_aud->add_option("--seed", audit_seed);
  c_aud->add_option("--hidden", hid, "min,max hidden layers")->delimiter(',')->expected(2);
  c_aud->add_option("--width", wid, "min,max width")->delimiter(',')->expected(2);
  c_aud->add_option("--input", inp, "min,max input dimension")->delimiter(',')->expected(2);
  c_aud->add_option("--outputs", fam.outputs);
  c_aud->add_option("--task", audit_task)->check(CLI::IsMember({"regression", "classification"}));
  c_aud->add_option("--radius-range", rad, "min,max radius")->delimiter(',')->expected(2);
  c_aud->add_option("--samples", fam.samples);
  c_aud->add_option("--points", fam.points);
  c_aud->add_option("--full-every", fam.full_every, "every n-th trial uses full covariance (0: never)");
  c_aud->add_option("--max-full-width", fam.max_full_width);
  c_aud->add_option("--scale", fam.scale);
  std::vector<double> vr{1e-3, 1.0};
  c_aud->add_option("--var-ratio", vr, "min,max (log-uniform)")->delimiter(',')->expected(2);
  c_aud->add_option("--mass-epsilon", audit_eps);
  c_aud->add_option("--out", audit_out);
  c_aud->add_flag("--no-timing", no_timing, "omit the timing block");
  c_aud->add_flag("--serial", audit_serial);

  GenOptions go;
  std::vector<long long> gw;
  std::string g_act = "relu", g_task = "regression", g_cov = "diagonal", g_out;
  auto* c_gen = app.add_subcommand("gen-model", "random Gaussian posterior");
  c_gen->add_option("--widths", gw, "input,hidden...,output")->delimiter(',')->required();
  c_gen->add_option("--activation", g_act)->check(CLI::IsMember({"relu", "identity"}));
  c_gen->add_option("--task", g_task)->check(CLI::IsMember({"regression", "classification"}));
  c_gen->add_option("--covariance", g_cov)->check(CLI::IsMember({"diagonal", "full"}));
  c_gen->add_option("--scale", go.scale);
  c_gen->add_option("--var-ratio", go.var_ratio);
  c_gen->add_option("--seed", go.seed);
  c_gen->add_option("--out", g_out);

  std::string mc_model, mc_center, mc_out, mc_mode = "weights";
  long long mc_n = 100000;
  std::uint64_t mc_seed = 0;
  auto* c_mc = app.add_subcommand("mc", "Monte-Carlo estimate of the expected output at one input");
  c_mc->add_option("--model", mc_model)->required();
  c_mc->add_option("--center", mc_center)->required();
  c_mc->add_option("--samples", mc_n)->check(CLI::PositiveNumber);
  c_mc->add_option("--seed", mc_seed);
  c_mc->add_option("--mode", mc_mode)->check(CLI::IsMember({"weights", "local"}));
  c_mc->add_option("--out", mc_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e) == 0 ? 0 : 1;
  } catch (const CLI::CallForVersion& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::ParseError& e) {
    diag("error", e.what());
    std::cerr << app.help();
    return 1;
  }

  try {
    if (*c_cert) return cmd_certify(cf);
    if (*c_rad) return cmd_radius(rf);
    if (*c_aud) {
      fam.min_hidden = hid[0];
      fam.max_hidden = hid[1];
      fam.min_width = wid[0];
      fam.max_width = wid[1];
      fam.min_input = inp[0];
      fam.max_input = inp[1];
      fam.min_var_ratio = vr[0];
      fam.max_var_ratio = vr[1];
      fam.min_radius = rad[0];
      fam.max_radius = rad[1];
      fam.task = parse_task(audit_task);
      if (fam.task == Task::classification && fam.outputs < 2) fam.outputs = 3;
      if (!audit_eps.empty()) fam.mass_epsilon = parse_list(audit_eps);
      const auto rep = soundness_audit(fam, trials, audit_seed, audit_serial ? Exec::serial : Exec::parallel, !no_timing);
      write_out(audit_out, rep.dump(2) + "\n");
      return rep["violations"].get<long long>() == 0 ? 0 : 2;
    }
    if (*c_gen) {
      go.widths.assign(gw.begin(), gw.end());
      go.activation = parse_activation(g_act);
      go.task = parse_task(g_task);
      go.covariance = g_cov == "full" ? CovKind::full : CovKind::diagonal;
      write_out(g_out, serialize_model(gen_model(go)));
      return 0;
    }
    if (*c_mc) {
      const BnnModel m = load_model(mc_model);
      const Vec x = parse_center(mc_center);
      const OutputMap h = m.task() == Task::classification ? OutputMap::softmax : OutputMap::identity;
      const McEstimate e =
          mc_expectation(m, x, h, mc_n, mc_seed, Exec::parallel, mc_mode == "local" ? McMode::local : McMode::weights);
      ordered_json j{{"schema", "bnn-dp-mc/v1"},
                     {"samples", e.n},
                     {"seed", e.seed},
                     {"mode", mc_mode},
                     {"mean", vec_json(e.mean)},
                     {"std_error", vec_json(e.std_error)}};
      write_out(mc_out, j.dump(2) + "\n");
      return 0;
    }
  } catch (const std::exception& e) {
    diag("error", e.what());
    return 1;
  }
  return 1;
}
