// Command-line front end: fit datasets, evaluate test statistics, run
// Monte Carlo coverage experiments, probe influence-function boundedness.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "scorerule/csv.hpp"
#include "scorerule/estimate.hpp"
#include "scorerule/huber.hpp"
#include "scorerule/infer.hpp"
#include "scorerule/robust.hpp"
#include "scorerule/simlab.hpp"

namespace {

using nlohmann::json;
using namespace scorerule;

json vector_to_json(const VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

json matrix_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) row[j] = m(i, j);
    rows.push_back(row);
  }
  return rows;
}

VectorXd parse_vector(const std::string& text) {
  std::stringstream ss(text);
  std::string field;
  std::vector<double> vals;
  while (std::getline(ss, field, ',')) vals.push_back(std::stod(field));
  return Eigen::Map<const VectorXd>(vals.data(), vals.size());
}

void write_output(const std::string& out_path, const std::string& payload) {
  if (out_path.empty() || out_path == "-") {
    std::cout << payload;
    if (payload.empty() || payload.back() != '\n') std::cout << "\n";
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw ScoreRuleError("cannot write " + out_path);
  out << payload;
}

struct CommonOptions {
  std::string model_kind = "location-scale";
  std::string center = "normal";
  int q = 10;
  int p = 3;
  double sigma = 1.0;
  std::string rule = "log";
  double gamma = 0.0;
  bool gamma_set = false;
  std::string data_path;
  std::string out_path;
  std::string format = "json";
};

void add_model_rule_flags(CLI::App* cmd, CommonOptions& opt) {
  cmd->add_option("--model", opt.model_kind, "model family")
      ->check(CLI::IsMember({"location-scale", "normal-location", "equicorr", "regression"}));
  cmd->add_option("--center", opt.center, "center density for location-scale")
      ->check(CLI::IsMember({"normal", "logistic", "cauchy"}));
  cmd->add_option("--q", opt.q, "dimension for equicorr");
  cmd->add_option("--p", opt.p, "coefficient count for regression");
  cmd->add_option("--sigma", opt.sigma, "known scale where applicable");
  cmd->add_option("--rule", opt.rule, "scoring rule")
      ->check(CLI::IsMember({"log", "tsallis", "hyvarinen", "bregman-brier", "pairwise"}));
  cmd->add_option("--gamma", opt.gamma, "tsallis index (> 1)")
      ->each([&opt](const std::string&) { opt.gamma_set = true; });
  cmd->add_option("--out", opt.out_path, "output path (default stdout)");
  cmd->add_option("--format", opt.format, "output format")
      ->check(CLI::IsMember({"json", "csv", "pretty-text"}));
}

ModelConfig model_config_of(const CommonOptions& opt) {
  ModelConfig config;
  config.kind = opt.model_kind;
  config.center = opt.center;
  config.q = opt.q;
  config.p = opt.p;
  config.sigma = opt.sigma;
  return config;
}

std::optional<double> gamma_of(const CommonOptions& opt) {
  if (opt.rule == "tsallis" && !opt.gamma_set) {
    throw CLI::ValidationError("--gamma", "rule tsallis requires --gamma");
  }
  if (opt.rule != "tsallis" && opt.gamma_set) {
    throw CLI::ValidationError("--gamma", "--gamma is only valid with --rule tsallis");
  }
  return opt.gamma_set ? std::optional<double>(opt.gamma) : std::nullopt;
}

json fit_payload(const FitResult& fr, const SandwichEstimate& sw) {
  json j;
  j["theta_hat"] = vector_to_json(fr.theta_hat);
  j["score_at_min"] = fr.score_at_min;
  j["converged"] = fr.converged;
  j["iterations"] = fr.iterations;
  j["grad_norm_at_min"] = fr.grad_norm_at_min;
  j["J"] = matrix_to_json(sw.J);
  j["K"] = matrix_to_json(sw.K);
  j["V"] = matrix_to_json(sw.V);
  j["G"] = matrix_to_json(sw.G);
  return j;
}

std::string csv_line(const VectorXd& v) {
  std::string out;
  char buf[48];
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.12g", v[i]);
    if (i) out += ",";
    out += buf;
  }
  return out;
}

int run_fit(const CommonOptions& opt) {
  const auto model = make_model(model_config_of(opt));
  const auto rule = make_rule(opt.rule, gamma_of(opt), *model);
  const MatrixXd data = read_csv(opt.data_path);
  const FitResult fr = fit(*rule, *model, data);
  const SandwichEstimate sw = estimate_sandwich(*rule, *model, data, fr.theta_hat);
  if (opt.format == "csv") {
    write_output(opt.out_path, "theta_hat\n" + csv_line(fr.theta_hat) + "\n");
  } else if (opt.format == "pretty-text") {
    std::ostringstream ss;
    ss << "theta_hat:";
    for (Eigen::Index i = 0; i < fr.theta_hat.size(); ++i) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), " %.3f", fr.theta_hat[i]);
      ss << buf;
    }
    ss << "\nscore: " << fr.score_at_min << "\n";
    write_output(opt.out_path, ss.str());
  } else {
    write_output(opt.out_path, fit_payload(fr, sw).dump(2) + "\n");
  }
  return 0;
}

int run_test(const CommonOptions& opt, const std::string& theta0_text,
             const std::string& psi_text, const std::string& stat_name,
             const std::vector<double>& levels) {
  const auto model = make_model(model_config_of(opt));
  const auto rule = make_rule(opt.rule, gamma_of(opt), *model);
  const MatrixXd data = read_csv(opt.data_path);

  std::vector<TestReport> reports;
  if (!psi_text.empty()) {
    // profile block: comma-separated index=value pairs
    std::vector<int> idx;
    std::vector<double> vals;
    std::stringstream ss(psi_text);
    std::string pair;
    while (std::getline(ss, pair, ',')) {
      const auto eq = pair.find('=');
      if (eq == std::string::npos) {
        throw CLI::ValidationError("--psi", "expected index=value pairs");
      }
      idx.push_back(std::stoi(pair.substr(0, eq)));
      vals.push_back(std::stod(pair.substr(eq + 1)));
    }
    const VectorXd psi0 = Eigen::Map<const VectorXd>(vals.data(), vals.size());
    reports = profile_stats(*rule, *model, data, idx, psi0);
  } else {
    if (theta0_text.empty()) throw CLI::ValidationError("--theta0", "required for test");
    const VectorXd theta0 = parse_vector(theta0_text);
    const FitResult fr = fit(*rule, *model, data);
    const SandwichEstimate sw = estimate_sandwich(*rule, *model, data, fr.theta_hat);
    if (stat_name == "wald" || stat_name == "all") {
      reports.push_back(wald_stat(fr, sw, theta0));
    }
    if (stat_name == "score" || stat_name == "all") {
      reports.push_back(
          score_stat(*rule, *model, data, theta0, estimate_sandwich(*rule, *model, data, theta0)));
    }
    if (stat_name == "ratio" || stat_name == "all") {
      reports.push_back(ratio_stat(*rule, *model, data, theta0, fr, &sw));
    }
    if (stat_name == "ratio_adj") {
      reports.push_back(ratio_adj_scalar(ratio_stat(*rule, *model, data, theta0, fr, &sw), sw));
    }
    if (stat_name == "ratio_m1" || stat_name == "all") {
      TestReport base;
      base.statistic_name = StatisticName::Ratio;
      base.value = ratio_statistic_value(*rule, *model, data, theta0, fr);
      reports.push_back(ratio_m1(base, sw));
    }
    if (stat_name == "ratio_inv" || stat_name == "all") {
      reports.push_back(ratio_inv(*rule, *model, data, theta0, fr, sw));
    }
    if (reports.empty()) throw CLI::ValidationError("--stat", "unknown statistic " + stat_name);
  }

  json rows = json::array();
  for (const auto& rep : reports) {
    json r;
    r["statistic"] = to_string(rep.statistic_name);
    r["value"] = rep.value;
    r["null_law"] = rep.null_law.kind == NullLaw::Kind::ChiSq
                        ? json{{"kind", "chisq"}, {"df", rep.null_law.df}}
                        : json{{"kind", "mixture-chisq"},
                               {"weights", vector_to_json(rep.null_law.weights)}};
    r["p_value"] = rep.p_value;
    if (rep.zero_score_flag) r["zero_score_flag"] = true;
    json cov = json::object();
    for (double level : levels) {
      char key[16];
      std::snprintf(key, sizeof(key), "%g", level);
      cov[key] = rep.covered(level);
    }
    r["covered"] = cov;
    rows.push_back(r);
  }
  if (opt.format == "csv") {
    std::ostringstream ss;
    ss << "statistic,value,p_value\n";
    for (const auto& rep : reports) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%s,%.12g,%.12g\n",
                    to_string(rep.statistic_name).c_str(), rep.value, rep.p_value);
      ss << buf;
    }
    write_output(opt.out_path, ss.str());
  } else {
    write_output(opt.out_path, rows.dump(2) + "\n");
  }
  return 0;
}

int run_simulate(const std::string& spec_path, std::optional<int> reps,
                 std::optional<std::uint64_t> seed, const std::string& out_path,
                 const std::string& format) {
  std::ifstream in(spec_path);
  if (!in) throw ScoreRuleError("cannot open " + spec_path);
  std::stringstream buf;
  buf << in.rdbuf();
  ExperimentSpec spec = parse_experiment_spec(buf.str());
  if (reps) spec.replications = *reps;
  if (seed) spec.seed = *seed;
  const CoverageTable table = run_experiment(spec);
  if (format == "json") {
    write_output(out_path, table.to_json() + "\n");
  } else if (format == "pretty-text") {
    write_output(out_path, table.to_pretty());
  } else {
    write_output(out_path, table.to_csv());
  }
  return 0;
}

int run_robust_check(const CommonOptions& opt, double widen) {
  const auto model = make_model(model_config_of(opt));
  const auto rule = make_rule(opt.rule, gamma_of(opt), *model);
  if (model->obs_dim() != 1) {
    throw ScoreRuleError("robust-check handles scalar-observation models");
  }
  VectorXd theta(model->param_dim());
  if (opt.model_kind == "location-scale") {
    theta << 0.0, 1.0;
  } else {
    theta.setZero();
  }
  const InfluenceProfile prof = influence_sup_probe(*rule, *model, theta, widen);

  json j;
  j["model"] = model->name();
  j["rule"] = rule->name();
  j["theta"] = vector_to_json(theta);
  j["sup_norm"] = prof.sup_norm;
  j["attained_at"] = prof.attained_at;
  j["unbounded"] = prof.unbounded_flag;

  const CenterDensity& center = opt.center == "logistic"   ? logistic_center()
                                : opt.center == "cauchy"   ? cauchy_center()
                                                           : normal_center();
  if (opt.rule == "tsallis" || opt.rule == "log" || opt.rule == "bregman-brier") {
    std::function<double(double)> gauge;
    if (opt.rule == "log") {
      gauge = [](double t) { return 1.0 / t; };
    } else if (opt.rule == "bregman-brier") {
      gauge = [](double) { return 2.0; };
    } else {
      const double g = opt.gamma;
      gauge = [g](double t) { return g * (g - 1.0) * std::pow(t, g - 2.0); };
    }
    const BoundednessVerdict verdict = check_bregman_location(gauge, center);
    j["location_condition"] = {{"bounded", verdict.bounded},
                               {"sup", verdict.sup},
                               {"attained_at", verdict.attained_at}};
  }
  const DensityBoundProbe bound = density_bound_probe(center);
  j["density_bound"] = {{"sup_f", bound.sup_f},
                        {"sup_abs_df", bound.sup_abs_df},
                        {"bound_1_plus_2K", bound.bound},
                        {"respected", bound.sup_f <= bound.bound}};
  write_output(opt.out_path, j.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scorerule: estimation and calibrated inference with proper scoring rules"};
  app.require_subcommand(1);

  CommonOptions fit_opt;
  auto* fit_cmd = app.add_subcommand("fit", "minimize an empirical score on a dataset");
  add_model_rule_flags(fit_cmd, fit_opt);
  fit_cmd->add_option("--data", fit_opt.data_path, "CSV dataset")->required();

  CommonOptions test_opt;
  std::string theta0_text, psi_text, stat_name = "all";
  std::vector<double> levels{0.90, 0.95, 0.99};
  auto* test_cmd = app.add_subcommand("test", "test statistics at theta0 (or a psi block)");
  add_model_rule_flags(test_cmd, test_opt);
  test_cmd->add_option("--data", test_opt.data_path, "CSV dataset")->required();
  test_cmd->add_option("--theta0", theta0_text, "comma-separated theta0");
  test_cmd->add_option("--psi", psi_text, "profile block as index=value pairs");
  test_cmd->add_option("--stat", stat_name, "statistic")
      ->check(CLI::IsMember({"all", "wald", "score", "ratio", "ratio_adj", "ratio_m1",
                             "ratio_inv"}));
  test_cmd->add_option("--levels", levels, "confidence levels")->delimiter(',');

  std::string spec_path, sim_out, sim_format = "csv";
  int sim_reps = -1;
  std::int64_t sim_seed = -1;
  auto* sim_cmd = app.add_subcommand("simulate", "run a coverage experiment spec");
  sim_cmd->add_option("--spec", spec_path, "experiment spec JSON")->required();
  sim_cmd->add_option("--reps", sim_reps, "override replication count");
  sim_cmd->add_option("--seed", sim_seed, "override master seed");
  sim_cmd->add_option("--out", sim_out, "output path (default stdout)");
  sim_cmd->add_option("--format", sim_format, "output format")
      ->check(CLI::IsMember({"json", "csv", "pretty-text"}));

  CommonOptions robust_opt;
  double widen = 1.0;
  auto* robust_cmd = app.add_subcommand("robust-check", "influence/boundedness probes");
  add_model_rule_flags(robust_cmd, robust_opt);
  robust_cmd->add_option("--widen", widen, "grid widening factor");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand(fit_cmd)) return run_fit(fit_opt);
    if (app.got_subcommand(test_cmd)) {
      return run_test(test_opt, theta0_text, psi_text, stat_name, levels);
    }
    if (app.got_subcommand(sim_cmd)) {
      return run_simulate(spec_path,
                          sim_reps > 0 ? std::optional<int>(sim_reps) : std::nullopt,
                          sim_seed >= 0 ? std::optional<std::uint64_t>(sim_seed) : std::nullopt,
                          sim_out, sim_format);
    }
    if (app.got_subcommand(robust_cmd)) return run_robust_check(robust_opt, widen);
  } catch (const CLI::Error& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const ScoreRuleError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
