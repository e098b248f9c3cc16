#include "scorerule/simlab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "scorerule/estimate.hpp"
#include "scorerule/huber.hpp"
#include "scorerule/rng.hpp"

namespace scorerule {

namespace {

using nlohmann::json;

std::string fmt(double v, const char* spec = "%.12g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// worker pool

int worker_count() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n <= 0) n = 1;
  if (const char* env = std::getenv("SCORERULE_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n;
}

void parallel_for(int count, const std::function<void(int)>& fn) {
  const int workers = std::min(worker_count(), count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// names

std::string to_string(DataLaw law) {
  return law == DataLaw::Clean ? "clean" : "contaminated";
}

std::string to_string(RowStat stat) {
  switch (stat) {
    case RowStat::LR: return "lr";
    case RowStat::Wald: return "wald";
    case RowStat::Score: return "score";
    case RowStat::Ratio: return "ratio";
    case RowStat::RatioAdj: return "ratio_adj";
    case RowStat::RatioM1: return "ratio_m1";
    case RowStat::RatioInv: return "ratio_inv";
    case RowStat::HuberWald: return "huber_wald";
  }
  return "unknown";
}

namespace {

RowStat row_stat_from_string(const std::string& s) {
  if (s == "lr") return RowStat::LR;
  if (s == "wald") return RowStat::Wald;
  if (s == "score") return RowStat::Score;
  if (s == "ratio") return RowStat::Ratio;
  if (s == "ratio_adj") return RowStat::RatioAdj;
  if (s == "ratio_m1") return RowStat::RatioM1;
  if (s == "ratio_inv") return RowStat::RatioInv;
  if (s == "huber_wald") return RowStat::HuberWald;
  throw ScoreRuleError("unknown statistic: " + s);
}

std::string default_label(const RowSpec& row) {
  if (row.stat == RowStat::HuberWald) return "huber_wald";
  std::string label = to_string(row.stat) + "[" + row.rule_kind;
  if (row.gamma) label += " gamma=" + fmt(*row.gamma, "%g");
  return label + "]";
}

const CenterDensity& center_by_name(const std::string& name) {
  if (name == "normal") return normal_center();
  if (name == "logistic") return logistic_center();
  if (name == "cauchy") return cauchy_center();
  if (name == "exponential") return exponential_center();
  throw ScoreRuleError("unknown center density: " + name);
}

}  // namespace

// ---------------------------------------------------------------------------
// model factory

std::shared_ptr<ParametricModel> make_model(const ModelConfig& config) {
  if (config.kind == "location-scale") {
    return std::make_shared<LocationScaleModel>(center_by_name(config.center));
  }
  if (config.kind == "normal-location") {
    return std::make_shared<NormalLocationModel>(config.sigma);
  }
  if (config.kind == "equicorr") return std::make_shared<EquiCorrelatedNormal>(config.q);
  if (config.kind == "regression") {
    return std::make_shared<LinearRegressionModel>(config.p, config.sigma);
  }
  throw ScoreRuleError("unknown model kind: " + config.kind);
}

std::shared_ptr<ParametricModel> make_contaminant(const ModelConfig& config, double scale) {
  if (config.kind == "location-scale") {
    return std::make_shared<LocationScaleModel>(center_by_name(config.center));
  }
  if (config.kind == "normal-location") {
    return std::make_shared<NormalLocationModel>(config.sigma * scale);
  }
  if (config.kind == "regression") {
    return std::make_shared<LinearRegressionModel>(config.p, config.sigma * scale);
  }
  throw ScoreRuleError("no contaminant family for model kind: " + config.kind);
}

// ---------------------------------------------------------------------------
// coverage containers

const CoverageCell& CoverageRow::cell(DataLaw law, int n, double level) const {
  for (const auto& c : cells) {
    if (c.law == law && c.n == n && std::abs(c.level - level) < 1e-12) return c;
  }
  throw ScoreRuleError("no such coverage cell");
}

const CoverageRow& CoverageTable::row(const std::string& label) const {
  for (const auto& r : rows) {
    if (r.label == label) return r;
  }
  throw ScoreRuleError("no coverage row labelled " + label);
}

// ---------------------------------------------------------------------------
// the experiment driver

namespace {

struct RuleKey {
  std::string kind;
  double gamma = 0.0;
  bool operator<(const RuleKey& o) const {
    return std::tie(kind, gamma) < std::tie(o.kind, o.gamma);
  }
};

struct RepRowOutcome {
  bool ok = false;
  std::vector<std::uint8_t> covered;  // per level
};

void validate_spec(const ExperimentSpec& spec, const ParametricModel& model) {
  if (spec.rows.empty()) throw ScoreRuleError("experiment needs at least one row");
  if (spec.replications < 100) throw ScoreRuleError("replications must be >= 100");
  if (spec.levels.empty()) throw ScoreRuleError("experiment needs nominal levels");
  for (double level : spec.levels) {
    if (!(level > 0.0 && level < 1.0)) throw ScoreRuleError("levels must lie in (0,1)");
  }
  if (spec.theta.size() != model.param_dim()) {
    throw ScoreRuleError("theta has wrong dimension for model " + model.name());
  }
  model.check_theta(spec.theta);
  if (!(spec.contamination_eps >= 0.0 && spec.contamination_eps < 1.0)) {
    throw ScoreRuleError("contamination epsilon must be in [0,1)");
  }
  for (const auto& row : spec.rows) {
    if (row.stat == RowStat::RatioAdj && model.param_dim() != 1) {
      throw NotScalarParam("ratio_adj row needs a scalar parameter");
    }
    if (row.stat == RowStat::LR && row.rule_kind != "log") {
      throw ScoreRuleError("lr row uses the log score");
    }
    if (row.stat == RowStat::HuberWald && spec.model.kind != "location-scale" &&
        spec.model.kind != "regression") {
      throw ScoreRuleError("huber_wald rows support location-scale and regression only");
    }
  }
  const bool contaminated =
      std::find(spec.data_laws.begin(), spec.data_laws.end(), DataLaw::Contaminated) !=
      spec.data_laws.end();
  if (contaminated && spec.model.kind == "equicorr") {
    throw ScoreRuleError("contaminated law is not defined for the equicorr model");
  }
}

VectorXd contaminant_theta_for(const ModelConfig& config, const VectorXd& theta,
                               double scale) {
  if (config.kind == "location-scale") {
    VectorXd t = theta;
    t[1] *= scale;
    return t;
  }
  return theta;  // scale inflation lives in the contaminant model itself
}

std::vector<RepRowOutcome> evaluate_replication(
    const ExperimentSpec& spec, const ParametricModel& model,
    const std::map<RuleKey, std::shared_ptr<const ScoringRule>>& rules,
    const MatrixXd& data) {
  const VectorXd& theta0 = spec.theta;

  struct RuleState {
    bool ok = false;
    FitResult fit;
    SandwichEstimate sandwich;
    std::optional<double> ratio_value;
  };
  std::map<RuleKey, RuleState> state;
  for (const auto& [key, rule] : rules) {
    RuleState st;
    try {
      st.fit = fit(*rule, model, data);
      st.sandwich = estimate_sandwich(*rule, model, data, st.fit.theta_hat);
      st.ok = true;
    } catch (const ScoreRuleError&) {
      st.ok = false;
    }
    state.emplace(key, std::move(st));
  }

  std::vector<RepRowOutcome> out(spec.rows.size());
  for (std::size_t ri = 0; ri < spec.rows.size(); ++ri) {
    const RowSpec& row = spec.rows[ri];
    RepRowOutcome outcome;
    outcome.covered.assign(spec.levels.size(), 0);
    try {
      TestReport report;
      if (row.stat == RowStat::HuberWald) {
        if (spec.model.kind == "regression") {
          report = huber_wald_regression(huber_regression(data), theta0);
        } else {
          report = huber_wald_location_scale(huber_location_scale(data.col(0)), theta0);
        }
      } else {
        const RuleKey key{row.rule_kind, row.gamma.value_or(0.0)};
        const auto& rule = *rules.at(key);
        RuleState& st = state.at(key);
        if (!st.ok) {
          out[ri] = std::move(outcome);  // excluded
          continue;
        }
        auto ratio_value = [&]() {
          if (!st.ratio_value) {
            st.ratio_value = ratio_statistic_value(rule, model, data, theta0, st.fit);
          }
          return *st.ratio_value;
        };
        switch (row.stat) {
          case RowStat::LR: {
            report.statistic_name = StatisticName::Ratio;
            report.value = ratio_value();
            report.null_law = NullLaw{NullLaw::Kind::ChiSq, model.param_dim(), {}};
            report.p_value = report.null_law.p_value(report.value);
            break;
          }
          case RowStat::Wald:
            report = wald_stat(st.fit, st.sandwich, theta0);
            break;
          case RowStat::Score: {
            const SandwichEstimate sw0 = estimate_sandwich(rule, model, data, theta0);
            report = score_stat(rule, model, data, theta0, sw0);
            break;
          }
          case RowStat::Ratio:
            report = ratio_stat(rule, model, data, theta0, st.fit, &st.sandwich);
            break;
          case RowStat::RatioAdj: {
            TestReport base;
            base.statistic_name = StatisticName::Ratio;
            base.value = ratio_value();
            report = ratio_adj_scalar(base, st.sandwich);
            break;
          }
          case RowStat::RatioM1: {
            TestReport base;
            base.statistic_name = StatisticName::Ratio;
            base.value = ratio_value();
            report = ratio_m1(base, st.sandwich);
            break;
          }
          case RowStat::RatioInv:
            report = ratio_inv(rule, model, data, theta0, st.fit, st.sandwich);
            break;
          default:
            throw ScoreRuleError("unhandled statistic");
        }
      }
      for (std::size_t li = 0; li < spec.levels.size(); ++li) {
        outcome.covered[li] = report.covered(spec.levels[li]) ? 1 : 0;
      }
      outcome.ok = true;
    } catch (const ScoreRuleError&) {
      outcome.ok = false;
    }
    out[ri] = std::move(outcome);
  }
  return out;
}

}  // namespace

CoverageTable run_experiment(const ExperimentSpec& spec) {
  const auto model = make_model(spec.model);
  validate_spec(spec, *model);

  std::map<RuleKey, std::shared_ptr<const ScoringRule>> rules;
  for (const auto& row : spec.rows) {
    if (row.stat == RowStat::HuberWald) continue;
    const RuleKey key{row.rule_kind, row.gamma.value_or(0.0)};
    if (!rules.count(key)) rules[key] = make_rule(row.rule_kind, row.gamma, *model);
  }

  CoverageTable table;
  table.spec = spec;
  table.rows.resize(spec.rows.size());
  for (std::size_t ri = 0; ri < spec.rows.size(); ++ri) {
    table.rows[ri].spec = spec.rows[ri];
    table.rows[ri].label =
        spec.rows[ri].label.empty() ? default_label(spec.rows[ri]) : spec.rows[ri].label;
  }

  ContaminationMixture mixture;
  mixture.core = model;
  mixture.core_theta = spec.theta;
  mixture.eps = spec.contamination_eps;

  int combo_index = 0;
  for (DataLaw law : spec.data_laws) {
    if (law == DataLaw::Contaminated) {
      mixture.contaminant = make_contaminant(spec.model, spec.contamination_scale);
      mixture.contaminant_theta =
          contaminant_theta_for(spec.model, spec.theta, spec.contamination_scale);
    }
    for (int n : spec.sample_sizes) {
      const std::uint64_t combo_seed =
          Rng::derive_seed(spec.seed, 0x10000ULL + std::uint64_t(combo_index++));
      const int reps = spec.replications;
      std::vector<std::vector<RepRowOutcome>> results(reps);
      parallel_for(reps, [&](int r) {
        const std::uint64_t seed = Rng::derive_seed(combo_seed, std::uint64_t(r));
        const MatrixXd data = (law == DataLaw::Clean)
                                  ? model->sample(spec.theta, n, seed)
                                  : mixture.sample(n, seed);
        results[r] = evaluate_replication(spec, *model, rules, data);
      });

      for (std::size_t ri = 0; ri < spec.rows.size(); ++ri) {
        std::vector<long> covered(spec.levels.size(), 0);
        int used = 0;
        for (int r = 0; r < reps; ++r) {
          const RepRowOutcome& o = results[r][ri];
          if (!o.ok) continue;
          ++used;
          for (std::size_t li = 0; li < spec.levels.size(); ++li) covered[li] += o.covered[li];
        }
        const int excluded = reps - used;
        if (excluded > 0.02 * reps) {
          throw TooManyFailures(table.rows[ri].label + " at " + to_string(law) +
                                ", n=" + std::to_string(n) + ": " +
                                std::to_string(excluded) + "/" + std::to_string(reps) +
                                " replications failed");
        }
        for (std::size_t li = 0; li < spec.levels.size(); ++li) {
          CoverageCell cell;
          cell.law = law;
          cell.n = n;
          cell.level = spec.levels[li];
          cell.reps_used = used;
          cell.excluded = excluded;
          cell.coverage = used > 0 ? double(covered[li]) / double(used) : 0.0;
          cell.se = used > 0 ? std::sqrt(cell.coverage * (1.0 - cell.coverage) / used) : 0.0;
          table.rows[ri].cells.push_back(cell);
        }
      }
    }
  }
  return table;
}

CoverageRow huber_wald_row(const ExperimentSpec& spec) {
  ExperimentSpec one = spec;
  RowSpec row;
  row.stat = RowStat::HuberWald;
  one.rows = {row};
  return run_experiment(one).rows.at(0);
}

// ---------------------------------------------------------------------------
// emission

std::string CoverageTable::to_csv() const {
  std::ostringstream out;
  out << "label,stat,rule,gamma";
  if (!rows.empty()) {
    for (const auto& c : rows.front().cells) {
      const std::string key =
          to_string(c.law) + "_n" + std::to_string(c.n) + "_L" + fmt(c.level, "%g");
      out << ",cov@" << key << ",se@" << key << ",excluded@" << key;
    }
  }
  out << "\n";
  for (const auto& row : rows) {
    out << row.label << "," << to_string(row.spec.stat) << ","
        << (row.spec.stat == RowStat::HuberWald ? "" : row.spec.rule_kind) << ","
        << (row.spec.gamma ? fmt(*row.spec.gamma, "%.12g") : "");
    for (const auto& c : row.cells) {
      out << "," << fmt(c.coverage) << "," << fmt(c.se) << "," << c.excluded;
    }
    out << "\n";
  }
  return out.str();
}

std::string CoverageTable::to_pretty() const {
  std::ostringstream out;
  out << spec.name << "  (R=" << spec.replications << ", seed=" << spec.seed << ")\n";
  std::size_t width = 24;
  for (const auto& row : rows) width = std::max(width, row.label.size() + 2);
  out << std::string(width, ' ');
  if (!rows.empty()) {
    for (const auto& c : rows.front().cells) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%12s", (to_string(c.law).substr(0, 5) + " n=" +
                                               std::to_string(c.n) + " " + fmt(c.level, "%g"))
                                                  .c_str());
      out << buf;
    }
  }
  out << "\n";
  for (const auto& row : rows) {
    out << row.label << std::string(width - row.label.size(), ' ');
    for (const auto& c : row.cells) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%12.3f", c.coverage);
      out << buf;
    }
    out << "\n";
  }
  return out.str();
}

namespace {

json spec_to_json_obj(const ExperimentSpec& spec) {
  json j;
  j["name"] = spec.name;
  j["model"] = {{"kind", spec.model.kind},
                {"center", spec.model.center},
                {"q", spec.model.q},
                {"p", spec.model.p},
                {"sigma", spec.model.sigma}};
  j["theta"] = std::vector<double>(spec.theta.data(), spec.theta.data() + spec.theta.size());
  std::vector<std::string> laws;
  for (DataLaw law : spec.data_laws) laws.push_back(to_string(law));
  j["data_laws"] = laws;
  j["contamination"] = {{"epsilon", spec.contamination_eps},
                        {"scale", spec.contamination_scale}};
  j["n"] = spec.sample_sizes;
  j["replications"] = spec.replications;
  j["levels"] = spec.levels;
  j["seed"] = spec.seed;
  json rows = json::array();
  for (const auto& row : spec.rows) {
    json r;
    r["stat"] = to_string(row.stat);
    if (row.stat != RowStat::HuberWald) r["rule"] = row.rule_kind;
    if (row.gamma) r["gamma"] = *row.gamma;
    if (!row.label.empty()) r["label"] = row.label;
    rows.push_back(r);
  }
  j["rows"] = rows;
  return j;
}

}  // namespace

std::string CoverageTable::to_json() const {
  json j;
  j["spec"] = spec_to_json_obj(spec);
  json rows_json = json::array();
  for (const auto& row : rows) {
    json r;
    r["label"] = row.label;
    r["stat"] = to_string(row.spec.stat);
    if (row.spec.stat != RowStat::HuberWald) r["rule"] = row.spec.rule_kind;
    if (row.spec.gamma) r["gamma"] = *row.spec.gamma;
    json cells = json::array();
    for (const auto& c : row.cells) {
      cells.push_back({{"law", to_string(c.law)},
                       {"n", c.n},
                       {"level", c.level},
                       {"coverage", c.coverage},
                       {"se", c.se},
                       {"excluded", c.excluded},
                       {"reps_used", c.reps_used}});
    }
    r["cells"] = cells;
    rows_json.push_back(r);
  }
  j["rows"] = rows_json;
  return j.dump(2);
}

ExperimentSpec parse_experiment_spec(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ScoreRuleError(std::string("bad experiment spec: ") + e.what());
  }
  ExperimentSpec spec;
  spec.name = j.value("name", "experiment");
  if (j.contains("model")) {
    const json& m = j.at("model");
    spec.model.kind = m.value("kind", "location-scale");
    spec.model.center = m.value("center", "normal");
    spec.model.q = m.value("q", 10);
    spec.model.p = m.value("p", 3);
    spec.model.sigma = m.value("sigma", 1.0);
  }
  if (!j.contains("theta")) throw ScoreRuleError("experiment spec needs theta");
  const auto theta = j.at("theta").get<std::vector<double>>();
  spec.theta = Eigen::Map<const VectorXd>(theta.data(), theta.size());
  if (j.contains("data_laws")) {
    spec.data_laws.clear();
    for (const auto& s : j.at("data_laws")) {
      const std::string law = s.get<std::string>();
      if (law == "clean") {
        spec.data_laws.push_back(DataLaw::Clean);
      } else if (law == "contaminated") {
        spec.data_laws.push_back(DataLaw::Contaminated);
      } else {
        throw ScoreRuleError("unknown data law: " + law);
      }
    }
  }
  if (j.contains("contamination")) {
    spec.contamination_eps = j.at("contamination").value("epsilon", 0.05);
    spec.contamination_scale = j.at("contamination").value("scale", 10.0);
  }
  if (j.contains("n")) {
    if (j.at("n").is_array()) {
      spec.sample_sizes = j.at("n").get<std::vector<int>>();
    } else {
      spec.sample_sizes = {j.at("n").get<int>()};
    }
  }
  spec.replications = j.value("replications", 2000);
  if (j.contains("levels")) spec.levels = j.at("levels").get<std::vector<double>>();
  spec.seed = j.value("seed", std::uint64_t(1));
  if (!j.contains("rows")) throw ScoreRuleError("experiment spec needs rows");
  for (const auto& r : j.at("rows")) {
    RowSpec row;
    row.stat = row_stat_from_string(r.at("stat").get<std::string>());
    row.rule_kind = r.value("rule", "log");
    if (r.contains("gamma")) row.gamma = r.at("gamma").get<double>();
    row.label = r.value("label", "");
    spec.rows.push_back(row);
  }
  return spec;
}

std::string experiment_spec_to_json(const ExperimentSpec& spec) {
  return spec_to_json_obj(spec).dump(2);
}

}  // namespace scorerule
