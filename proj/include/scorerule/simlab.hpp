#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "scorerule/infer.hpp"
#include "scorerule/models.hpp"

namespace scorerule {

/// Runs fn(i) for i in [0, count) on a worker pool; the pool size is capped
/// by the SCORERULE_THREADS environment variable.  Work items own their
/// index, so reductions over preallocated slots stay deterministic.
void parallel_for(int count, const std::function<void(int)>& fn);
int worker_count();

enum class DataLaw { Clean, Contaminated };
std::string to_string(DataLaw law);

enum class RowStat { LR, Wald, Score, Ratio, RatioAdj, RatioM1, RatioInv, HuberWald };
std::string to_string(RowStat stat);

struct RowSpec {
  RowStat stat = RowStat::Wald;
  std::string rule_kind = "log";   // ignored for HuberWald; LR forces log
  std::optional<double> gamma;
  std::string label;               // derived when empty
};

struct ModelConfig {
  std::string kind = "location-scale";  // location-scale | normal-location |
                                        // equicorr | regression
  std::string center = "normal";        // location-scale center density
  int q = 10;                           // equicorr dimension
  int p = 3;                            // regression coefficients
  double sigma = 1.0;                   // known scale where applicable
};

struct ExperimentSpec {
  std::string name = "experiment";
  ModelConfig model;
  VectorXd theta;                       // true parameter; statistics evaluated here
  std::vector<DataLaw> data_laws{DataLaw::Clean};
  double contamination_eps = 0.05;
  double contamination_scale = 10.0;    // contaminant scale multiplier
  std::vector<int> sample_sizes{30};
  int replications = 2000;
  std::vector<double> levels{0.90, 0.95, 0.99};
  std::uint64_t seed = 1;
  std::vector<RowSpec> rows;
};

struct CoverageCell {
  DataLaw law = DataLaw::Clean;
  int n = 0;
  double level = 0.0;
  double coverage = 0.0;
  double se = 0.0;        // sqrt(c(1-c)/reps_used)
  int excluded = 0;       // non-converged replications, reported not hidden
  int reps_used = 0;
};

struct CoverageRow {
  RowSpec spec;
  std::string label;
  std::vector<CoverageCell> cells;  // law-major, then n, then level

  const CoverageCell& cell(DataLaw law, int n, double level) const;
};

struct CoverageTable {
  ExperimentSpec spec;
  std::vector<CoverageRow> rows;

  const CoverageRow& row(const std::string& label) const;
  std::string to_csv() const;          // wide; >= 10 significant digits
  std::string to_pretty() const;       // 3-decimal table layout
  std::string to_json() const;         // includes exclusion counts and spec echo
};

std::shared_ptr<ParametricModel> make_model(const ModelConfig& config);

/// Contaminant family for a model config: same shape with the scale blown up
/// by `scale` (responses only, for regression).
std::shared_ptr<ParametricModel> make_contaminant(const ModelConfig& config, double scale);

/// Monte Carlo coverage experiment: per replication, draw data under the law,
/// fit every rule the rows need, evaluate each statistic at the true theta
/// and record whether the confidence region covers it.
CoverageTable run_experiment(const ExperimentSpec& spec);

/// Single Huber-comparator Wald row under the same harness.
CoverageRow huber_wald_row(const ExperimentSpec& spec);

ExperimentSpec parse_experiment_spec(const std::string& json_text);
std::string experiment_spec_to_json(const ExperimentSpec& spec);

}  // namespace scorerule
