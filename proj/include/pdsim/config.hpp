#pragma once
// Experiment configuration: JSON parsing, defaults, unit conversion, and
// sweep-grid expansion.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdsim/analyzer.hpp"
#include "pdsim/desim.hpp"
#include "pdsim/scheduler.hpp"
#include "pdsim/types.hpp"
#include "pdsim/workload.hpp"

namespace pdsim {

// Bandwidths are written as Gbit/s in config files and converted once here.
double gbps_to_bytes(double gbps);
double bytes_to_gbps(double bytes_per_s);

struct SweepAxes {
  std::vector<std::pair<int, int>> pd_ratios;     // (prefill_nodes, decode_nodes)
  std::vector<double> append_scales;
  std::vector<double> gen_scales;
  std::vector<double> arrival_rates;              // 0 = offline
  std::vector<std::string> policies;              // "dual_path" | "pe_only" | "oracle"
  std::vector<std::int64_t> max_lens;
  bool empty() const;
};

struct ExperimentConfig {
  ClusterConfig cluster;
  ModelSpec model;
  SchedulerParams sched;           // alpha/beta <= 0 means "derive from cluster"
  WorkloadSpec workload;
  desim::SimOptions sim;
  desim::SloSpec slo;
  desim::SteadySpec steady;
  double arrival_rate = 0;         // requests/s; 0 = offline batch
  SweepAxes sweep;

  void validate() const;
};

// Fills alpha/beta when unset: alpha = tokens readable from node storage in
// 3 s, beta = tokens one GPU prefills in 5 s under the linear cost term.
SchedulerParams resolve_scheduler_params(const ExperimentConfig& cfg);

ExperimentConfig default_config();

nlohmann::json to_json(const ExperimentConfig& cfg);
// Parses on top of defaults; unknown keys are rejected.
ExperimentConfig from_json(const nlohmann::json& j);
ExperimentConfig load_experiment(const std::string& path);

desim::Policy policy_from_string(const std::string& s);
const char* to_string(desim::Policy p);

struct SweepCell {
  std::string name;                // e.g. "pd2x1_app1.0_gen1.0_aps0.3_dual_path"
  ExperimentConfig cfg;
};

// Cartesian product of the non-empty axes; empty axes keep the base value.
std::vector<SweepCell> expand_sweep(const ExperimentConfig& base);

}  // namespace pdsim
