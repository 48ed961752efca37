#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pdsim/metrics.hpp"
#include "pdsim/scheduler.hpp"
#include "pdsim/types.hpp"

namespace pdsim::desim {

enum class ResKind { SnicRead, SnicWrite, CnicRead, CnicWrite, Dram, Gpu };

const char* to_string(ResKind kind);

// One arbitrated capacity. NICs are full duplex (read and write are separate
// resources); DRAM is half duplex (one shared capacity). CNICs run two-class
// weighted round-robin with a guaranteed low-priority floor.
struct Resource {
  int id = 0;
  ResKind kind = ResKind::CnicRead;
  int node_id = -1;
  int engine_id = -1;
  double capacity = 0;  // bytes/s, or compute-seconds/s for Gpu
  bool wrr = false;
  double low_frac = 0.01;
};

struct FlowDemand {
  int id = 0;
  bool high_priority = false;
  std::vector<int> path;  // resource indices
};

// Fluid-flow bandwidth shares: progressive filling (max-min fairness) with
// strict priority for the high class above a guaranteed low-class floor at
// WRR resources. Returns one rate per flow, same order as `flows`.
std::vector<double> arbitrate(std::span<const Resource> resources,
                              std::span<const FlowDemand> flows);

enum class Policy { DualPath, PEOnly, Oracle };
enum class SchedMode { Adaptive, RoundRobin };

enum class Stage {
  StorageRead,   // SNIC read -> host DRAM (full blocks)
  LoopbackH2D,   // PE buffer -> PE HBM, layerwise (PE path)
  PeToDe,        // PE HBM -> DE buffer, layerwise (PE path)
  DeToPe,        // DE buffer -> PE HBM, layerwise (DE path)
  MissMerge,     // miss-token KV PE -> DE buffer (DE path)
  DecodeH2D,     // DE buffer -> DE HBM bulk transfer
  LayerCompute,  // one prefill attention layer on the PE GPU
  Decode,        // autoregressive decode on the DE GPU
  PersistD2H,    // DE HBM -> host DRAM for persistence
  PersistWrite,  // host DRAM -> storage via SNIC
  Burst,         // synthetic high-priority collective burst
};

const char* to_string(Stage stage);

// Calibration constants for compute timing; the fluid network model carries
// everything else.
struct CostModel {
  AttentionCostModel prefill;           // per-layer prefill attention time
  double decode_per_ctx_token = 0;      // s/token/context-token/layer, decode
  double decode_step_overhead = 2e-3;   // s/token fixed
};

// Synthetic collective burst process per CNIC (high-priority class).
struct BurstSpec {
  double period = 1e-3;
  double bytes_per_burst = 1e6;
  double start = 0;
  double stop = 1.0;
};

struct SloSpec {
  double ttft_limit = 4.0;
  double tpot_limit = 0.05;
};

// Desk-scale steady-state rule: TTFT window mean vs the mean `lookback`
// seconds earlier.
struct SteadySpec {
  double window = 15.0;
  double lookback = 180.0;
  double threshold = 0.05;
};

struct SimOptions {
  Policy policy = Policy::DualPath;
  SchedMode sched_mode = SchedMode::Adaptive;
  SchedulerParams sched;
  CostModel cost;
  double submission_overhead = 1e-6;  // per-transfer submission latency
  double batch_amortization = 1.0;    // doorbell batching divisor
  double bucket_width = 0.5;          // utilization time-series bucket, s
  bool record_flows = false;
  bool record_events = false;
  std::optional<BurstSpec> bursts;
  std::uint64_t seed = 1;
};

struct FlowRecord {
  int request_id = -1;
  Stage stage = Stage::StorageRead;
  double bytes = 0;
  double t_start = 0;
  double t_end = 0;
};

struct ResourceUsage {
  ResKind kind;
  int node_id = -1;
  int engine_id = -1;
  double capacity = 0;
  double total_bytes = 0;
  std::vector<double> buckets;  // bytes per bucket_width window
};

struct SchedDecision {
  double t = 0;
  int request_id = 0;
  int pe = -1;
  int de = -1;
  ReadPath path = ReadPath::PEPath;
  int pe_category = 0;
  int de_category = 0;
};

struct SimReport {
  double makespan = 0;  // completion time of the last finished request
  double duration = 0;  // last processed event time
  std::vector<LatencyRecord> latencies;
  std::vector<std::pair<std::string, double>> trajectory_jct;
  std::vector<ResourceUsage> usage;
  double bucket_width = 0.5;
  std::vector<FlowRecord> flows;
  std::vector<std::string> event_log;
  std::vector<SchedDecision> decisions;
  std::vector<double> burst_latencies;
  bool slo_violated = false;
  bool steady_state = false;
  std::size_t completed_requests = 0;
  std::size_t total_requests = 0;

  double mean_jct() const;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Replay all trajectories with the given arrival times (one per trajectory;
// rounds within a trajectory run back-to-back with zero tool latency).
SimReport run(const ClusterConfig& cfg, std::span<const Trajectory> trajectories,
              std::span<const double> arrival_times, const SimOptions& options);

// All trajectories available at t=0; runs to completion.
SimReport run_offline(const ClusterConfig& cfg,
                      std::span<const Trajectory> trajectories,
                      const SimOptions& options);

// Poisson arrivals at `aps` trajectories/s; terminates on TTFT SLO violation
// or detected steady state.
SimReport run_online(const ClusterConfig& cfg,
                     std::span<const Trajectory> trajectories, double aps,
                     const SloSpec& slo, const SteadySpec& steady,
                     const SimOptions& options);

}  // namespace pdsim::desim
