#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "pdsim/types.hpp"

namespace pdsim {

struct SchedulerParams {
  std::int64_t alpha = 100'000;   // short reading queue threshold, tokens
  std::int64_t beta = 500'000;    // unfinished token upper limit, tokens
  double z_factor = 1.05;         // high-token multiplier
  double compute_quota = 0.3;     // attention-time budget per layer, seconds

  void validate() const {
    if (alpha <= 0 || beta <= 0 || z_factor < 1.0 || compute_quota <= 0)
      throw std::invalid_argument("SchedulerParams: invalid values");
  }
};

// Profiling-fitted per-layer attention time as a function of the batch's
// (cached, bsz) pairs. Evaluated per layer; a whole forward costs
// n_layer times this.
struct AttentionCostModel {
  double coeff_bilinear = 0;   // s per (bsz * cached)
  double coeff_quadratic = 0;  // s per bsz^2
  double coeff_linear = 0;     // s per bsz token
  double constant = 0;         // s per layer invocation
};

struct PendingRequest {
  int id = 0;
  std::int64_t tokens = 0;  // load proxy: cached + append + gen_target
};

struct PeClassification {
  std::vector<int> overloaded;    // C1: tok_e > beta
  std::vector<int> short_queue;   // C2: read_q <= alpha and tok_e <= beta
  std::vector<int> long_queue;    // C3: read_q > alpha and tok_e <= beta
};

PeClassification classify_pes(std::span<const EngineSnapshot> snapshots,
                              const SchedulerParams& params);

struct Assignment {
  int request_id = 0;
  int engine_id = 0;
  int category = 0;  // 2 or 3 for PEs; 1 or 2 for DE phase-2
};

// Inter-engine PE scheduling: FIFO over the waiting queue, argmin tok_e
// within the preferred category, incremental tok_e updates. Returns the
// assigned prefix; remaining requests stay queued.
std::vector<Assignment> schedule_pe_fetch(
    std::span<const PendingRequest> waiting,
    std::span<const EngineSnapshot> pe_snapshots, const SchedulerParams& params);

struct GroupLoad {
  int group_id = 0;
  std::int64_t tok_sum = 0;
};

// DE phase 1: drain the global queue into per-group private queues,
// always appending to the group with minimum token sum (ties: lowest id).
std::vector<std::pair<int, int>> schedule_de_groups(
    std::span<const PendingRequest> global_queue, std::vector<GroupLoad> groups);

// DE phase 2: admit a FIFO prefix R that fits the group's free HBM, compute
// the high-token threshold Z once, then place each request preferring DEs
// that stay under Z (min seq_e), falling back to min tok_e.
std::vector<Assignment> schedule_de_within_group(
    std::span<const PendingRequest> private_queue,
    std::span<const EngineSnapshot> de_snapshots, const SchedulerParams& params);

// Read on the side with the shorter disk reading queue; ties go to the PE
// side for determinism.
ReadPath select_read_path(std::int64_t pe_node_read_q,
                          std::int64_t de_node_read_q);

struct BatchItem {
  int request_id = 0;
  std::int64_t cached = 0;
  std::int64_t bsz = 0;
};

// Per-layer attention time estimate for one forward batch.
double estimate_attention_time(std::span<const BatchItem> batch,
                               const AttentionCostModel& model);

struct ForwardBatch {
  std::vector<BatchItem> items;
  bool chunked = false;
  int chunked_request_id = -1;
  std::int64_t chunk_bsz = 0;      // tokens taken from the chunked request
  std::int64_t consumed_whole = 0; // whole requests taken from the queue head
  double estimated_time = 0;
};

class QuotaInfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// FIFO packing under the compute quota with binary-search chunking.
// Throws QuotaInfeasibleError when even a 1-token chunk of the head
// request alone exceeds the quota.
ForwardBatch build_forward_batch(std::span<const BatchItem> fifo_queue,
                                 const SchedulerParams& params,
                                 const AttentionCostModel& model);

}  // namespace pdsim
