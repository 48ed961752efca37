#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pdsim {

// Cluster topology and sizing. Bandwidths are bytes/s internally; config
// files may state Gbps and are converted at parse time.
struct ClusterConfig {
  int prefill_nodes = 1;          // P
  int decode_nodes = 1;           // D
  int engines_per_node = 8;       // g, one GPU + one CNIC each
  double cnic_bandwidth = 50e9;   // B, bytes/s per engine, per direction
  double storage_multiple = 1.0;  // s: node storage bandwidth = s * B
  double dram_bandwidth = 500e9;  // M, bytes/s, half duplex
  int n_layer = 4;
  std::int64_t kv_bytes_per_token_per_layer = 1024;
  int block_size_tokens = 64;
  std::int64_t hbm_capacity_tokens = 4'000'000;  // per DE engine
  std::int64_t pe_buffer_bytes = 1LL << 34;
  std::int64_t de_buffer_bytes = 1LL << 34;

  void validate() const;  // throws std::invalid_argument

  double node_storage_bandwidth() const {
    return storage_multiple * cnic_bandwidth;
  }
  std::int64_t kv_bytes_per_token() const {
    return static_cast<std::int64_t>(n_layer) * kv_bytes_per_token_per_layer;
  }
  std::int64_t layer_block_bytes() const {
    return static_cast<std::int64_t>(block_size_tokens) *
           kv_bytes_per_token_per_layer;
  }
  std::int64_t full_block_bytes() const {
    return static_cast<std::int64_t>(n_layer) * layer_block_bytes();
  }
  int total_engines() const {
    return (prefill_nodes + decode_nodes) * engines_per_node;
  }
};

struct Round {
  std::int64_t append_tokens = 0;
  std::int64_t gen_tokens = 1;
};

// Multi-turn agent trace; round i's prompt is the prior context plus its
// appended tokens, and decoding emits exactly gen_tokens.
struct Trajectory {
  std::string id;
  std::vector<Round> rounds;

  void validate() const;  // throws std::invalid_argument
  std::int64_t total_tokens() const;
};

// Tokens accumulated before round `round_index` (appends + generations of
// all earlier rounds). Throws std::out_of_range.
std::int64_t context_before(const Trajectory& traj, std::size_t round_index);

// Ceil division to full-block granularity.
std::int64_t blocks_for(std::int64_t token_count, const ClusterConfig& cfg);

enum class ReadPath { PEPath, DEPath };
enum class EngineKind { PE, DE };

// One turn in flight. cached_len tokens have KV available in storage;
// append_len need prefill; gen_target will be decoded.
struct RequestState {
  std::string trajectory_id;
  int round_index = 0;
  std::int64_t cached_len = 0;
  std::int64_t append_len = 0;
  std::int64_t gen_target = 1;
  int assigned_pe = -1;
  int assigned_de = -1;
  ReadPath read_path = ReadPath::PEPath;
  double t_arrival = -1;
  double t_schedule = -1;
  double t_first_token = -1;
  double t_second_token = -1;
  double t_completion = -1;

  std::int64_t prompt_len() const { return cached_len + append_len; }
  std::int64_t total_len() const { return prompt_len() + gen_target; }
};

// Per-engine load report consumed by the scheduler at fetch time.
struct EngineSnapshot {
  int engine_id = 0;
  int node_id = 0;
  EngineKind kind = EngineKind::PE;
  std::int64_t seq_e = 0;     // unfinished requests
  std::int64_t tok_e = 0;     // total tokens over those requests
  std::int64_t read_q = 0;    // node disk-reading queue, tokens
  std::int64_t hbm_free_tokens = 0;  // DE only
};

enum class BlockKind { LayerBlock, FullBlock };

struct BlockRef {
  BlockKind kind = BlockKind::FullBlock;
  int layer_index = -1;  // LayerBlock only
  std::int64_t token_begin = 0;
  std::int64_t token_end = 0;
  std::int64_t bytes = 0;
};

BlockRef layer_block(const ClusterConfig& cfg, int layer_index,
                     std::int64_t token_begin);
BlockRef full_block(const ClusterConfig& cfg, std::int64_t token_begin);

}  // namespace pdsim
