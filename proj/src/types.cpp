#include "pdsim/types.hpp"

#include <stdexcept>

namespace pdsim {

void ClusterConfig::validate() const {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("ClusterConfig: " + msg);
  };
  if (prefill_nodes < 1) fail("P must be >= 1");
  if (decode_nodes < 1) fail("D must be >= 1");
  if (engines_per_node < 1) fail("g must be >= 1");
  if (cnic_bandwidth <= 0) fail("B must be > 0");
  if (storage_multiple <= 0 || storage_multiple > engines_per_node)
    fail("s must satisfy 0 < s <= g");
  if (dram_bandwidth <= 0) fail("M must be > 0");
  if (n_layer < 1) fail("n_layer must be >= 1");
  if (kv_bytes_per_token_per_layer <= 0) fail("kv bytes must be > 0");
  if (block_size_tokens < 1) fail("block_size_tokens must be >= 1");
  if (hbm_capacity_tokens < 1) fail("hbm_capacity_tokens must be >= 1");
  if (pe_buffer_bytes < 1 || de_buffer_bytes < 1) fail("buffers must be > 0");
}

void Trajectory::validate() const {
  if (rounds.empty())
    throw std::invalid_argument("Trajectory " + id + ": no rounds");
  for (std::size_t i = 0; i < rounds.size(); ++i) {
    if (rounds[i].append_tokens < 0)
      throw std::invalid_argument("Trajectory " + id + ": negative append in round " +
                                  std::to_string(i));
    if (rounds[i].gen_tokens < 1)
      throw std::invalid_argument("Trajectory " + id + ": gen < 1 in round " +
                                  std::to_string(i));
  }
}

std::int64_t Trajectory::total_tokens() const {
  std::int64_t total = 0;
  for (const auto& r : rounds) total += r.append_tokens + r.gen_tokens;
  return total;
}

std::int64_t context_before(const Trajectory& traj, std::size_t round_index) {
  if (round_index >= traj.rounds.size())
    throw std::out_of_range("context_before: round_index " +
                            std::to_string(round_index) + " out of range for " +
                            std::to_string(traj.rounds.size()) + " rounds");
  std::int64_t sum = 0;
  for (std::size_t j = 0; j < round_index; ++j)
    sum += traj.rounds[j].append_tokens + traj.rounds[j].gen_tokens;
  return sum;
}

std::int64_t blocks_for(std::int64_t token_count, const ClusterConfig& cfg) {
  if (token_count < 0)
    throw std::invalid_argument("blocks_for: negative token count");
  const std::int64_t bs = cfg.block_size_tokens;
  return (token_count + bs - 1) / bs;
}

BlockRef layer_block(const ClusterConfig& cfg, int layer_index,
                     std::int64_t token_begin) {
  BlockRef b;
  b.kind = BlockKind::LayerBlock;
  b.layer_index = layer_index;
  b.token_begin = token_begin;
  b.token_end = token_begin + cfg.block_size_tokens;
  b.bytes = cfg.layer_block_bytes();
  return b;
}

BlockRef full_block(const ClusterConfig& cfg, std::int64_t token_begin) {
  BlockRef b;
  b.kind = BlockKind::FullBlock;
  b.token_begin = token_begin;
  b.token_end = token_begin + cfg.block_size_tokens;
  b.bytes = cfg.full_block_bytes();
  return b;
}

}  // namespace pdsim
