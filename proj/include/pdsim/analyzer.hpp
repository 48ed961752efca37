#pragma once

#include <boost/rational.hpp>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pdsim/types.hpp"

namespace pdsim {

using Rational = boost::rational<long long>;

// Per-pair traffic of the two loading paths and the resulting per-link
// loads, with slack against each link's capacity.
struct LinkConstraint {
  std::string name;
  double load = 0;      // bytes/s
  double capacity = 0;  // bytes/s
  double slack() const { return capacity - load; }
};

struct LinkLoadReport {
  double t_p = 0;  // per-pair traffic, storage-to-prefill path
  double t_c = 0;  // per-pair traffic, storage-to-decode path
  double pe_cnic_read = 0;
  double pe_cnic_write = 0;
  double de_cnic_read = 0;
  double de_cnic_write = 0;
  double pe_dram = 0;
  double de_dram = 0;
  std::vector<LinkConstraint> constraints;

  bool feasible() const;
  // Constraint with the smallest slack (most binding).
  const LinkConstraint& binding() const;
};

std::pair<double, double> pair_traffic(const ClusterConfig& cfg);
LinkLoadReport link_loads(const ClusterConfig& cfg);

struct PdRange {
  Rational lo{0};
  Rational hi{0};
  bool empty = true;
};

// Exact bottleneck-free interval of P/D. m_over_bs = M / (B*s).
// Throws std::domain_error when s >= g.
PdRange feasible_pd_range(long long g, Rational s, Rational m_over_bs);
PdRange feasible_pd_range(const ClusterConfig& cfg);

// Best rational approximation with bounded denominator (continued
// fractions); used to lift config doubles into exact range arithmetic.
Rational rational_from_double(double x, long long max_den = 1'000'000);

// FLOP/byte accounting for one model. attention_flop_coeff is FLOPs per
// (query token x key token) pair summed over all layers; sparse_topk > 0
// caps the effective key count per query (sparse attention).
struct ModelSpec {
  std::string name;
  int n_layer = 1;
  double kv_bytes_per_token_per_layer = 1;
  double flops_per_token_dense = 1;
  double attention_flop_coeff = 0;
  std::int64_t sparse_topk = 0;

  void validate() const;
};

// GB of KV-Cache loaded per PFLOP of prefill compute for one turn.
double cache_compute_ratio(const ModelSpec& spec, std::int64_t context_len,
                           std::int64_t append_len);

}  // namespace pdsim
