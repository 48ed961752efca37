#include "pdsim/analyzer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pdsim {

bool LinkLoadReport::feasible() const {
  for (const auto& c : constraints)
    if (c.slack() < 0) return false;
  return true;
}

const LinkConstraint& LinkLoadReport::binding() const {
  if (constraints.empty())
    throw std::logic_error("LinkLoadReport: no constraints");
  const LinkConstraint* best = &constraints.front();
  for (const auto& c : constraints)
    if (c.slack() < best->slack()) best = &c;
  return *best;
}

std::pair<double, double> pair_traffic(const ClusterConfig& cfg) {
  cfg.validate();
  const double b = cfg.cnic_bandwidth;
  const double s = cfg.storage_multiple;
  const double g = cfg.engines_per_node;
  const double t_p = b * s / (cfg.decode_nodes * g * g);
  const double t_c = b * s / (cfg.prefill_nodes * g * g);
  return {t_p, t_c};
}

LinkLoadReport link_loads(const ClusterConfig& cfg) {
  cfg.validate();
  const double b = cfg.cnic_bandwidth;
  const double s = cfg.storage_multiple;
  const double g = cfg.engines_per_node;
  const double m = cfg.dram_bandwidth;
  const double pd = static_cast<double>(cfg.prefill_nodes) / cfg.decode_nodes;
  const double unit = b * s / g;

  LinkLoadReport r;
  std::tie(r.t_p, r.t_c) = pair_traffic(cfg);
  r.pe_cnic_read = 2 * unit;
  r.pe_cnic_write = unit * (1 + 1 / pd);
  r.de_cnic_read = unit * (pd + 2);
  r.de_cnic_write = unit * (2 * pd + 1);
  r.pe_dram = 2 * s * b;
  r.de_dram = (3 + 2 * pd) * s * b;
  r.constraints = {
      {"pe_cnic_read", r.pe_cnic_read, b},
      {"pe_cnic_write", r.pe_cnic_write, b},
      {"de_cnic_read", r.de_cnic_read, b},
      {"de_cnic_write", r.de_cnic_write, b},
      {"pe_dram", r.pe_dram, m},
      {"de_dram", r.de_dram, m},
  };
  return r;
}

PdRange feasible_pd_range(long long g, Rational s, Rational m_over_bs) {
  if (s <= 0) throw std::domain_error("feasible_pd_range: s must be > 0");
  if (s >= g) throw std::domain_error("feasible_pd_range: requires s < g");
  const Rational lo = s / (Rational(g) - s);
  Rational hi = (Rational(g) - 2 * s) / s;
  hi = std::min(hi, (Rational(g) - s) / (2 * s));
  hi = std::min(hi, (m_over_bs - 3) / 2);
  PdRange range;
  range.lo = lo;
  range.hi = hi;
  range.empty = (hi <= 0) || (lo > hi);
  return range;
}

PdRange feasible_pd_range(const ClusterConfig& cfg) {
  cfg.validate();
  if (cfg.storage_multiple >= cfg.engines_per_node)
    throw std::domain_error("feasible_pd_range: requires s < g");
  const Rational s = rational_from_double(cfg.storage_multiple);
  const Rational m_over_bs = rational_from_double(
      cfg.dram_bandwidth / (cfg.cnic_bandwidth * cfg.storage_multiple));
  return feasible_pd_range(cfg.engines_per_node, s, m_over_bs);
}

Rational rational_from_double(double x, long long max_den) {
  if (!std::isfinite(x)) throw std::domain_error("rational_from_double: non-finite");
  const bool neg = x < 0;
  double v = neg ? -x : x;
  // Continued-fraction convergents h/k with k bounded.
  long long h0 = 0, h1 = 1, k0 = 1, k1 = 0;
  double frac = v;
  for (int iter = 0; iter < 64; ++iter) {
    const double a_f = std::floor(frac);
    if (a_f > 9e18) break;
    const long long a = static_cast<long long>(a_f);
    const long long h2 = a * h1 + h0;
    const long long k2 = a * k1 + k0;
    if (k2 > max_den) break;
    h0 = h1; h1 = h2; k0 = k1; k1 = k2;
    const double rem = frac - a_f;
    if (rem < 1e-12) break;
    frac = 1.0 / rem;
  }
  if (k1 == 0) return Rational(0);
  return Rational(neg ? -h1 : h1, k1);
}

void ModelSpec::validate() const {
  if (n_layer < 1 || kv_bytes_per_token_per_layer <= 0 ||
      flops_per_token_dense <= 0 || attention_flop_coeff < 0)
    throw std::invalid_argument("ModelSpec: fields must be positive");
}

double cache_compute_ratio(const ModelSpec& spec, std::int64_t context_len,
                           std::int64_t append_len) {
  spec.validate();
  if (append_len < 1 || context_len < append_len)
    throw std::invalid_argument(
        "cache_compute_ratio: require context_len >= append_len >= 1");
  const double bytes = static_cast<double>(context_len) * spec.n_layer *
                       spec.kv_bytes_per_token_per_layer;
  double attn_context = static_cast<double>(context_len);
  if (spec.sparse_topk > 0)
    attn_context = std::min(attn_context, static_cast<double>(spec.sparse_topk));
  const double flops = static_cast<double>(append_len) * spec.flops_per_token_dense +
                       spec.attention_flop_coeff * append_len * attn_context;
  if (flops <= 0) throw std::domain_error("cache_compute_ratio: zero compute");
  return (bytes / 1e9) / (flops / 1e15);
}

}  // namespace pdsim
