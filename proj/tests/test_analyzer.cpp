#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pdsim/analyzer.hpp"

using namespace pdsim;

namespace {
ClusterConfig cfg_pdg(int p, int d, int g, double b = 400, double s = 1,
                      double m_over_bs = 10) {
  ClusterConfig cfg;
  cfg.prefill_nodes = p;
  cfg.decode_nodes = d;
  cfg.engines_per_node = g;
  cfg.cnic_bandwidth = b;
  cfg.storage_multiple = s;
  cfg.dram_bandwidth = m_over_bs * b * s;
  return cfg;
}
}  // namespace

TEST_CASE("pair traffic closed forms") {
  auto [t_p, t_c] = pair_traffic(cfg_pdg(2, 4, 8));
  CHECK(t_p == doctest::Approx(400.0 / 256));  // Bs/(D g^2)
  CHECK(t_c == doctest::Approx(400.0 / 128));  // Bs/(P g^2)
  auto [tp1, tc1] = pair_traffic(cfg_pdg(1, 1, 1));
  CHECK(tp1 == doctest::Approx(400.0));
  CHECK(tc1 == doctest::Approx(400.0));
}

TEST_CASE("link loads at symmetric P=D") {
  const auto rep = link_loads(cfg_pdg(2, 2, 8));
  const double b = 400;
  CHECK(rep.pe_cnic_read == doctest::Approx(b / 4));   // 2Bs/g
  CHECK(rep.pe_cnic_write == doctest::Approx(b / 4));  // (Bs/g)(1+D/P)
  CHECK(rep.de_cnic_read == doctest::Approx(3 * b / 8));
  CHECK(rep.de_cnic_write == doctest::Approx(3 * b / 8));
  CHECK(rep.pe_dram == doctest::Approx(2 * b));
  CHECK(rep.de_dram == doctest::Approx(5 * b));
  CHECK(rep.feasible());
  for (const auto& c : rep.constraints) CHECK(c.slack() >= 0);
}

TEST_CASE("upper boundary tight: P/D = (g-s)/(2s)") {
  const auto rep = link_loads(cfg_pdg(7, 2, 8));
  CHECK(rep.de_cnic_write == doctest::Approx(400.0));  // (B/8)(7+1) = B
  bool found = false;
  for (const auto& c : rep.constraints)
    if (c.name == "de_cnic_write") {
      found = true;
      CHECK(c.slack() == doctest::Approx(0.0));
    }
  CHECK(found);
}

TEST_CASE("lower boundary tight: P/D = s/(g-s)") {
  const auto rep = link_loads(cfg_pdg(1, 7, 8));
  CHECK(rep.pe_cnic_write == doctest::Approx(400.0));  // (B/8)(1+7) = B
}

TEST_CASE("pe cnic read always under B for s <= g") {
  for (int p = 1; p <= 8; ++p)
    for (int d = 1; d <= 8; ++d) {
      const auto rep = link_loads(cfg_pdg(p, d, 8));
      CHECK(rep.pe_cnic_read <= 400.0);
    }
}

TEST_CASE("feasible range matches Eq. 9 exactly") {
  const PdRange r = feasible_pd_range(8, Rational(1), Rational(10));
  REQUIRE(!r.empty);
  CHECK(r.lo == Rational(1, 7));
  CHECK(r.hi == Rational(7, 2));
}

TEST_CASE("feasible range with s=2") {
  const PdRange r = feasible_pd_range(8, Rational(2), Rational(10));
  REQUIRE(!r.empty);
  CHECK(r.lo == Rational(2, 6));  // s/(g-s) = 1/3
  CHECK(r.hi == Rational(3, 2));  // min{(8-4)/2, 6/4, 7/2} = 3/2
}

TEST_CASE("degenerate g=2 gives empty range") {
  const PdRange r = feasible_pd_range(2, Rational(1), Rational(10));
  CHECK(r.empty);
}

TEST_CASE("s >= g rejected") {
  CHECK_THROWS_AS(feasible_pd_range(8, Rational(8), Rational(10)),
                  std::domain_error);
}

TEST_CASE("dram bound can be the binding one") {
  // M/(Bs) = 4 -> hi includes (4-3)/2 = 1/2
  const PdRange r = feasible_pd_range(8, Rational(1), Rational(4));
  REQUIRE(!r.empty);
  CHECK(r.hi == Rational(1, 2));
}

TEST_CASE("slack signs match the rational range") {
  for (int p = 1; p <= 8; ++p)
    for (int d = 1; d <= 8; ++d) {
      const auto cfg = cfg_pdg(p, d, 8);
      const auto rep = link_loads(cfg);
      const PdRange r = feasible_pd_range(cfg);
      const Rational ratio(p, d);
      const bool inside = !r.empty && r.lo <= ratio && ratio <= r.hi;
      CHECK(rep.feasible() == inside);
    }
}

TEST_CASE("monotonicity of pair traffic") {
  double prev_tp = 1e18, prev_tc = 1e18;
  for (int n = 1; n <= 10; ++n) {
    auto [t_p, t_c] = pair_traffic(cfg_pdg(n, n, 8));
    CHECK(t_p < prev_tp);
    CHECK(t_c < prev_tc);
    prev_tp = t_p;
    prev_tc = t_c;
  }
}

TEST_CASE("rational_from_double round trips simple fractions") {
  CHECK(rational_from_double(0.5) == Rational(1, 2));
  CHECK(rational_from_double(3.5) == Rational(7, 2));
  CHECK(rational_from_double(10.0) == Rational(10));
}

TEST_CASE("cache-compute ratio per-token degenerate case") {
  ModelSpec m;
  m.n_layer = 1;
  m.kv_bytes_per_token_per_layer = 1000;
  m.flops_per_token_dense = 1e9;
  m.attention_flop_coeff = 0;
  // 1 token: 1000 bytes / 1e9 FLOP = 1e-6 GB / 1e-6 PFLOP = 1
  CHECK(cache_compute_ratio(m, 1, 1) == doctest::Approx(1.0));
}

TEST_CASE("attention-dominated ratio approaches a constant") {
  ModelSpec m;
  m.n_layer = 4;
  m.kv_bytes_per_token_per_layer = 2048;
  m.flops_per_token_dense = 1;  // negligible dense term
  m.attention_flop_coeff = 1000;
  const double r1 = cache_compute_ratio(m, 1 << 16, 64);
  const double r2 = cache_compute_ratio(m, 1 << 20, 64);
  CHECK(r2 == doctest::Approx(r1).epsilon(1e-3));
}

TEST_CASE("published dense-32B spec lands in the reference band") {
  // architecture card: 64 layers, 8 KV heads x 128 head-dim FP16,
  // 40 query heads, ~32.5B params
  ModelSpec m;
  m.name = "dense-32b-fp16";
  m.n_layer = 64;
  m.kv_bytes_per_token_per_layer = 2 * 8 * 128 * 2;  // k+v, heads, dim, fp16
  m.flops_per_token_dense = 2.0 * 32.5e9;
  m.attention_flop_coeff = 4.0 * 40 * 128 * 64;
  const double r16k = cache_compute_ratio(m, 16384, 429);
  const double r64k = cache_compute_ratio(m, 65536, 429);
  // reference band 117-267 with +-20% tolerance
  CHECK(r16k > 117 * 0.8);
  CHECK(r16k < 267 * 1.2);
  CHECK(r64k > 117 * 0.8);
  CHECK(r64k < 267 * 1.2);
  CHECK(r64k > r16k);
}

TEST_CASE("sparse top-k caps the attention term") {
  ModelSpec dense;
  dense.n_layer = 8;
  dense.kv_bytes_per_token_per_layer = 1024;
  dense.flops_per_token_dense = 1e9;
  dense.attention_flop_coeff = 1e5;
  ModelSpec sparse = dense;
  sparse.sparse_topk = 1024;
  // long context: sparse does less attention work -> higher GB/PFLOP
  CHECK(cache_compute_ratio(sparse, 65536, 429) >
        cache_compute_ratio(dense, 65536, 429));
  // short context under topk: identical
  CHECK(cache_compute_ratio(sparse, 512, 429) ==
        doctest::Approx(cache_compute_ratio(dense, 512, 429)));
}
