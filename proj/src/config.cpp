#include "pdsim/config.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace pdsim {

using nlohmann::json;

double gbps_to_bytes(double gbps) { return gbps * 1e9 / 8.0; }
double bytes_to_gbps(double bytes_per_s) { return bytes_per_s * 8.0 / 1e9; }

bool SweepAxes::empty() const {
  return pd_ratios.empty() && append_scales.empty() && gen_scales.empty() &&
         arrival_rates.empty() && policies.empty() && max_lens.empty();
}

void ExperimentConfig::validate() const {
  cluster.validate();
  SchedulerParams p = resolve_scheduler_params(*this);
  p.validate();
  if (arrival_rate < 0)
    throw std::invalid_argument("arrival_rate must be >= 0");
  if (!workload.trace_path && !workload.synthetic)
    throw std::invalid_argument("workload needs a trace_path or a synthetic block");
}

SchedulerParams resolve_scheduler_params(const ExperimentConfig& cfg) {
  SchedulerParams p = cfg.sched;
  if (p.alpha <= 0) {
    p.alpha = static_cast<std::int64_t>(
        3.0 * cfg.cluster.node_storage_bandwidth() /
        static_cast<double>(cfg.cluster.kv_bytes_per_token()));
  }
  if (p.beta <= 0) {
    const double per_token =
        cfg.cluster.n_layer * cfg.sim.cost.prefill.coeff_linear;
    p.beta = per_token > 0 ? static_cast<std::int64_t>(5.0 / per_token)
                           : 500'000;
  }
  return p;
}

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  cfg.cluster.prefill_nodes = 1;
  cfg.cluster.decode_nodes = 1;
  cfg.cluster.engines_per_node = 8;
  cfg.cluster.cnic_bandwidth = gbps_to_bytes(400);
  cfg.cluster.storage_multiple = 1.0;
  cfg.cluster.dram_bandwidth = 10.0 * cfg.cluster.cnic_bandwidth;
  cfg.cluster.n_layer = 64;
  cfg.cluster.kv_bytes_per_token_per_layer = 4096;
  cfg.cluster.block_size_tokens = 256;
  cfg.cluster.hbm_capacity_tokens = 1'000'000;
  cfg.cluster.pe_buffer_bytes = 1ll << 37;   // 128 GiB staging per node
  cfg.cluster.de_buffer_bytes = 1ll << 37;

  cfg.model.name = "dense-32b";
  cfg.model.n_layer = 64;
  cfg.model.kv_bytes_per_token_per_layer = 4096;
  cfg.model.flops_per_token_dense = 65e9;
  cfg.model.attention_flop_coeff = 4.0 * 40 * 128 * 64;
  cfg.model.sparse_topk = 0;

  cfg.sched.alpha = 0;  // auto
  cfg.sched.beta = 0;   // auto
  cfg.sched.z_factor = 1.05;
  cfg.sched.compute_quota = 0.3;

  SyntheticSpec syn;
  syn.max_len = 65536;
  syn.count = 64;
  syn.seed = 1;
  cfg.workload.synthetic = syn;

  cfg.sim.policy = desim::Policy::DualPath;
  cfg.sim.sched_mode = desim::SchedMode::Adaptive;
  cfg.sim.cost.prefill = {2.0e-9, 0.0, 1.0e-6, 0.0};
  cfg.sim.cost.decode_per_ctx_token = 2.0e-9;
  cfg.sim.cost.decode_step_overhead = 2e-3;
  cfg.sim.submission_overhead = 1e-6;
  cfg.sim.batch_amortization = 1.0;
  cfg.sim.bucket_width = 0.5;
  cfg.sim.record_flows = false;
  cfg.sim.record_events = false;
  cfg.sim.seed = 0;
  return cfg;
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : allowed)
      if (key == k) { ok = true; break; }
    if (!ok)
      throw std::invalid_argument("unknown config key '" + key + "' in " + where);
  }
}

template <typename T>
void get_to(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace

desim::Policy policy_from_string(const std::string& s) {
  if (s == "dual_path") return desim::Policy::DualPath;
  if (s == "pe_only") return desim::Policy::PEOnly;
  if (s == "oracle") return desim::Policy::Oracle;
  throw std::invalid_argument("unknown policy '" + s + "'");
}

const char* to_string(desim::Policy p) {
  switch (p) {
    case desim::Policy::DualPath: return "dual_path";
    case desim::Policy::PEOnly: return "pe_only";
    case desim::Policy::Oracle: return "oracle";
  }
  return "?";
}

json to_json(const ExperimentConfig& cfg) {
  json j;
  j["cluster"] = {
      {"prefill_nodes", cfg.cluster.prefill_nodes},
      {"decode_nodes", cfg.cluster.decode_nodes},
      {"engines_per_node", cfg.cluster.engines_per_node},
      {"cnic_gbps", bytes_to_gbps(cfg.cluster.cnic_bandwidth)},
      {"storage_multiple", cfg.cluster.storage_multiple},
      {"dram_gbps", bytes_to_gbps(cfg.cluster.dram_bandwidth)},
      {"n_layer", cfg.cluster.n_layer},
      {"kv_bytes_per_token_per_layer", cfg.cluster.kv_bytes_per_token_per_layer},
      {"block_size_tokens", cfg.cluster.block_size_tokens},
      {"hbm_capacity_tokens", cfg.cluster.hbm_capacity_tokens},
      {"pe_buffer_bytes", cfg.cluster.pe_buffer_bytes},
      {"de_buffer_bytes", cfg.cluster.de_buffer_bytes},
  };
  j["model"] = {
      {"name", cfg.model.name},
      {"n_layer", cfg.model.n_layer},
      {"kv_bytes_per_token_per_layer", cfg.model.kv_bytes_per_token_per_layer},
      {"flops_per_token_dense", cfg.model.flops_per_token_dense},
      {"attention_flop_coeff", cfg.model.attention_flop_coeff},
      {"sparse_topk", cfg.model.sparse_topk},
  };
  j["scheduler"] = {
      {"alpha", cfg.sched.alpha},
      {"beta", cfg.sched.beta},
      {"z_factor", cfg.sched.z_factor},
      {"compute_quota", cfg.sched.compute_quota},
  };
  json w;
  if (cfg.workload.trace_path) w["trace_path"] = *cfg.workload.trace_path;
  if (cfg.workload.synthetic) {
    const auto& s = *cfg.workload.synthetic;
    w["synthetic"] = {
        {"max_len", s.max_len},       {"mean_turns", s.mean_turns},
        {"mean_append", s.mean_append}, {"mean_gen", s.mean_gen},
        {"sigma_turns", s.sigma_turns}, {"sigma_append", s.sigma_append},
        {"sigma_gen", s.sigma_gen},   {"count", s.count},
        {"seed", s.seed},
    };
  }
  j["workload"] = w;
  j["policy"] = to_string(cfg.sim.policy);
  j["sched_mode"] =
      cfg.sim.sched_mode == desim::SchedMode::Adaptive ? "adaptive" : "round_robin";
  j["cost"] = {
      {"prefill_bilinear", cfg.sim.cost.prefill.coeff_bilinear},
      {"prefill_quadratic", cfg.sim.cost.prefill.coeff_quadratic},
      {"prefill_linear", cfg.sim.cost.prefill.coeff_linear},
      {"prefill_constant", cfg.sim.cost.prefill.constant},
      {"decode_per_ctx_token", cfg.sim.cost.decode_per_ctx_token},
      {"decode_step_overhead", cfg.sim.cost.decode_step_overhead},
  };
  json sim = {
      {"submission_overhead", cfg.sim.submission_overhead},
      {"batch_amortization", cfg.sim.batch_amortization},
      {"bucket_width", cfg.sim.bucket_width},
      {"record_flows", cfg.sim.record_flows},
      {"record_events", cfg.sim.record_events},
      {"seed", cfg.sim.seed},
  };
  if (cfg.sim.bursts) {
    sim["bursts"] = {{"period", cfg.sim.bursts->period},
                     {"bytes_per_burst", cfg.sim.bursts->bytes_per_burst},
                     {"start", cfg.sim.bursts->start},
                     {"stop", cfg.sim.bursts->stop}};
  }
  j["sim"] = sim;
  j["slo"] = {{"ttft_s", cfg.slo.ttft_limit}, {"tpot_s", cfg.slo.tpot_limit}};
  j["steady"] = {{"window_s", cfg.steady.window},
                 {"lookback_s", cfg.steady.lookback},
                 {"threshold", cfg.steady.threshold}};
  j["arrival_rate"] = cfg.arrival_rate;
  json sweep;
  if (!cfg.sweep.pd_ratios.empty()) sweep["pd_ratios"] = cfg.sweep.pd_ratios;
  if (!cfg.sweep.append_scales.empty())
    sweep["append_scales"] = cfg.sweep.append_scales;
  if (!cfg.sweep.gen_scales.empty()) sweep["gen_scales"] = cfg.sweep.gen_scales;
  if (!cfg.sweep.arrival_rates.empty())
    sweep["arrival_rates"] = cfg.sweep.arrival_rates;
  if (!cfg.sweep.policies.empty()) sweep["policies"] = cfg.sweep.policies;
  if (!cfg.sweep.max_lens.empty()) sweep["max_lens"] = cfg.sweep.max_lens;
  j["sweep"] = sweep;
  return j;
}

ExperimentConfig from_json(const json& j) {
  ExperimentConfig cfg = default_config();
  check_keys(j, {"cluster", "model", "scheduler", "workload", "policy",
                 "sched_mode", "cost", "sim", "slo", "steady", "arrival_rate",
                 "sweep"},
             "top level");
  if (j.contains("cluster")) {
    const json& c = j.at("cluster");
    check_keys(c,
               {"prefill_nodes", "decode_nodes", "engines_per_node", "cnic_gbps",
                "storage_multiple", "dram_gbps", "n_layer",
                "kv_bytes_per_token_per_layer", "block_size_tokens",
                "hbm_capacity_tokens", "pe_buffer_bytes", "de_buffer_bytes"},
               "cluster");
    get_to(c, "prefill_nodes", cfg.cluster.prefill_nodes);
    get_to(c, "decode_nodes", cfg.cluster.decode_nodes);
    get_to(c, "engines_per_node", cfg.cluster.engines_per_node);
    if (c.contains("cnic_gbps"))
      cfg.cluster.cnic_bandwidth = gbps_to_bytes(c.at("cnic_gbps").get<double>());
    get_to(c, "storage_multiple", cfg.cluster.storage_multiple);
    if (c.contains("dram_gbps"))
      cfg.cluster.dram_bandwidth = gbps_to_bytes(c.at("dram_gbps").get<double>());
    else
      cfg.cluster.dram_bandwidth = 10.0 * cfg.cluster.cnic_bandwidth;
    get_to(c, "n_layer", cfg.cluster.n_layer);
    get_to(c, "kv_bytes_per_token_per_layer",
           cfg.cluster.kv_bytes_per_token_per_layer);
    get_to(c, "block_size_tokens", cfg.cluster.block_size_tokens);
    get_to(c, "hbm_capacity_tokens", cfg.cluster.hbm_capacity_tokens);
    get_to(c, "pe_buffer_bytes", cfg.cluster.pe_buffer_bytes);
    get_to(c, "de_buffer_bytes", cfg.cluster.de_buffer_bytes);
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m,
               {"name", "n_layer", "kv_bytes_per_token_per_layer",
                "flops_per_token_dense", "attention_flop_coeff", "sparse_topk"},
               "model");
    get_to(m, "name", cfg.model.name);
    get_to(m, "n_layer", cfg.model.n_layer);
    get_to(m, "kv_bytes_per_token_per_layer",
           cfg.model.kv_bytes_per_token_per_layer);
    get_to(m, "flops_per_token_dense", cfg.model.flops_per_token_dense);
    get_to(m, "attention_flop_coeff", cfg.model.attention_flop_coeff);
    get_to(m, "sparse_topk", cfg.model.sparse_topk);
  }
  if (j.contains("scheduler")) {
    const json& s = j.at("scheduler");
    check_keys(s, {"alpha", "beta", "z_factor", "compute_quota"}, "scheduler");
    get_to(s, "alpha", cfg.sched.alpha);
    get_to(s, "beta", cfg.sched.beta);
    get_to(s, "z_factor", cfg.sched.z_factor);
    get_to(s, "compute_quota", cfg.sched.compute_quota);
  }
  if (j.contains("workload")) {
    const json& w = j.at("workload");
    check_keys(w, {"trace_path", "synthetic"}, "workload");
    if (w.contains("trace_path")) {
      cfg.workload.trace_path = w.at("trace_path").get<std::string>();
      cfg.workload.synthetic.reset();
    }
    if (w.contains("synthetic")) {
      SyntheticSpec s = cfg.workload.synthetic.value_or(SyntheticSpec{});
      const json& y = w.at("synthetic");
      check_keys(y,
                 {"max_len", "mean_turns", "mean_append", "mean_gen",
                  "sigma_turns", "sigma_append", "sigma_gen", "count", "seed"},
                 "workload.synthetic");
      get_to(y, "max_len", s.max_len);
      get_to(y, "mean_turns", s.mean_turns);
      get_to(y, "mean_append", s.mean_append);
      get_to(y, "mean_gen", s.mean_gen);
      get_to(y, "sigma_turns", s.sigma_turns);
      get_to(y, "sigma_append", s.sigma_append);
      get_to(y, "sigma_gen", s.sigma_gen);
      get_to(y, "count", s.count);
      get_to(y, "seed", s.seed);
      cfg.workload.synthetic = s;
    }
  }
  if (j.contains("policy"))
    cfg.sim.policy = policy_from_string(j.at("policy").get<std::string>());
  if (j.contains("sched_mode")) {
    const std::string m = j.at("sched_mode").get<std::string>();
    if (m == "adaptive")
      cfg.sim.sched_mode = desim::SchedMode::Adaptive;
    else if (m == "round_robin")
      cfg.sim.sched_mode = desim::SchedMode::RoundRobin;
    else
      throw std::invalid_argument("unknown sched_mode '" + m + "'");
  }
  if (j.contains("cost")) {
    const json& c = j.at("cost");
    check_keys(c,
               {"prefill_bilinear", "prefill_quadratic", "prefill_linear",
                "prefill_constant", "decode_per_ctx_token",
                "decode_step_overhead"},
               "cost");
    get_to(c, "prefill_bilinear", cfg.sim.cost.prefill.coeff_bilinear);
    get_to(c, "prefill_quadratic", cfg.sim.cost.prefill.coeff_quadratic);
    get_to(c, "prefill_linear", cfg.sim.cost.prefill.coeff_linear);
    get_to(c, "prefill_constant", cfg.sim.cost.prefill.constant);
    get_to(c, "decode_per_ctx_token", cfg.sim.cost.decode_per_ctx_token);
    get_to(c, "decode_step_overhead", cfg.sim.cost.decode_step_overhead);
  }
  if (j.contains("sim")) {
    const json& s = j.at("sim");
    check_keys(s,
               {"submission_overhead", "batch_amortization", "bucket_width",
                "record_flows", "record_events", "seed", "bursts"},
               "sim");
    get_to(s, "submission_overhead", cfg.sim.submission_overhead);
    get_to(s, "batch_amortization", cfg.sim.batch_amortization);
    get_to(s, "bucket_width", cfg.sim.bucket_width);
    get_to(s, "record_flows", cfg.sim.record_flows);
    get_to(s, "record_events", cfg.sim.record_events);
    get_to(s, "seed", cfg.sim.seed);
    if (s.contains("bursts")) {
      desim::BurstSpec b;
      const json& x = s.at("bursts");
      check_keys(x, {"period", "bytes_per_burst", "start", "stop"}, "sim.bursts");
      get_to(x, "period", b.period);
      get_to(x, "bytes_per_burst", b.bytes_per_burst);
      get_to(x, "start", b.start);
      get_to(x, "stop", b.stop);
      cfg.sim.bursts = b;
    }
  }
  if (j.contains("slo")) {
    const json& s = j.at("slo");
    check_keys(s, {"ttft_s", "tpot_s"}, "slo");
    get_to(s, "ttft_s", cfg.slo.ttft_limit);
    get_to(s, "tpot_s", cfg.slo.tpot_limit);
  }
  if (j.contains("steady")) {
    const json& s = j.at("steady");
    check_keys(s, {"window_s", "lookback_s", "threshold"}, "steady");
    get_to(s, "window_s", cfg.steady.window);
    get_to(s, "lookback_s", cfg.steady.lookback);
    get_to(s, "threshold", cfg.steady.threshold);
  }
  get_to(j, "arrival_rate", cfg.arrival_rate);
  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    check_keys(s,
               {"pd_ratios", "append_scales", "gen_scales", "arrival_rates",
                "policies", "max_lens"},
               "sweep");
    get_to(s, "pd_ratios", cfg.sweep.pd_ratios);
    get_to(s, "append_scales", cfg.sweep.append_scales);
    get_to(s, "gen_scales", cfg.sweep.gen_scales);
    get_to(s, "arrival_rates", cfg.sweep.arrival_rates);
    get_to(s, "policies", cfg.sweep.policies);
    get_to(s, "max_lens", cfg.sweep.max_lens);
  }
  return cfg;
}

ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config parse error in " + path + ": " + e.what());
  }
  return from_json(j);
}

namespace {

std::string trimmed_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

std::vector<SweepCell> expand_sweep(const ExperimentConfig& base) {
  auto one_pd = base.sweep.pd_ratios;
  if (one_pd.empty())
    one_pd = {{base.cluster.prefill_nodes, base.cluster.decode_nodes}};
  auto one = [](std::vector<double> v, double fallback) {
    if (v.empty()) v.push_back(fallback);
    return v;
  };
  const auto apps = one(base.sweep.append_scales, 1.0);
  const auto gens = one(base.sweep.gen_scales, 1.0);
  const auto rates = one(base.sweep.arrival_rates, base.arrival_rate);
  auto pols = base.sweep.policies;
  if (pols.empty()) pols = {to_string(base.sim.policy)};
  auto lens = base.sweep.max_lens;
  if (lens.empty()) lens = {0};  // 0 = keep the workload's own cap

  std::vector<SweepCell> cells;
  for (const auto& [p, d] : one_pd)
    for (double app : apps)
      for (double gen : gens)
        for (double rate : rates)
          for (const auto& pol : pols)
            for (std::int64_t len : lens) {
              SweepCell cell;
              cell.cfg = base;
              cell.cfg.sweep = {};
              cell.cfg.cluster.prefill_nodes = p;
              cell.cfg.cluster.decode_nodes = d;
              cell.cfg.workload.append_scale = app;
              cell.cfg.workload.gen_scale = gen;
              if (len > 0) cell.cfg.workload.max_len_override = len;
              cell.cfg.arrival_rate = rate;
              cell.cfg.sim.policy = policy_from_string(pol);
              cell.name = "pd" + std::to_string(p) + "x" + std::to_string(d) +
                          "_app" + trimmed_num(app) + "_gen" + trimmed_num(gen) +
                          "_aps" + trimmed_num(rate) + "_" + pol;
              if (len > 0) cell.name += "_len" + std::to_string(len);
              cells.push_back(std::move(cell));
            }
  return cells;
}

}  // namespace pdsim
