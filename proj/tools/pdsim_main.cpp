// pdsim command-line front end: analyze | simulate | sweep | gen-trace |
// print-defaults.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "pdsim/analyzer.hpp"
#include "pdsim/config.hpp"
#include "pdsim/desim.hpp"
#include "pdsim/metrics.hpp"
#include "pdsim/workload.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pdsim;

namespace {

json rational_json(const Rational& r) {
  return {{"num", r.numerator()},
          {"den", r.denominator()},
          {"value", boost::rational_cast<double>(r)}};
}

json analyze_json(const ExperimentConfig& cfg) {
  const LinkLoadReport rep = link_loads(cfg.cluster);
  json constraints = json::array();
  for (const auto& c : rep.constraints)
    constraints.push_back({{"name", c.name},
                           {"load", c.load},
                           {"capacity", c.capacity},
                           {"slack", c.slack()}});
  const PdRange range = feasible_pd_range(cfg.cluster);
  json j = {
      {"t_p", rep.t_p},
      {"t_c", rep.t_c},
      {"pe_cnic_read", rep.pe_cnic_read},
      {"pe_cnic_write", rep.pe_cnic_write},
      {"de_cnic_read", rep.de_cnic_read},
      {"de_cnic_write", rep.de_cnic_write},
      {"pe_dram", rep.pe_dram},
      {"de_dram", rep.de_dram},
      {"constraints", constraints},
      {"feasible", rep.feasible()},
  };
  if (rep.feasible()) {
    // nothing binding; report the tightest link anyway
  }
  j["binding"] = rep.binding().name;
  if (range.empty) {
    j["pd_range"] = nullptr;
  } else {
    j["pd_range"] = {{"lo", rational_json(range.lo)},
                     {"hi", rational_json(range.hi)}};
  }
  j["cache_compute_gb_per_pflop"] = {
      {"ctx_16k", cache_compute_ratio(cfg.model, 16384, 1024)},
      {"ctx_64k", cache_compute_ratio(cfg.model, 65536, 1024)},
  };
  return j;
}

std::string resource_label(const desim::ResourceUsage& u) {
  std::string s = desim::to_string(u.kind);
  s += ":n" + std::to_string(u.node_id);
  if (u.engine_id >= 0) s += ":e" + std::to_string(u.engine_id);
  return s;
}

json dist_json(const DistSummary& d) {
  return {{"mean", d.mean}, {"p50", d.p50}, {"p99", d.p99}, {"count", d.count}};
}

json report_json(const desim::SimReport& rep, const ExperimentConfig& cfg) {
  std::vector<double> ttft, ttst, tpot;
  for (const auto& r : rep.latencies) {
    ttft.push_back(r.ttft);
    ttst.push_back(r.ttst);
    if (r.tpot > 0) tpot.push_back(r.tpot);
  }
  json j;
  j["completed_requests"] = rep.completed_requests;
  j["total_requests"] = rep.total_requests;
  j["makespan_s"] = rep.makespan;
  j["duration_s"] = rep.duration;
  if (cfg.arrival_rate <= 0) {
    j["offline"] = {{"jct_s", rep.mean_jct()},
                    {"trajectories_done", rep.trajectory_jct.size()}};
  } else {
    j["online"] = {{"aps", cfg.arrival_rate},
                   {"ttft", dist_json(summarize(ttft))},
                   {"ttst", dist_json(summarize(ttst))},
                   {"tpot", dist_json(summarize(tpot))},
                   {"steady_state", rep.steady_state},
                   {"slo_violated", rep.slo_violated}};
  }
  // windowed max/avg balance per resource class
  json balance = json::array();
  const int window = std::max(1, static_cast<int>(5.0 / rep.bucket_width));
  for (desim::ResKind kind :
       {desim::ResKind::SnicRead, desim::ResKind::CnicRead,
        desim::ResKind::CnicWrite, desim::ResKind::Gpu}) {
    std::vector<std::vector<double>> series;
    for (const auto& u : rep.usage)
      if (u.kind == kind) series.push_back(u.buckets);
    for (const auto& pt : load_balance_ratio(series, rep.bucket_width, window))
      if (pt.defined)
        balance.push_back({{"t", pt.t},
                           {"resource_class", desim::to_string(kind)},
                           {"max_avg", pt.max_avg}});
  }
  j["balance"] = balance;
  return j;
}

void write_utilization_csv(const fs::path& path, const desim::SimReport& rep) {
  std::ofstream out(path);
  out << "time_bucket,resource_id,utilization_fraction\n";
  for (const auto& u : rep.usage) {
    const std::string label = resource_label(u);
    for (std::size_t b = 0; b < u.buckets.size(); ++b) {
      const double frac = u.buckets[b] / (u.capacity * rep.bucket_width);
      if (frac <= 0) continue;
      out << b * rep.bucket_width << "," << label << "," << frac << "\n";
    }
  }
}

desim::SimReport run_cell(const ExperimentConfig& cfg, bool record_events) {
  ExperimentConfig c = cfg;
  c.validate();
  c.sim.sched = resolve_scheduler_params(c);
  c.sim.record_events = c.sim.record_events || record_events;
  const auto trajs = materialize(c.workload);
  if (c.arrival_rate > 0)
    return desim::run_online(c.cluster, trajs, c.arrival_rate, c.slo, c.steady,
                             c.sim);
  return desim::run_offline(c.cluster, trajs, c.sim);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

int cmd_analyze(const std::string& config_path) {
  ExperimentConfig cfg =
      config_path.empty() ? default_config() : load_experiment(config_path);
  cfg.cluster.validate();
  const json j = analyze_json(cfg);
  std::cout << j.dump(2) << "\n";
  return j.at("feasible").get<bool>() ? 0 : 2;
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 bool events) {
  ExperimentConfig cfg =
      config_path.empty() ? default_config() : load_experiment(config_path);
  const auto rep = run_cell(cfg, events);
  const json j = report_json(rep, cfg);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    ExperimentConfig snap = cfg;
    snap.sched = resolve_scheduler_params(cfg);
    write_text(fs::path(out_dir) / "config.json", to_json(snap).dump(2) + "\n");
    write_text(fs::path(out_dir) / "report.json", j.dump(2) + "\n");
    write_utilization_csv(fs::path(out_dir) / "utilization.csv", rep);
    if (events) {
      std::ofstream log(fs::path(out_dir) / "events.ndjson");
      for (const auto& line : rep.event_log) log << line << "\n";
    }
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir,
              int jobs, bool events) {
  ExperimentConfig base =
      config_path.empty() ? default_config() : load_experiment(config_path);
  const auto cells = expand_sweep(base);
  fs::create_directories(fs::path(out_dir) / "cells");
  write_text(fs::path(out_dir) / "config.json", to_json(base).dump(2) + "\n");

  struct Row {
    std::string cell, policy, status = "ok", error;
    int p = 0, d = 0;
    double app = 0, gen = 0, aps = 0;
    double jct = 0, ttft_mean = 0, ttft_p99 = 0, tpot_mean = 0, makespan = 0;
    std::size_t completed = 0;
  };
  std::vector<Row> rows(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex io_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const auto& cell = cells[i];
      Row& row = rows[i];
      row.cell = cell.name;
      row.p = cell.cfg.cluster.prefill_nodes;
      row.d = cell.cfg.cluster.decode_nodes;
      row.app = cell.cfg.workload.append_scale;
      row.gen = cell.cfg.workload.gen_scale;
      row.aps = cell.cfg.arrival_rate;
      row.policy = to_string(cell.cfg.sim.policy);
      try {
        const auto rep = run_cell(cell.cfg, events);
        const json j = report_json(rep, cell.cfg);
        row.completed = rep.completed_requests;
        row.makespan = rep.makespan;
        row.jct = rep.mean_jct();
        if (j.contains("online")) {
          row.ttft_mean = j["online"]["ttft"]["mean"].get<double>();
          row.ttft_p99 = j["online"]["ttft"]["p99"].get<double>();
          row.tpot_mean = j["online"]["tpot"]["mean"].get<double>();
        }
        std::lock_guard<std::mutex> lock(io_mutex);
        write_text(fs::path(out_dir) / "cells" / (cell.name + ".json"),
                   j.dump(2) + "\n");
        if (events) {
          std::ofstream log(fs::path(out_dir) / "cells" /
                            (cell.name + ".events.ndjson"));
          for (const auto& line : rep.event_log) log << line << "\n";
        }
      } catch (const std::exception& e) {
        row.status = "error";
        row.error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  const int n = std::max(1, jobs);
  for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::ofstream csv(fs::path(out_dir) / "summary.csv");
  csv << "cell,prefill_nodes,decode_nodes,append_scale,gen_scale,aps,policy,"
         "status,completed,mean_jct_s,ttft_mean_s,ttft_p99_s,tpot_mean_s,"
         "makespan_s\n";
  int failures = 0;
  for (const auto& r : rows) {
    if (r.status != "ok") {
      ++failures;
      std::cerr << "cell " << r.cell << " failed: " << r.error << "\n";
      continue;
    }
    csv << r.cell << "," << r.p << "," << r.d << "," << r.app << "," << r.gen
        << "," << r.aps << "," << r.policy << "," << r.status << ","
        << r.completed << "," << r.jct << "," << r.ttft_mean << ","
        << r.ttft_p99 << "," << r.tpot_mean << "," << r.makespan << "\n";
  }
  std::cout << "sweep: " << cells.size() - failures << "/" << cells.size()
            << " cells ok, summary at " << (fs::path(out_dir) / "summary.csv")
            << "\n";
  return failures == static_cast<int>(cells.size()) && !cells.empty() ? 3 : 0;
}

int cmd_gen_trace(const SyntheticSpec& spec, const std::string& out_path) {
  const auto trajs = synthesize(spec);
  if (out_path.empty() || out_path == "-") {
    save_trace(std::cout, trajs);
  } else {
    save_trace(out_path, trajs);
    std::int64_t total = 0;
    for (const auto& t : trajs) total += t.total_tokens();
    std::cout << "wrote " << trajs.size() << " trajectories ("
              << (trajs.empty() ? 0 : total / static_cast<std::int64_t>(trajs.size()))
              << " mean tokens) to " << out_path << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulator and bandwidth analyzer for prefill/decode-"
               "disaggregated inference clusters"};
  app.require_subcommand(1);

  std::string config_path, out_dir, trace_out;
  bool events = false;
  int jobs = static_cast<int>(std::thread::hardware_concurrency());
  SyntheticSpec gen_spec;

  auto* analyze = app.add_subcommand("analyze", "Static link-load analysis");
  analyze->add_option("-c,--config", config_path, "Experiment config (JSON)");

  auto* simulate = app.add_subcommand("simulate", "Run one simulation");
  simulate->add_option("-c,--config", config_path, "Experiment config (JSON)");
  simulate->add_option("-o,--out", out_dir, "Run directory for reports");
  simulate->add_flag("--events", events, "Record the event log (large)");

  auto* sweep = app.add_subcommand("sweep", "Run the config's sweep grid");
  sweep->add_option("-c,--config", config_path, "Experiment config (JSON)");
  sweep->add_option("-o,--out", out_dir, "Run directory")->required();
  sweep->add_option("-j,--jobs", jobs, "Concurrent cells");
  sweep->add_flag("--events", events, "Record event logs (large)");

  auto* gen = app.add_subcommand("gen-trace", "Generate a synthetic trace");
  gen->add_option("-o,--out", trace_out, "Output path (default: stdout)");
  gen->add_option("--count", gen_spec.count, "Trajectory count");
  gen->add_option("--max-len", gen_spec.max_len, "Per-trajectory token cap");
  gen->add_option("--seed", gen_spec.seed, "RNG seed");
  gen->add_option("--mean-turns", gen_spec.mean_turns, "Mean turns");
  gen->add_option("--mean-append", gen_spec.mean_append, "Mean append tokens");
  gen->add_option("--mean-gen", gen_spec.mean_gen, "Mean generated tokens");
  gen->add_option("--sigma-turns", gen_spec.sigma_turns, "Turn-count sigma");

  auto* defaults = app.add_subcommand("print-defaults", "Print the default config");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*analyze) return cmd_analyze(config_path);
    if (*simulate) return cmd_simulate(config_path, out_dir, events);
    if (*sweep) return cmd_sweep(config_path, out_dir, jobs, events);
    if (*gen) return cmd_gen_trace(gen_spec, trace_out);
    if (*defaults) {
      std::cout << to_json(default_config()).dump(2) << "\n";
      return 0;
    }
  } catch (const desim::SimulationError& e) {
    std::cerr << "simulation error: " << e.what() << "\n";
    return 3;
  } catch (const desim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
