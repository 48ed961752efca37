#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pdsim/analyzer.hpp"
#include "pdsim/desim.hpp"
#include "pdsim/metrics.hpp"
#include "pdsim/scheduler.hpp"
#include "pdsim/types.hpp"
#include "pdsim/workload.hpp"

namespace py = pybind11;
using namespace pdsim;

namespace {

py::dict report_to_dict(const desim::SimReport& rep) {
  py::dict d;
  d["makespan"] = rep.makespan;
  d["duration"] = rep.duration;
  d["completed_requests"] = rep.completed_requests;
  d["total_requests"] = rep.total_requests;
  d["mean_jct"] = rep.mean_jct();
  d["slo_violated"] = rep.slo_violated;
  d["steady_state"] = rep.steady_state;
  py::list lat;
  for (const auto& r : rep.latencies) {
    py::dict e;
    e["request_id"] = r.request_id;
    e["ttft"] = r.ttft;
    e["ttst"] = r.ttst;
    e["tpot"] = r.tpot;
    e["sched_component"] = r.sched_component;
    e["alloc_component"] = r.alloc_component;
    e["read_component"] = r.read_component;
    e["prefill_component"] = r.prefill_component;
    lat.append(e);
  }
  d["latencies"] = lat;
  py::list jct;
  for (const auto& [id, v] : rep.trajectory_jct)
    jct.append(py::make_tuple(id, v));
  d["trajectory_jct"] = jct;
  py::list usage;
  for (const auto& u : rep.usage) {
    py::dict e;
    e["kind"] = std::string(desim::to_string(u.kind));
    e["node_id"] = u.node_id;
    e["engine_id"] = u.engine_id;
    e["capacity"] = u.capacity;
    e["total_bytes"] = u.total_bytes;
    usage.append(e);
  }
  d["usage"] = usage;
  return d;
}

desim::SimOptions make_options(const std::string& policy,
                               const std::string& sched_mode, double alpha,
                               double beta, std::uint64_t seed) {
  desim::SimOptions opt;
  if (policy == "dual_path")
    opt.policy = desim::Policy::DualPath;
  else if (policy == "pe_only")
    opt.policy = desim::Policy::PEOnly;
  else if (policy == "oracle")
    opt.policy = desim::Policy::Oracle;
  else
    throw std::invalid_argument("unknown policy '" + policy + "'");
  if (sched_mode == "adaptive")
    opt.sched_mode = desim::SchedMode::Adaptive;
  else if (sched_mode == "round_robin")
    opt.sched_mode = desim::SchedMode::RoundRobin;
  else
    throw std::invalid_argument("unknown sched_mode '" + sched_mode + "'");
  opt.sched.alpha = static_cast<std::int64_t>(alpha);
  opt.sched.beta = static_cast<std::int64_t>(beta);
  opt.seed = seed;
  return opt;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Simulator and analyzer for prefill/decode-disaggregated clusters";

  py::class_<ClusterConfig>(m, "ClusterConfig")
      .def(py::init<>())
      .def_readwrite("prefill_nodes", &ClusterConfig::prefill_nodes)
      .def_readwrite("decode_nodes", &ClusterConfig::decode_nodes)
      .def_readwrite("engines_per_node", &ClusterConfig::engines_per_node)
      .def_readwrite("cnic_bandwidth", &ClusterConfig::cnic_bandwidth)
      .def_readwrite("storage_multiple", &ClusterConfig::storage_multiple)
      .def_readwrite("dram_bandwidth", &ClusterConfig::dram_bandwidth)
      .def_readwrite("n_layer", &ClusterConfig::n_layer)
      .def_readwrite("kv_bytes_per_token_per_layer",
                     &ClusterConfig::kv_bytes_per_token_per_layer)
      .def_readwrite("block_size_tokens", &ClusterConfig::block_size_tokens)
      .def_readwrite("hbm_capacity_tokens", &ClusterConfig::hbm_capacity_tokens)
      .def_readwrite("pe_buffer_bytes", &ClusterConfig::pe_buffer_bytes)
      .def_readwrite("de_buffer_bytes", &ClusterConfig::de_buffer_bytes)
      .def("validate", &ClusterConfig::validate)
      .def("kv_bytes_per_token", &ClusterConfig::kv_bytes_per_token);

  py::class_<Round>(m, "Round")
      .def(py::init<>())
      .def_readwrite("append_tokens", &Round::append_tokens)
      .def_readwrite("gen_tokens", &Round::gen_tokens);

  py::class_<Trajectory>(m, "Trajectory")
      .def(py::init<>())
      .def_readwrite("id", &Trajectory::id)
      .def_readwrite("rounds", &Trajectory::rounds)
      .def("total_tokens", &Trajectory::total_tokens);

  py::class_<ModelSpec>(m, "ModelSpec")
      .def(py::init<>())
      .def_readwrite("name", &ModelSpec::name)
      .def_readwrite("n_layer", &ModelSpec::n_layer)
      .def_readwrite("kv_bytes_per_token_per_layer",
                     &ModelSpec::kv_bytes_per_token_per_layer)
      .def_readwrite("flops_per_token_dense", &ModelSpec::flops_per_token_dense)
      .def_readwrite("attention_flop_coeff", &ModelSpec::attention_flop_coeff)
      .def_readwrite("sparse_topk", &ModelSpec::sparse_topk);

  m.def("link_loads", [](const ClusterConfig& cfg) {
    const LinkLoadReport rep = link_loads(cfg);
    py::dict d;
    d["t_p"] = rep.t_p;
    d["t_c"] = rep.t_c;
    d["pe_cnic_read"] = rep.pe_cnic_read;
    d["pe_cnic_write"] = rep.pe_cnic_write;
    d["de_cnic_read"] = rep.de_cnic_read;
    d["de_cnic_write"] = rep.de_cnic_write;
    d["pe_dram"] = rep.pe_dram;
    d["de_dram"] = rep.de_dram;
    d["feasible"] = rep.feasible();
    d["binding"] = rep.binding().name;
    return d;
  });

  m.def("feasible_pd_range", [](const ClusterConfig& cfg) -> py::object {
    const PdRange r = feasible_pd_range(cfg);
    if (r.empty) return py::none();
    return py::make_tuple(
        py::make_tuple(r.lo.numerator(), r.lo.denominator()),
        py::make_tuple(r.hi.numerator(), r.hi.denominator()));
  });

  m.def("cache_compute_ratio", &cache_compute_ratio, py::arg("model"),
        py::arg("context_len"), py::arg("append_len"));

  m.def(
      "synthesize",
      [](std::int64_t max_len, int count, std::uint64_t seed) {
        SyntheticSpec spec;
        spec.max_len = max_len;
        spec.count = count;
        spec.seed = seed;
        return synthesize(spec);
      },
      py::arg("max_len") = 65536, py::arg("count") = 16, py::arg("seed") = 1);

  m.def("load_trace", &load_trace);
  m.def("save_trace",
        [](const std::string& path, const std::vector<Trajectory>& trajs) {
          save_trace(path, trajs);
        });

  m.def(
      "simulate",
      [](const ClusterConfig& cfg, const std::vector<Trajectory>& trajs,
         const std::string& policy, const std::string& sched_mode, double alpha,
         double beta, double aps, std::uint64_t seed) {
        desim::SimOptions opt = make_options(policy, sched_mode, alpha, beta, seed);
        if (aps > 0) {
          desim::SloSpec slo;
          desim::SteadySpec steady;
          return report_to_dict(
              desim::run_online(cfg, trajs, aps, slo, steady, opt));
        }
        return report_to_dict(desim::run_offline(cfg, trajs, opt));
      },
      py::arg("cluster"), py::arg("trajectories"),
      py::arg("policy") = "dual_path", py::arg("sched_mode") = "adaptive",
      py::arg("alpha") = 100000, py::arg("beta") = 500000, py::arg("aps") = 0.0,
      py::arg("seed") = 0);

  py::register_exception<desim::ConfigError>(m, "ConfigError");
  py::register_exception<desim::SimulationError>(m, "SimulationError");
}
