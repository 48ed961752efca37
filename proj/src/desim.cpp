#include "pdsim/desim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <map>
#include <queue>
#include <random>

#include "pdsim/workload.hpp"

namespace pdsim::desim {

const char* to_string(ResKind kind) {
  switch (kind) {
    case ResKind::SnicRead: return "snic_read";
    case ResKind::SnicWrite: return "snic_write";
    case ResKind::CnicRead: return "cnic_read";
    case ResKind::CnicWrite: return "cnic_write";
    case ResKind::Dram: return "dram";
    case ResKind::Gpu: return "gpu";
  }
  return "?";
}

const char* to_string(Stage stage) {
  switch (stage) {
    case Stage::StorageRead: return "storage_read";
    case Stage::LoopbackH2D: return "loopback_h2d";
    case Stage::PeToDe: return "pe_to_de";
    case Stage::DeToPe: return "de_to_pe";
    case Stage::MissMerge: return "miss_merge";
    case Stage::DecodeH2D: return "decode_h2d";
    case Stage::LayerCompute: return "layer_compute";
    case Stage::Decode: return "decode";
    case Stage::PersistD2H: return "persist_d2h";
    case Stage::PersistWrite: return "persist_write";
    case Stage::Burst: return "burst";
  }
  return "?";
}

namespace {

bool is_byte_stage(Stage s) {
  return s != Stage::LayerCompute && s != Stage::Decode && s != Stage::Burst;
}

// Max-min progressive filling of `members` against `caps` (consumed in
// place). Writes rates at the members' positions in `rates`.
void progressive_fill(const std::vector<int>& members,
                      std::span<const FlowDemand> flows,
                      std::vector<double>& caps, std::vector<double>& rates) {
  if (members.empty()) return;
  std::vector<int> count(caps.size(), 0);
  std::vector<char> frozen(members.size(), 0);
  for (int m : members)
    for (int r : flows[m].path) count[r]++;

  std::size_t unfrozen = members.size();
  while (unfrozen > 0) {
    double inc = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < caps.size(); ++r)
      if (count[r] > 0) inc = std::min(inc, caps[r] / count[r]);
    if (!std::isfinite(inc) || inc < 0) break;
    for (std::size_t i = 0; i < members.size(); ++i) {
      if (frozen[i]) continue;
      rates[members[i]] += inc;
      for (int r : flows[members[i]].path) caps[r] -= inc;
    }
    // freeze flows touching an exhausted resource
    bool any_frozen = false;
    for (std::size_t i = 0; i < members.size(); ++i) {
      if (frozen[i]) continue;
      for (int r : flows[members[i]].path) {
        if (caps[r] <= 1e-9 * (1.0 + rates[members[i]])) {
          frozen[i] = 1;
          any_frozen = true;
          break;
        }
      }
      if (frozen[i]) {
        --unfrozen;
        for (int r : flows[members[i]].path) count[r]--;
      }
    }
    if (!any_frozen) break;  // numerical guard
  }
}

}  // namespace

std::vector<double> arbitrate(std::span<const Resource> resources,
                              std::span<const FlowDemand> flows) {
  std::vector<double> rates(flows.size(), 0.0);
  std::vector<int> low, high;
  for (std::size_t i = 0; i < flows.size(); ++i)
    (flows[i].high_priority ? high : low).push_back(static_cast<int>(i));

  // Phase A: low flows against the guaranteed floor at WRR resources.
  std::vector<double> caps(resources.size());
  for (std::size_t r = 0; r < resources.size(); ++r)
    caps[r] = resources[r].wrr ? resources[r].capacity * resources[r].low_frac
                               : resources[r].capacity;
  std::vector<double> low_floor(rates.size(), 0.0);
  progressive_fill(low, flows, caps, low_floor);
  std::vector<double> floor_used(resources.size(), 0.0);
  for (int m : low)
    for (int r : flows[m].path) floor_used[r] += low_floor[m];

  // Phase B: high flows get everything above the floor at WRR resources and
  // full capacity elsewhere.
  for (std::size_t r = 0; r < resources.size(); ++r)
    caps[r] = resources[r].wrr
                  ? std::max(0.0, resources[r].capacity - floor_used[r])
                  : resources[r].capacity;
  progressive_fill(high, flows, caps, rates);
  std::vector<double> high_used(resources.size(), 0.0);
  for (int m : high)
    for (int r : flows[m].path) high_used[r] += rates[m];

  // Phase C: low flows refilled from scratch into the leftover, never below
  // the WRR floor.
  for (std::size_t r = 0; r < resources.size(); ++r) {
    const double leftover = std::max(0.0, resources[r].capacity - high_used[r]);
    caps[r] = resources[r].wrr
                  ? std::max(resources[r].capacity * resources[r].low_frac,
                             leftover)
                  : leftover;
  }
  progressive_fill(low, flows, caps, rates);
  return rates;
}

double SimReport::mean_jct() const {
  if (trajectory_jct.empty()) return 0;
  double sum = 0;
  for (const auto& [id, jct] : trajectory_jct) sum += jct;
  return sum / trajectory_jct.size();
}

namespace {

enum EvKind : int {
  EvArrival = 0,
  EvFlowActivate = 1,
  EvMilestone = 2,
  EvSchedWake = 3,
  EvBurst = 4,
  EvSteadyCheck = 5,
};

struct Event {
  double t = 0;
  int rank = 0;     // kind rank; documented tie-break order
  std::uint64_t seq = 0;
  int kind = 0;
  int a = 0;            // flow/traj/engine id
  std::int64_t b = 0;   // milestone index
  std::uint64_t epoch = 0;
};

struct EventLater {
  bool operator()(const Event& x, const Event& y) const {
    if (x.t != y.t) return x.t > y.t;
    if (x.rank != y.rank) return x.rank > y.rank;
    return x.seq > y.seq;
  }
};

struct Flow {
  int id = 0;
  int req = -1;
  Stage stage = Stage::StorageRead;
  bool high = false;
  double bytes_total = 0;
  double bytes_done = 0;
  std::vector<int> path;
  double rate = 0;
  double last_update = 0;
  // (byte threshold, decoded-token tag); completion is implicit at
  // bytes_total.
  std::vector<std::pair<double, std::int64_t>> milestones;
  std::size_t next_ms = 0;
  std::uint64_t epoch = 0;
  double t_start = 0;
};

enum class ReqPhase {
  WaitingDe,
  WaitingPe,
  WaitingAdmit,
  Reading,
  Prefill,
  DecodeH2D,
  Decoding,
  Done,
};

struct Req {
  int id = 0;
  int traj_idx = 0;
  int round = 0;
  std::int64_t cached = 0;
  std::int64_t append = 0;
  std::int64_t gen = 1;
  int pe = -1;
  int de = -1;
  ReadPath path = ReadPath::PEPath;
  ReqPhase phase = ReqPhase::WaitingDe;
  int layer_h2d_done = 0;
  int layer_compute_done = 0;
  int layer_out_done = 0;
  bool compute_in_flight = false;
  bool out_in_flight = false;
  std::int64_t persisted = 0;
  double t_arrival = -1, t_sched = -1, t_admit = -1, t_read_done = -1;
  double t_prefill_done = -1, t_first = -1, t_second = -1, t_done = -1;
  int pe_category = 0, de_category = 0;

  std::int64_t prompt() const { return cached + append; }
  std::int64_t total() const { return cached + append + gen; }
};

struct TrajRt {
  const Trajectory* traj = nullptr;
  int next_round = 0;
  double first_arrival = -1;
  double last_done = -1;
};

class Simulator {
 public:
  Simulator(const ClusterConfig& cfg, std::span<const Trajectory> trajectories,
            std::span<const double> arrivals, const SimOptions& opt,
            const SloSpec* slo, const SteadySpec* steady)
      : cfg_(cfg), opt_(opt), slo_(slo), steady_(steady) {
    cfg_.validate();
    opt_.sched.validate();
    if (trajectories.size() != arrivals.size())
      throw ConfigError("one arrival time per trajectory required");
    build_cluster();
    validate_workload(trajectories);
    trajs_.reserve(trajectories.size());
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
      trajs_.push_back({&trajectories[i], 0, -1, -1});
      report_.total_requests += trajectories[i].rounds.size();
      push_event(arrivals[i], EvArrival, static_cast<int>(i));
    }
    if (opt_.bursts) {
      for (int e = 0; e < cfg_.total_engines(); ++e)
        push_event(opt_.bursts->start, EvBurst, e);
    }
    if (steady_ && report_.total_requests > 0) {
      push_event(steady_->lookback + steady_->window, EvSteadyCheck, 0);
    }
  }

  SimReport run() {
    while (!queue_.empty() && !stop_) {
      Event ev = queue_.top();
      queue_.pop();
      if (ev.t < now_ - 1e-12)
        throw SimulationError("event time went backwards");
      now_ = std::max(now_, ev.t);
      dispatch(ev);
      if (++events_processed_ > 400'000'000)
        throw SimulationError("event budget exceeded; likely livelock");
    }
    if (!stop_ && report_.completed_requests < report_.total_requests) {
      throw SimulationError(
          "simulation drained with " +
          std::to_string(report_.total_requests - report_.completed_requests) +
          " unfinished requests (no progress possible; check buffer sizes "
          "and capacities)");
    }
    finalize();
    return std::move(report_);
  }

 private:
  // --- construction -------------------------------------------------------
  void build_cluster() {
    const int nodes = cfg_.prefill_nodes + cfg_.decode_nodes;
    const int g = cfg_.engines_per_node;
    snic_rd_.resize(nodes);
    snic_wr_.resize(nodes);
    dram_.resize(nodes);
    cnic_rd_.resize(nodes * g);
    cnic_wr_.resize(nodes * g);
    gpu_.resize(nodes * g);
    auto add = [&](ResKind kind, int node, int engine, double cap, bool wrr) {
      Resource r;
      r.id = static_cast<int>(resources_.size());
      r.kind = kind;
      r.node_id = node;
      r.engine_id = engine;
      r.capacity = cap;
      r.wrr = wrr;
      resources_.push_back(r);
      return r.id;
    };
    for (int n = 0; n < nodes; ++n) {
      snic_rd_[n] = add(ResKind::SnicRead, n, -1, cfg_.node_storage_bandwidth(), false);
      snic_wr_[n] = add(ResKind::SnicWrite, n, -1, cfg_.node_storage_bandwidth(), false);
      dram_[n] = add(ResKind::Dram, n, -1, cfg_.dram_bandwidth, false);
      for (int k = 0; k < g; ++k) {
        const int e = n * g + k;
        cnic_rd_[e] = add(ResKind::CnicRead, n, e, cfg_.cnic_bandwidth, true);
        cnic_wr_[e] = add(ResKind::CnicWrite, n, e, cfg_.cnic_bandwidth, true);
        gpu_[e] = add(ResKind::Gpu, n, e, 1.0, false);
      }
    }
    res_total_.assign(resources_.size(), 0.0);
    res_buckets_.assign(resources_.size(), {});
    tok_.assign(nodes * g, 0);
    seq_.assign(nodes * g, 0);
    hbm_free_.assign(nodes * g, cfg_.hbm_capacity_tokens);
    read_q_.assign(nodes, 0);
    pe_buf_free_.assign(nodes, cfg_.pe_buffer_bytes);
    de_buf_free_.assign(nodes, cfg_.de_buffer_bytes);
    private_q_.resize(nodes);
  }

  void validate_workload(std::span<const Trajectory> trajectories) {
    const std::int64_t f = cfg_.kv_bytes_per_token();
    for (const auto& traj : trajectories) {
      traj.validate();
      for (std::size_t r = 0; r < traj.rounds.size(); ++r) {
        const std::int64_t cached = context_before(traj, r);
        const std::int64_t prompt = cached + traj.rounds[r].append_tokens;
        if (opt_.policy != Policy::Oracle) {
          if (cached * f > cfg_.pe_buffer_bytes)
            throw ConfigError("trajectory " + traj.id +
                              ": cached KV exceeds the PE buffer");
          if (prompt * f > cfg_.de_buffer_bytes)
            throw ConfigError("trajectory " + traj.id +
                              ": prompt KV exceeds the DE buffer");
        }
        if (prompt + traj.rounds[r].gen_tokens > cfg_.hbm_capacity_tokens)
          throw ConfigError("trajectory " + traj.id +
                            ": sequence exceeds per-engine HBM capacity");
        const BatchItem one{0, cached, 1};
        if (estimate_attention_time({&one, 1}, opt_.cost.prefill) >
            opt_.sched.compute_quota)
          throw ConfigError("trajectory " + traj.id +
                            ": a 1-token chunk exceeds the compute quota");
      }
    }
  }

  // --- engines ------------------------------------------------------------
  int n_pe() const { return cfg_.prefill_nodes * cfg_.engines_per_node; }
  int n_engines() const { return cfg_.total_engines(); }
  int node_of(int engine) const { return engine / cfg_.engines_per_node; }
  bool is_pe(int engine) const { return node_of(engine) < cfg_.prefill_nodes; }

  // --- events -------------------------------------------------------------
  void push_event(double t, int kind, int a, std::int64_t b = 0,
                  std::uint64_t epoch = 0) {
    queue_.push(Event{t, kind, seq_counter_++, kind, a, b, epoch});
  }

  void dispatch(const Event& ev) {
    switch (ev.kind) {
      case EvArrival: on_arrival(ev.a); break;
      case EvFlowActivate: on_flow_activate(ev.a); break;
      case EvMilestone: on_milestone(ev.a, ev.b, ev.epoch); break;
      case EvSchedWake: scheduler_wake(); break;
      case EvBurst: on_burst(ev.a); break;
      case EvSteadyCheck: on_steady_check(); break;
      default: throw SimulationError("unknown event kind");
    }
  }

  void request_wake() {
    if (wake_pending_) return;
    wake_pending_ = true;
    push_event(now_, EvSchedWake, 0);
  }

  // --- logging ------------------------------------------------------------
  void log(const char* kind, int req_id, const char* extra_key = nullptr,
           double extra = 0, const char* str_key = nullptr,
           const char* str_val = nullptr) {
    if (!opt_.record_events) return;
    char buf[256];
    int n = std::snprintf(buf, sizeof buf, "{\"t\":%.9f,\"kind\":\"%s\"", now_,
                          kind);
    if (req_id >= 0)
      n += std::snprintf(buf + n, sizeof buf - n, ",\"req\":%d", req_id);
    if (extra_key)
      n += std::snprintf(buf + n, sizeof buf - n, ",\"%s\":%.9g", extra_key,
                         extra);
    if (str_key)
      n += std::snprintf(buf + n, sizeof buf - n, ",\"%s\":\"%s\"", str_key,
                         str_val);
    std::snprintf(buf + n, sizeof buf - n, "}");
    report_.event_log.emplace_back(buf);
  }

  // --- flows --------------------------------------------------------------
  void accrue_resource(int r, double t0, double t1, double rate) {
    const double amount = rate * (t1 - t0);
    if (amount <= 0) return;
    res_total_[r] += amount;
    auto& buckets = res_buckets_[r];
    const double bw = opt_.bucket_width;
    std::size_t b0 = static_cast<std::size_t>(t0 / bw);
    std::size_t b1 = static_cast<std::size_t>(t1 / bw);
    if (b1 + 1 > buckets.size()) {
      if (b1 > 20'000'000)
        throw SimulationError("utilization bucket count exploded");
      buckets.resize(b1 + 1, 0.0);
    }
    if (b0 == b1) {
      buckets[b0] += amount;
      return;
    }
    buckets[b0] += rate * ((b0 + 1) * bw - t0);
    for (std::size_t b = b0 + 1; b < b1; ++b) buckets[b] += rate * bw;
    buckets[b1] += rate * (t1 - b1 * bw);
  }

  void settle(Flow& f) {
    if (now_ > f.last_update && f.rate > 0) {
      f.bytes_done += f.rate * (now_ - f.last_update);
      for (int r : f.path) accrue_resource(r, f.last_update, now_, f.rate);
    }
    f.last_update = now_;
  }

  double next_threshold(const Flow& f) const {
    return f.next_ms < f.milestones.size() ? f.milestones[f.next_ms].first
                                           : f.bytes_total;
  }

  void schedule_next_milestone(Flow& f) {
    if (f.rate <= 0) return;
    const double remain = next_threshold(f) - f.bytes_done;
    const double t = now_ + std::max(0.0, remain) / f.rate;
    push_event(t, EvMilestone, f.id, static_cast<std::int64_t>(f.next_ms),
               f.epoch);
  }

  void recompute_rates() {
    ++epoch_;
    std::vector<FlowDemand> demands;
    std::vector<Flow*> order;
    demands.reserve(active_.size());
    for (auto& [id, f] : active_) {
      settle(f);
      demands.push_back({f.id, f.high, f.path});
      order.push_back(&f);
    }
    const auto rates = arbitrate(resources_, demands);
    for (std::size_t i = 0; i < order.size(); ++i) {
      order[i]->rate = rates[i];
      order[i]->epoch = epoch_;
      schedule_next_milestone(*order[i]);
    }
  }

  // Creates a flow; byte stages under Oracle, and zero-size flows, complete
  // immediately.
  void start_flow(int req_id, Stage stage, double bytes, std::vector<int> path,
                  bool high, std::vector<std::pair<double, std::int64_t>> ms = {}) {
    if (bytes <= 0 ||
        (opt_.policy == Policy::Oracle && is_byte_stage(stage) && req_id >= 0)) {
      if (opt_.record_flows)
        report_.flows.push_back({req_id, stage, std::max(0.0, bytes), now_, now_});
      complete_stage(req_id, stage, bytes);
      return;
    }
    Flow f;
    f.id = flow_counter_++;
    f.req = req_id;
    f.stage = stage;
    f.high = high;
    f.bytes_total = bytes;
    f.path = std::move(path);
    f.milestones = std::move(ms);
    f.t_start = now_;
    f.last_update = now_;
    const double overhead = is_byte_stage(stage)
                                ? opt_.submission_overhead / opt_.batch_amortization
                                : 0.0;
    if (overhead > 0) {
      pending_.emplace(f.id, std::move(f));
      push_event(now_ + overhead, EvFlowActivate, pending_.rbegin()->first);
    } else {
      const int id = f.id;
      active_.emplace(id, std::move(f));
      log("flow_start", req_id, "bytes", bytes, "stage", to_string(stage));
      recompute_rates();
    }
  }

  void on_flow_activate(int flow_id) {
    auto it = pending_.find(flow_id);
    if (it == pending_.end()) return;
    Flow f = std::move(it->second);
    pending_.erase(it);
    f.t_start = now_;
    f.last_update = now_;
    log("flow_start", f.req, "bytes", f.bytes_total, "stage", to_string(f.stage));
    active_.emplace(f.id, std::move(f));
    recompute_rates();
  }

  void on_milestone(int flow_id, std::int64_t ms_index, std::uint64_t epoch) {
    auto it = active_.find(flow_id);
    if (it == active_.end()) return;
    Flow& f = it->second;
    if (f.epoch != epoch || static_cast<std::int64_t>(f.next_ms) != ms_index)
      return;  // stale
    // settle exactly onto the threshold
    const double threshold = next_threshold(f);
    if (now_ > f.last_update && f.rate > 0)
      for (int r : f.path) accrue_resource(r, f.last_update, now_, f.rate);
    f.bytes_done = threshold;
    f.last_update = now_;
    if (f.next_ms < f.milestones.size()) {
      const std::int64_t tag = f.milestones[f.next_ms].second;
      ++f.next_ms;
      on_decode_token(f.req, tag);
      auto again = active_.find(flow_id);
      if (again != active_.end() && again->second.epoch == epoch)
        schedule_next_milestone(again->second);
      return;
    }
    // completion
    Flow done = std::move(f);
    active_.erase(it);
    if (opt_.record_flows)
      report_.flows.push_back(
          {done.req, done.stage, done.bytes_total, done.t_start, now_});
    log("flow_end", done.req, "bytes", done.bytes_total, "stage",
        to_string(done.stage));
    recompute_rates();
    if (done.stage == Stage::Burst) {
      report_.burst_latencies.push_back(now_ - done.t_start);
      return;
    }
    complete_stage(done.req, done.stage, done.bytes_total);
  }

  // --- request pipeline ---------------------------------------------------
  void on_arrival(int traj_idx) {
    TrajRt& tr = trajs_[traj_idx];
    const int round = tr.next_round++;
    Req rq;
    rq.id = static_cast<int>(reqs_.size());
    rq.traj_idx = traj_idx;
    rq.round = round;
    rq.cached = context_before(*tr.traj, round);
    rq.append = tr.traj->rounds[round].append_tokens;
    rq.gen = tr.traj->rounds[round].gen_tokens;
    rq.t_arrival = now_;
    if (round == 0) tr.first_arrival = now_;
    reqs_.push_back(rq);
    de_global_.push_back(rq.id);
    log("arrival", rq.id);
    request_wake();
  }

  std::int64_t kvb_layer(std::int64_t tokens) const {
    return tokens * cfg_.kv_bytes_per_token_per_layer;
  }
  std::int64_t kvb_full(std::int64_t tokens) const {
    return tokens * cfg_.kv_bytes_per_token();
  }

  double layer_time(const Req& rq) const {
    const BatchItem item{rq.id, rq.cached, rq.append};
    return estimate_attention_time({&item, 1}, opt_.cost.prefill);
  }

  double decode_step_time(const Req& rq) const {
    return opt_.cost.decode_step_overhead +
           cfg_.n_layer * opt_.cost.decode_per_ctx_token *
               static_cast<double>(rq.prompt());
  }

  void try_admit(Req& rq) {
    const int pe_node = node_of(rq.pe);
    const int de_node = node_of(rq.de);
    const std::int64_t pe_need =
        (rq.path == ReadPath::PEPath) ? kvb_full(rq.cached) : 0;
    const std::int64_t de_need = kvb_full(rq.prompt());
    if (opt_.policy != Policy::Oracle) {
      if (pe_buf_free_[pe_node] < pe_need || de_buf_free_[de_node] < de_need)
        return;
      pe_buf_free_[pe_node] -= pe_need;
      de_buf_free_[de_node] -= de_need;
    }
    rq.t_admit = now_;
    rq.phase = ReqPhase::Reading;
    log("admit", rq.id);
    admitted_this_pass_.push_back(rq.id);
    if (rq.cached > 0 && opt_.policy != Policy::Oracle) {
      const int src = (rq.path == ReadPath::PEPath) ? pe_node : de_node;
      start_flow(rq.id, Stage::StorageRead, static_cast<double>(kvb_full(rq.cached)),
                 {snic_rd_[src], dram_[src]}, false);
    } else {
      complete_stage(rq.id, Stage::StorageRead, 0);
    }
  }

  void start_hit_transfer(Req& rq) {
    // one layer's worth of hit-token KV toward the PE HBM
    if (rq.path == ReadPath::PEPath) {
      start_flow(rq.id, Stage::LoopbackH2D, static_cast<double>(kvb_layer(rq.cached)),
                 {dram_[node_of(rq.pe)], cnic_rd_[rq.pe], cnic_wr_[rq.pe]}, false);
    } else {
      start_flow(rq.id, Stage::DeToPe, static_cast<double>(kvb_layer(rq.cached)),
                 {dram_[node_of(rq.de)], cnic_rd_[rq.de], cnic_wr_[rq.pe]}, false);
    }
  }

  void maybe_start_compute(Req& rq) {
    if (rq.compute_in_flight || rq.layer_compute_done >= cfg_.n_layer) return;
    if (rq.layer_h2d_done <= rq.layer_compute_done) return;
    rq.compute_in_flight = true;
    start_flow(rq.id, Stage::LayerCompute, layer_time(rq), {gpu_[rq.pe]}, false);
  }

  void try_start_out(Req& rq) {
    if (rq.out_in_flight || rq.layer_out_done >= rq.layer_compute_done) return;
    rq.out_in_flight = true;
    if (rq.path == ReadPath::PEPath) {
      start_flow(rq.id, Stage::PeToDe, static_cast<double>(kvb_layer(rq.prompt())),
                 {cnic_rd_[rq.pe], cnic_wr_[rq.de], dram_[node_of(rq.de)]}, false);
    } else {
      start_flow(rq.id, Stage::MissMerge, static_cast<double>(kvb_layer(rq.append)),
                 {cnic_rd_[rq.pe], cnic_wr_[rq.de], dram_[node_of(rq.de)]}, false);
    }
  }

  void on_prefill_side_done(Req& rq) {
    // all layers computed and shipped; the PE is released
    if (rq.path == ReadPath::PEPath && opt_.policy != Policy::Oracle)
      pe_buf_free_[node_of(rq.pe)] += kvb_full(rq.cached);
    tok_[rq.pe] -= rq.total();
    seq_[rq.pe] -= 1;
    rq.phase = ReqPhase::DecodeH2D;
    request_wake();
    start_flow(rq.id, Stage::DecodeH2D, static_cast<double>(kvb_full(rq.prompt())),
               {dram_[node_of(rq.de)], cnic_rd_[rq.de], cnic_wr_[rq.de]}, false);
  }

  void start_decode(Req& rq) {
    rq.phase = ReqPhase::Decoding;
    const double step = decode_step_time(rq);
    std::vector<std::pair<double, std::int64_t>> ms;
    for (std::int64_t k = 1; k < rq.gen; ++k) {
      const bool want = (k <= 2) || (k % cfg_.block_size_tokens == 0);
      if (want) ms.emplace_back(step * static_cast<double>(k), k);
    }
    start_flow(rq.id, Stage::Decode, step * static_cast<double>(rq.gen),
               {gpu_[rq.de]}, false, std::move(ms));
  }

  void persist_tokens(Req& rq, std::int64_t up_to) {
    const std::int64_t delta = up_to - rq.persisted;
    if (delta <= 0) return;
    rq.persisted = up_to;
    start_flow(rq.id, Stage::PersistD2H, static_cast<double>(kvb_full(delta)),
               {cnic_rd_[rq.de], cnic_wr_[rq.de], dram_[node_of(rq.de)]}, false);
  }

  void on_decode_token(int req_id, std::int64_t k) {
    Req& rq = reqs_[req_id];
    if (k == 1) {
      rq.t_first = now_;
      log("token_emitted", rq.id, "k", 1);
      if (slo_) {
        ttft_series_.emplace_back(now_, now_ - rq.t_arrival);
        if (now_ - rq.t_arrival > slo_->ttft_limit) {
          report_.slo_violated = true;
          stop_ = true;
        }
      }
    } else if (k == 2) {
      rq.t_second = now_;
      log("token_emitted", rq.id, "k", 2);
    }
    if (k % cfg_.block_size_tokens == 0) {
      log("block_ready", rq.id, "k", static_cast<double>(k));
      persist_tokens(rq, k);
    }
  }

  void complete_stage(int req_id, Stage stage, double bytes) {
    (void)bytes;
    Req& rq = reqs_[req_id];
    switch (stage) {
      case Stage::StorageRead: {
        rq.t_read_done = now_;
        if (rq.cached > 0 && opt_.policy != Policy::Oracle)
          read_q_[(rq.path == ReadPath::PEPath) ? node_of(rq.pe)
                                                : node_of(rq.de)] -= rq.cached;
        rq.phase = ReqPhase::Prefill;
        if (rq.cached > 0) {
          start_hit_transfer(rq);
        } else {
          rq.layer_h2d_done = cfg_.n_layer;
        }
        maybe_start_compute(rq);
        break;
      }
      case Stage::LoopbackH2D:
      case Stage::DeToPe: {
        rq.layer_h2d_done += 1;
        if (rq.layer_h2d_done < cfg_.n_layer) start_hit_transfer(rq);
        maybe_start_compute(rq);
        break;
      }
      case Stage::LayerCompute: {
        rq.compute_in_flight = false;
        rq.layer_compute_done += 1;
        log("layer_done", rq.id, "layer", rq.layer_compute_done);
        maybe_start_compute(rq);
        try_start_out(rq);
        break;
      }
      case Stage::PeToDe:
      case Stage::MissMerge: {
        rq.out_in_flight = false;
        rq.layer_out_done += 1;
        if (rq.layer_out_done >= cfg_.n_layer) {
          on_prefill_side_done(rq);
        } else {
          try_start_out(rq);
        }
        break;
      }
      case Stage::DecodeH2D: {
        if (opt_.policy != Policy::Oracle)
          de_buf_free_[node_of(rq.de)] += kvb_full(rq.prompt());
        rq.t_prefill_done = now_;
        request_wake();
        start_decode(rq);
        break;
      }
      case Stage::Decode: {
        if (rq.t_first < 0) {  // no first-token milestone (gen == 1)
          rq.t_first = now_;
          if (slo_) {
            ttft_series_.emplace_back(now_, now_ - rq.t_arrival);
            if (now_ - rq.t_arrival > slo_->ttft_limit) {
              report_.slo_violated = true;
              stop_ = true;
            }
          }
        }
        if (rq.t_second < 0) rq.t_second = now_;
        persist_tokens(rq, rq.gen);
        on_request_complete(rq);
        break;
      }
      case Stage::PersistD2H: {
        start_flow(rq.id, Stage::PersistWrite, bytes,
                   {dram_[node_of(rq.de)], snic_wr_[node_of(rq.de)]}, false);
        break;
      }
      case Stage::PersistWrite: {
        log("block_persisted", rq.id, "bytes", bytes);
        break;
      }
      default:
        throw SimulationError("unexpected stage completion");
    }
  }

  void on_request_complete(Req& rq) {
    rq.phase = ReqPhase::Done;
    rq.t_done = now_;
    hbm_free_[rq.de] += rq.total();
    tok_[rq.de] -= rq.total();
    seq_[rq.de] -= 1;
    report_.completed_requests += 1;
    report_.makespan = std::max(report_.makespan, now_);
    log("request_complete", rq.id);
    TrajRt& tr = trajs_[rq.traj_idx];
    if (tr.next_round < static_cast<int>(tr.traj->rounds.size())) {
      push_event(now_, EvArrival, rq.traj_idx);  // zero tool-call latency
    } else {
      tr.last_done = now_;
    }
    request_wake();
  }

  // --- scheduling ---------------------------------------------------------
  EngineSnapshot snapshot_of(int e) const {
    EngineSnapshot s;
    s.engine_id = e;
    s.node_id = node_of(e);
    s.kind = is_pe(e) ? EngineKind::PE : EngineKind::DE;
    s.seq_e = seq_[e];
    s.tok_e = tok_[e];
    s.read_q = read_q_[node_of(e)];
    s.hbm_free_tokens = hbm_free_[e];
    return s;
  }

  void assign_de(Req& rq, int de, int category) {
    rq.de = de;
    rq.de_category = category;
    tok_[de] += rq.total();
    seq_[de] += 1;
    hbm_free_[de] -= rq.total();
    rq.phase = ReqPhase::WaitingPe;
    pe_waiting_.push_back(rq.id);
  }

  void assign_pe(Req& rq, int pe, int category) {
    rq.pe = pe;
    rq.pe_category = category;
    tok_[pe] += rq.total();
    seq_[pe] += 1;
    rq.t_sched = now_;
    // read-path selection
    if (opt_.policy == Policy::PEOnly) {
      rq.path = ReadPath::PEPath;
    } else if (opt_.sched_mode == SchedMode::RoundRobin) {
      rq.path = (rr_path_++ % 2 == 0) ? ReadPath::PEPath : ReadPath::DEPath;
    } else {
      rq.path = select_read_path(read_q_[node_of(rq.pe)], read_q_[node_of(rq.de)]);
    }
    if (rq.cached > 0 && opt_.policy != Policy::Oracle)
      read_q_[(rq.path == ReadPath::PEPath) ? node_of(rq.pe)
                                            : node_of(rq.de)] += rq.cached;
    rq.phase = ReqPhase::WaitingAdmit;
    admission_.push_back(rq.id);
    report_.decisions.push_back({now_, rq.id, rq.pe, rq.de, rq.path,
                                 rq.pe_category, rq.de_category});
    if (opt_.record_events) {
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "{\"t\":%.9f,\"kind\":\"schedule\",\"req\":%d,\"pe\":%d,"
                    "\"de\":%d,\"path\":\"%s\",\"cat\":%d}",
                    now_, rq.id, rq.pe, rq.de,
                    rq.path == ReadPath::PEPath ? "pe" : "de", rq.pe_category);
      report_.event_log.emplace_back(buf);
    }
  }

  void scheduler_wake() {
    wake_pending_ = false;
    if (opt_.sched_mode == SchedMode::Adaptive)
      schedule_adaptive();
    else
      schedule_round_robin();
    // admission pass, FIFO; nodes progress independently
    admitted_this_pass_.clear();
    for (int id : std::vector<int>(admission_.begin(), admission_.end()))
      try_admit(reqs_[id]);
    for (int id : admitted_this_pass_)
      admission_.erase(std::find(admission_.begin(), admission_.end(), id));
  }

  void schedule_adaptive() {
    const int g = cfg_.engines_per_node;
    // DE phase 1: drain the global queue into per-group (per-node) queues
    if (!de_global_.empty()) {
      std::vector<GroupLoad> groups;
      for (int n = cfg_.prefill_nodes; n < cfg_.prefill_nodes + cfg_.decode_nodes;
           ++n) {
        GroupLoad gl{n, 0};
        for (int k = 0; k < g; ++k) gl.tok_sum += tok_[n * g + k];
        for (int id : private_q_[n]) gl.tok_sum += reqs_[id].total();
        groups.push_back(gl);
      }
      std::vector<PendingRequest> pending;
      for (int id : de_global_) pending.push_back({id, reqs_[id].total()});
      for (const auto& [req_id, group] : schedule_de_groups(pending, groups))
        private_q_[group].push_back(req_id);
      de_global_.clear();
    }
    // DE phase 2 within each group
    for (int n = cfg_.prefill_nodes; n < cfg_.prefill_nodes + cfg_.decode_nodes;
         ++n) {
      auto& q = private_q_[n];
      if (q.empty()) continue;
      std::vector<PendingRequest> pending;
      for (int id : q) pending.push_back({id, reqs_[id].total()});
      std::vector<EngineSnapshot> snaps;
      for (int k = 0; k < g; ++k) snaps.push_back(snapshot_of(n * g + k));
      const auto asg = schedule_de_within_group(pending, snaps, opt_.sched);
      for (const auto& a : asg) assign_de(reqs_[a.request_id], a.engine_id, a.category);
      q.erase(q.begin(), q.begin() + asg.size());
    }
    // PE scheduling over the global FIFO of DE-assigned requests
    if (!pe_waiting_.empty()) {
      std::vector<PendingRequest> pending;
      for (int id : pe_waiting_) pending.push_back({id, reqs_[id].total()});
      std::vector<EngineSnapshot> snaps;
      for (int e = 0; e < n_pe(); ++e) snaps.push_back(snapshot_of(e));
      const auto asg = schedule_pe_fetch(pending, snaps, opt_.sched);
      for (const auto& a : asg) assign_pe(reqs_[a.request_id], a.engine_id, a.category);
      pe_waiting_.erase(pe_waiting_.begin(), pe_waiting_.begin() + asg.size());
    }
  }

  void schedule_round_robin() {
    // DE: next engine in the cycle with room
    while (!de_global_.empty()) {
      Req& rq = reqs_[de_global_.front()];
      const int n_de = n_engines() - n_pe();
      int chosen = -1;
      for (int i = 0; i < n_de; ++i) {
        const int e = n_pe() + (rr_de_ + i) % n_de;
        if (hbm_free_[e] >= rq.total()) {
          chosen = e;
          rr_de_ = (rr_de_ + i + 1) % n_de;
          break;
        }
      }
      if (chosen < 0) break;
      de_global_.pop_front();
      assign_de(rq, chosen, 0);
    }
    while (!pe_waiting_.empty()) {
      Req& rq = reqs_[pe_waiting_.front()];
      pe_waiting_.pop_front();
      const int pe = rr_pe_ % n_pe();
      rr_pe_ = (rr_pe_ + 1) % n_pe();
      assign_pe(rq, pe, 0);
    }
  }

  // --- bursts and online control -----------------------------------------
  void on_burst(int engine) {
    const auto& b = *opt_.bursts;
    start_flow(-1, Stage::Burst, b.bytes_per_burst, {cnic_rd_[engine]}, true);
    if (now_ + b.period < b.stop) push_event(now_ + b.period, EvBurst, engine);
  }

  void on_steady_check() {
    if (stop_ || report_.completed_requests >= report_.total_requests) return;
    if (detect_steady_state(ttft_series_, steady_->window, steady_->lookback,
                            steady_->threshold)) {
      report_.steady_state = true;
      stop_ = true;
      return;
    }
    // don't keep a drained-but-unfinished run alive forever
    if (!active_.empty() || !pending_.empty() || !queue_.empty())
      push_event(now_ + steady_->window / 2, EvSteadyCheck, 0);
  }

  // --- reporting ----------------------------------------------------------
  void finalize() {
    report_.duration = now_;
    report_.bucket_width = opt_.bucket_width;
    for (std::size_t r = 0; r < resources_.size(); ++r) {
      ResourceUsage u;
      u.kind = resources_[r].kind;
      u.node_id = resources_[r].node_id;
      u.engine_id = resources_[r].engine_id;
      u.capacity = resources_[r].capacity;
      u.total_bytes = res_total_[r];
      u.buckets = std::move(res_buckets_[r]);
      report_.usage.push_back(std::move(u));
    }
    for (const Req& rq : reqs_) {
      if (rq.phase != ReqPhase::Done) continue;
      LatencyRecord rec;
      rec.request_id =
          trajs_[rq.traj_idx].traj->id + "#" + std::to_string(rq.round);
      rec.ttft = rq.t_first - rq.t_arrival;
      rec.ttst = rq.t_second - rq.t_arrival;
      rec.tpot = rq.gen > 1 ? (rq.t_done - rq.t_first) / (rq.gen - 1) : 0.0;
      rec.sched_component = rq.t_sched - rq.t_arrival;
      rec.alloc_component = rq.t_admit - rq.t_sched;
      rec.read_component = rq.t_read_done - rq.t_admit;
      rec.prefill_component = rq.t_first - rq.t_read_done;
      report_.latencies.push_back(std::move(rec));
    }
    for (const TrajRt& tr : trajs_)
      if (tr.last_done >= 0)
        report_.trajectory_jct.emplace_back(tr.traj->id,
                                            tr.last_done - tr.first_arrival);
  }

  // --- state --------------------------------------------------------------
  ClusterConfig cfg_;
  SimOptions opt_;
  const SloSpec* slo_;
  const SteadySpec* steady_;

  std::vector<Resource> resources_;
  std::vector<int> snic_rd_, snic_wr_, dram_, cnic_rd_, cnic_wr_, gpu_;
  std::vector<double> res_total_;
  std::vector<std::vector<double>> res_buckets_;

  std::vector<std::int64_t> tok_, seq_, hbm_free_, read_q_;
  std::vector<std::int64_t> pe_buf_free_, de_buf_free_;

  std::vector<TrajRt> trajs_;
  std::deque<Req> reqs_;
  std::deque<int> de_global_, pe_waiting_, admission_;
  std::vector<std::deque<int>> private_q_;
  std::vector<int> admitted_this_pass_;

  std::priority_queue<Event, std::vector<Event>, EventLater> queue_;
  std::map<int, Flow> active_, pending_;
  std::uint64_t seq_counter_ = 0, epoch_ = 0, events_processed_ = 0;
  int flow_counter_ = 0;
  int rr_pe_ = 0, rr_de_ = 0, rr_path_ = 0;
  double now_ = 0;
  bool wake_pending_ = false, stop_ = false;

  std::vector<std::pair<double, double>> ttft_series_;
  SimReport report_;
};

}  // namespace

SimReport run(const ClusterConfig& cfg, std::span<const Trajectory> trajectories,
              std::span<const double> arrival_times, const SimOptions& options) {
  Simulator sim(cfg, trajectories, arrival_times, options, nullptr, nullptr);
  return sim.run();
}

SimReport run_offline(const ClusterConfig& cfg,
                      std::span<const Trajectory> trajectories,
                      const SimOptions& options) {
  std::vector<double> arrivals(trajectories.size(), 0.0);
  return run(cfg, trajectories, arrivals, options);
}

SimReport run_online(const ClusterConfig& cfg,
                     std::span<const Trajectory> trajectories, double aps,
                     const SloSpec& slo, const SteadySpec& steady,
                     const SimOptions& options) {
  if (aps <= 0) throw ConfigError("run_online: aps must be > 0");
  std::mt19937_64 rng(options.seed);
  std::exponential_distribution<double> gap(aps);
  std::vector<double> arrivals;
  double t = 0;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    t += gap(rng);
    arrivals.push_back(t);
  }
  Simulator sim(cfg, trajectories, arrivals, options, &slo, &steady);
  return sim.run();
}

}  // namespace pdsim::desim
