#include "pdsim/scheduler.hpp"

#include <algorithm>
#include <limits>
#include <map>

namespace pdsim {

PeClassification classify_pes(std::span<const EngineSnapshot> snapshots,
                              const SchedulerParams& params) {
  params.validate();
  PeClassification c;
  for (std::size_t i = 0; i < snapshots.size(); ++i) {
    const auto& e = snapshots[i];
    if (e.tok_e > params.beta)
      c.overloaded.push_back(static_cast<int>(i));
    else if (e.read_q <= params.alpha)
      c.short_queue.push_back(static_cast<int>(i));
    else
      c.long_queue.push_back(static_cast<int>(i));
  }
  return c;
}

namespace {

// argmin tok_e over category members; ties broken by lowest engine id.
int argmin_tok(const std::vector<int>& category,
               const std::vector<EngineSnapshot>& snaps) {
  int best = -1;
  for (int idx : category) {
    if (best < 0 || snaps[idx].tok_e < snaps[best].tok_e ||
        (snaps[idx].tok_e == snaps[best].tok_e &&
         snaps[idx].engine_id < snaps[best].engine_id))
      best = idx;
  }
  return best;
}

}  // namespace

std::vector<Assignment> schedule_pe_fetch(
    std::span<const PendingRequest> waiting,
    std::span<const EngineSnapshot> pe_snapshots,
    const SchedulerParams& params) {
  params.validate();
  std::vector<EngineSnapshot> snaps(pe_snapshots.begin(), pe_snapshots.end());
  PeClassification cls = classify_pes(snaps, params);

  std::vector<Assignment> out;
  for (const auto& req : waiting) {
    int category = 0;
    int pick = -1;
    if (!cls.short_queue.empty()) {
      pick = argmin_tok(cls.short_queue, snaps);
      category = 2;
    } else if (!cls.long_queue.empty()) {
      pick = argmin_tok(cls.long_queue, snaps);
      category = 3;
    } else {
      break;  // terminate the fetch; return partial assignments
    }
    out.push_back({req.id, snaps[pick].engine_id, category});
    snaps[pick].tok_e += req.tokens;
    snaps[pick].seq_e += 1;
    if (snaps[pick].tok_e > params.beta) {
      // reclassify into the overloaded category
      auto& cat = category == 2 ? cls.short_queue : cls.long_queue;
      cat.erase(std::find(cat.begin(), cat.end(), pick));
      cls.overloaded.push_back(pick);
    }
  }
  return out;
}

std::vector<std::pair<int, int>> schedule_de_groups(
    std::span<const PendingRequest> global_queue,
    std::vector<GroupLoad> groups) {
  std::vector<std::pair<int, int>> out;
  if (groups.empty()) return out;
  for (const auto& req : global_queue) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < groups.size(); ++i) {
      if (groups[i].tok_sum < groups[best].tok_sum ||
          (groups[i].tok_sum == groups[best].tok_sum &&
           groups[i].group_id < groups[best].group_id))
        best = i;
    }
    out.emplace_back(req.id, groups[best].group_id);
    groups[best].tok_sum += req.tokens;
  }
  return out;
}

std::vector<Assignment> schedule_de_within_group(
    std::span<const PendingRequest> private_queue,
    std::span<const EngineSnapshot> de_snapshots,
    const SchedulerParams& params) {
  params.validate();
  std::vector<EngineSnapshot> snaps(de_snapshots.begin(), de_snapshots.end());
  if (snaps.empty()) return {};

  // R = maximal FIFO prefix that fits the summed free HBM.
  std::int64_t free_sum = 0;
  for (const auto& e : snaps) free_sum += e.hbm_free_tokens;
  std::size_t r_count = 0;
  std::int64_t r_tokens = 0;
  for (const auto& req : private_queue) {
    if (r_tokens + req.tokens > free_sum) break;
    r_tokens += req.tokens;
    ++r_count;
  }

  std::int64_t tok_sum = 0;
  for (const auto& e : snaps) tok_sum += e.tok_e;
  const double z =
      params.z_factor * static_cast<double>(r_tokens + tok_sum) /
      static_cast<double>(snaps.size());

  std::vector<Assignment> out;
  for (std::size_t i = 0; i < r_count; ++i) {
    const auto& req = private_queue[i];
    int pick = -1;
    int category = 0;
    // category 2: fits HBM and stays under Z; choose min seq_e
    for (std::size_t j = 0; j < snaps.size(); ++j) {
      const auto& e = snaps[j];
      if (e.hbm_free_tokens < req.tokens) continue;
      if (static_cast<double>(e.tok_e + req.tokens) > z) continue;
      if (pick < 0 || e.seq_e < snaps[pick].seq_e ||
          (e.seq_e == snaps[pick].seq_e &&
           e.engine_id < snaps[pick].engine_id))
        pick = static_cast<int>(j);
    }
    if (pick >= 0) {
      category = 2;
    } else {
      // category 1: fits HBM but exceeds Z; choose min tok_e
      for (std::size_t j = 0; j < snaps.size(); ++j) {
        const auto& e = snaps[j];
        if (e.hbm_free_tokens < req.tokens) continue;
        if (pick < 0 || e.tok_e < snaps[pick].tok_e ||
            (e.tok_e == snaps[pick].tok_e &&
             e.engine_id < snaps[pick].engine_id))
          pick = static_cast<int>(j);
      }
      category = 1;
    }
    if (pick < 0) break;  // no DE has sufficient HBM; stop with partial result
    out.push_back({req.id, snaps[pick].engine_id, category});
    snaps[pick].tok_e += req.tokens;
    snaps[pick].seq_e += 1;
    snaps[pick].hbm_free_tokens -= req.tokens;
  }
  return out;
}

ReadPath select_read_path(std::int64_t pe_node_read_q,
                          std::int64_t de_node_read_q) {
  return pe_node_read_q <= de_node_read_q ? ReadPath::PEPath : ReadPath::DEPath;
}

double estimate_attention_time(std::span<const BatchItem> batch,
                               const AttentionCostModel& model) {
  double t = model.constant;
  for (const auto& item : batch) {
    const double bsz = static_cast<double>(item.bsz);
    t += model.coeff_bilinear * bsz * static_cast<double>(item.cached) +
         model.coeff_quadratic * bsz * bsz + model.coeff_linear * bsz;
  }
  return t;
}

ForwardBatch build_forward_batch(std::span<const BatchItem> fifo_queue,
                                 const SchedulerParams& params,
                                 const AttentionCostModel& model) {
  params.validate();
  ForwardBatch fb;
  const double quota = params.compute_quota;

  for (const auto& item : fifo_queue) {
    fb.items.push_back(item);
    const double t = estimate_attention_time(fb.items, model);
    if (t <= quota) {
      fb.estimated_time = t;
      fb.consumed_whole += 1;
      continue;
    }
    fb.items.pop_back();
    // Binary search the largest bsz' in [0, bsz) still under the quota.
    std::int64_t lo = 0, hi = item.bsz - 1;
    while (lo < hi) {
      const std::int64_t mid = lo + (hi - lo + 1) / 2;
      BatchItem probe{item.request_id, item.cached, mid};
      fb.items.push_back(probe);
      const double tt = estimate_attention_time(fb.items, model);
      fb.items.pop_back();
      if (tt <= quota)
        lo = mid;
      else
        hi = mid - 1;
    }
    if (lo == 0) {
      if (fb.items.empty())
        throw QuotaInfeasibleError(
            "build_forward_batch: request " + std::to_string(item.request_id) +
            " cannot fit a 1-token chunk in the compute quota");
      return fb;  // defer the request intact
    }
    fb.chunked = true;
    fb.chunked_request_id = item.request_id;
    fb.chunk_bsz = lo;
    fb.items.push_back({item.request_id, item.cached, lo});
    fb.estimated_time = estimate_attention_time(fb.items, model);
    return fb;
  }
  fb.estimated_time = estimate_attention_time(fb.items, model);
  return fb;
}

}  // namespace pdsim
