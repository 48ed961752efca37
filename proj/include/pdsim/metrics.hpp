#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace pdsim {

// Per-turn latency record. TTFT decomposition components (scheduling,
// allocating, reading, prefill) sum exactly to ttft.
struct LatencyRecord {
  std::string request_id;
  double ttft = 0;
  double ttst = 0;
  double tpot = 0;  // (completion - first_token) / (gen_len - 1), 0 if gen_len < 2
  double sched_component = 0;
  double alloc_component = 0;
  double read_component = 0;
  double prefill_component = 0;
};

struct BalancePoint {
  double t = 0;
  double max_avg = 0;
  bool defined = false;  // false when the window carried no traffic
};

// Windowed max/avg traffic ratio across resources. `per_resource_buckets`
// holds one traffic series per resource, all on the same bucket grid of
// width `bucket_width` seconds starting at t=0; `window_buckets` buckets
// are pooled per output point.
std::vector<BalancePoint> load_balance_ratio(
    std::span<const std::vector<double>> per_resource_buckets,
    double bucket_width, int window_buckets);

// Max/avg of one sample vector (e.g. per-forward attention times across DP
// ranks). Returns 0 when the average is zero.
double max_avg_ratio(std::span<const double> samples);

// True iff the mean of the series over [now-window, now] deviates from the
// mean over [now-lookback-window, now-lookback] by less than `threshold`
// (relative). Series points are (time, value); `now` is the last timestamp.
bool detect_steady_state(std::span<const std::pair<double, double>> series,
                         double window, double lookback, double threshold);

// Approximate live KV-Cache volume: rate * mean_jct * mean_total_len / 2
// tokens, scaled to bytes.
double working_set(double rate, double mean_jct, double mean_total_len,
                   double kv_bytes_per_token);

struct SloResult {
  bool pass = true;
  std::vector<std::string> violators;
};

SloResult slo_check(std::span<const LatencyRecord> records, double ttft_limit,
                    double tpot_limit);

struct DistSummary {
  double mean = 0;
  double p50 = 0;
  double p99 = 0;
  std::size_t count = 0;
};

DistSummary summarize(std::span<const double> values);

}  // namespace pdsim
