#include "pdsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pdsim {

std::vector<BalancePoint> load_balance_ratio(
    std::span<const std::vector<double>> per_resource_buckets,
    double bucket_width, int window_buckets) {
  if (bucket_width <= 0 || window_buckets < 1)
    throw std::invalid_argument("load_balance_ratio: bad window");
  if (per_resource_buckets.size() < 2)
    throw std::invalid_argument("load_balance_ratio: need >= 2 resources");
  std::size_t n_buckets = 0;
  for (const auto& series : per_resource_buckets)
    n_buckets = std::max(n_buckets, series.size());

  std::vector<BalancePoint> out;
  for (std::size_t start = 0; start < n_buckets;
       start += static_cast<std::size_t>(window_buckets)) {
    double max_traffic = 0, sum_traffic = 0;
    for (const auto& series : per_resource_buckets) {
      double w = 0;
      for (std::size_t b = start;
           b < std::min(series.size(), start + window_buckets); ++b)
        w += series[b];
      max_traffic = std::max(max_traffic, w);
      sum_traffic += w;
    }
    BalancePoint p;
    p.t = (static_cast<double>(start) + window_buckets / 2.0) * bucket_width;
    if (sum_traffic > 0) {
      p.defined = true;
      p.max_avg = max_traffic /
                  (sum_traffic / static_cast<double>(per_resource_buckets.size()));
    }
    out.push_back(p);
  }
  return out;
}

double max_avg_ratio(std::span<const double> samples) {
  if (samples.empty()) return 0;
  double mx = 0, sum = 0;
  for (double v : samples) {
    mx = std::max(mx, v);
    sum += v;
  }
  if (sum <= 0) return 0;
  return mx / (sum / static_cast<double>(samples.size()));
}

namespace {

// Mean of values with time in [lo, hi]; count==0 means no samples.
std::pair<double, std::size_t> window_mean(
    std::span<const std::pair<double, double>> series, double lo, double hi) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& [t, v] : series) {
    if (t >= lo && t <= hi) {
      sum += v;
      ++n;
    }
  }
  return {n ? sum / n : 0.0, n};
}

}  // namespace

bool detect_steady_state(std::span<const std::pair<double, double>> series,
                         double window, double lookback, double threshold) {
  if (threshold <= 0 || threshold >= 1)
    throw std::invalid_argument("detect_steady_state: threshold in (0,1)");
  if (series.empty()) return false;
  const double now = series.back().first;
  if (now - window - lookback < series.front().first) return false;
  const auto [cur, n_cur] = window_mean(series, now - window, now);
  const auto [old_mean, n_old] =
      window_mean(series, now - lookback - window, now - lookback);
  if (n_cur == 0 || n_old == 0 || old_mean <= 0) return false;
  return std::abs(cur - old_mean) / old_mean < threshold;
}

double working_set(double rate, double mean_jct, double mean_total_len,
                   double kv_bytes_per_token) {
  if (rate <= 0 || mean_jct <= 0 || mean_total_len <= 0 ||
      kv_bytes_per_token <= 0)
    throw std::invalid_argument("working_set: all inputs must be > 0");
  return rate * mean_jct * mean_total_len / 2.0 * kv_bytes_per_token;
}

SloResult slo_check(std::span<const LatencyRecord> records, double ttft_limit,
                    double tpot_limit) {
  if (ttft_limit <= 0 || tpot_limit <= 0)
    throw std::invalid_argument("slo_check: limits must be > 0");
  SloResult res;
  for (const auto& r : records) {
    if (r.ttft > ttft_limit || r.tpot > tpot_limit) {
      res.pass = false;
      res.violators.push_back(r.request_id);
    }
  }
  return res;
}

DistSummary summarize(std::span<const double> values) {
  DistSummary s;
  s.count = values.size();
  if (values.empty()) return s;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  double sum = 0;
  for (double v : sorted) sum += v;
  s.mean = sum / sorted.size();
  auto quantile = [&](double q) {
    const double pos = q * (sorted.size() - 1);
    const std::size_t i = static_cast<std::size_t>(pos);
    const double frac = pos - i;
    return i + 1 < sorted.size() ? sorted[i] * (1 - frac) + sorted[i + 1] * frac
                                 : sorted[i];
  };
  s.p50 = quantile(0.5);
  s.p99 = quantile(0.99);
  return s;
}

}  // namespace pdsim
