#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pdsim/types.hpp"

namespace pdsim {

// Synthetic trajectory generation matching trace-level statistics.
// Turn counts and per-round lengths are log-normal with the given means;
// sigmas control dispersion. Trajectories are truncated so the total
// token count stays within max_len.
struct SyntheticSpec {
  std::int64_t max_len = 65536;
  double mean_turns = 157;
  double mean_append = 429;
  double mean_gen = 176;
  double sigma_turns = 0.5;
  double sigma_append = 0.6;
  double sigma_gen = 0.6;
  int count = 500;
  std::uint64_t seed = 1;

  void validate() const;
};

struct PoissonArrival {
  double rate = 1.0;
  std::uint64_t seed = 1;
};

struct WorkloadSpec {
  // Exactly one source: a trace file, or a synthetic generator.
  std::optional<std::string> trace_path;
  std::optional<SyntheticSpec> synthetic;
  // Arrival process: all at t=0 unless poisson is set.
  std::optional<PoissonArrival> poisson;
  // Variant knobs applied after loading/synthesis (see derive_variant).
  double append_scale = 1.0;
  double gen_scale = 1.0;
  std::int64_t max_len_override = 0;  // 0 = keep source lengths
};

// Line format: id<TAB>append:gen,append:gen,...
std::vector<Trajectory> load_trace(const std::string& path);
std::vector<Trajectory> parse_trace(std::istream& in);
void save_trace(std::ostream& out, std::span<const Trajectory> trajectories);
void save_trace(const std::string& path, std::span<const Trajectory> trajectories);

std::vector<Trajectory> synthesize(const SyntheticSpec& spec);

// Scale per-round append/gen lengths (rounded half-up), then truncate.
std::vector<Trajectory> derive_variant(std::span<const Trajectory> trajectories,
                                       double append_scale, double gen_scale,
                                       std::int64_t max_len);

// Prepend one synthetic round (random append, gen=1) so the cache prefix
// diverges from the base trajectory.
Trajectory extend_with_synthetic_round(const Trajectory& base,
                                       std::uint64_t seed);

std::vector<double> poisson_arrivals(double rate, double horizon,
                                     std::uint64_t seed);

std::vector<Trajectory> materialize(const WorkloadSpec& spec);

}  // namespace pdsim
