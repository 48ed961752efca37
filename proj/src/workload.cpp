#include "pdsim/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace pdsim {

void SyntheticSpec::validate() const {
  if (max_len < 2 || mean_turns <= 0 || mean_append <= 0 || mean_gen <= 0 ||
      sigma_turns < 0 || sigma_append < 0 || sigma_gen < 0 || count < 0)
    throw std::invalid_argument("SyntheticSpec: invalid values");
}

namespace {

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& msg) {
  throw std::runtime_error("trace parse error at line " +
                           std::to_string(line_no) + ": " + msg);
}

std::int64_t parse_count(const std::string& s, std::size_t line_no) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    parse_fail(line_no, "expected a decimal integer, got '" + s + "'");
  return std::stoll(s);
}

// Log-normal with a given mean: mu = ln(mean) - sigma^2/2.
double lognormal_mean(std::mt19937_64& rng, double mean, double sigma) {
  std::lognormal_distribution<double> dist(std::log(mean) - sigma * sigma / 2,
                                           sigma);
  return dist(rng);
}

}  // namespace

std::vector<Trajectory> parse_trace(std::istream& in) {
  std::vector<Trajectory> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) parse_fail(line_no, "missing TAB separator");
    Trajectory traj;
    traj.id = line.substr(0, tab);
    std::stringstream rounds_ss(line.substr(tab + 1));
    std::string tok;
    while (std::getline(rounds_ss, tok, ',')) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos)
        parse_fail(line_no, "round '" + tok + "' missing ':'");
      Round r;
      r.append_tokens = parse_count(tok.substr(0, colon), line_no);
      r.gen_tokens = parse_count(tok.substr(colon + 1), line_no);
      traj.rounds.push_back(r);
    }
    try {
      traj.validate();
    } catch (const std::invalid_argument& e) {
      parse_fail(line_no, e.what());
    }
    out.push_back(std::move(traj));
  }
  return out;
}

std::vector<Trajectory> load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file: " + path);
  return parse_trace(in);
}

void save_trace(std::ostream& out, std::span<const Trajectory> trajectories) {
  for (const auto& traj : trajectories) {
    out << traj.id << '\t';
    for (std::size_t i = 0; i < traj.rounds.size(); ++i) {
      if (i) out << ',';
      out << traj.rounds[i].append_tokens << ':' << traj.rounds[i].gen_tokens;
    }
    out << '\n';
  }
}

void save_trace(const std::string& path,
                std::span<const Trajectory> trajectories) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open trace file for write: " + path);
  save_trace(out, trajectories);
}

std::vector<Trajectory> synthesize(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::vector<Trajectory> out;
  out.reserve(spec.count);
  for (int i = 0; i < spec.count; ++i) {
    Trajectory traj;
    traj.id = "syn" + std::to_string(i);
    const auto turns = std::max<std::int64_t>(
        1, std::llround(lognormal_mean(rng, spec.mean_turns, spec.sigma_turns)));
    std::int64_t total = 0;
    for (std::int64_t t = 0; t < turns; ++t) {
      Round r;
      r.append_tokens = std::max<std::int64_t>(
          0, std::llround(lognormal_mean(rng, spec.mean_append, spec.sigma_append)));
      r.gen_tokens = std::max<std::int64_t>(
          1, std::llround(lognormal_mean(rng, spec.mean_gen, spec.sigma_gen)));
      if (total + r.append_tokens + r.gen_tokens > spec.max_len) {
        if (traj.rounds.empty()) {
          // clamp the first round so every trajectory has at least one
          r.append_tokens = std::min(r.append_tokens, spec.max_len - 1);
          r.gen_tokens =
              std::max<std::int64_t>(1, spec.max_len - r.append_tokens - 1);
          traj.rounds.push_back(r);
        }
        break;
      }
      total += r.append_tokens + r.gen_tokens;
      traj.rounds.push_back(r);
    }
    traj.validate();
    out.push_back(std::move(traj));
  }
  return out;
}

std::vector<Trajectory> derive_variant(std::span<const Trajectory> trajectories,
                                       double append_scale, double gen_scale,
                                       std::int64_t max_len) {
  if (append_scale <= 0 || gen_scale <= 0)
    throw std::invalid_argument("derive_variant: scales must be > 0");
  std::vector<Trajectory> out;
  out.reserve(trajectories.size());
  for (const auto& base : trajectories) {
    Trajectory traj;
    traj.id = base.id;
    std::int64_t total = 0;
    for (const auto& round : base.rounds) {
      Round r;
      // half-up rounding
      r.append_tokens = static_cast<std::int64_t>(
          std::floor(round.append_tokens * append_scale + 0.5));
      r.gen_tokens = std::max<std::int64_t>(
          1, static_cast<std::int64_t>(std::floor(round.gen_tokens * gen_scale + 0.5)));
      if (total + r.append_tokens + r.gen_tokens > max_len) {
        if (traj.rounds.empty()) {
          r.append_tokens = std::min(r.append_tokens, max_len - 1);
          r.gen_tokens = std::max<std::int64_t>(1, max_len - r.append_tokens - 1);
          traj.rounds.push_back(r);
        }
        break;
      }
      total += r.append_tokens + r.gen_tokens;
      traj.rounds.push_back(r);
    }
    traj.validate();
    out.push_back(std::move(traj));
  }
  return out;
}

Trajectory extend_with_synthetic_round(const Trajectory& base,
                                       std::uint64_t seed) {
  base.validate();
  std::mt19937_64 rng(seed);
  // Uniform prefix length; distinct seeds give distinct cache prefixes.
  std::uniform_int_distribution<std::int64_t> dist(64, 4096);
  Trajectory out;
  out.id = base.id + "_x" + std::to_string(seed);
  out.rounds.push_back({dist(rng), 1});
  out.rounds.insert(out.rounds.end(), base.rounds.begin(), base.rounds.end());
  return out;
}

std::vector<double> poisson_arrivals(double rate, double horizon,
                                     std::uint64_t seed) {
  if (rate <= 0 || horizon <= 0)
    throw std::invalid_argument("poisson_arrivals: rate and horizon must be > 0");
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> gap(rate);
  std::vector<double> out;
  double t = gap(rng);
  while (t < horizon) {
    out.push_back(t);
    t += gap(rng);
  }
  return out;
}

std::vector<Trajectory> materialize(const WorkloadSpec& spec) {
  if (spec.trace_path && spec.synthetic)
    throw std::invalid_argument("WorkloadSpec: both trace and synthetic set");
  std::vector<Trajectory> trajs;
  if (spec.trace_path)
    trajs = load_trace(*spec.trace_path);
  else if (spec.synthetic)
    trajs = synthesize(*spec.synthetic);
  else
    throw std::invalid_argument("WorkloadSpec: no source");
  if (spec.append_scale != 1.0 || spec.gen_scale != 1.0 ||
      spec.max_len_override > 0) {
    std::int64_t cap = spec.max_len_override;
    if (cap <= 0) {
      cap = 0;
      for (const auto& t : trajs) cap = std::max(cap, t.total_tokens());
      // scaled totals can exceed the source max; stretch the cap too
      cap = static_cast<std::int64_t>(
          std::ceil(cap * std::max(spec.append_scale, spec.gen_scale)));
    }
    trajs = derive_variant(trajs, spec.append_scale, spec.gen_scale, cap);
  }
  return trajs;
}

}  // namespace pdsim
