#pragma once

// Monte Carlo over seeds. Each run is independent; results are stored by seed
// index so the aggregate does not depend on the worker count.

#include "drone_carrier/simulation.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace drone_carrier {

struct BatchSummary {
  std::size_t runs = 0;
  std::size_t successes = 0;
  std::size_t sequence_ok = 0;
  std::size_t docked_runs = 0;
  std::map<std::string, std::size_t> outcomes;
  double mean_localization_error = 0.0;
  double mean_docking_time = 0.0;
  double mean_landing_error = 0.0;
  std::map<std::string, double> localization_quantiles;  // "p50", "p90", "p95"
  std::map<std::string, double> landing_quantiles;

  double success_rate() const { return runs ? static_cast<double>(successes) / static_cast<double>(runs) : 0.0; }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["runs"] = runs;
    j["successes"] = successes;
    j["success_rate"] = success_rate();
    j["phase_sequence_ok"] = sequence_ok;
    j["outcomes"] = outcomes;
    // Means are omitted when no run produced the quantity.
    if (!localization_quantiles.empty()) j["mean_localization_error_m"] = mean_localization_error;
    if (docked_runs) j["mean_docking_time_s"] = mean_docking_time;
    if (!landing_quantiles.empty()) j["mean_landing_error_m"] = mean_landing_error;
    j["localization_error_quantiles_m"] = localization_quantiles;
    j["landing_error_quantiles_m"] = landing_quantiles;
    return j;
  }
};

/// Runs `fn(seed)` for seeds [first, first + count) on `threads` workers.
template <class Fn>
auto parallel_seeds(std::uint64_t first, std::size_t count, unsigned threads, Fn fn)
    -> std::vector<decltype(fn(first))> {
  using R = decltype(fn(first));
  std::vector<std::optional<R>> slots(count);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < count;) {
      try {
        slots[i] = fn(first + i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  std::vector<R> out;
  out.reserve(count);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

inline BatchSummary summarize(const std::vector<RunReport>& reports) {
  BatchSummary b;
  b.runs = reports.size();
  std::size_t nd = 0;
  std::vector<double> loc, land;
  for (const auto& r : reports) {
    b.successes += r.success();
    b.sequence_ok += r.phase_sequence_ok;
    ++b.outcomes[to_string(r.outcome)];
    if (r.metrics.final_localization_error) loc.push_back(*r.metrics.final_localization_error);
    if (r.metrics.docking_time) b.mean_docking_time += *r.metrics.docking_time, ++nd;
    land.insert(land.end(), r.metrics.landing_errors.begin(), r.metrics.landing_errors.end());
  }
  if (nd) b.mean_docking_time /= static_cast<double>(nd);
  b.docked_runs = nd;
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  b.mean_localization_error = mean(loc);
  b.mean_landing_error = mean(land);
  for (auto [key, q] : {std::pair{"p50", 0.5}, std::pair{"p90", 0.9}, std::pair{"p95", 0.95}}) {
    if (!loc.empty()) b.localization_quantiles[key] = percentile(loc, q);
    if (!land.empty()) b.landing_quantiles[key] = percentile(land, q);
  }
  return b;
}

inline std::vector<RunReport> run_batch(const Scenario& sc, std::uint64_t first_seed, std::size_t count, unsigned threads,
                                        SimConfig cfg = {}) {
  cfg.record_logs = false;
  return parallel_seeds(first_seed, count, threads, [&](std::uint64_t seed) { return run_scenario(sc, seed, cfg); });
}

}  // namespace drone_carrier
