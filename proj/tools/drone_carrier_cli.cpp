#include "drone_carrier.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>

namespace dc = drone_carrier;
namespace fs = std::filesystem;

namespace {

dc::Scenario resolve_scenario(const std::string& ref) {
  if (fs::exists(ref)) return dc::load_scenario_file(ref);
  return dc::builtin_scenario(ref);
}

// "a..b" inclusive, or a single seed.
std::pair<std::uint64_t, std::size_t> parse_seed_range(const std::string& text) {
  const auto dots = text.find("..");
  try {
    if (dots == std::string::npos) return {std::stoull(text), 1};
    const std::uint64_t a = std::stoull(text.substr(0, dots)), b = std::stoull(text.substr(dots + 2));
    if (b < a) throw dc::InvalidArgument("empty seed range '" + text + "'");
    return {a, static_cast<std::size_t>(b - a + 1)};
  } catch (const std::logic_error&) {
    throw dc::InvalidArgument("bad seed range '" + text + "', expected a..b");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"USV drone-carrier mission simulator"};
  app.require_subcommand(1);

  std::string scenario = "mbzirc-field", out_dir = "out", seeds = "1..10", plot_dir;
  std::uint64_t seed = 42;
  double max_sim_s = -1.0;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  bool plots = false;

  auto* run = app.add_subcommand("run", "Run one scenario and write logs");
  run->add_option("--scenario", scenario, "Scenario YAML path or builtin name")->capture_default_str();
  run->add_option("--seed", seed, "Master seed")->capture_default_str();
  run->add_option("--out", out_dir, "Output directory")->capture_default_str();
  run->add_option("--max-sim-s", max_sim_s, "Simulated-time cap in seconds (default: scenario value)");
  run->add_flag("--plot", plots, "Also write PNG plots");

  auto* batch = app.add_subcommand("batch", "Monte Carlo over a seed range");
  batch->add_option("--scenario", scenario, "Scenario YAML path or builtin name")->capture_default_str();
  batch->add_option("--seeds", seeds, "Seed range a..b (inclusive)")->capture_default_str();
  batch->add_option("--jobs", jobs, "Worker threads")->capture_default_str();
  batch->add_option("--max-sim-s", max_sim_s, "Simulated-time cap in seconds");
  batch->add_option("--out", out_dir, "Directory for batch.json");

  auto* plot = app.add_subcommand("plot", "Render PNG plots from a run directory");
  plot->add_option("--dir", plot_dir, "Run output directory")->required();

  std::string dump_dir;
  auto* list = app.add_subcommand("scenarios", "List builtin scenarios");
  list->add_option("--write", dump_dir, "Write each builtin as YAML into this directory");

  std::vector<int> criteria;
  auto* accept = app.add_subcommand("accept", "Run the acceptance suite");
  accept->add_option("criteria", criteria, "Criterion numbers to run (default: all)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      dc::SimConfig cfg;
      cfg.max_sim_s = max_sim_s;
      auto report = dc::run_scenario(resolve_scenario(scenario), seed, cfg);
      dc::write_run_outputs(report, out_dir);
      if (plots) dc::emit_plots(out_dir);
      std::cout << report.summary().dump(2) << '\n';
      return report.success() ? 0 : 1;
    }
    if (*batch) {
      const auto [first, count] = parse_seed_range(seeds);
      dc::SimConfig cfg;
      cfg.max_sim_s = max_sim_s;
      const auto sc = resolve_scenario(scenario);
      const auto reports = dc::run_batch(sc, first, count, jobs, cfg);
      nlohmann::ordered_json j;
      j["scenario"] = sc.name;
      j["first_seed"] = first;
      j["aggregate"] = dc::summarize(reports).to_json();
      j["runs"] = nlohmann::ordered_json::array();
      for (const auto& r : reports) j["runs"].push_back(r.summary());
      if (batch->count("--out")) {
        fs::create_directories(out_dir);
        std::ofstream(fs::path(out_dir) / "batch.json") << j.dump(2) << '\n';
      }
      std::cout << j["aggregate"].dump(2) << '\n';
      return 0;
    }
    if (*plot) {
      for (const auto& p : dc::emit_plots(plot_dir)) std::cout << p << '\n';
      return 0;
    }
    if (*list) {
      for (const auto& s : dc::builtin_scenarios()) {
        std::cout << s.name << '\n';
        if (!dump_dir.empty()) {
          fs::create_directories(dump_dir);
          std::ofstream(fs::path(dump_dir) / (s.name + ".yaml")) << dc::serialize(s);
        }
      }
      return 0;
    }
    if (*accept) {
      const fs::path self = fs::canonical("/proc/self/exe");
      const fs::path suite = self.parent_path() / "acceptance_suite";
      if (!fs::exists(suite)) throw dc::Error("acceptance_suite not found next to " + self.string());
      std::string cmd = suite.string();
      for (int c : criteria) cmd += " " + std::to_string(c);
      return std::system(cmd.c_str()) == 0 ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
