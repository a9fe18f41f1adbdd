// vk: command-line front end for plate relaxation, slopes and thin-film ladders.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "vk/errors.hpp"
#include "vk/harness.hpp"

namespace fs = std::filesystem;

namespace {

int worker_cap() {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("VK_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return static_cast<int>(std::min<unsigned>(static_cast<unsigned>(n), hw));
  }
  return static_cast<int>(hw);
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
    } catch (const std::exception&) {
      throw vk::ConfigError(fmt::format("--h-list: cannot parse '{}'", item));
    }
  }
  return out;
}

int report(const vk::RunReport& r) {
  std::cout << r.summary_json << "\n";
  if (!r.ok) {
    std::cerr << (r.message.empty() ? fmt::format("{} run reported failure", r.kind) : r.message)
              << "\n";
    return 1;
  }
  return 0;
}

int run_configs(const std::vector<std::string>& paths, const std::string& out_root) {
  std::vector<vk::ExperimentConfig> configs;
  std::vector<fs::path> outs;
  for (const auto& p : paths) {
    configs.push_back(vk::load_config(p));
    fs::path out = out_root.empty() ? fs::path(configs.back().output.dir) : fs::path(out_root);
    if (paths.size() > 1) out /= fs::path(p).stem();
    outs.push_back(out);
  }
  if (configs.size() == 1) return report(vk::run_experiment(configs[0], outs[0]));

  std::vector<vk::RunReport> reports(configs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < configs.size(); k = next++) {
      reports[k] = vk::run_experiment(configs[k], outs[k]);
    }
  };
  const int n = std::min<int>(worker_cap(), static_cast<int>(configs.size()));
  std::vector<std::thread> pool;
  for (int t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  int status = 0;
  for (std::size_t k = 0; k < reports.size(); ++k) {
    fmt::print("{}: {} -> {}\n", paths[k], reports[k].ok ? "ok" : "FAILED",
               reports[k].out_dir.string());
    if (!reports[k].ok) {
      std::cerr << reports[k].message << "\n";
      status = 1;
    }
  }
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Viscoelastic von Karman plates: minimizing movements, slopes, thin-film ladders"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string out_root;
  app.add_option("--out", out_root, "Output root directory (default: output.dir of the config)");

  auto* run = app.add_subcommand("run", "Run one or more experiment configs");
  std::vector<std::string> run_paths;
  run->add_option("config", run_paths, "Config files; several run in a pool capped by VK_THREADS")
      ->required()
      ->check(CLI::ExistingFile);

  auto* echo = app.add_subcommand("echo", "Print the normalized form of a config");
  std::string echo_path;
  echo->add_option("config", echo_path, "Config file")->required()->check(CLI::ExistingFile);

  auto* gamma = app.add_subcommand("gamma", "Thin-film energy and dissipation ladder");
  std::string h_list, generator = "pure_bend(1)", partner = "zero", material_path;
  double taper = 0.0;
  gamma->add_option("--h-list", h_list, "Comma-separated decreasing thicknesses");
  gamma->add_option("--generator", generator, "Preset such as pure_bend(1), or csv:<state.csv>")
      ->capture_default_str();
  gamma->add_option("--partner", partner, "Partner generator for the dissipation ladder; \"\" disables")
      ->capture_default_str();
  gamma->add_option("--material", material_path, "Config file whose material and quad sections are used")
      ->check(CLI::ExistingFile);
  gamma->add_option("--taper", taper, "Boundary taper width of the director term")->capture_default_str();

  auto* slope = app.add_subcommand("slope", "Local slope of a state snapshot");
  std::string state_path, slope_config;
  slope->add_option("state", state_path, "State snapshot CSV")->required()->check(CLI::ExistingFile);
  slope->add_option("--config", slope_config, "Config with material and slope sections")
      ->check(CLI::ExistingFile);

  auto* toy = app.add_subcommand("toy", "Scalar gradient flow of x^2/2 against exp(-t)");
  double toy_tau = 1e-3, toy_t = 1.0, toy_x0 = 1.0;
  toy->add_option("--tau", toy_tau, "Time step")->capture_default_str();
  toy->add_option("--t-end", toy_t, "Final time")->capture_default_str();
  toy->add_option("--x0", toy_x0, "Initial value")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return run_configs(run_paths, out_root);
    if (*echo) {
      std::cout << vk::echo_config(vk::load_config(echo_path));
      return 0;
    }
    vk::ExperimentConfig cfg;
    if (*gamma) {
      if (!material_path.empty()) cfg = vk::load_config(material_path);
      cfg.kind = "gamma";
      if (!h_list.empty()) cfg.gamma.h_list = parse_list(h_list);
      cfg.gamma.generator = generator;
      cfg.gamma.partner = partner;
      cfg.gamma.taper_width = taper;
      const vk::RunReport r = vk::run_experiment(cfg, out_root.empty() ? "out" : out_root);
      if (r.ok) {
        std::ifstream csv(r.out_dir / "gamma.csv");
        std::cout << csv.rdbuf();
      }
      return report(r);
    }
    if (*slope) {
      if (!slope_config.empty()) cfg = vk::load_config(slope_config);
      cfg.kind = "slope";
      cfg.slope.state = fs::absolute(state_path).string();
      return report(vk::run_experiment(cfg, out_root.empty() ? "out" : out_root));
    }
    if (*toy) {
      cfg.kind = "toy";
      cfg.toy.tau = toy_tau;
      cfg.toy.t_end = toy_t;
      cfg.toy.x0 = toy_x0;
      return report(vk::run_experiment(cfg, out_root.empty() ? "out" : out_root));
    }
  } catch (const vk::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const vk::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
