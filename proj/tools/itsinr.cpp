// itsinr command-line front end.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "itsinr/experiment.hpp"

namespace {

using itsinr::ConfigError;
using itsinr::ExperimentConfig;

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Experiment flags shared by denoise / ablate-n / compare. Values are kept as
// strings and applied through the same path as config-file keys.
struct ExperimentFlags {
  std::string config_file;
  std::vector<std::pair<std::string, std::string>> flags;  // key, flag name
  std::vector<std::string> values;
  std::vector<std::string> sets;

  void attach(CLI::App& cmd) {
    cmd.add_option("--config", config_file, "key = value config file (applied first)");
    static const std::vector<std::pair<std::string, std::string>> kFlags = {
        {"input", "PGM/PPM clean reference image"},
        {"phantom", "gradient|disk|stripes|composite (when no --input)"},
        {"size", "phantom side length in pixels"},
        {"sigma", "noise standard deviation on the 0-255 scale"},
        {"model", "siren|wire|ffn"},
        {"iters", "training iterations T"},
        {"lr", "Adam learning rate"},
        {"lambda", "regularization weight"},
        {"reg", "none|tv"},
        {"its-n", "ITS substitution period N (0 disables)"},
        {"log-every", "metrics logging period"},
        {"seed", "base seed for noise and model init"},
        {"runs", "seeds per cell (seed .. seed+runs-1)"},
        {"out", "output directory"},
        {"workers", "parallel runs"},
    };
    values.resize(kFlags.size());
    for (std::size_t i = 0; i < kFlags.size(); ++i) {
      flags.emplace_back(kFlags[i].first, "--" + kFlags[i].first);
      cmd.add_option("--" + kFlags[i].first, values[i], kFlags[i].second);
    }
    cmd.add_option("--set", sets, "extra key=value overrides (repeatable, applied last)");
  }

  ExperimentConfig build(const CLI::App& cmd) const {
    ExperimentConfig cfg;
    if (!config_file.empty()) itsinr::load_config_file(cfg, config_file);
    for (std::size_t i = 0; i < flags.size(); ++i) {
      if (cmd.count(flags[i].second) > 0) itsinr::apply_setting(cfg, flags[i].first, values[i]);
    }
    apply_sets(cfg, sets);
    return cfg;
  }

  static void apply_sets(ExperimentConfig& cfg, const std::vector<std::string>& kvs) {
    for (const auto& kv : kvs) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + kv + "'");
      itsinr::apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
  }
};

void print_summary(const itsinr::RunSummary& s) {
  using itsinr::report::format_number;
  std::cout << "last PSNR/SSIM: " << format_number(s.last_psnr) << " / "
            << format_number(s.last_ssim) << "\n"
            << "best PSNR/SSIM (needs ground truth, not actionable): "
            << format_number(s.best_psnr) << " / " << format_number(s.best_ssim) << "\n"
            << "wall seconds: " << format_number(s.wall_seconds) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coordinate-network image denoising with iterative supervision substitution"};
  app.require_subcommand(1);

  ExperimentFlags denoise_flags, ablate_flags, compare_flags;

  auto* denoise = app.add_subcommand("denoise", "train one model and write PNM/CSV artifacts");
  denoise_flags.attach(*denoise);

  auto* ablate = app.add_subcommand("ablate-n", "sweep the ITS period N; CSV + SVG chart");
  ablate_flags.attach(*ablate);
  std::vector<int> n_values{0, 100, 200, 300, 400};
  ablate->add_option("--n-values", n_values, "N values to sweep (0 = vanilla)")->delimiter(',');

  auto* compare = app.add_subcommand("compare", "paired comparison of two variants over cells");
  compare_flags.attach(*compare);
  std::vector<std::string> phantoms{"gradient", "disk", "stripes", "composite"};
  std::vector<std::string> inputs;
  std::vector<double> sigmas{25.0, 50.0};
  std::string config_a, config_b;
  std::vector<std::string> set_a, set_b;
  compare->add_option("--phantoms", phantoms, "phantom kinds per cell")->delimiter(',');
  compare->add_option("--inputs", inputs, "extra PGM/PPM images per cell")->delimiter(',');
  compare->add_option("--sigmas", sigmas, "noise levels per cell")->delimiter(',');
  compare->add_option("--config-a", config_a, "config file for variant A");
  compare->add_option("--config-b", config_b, "config file for variant B");
  compare->add_option("--a", set_a, "key=value override for variant A (default its_n=0)");
  compare->add_option("--b", set_b, "key=value override for variant B");

  auto* theorem = app.add_subcommand("theorem", "Monte Carlo check of the substitution SNR bound");
  double delta = 0.5;
  std::size_t dim = 64, trials = 10000;
  std::uint64_t seed = 0;
  theorem->add_option("--delta", delta, "error ratio ||e|| / ||n||, in (0, 1)");
  theorem->add_option("--dim", dim, "vector dimension");
  theorem->add_option("--trials", trials, "number of random trials");
  theorem->add_option("--seed", seed, "seed");

  auto* metrics = app.add_subcommand("metrics", "PSNR / SSIM / sigma-hat of two PNM files");
  std::string test_path, ref_path;
  metrics->add_option("test", test_path, "image under test")->required();
  metrics->add_option("reference", ref_path, "clean reference")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*denoise) {
      const auto art = itsinr::cmd_denoise(denoise_flags.build(*denoise));
      print_summary(art.outcome.summary);
      std::cout << "wrote " << art.denoised.string() << ", " << art.noisy.string() << ", "
                << art.error_map.string() << ", " << art.metrics_csv.string() << ", "
                << art.summary_csv.string() << "\n";
    } else if (*ablate) {
      const auto res = itsinr::cmd_ablate_n(ablate_flags.build(*ablate), n_values);
      for (const auto& r : res.runs) {
        std::cout << "N=" << r.its_n << " seed=" << r.seed << "  ";
        print_summary(r.summary);
      }
      std::cout << "wrote " << res.csv.string() << ", " << res.svg.string() << "\n";
    } else if (*compare) {
      const ExperimentConfig base = compare_flags.build(*compare);
      ExperimentConfig a = base, b = base;
      a.train.its_period = 0;
      if (!config_a.empty()) itsinr::load_config_file(a, config_a);
      if (!config_b.empty()) itsinr::load_config_file(b, config_b);
      ExperimentFlags::apply_sets(a, set_a);
      ExperimentFlags::apply_sets(b, set_b);
      const auto cells = itsinr::make_cells(phantoms, inputs, sigmas, base.size);
      const auto rep = itsinr::cmd_compare(a, b, cells, base.output_dir, base.workers);
      std::ifstream text(rep.text);
      std::cout << text.rdbuf();
      std::cout << "wrote " << rep.csv.string() << ", " << rep.text.string() << "\n";
    } else if (*theorem) {
      const auto res = itsinr::cmd_theorem(delta, dim, trials, seed);
      std::cout << res.text;
      return res.ok ? 0 : kExitRuntime;
    } else if (*metrics) {
      std::cout << itsinr::cmd_metrics(test_path, ref_path).text;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
