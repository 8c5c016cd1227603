// bnet2_experiments <task> --config <path> [--seed S] [--paper-scale] [--out DIR]
//
// Exit codes: 0 success, 2 invalid input, 3 a training run diverged (results
// are still written).

#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "bnet2/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Butterfly-network experiments"};
  std::string task, config_path, out_dir = "results";
  std::optional<std::uint64_t> seed;
  bool paper_scale = false;
  app.add_option("task", task, "one of: approx-ft train-ft transfer energy linear-pde nonlinear-pde denoise deblur bnet-vs-bnet2")
      ->required();
  app.add_option("--config", config_path, "key=value config file")->required();
  app.add_option("--seed", seed, "overrides the config seed");
  app.add_flag("--paper-scale", paper_scale, "full problem sizes and step counts");
  app.add_option("--out", out_dir, "output directory");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    std::ifstream in(config_path);
    if (!in) throw bnet2::ValidationError("cannot open config " + config_path);
    auto cfg = bnet2::load_config(task, paper_scale, in);
    if (seed) cfg.seed = *seed;
    std::cerr << "running " << cfg.task << " (" << (cfg.paper_scale ? "paper" : "desk") << " scale, digest "
              << bnet2::config_digest(cfg) << ")\n";
    const auto table = bnet2::run_experiment(cfg);
    bnet2::write_results(table, out_dir);
    std::cout << bnet2::results_csv(table);
    if (table.diverged) {
      std::cerr << "a training run diverged; see trace.csv\n";
      return 3;
    }
    return 0;
  } catch (const bnet2::DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const bnet2::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const bnet2::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
