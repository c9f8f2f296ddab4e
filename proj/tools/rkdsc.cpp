// rkdsc command line: search -> distill -> train -> eval -> ablate, driven
// by a JSON experiment config. Exit 0 on success, 1 on validation errors,
// 2 on runtime failures.

#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <sstream>

#include "rkdsc/runner.hpp"

namespace {

std::vector<double> parse_snr_grid(const std::string& spec) {
  // "lo:hi:step"
  double lo = 0, hi = 0, step = 0;
  char c1 = 0, c2 = 0;
  std::istringstream is(spec);
  if (!(is >> lo >> c1 >> hi >> c2 >> step) || c1 != ':' || c2 != ':' || step <= 0 || hi < lo)
    throw std::invalid_argument("--snr expects lo:hi:step with step > 0 and hi >= lo");
  std::vector<double> out;
  for (double s = lo; s <= hi + 1e-9; s += step) out.push_back(s);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RKD-SC: architecture search, robust distillation, and SNR-sweep evaluation"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> out_dir_override;
  std::optional<std::string> snr_override;
  std::optional<double> ratio_override;

  std::vector<std::string> commands = {"search", "distill", "train", "eval", "ablate", "all"};
  for (const auto& name : commands) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "experiment config (JSON)")->required();
    sub->add_option("--seed", seed_override, "override config seed");
    sub->add_option("--out-dir", out_dir_override, "override output directory");
    sub->add_option("--snr", snr_override, "override eval SNR grid, lo:hi:step (dB)");
    sub->add_option("--ratio", ratio_override, "override ablation to a single compression ratio");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    rkdsc::ExperimentConfig cfg = rkdsc::parse_config(config_path);
    if (seed_override || out_dir_override) {
      // re-validate and re-digest with the overrides applied
      nlohmann::json j = rkdsc::canonical_json(cfg);
      if (seed_override) j["seed"] = *seed_override;
      if (out_dir_override) j["out_dir"] = *out_dir_override;
      cfg = rkdsc::config_from_json(j);
    }
    if (snr_override) cfg.eval.snrs = parse_snr_grid(*snr_override);
    if (ratio_override) cfg.eval.ratios = {*ratio_override};

    rkdsc::Runner runner(std::move(cfg));
    try {
      runner.run(command);
    } catch (const std::invalid_argument& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    }
    std::cout << "done: " << runner.paths().dir << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
