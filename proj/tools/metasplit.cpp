// metasplit <experiment> --config <path> [--seed N] [--out DIR] [--override key=value ...]
//
// Exit status: 0 when every check passes, 2 when a check fails, 1 on error.

#include <CLI11.hpp>

#include <iostream>

#include "metasplit/error.hpp"
#include "metasplit/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Train-validation split meta-learning experiments", "metasplit"};
  app.set_version_flag("--version", std::string(metasplit::kToolVersion));

  std::string experiment;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::vector<std::string> overrides;
  bool quiet = false;

  app.add_option("experiment", experiment, "table2 | oracle_validation | rank_scan | gradcheck | bounds_check")
      ->required();
  app.add_option("--config", config_path, "JSON config file")->required();
  app.add_option("--seed", seed, "Overrides the config seed");
  app.add_option("--out", out_dir, "Output directory (default: config output_dir)");
  app.add_option("--override", overrides, "dotted.key=value, applied before validation")->take_all();
  app.add_flag("-q,--quiet", quiet, "No progress log on stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const auto exp = metasplit::parse_experiment(experiment);
    auto config = metasplit::load_config(config_path, exp, overrides);
    if (seed) config.seed = *seed;
    if (out_dir) config.output_dir = *out_dir;

    const auto report = metasplit::run_experiment(config, quiet ? nullptr : &std::cerr);
    metasplit::write_outputs(report, config.output_dir);

    for (const auto& c : report.checks) {
      std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << metasplit::format_number(c.value)
                << " (" << c.target << ")";
      if (!c.detail.empty()) std::cout << " [" << c.detail << "]";
      std::cout << '\n';
    }
    std::cout << "wrote " << config.output_dir << "/report.json\n";
    return report.all_pass() ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "metasplit: " << e.what() << '\n';
    return 1;
  }
}
