// langroute command-line tool: calibrate, train, compare, report and
// world validation on top of the header-only library.

#include <cstdio>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "langroute/experiment.hpp"

namespace {

using namespace langroute;

int run_calibrate(const CalibrateOptions& opt) {
  const auto stats = calibrate_to_directory(opt);
  std::cout << "calibrated " << stats.pairs.size() << " language pairs, mu_ref=" << stats.reference_mean << " -> "
            << opt.output_dir << "\n";
  return 0;
}

int run_train(const std::string& config_path, const std::map<std::string, std::string>& overrides,
              std::size_t workers) {
  nlohmann::json j = nlohmann::json::object();
  if (!config_path.empty()) j = read_json_file(config_path);
  for (const auto& [k, v] : overrides) apply_override(j, k, v);
  const auto config = run_config_from_json(j);
  for (const auto& name : stale_inputs(fs::path(config.output_dir) / "manifest.json"))
    std::cerr << "warning: input '" << name << "' changed since the previous run in " << config.output_dir << "\n";
  const auto result = train_to_directory(config, workers);
  std::cout << "mode=" << to_string(config.train.mode) << " steps=" << config.train.total_steps
            << " rollouts=" << result.totals.rollouts << " mean_gated_reward=" << result.totals.mean_gated()
            << " -> " << config.output_dir << "\n";
  return 0;
}

int run_compare_cmd(const std::string& config_path, std::size_t workers) {
  const auto cfg = compare_config_from_json(read_json_file(config_path));
  const auto rows = run_compare(cfg, workers);
  const auto table = compare_table_csv(rows);
  const fs::path out = cfg.output_dir;
  write_file(out / "comparison.csv", table);
  write_file(out / "comparison.json", compare_json(rows, cfg).dump(2) + "\n");
  std::cout << table;
  for (const auto& r : rows) {
    if (r.status == "failed") {
      std::cerr << "variant '" << r.name << "' failed: " << r.error << " (partial results in " << out.string()
                << ")\n";
      return 1;
    }
  }
  return 0;
}

int run_world_validate(const std::string& path) {
  const auto world = load_world(path);
  std::cout << "world ok: " << world.languages.size() << " languages, " << world.topics.size() << " topics, "
            << world.regions.size() << " regions\n";
  std::cout << "topic,region,best_language,expected_gated_reward\n";
  for (const auto& b : analytic_best_languages(world))
    std::cout << b.topic.value << ',' << region_label(b.region) << ',' << b.language.value << ','
              << b.expected_gated << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive language routing with calibrated, consistency-gated rewards"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(langroute::kVersion));

  CalibrateOptions cal;
  auto* calibrate = app.add_subcommand("calibrate", "estimate per-language-pair calibration statistics");
  calibrate->add_option("world", cal.world, "world JSON file")->required();
  calibrate->add_option("-o,--output-dir", cal.output_dir, "output directory")->capture_default_str();
  calibrate->add_option("--n-equiv", cal.counts.equivalent, "equivalent pairs per language pair")->capture_default_str();
  calibrate->add_option("--n-mismatch", cal.counts.mismatched_per_reference, "mismatched samples per reference")
      ->capture_default_str();
  calibrate->add_option("--n-hard", cal.counts.hard_per_reference, "hard contrastive samples per reference")
      ->capture_default_str();
  calibrate->add_option("--lambda", cal.strength, "mean-calibration strength")->capture_default_str();
  calibrate->add_flag("--exclude-same-language{false}", cal.same_language_in_reference,
                      "leave same-language pairs out of the reference mean");
  calibrate->add_option("--seed", cal.seed, "random seed")->capture_default_str();

  std::string train_config;
  std::size_t workers = 1;
  std::map<std::string, std::string> overrides;
  auto* train = app.add_subcommand("train", "run a routed training experiment");
  train->add_option("config", train_config, "run config JSON file");
  train->add_option("--workers", workers, "scoring threads (does not affect outputs)")->capture_default_str();
  std::map<std::string, std::string> flag_values;
  for (const auto& key : langroute::run_config_keys()) train->add_option("--" + key, flag_values[key], "config key " + key);

  std::string compare_config;
  auto* compare = app.add_subcommand("compare", "run routing variants on shared seeds");
  compare->add_option("config", compare_config, "compare config JSON file")->required();
  compare->add_option("--workers", workers, "scoring threads")->capture_default_str();

  std::string run_dir;
  auto* report = app.add_subcommand("report", "emit router probability and advantage CSVs for a run");
  report->add_option("run_dir", run_dir, "run directory")->required();

  std::string world_path;
  auto* world = app.add_subcommand("world", "synthetic world utilities");
  world->require_subcommand(1);
  auto* validate = world->add_subcommand("validate", "check a world file and print analytic best languages");
  validate->add_option("world", world_path, "world JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*calibrate) return run_calibrate(cal);
    if (*train) {
      for (const auto& key : langroute::run_config_keys())
        if (train->count("--" + key)) overrides[key] = flag_values[key];
      return run_train(train_config, overrides, workers);
    }
    if (*compare) return run_compare_cmd(compare_config, workers);
    if (*report) {
      langroute::report_directory(run_dir);
      std::cout << "wrote router_probs.csv and advantage_matrix.csv in " << run_dir << "\n";
      return 0;
    }
    if (*validate) return run_world_validate(world_path);
  } catch (const langroute::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
