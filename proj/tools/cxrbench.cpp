#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "cxr/app/commands.hpp"

using namespace cxr;

namespace {

void add_options(CLI::App& app, app::Settings& s) {
  app.set_config("--config", "", "TOML key = value file; keys are the flag names");
  app.add_option("--out", s.out, "output directory")->capture_default_str();
  app.add_option("--seed", s.seed, "seed for splits, initialisation and shuffling")->capture_default_str();
  app.add_option("--covid_repo,--covid-repo", s.covid_repo, "COVID-19 image repository root");
  app.add_option("--chestxray8,--chestxray-8", s.chestxray8, "ChestX-ray8 root");
  app.add_option("--kaggle_pneumonia,--kaggle-pneumonia", s.kaggle_pneumonia, "Kaggle pneumonia root");
  app.add_option("--datasets", s.datasets, "dataset1 dataset2 dataset3")->capture_default_str();
  app.add_option("--backbones", s.backbones, "backbone names")->capture_default_str();
  app.add_option("--folds", s.folds, "folds to run, 1..5")->capture_default_str();
  app.add_option("--epochs", s.epochs)->capture_default_str();
  app.add_option("--batch_size,--batch-size", s.batch_size)->capture_default_str();
  app.add_option("--learning_rate,--learning-rate", s.learning_rate)->capture_default_str();
  app.add_option("--pretrained", s.pretrained, "load exported backbone weights")->capture_default_str();
  app.add_option("--weights_dir,--weights-dir", s.weights_dir, "exported backbone weights (default $CXR_WEIGHTS_DIR)");
  app.add_option("--device", s.device, "compute device (default $CXR_DEVICE, else cpu)");
  app.add_option("--jobs", s.jobs, "parallel ingest workers and concurrent runs")->capture_default_str();
  app.add_option("--negative_limit,--negative-limit", s.negative_limit, "cap on negatives per dataset, 0 = all")
      ->capture_default_str();
  app.add_option("--cache_mb,--cache-mb", s.cache_mb, "decoded image cache size")->capture_default_str();
  app.add_option("--fixtures", s.fixtures, "reference metric tables")->capture_default_str();
  app.add_option("--synthetic_per_class,--synthetic-per-class", s.synthetic_per_class)->capture_default_str();
  app.add_option("--synthetic_side,--synthetic-side", s.synthetic_side)->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Transfer-learning benchmark for binary chest X-ray classification"};
  cli.require_subcommand(1, 1);
  app::Settings settings;
  add_options(cli, settings);

  const std::pair<const char*, const char*> commands[] = {
      {"ingest", "scan source directories into a manifest and provenance report"},
      {"build-datasets", "derive the three binary datasets from the manifest"},
      {"split", "assign stratified five-fold splits"},
      {"run", "train and evaluate every (backbone, dataset, fold) and write metric tables"},
      {"report", "plots, curve data and the literature comparison from run records"},
      {"validate", "recompute the bundled reference metric tables"},
      {"synth", "write synthetic source directories for offline runs"},
  };
  for (const auto& [name, help] : commands) cli.add_subcommand(name, help)->fallthrough();

  try {
    cli.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    cli.exit(e);
    return static_cast<int>(ExitCode::usage);
  }

  const std::string command = cli.get_subcommands().front()->get_name();
  const auto log = app::stderr_log();
  try {
    const auto s = app::resolve(settings);
    if (command == "ingest") return app::cmd_ingest(s, log);
    if (command == "build-datasets") return app::cmd_build_datasets(s, log);
    if (command == "split") return app::cmd_split(s, log);
    if (command == "run") return app::cmd_run(s, log);
    if (command == "report") return app::cmd_report(s, log);
    if (command == "validate") return app::cmd_validate(s, std::cout);
    if (command == "synth") return app::cmd_synth(s, log);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::discrepancy);
  }
  return static_cast<int>(ExitCode::usage);
}
