// cpelab: cold-posterior experiment runner.
//
// Subcommands:
//   run <config.json>    execute an experiment sweep, write all artifacts
//   validate <config>    check a configuration without running anything
//   grid                 print the default temperature grid
//   report <manifest>    summarize a finished run

#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"

#include "cpelab/experiment.hpp"
#include "cpelab/kernels.hpp"

int main(int argc, char** argv) {
  CLI::App app{"cold posterior effect laboratory"};
  app.require_subcommand(1);

  std::string config_path, manifest_path, out_dir;
  std::size_t workers = 0;
  std::int64_t seed_offset = 0;
  bool quiet = false;

  CLI::App* run = app.add_subcommand("run", "run an experiment from a JSON config");
  run->add_option("config", config_path, "experiment configuration file")->required();
  run->add_option("--workers", workers, "worker threads (default: one per chain up to cores)");
  run->add_option("--out", out_dir, "output directory (overrides config and CPELAB_OUT)");
  run->add_option("--seed-offset", seed_offset, "added to every configured seed");
  run->add_flag("--quiet", quiet, "suppress per-chain progress lines");

  CLI::App* validate = app.add_subcommand("validate", "validate a configuration file");
  validate->add_option("config", config_path, "experiment configuration file")->required();

  CLI::App* grid = app.add_subcommand("grid", "print the default temperature grid");

  CLI::App* report = app.add_subcommand("report", "summarize a run from its manifest");
  report->add_option("manifest", manifest_path, "manifest.json of a finished run")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const auto config = cpelab::experiment::load_config(config_path);
      cpelab::experiment::RunOptions options;
      options.workers = workers;
      options.out_override = out_dir;
      options.seed_offset = seed_offset;
      options.quiet = quiet;
      if (!quiet) {
        std::fprintf(stderr, "[cpelab] kernels: %s\n",
                     std::string(cpelab::kernels::backend_name()).c_str());
      }
      const auto manifest = cpelab::experiment::run_experiment(config, options);
      std::printf("%s", cpelab::experiment::emit_report(manifest).c_str());
      std::printf("\nmanifest: %s/manifest.json\n", manifest.output_dir.c_str());
      return manifest.all_ok() ? 0 : 2;
    }
    if (validate->parsed()) {
      const auto config = cpelab::experiment::load_config(config_path);
      cpelab::experiment::validate_config(config);
      std::printf("ok: %s (checksum %s)\n", config_path.c_str(),
                  cpelab::experiment::config_checksum(config).c_str());
      return 0;
    }
    if (grid->parsed()) {
      for (double t : cpelab::experiment::default_temperature_grid()) {
        std::printf("%.12g\n", t);
      }
      return 0;
    }
    if (report->parsed()) {
      const auto manifest = cpelab::experiment::load_manifest(manifest_path);
      std::printf("%s", cpelab::experiment::emit_report(manifest).c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
