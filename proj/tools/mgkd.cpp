#include <CLI11.hpp>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <iostream>

#include "mgkd/cli/commands.hpp"

namespace {

using mgkd::cli::Invocation;

void add_common(CLI::App* cmd, Invocation& inv) {
  cmd->add_option("--config", inv.config, "Config file with [dataset] [teacher] [student] [sweep] sections");
  cmd->add_option("--set", inv.overrides, "Override one config value, as section.key=value")->take_all();
  cmd->add_option("--out", inv.out, "Output directory (default $MGKD_OUT_DIR or ./mgkd_out)");
  cmd->add_option("--dataset", inv.dataset, "Read rows from this delimited file instead of generating them");
}

void add_seed(CLI::App* cmd, Invocation& inv) { cmd->add_option("--seed", inv.seed, "Training seed"); }

void add_seeds(CLI::App* cmd, Invocation& inv) {
  cmd->add_option("--seeds", inv.seeds, "Comma-separated training seeds (default 0,1,2,3,4)")->delimiter(',');
  cmd->add_option("--seed", inv.seed, "Single training seed");
  cmd->add_option("--jobs", inv.jobs, "Parallel training jobs")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Keep freed training buffers in the heap instead of unmapping them every epoch.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif

  CLI::App app{"Two-phase knowledge distillation for pre-service default prediction"};
  app.require_subcommand(1);
  Invocation inv;

  auto* generate = app.add_subcommand("generate", "Write a synthetic two-phase dataset");
  add_common(generate, inv);

  auto* train = app.add_subcommand("train", "Train the teacher or one student mode");
  add_common(train, inv);
  add_seed(train, inv);
  train->add_option("--mode", inv.mode,
                    "teacher | full | no_coarse | no_fine | no_self | pretrain_only | baseline_pre | oracle")
      ->required();
  train->add_option("--teacher", inv.teacher, "Teacher weights (default <out>/teacher_seed<seed>.mgkd)");

  auto* eval = app.add_subcommand("eval", "Evaluate a stored model on one split");
  add_common(eval, inv);
  add_seed(eval, inv);
  eval->add_option("--model", inv.model, "Model file")->required();
  eval->add_option("--split", inv.split, "train | valid | test")->capture_default_str();

  auto* ablate = app.add_subcommand("ablate", "Run the six-mode ablation over seeds");
  add_common(ablate, inv);
  add_seeds(ablate, inv);

  auto* sweep = app.add_subcommand("sweep", "Sweep one distillation weight over a grid");
  add_common(sweep, inv);
  add_seeds(sweep, inv);
  sweep->add_option("--param", inv.param, "alpha | beta | lambda | tau (default from [sweep])");
  sweep->add_option("--grid", inv.grid, "Comma-separated grid values (default from [sweep])")->delimiter(',');

  auto* replay = app.add_subcommand("replay", "Re-run a command from its manifest and compare metrics");
  replay->add_option("--manifest", inv.manifest, "Manifest written by an earlier command")->required();
  replay->add_option("--out", inv.out, "Output directory for the re-run (default <manifest dir>/replay)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return mgkd::cli::kExitConfig;
  }

  inv.command = app.get_subcommands().front()->get_name();
  return mgkd::cli::run(inv, std::cout, std::cerr);
}
