// Command-line driver for the two-phase MCI conversion pipeline.

#include <CLI11.hpp>

#include <iostream>

#include "adprog/commands.hpp"
#include "adprog/error.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Synthetic MCI-to-AD conversion pipeline: synth, train-extractor, extract, train-predictor, "
               "evaluate, ablate"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "run";
  std::size_t jobs = 1;
  bool paper_scale = false;
  bool quiet = false;
  app.add_option("--config", config_path, "JSON config file; flags override it")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Seed for every stochastic stage");
  app.add_option("--out", out_dir, "Run directory for artifacts")->capture_default_str();
  app.add_option("--jobs", jobs, "Folds trained in parallel")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_flag("--paper-scale", paper_scale, "Start from the full-size architecture and schedule");
  app.add_flag("-q,--quiet", quiet, "Suppress progress output");

  CLI::App* synth = app.add_subcommand("synth", "Generate the synthetic cohorts");
  CLI::App* train_extractor = app.add_subcommand("train-extractor", "Train the image feature extractor");
  CLI::App* extract = app.add_subcommand("extract", "Write the per-visit feature cache");
  CLI::App* train_predictor = app.add_subcommand("train-predictor", "Cross-validate the sequence predictor");
  CLI::App* evaluate = app.add_subcommand("evaluate", "Re-evaluate the saved fold checkpoints");
  CLI::App* ablate = app.add_subcommand("ablate", "Run ablation comparisons");
  std::vector<std::string> modes;
  ablate->add_option("--mode", modes, "no_biomarkers, vanilla_lstm, bce_loss or all (repeatable)")
      ->check(CLI::IsMember({"no_biomarkers", "vanilla_lstm", "bce_loss", "all"}));

  CLI11_PARSE(app, argc, argv);

  try {
    adprog::CommandContext ctx;
    if (!config_path.empty()) ctx.config_path = config_path;
    ctx.config = adprog::load_run_config(ctx.config_path, paper_scale);
    if (seed) ctx.config.set_seed(*seed);
    ctx.out_dir = out_dir;
    ctx.jobs = jobs;
    ctx.log = quiet ? nullptr : &std::cerr;

    if (synth->parsed()) {
      adprog::cmd_synth(ctx);
    } else if (train_extractor->parsed()) {
      adprog::cmd_train_extractor(ctx);
    } else if (extract->parsed()) {
      adprog::cmd_extract(ctx);
    } else if (train_predictor->parsed()) {
      adprog::cmd_train_predictor(ctx);
    } else if (evaluate->parsed()) {
      std::cout << adprog::cmd_evaluate(ctx);
    } else if (ablate->parsed()) {
      std::vector<adprog::AblationMode> selected;
      for (const std::string& m : modes) {
        if (m == "all") {
          selected.clear();
          break;
        }
        selected.push_back(adprog::parse_ablation(m));
      }
      adprog::cmd_ablate(ctx, selected);
    }
  } catch (const adprog::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
