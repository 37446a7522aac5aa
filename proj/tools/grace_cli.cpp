// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>

#include <iostream>

#include "grace/pipeline.hpp"
#include "grace/simd.hpp"

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GRACE multi-behavior generative recommender"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  app.add_option("--config", config_path, "run config (JSON)");
  app.add_option("--seed", seed, "seed override");
  app.add_option("--out", out_dir, "output directory");

  std::vector<CLI::App*> subs;
  subs.push_back(app.add_subcommand("gen", "generate a synthetic catalog and interactions"));
  subs.push_back(app.add_subcommand("tokenize", "fit codebooks and write vocab, semantic ids, tokenized data"));
  subs.push_back(app.add_subcommand("train", "train a model and write a checkpoint"));
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  subs.push_back(eval);
  std::string task;
  eval->add_option("--task", task, "target_behavior | behavior_specific | behavior_item");
  auto* sweep = app.add_subcommand("sweep", "evaluate across one JSA or decoding axis");
  subs.push_back(sweep);
  std::string axis;
  sweep->add_option("--axis", axis, "w | top_n | beam")->required();
  subs.push_back(app.add_subcommand("cost", "attention cost table"));
  subs.push_back(app.add_subcommand("heatmap", "product-type x level-1 co-occurrence CSV"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitValidation;
  }

  try {
    grace::RunConfig cfg = config_path.empty() ? grace::RunConfig{} : grace::load_run_config(config_path);
    if (seed) cfg.seed = *seed;
    cfg.propagate_seed();
    if (!out_dir.empty()) cfg.paths.out = out_dir;
    if (!task.empty()) {
      auto kind = grace::parse_task(task);
      if (!kind) throw grace::ValidationError("unknown task '" + task + "'");
      cfg.eval.task = *kind;
    }
    cfg.validate();
    std::clog << "simd: " << grace::simd::isa_name(grace::simd::active_isa()) << "\n";

    const std::string cmd = app.get_subcommands().front()->get_name();
    std::string summary;
    if (cmd == "gen") summary = grace::cmd_gen(cfg);
    else if (cmd == "tokenize") summary = grace::cmd_tokenize(cfg);
    else if (cmd == "train") summary = grace::cmd_train(cfg, &std::clog);
    else if (cmd == "eval") summary = grace::cmd_eval(cfg, &std::clog);
    else if (cmd == "sweep") summary = grace::cmd_sweep(cfg, axis, &std::clog);
    else if (cmd == "cost") summary = grace::cmd_cost(cfg);
    else if (cmd == "heatmap") summary = grace::cmd_heatmap(cfg);
    std::cout << summary;
    return 0;
  } catch (const grace::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
