// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "grace/config.hpp"

namespace grace {

/// Artifacts shared by the train/eval/sweep/heatmap commands.
struct Workspace {
  Catalog catalog;
  std::vector<UserSequence> sequences;
  Tokenization tok;
  TokenTrie trie;
  Split split;
};

/// Reads catalog, interactions and the tokenizer artifacts written by cmd_tokenize.
Workspace load_workspace(const RunConfig& cfg);

/// Each command writes fixed filenames under cfg.paths.out and returns a
/// human-readable summary. `log` receives progress lines when non-null.
std::string cmd_gen(const RunConfig& cfg);
std::string cmd_tokenize(const RunConfig& cfg);
std::string cmd_train(const RunConfig& cfg, std::ostream* log = nullptr);
std::string cmd_eval(const RunConfig& cfg, std::ostream* log = nullptr);
/// axis: "w", "top_n" or "beam".
std::string cmd_sweep(const RunConfig& cfg, const std::string& axis, std::ostream* log = nullptr);
std::string cmd_cost(const RunConfig& cfg);
std::string cmd_heatmap(const RunConfig& cfg);

/// Trains a fresh model on the workspace's training examples.
Model train_model(const RunConfig& cfg, const Workspace& ws, TrainResult* result = nullptr,
                  std::ostream* log = nullptr);

/// Evaluates the first cfg.eval_max_users users (all when 0).
MetricReport evaluate_model(const RunConfig& cfg, const Workspace& ws, const Model& model,
                            std::vector<nlohmann::json>* predictions = nullptr);

}  // namespace grace
