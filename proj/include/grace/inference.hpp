// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "grace/model.hpp"
#include "grace/tokenizer.hpp"

namespace grace {

enum class TaskKind { TargetBehavior, BehaviorSpecific, BehaviorItem };

std::string_view task_name(TaskKind k);
std::optional<TaskKind> parse_task(std::string_view s);

/// Stage-1 constraint for decoding.
struct Task {
  TaskKind kind = TaskKind::BehaviorItem;
  std::vector<Behavior> allowed;  // one entry for TargetBehavior, non-empty set for BehaviorSpecific

  static Task target_behavior(Behavior b) { return {TaskKind::TargetBehavior, {b}}; }
  static Task behavior_specific(std::vector<Behavior> set);
  static Task behavior_item() { return {TaskKind::BehaviorItem, {}}; }

  bool permits(Behavior b) const;
};

struct RankedPrediction {
  Behavior behavior = Behavior::Click;
  std::size_t item = 0;  // catalog index
  double score = 0.0;    // log P(b, v | s)
};

struct BeamResult {
  std::vector<RankedPrediction> predictions;
  std::string diagnostic;  // set when every beam was dropped
};

/// Trie-constrained beam search over [behavior, CoT x3, semantic x3]. At each
/// step the n_beam best cumulative log-probs among legal continuations are
/// kept, jointly across behaviors.
BeamResult beam_search(const Model& model, const DecoderMemory& memory, const Tokenization& tok,
                       const TokenTrie& trie, const Task& task, std::size_t n_beam);

/// Teacher-forced log P(b, v | s) along the item's token path.
double score_pair(const Model& model, const DecoderMemory& memory, const Tokenization& tok, const TokenTrie& trie,
                  Behavior behavior, std::size_t item);

/// Per-step log-probs of the item path (index 0 is log P(b | s)).
std::array<double, kTokensPerInteraction> path_logprobs(const Model& model, const DecoderMemory& memory,
                                                        const Tokenization& tok, Behavior behavior,
                                                        std::size_t item);

}  // namespace grace
