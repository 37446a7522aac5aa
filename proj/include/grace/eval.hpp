// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "grace/inference.hpp"

namespace grace {

struct SplitExample {
  UserSequence history;  // most recent `truncation` interactions before the target
  Interaction target;
  std::size_t target_item = 0;  // catalog index
};

struct Split {
  std::vector<SplitExample> examples;
  std::size_t excluded = 0;  // users with fewer than two interactions
};

/// Final interaction is the target; history keeps the most recent `truncation`
/// interactions before it. nullopt when the sequence has fewer than two.
std::optional<std::pair<UserSequence, Interaction>> leave_one_out(const UserSequence& seq,
                                                                  std::size_t truncation = 50);

/// Behavior merging followed by leave-one-out over every user.
Split split_dataset(std::span<const UserSequence> sequences, const Catalog& catalog, std::size_t truncation = 50);

/// Training examples from each user's history: every interaction after the
/// first is predicted from the (truncated) interactions before it.
std::vector<TrainingExample> training_examples(const Split& split, const Catalog& catalog, const Tokenization& tok,
                                               std::size_t truncation = 50);

struct HitNdcg {
  double hr = 0.0;
  double ndcg = 0.0;
};

/// Single-relevant-item form; `rank` is 1-based, nullopt when absent.
HitNdcg hr_ndcg_from_rank(std::optional<std::size_t> rank, std::size_t k);
HitNdcg hr_ndcg_at_k(std::span<const std::size_t> ranked_items, std::size_t target, std::size_t k);

struct MetricSet {
  std::map<std::size_t, double> hr;    // percent
  std::map<std::size_t, double> ndcg;  // percent
  std::size_t n_users = 0;
};

struct MetricReport {
  TaskKind task = TaskKind::TargetBehavior;
  std::vector<std::size_t> ks{5, 10};
  MetricSet overall;
  std::map<Behavior, MetricSet> per_behavior;
  std::size_t skipped = 0;  // users outside a behavior-specific set

  nlohmann::json to_json() const;
};

struct EvalSettings {
  TaskKind task = TaskKind::TargetBehavior;
  std::vector<Behavior> behavior_set{Behavior::Click, Behavior::AddToCart};  // BehaviorSpecific only
  std::vector<std::size_t> ks{5, 10};
  std::size_t n_beam = 10;
};

/// Produces a ranking for one user under a task constraint.
using Ranker = std::function<std::vector<RankedPrediction>(const SplitExample&, const Task&)>;

/// TargetBehavior: the target's own behavior is given and a hit needs the item.
/// BehaviorSpecific: users whose target behavior is in the set; hit needs the item.
/// BehaviorItem: free decoding; a hit needs both behavior and item.
MetricReport evaluate(const Ranker& ranker, std::span<const SplitExample> examples, const EvalSettings& settings);

/// Ranker backed by the model's constrained beam search.
Ranker model_ranker(const Model& model, const Catalog& catalog, const Tokenization& tok, const TokenTrie& trie,
                    std::size_t n_beam);

/// (product type x level-1 code) item counts.
struct Heatmap {
  std::vector<std::string> product_types;
  Matrix counts;
  std::string to_csv() const;
};

Heatmap cooccurrence_heatmap(const Catalog& catalog, const Tokenization& tok);

}  // namespace grace
