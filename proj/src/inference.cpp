// SPDX-License-Identifier: Apache-2.0
#include "grace/inference.hpp"

#include <algorithm>

namespace grace {

std::string_view task_name(TaskKind k) {
  switch (k) {
    case TaskKind::TargetBehavior: return "target_behavior";
    case TaskKind::BehaviorSpecific: return "behavior_specific";
    case TaskKind::BehaviorItem: return "behavior_item";
  }
  return "unknown";
}

std::optional<TaskKind> parse_task(std::string_view s) {
  if (s == "target_behavior") return TaskKind::TargetBehavior;
  if (s == "behavior_specific") return TaskKind::BehaviorSpecific;
  if (s == "behavior_item") return TaskKind::BehaviorItem;
  return std::nullopt;
}

Task Task::behavior_specific(std::vector<Behavior> set) {
  if (set.empty()) throw ValidationError("behavior-specific task needs a non-empty behavior set");
  return {TaskKind::BehaviorSpecific, std::move(set)};
}

bool Task::permits(Behavior b) const {
  if (kind == TaskKind::BehaviorItem) return true;
  return std::find(allowed.begin(), allowed.end(), b) != allowed.end();
}

namespace {

struct Beam {
  std::vector<TokenId> prefix;
  double logp = 0.0;
  TokenTrie::NodeId node = 0;
};

}  // namespace

BeamResult beam_search(const Model& model, const DecoderMemory& memory, const Tokenization& tok,
                       const TokenTrie& trie, const Task& task, std::size_t n_beam) {
  if (n_beam == 0) throw ValidationError("beam_search: n_beam must be at least 1");
  if (task.kind == TaskKind::TargetBehavior && task.allowed.size() != 1)
    throw ValidationError("beam_search: target-behavior task needs exactly one behavior");
  if (task.kind == TaskKind::BehaviorSpecific && task.allowed.empty())
    throw ValidationError("beam_search: behavior-specific task needs a non-empty set");

  std::vector<Beam> beams{{{tok.vocab.bos()}, 0.0, trie.root()}};
  BeamResult result;
  for (std::size_t step = 0; step < kTokensPerInteraction; ++step) {
    std::vector<Beam> candidates;
    for (const Beam& beam : beams) {
      const auto lp = next_token_logprobs(model, memory, beam.prefix);
      for (const auto& edge : trie.children(beam.node)) {
        if (step == 0) {
          const auto [type, value] = tok.vocab.decode(edge.token);
          if (type != TokenType::Behavior || !task.permits(kAllBehaviors.at(value))) continue;
        }
        Beam next{beam.prefix, beam.logp + lp[edge.token], edge.child};
        next.prefix.push_back(edge.token);
        candidates.push_back(std::move(next));
      }
    }
    if (candidates.empty()) {
      result.diagnostic = "no legal continuation at decoding step " + std::to_string(step);
      return result;
    }
    const std::size_t keep = std::min(n_beam, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      [](const Beam& a, const Beam& b) {
                        if (a.logp != b.logp) return a.logp > b.logp;
                        return a.prefix < b.prefix;
                      });
    candidates.resize(keep);
    beams = std::move(candidates);
  }
  for (const Beam& beam : beams) {
    const auto item = trie.leaf_item(beam.node);
    if (!item) continue;
    const auto [type, value] = tok.vocab.decode(beam.prefix[1]);
    result.predictions.push_back({kAllBehaviors.at(value), *item, beam.logp});
  }
  return result;
}

std::array<double, kTokensPerInteraction> path_logprobs(const Model& model, const DecoderMemory& memory,
                                                        const Tokenization& tok, Behavior behavior,
                                                        std::size_t item) {
  const auto path = tok.path(behavior, item);
  std::vector<TokenId> prefix{tok.vocab.bos()};
  std::array<double, kTokensPerInteraction> out{};
  for (std::size_t i = 0; i < path.size(); ++i) {
    out[i] = next_token_logprobs(model, memory, prefix)[path[i]];
    prefix.push_back(path[i]);
  }
  return out;
}

double score_pair(const Model& model, const DecoderMemory& memory, const Tokenization& tok, const TokenTrie& trie,
                  Behavior behavior, std::size_t item) {
  if (item >= tok.item_tokens.size()) throw ValidationError("score_pair: unknown item");
  if (!trie.walk(tok.path(behavior, item))) throw ValidationError("score_pair: item path is not in the trie");
  double score = 0.0;
  for (double lp : path_logprobs(model, memory, tok, behavior, item)) score += lp;
  return score;
}

}  // namespace grace
