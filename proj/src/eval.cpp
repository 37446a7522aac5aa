// SPDX-License-Identifier: Apache-2.0
#include "grace/eval.hpp"

#include <cmath>
#include <cstdio>

namespace grace {

std::optional<std::pair<UserSequence, Interaction>> leave_one_out(const UserSequence& seq, std::size_t truncation) {
  if (seq.interactions.size() < 2) return std::nullopt;
  UserSequence history{seq.user_id, {seq.interactions.begin(), seq.interactions.end() - 1}};
  return std::make_pair(truncate_recent(history, truncation), seq.interactions.back());
}

Split split_dataset(std::span<const UserSequence> sequences, const Catalog& catalog, std::size_t truncation) {
  Split split;
  for (const auto& raw : sequences) {
    auto loo = leave_one_out(merge_behaviors(raw), truncation);
    if (!loo) {
      ++split.excluded;
      continue;
    }
    const auto idx = catalog.index_of(loo->second.item_id);
    if (!idx) throw ValidationError("user " + raw.user_id + ": target item " + loo->second.item_id + " not in catalog");
    split.examples.push_back({std::move(loo->first), loo->second, *idx});
  }
  return split;
}

std::vector<TrainingExample> training_examples(const Split& split, const Catalog& catalog, const Tokenization& tok,
                                               std::size_t truncation) {
  std::vector<TrainingExample> out;
  for (const auto& ex : split.examples) {
    const auto& xs = ex.history.interactions;
    for (std::size_t t = 1; t < xs.size(); ++t) {
      UserSequence prefix{ex.history.user_id, {xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(t)}};
      prefix = truncate_recent(prefix, truncation);
      const auto idx = catalog.index_of(xs[t].item_id);
      if (!idx) throw ValidationError("training example references unknown item " + xs[t].item_id);
      out.push_back(make_example(tokenize(prefix, catalog, tok), tok, xs[t].behavior, *idx));
    }
  }
  return out;
}

HitNdcg hr_ndcg_from_rank(std::optional<std::size_t> rank, std::size_t k) {
  if (!rank || *rank == 0 || *rank > k) return {};
  return {1.0, 1.0 / std::log2(static_cast<double>(*rank) + 1.0)};
}

HitNdcg hr_ndcg_at_k(std::span<const std::size_t> ranked_items, std::size_t target, std::size_t k) {
  for (std::size_t i = 0; i < ranked_items.size() && i < k; ++i)
    if (ranked_items[i] == target) return hr_ndcg_from_rank(i + 1, k);
  return {};
}

nlohmann::json MetricReport::to_json() const {
  auto set_json = [&](const MetricSet& m) {
    nlohmann::json hr = nlohmann::json::object(), ndcg = nlohmann::json::object();
    for (std::size_t k : ks) {
      hr[std::to_string(k)] = m.hr.count(k) ? m.hr.at(k) : 0.0;
      ndcg[std::to_string(k)] = m.ndcg.count(k) ? m.ndcg.at(k) : 0.0;
    }
    return nlohmann::json{{"hr", hr}, {"ndcg", ndcg}, {"n_users", m.n_users}};
  };
  nlohmann::json j = set_json(overall);
  j["task"] = std::string(task_name(task));
  j["K"] = ks;
  nlohmann::json pb = nlohmann::json::object();
  for (const auto& [b, m] : per_behavior) pb[std::string(behavior_name(b))] = set_json(m);
  j["per_behavior"] = pb;
  j["skipped"] = skipped;
  return j;
}

namespace {

void accumulate(MetricSet& m, std::optional<std::size_t> rank, std::span<const std::size_t> ks) {
  ++m.n_users;
  for (std::size_t k : ks) {
    const HitNdcg h = hr_ndcg_from_rank(rank, k);
    m.hr[k] += h.hr;
    m.ndcg[k] += h.ndcg;
  }
}

void finalize(MetricSet& m) {
  if (m.n_users == 0) return;
  for (auto& [k, v] : m.hr) v = 100.0 * v / static_cast<double>(m.n_users);
  for (auto& [k, v] : m.ndcg) v = 100.0 * v / static_cast<double>(m.n_users);
}

}  // namespace

MetricReport evaluate(const Ranker& ranker, std::span<const SplitExample> examples, const EvalSettings& settings) {
  if (examples.empty()) throw ValidationError("evaluate: empty dataset");
  MetricReport report;
  report.task = settings.task;
  report.ks = settings.ks;
  for (const auto& ex : examples) {
    const Behavior tb = ex.target.behavior;
    Task task;
    switch (settings.task) {
      case TaskKind::TargetBehavior: task = Task::target_behavior(tb); break;
      case TaskKind::BehaviorSpecific:
        task = Task::behavior_specific(settings.behavior_set);
        if (!task.permits(tb)) {
          ++report.skipped;
          continue;
        }
        break;
      case TaskKind::BehaviorItem: task = Task::behavior_item(); break;
    }
    const auto ranked = ranker(ex, task);
    std::optional<std::size_t> rank;
    std::size_t position = 0;
    for (const auto& p : ranked) {
      if (settings.task == TaskKind::BehaviorItem) {
        ++position;
        if (p.item == ex.target_item && p.behavior == tb) {
          rank = position;
          break;
        }
      } else {
        // A behavior-specific ranking may list one item under two behaviors;
        // the item's rank counts distinct items.
        bool seen_before = false;
        for (std::size_t i = 0; &ranked[i] != &p; ++i) seen_before |= ranked[i].item == p.item;
        if (seen_before) continue;
        ++position;
        if (p.item == ex.target_item) {
          rank = position;
          break;
        }
      }
    }
    accumulate(report.overall, rank, report.ks);
    accumulate(report.per_behavior[tb], rank, report.ks);
  }
  if (report.overall.n_users == 0) throw ValidationError("evaluate: no users matched the task");
  finalize(report.overall);
  for (auto& [b, m] : report.per_behavior) finalize(m);
  return report;
}

Ranker model_ranker(const Model& model, const Catalog& catalog, const Tokenization& tok, const TokenTrie& trie,
                    std::size_t n_beam) {
  return [&model, &catalog, &tok, &trie, n_beam](const SplitExample& ex, const Task& task) {
    const TokenizedSequence seq = tokenize(ex.history, catalog, tok);
    const EncoderOutput enc = encode(model, seq);
    const DecoderMemory mem = make_decoder_memory(model, enc.states);
    return beam_search(model, mem, tok, trie, task, n_beam).predictions;
  };
}

std::string Heatmap::to_csv() const {
  std::string out = "product_type";
  for (std::size_t c = 0; c < counts.cols(); ++c) out += ",L1_" + std::to_string(c);
  out += '\n';
  for (std::size_t r = 0; r < counts.rows(); ++r) {
    out += product_types[r];
    for (std::size_t c = 0; c < counts.cols(); ++c) out += "," + std::to_string(static_cast<long long>(counts(r, c)));
    out += '\n';
  }
  return out;
}

Heatmap cooccurrence_heatmap(const Catalog& catalog, const Tokenization& tok) {
  const auto& pts = tok.vocab.spec().hop_values[0];
  Heatmap h{pts, Matrix(pts.size(), tok.vocab.range(TokenType::Sem1).size)};
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    const auto [type, pt] = tok.vocab.decode(tok.item_tokens.at(i)[0]);
    h.counts(pt, tok.semantic_ids.at(i).levels[0]) += 1.0;
  }
  return h;
}

}  // namespace grace
