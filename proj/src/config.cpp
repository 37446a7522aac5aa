// SPDX-License-Identifier: Apache-2.0
#include "grace/config.hpp"

#include <set>

#include "grace/io.hpp"

namespace grace {

namespace {

using nlohmann::json;

class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ValidationError("config: section '" + name_ + "' must be an object");
  }

  template <class T>
  void read(const char* key, T& field) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    try {
      field = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ValidationError("config: " + where(key) + ": " + e.what());
    }
  }

  bool has(const char* key) {
    known_.insert(key);
    return j_.contains(key);
  }
  const json& at(const char* key) const { return j_.at(key); }
  std::string where(const char* key) const { return name_.empty() ? key : name_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!known_.count(k)) throw ValidationError("config: unknown key '" + (name_.empty() ? k : name_ + "." + k) + "'");
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> known_;
};

std::vector<Behavior> parse_behaviors(const std::vector<std::string>& names, const std::string& where) {
  std::vector<Behavior> out;
  for (const auto& n : names) {
    auto b = parse_behavior(n);
    if (!b) throw ValidationError("config: " + where + ": unknown behavior '" + n + "'");
    out.push_back(*b);
  }
  return out;
}

}  // namespace

void RunConfig::propagate_seed() {
  gen.seed = seed;
  train.seed = seed;
}

void RunConfig::validate() const {
  if (paths.out.empty()) throw ValidationError("config: paths.out must not be empty");
  gen.validate();
  model.validate();
  cost.validate();
  if (codebook_size == 0) throw ValidationError("config: tokenizer.codebook_size must be positive");
  if (user_buckets == 0) throw ValidationError("config: tokenizer.user_buckets must be positive");
  if (train.batch_size == 0) throw ValidationError("config: train.batch_size must be positive");
  if (!(train.learning_rate > 0.0)) throw ValidationError("config: train.learning_rate must be positive");
  if (eval.n_beam == 0) throw ValidationError("config: eval.n_beam must be positive");
  if (eval.ks.empty()) throw ValidationError("config: eval.K must not be empty");
  for (auto k : eval.ks)
    if (k == 0) throw ValidationError("config: eval.K entries must be positive");
  if (eval.behavior_set.empty()) throw ValidationError("config: eval.behavior_set must not be empty");
  for (auto n : cost_lengths)
    if (n < 1) throw ValidationError("config: cost.lengths entries must be >= 1");
}

std::string RunConfig::out_file(const std::string& name) const { return paths.out + "/" + name; }
std::string RunConfig::catalog_path() const {
  return paths.catalog.empty() ? out_file("catalog.jsonl") : paths.catalog;
}
std::string RunConfig::interactions_path() const {
  return paths.interactions.empty() ? out_file("interactions.jsonl") : paths.interactions;
}
std::string RunConfig::checkpoint_path() const {
  return paths.checkpoint.empty() ? out_file("checkpoint.json") : paths.checkpoint;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Section root(j, "");
  root.read("seed", c.seed);

  if (root.has("paths")) {
    Section s(root.at("paths"), "paths");
    s.read("out", c.paths.out);
    s.read("catalog", c.paths.catalog);
    s.read("interactions", c.paths.interactions);
    s.read("checkpoint", c.paths.checkpoint);
    s.finish();
  }
  if (root.has("gen")) {
    Section s(root.at("gen"), "gen");
    auto& g = c.gen;
    s.read("n_users", g.n_users);
    s.read("n_items", g.n_items);
    s.read("n_product_types", g.n_product_types);
    s.read("n_brands", g.n_brands);
    s.read("embedding_dim", g.embedding_dim);
    s.read("embedding_noise", g.embedding_noise);
    if (s.has("behavior_mix")) {
      Section m(s.at("behavior_mix"), "gen.behavior_mix");
      for (std::size_t b = 0; b < kBehaviorCount; ++b) {
        const std::string name(behavior_name(kAllBehaviors[b]));
        m.read(name.c_str(), g.behavior_mix[b]);
      }
      m.finish();
    }
    s.read("journeys_min", g.journeys_min);
    s.read("journeys_max", g.journeys_max);
    s.read("journey_len_min", g.journey_len_min);
    s.read("journey_len_max", g.journey_len_max);
    s.read("interleave_prob", g.interleave_prob);
    s.read("rule_strength", g.rule_strength);
    s.read("price_min", g.price_min);
    s.read("price_max", g.price_max);
    s.finish();
  }
  if (root.has("tokenizer")) {
    Section s(root.at("tokenizer"), "tokenizer");
    s.read("codebook_size", c.codebook_size);
    s.read("user_buckets", c.user_buckets);
    s.finish();
  }
  if (root.has("model")) {
    Section s(root.at("model"), "model");
    auto& m = c.model;
    s.read("layers_enc", m.layers_enc);
    s.read("layers_dec", m.layers_dec);
    s.read("model_dim", m.model_dim);
    s.read("ffn_width", m.ffn_width);
    s.read("heads", m.heads);
    s.read("head_dim", m.head_dim);
    s.read("experts", m.experts);
    s.read("truncation", m.truncation);
    s.read("max_len", m.max_len);
    s.read("aux_weight", m.aux_weight);
    s.finish();
  }
  if (root.has("jsa")) {
    Section s(root.at("jsa"), "jsa");
    auto& a = c.model.jsa;
    s.read("block_len", a.block_len);
    s.read("stride", a.stride);
    s.read("top_n", a.top_n);
    s.read("kept_cot", a.kept_cot);
    s.read("kept_sem", a.kept_sem);
    s.read("window", a.window);
    if (s.has("gate_override")) {
      Section g(s.at("gate_override"), "jsa.gate_override");
      for (std::size_t b = 0; b < kBranchCount; ++b) {
        const std::string name(branch_name(static_cast<Branch>(b)));
        double v = 0.0;
        if (g.has(name.c_str())) {
          g.read(name.c_str(), v);
          a.gate_override[b] = v;
        }
      }
      g.finish();
    }
    s.finish();
  }
  if (root.has("train")) {
    Section s(root.at("train"), "train");
    s.read("steps", c.train.steps);
    s.read("batch_size", c.train.batch_size);
    s.read("learning_rate", c.train.learning_rate);
    s.read("weight_decay", c.train.weight_decay);
    s.finish();
  }
  if (root.has("eval")) {
    Section s(root.at("eval"), "eval");
    std::string task(task_name(c.eval.task));
    s.read("task", task);
    auto kind = parse_task(task);
    if (!kind) throw ValidationError("config: eval.task: unknown task '" + task + "'");
    c.eval.task = *kind;
    if (s.has("behavior_set")) {
      std::vector<std::string> names;
      s.read("behavior_set", names);
      c.eval.behavior_set = parse_behaviors(names, "eval.behavior_set");
    }
    s.read("K", c.eval.ks);
    s.read("n_beam", c.eval.n_beam);
    s.read("max_users", c.eval_max_users);
    s.finish();
  }
  if (root.has("sweep")) {
    Section s(root.at("sweep"), "sweep");
    s.read("window", c.sweep.window);
    s.read("top_n", c.sweep.top_n);
    s.read("beam", c.sweep.beam);
    s.read("retrain", c.sweep.retrain);
    s.finish();
  }
  if (root.has("cost")) {
    Section s(root.at("cost"), "cost");
    auto& k = c.cost;
    s.read("tokens_per_item", k.tokens_per_item);
    s.read("extra_tokens", k.extra_tokens);
    s.read("block_len", k.block_len);
    s.read("stride", k.stride);
    s.read("top_n", k.top_n);
    s.read("window", k.window);
    s.read("inter_per_item", k.inter_per_item);
    s.read("self_term", k.self_term);
    s.read("lengths", c.cost_lengths);
    s.finish();
  }
  root.finish();
  c.propagate_seed();
  return c;
}

nlohmann::json run_config_to_json(const RunConfig& c) {
  json mix = json::object();
  for (std::size_t b = 0; b < kBehaviorCount; ++b) mix[std::string(behavior_name(kAllBehaviors[b]))] = c.gen.behavior_mix[b];
  json gates = json::object();
  for (std::size_t b = 0; b < kBranchCount; ++b)
    if (c.model.jsa.gate_override[b]) gates[std::string(branch_name(static_cast<Branch>(b)))] = *c.model.jsa.gate_override[b];
  std::vector<std::string> bset;
  for (auto b : c.eval.behavior_set) bset.emplace_back(behavior_name(b));
  const auto& g = c.gen;
  const auto& m = c.model;
  const auto& a = c.model.jsa;
  const auto& k = c.cost;
  return json{
      {"seed", c.seed},
      {"paths",
       {{"out", c.paths.out},
        {"catalog", c.paths.catalog},
        {"interactions", c.paths.interactions},
        {"checkpoint", c.paths.checkpoint}}},
      {"gen",
       {{"n_users", g.n_users},
        {"n_items", g.n_items},
        {"n_product_types", g.n_product_types},
        {"n_brands", g.n_brands},
        {"embedding_dim", g.embedding_dim},
        {"embedding_noise", g.embedding_noise},
        {"behavior_mix", mix},
        {"journeys_min", g.journeys_min},
        {"journeys_max", g.journeys_max},
        {"journey_len_min", g.journey_len_min},
        {"journey_len_max", g.journey_len_max},
        {"interleave_prob", g.interleave_prob},
        {"rule_strength", g.rule_strength},
        {"price_min", g.price_min},
        {"price_max", g.price_max}}},
      {"tokenizer", {{"codebook_size", c.codebook_size}, {"user_buckets", c.user_buckets}}},
      {"model",
       {{"layers_enc", m.layers_enc},
        {"layers_dec", m.layers_dec},
        {"model_dim", m.model_dim},
        {"ffn_width", m.ffn_width},
        {"heads", m.heads},
        {"head_dim", m.head_dim},
        {"experts", m.experts},
        {"truncation", m.truncation},
        {"max_len", m.max_len},
        {"aux_weight", m.aux_weight}}},
      {"jsa",
       {{"block_len", a.block_len},
        {"stride", a.stride},
        {"top_n", a.top_n},
        {"kept_cot", a.kept_cot},
        {"kept_sem", a.kept_sem},
        {"window", a.window},
        {"gate_override", gates}}},
      {"train",
       {{"steps", c.train.steps},
        {"batch_size", c.train.batch_size},
        {"learning_rate", c.train.learning_rate},
        {"weight_decay", c.train.weight_decay}}},
      {"eval",
       {{"task", std::string(task_name(c.eval.task))},
        {"behavior_set", bset},
        {"K", c.eval.ks},
        {"n_beam", c.eval.n_beam},
        {"max_users", c.eval_max_users}}},
      {"sweep",
       {{"window", c.sweep.window}, {"top_n", c.sweep.top_n}, {"beam", c.sweep.beam}, {"retrain", c.sweep.retrain}}},
      {"cost",
       {{"tokens_per_item", k.tokens_per_item},
        {"extra_tokens", k.extra_tokens},
        {"block_len", k.block_len},
        {"stride", k.stride},
        {"top_n", k.top_n},
        {"window", k.window},
        {"inter_per_item", k.inter_per_item},
        {"self_term", k.self_term},
        {"lengths", c.cost_lengths}}},
  };
}

RunConfig load_run_config(const std::string& path) {
  const std::string text = io::read_text(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace grace
