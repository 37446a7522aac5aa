// SPDX-License-Identifier: Apache-2.0
#include "grace/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <ostream>

#include "grace/io.hpp"

namespace grace {

namespace fs = std::filesystem;

namespace {

void ensure_out_dir(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.paths.out, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + cfg.paths.out + ": " + ec.message());
}

void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path)) throw std::runtime_error(std::string("missing ") + what + ": " + path);
}

std::string metric_line(const MetricReport& r) {
  std::string out = std::string(task_name(r.task)) + " users=" + std::to_string(r.overall.n_users);
  char buf[64];
  for (auto k : r.ks) {
    std::snprintf(buf, sizeof buf, " HR@%zu=%.2f NDCG@%zu=%.2f", k, r.overall.hr.at(k), k, r.overall.ndcg.at(k));
    out += buf;
  }
  return out;
}

Model load_model(const RunConfig& cfg, const Workspace& ws) {
  require_file(cfg.checkpoint_path(), "checkpoint");
  Model model(cfg.model, ws.tok.vocab.total_size(), cfg.seed);
  load_checkpoint(cfg.checkpoint_path(), model.parameters());
  return model;
}

}  // namespace

std::string cmd_gen(const RunConfig& cfg) {
  cfg.gen.validate();
  const Catalog catalog = gen_catalog(cfg.gen);
  const auto seqs = gen_sequences(cfg.gen, catalog);
  ensure_out_dir(cfg);
  io::write_catalog(cfg.out_file("catalog.jsonl"), catalog);
  io::write_interactions(cfg.out_file("interactions.jsonl"), seqs);
  const DatasetStats stats = dataset_stats(seqs, catalog.size());
  io::write_text(cfg.out_file("gen_stats.json"), stats.to_json().dump(2) + "\n");
  return stats.to_text();
}

std::string cmd_tokenize(const RunConfig& cfg) {
  require_file(cfg.catalog_path(), "catalog");
  require_file(cfg.interactions_path(), "interactions");
  const Catalog catalog = io::read_catalog(cfg.catalog_path());
  const auto seqs = io::read_interactions(cfg.interactions_path());
  TokenizerConfig tcfg;
  tcfg.codebook_size = cfg.codebook_size;
  tcfg.user_buckets = cfg.user_buckets;
  tcfg.seed = cfg.seed;
  const Tokenization tok = build_tokenization(catalog, tcfg);
  ensure_out_dir(cfg);

  nlohmann::json manifest = tok.vocab.manifest(tok.seed);
  manifest["price_boundaries"] = tok.price_boundaries;
  io::write_text(cfg.out_file("vocab.json"), manifest.dump(2) + "\n");
  write_semantic_ids(cfg.out_file("semantic_ids.jsonl"), catalog, tok.semantic_ids);

  std::vector<nlohmann::json> records;
  records.reserve(seqs.size());
  for (const auto& raw : seqs) {
    const UserSequence seq = truncate_recent(merge_behaviors(raw), cfg.model.truncation);
    const TokenizedSequence ts = tokenize(seq, catalog, tok);
    records.push_back({{"user_id", seq.user_id}, {"tokens", ts.tokens}, {"length", ts.tokens.size()}});
  }
  io::write_jsonl(cfg.out_file("tokenized.jsonl"), records);
  return "vocab=" + std::to_string(tok.vocab.total_size()) + " items=" + std::to_string(catalog.size()) +
         " users=" + std::to_string(seqs.size()) + " collisions=" + std::to_string(tok.collisions) + "\n";
}

Workspace load_workspace(const RunConfig& cfg) {
  require_file(cfg.catalog_path(), "catalog");
  require_file(cfg.interactions_path(), "interactions");
  require_file(cfg.out_file("vocab.json"), "vocab manifest (run tokenize first)");
  require_file(cfg.out_file("semantic_ids.jsonl"), "semantic ids (run tokenize first)");
  Workspace ws;
  ws.catalog = io::read_catalog(cfg.catalog_path());
  ws.sequences = io::read_interactions(cfg.interactions_path());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_text(cfg.out_file("vocab.json")));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(cfg.out_file("vocab.json") + ": " + e.what());
  }
  const Vocab vocab = Vocab::from_manifest(manifest);
  PriceBoundaries bounds = price_boundaries_from_catalog(ws.catalog);
  if (manifest.contains("price_boundaries")) bounds = manifest.at("price_boundaries").get<PriceBoundaries>();
  auto sids = read_semantic_ids(cfg.out_file("semantic_ids.jsonl"), ws.catalog);
  ws.tok = restore_tokenization(ws.catalog, vocab, bounds, std::move(sids), manifest.value("seed", cfg.seed));
  ws.trie = TokenTrie::build(ws.tok, ws.catalog.size());
  ws.split = split_dataset(ws.sequences, ws.catalog, cfg.model.truncation);
  return ws;
}

Model train_model(const RunConfig& cfg, const Workspace& ws, TrainResult* result, std::ostream* log) {
  const auto examples = training_examples(ws.split, ws.catalog, ws.tok, cfg.model.truncation);
  Model model(cfg.model, ws.tok.vocab.total_size(), cfg.seed);
  if (log) *log << "train: " << examples.size() << " examples, " << model.parameter_count() << " parameters\n";
  const std::size_t every = std::max<std::size_t>(1, cfg.train.steps / 20);
  TrainResult r = train(model, examples, cfg.train, [&](const LossPoint& p) {
    if (log && (p.step % every == 0 || p.step + 1 == cfg.train.steps)) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "step %zu loss %.4f aux %.4f\n", p.step, p.loss, p.aux);
      *log << buf << std::flush;
    }
  });
  if (result) *result = std::move(r);
  return model;
}

std::string cmd_train(const RunConfig& cfg, std::ostream* log) {
  cfg.validate();
  const Workspace ws = load_workspace(cfg);
  TrainResult result;
  Model model = train_model(cfg, ws, &result, log);
  ensure_out_dir(cfg);
  save_checkpoint(cfg.checkpoint_path(), model.parameters());
  io::write_text(cfg.out_file("loss_curve.csv"), loss_curve_csv(result.curve));
  char buf[96];
  std::snprintf(buf, sizeof buf, "steps=%zu final_loss=%.6f\n", result.curve.size(),
                result.curve.empty() ? 0.0 : result.curve.back().loss);
  return buf;
}

MetricReport evaluate_model(const RunConfig& cfg, const Workspace& ws, const Model& model,
                            std::vector<nlohmann::json>* predictions) {
  std::span<const SplitExample> users(ws.split.examples);
  if (cfg.eval_max_users > 0 && cfg.eval_max_users < users.size()) users = users.first(cfg.eval_max_users);
  const Ranker inner = model_ranker(model, ws.catalog, ws.tok, ws.trie, cfg.eval.n_beam);
  Ranker ranker = inner;
  if (predictions) {
    ranker = [&](const SplitExample& ex, const Task& task) {
      auto ranked = inner(ex, task);
      nlohmann::json preds = nlohmann::json::array();
      for (const auto& p : ranked)
        preds.push_back({{"behavior", behavior_name(p.behavior)}, {"item_id", ws.catalog[p.item].item_id}, {"score", p.score}});
      predictions->push_back({{"user_id", ex.history.user_id},
                              {"target_item", ex.target.item_id},
                              {"target_behavior", behavior_name(ex.target.behavior)},
                              {"predictions", preds}});
      return ranked;
    };
  }
  return evaluate(ranker, users, cfg.eval);
}

std::string cmd_eval(const RunConfig& cfg, std::ostream* log) {
  cfg.validate();
  const Workspace ws = load_workspace(cfg);
  const Model model = load_model(cfg, ws);
  std::vector<nlohmann::json> preds;
  const MetricReport report = evaluate_model(cfg, ws, model, &preds);
  ensure_out_dir(cfg);
  nlohmann::json j = report.to_json();
  j["excluded_users"] = ws.split.excluded;
  io::write_text(cfg.out_file("report.json"), j.dump(2) + "\n");
  io::write_jsonl(cfg.out_file("predictions.jsonl"), preds);
  if (log) *log << "eval: wrote " << cfg.out_file("report.json") << "\n";
  return metric_line(report) + "\n";
}

std::string cmd_sweep(const RunConfig& cfg, const std::string& axis, std::ostream* log) {
  cfg.validate();
  const std::vector<std::size_t>* values = nullptr;
  if (axis == "w") values = &cfg.sweep.window;
  else if (axis == "top_n") values = &cfg.sweep.top_n;
  else if (axis == "beam") values = &cfg.sweep.beam;
  else throw ValidationError("sweep: unknown axis '" + axis + "' (expected w, top_n or beam)");
  if (values->empty()) throw ValidationError("sweep: no values for axis " + axis);

  const Workspace ws = load_workspace(cfg);
  std::optional<Model> shared;
  if (!cfg.sweep.retrain || axis == "beam") shared.emplace(load_model(cfg, ws));

  std::string csv = axis;
  for (auto k : cfg.eval.ks) csv += ",hr@" + std::to_string(k);
  for (auto k : cfg.eval.ks) csv += ",ndcg@" + std::to_string(k);
  csv += '\n';
  std::string summary;
  for (std::size_t v : *values) {
    RunConfig run = cfg;
    if (axis == "w") run.model.jsa.window = v;
    else if (axis == "top_n") run.model.jsa.top_n = v;
    else run.eval.n_beam = v;
    run.model.jsa.validate();

    std::optional<Model> own;
    if (!shared) own.emplace(train_model(run, ws, nullptr, log));
    Model& model = shared ? *shared : *own;
    model.jsa_config().window = run.model.jsa.window;
    model.jsa_config().top_n = run.model.jsa.top_n;

    const MetricReport r = evaluate_model(run, ws, model);
    char buf[32];
    csv += std::to_string(v);
    for (auto k : r.ks) {
      std::snprintf(buf, sizeof buf, ",%.4f", r.overall.hr.at(k));
      csv += buf;
    }
    for (auto k : r.ks) {
      std::snprintf(buf, sizeof buf, ",%.4f", r.overall.ndcg.at(k));
      csv += buf;
    }
    csv += '\n';
    summary += axis + "=" + std::to_string(v) + " " + metric_line(r) + "\n";
    if (log) *log << summary.substr(summary.rfind('\n', summary.size() - 2) + 1) << std::flush;
  }
  ensure_out_dir(cfg);
  io::write_text(cfg.out_file("sweep_" + axis + ".csv"), csv);
  return summary;
}

std::string cmd_cost(const RunConfig& cfg) {
  cfg.cost.validate();
  const auto rows = cost_table(cfg.cost_lengths, cfg.cost);
  ensure_out_dir(cfg);
  const std::string text = cost_table_text(rows);
  io::write_text(cfg.out_file("cost_table.txt"), text);
  io::write_text(cfg.out_file("cost_table.csv"), cost_table_csv(rows));
  return text;
}

std::string cmd_heatmap(const RunConfig& cfg) {
  require_file(cfg.catalog_path(), "catalog");
  require_file(cfg.out_file("vocab.json"), "vocab manifest (run tokenize first)");
  require_file(cfg.out_file("semantic_ids.jsonl"), "semantic ids (run tokenize first)");
  const Catalog catalog = io::read_catalog(cfg.catalog_path());
  const auto manifest = nlohmann::json::parse(io::read_text(cfg.out_file("vocab.json")));
  const Vocab vocab = Vocab::from_manifest(manifest);
  PriceBoundaries bounds = price_boundaries_from_catalog(catalog);
  if (manifest.contains("price_boundaries")) bounds = manifest.at("price_boundaries").get<PriceBoundaries>();
  const Tokenization tok = restore_tokenization(catalog, vocab, bounds,
                                                read_semantic_ids(cfg.out_file("semantic_ids.jsonl"), catalog),
                                                manifest.value("seed", cfg.seed));
  const Heatmap h = cooccurrence_heatmap(catalog, tok);
  ensure_out_dir(cfg);
  io::write_text(cfg.out_file("heatmap.csv"), h.to_csv());
  return "heatmap " + std::to_string(h.counts.rows()) + "x" + std::to_string(h.counts.cols()) + "\n";
}

}  // namespace grace
