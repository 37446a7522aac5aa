// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "grace/cost.hpp"
#include "grace/datagen.hpp"
#include "grace/eval.hpp"
#include "grace/model.hpp"
#include "grace/train.hpp"

namespace grace {

struct PathConfig {
  std::string out = "out";
  std::string catalog;       // empty: <out>/catalog.jsonl
  std::string interactions;  // empty: <out>/interactions.jsonl
  std::string checkpoint;    // empty: <out>/checkpoint.json
};

struct SweepConfig {
  std::vector<std::size_t> window{3, 10, 20, 30};
  std::vector<std::size_t> top_n{1, 2, 3, 4, 5};
  std::vector<std::size_t> beam{10, 20, 40};
  bool retrain = false;
};

struct RunConfig {
  std::uint64_t seed = 42;
  PathConfig paths;
  GenConfig gen;
  std::size_t codebook_size = 64;
  std::size_t user_buckets = 1;
  ModelConfig model;  // model.jsa holds the JSA section
  TrainConfig train;
  EvalSettings eval;
  std::size_t eval_max_users = 0;  // 0: all
  SweepConfig sweep;
  CostConfig cost;
  std::vector<std::int64_t> cost_lengths{50, 100, 200};

  /// Applies `seed` to the sections that carry one.
  void propagate_seed();
  void validate() const;

  std::string catalog_path() const;
  std::string interactions_path() const;
  std::string checkpoint_path() const;
  std::string out_file(const std::string& name) const;
};

/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::string& path);

}  // namespace grace
