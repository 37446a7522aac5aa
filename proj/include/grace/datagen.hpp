// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "grace/core.hpp"

namespace grace {

struct GenConfig {
  std::uint64_t seed = 42;
  std::size_t n_users = 2000;
  std::size_t n_items = 500;
  std::size_t n_product_types = 20;
  std::size_t n_brands = 10;
  std::size_t embedding_dim = 16;
  double embedding_noise = 0.05;
  // Click, AddToCart, Like, RemoveFromCart
  std::array<double, kBehaviorCount> behavior_mix{0.5489, 0.3354, 0.0135, 0.1022};
  std::size_t journeys_min = 2;
  std::size_t journeys_max = 3;
  std::size_t journey_len_min = 2;
  std::size_t journey_len_max = 5;
  double interleave_prob = 0.3;
  double rule_strength = 0.9;
  double price_min = 1.0;
  double price_max = 1000.0;

  void validate() const;
};

Catalog gen_catalog(const GenConfig& cfg);

/// The next item shares the current item's product type with probability
/// `rule_strength`, otherwise it is uniform over the catalog. Items already
/// used by the user are avoided when the product type has others left.
std::vector<UserSequence> gen_sequences(const GenConfig& cfg, const Catalog& catalog);

struct DatasetStats {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  double avg_length = 0.0;
  std::array<double, kBehaviorCount> avg_per_behavior{};
  std::array<double, kBehaviorCount> share{};  // percent

  nlohmann::json to_json() const;
  std::string to_text() const;
};

DatasetStats dataset_stats(const std::vector<UserSequence>& sequences, std::size_t n_items);

}  // namespace grace
