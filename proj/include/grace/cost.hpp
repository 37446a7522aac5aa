// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace grace {

struct CostConfig {
  std::int64_t tokens_per_item = 5;
  std::int64_t extra_tokens = 2;
  std::int64_t block_len = 15;  // l
  std::int64_t stride = 15;     // d
  std::int64_t top_n = 3;       // N
  std::int64_t window = 10;     // w
  std::int64_t inter_per_item = 2;  // M_g + M_s
  std::int64_t self_term = 1;

  void validate() const;
};

std::int64_t token_len(std::int64_t n_items, const CostConfig& cfg);
std::int64_t full_cost(std::int64_t L);
std::int64_t jsa_cost(std::int64_t n_items, const CostConfig& cfg);
/// Signed integer percent, e.g. -32.
std::int64_t reduction(std::int64_t n_items, const CostConfig& cfg);

struct CostRow {
  std::int64_t n_items = 0;
  std::int64_t length = 0;
  std::int64_t full = 0;
  std::int64_t jsa = 0;
  std::int64_t reduction_pct = 0;
};

std::vector<CostRow> cost_table(const std::vector<std::int64_t>& lengths, const CostConfig& cfg);
std::string cost_table_text(const std::vector<CostRow>& rows);
std::string cost_table_csv(const std::vector<CostRow>& rows);
/// 12,345 style.
std::string with_commas(std::int64_t v);

}  // namespace grace
