// SPDX-License-Identifier: Apache-2.0
#include "grace/cost.hpp"

#include <cmath>
#include <cstdio>

#include "grace/numerics.hpp"

namespace grace {

void CostConfig::validate() const {
  if (tokens_per_item < 1) throw ValidationError("cost: tokens_per_item must be >= 1");
  if (extra_tokens < 0) throw ValidationError("cost: extra_tokens must be >= 0");
  if (block_len < 1 || stride < 1) throw ValidationError("cost: block length and stride must be >= 1");
  if (top_n < 0 || window < 0 || inter_per_item < 0) throw ValidationError("cost: budgets must be >= 0");
  if (self_term != 0 && self_term != 1) throw ValidationError("cost: self_term must be 0 or 1");
}

std::int64_t token_len(std::int64_t n_items, const CostConfig& cfg) {
  if (n_items < 1) throw ValidationError("cost: n_items must be >= 1");
  return cfg.tokens_per_item * n_items + cfg.extra_tokens;
}

std::int64_t full_cost(std::int64_t L) {
  if (L < 1) throw ValidationError("cost: L must be >= 1");
  return L * L;
}

std::int64_t jsa_cost(std::int64_t n_items, const CostConfig& cfg) {
  cfg.validate();
  const std::int64_t L = token_len(n_items, cfg);
  const std::int64_t blocks = L >= cfg.block_len ? (L - cfg.block_len) / cfg.stride : 0;
  return L * (blocks + cfg.top_n * cfg.block_len + cfg.window + n_items * cfg.inter_per_item + cfg.self_term);
}

std::int64_t reduction(std::int64_t n_items, const CostConfig& cfg) {
  const auto full = full_cost(token_len(n_items, cfg));
  const auto jsa = jsa_cost(n_items, cfg);
  // Exact rational rounding, half away from zero.
  const std::int64_t num = 100 * (jsa - full);
  const std::int64_t q = num / full, r = num % full;
  if (2 * std::abs(r) >= full) return q + (num < 0 ? -1 : 1);
  return q;
}

std::vector<CostRow> cost_table(const std::vector<std::int64_t>& lengths, const CostConfig& cfg) {
  std::vector<CostRow> rows;
  for (auto n : lengths) {
    const auto L = token_len(n, cfg);
    rows.push_back({n, L, full_cost(L), jsa_cost(n, cfg), reduction(n, cfg)});
  }
  return rows;
}

std::string with_commas(std::int64_t v) {
  std::string digits = std::to_string(v < 0 ? -v : v);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i > 0 && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return v < 0 ? "-" + out : out;
}

std::string cost_table_text(const std::vector<CostRow>& rows) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-24s", "Item Sequence Lengths");
  std::string out = buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%14lld", static_cast<long long>(r.n_items));
    out += buf;
  }
  out += '\n';
  auto line = [&](const char* label, auto get) {
    std::snprintf(buf, sizeof buf, "%-24s", label);
    out += buf;
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%14s", get(r).c_str());
      out += buf;
    }
    out += '\n';
  };
  line("Full Attention", [](const CostRow& r) { return with_commas(r.full); });
  line("GRACE Attention", [](const CostRow& r) { return with_commas(r.jsa); });
  line("Activated Params Reduced", [](const CostRow& r) { return std::to_string(r.reduction_pct) + "%"; });
  return out;
}

std::string cost_table_csv(const std::vector<CostRow>& rows) {
  std::string out = "n_items,token_len,full_attention,grace_attention,reduction_pct\n";
  for (const auto& r : rows)
    out += std::to_string(r.n_items) + "," + std::to_string(r.length) + "," + std::to_string(r.full) + "," +
           std::to_string(r.jsa) + "," + std::to_string(r.reduction_pct) + "\n";
  return out;
}

}  // namespace grace
