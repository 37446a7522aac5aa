// SPDX-License-Identifier: Apache-2.0
#include "grace/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace grace {

std::string_view behavior_name(Behavior b) {
  switch (b) {
    case Behavior::Click: return "click";
    case Behavior::AddToCart: return "atc";
    case Behavior::Like: return "like";
    case Behavior::RemoveFromCart: return "remove";
  }
  return "unknown";
}

std::optional<Behavior> parse_behavior(std::string_view s) {
  if (s == "click") return Behavior::Click;
  if (s == "atc" || s == "add_to_cart") return Behavior::AddToCart;
  if (s == "like") return Behavior::Like;
  if (s == "remove" || s == "remove_from_cart") return Behavior::RemoveFromCart;
  return std::nullopt;
}

std::optional<int> merge_priority(Behavior b) {
  switch (b) {
    case Behavior::AddToCart: return 3;
    case Behavior::Like: return 2;
    case Behavior::Click: return 1;
    case Behavior::RemoveFromCart: return std::nullopt;
  }
  return std::nullopt;
}

Catalog::Catalog(std::vector<Item> items) : items_(std::move(items)) {
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const Item& it = items_[i];
    if (!index_.emplace(it.item_id, i).second) throw ValidationError("duplicate item_id " + it.item_id);
    if (it.embedding.size() != items_.front().embedding.size())
      throw ValidationError("item " + it.item_id + ": embedding length differs from the catalog");
  }
}

std::optional<std::size_t> Catalog::index_of(const std::string& item_id) const {
  auto it = index_.find(item_id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

UserSequence merge_behaviors(const UserSequence& seq) {
  // item -> (priority, position of the last occurrence at that priority)
  std::map<std::string, std::pair<int, std::size_t>> keep;
  for (std::size_t i = 0; i < seq.interactions.size(); ++i) {
    const auto& x = seq.interactions[i];
    const auto prio = merge_priority(x.behavior);
    if (!prio) continue;
    auto [it, inserted] = keep.try_emplace(x.item_id, *prio, i);
    if (!inserted && *prio >= it->second.first) it->second = {*prio, i};
  }
  UserSequence out{seq.user_id, {}};
  for (std::size_t i = 0; i < seq.interactions.size(); ++i) {
    const auto& x = seq.interactions[i];
    if (merge_priority(x.behavior) && keep.at(x.item_id).second != i) continue;
    out.interactions.push_back({x.item_id, x.behavior, static_cast<std::int64_t>(out.interactions.size())});
  }
  return out;
}

UserSequence truncate_recent(const UserSequence& seq, std::size_t max_len) {
  UserSequence out{seq.user_id, {}};
  const std::size_t n = seq.interactions.size();
  const std::size_t start = n > max_len ? n - max_len : 0;
  out.interactions.assign(seq.interactions.begin() + static_cast<std::ptrdiff_t>(start), seq.interactions.end());
  return out;
}

std::size_t price_band(double price, const PriceBoundaries& boundaries) {
  if (!std::isfinite(price)) throw ValidationError("price_band: non-finite price");
  if (price < 0.0) throw ValidationError("price_band: negative price");
  for (std::size_t i = 0; i + 1 < boundaries.size(); ++i) {
    if (!(boundaries[i] < boundaries[i + 1])) throw ValidationError("price_band: boundaries not strictly ascending");
  }
  for (std::size_t i = 0; i < boundaries.size(); ++i) {
    if (price < boundaries[i]) return i;
  }
  return boundaries.size();
}

PriceBoundaries price_boundaries_from_prices(std::span<const double> prices) {
  if (prices.empty()) throw ValidationError("price boundaries need at least one price");
  std::vector<double> sorted(prices.begin(), prices.end());
  std::sort(sorted.begin(), sorted.end());
  PriceBoundaries b{};
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double q = 0.2 * static_cast<double>(i + 1);
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    b[i] = sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    if (i > 0 && !(b[i] > b[i - 1])) b[i] = std::nextafter(b[i - 1], std::numeric_limits<double>::infinity());
  }
  return b;
}

PriceBoundaries price_boundaries_from_catalog(const Catalog& catalog) {
  std::vector<double> prices;
  prices.reserve(catalog.size());
  for (const auto& it : catalog.items()) prices.push_back(it.price);
  return price_boundaries_from_prices(prices);
}

std::string price_band_label(std::size_t band) { return "price_band_" + std::to_string(band); }

CoTPath pkg_traverse(const Item& item, const PriceBoundaries& boundaries) {
  if (item.product_type.empty())
    throw ValidationError("pkg_traverse(" + item.item_id + "): hop 1 (product_type) is missing");
  if (!std::isfinite(item.price) || item.price < 0.0)
    throw ValidationError("pkg_traverse(" + item.item_id + "): hop 2 (price) is missing or invalid");
  if (item.brand.empty()) throw ValidationError("pkg_traverse(" + item.item_id + "): hop 3 (brand) is missing");
  return CoTPath{{item.product_type, price_band_label(price_band(item.price, boundaries)), item.brand}};
}

}  // namespace grace
