// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "grace/numerics.hpp"

namespace grace {

enum class Behavior : std::uint8_t { Click = 0, AddToCart = 1, Like = 2, RemoveFromCart = 3 };

inline constexpr std::array<Behavior, 4> kAllBehaviors{Behavior::Click, Behavior::AddToCart, Behavior::Like,
                                                       Behavior::RemoveFromCart};
inline constexpr std::size_t kBehaviorCount = kAllBehaviors.size();

std::string_view behavior_name(Behavior b);
std::optional<Behavior> parse_behavior(std::string_view s);

/// Merge priority: ATC > Like > Click. RemoveFromCart has none and never merges.
std::optional<int> merge_priority(Behavior b);

struct Item {
  std::string item_id;
  std::vector<double> embedding;
  std::string product_type;
  std::string brand;
  double price = 0.0;
};

class Catalog {
 public:
  Catalog() = default;
  explicit Catalog(std::vector<Item> items);

  const std::vector<Item>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  const Item& operator[](std::size_t i) const { return items_[i]; }
  std::optional<std::size_t> index_of(const std::string& item_id) const;
  std::size_t embedding_dim() const { return items_.empty() ? 0 : items_.front().embedding.size(); }

 private:
  std::vector<Item> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Interaction {
  std::string item_id;
  Behavior behavior = Behavior::Click;
  std::int64_t ordinal = 0;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

struct UserSequence {
  std::string user_id;
  std::vector<Interaction> interactions;

  friend bool operator==(const UserSequence&, const UserSequence&) = default;
};

/// Keeps one interaction per item among {ATC, Like, Click}: the last
/// occurrence of the highest-priority behavior. Remove passes through.
/// Ordinals are rewritten to 0..n-1.
UserSequence merge_behaviors(const UserSequence& seq);

/// Keeps the most recent `max_len` interactions.
UserSequence truncate_recent(const UserSequence& seq, std::size_t max_len);

// ------------------------------------------------------------ price bands

inline constexpr std::size_t kPriceBands = 5;
using PriceBoundaries = std::array<double, kPriceBands - 1>;

/// Left-closed, right-open bands: smallest i with price < boundaries[i], else 4.
std::size_t price_band(double price, const PriceBoundaries& boundaries);

/// 20/40/60/80 percentiles (linear interpolation) of the catalog prices,
/// nudged upward where needed to stay strictly ascending.
PriceBoundaries price_boundaries_from_prices(std::span<const double> prices);
PriceBoundaries price_boundaries_from_catalog(const Catalog& catalog);

// ------------------------------------------------------------ PKG traversal

inline constexpr std::size_t kCotHops = 3;

/// Coarse-to-fine attribute path: product type, price band, brand.
struct CoTPath {
  std::array<std::string, kCotHops> attributes;

  friend bool operator==(const CoTPath&, const CoTPath&) = default;
};

std::string price_band_label(std::size_t band);

CoTPath pkg_traverse(const Item& item, const PriceBoundaries& boundaries);

}  // namespace grace
