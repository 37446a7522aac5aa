// SPDX-License-Identifier: Apache-2.0
#include "grace/datagen.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "grace/random.hpp"

namespace grace {

void GenConfig::validate() const {
  if (n_users == 0) throw ValidationError("gen: n_users must be positive");
  if (n_items == 0) throw ValidationError("gen: n_items must be positive");
  if (n_product_types == 0 || n_brands == 0) throw ValidationError("gen: n_product_types and n_brands must be positive");
  if (n_items < n_product_types) throw ValidationError("gen: n_items must be >= n_product_types");
  if (embedding_dim == 0) throw ValidationError("gen: embedding_dim must be positive");
  if (!(embedding_noise >= 0.0)) throw ValidationError("gen: embedding_noise must be >= 0");
  double sum = 0.0;
  for (double m : behavior_mix) {
    if (!(m >= 0.0)) throw ValidationError("gen: behavior mix entries must be >= 0");
    sum += m;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw ValidationError("gen: behavior mix must sum to 1");
  if (journeys_min == 0 || journeys_min > journeys_max) throw ValidationError("gen: bad journeys range");
  if (journey_len_min == 0 || journey_len_min > journey_len_max) throw ValidationError("gen: bad journey length range");
  if (!(interleave_prob >= 0.0 && interleave_prob <= 1.0)) throw ValidationError("gen: interleave_prob must be in [0,1]");
  if (!(rule_strength >= 0.0 && rule_strength <= 1.0)) throw ValidationError("gen: rule_strength must be in [0,1]");
  if (!(price_min > 0.0 && price_min <= price_max)) throw ValidationError("gen: bad price range");
}

namespace {

std::string padded(const char* prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, i);
  return buf;
}

std::size_t range_draw(Rng& rng, std::size_t lo, std::size_t hi) { return lo + uniform_index(rng, hi - lo + 1); }

Behavior draw_behavior(Rng& rng, const std::array<double, kBehaviorCount>& mix) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t b = 0; b < kBehaviorCount; ++b) {
    acc += mix[b];
    if (u < acc) return kAllBehaviors[b];
  }
  return kAllBehaviors[kBehaviorCount - 1];
}

struct Sampler {
  const Catalog& catalog;
  std::vector<std::vector<std::size_t>> by_pt;
  std::vector<std::size_t> pt_of;
  double strength;

  Sampler(const Catalog& c, double s) : catalog(c), pt_of(c.size()), strength(s) {
    std::map<std::string, std::size_t> ids;
    for (std::size_t i = 0; i < c.size(); ++i) {
      auto [it, fresh] = ids.emplace(c[i].product_type, ids.size());
      if (fresh) by_pt.emplace_back();
      pt_of[i] = it->second;
      by_pt[it->second].push_back(i);
    }
  }

  std::size_t from_pt(Rng& rng, std::size_t pt, const std::set<std::size_t>& used) const {
    const auto& pool = by_pt[pt];
    std::vector<std::size_t> fresh;
    for (auto i : pool)
      if (!used.count(i)) fresh.push_back(i);
    const auto& from = fresh.empty() ? pool : fresh;
    return from[uniform_index(rng, from.size())];
  }

  std::size_t next(Rng& rng, std::size_t current, const std::set<std::size_t>& used) const {
    if (uniform01(rng) < strength) return from_pt(rng, pt_of[current], used);
    return uniform_index(rng, catalog.size());
  }
};

}  // namespace

Catalog gen_catalog(const GenConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::vector<std::vector<double>> centroids(cfg.n_product_types, std::vector<double>(cfg.embedding_dim));
  for (auto& c : centroids)
    for (auto& v : c) v = standard_normal(rng);

  const int id_width = static_cast<int>(std::to_string(cfg.n_items).size());
  std::vector<Item> items;
  items.reserve(cfg.n_items);
  const double log_lo = std::log(cfg.price_min), log_hi = std::log(cfg.price_max);
  for (std::size_t i = 0; i < cfg.n_items; ++i) {
    const std::size_t pt = i < cfg.n_product_types ? i : uniform_index(rng, cfg.n_product_types);
    Item item;
    item.item_id = padded("item_", i, id_width);
    item.product_type = padded("pt_", pt, 3);
    item.brand = padded("brand_", uniform_index(rng, cfg.n_brands), 3);
    item.price = std::round(std::exp(uniform(rng, log_lo, log_hi)) * 100.0) / 100.0;
    item.embedding = centroids[pt];
    for (auto& v : item.embedding) v += cfg.embedding_noise * standard_normal(rng);
    items.push_back(std::move(item));
  }
  return Catalog(std::move(items));
}

std::vector<UserSequence> gen_sequences(const GenConfig& cfg, const Catalog& catalog) {
  cfg.validate();
  if (catalog.size() == 0) throw ValidationError("gen: empty catalog");
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  const Sampler sampler(catalog, cfg.rule_strength);
  const int id_width = static_cast<int>(std::to_string(cfg.n_users).size());

  std::vector<UserSequence> out;
  out.reserve(cfg.n_users);
  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    std::set<std::size_t> used;
    const std::size_t n_journeys = range_draw(rng, cfg.journeys_min, cfg.journeys_max);
    std::vector<std::vector<std::size_t>> journeys(n_journeys);
    for (auto& j : journeys) {
      const std::size_t len = range_draw(rng, cfg.journey_len_min, cfg.journey_len_max);
      const std::size_t pt = uniform_index(rng, sampler.by_pt.size());
      j.push_back(sampler.from_pt(rng, pt, used));
      used.insert(j.back());
      while (j.size() < len) {
        j.push_back(sampler.next(rng, j.back(), used));
        used.insert(j.back());
      }
    }

    // Round-robin interleaving: stay on the current journey, or move on with
    // probability interleave_prob (always when it runs out).
    std::vector<std::size_t> cursor(n_journeys, 0);
    std::vector<std::size_t> order;
    std::size_t current = 0, remaining = n_journeys;
    while (remaining > 0) {
      order.push_back(journeys[current][cursor[current]++]);
      if (cursor[current] == journeys[current].size()) --remaining;
      const bool done = cursor[current] == journeys[current].size();
      if (remaining > 0 && (done || uniform01(rng) < cfg.interleave_prob)) {
        do {
          current = (current + 1) % n_journeys;
        } while (cursor[current] == journeys[current].size());
      }
    }
    order.push_back(sampler.next(rng, order.back(), used));

    UserSequence seq;
    seq.user_id = padded("user_", u, id_width);
    for (std::size_t t = 0; t < order.size(); ++t)
      seq.interactions.push_back({catalog[order[t]].item_id, draw_behavior(rng, cfg.behavior_mix),
                                  static_cast<std::int64_t>(t)});
    out.push_back(std::move(seq));
  }
  return out;
}

DatasetStats dataset_stats(const std::vector<UserSequence>& sequences, std::size_t n_items) {
  DatasetStats s;
  s.n_users = sequences.size();
  s.n_items = n_items;
  std::array<std::size_t, kBehaviorCount> counts{};
  std::size_t total = 0;
  for (const auto& seq : sequences) {
    total += seq.interactions.size();
    for (const auto& x : seq.interactions) ++counts[static_cast<std::size_t>(x.behavior)];
  }
  if (s.n_users == 0) return s;
  s.avg_length = static_cast<double>(total) / static_cast<double>(s.n_users);
  for (std::size_t b = 0; b < kBehaviorCount; ++b) {
    s.avg_per_behavior[b] = static_cast<double>(counts[b]) / static_cast<double>(s.n_users);
    s.share[b] = total ? 100.0 * static_cast<double>(counts[b]) / static_cast<double>(total) : 0.0;
  }
  return s;
}

nlohmann::json DatasetStats::to_json() const {
  nlohmann::json j{{"n_users", n_users}, {"n_items", n_items}, {"avg_length", avg_length}};
  for (std::size_t b = 0; b < kBehaviorCount; ++b) {
    const std::string name(behavior_name(kAllBehaviors[b]));
    j["avg_" + name] = avg_per_behavior[b];
    j["share_" + name] = share[b];
  }
  return j;
}

std::string DatasetStats::to_text() const {
  std::string out = "#Item\t#User\tAvg.Len";
  for (auto b : kAllBehaviors) out += "\tAvg.#" + std::string(behavior_name(b));
  out += '\n';
  char buf[64];
  out += std::to_string(n_items) + "\t" + std::to_string(n_users);
  std::snprintf(buf, sizeof buf, "\t%.2f", avg_length);
  out += buf;
  for (std::size_t b = 0; b < kBehaviorCount; ++b) {
    std::snprintf(buf, sizeof buf, "\t%.2f (%.2f%%)", avg_per_behavior[b], share[b]);
    out += buf;
  }
  out += '\n';
  return out;
}

}  // namespace grace
