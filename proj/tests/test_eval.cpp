#include <doctest.h>

#include <cmath>
#include <numeric>

#include "grace/datagen.hpp"
#include "grace/eval.hpp"
#include "grace/random.hpp"

using namespace grace;

namespace {

UserSequence chain(const std::string& user, std::size_t n, Behavior last = Behavior::Click) {
  UserSequence s{user, {}};
  for (std::size_t i = 0; i < n; ++i)
    s.interactions.push_back({"i" + std::to_string(i), i + 1 == n ? last : Behavior::Click, static_cast<std::int64_t>(i)});
  return s;
}

SplitExample example(std::size_t target, Behavior b) {
  SplitExample e;
  e.history = chain("u", 2);
  e.target = {"i", b, 2};
  e.target_item = target;
  return e;
}

}  // namespace

TEST_CASE("leave-one-out") {
  auto three = leave_one_out(chain("u", 3));
  REQUIRE(three);
  CHECK(three->first.interactions.size() == 2);
  CHECK(three->second.item_id == "i2");
  auto sixty = leave_one_out(chain("u", 60), 50);
  REQUIRE(sixty);
  CHECK(sixty->first.interactions.size() == 50);
  CHECK(sixty->first.interactions.front().item_id == "i9");  // the 10th interaction
  CHECK(sixty->first.interactions.back().item_id == "i58");
  CHECK(sixty->second.item_id == "i59");
  CHECK_FALSE(leave_one_out(chain("u", 1)));
}

TEST_CASE("split counts excluded users") {
  std::vector<Item> items;
  for (int i = 0; i < 5; ++i) items.push_back({"i" + std::to_string(i), {1.0}, "p", "b", 1.0});
  const Catalog c(items);
  std::vector<UserSequence> seqs{chain("a", 4), chain("b", 1), chain("c", 2)};
  const Split s = split_dataset(seqs, c, 50);
  CHECK(s.examples.size() == 2);
  CHECK(s.excluded == 1);
  CHECK(s.examples[0].target_item == 3);
  CHECK(s.examples[1].target_item == 1);
}

TEST_CASE("hr and ndcg closed forms") {
  std::vector<std::size_t> ranked{4, 8, 15, 16, 23, 42, 7, 1, 2, 3};
  auto r1 = hr_ndcg_at_k(ranked, 4, 5);
  CHECK(r1.hr == 1.0);
  CHECK(r1.ndcg == 1.0);
  auto r3 = hr_ndcg_at_k(ranked, 15, 5);
  CHECK(r3.hr == 1.0);
  CHECK(r3.ndcg == 0.5);
  auto r7 = hr_ndcg_at_k(ranked, 7, 5);
  CHECK(r7.hr == 0.0);
  CHECK(r7.ndcg == 0.0);
  auto r7b = hr_ndcg_at_k(ranked, 7, 10);
  CHECK(r7b.hr == 1.0);
  CHECK(r7b.ndcg == doctest::Approx(1.0 / 3.0));
  CHECK(hr_ndcg_at_k(ranked, 99, 10).hr == 0.0);
}

TEST_CASE("metrics are monotone in K and ndcg never exceeds hr") {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 30);
    std::vector<std::size_t> ranked(n);
    std::iota(ranked.begin(), ranked.end(), 0);
    shuffle(ranked.begin(), ranked.end(), rng);
    const std::size_t target = uniform_index(rng, n + 3);
    const auto a = hr_ndcg_at_k(ranked, target, 5), b = hr_ndcg_at_k(ranked, target, 10);
    CHECK(a.hr <= b.hr);
    CHECK(a.ndcg <= b.ndcg);
    CHECK(a.ndcg <= a.hr);
    CHECK(b.ndcg <= b.hr);
    CHECK(a.ndcg >= 0.0);
  }
}

TEST_CASE("evaluate with a perfect ranker scores 100") {
  std::vector<SplitExample> users;
  for (std::size_t u = 0; u < 4; ++u) users.push_back(example(u, kAllBehaviors[u]));
  Ranker perfect = [](const SplitExample& ex, const Task&) {
    return std::vector<RankedPrediction>{{ex.target.behavior, ex.target_item, 0.0}, {Behavior::Click, 99, -1.0}};
  };
  EvalSettings s;
  for (auto kind : {TaskKind::TargetBehavior, TaskKind::BehaviorItem}) {
    s.task = kind;
    const auto r = evaluate(perfect, users, s);
    CHECK(r.overall.n_users == 4);
    CHECK(r.overall.hr.at(5) == 100.0);
    CHECK(r.overall.ndcg.at(5) == 100.0);
    CHECK(r.per_behavior.size() == 4);
  }
}

TEST_CASE("single user at rank 7") {
  std::vector<SplitExample> users{example(6, Behavior::Click)};
  Ranker r7 = [](const SplitExample&, const Task&) {
    std::vector<RankedPrediction> out;
    for (std::size_t i = 0; i < 10; ++i) out.push_back({Behavior::Click, i, -static_cast<double>(i)});
    return out;
  };
  const auto r = evaluate(r7, users, {});
  CHECK(r.overall.hr.at(5) == 0.0);
  CHECK(r.overall.hr.at(10) == 100.0);
  CHECK(r.overall.ndcg.at(10) == doctest::Approx(100.0 / 3.0));
  const auto j = r.to_json();
  CHECK(j["task"] == "target_behavior");
  CHECK(j["hr"]["10"] == 100.0);
  CHECK(j["n_users"] == 1);
  CHECK(j["per_behavior"]["click"]["n_users"] == 1);
}

TEST_CASE("task hit rules") {
  std::vector<SplitExample> users{example(3, Behavior::AddToCart), example(3, Behavior::RemoveFromCart)};
  Task seen;
  Ranker wrong_behavior = [&](const SplitExample& ex, const Task& t) {
    seen = t;
    return std::vector<RankedPrediction>{{Behavior::Click, 0, 0.0}, {Behavior::Like, ex.target_item, -1.0}};
  };
  EvalSettings s;
  s.task = TaskKind::BehaviorItem;
  auto r = evaluate(wrong_behavior, users, s);
  CHECK(r.overall.hr.at(10) == 0.0);

  s.task = TaskKind::TargetBehavior;
  r = evaluate(wrong_behavior, users, s);
  CHECK(r.overall.hr.at(10) == 100.0);
  CHECK(r.overall.ndcg.at(10) == doctest::Approx(100.0 / std::log2(3.0)));
  CHECK(seen.kind == TaskKind::TargetBehavior);
  CHECK(seen.allowed == std::vector<Behavior>{Behavior::RemoveFromCart});

  s.task = TaskKind::BehaviorSpecific;
  r = evaluate(wrong_behavior, users, s);
  CHECK(r.overall.n_users == 1);
  CHECK(r.skipped == 1);
  CHECK(seen.allowed == std::vector<Behavior>{Behavior::Click, Behavior::AddToCart});

  // repeated items under several behaviors count once in item ranking
  Ranker dup = [](const SplitExample& ex, const Task&) {
    return std::vector<RankedPrediction>{{Behavior::Click, 0, 0.0},
                                         {Behavior::AddToCart, 0, -1.0},
                                         {Behavior::Click, ex.target_item, -2.0}};
  };
  r = evaluate(dup, users, s);
  CHECK(r.overall.ndcg.at(5) == doctest::Approx(100.0 / std::log2(3.0)));

  CHECK_THROWS_AS(evaluate(dup, std::span<const SplitExample>{}, s), ValidationError);
}

TEST_CASE("random ranking hits near the analytic rate") {
  const std::size_t catalog = 1000, n_users = 4000;
  std::vector<SplitExample> users;
  Rng rng(2);
  for (std::size_t u = 0; u < n_users; ++u) users.push_back(example(uniform_index(rng, catalog), Behavior::Click));
  Ranker random = [&](const SplitExample&, const Task&) {
    std::vector<std::size_t> perm(catalog);
    std::iota(perm.begin(), perm.end(), 0);
    shuffle(perm.begin(), perm.end(), rng);
    std::vector<RankedPrediction> out;
    for (std::size_t i = 0; i < 10; ++i) out.push_back({Behavior::Click, perm[i], 0.0});
    return out;
  };
  const auto r = evaluate(random, users, {});
  const double p = 10.0 / catalog, sd = std::sqrt(p * (1 - p) / n_users);
  CHECK(std::abs(r.overall.hr.at(10) / 100.0 - p) < 4 * sd);
}

TEST_CASE("heatmap conserves the catalog") {
  GenConfig g;
  g.n_items = 200;
  g.n_product_types = 7;
  const Catalog c = gen_catalog(g);
  TokenizerConfig t;
  const Tokenization tok = build_tokenization(c, t);
  const Heatmap h = cooccurrence_heatmap(c, tok);
  CHECK(h.counts.rows() == 7);
  double total = 0;
  for (std::size_t r = 0; r < h.counts.rows(); ++r) {
    double row = 0;
    for (std::size_t col = 0; col < h.counts.cols(); ++col) row += h.counts(r, col);
    std::size_t expect = 0;
    for (const auto& it : c.items()) expect += it.product_type == h.product_types[r];
    CHECK(row == static_cast<double>(expect));
    total += row;
  }
  CHECK(total == 200.0);
  const std::string csv = h.to_csv();
  CHECK(csv.rfind("product_type,L1_0,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 8);
}
