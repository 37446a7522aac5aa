#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "grace/core.hpp"
#include "grace/io.hpp"

using namespace grace;

namespace {

UserSequence seq(std::vector<std::pair<std::string, Behavior>> xs) {
  UserSequence s{"u", {}};
  std::int64_t o = 0;
  for (auto& [id, b] : xs) s.interactions.push_back({id, b, o++});
  return s;
}

Item item(std::string id, std::string pt, std::string brand, double price) {
  return {std::move(id), {1.0, 0.0}, std::move(pt), std::move(brand), price};
}

std::string tmp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "grace_core_test";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace

TEST_CASE("behavior names round trip") {
  for (auto b : kAllBehaviors) CHECK(parse_behavior(behavior_name(b)) == b);
  CHECK(parse_behavior("add_to_cart") == Behavior::AddToCart);
  CHECK(parse_behavior("remove_from_cart") == Behavior::RemoveFromCart);
  CHECK_FALSE(parse_behavior("purchase"));
}

TEST_CASE("merge keeps the highest-priority behavior per item") {
  using B = Behavior;
  SUBCASE("click then atc on the same item keeps atc") {
    auto m = merge_behaviors(seq({{"a", B::Click}, {"b", B::Click}, {"a", B::AddToCart}}));
    REQUIRE(m.interactions.size() == 2);
    CHECK(m.interactions[0].item_id == "b");
    CHECK(m.interactions[1].item_id == "a");
    CHECK(m.interactions[1].behavior == B::AddToCart);
    CHECK(m.interactions[0].ordinal == 0);
    CHECK(m.interactions[1].ordinal == 1);
  }
  SUBCASE("atc then click keeps the earlier atc") {
    auto m = merge_behaviors(seq({{"a", B::AddToCart}, {"b", B::Click}, {"a", B::Click}}));
    REQUIRE(m.interactions.size() == 2);
    CHECK(m.interactions[0].item_id == "a");
    CHECK(m.interactions[0].behavior == B::AddToCart);
  }
  SUBCASE("like outranks click") {
    auto m = merge_behaviors(seq({{"a", B::Like}, {"a", B::Click}}));
    REQUIRE(m.interactions.size() == 1);
    CHECK(m.interactions[0].behavior == B::Like);
  }
  SUBCASE("remove passes through") {
    auto m = merge_behaviors(seq({{"a", B::AddToCart}, {"a", B::RemoveFromCart}, {"a", B::RemoveFromCart}}));
    CHECK(m.interactions.size() == 3);
  }
  SUBCASE("no duplicates is the identity") {
    auto s = seq({{"a", B::Click}, {"b", B::Like}, {"c", B::AddToCart}});
    CHECK(merge_behaviors(s) == s);
  }
}

TEST_CASE("truncate keeps the most recent interactions") {
  UserSequence s{"u", {}};
  for (int i = 0; i < 60; ++i) s.interactions.push_back({"i" + std::to_string(i), Behavior::Click, i});
  auto t = truncate_recent(s, 50);
  REQUIRE(t.interactions.size() == 50);
  CHECK(t.interactions.front().item_id == "i10");
  CHECK(t.interactions.back().item_id == "i59");
  CHECK(truncate_recent(s, 100) == s);
}

TEST_CASE("price bands are left closed") {
  const PriceBoundaries b{10, 20, 30, 40};
  CHECK(price_band(0.0, b) == 0);
  CHECK(price_band(9.99, b) == 0);
  CHECK(price_band(10.0, b) == 1);
  CHECK(price_band(39.99, b) == 3);
  CHECK(price_band(40.0, b) == 4);
  CHECK(price_band(1e9, b) == 4);
  CHECK_THROWS_AS(price_band(-1.0, b), ValidationError);
  CHECK_THROWS_AS(price_band(NAN, b), ValidationError);
  CHECK_THROWS_AS(price_band(5.0, PriceBoundaries{10, 10, 30, 40}), ValidationError);
}

TEST_CASE("price boundaries are interpolated percentiles") {
  std::vector<double> p{1, 2, 3, 4, 5, 6};  // positions (n-1)q = 1, 2, 3, 4
  auto b = price_boundaries_from_prices(p);
  CHECK(b[0] == doctest::Approx(2.0));
  CHECK(b[1] == doctest::Approx(3.0));
  CHECK(b[2] == doctest::Approx(4.0));
  CHECK(b[3] == doctest::Approx(5.0));
  std::vector<double> same(10, 7.0);
  auto s = price_boundaries_from_prices(same);
  for (std::size_t i = 1; i < s.size(); ++i) CHECK(s[i] > s[i - 1]);
}

TEST_CASE("pkg traversal yields product type, price band, brand") {
  const PriceBoundaries b{10, 20, 30, 40};
  auto path = pkg_traverse(item("x", "chair", "acme", 25.0), b);
  CHECK(path.attributes[0] == "chair");
  CHECK(path.attributes[1] == price_band_label(2));
  CHECK(path.attributes[2] == "acme");
  try {
    pkg_traverse(item("x", "", "acme", 25.0), b);
    FAIL("expected throw");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("hop 1") != std::string::npos);
  }
  CHECK_THROWS_AS(pkg_traverse(item("x", "chair", "", 25.0), b), ValidationError);
}

TEST_CASE("catalog rejects duplicates and ragged embeddings") {
  CHECK_THROWS_AS(Catalog({item("a", "p", "b", 1), item("a", "p", "b", 2)}), ValidationError);
  auto bad = item("b", "p", "b", 1);
  bad.embedding = {1.0};
  CHECK_THROWS_AS(Catalog({item("a", "p", "b", 1), bad}), ValidationError);
  Catalog c({item("a", "p", "b", 1), item("b", "p", "b", 2)});
  CHECK(c.index_of("b") == 1u);
  CHECK_FALSE(c.index_of("z"));
}

TEST_CASE("jsonl io round trips and reports line numbers") {
  Catalog c({item("a", "p", "b", 1.5), item("b", "q", "c", 2.5)});
  const auto cat_path = tmp_path("catalog.jsonl");
  io::write_catalog(cat_path, c);
  Catalog back = io::read_catalog(cat_path);
  REQUIRE(back.size() == 2);
  CHECK(back[1].product_type == "q");
  CHECK(back[1].price == 2.5);
  CHECK(back[0].embedding == c[0].embedding);

  std::vector<UserSequence> seqs{seq({{"a", Behavior::Click}, {"b", Behavior::Like}})};
  const auto int_path = tmp_path("interactions.jsonl");
  io::write_interactions(int_path, seqs);
  CHECK(io::read_interactions(int_path) == seqs);

  {
    std::ofstream out(int_path, std::ios::app);
    out << "{not json\n";
  }
  try {
    io::read_interactions(int_path);
    FAIL("expected throw");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }
}
