#include <doctest.h>

#include "grace/datagen.hpp"
#include "oracles.hpp"

using namespace grace;

namespace {

struct Setup {
  Catalog catalog;
  Tokenization tok;
  TokenTrie trie;
  std::optional<Model> model;

  Setup(std::uint64_t seed, std::size_t n_items) {
    GenConfig g;
    g.seed = seed;
    g.n_items = n_items;
    g.n_product_types = 4;
    g.n_brands = 3;
    g.embedding_dim = 6;
    g.embedding_noise = 0.3;
    catalog = gen_catalog(g);
    TokenizerConfig t;
    t.codebook_size = 4;
    t.seed = seed;
    tok = build_tokenization(catalog, t);
    trie = TokenTrie::build(tok, catalog.size());
    ModelConfig mc;
    mc.layers_enc = 1;
    mc.layers_dec = 1;
    mc.model_dim = 16;
    mc.ffn_width = 16;
    mc.head_dim = 8;
    mc.experts = 2;
    model.emplace(mc, tok.vocab.total_size(), seed);
    // larger head weights spread the scores so rankings are not near-ties
    Rng rng(seed);
    init_normal(model->params().head.weight, rng, 0.5);
  }

  DecoderMemory memory(std::size_t n_hist, std::uint64_t salt) const {
    UserSequence s{"user", {}};
    for (std::size_t i = 0; i < n_hist; ++i)
      s.interactions.push_back(
          {catalog[(i * 5 + salt) % catalog.size()].item_id, kAllBehaviors[(i + salt) % 4], static_cast<std::int64_t>(i)});
    const auto seq = tokenize(s, catalog, tok);
    return make_decoder_memory(*model, encode(*model, seq).states);
  }
};

void check_same(const std::vector<RankedPrediction>& a, const std::vector<RankedPrediction>& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].behavior == b[i].behavior);
    CHECK(a[i].item == b[i].item);
    CHECK(a[i].score == b[i].score);
  }
}

}  // namespace

TEST_CASE("wide beam search equals exhaustive enumeration") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    Setup s(seed, 8 + 12 * seed);  // up to 32 items
    const std::size_t wide = kBehaviorCount * s.catalog.size();
    for (std::uint64_t user = 0; user < 3; ++user) {
      const DecoderMemory mem = s.memory(2 + user, user);
      std::vector<Task> tasks{Task::behavior_item(), Task::behavior_specific({Behavior::Click, Behavior::AddToCart})};
      for (auto b : kAllBehaviors) tasks.push_back(Task::target_behavior(b));
      for (const auto& task : tasks) {
        const auto beam = beam_search(*s.model, mem, s.tok, s.trie, task, wide);
        CHECK(beam.diagnostic.empty());
        check_same(beam.predictions, oracle::exhaustive_ranking(*s.model, mem, s.tok, s.trie, task, s.catalog.size()));
      }
    }
  }
}

TEST_CASE("narrow beams return legal, sorted, exactly scored paths") {
  Setup s(4, 30);
  const DecoderMemory mem = s.memory(4, 1);
  for (std::size_t n_beam : {1u, 3u, 10u}) {
    const auto r = beam_search(*s.model, mem, s.tok, s.trie, Task::target_behavior(Behavior::Like), n_beam);
    CHECK(r.predictions.size() == n_beam);
    for (std::size_t i = 0; i < r.predictions.size(); ++i) {
      const auto& p = r.predictions[i];
      CHECK(p.behavior == Behavior::Like);
      CHECK(p.item < s.catalog.size());
      CHECK(p.score == score_pair(*s.model, mem, s.tok, s.trie, p.behavior, p.item));
      if (i > 0) CHECK(r.predictions[i - 1].score >= p.score);
    }
  }
}

TEST_CASE("path log-probs sum to the pair score") {
  Setup s(5, 16);
  const DecoderMemory mem = s.memory(3, 2);
  for (std::size_t item = 0; item < 16; ++item) {
    const auto lp = path_logprobs(*s.model, mem, s.tok, Behavior::AddToCart, item);
    double total = 0;
    for (double x : lp) {
      CHECK(x <= 0.0);
      total += x;
    }
    CHECK(total == score_pair(*s.model, mem, s.tok, s.trie, Behavior::AddToCart, item));
  }
  CHECK_THROWS_AS(score_pair(*s.model, mem, s.tok, s.trie, Behavior::Click, 16), ValidationError);
}

TEST_CASE("task constraints") {
  CHECK_THROWS_AS(Task::behavior_specific({}), ValidationError);
  const Task t = Task::behavior_specific({Behavior::Click, Behavior::Like});
  CHECK(t.permits(Behavior::Like));
  CHECK_FALSE(t.permits(Behavior::RemoveFromCart));
  CHECK(Task::behavior_item().permits(Behavior::RemoveFromCart));
  for (auto k : {TaskKind::TargetBehavior, TaskKind::BehaviorSpecific, TaskKind::BehaviorItem})
    CHECK(parse_task(task_name(k)) == k);
  CHECK_FALSE(parse_task("nope"));
  Setup s(6, 10);
  const auto r = beam_search(*s.model, s.memory(2, 0), s.tok, s.trie, t, 100);
  CHECK(r.predictions.size() == 20);
  for (const auto& p : r.predictions) CHECK(t.permits(p.behavior));
}
