// SPDX-License-Identifier: Apache-2.0
#include "grace/tokenizer.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "grace/io.hpp"
#include "grace/random.hpp"

namespace grace {

namespace {

constexpr std::array<std::string_view, kTokenTypeCount> kTypeNames{
    "pad", "bos", "eos", "user", "behavior", "cot_hop1", "cot_hop2", "cot_hop3", "sem1", "sem2", "sem3"};

}  // namespace

std::string_view token_type_name(TokenType t) { return kTypeNames[static_cast<std::size_t>(t)]; }

bool is_cot(TokenType t) { return t == TokenType::CotHop1 || t == TokenType::CotHop2 || t == TokenType::CotHop3; }

bool is_semantic(TokenType t) { return t == TokenType::Sem1 || t == TokenType::Sem2 || t == TokenType::Sem3; }

std::size_t token_level(TokenType t) {
  if (is_cot(t)) return static_cast<std::size_t>(t) - static_cast<std::size_t>(TokenType::CotHop1);
  if (is_semantic(t)) return static_cast<std::size_t>(t) - static_cast<std::size_t>(TokenType::Sem1);
  throw ValidationError("token_level: not a CoT or semantic token type");
}

TokenType cot_type(std::size_t hop) {
  if (hop >= kCotHops) throw ValidationError("cot hop out of range");
  return static_cast<TokenType>(static_cast<std::size_t>(TokenType::CotHop1) + hop);
}

TokenType sem_type(std::size_t level) {
  if (level >= kSemanticLevels) throw ValidationError("semantic level out of range");
  return static_cast<TokenType>(static_cast<std::size_t>(TokenType::Sem1) + level);
}

// ------------------------------------------------------------------ Vocab

Vocab::Vocab(VocabSpec spec) : spec_(std::move(spec)) {
  if (spec_.user_buckets == 0) throw ValidationError("vocab: need at least one user bucket");
  const std::array<std::size_t, kTokenTypeCount> sizes{1,
                                                       1,
                                                       1,
                                                       spec_.user_buckets,
                                                       kBehaviorCount,
                                                       spec_.hop_values[0].size(),
                                                       spec_.hop_values[1].size(),
                                                       spec_.hop_values[2].size(),
                                                       spec_.sem_sizes[0],
                                                       spec_.sem_sizes[1],
                                                       spec_.sem_sizes[2]};
  std::size_t next = 0;
  for (std::size_t t = 0; t < kTokenTypeCount; ++t) {
    if (sizes[t] == 0)
      throw ValidationError("vocab: empty range for " + std::string(kTypeNames[t]));
    ranges_[t] = {static_cast<TokenId>(next), sizes[t]};
    next += sizes[t];
  }
  total_ = next;
  for (std::size_t h = 0; h < kCotHops; ++h) {
    for (std::size_t i = 0; i < spec_.hop_values[h].size(); ++i) {
      if (!hop_index_[h].emplace(spec_.hop_values[h][i], i).second)
        throw ValidationError("vocab: duplicate attribute '" + spec_.hop_values[h][i] + "'");
    }
  }
}

TokenId Vocab::encode(TokenType t, std::size_t value) const {
  const auto& r = range(t);
  if (value >= r.size)
    throw ValidationError("vocab: value " + std::to_string(value) + " out of range for " +
                          std::string(token_type_name(t)));
  return static_cast<TokenId>(r.start + value);
}

std::pair<TokenType, std::size_t> Vocab::decode(TokenId id) const {
  for (std::size_t t = 0; t < kTokenTypeCount; ++t) {
    const auto& r = ranges_[t];
    if (id >= r.start && id < r.start + r.size) return {static_cast<TokenType>(t), id - r.start};
  }
  throw ValidationError("vocab: token id " + std::to_string(id) + " out of range");
}

TokenId Vocab::user_token(const std::string& user_id) const {
  return encode(TokenType::User, fnv1a(user_id) % spec_.user_buckets);
}

std::optional<TokenId> Vocab::cot_token(std::size_t hop, const std::string& attribute) const {
  auto it = hop_index_.at(hop).find(attribute);
  if (it == hop_index_[hop].end()) return std::nullopt;
  return encode(cot_type(hop), it->second);
}

nlohmann::json Vocab::manifest(std::uint64_t seed) const {
  nlohmann::json ranges = nlohmann::json::object();
  nlohmann::json sizes = nlohmann::json::object();
  for (std::size_t t = 0; t < kTokenTypeCount; ++t) {
    ranges[std::string(kTypeNames[t])] = {ranges_[t].start, ranges_[t].size};
    sizes[std::string(kTypeNames[t])] = ranges_[t].size;
  }
  return {{"version", 1},
          {"seed", seed},
          {"total_size", total_},
          {"ranges", ranges},
          {"sizes", sizes},
          {"user_buckets", spec_.user_buckets},
          {"product_types", spec_.hop_values[0]},
          {"price_bands", spec_.hop_values[1]},
          {"brands", spec_.hop_values[2]},
          {"semantic_sizes", spec_.sem_sizes}};
}

Vocab Vocab::from_manifest(const nlohmann::json& j) {
  if (j.value("version", 0) != 1) throw ValidationError("vocab manifest: unsupported version");
  VocabSpec spec;
  spec.user_buckets = j.at("user_buckets").get<std::size_t>();
  spec.hop_values[0] = j.at("product_types").get<std::vector<std::string>>();
  spec.hop_values[1] = j.at("price_bands").get<std::vector<std::string>>();
  spec.hop_values[2] = j.at("brands").get<std::vector<std::string>>();
  spec.sem_sizes = j.at("semantic_sizes").get<std::array<std::size_t, kSemanticLevels>>();
  Vocab v(std::move(spec));
  if (v.total_size() != j.at("total_size").get<std::size_t>())
    throw ValidationError("vocab manifest: total_size disagrees with ranges");
  return v;
}

// ---------------------------------------------------------- semantic ids

Matrix embedding_matrix(const Catalog& catalog) {
  Matrix m(catalog.size(), catalog.embedding_dim());
  for (std::size_t i = 0; i < catalog.size(); ++i)
    std::copy(catalog[i].embedding.begin(), catalog[i].embedding.end(), m.row(i).begin());
  return m;
}

Codebooks fit_codebooks(const Matrix& embeddings, std::size_t k, std::uint64_t seed) {
  if (embeddings.rows() == 0) throw ValidationError("fit_codebooks: empty catalog");
  Codebooks cb;
  cb.codebook_size = k;
  const KMeansResult top = kmeans(embeddings, k, seed);
  cb.level1 = top.centroids;
  cb.level2.resize(cb.level1.rows());
  for (std::size_t c = 0; c < cb.level1.rows(); ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < embeddings.rows(); ++i)
      if (top.assignment[i] == c) members.push_back(i);
    if (members.empty()) {
      cb.level2[c] = Matrix(1, embeddings.cols());
      continue;
    }
    Matrix residual = gather_rows(embeddings, members);
    for (std::size_t r = 0; r < residual.rows(); ++r)
      for (std::size_t j = 0; j < residual.cols(); ++j) residual(r, j) -= cb.level1(c, j);
    cb.level2[c] = kmeans(residual, k, seed + 1 + c).centroids;
  }
  return cb;
}

std::vector<SemanticId> assign_semantic_ids(const Codebooks& cb, const Matrix& embeddings, std::uint64_t seed) {
  const std::size_t n = embeddings.rows();
  std::vector<SemanticId> ids(n);
  std::vector<double> residual(embeddings.cols());
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = embeddings.row(i);
    const std::size_t c1 = nearest_centroid(cb.level1, row);
    for (std::size_t j = 0; j < residual.size(); ++j) residual[j] = row[j] - cb.level1(c1, j);
    const std::size_t c2 = nearest_centroid(cb.level2[c1], residual);
    ids[i].levels = {static_cast<std::uint32_t>(c1), static_cast<std::uint32_t>(c2), 0};
    buckets[{ids[i].levels[0], ids[i].levels[1]}].push_back(i);
  }
  Rng rng(seed);
  for (auto& [key, members] : buckets) {
    if (members.size() < 2) continue;
    std::vector<std::uint32_t> codes(members.size());
    for (std::size_t j = 0; j < codes.size(); ++j) codes[j] = static_cast<std::uint32_t>(j);
    shuffle(codes.begin(), codes.end(), rng);
    for (std::size_t j = 0; j < members.size(); ++j) ids[members[j]].levels[2] = codes[j];
  }
  return ids;
}

// ------------------------------------------------------- tokenization

std::array<TokenId, kTokensPerInteraction> Tokenization::path(Behavior b, std::size_t item) const {
  std::array<TokenId, kTokensPerInteraction> p{};
  p[0] = vocab.behavior_token(b);
  std::copy(item_tokens.at(item).begin(), item_tokens.at(item).end(), p.begin() + 1);
  return p;
}

namespace {

std::vector<std::string> sorted_distinct(const Catalog& catalog, std::string Item::*field) {
  std::set<std::string> values;
  for (const auto& it : catalog.items())
    if (!(it.*field).empty()) values.insert(it.*field);
  return {values.begin(), values.end()};
}

void fill_item_tokens(Tokenization& tok, const Catalog& catalog) {
  tok.cot_paths.clear();
  tok.item_tokens.clear();
  std::set<SemanticId> seen;
  tok.collisions = 0;
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    CoTPath path = pkg_traverse(catalog[i], tok.price_boundaries);
    ItemTokens t{};
    for (std::size_t h = 0; h < kCotHops; ++h) {
      const auto id = tok.vocab.cot_token(h, path.attributes[h]);
      if (!id) throw ValidationError("item " + catalog[i].item_id + ": attribute '" + path.attributes[h] +
                                     "' is not in the vocabulary");
      t[h] = *id;
    }
    const SemanticId& sid = tok.semantic_ids.at(i);
    for (std::size_t l = 0; l < kSemanticLevels; ++l) t[kCotHops + l] = tok.vocab.encode(sem_type(l), sid.levels[l]);
    if (!seen.insert(sid).second) ++tok.collisions;
    tok.cot_paths.push_back(std::move(path));
    tok.item_tokens.push_back(t);
  }
}

}  // namespace

Tokenization build_tokenization(const Catalog& catalog, const TokenizerConfig& cfg) {
  if (catalog.size() == 0) throw ValidationError("tokenizer: empty catalog");
  Tokenization tok;
  tok.seed = cfg.seed;
  tok.price_boundaries = cfg.price_boundaries ? *cfg.price_boundaries : price_boundaries_from_catalog(catalog);

  const Matrix emb = embedding_matrix(catalog);
  const Codebooks cb = fit_codebooks(emb, cfg.codebook_size, cfg.seed);
  tok.semantic_ids = assign_semantic_ids(cb, emb, cfg.seed + 7919);

  VocabSpec spec;
  spec.user_buckets = cfg.user_buckets;
  spec.hop_values[0] = sorted_distinct(catalog, &Item::product_type);
  for (std::size_t b = 0; b < kPriceBands; ++b) spec.hop_values[1].push_back(price_band_label(b));
  spec.hop_values[2] = sorted_distinct(catalog, &Item::brand);
  std::uint32_t max_l3 = 0;
  for (const auto& s : tok.semantic_ids) max_l3 = std::max(max_l3, s.levels[2]);
  spec.sem_sizes = {cfg.codebook_size, cfg.codebook_size, static_cast<std::size_t>(max_l3) + 1};
  tok.vocab = Vocab(std::move(spec));
  fill_item_tokens(tok, catalog);
  return tok;
}

Tokenization restore_tokenization(const Catalog& catalog, const Vocab& vocab, const PriceBoundaries& boundaries,
                                  std::vector<SemanticId> semantic_ids, std::uint64_t seed) {
  if (semantic_ids.size() != catalog.size()) throw ValidationError("semantic ids do not cover the catalog");
  Tokenization tok;
  tok.vocab = vocab;
  tok.price_boundaries = boundaries;
  tok.semantic_ids = std::move(semantic_ids);
  tok.seed = seed;
  fill_item_tokens(tok, catalog);
  return tok;
}

TokenizedSequence tokenize(const UserSequence& seq, const Catalog& catalog, const Tokenization& tok) {
  TokenizedSequence out;
  out.tokens.reserve(1 + kTokensPerInteraction * seq.interactions.size());
  out.tokens.push_back(tok.vocab.user_token(seq.user_id));
  out.types.push_back(TokenType::User);
  for (const auto& x : seq.interactions) {
    const auto idx = catalog.index_of(x.item_id);
    if (!idx)
      throw ValidationError("tokenize: unknown item '" + x.item_id + "' at ordinal " + std::to_string(x.ordinal));
    if (static_cast<std::size_t>(x.behavior) >= kBehaviorCount)
      throw ValidationError("tokenize: unknown behavior at ordinal " + std::to_string(x.ordinal));
    InteractionSpan span;
    span.behavior_pos = out.tokens.size();
    out.tokens.push_back(tok.vocab.behavior_token(x.behavior));
    out.types.push_back(TokenType::Behavior);
    const ItemTokens& it = tok.item_tokens[*idx];
    for (std::size_t h = 0; h < kCotHops; ++h) {
      span.cot_positions[h] = out.tokens.size();
      out.tokens.push_back(it[h]);
      out.types.push_back(cot_type(h));
    }
    for (std::size_t l = 0; l < kSemanticLevels; ++l) {
      span.sem_positions[l] = out.tokens.size();
      out.tokens.push_back(it[kCotHops + l]);
      out.types.push_back(sem_type(l));
    }
    out.spans.push_back(span);
  }
  out.degenerate = seq.interactions.empty();
  return out;
}

std::vector<std::pair<Behavior, std::size_t>> detokenize(const TokenizedSequence& seq, const Vocab& vocab,
                                                        const TokenTrie& trie) {
  std::vector<std::pair<Behavior, std::size_t>> out;
  for (const auto& span : seq.spans) {
    std::array<TokenId, kTokensPerInteraction> path{};
    path[0] = seq.tokens[span.behavior_pos];
    for (std::size_t h = 0; h < kCotHops; ++h) path[1 + h] = seq.tokens[span.cot_positions[h]];
    for (std::size_t l = 0; l < kSemanticLevels; ++l) path[1 + kCotHops + l] = seq.tokens[span.sem_positions[l]];
    const auto node = trie.walk(path);
    const auto item = node ? trie.leaf_item(*node) : std::nullopt;
    if (!item) throw ValidationError("detokenize: token path is not in the catalog trie");
    const auto [type, value] = vocab.decode(path[0]);
    if (type != TokenType::Behavior) throw ValidationError("detokenize: span does not start with a behavior token");
    out.emplace_back(kAllBehaviors.at(value), *item);
  }
  return out;
}

// ----------------------------------------------------------------- trie

TokenTrie TokenTrie::build(const Tokenization& tok, std::size_t catalog_size) {
  if (tok.item_tokens.size() != catalog_size) throw ValidationError("trie: tokenization does not cover catalog");
  TokenTrie trie;
  trie.nodes_.emplace_back();
  for (Behavior b : kAllBehaviors) {
    for (std::size_t item = 0; item < catalog_size; ++item) {
      NodeId cur = 0;
      for (TokenId t : tok.path(b, item)) {
        auto& edges = trie.nodes_[cur].edges;
        auto it = std::lower_bound(edges.begin(), edges.end(), t,
                                   [](const Edge& e, TokenId v) { return e.token < v; });
        if (it != edges.end() && it->token == t) {
          cur = it->child;
        } else {
          const auto id = static_cast<NodeId>(trie.nodes_.size());
          edges.insert(it, Edge{t, id});
          trie.nodes_.emplace_back();
          cur = id;
        }
      }
      if (trie.nodes_[cur].item)
        throw ValidationError("trie: duplicate token path for items " + std::to_string(*trie.nodes_[cur].item) +
                              " and " + std::to_string(item));
      trie.nodes_[cur].item = item;
      ++trie.leaves_;
    }
  }
  return trie;
}

std::span<const TokenTrie::Edge> TokenTrie::children(NodeId n) const { return nodes_.at(n).edges; }

std::optional<TokenTrie::NodeId> TokenTrie::child(NodeId n, TokenId t) const {
  const auto& edges = nodes_.at(n).edges;
  auto it = std::lower_bound(edges.begin(), edges.end(), t, [](const Edge& e, TokenId v) { return e.token < v; });
  if (it == edges.end() || it->token != t) return std::nullopt;
  return it->child;
}

std::optional<TokenTrie::NodeId> TokenTrie::walk(std::span<const TokenId> prefix) const {
  NodeId cur = root();
  for (TokenId t : prefix) {
    const auto next = child(cur, t);
    if (!next) return std::nullopt;
    cur = *next;
  }
  return cur;
}

std::vector<TokenId> TokenTrie::allowed_next(std::span<const TokenId> prefix) const {
  std::vector<TokenId> out;
  if (const auto n = walk(prefix))
    for (const auto& e : children(*n)) out.push_back(e.token);
  return out;
}

std::optional<std::size_t> TokenTrie::leaf_item(NodeId n) const { return nodes_.at(n).item; }

// ---------------------------------------------------------- persistence

nlohmann::json semantic_id_record(const std::string& item_id, const SemanticId& sid) {
  return {{"item_id", item_id}, {"st1", sid.levels[0]}, {"st2", sid.levels[1]}, {"st3", sid.levels[2]}};
}

std::vector<SemanticId> read_semantic_ids(const std::string& path, const Catalog& catalog) {
  std::vector<std::optional<SemanticId>> slots(catalog.size());
  io::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t) {
    const auto id = j.at("item_id").get<std::string>();
    const auto idx = catalog.index_of(id);
    if (!idx) throw ValidationError("semantic id for unknown item " + id);
    slots[*idx] = SemanticId{{j.at("st1").get<std::uint32_t>(), j.at("st2").get<std::uint32_t>(),
                              j.at("st3").get<std::uint32_t>()}};
  });
  std::vector<SemanticId> out;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (!slots[i]) throw ValidationError(path + ": missing semantic id for " + catalog[i].item_id);
    out.push_back(*slots[i]);
  }
  return out;
}

void write_semantic_ids(const std::string& path, const Catalog& catalog, const std::vector<SemanticId>& ids) {
  std::vector<nlohmann::json> recs;
  for (std::size_t i = 0; i < catalog.size(); ++i) recs.push_back(semantic_id_record(catalog[i].item_id, ids.at(i)));
  io::write_jsonl(path, recs);
}

}  // namespace grace
