// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "grace/core.hpp"
#include "grace/kmeans.hpp"

namespace grace {

using TokenId = std::uint32_t;

enum class TokenType : std::uint8_t {
  Pad,
  Bos,
  Eos,
  User,
  Behavior,
  CotHop1,
  CotHop2,
  CotHop3,
  Sem1,
  Sem2,
  Sem3,
};

inline constexpr std::size_t kTokenTypeCount = 11;
inline constexpr std::size_t kSemanticLevels = 3;
/// Tokens emitted per interaction: behavior, three CoT hops, three semantic levels.
inline constexpr std::size_t kTokensPerInteraction = 1 + kCotHops + kSemanticLevels;

std::string_view token_type_name(TokenType t);
bool is_cot(TokenType t);
bool is_semantic(TokenType t);
// 0-based hop / level index for CoT and semantic tokens.
std::size_t token_level(TokenType t);
TokenType cot_type(std::size_t hop);
TokenType sem_type(std::size_t level);

struct TokenRange {
  TokenId start = 0;
  std::size_t size = 0;
};

struct VocabSpec {
  std::size_t user_buckets = 1;
  std::array<std::vector<std::string>, kCotHops> hop_values;
  std::array<std::size_t, kSemanticLevels> sem_sizes{64, 64, 1};
};

/// Disjoint, contiguous typed id ranges laid out in TokenType order.
class Vocab {
 public:
  Vocab() = default;
  explicit Vocab(VocabSpec spec);

  std::size_t total_size() const { return total_; }
  const TokenRange& range(TokenType t) const { return ranges_[static_cast<std::size_t>(t)]; }
  const VocabSpec& spec() const { return spec_; }

  TokenId encode(TokenType t, std::size_t value) const;
  std::pair<TokenType, std::size_t> decode(TokenId id) const;
  TokenType type_of(TokenId id) const { return decode(id).first; }

  TokenId pad() const { return encode(TokenType::Pad, 0); }
  TokenId bos() const { return encode(TokenType::Bos, 0); }
  TokenId eos() const { return encode(TokenType::Eos, 0); }
  TokenId behavior_token(Behavior b) const { return encode(TokenType::Behavior, static_cast<std::size_t>(b)); }
  TokenId user_token(const std::string& user_id) const;
  /// Token for a CoT attribute at `hop`; nullopt when the attribute is unknown.
  std::optional<TokenId> cot_token(std::size_t hop, const std::string& attribute) const;

  nlohmann::json manifest(std::uint64_t seed) const;
  static Vocab from_manifest(const nlohmann::json& j);

 private:
  VocabSpec spec_;
  std::array<TokenRange, kTokenTypeCount> ranges_{};
  std::array<std::unordered_map<std::string, std::size_t>, kCotHops> hop_index_;
  std::size_t total_ = 0;
};

// -------------------------------------------------------- semantic ids

struct SemanticId {
  std::array<std::uint32_t, kSemanticLevels> levels{};
  friend bool operator==(const SemanticId&, const SemanticId&) = default;
  friend auto operator<=>(const SemanticId&, const SemanticId&) = default;
};

struct Codebooks {
  std::size_t codebook_size = 64;
  Matrix level1;               // k1 x dim
  std::vector<Matrix> level2;  // per level-1 code, k2(c) x dim over residuals
};

/// Level 1: k-means over embeddings. Level 2: per level-1 cluster, k-means
/// over residuals (shrunk to the cluster's distinct-point count).
Codebooks fit_codebooks(const Matrix& embeddings, std::size_t k, std::uint64_t seed);

/// st1/st2 from nearest centroids; st3 is a seeded random permutation inside
/// each colliding (st1, st2) bucket, 0 for singleton buckets.
std::vector<SemanticId> assign_semantic_ids(const Codebooks& codebooks, const Matrix& embeddings,
                                            std::uint64_t seed);

Matrix embedding_matrix(const Catalog& catalog);

// ------------------------------------------------- catalog tokenization

/// Per-item CoT + semantic tokens in emission order [C1 C2 C3 S1 S2 S3].
using ItemTokens = std::array<TokenId, kCotHops + kSemanticLevels>;

struct TokenizerConfig {
  std::size_t codebook_size = 64;
  std::size_t user_buckets = 1;
  std::uint64_t seed = 0;
  std::optional<PriceBoundaries> price_boundaries;
};

/// Everything derived from the catalog that tokenization and decoding need.
struct Tokenization {
  Vocab vocab;
  PriceBoundaries price_boundaries{};
  std::vector<SemanticId> semantic_ids;  // parallel to catalog
  std::vector<CoTPath> cot_paths;        // parallel to catalog
  std::vector<ItemTokens> item_tokens;   // parallel to catalog
  std::size_t collisions = 0;            // duplicate full triples (0 when healthy)
  std::uint64_t seed = 0;

  std::array<TokenId, kTokensPerInteraction> path(Behavior b, std::size_t item) const;
};

Tokenization build_tokenization(const Catalog& catalog, const TokenizerConfig& cfg);
/// Rebuilds from persisted artifacts (vocab manifest + semantic ids).
Tokenization restore_tokenization(const Catalog& catalog, const Vocab& vocab, const PriceBoundaries& boundaries,
                                  std::vector<SemanticId> semantic_ids, std::uint64_t seed);

struct InteractionSpan {
  std::size_t behavior_pos = 0;
  std::array<std::size_t, kCotHops> cot_positions{};
  std::array<std::size_t, kSemanticLevels> sem_positions{};
};

struct TokenizedSequence {
  std::vector<TokenId> tokens;
  std::vector<TokenType> types;
  std::vector<InteractionSpan> spans;
  bool degenerate = false;  // no interactions, only the user token
};

/// Layout: [USER] then per interaction [BEH, C1, C2, C3, S1, S2, S3].
TokenizedSequence tokenize(const UserSequence& seq, const Catalog& catalog, const Tokenization& tok);

/// Maps a tokenized sequence back to (behavior, catalog index) pairs.
class TokenTrie;
std::vector<std::pair<Behavior, std::size_t>> detokenize(const TokenizedSequence& seq, const Vocab& vocab,
                                                        const TokenTrie& trie);

// ---------------------------------------------------------------- trie

/// Behavior -> CoT hops -> semantic levels -> item leaf.
class TokenTrie {
 public:
  using NodeId = std::uint32_t;
  struct Edge {
    TokenId token;
    NodeId child;
  };

  TokenTrie() = default;

  static TokenTrie build(const Tokenization& tok, std::size_t catalog_size);

  NodeId root() const { return 0; }
  std::span<const Edge> children(NodeId n) const;
  std::optional<NodeId> child(NodeId n, TokenId t) const;
  std::optional<NodeId> walk(std::span<const TokenId> prefix) const;
  std::vector<TokenId> allowed_next(std::span<const TokenId> prefix) const;
  std::optional<std::size_t> leaf_item(NodeId n) const;
  std::size_t leaf_count() const { return leaves_; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<Edge> edges;  // sorted by token
    std::optional<std::size_t> item;
  };
  std::vector<Node> nodes_;
  std::size_t leaves_ = 0;
};

// ------------------------------------------------------------ persistence

nlohmann::json semantic_id_record(const std::string& item_id, const SemanticId& sid);
/// Reads a semantic-id dump and orders it by catalog index.
std::vector<SemanticId> read_semantic_ids(const std::string& path, const Catalog& catalog);
void write_semantic_ids(const std::string& path, const Catalog& catalog, const std::vector<SemanticId>& ids);

}  // namespace grace
