// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "grace/layers.hpp"
#include "grace/tokenizer.hpp"

namespace grace {

/// Journey-aware sparse attention: four branches over one set of Q/K/V,
/// mixed per token by sigmoid gates.
enum class Branch : std::size_t { Compression = 0, Intra = 1, Inter = 2, Current = 3 };
inline constexpr std::size_t kBranchCount = 4;
std::string_view branch_name(Branch b);

struct JsaConfig {
  std::size_t block_len = 15;  // l
  std::size_t stride = 15;     // d <= l
  std::size_t top_n = 3;       // N
  std::size_t kept_cot = 1;    // M_g
  std::size_t kept_sem = 1;    // M_s
  std::size_t window = 10;     // w
  std::size_t heads = 2;
  std::size_t head_dim = 32;
  // A set entry pins that branch's gate to a constant (0 disables the branch).
  std::array<std::optional<double>, kBranchCount> gate_override{};

  void validate() const;
  std::size_t inner_dim() const { return heads * head_dim; }
};

struct BlockSpan {
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive
  friend bool operator==(const BlockSpan&, const BlockSpan&) = default;
};

/// floor((L - l) / d) + 1 blocks of length l when L >= l, else one block [0, L).
std::vector<BlockSpan> segment_blocks(std::size_t seq_len, std::size_t block_len, std::size_t stride);

struct JsaParams {
  Linear q, k, v;
  // Flattened block (block_len * head_dim) -> 2 * head_dim -> head_dim, shared by heads.
  FeedForward compress_k;
  FeedForward compress_v;
  Linear gate;  // model_dim -> 4
  Linear out;   // heads * head_dim -> model_dim
};

JsaParams make_jsa_params(const std::string& name, std::size_t model_dim, const JsaConfig& cfg, Rng& rng);
void collect(JsaParams& p, ParamRefs& out);

// ---------------------------------------------------------------- branches
// Single-head views: q, k, v are (L x head_dim).

struct CompressedBlocks {
  Matrix flat;  // blocks x (block_len * width), zero padded
  FeedForwardCache cache;
  Matrix compressed;  // blocks x width
};

CompressedBlocks compress_blocks(const FeedForward& mlp, const Matrix& x, std::span<const BlockSpan> spans,
                                 std::size_t block_len);

struct CompressionResult {
  Matrix output;
  CompressedBlocks keys;
  CompressedBlocks values;
  AttentionCache attn;
};

CompressionResult compress_branch(const Matrix& q, const Matrix& k, const Matrix& v, const FeedForward& compress_k,
                                  const FeedForward& compress_v, std::span<const BlockSpan> spans,
                                  std::size_t block_len, double scale);

/// pi = softmax over blocks of sum_i scale * q_i . k~_b (one ranking per head).
std::vector<double> block_importance(const Matrix& q, const Matrix& compressed_keys, double scale);
/// Indices of the top-N entries of pi, ties to the lower index, returned ascending.
std::vector<std::size_t> top_n_blocks(std::span<const double> pi, std::size_t n);
/// Key positions for the selected blocks, spans concatenated in ascending block order.
std::vector<std::size_t> selected_positions(std::span<const BlockSpan> spans, std::span<const std::size_t> blocks);

struct SelectionResult {
  Matrix output;
  std::vector<std::size_t> selected_blocks;
  std::vector<double> pi;
  std::vector<std::size_t> positions;
  AttentionCache attn;
};

SelectionResult select_branch(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix& compressed_keys,
                              std::size_t top_n, std::span<const BlockSpan> spans, double scale,
                              RoutingTrace* trace = nullptr);

/// First M_g CoT and first M_s semantic positions of every interaction.
std::vector<std::size_t> inter_positions(std::span<const TokenType> types, std::size_t kept_cot, std::size_t kept_sem);
std::vector<std::size_t> window_positions(std::size_t seq_len, std::size_t window);

/// Attention restricted to the key/value rows listed in `positions`.
Matrix subset_attention(const Matrix& q, const Matrix& k, const Matrix& v, std::span<const std::size_t> positions,
                        double scale, AttentionCache* cache = nullptr);
void subset_attention_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                               std::span<const std::size_t> positions, double scale, const AttentionCache& cache,
                               const Matrix& dout, Matrix& dq, Matrix& dk, Matrix& dv);

Matrix inter_branch(const Matrix& q, const Matrix& k, const Matrix& v, std::span<const TokenType> types,
                    std::size_t kept_cot, std::size_t kept_sem, double scale);
Matrix window_branch(const Matrix& q, const Matrix& k, const Matrix& v, std::size_t window, double scale);

/// out_t = sum_j gates(t, j) * branch_j(t, :).
Matrix gated_combine(const std::array<Matrix, kBranchCount>& branches, const Matrix& gates);

// ------------------------------------------------------------------ layer

struct JsaHeadState {
  Matrix q, k, v;
  std::vector<BlockSpan> spans;
  CompressionResult comp;
  SelectionResult intra;
  std::vector<std::size_t> inter_pos;
  AttentionCache inter_attn;
  std::vector<std::size_t> window_pos;
  AttentionCache window_attn;
  std::array<Matrix, kBranchCount> branch;
};

struct JsaCache {
  Matrix x;
  Matrix q, k, v;   // L x inner
  Matrix gate_pre;  // L x 4
  Matrix gates;     // L x 4 (after sigmoid / overrides)
  std::vector<JsaHeadState> heads;
  Matrix concat;
};

/// x is (L x model_dim), types has length L. Output (L x model_dim).
Matrix jsa_forward(const JsaParams& p, const JsaConfig& cfg, const Matrix& x, std::span<const TokenType> types,
                   JsaCache* cache = nullptr, RoutingTrace* trace = nullptr);
/// Block selection is treated as a constant.
Matrix jsa_backward(JsaParams& p, const JsaConfig& cfg, const JsaCache& cache, const Matrix& dy);

/// {gate_means:[4], selected_blocks:[[...] per head], pi:[[...] per head]}
nlohmann::json jsa_introspection(const JsaCache& cache);

}  // namespace grace
