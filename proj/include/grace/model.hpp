// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <span>
#include <vector>

#include "grace/jsa.hpp"
#include "grace/layers.hpp"
#include "grace/tokenizer.hpp"

namespace grace {

/// Decoder input is [BOS] + behavior/CoT/semantic path; labels are the path + EOS.
inline constexpr std::size_t kDecoderLen = 1 + kTokensPerInteraction;

struct ModelConfig {
  std::size_t layers_enc = 2;
  std::size_t layers_dec = 2;
  std::size_t model_dim = 64;
  std::size_t ffn_width = 128;
  std::size_t heads = 2;
  std::size_t head_dim = 32;
  std::size_t experts = 4;
  std::size_t truncation = 50;
  std::size_t max_len = 1 + kTokensPerInteraction * 50;
  double aux_weight = 0.01;
  // heads / head_dim here are overwritten from the fields above.
  JsaConfig jsa;

  void validate() const;
  JsaConfig effective_jsa() const;
};

// ---------------------------------------------------------------- MoE

struct MoeParams {
  Linear router;  // model_dim -> experts
  std::vector<FeedForward> experts;
};

struct MoeCache {
  Matrix x;
  Matrix probs;                          // tokens x experts
  std::vector<std::size_t> route;        // chosen expert per token
  std::vector<std::vector<std::size_t>> members;  // tokens per expert
  std::vector<FeedForwardCache> expert_cache;
  std::vector<Matrix> expert_out;        // per expert, rows follow members
  std::vector<double> fraction;          // share of tokens per expert
};

struct MoeOutput {
  Matrix y;
  double aux = 0.0;  // E * sum_e fraction_e * mean_prob_e
};

MoeParams make_moe(const std::string& name, std::size_t model_dim, std::size_t hidden, std::size_t experts, Rng& rng);
void collect(MoeParams& m, ParamRefs& out);

/// Top-1 switch routing; the chosen expert's output is scaled by its router
/// probability. Ties go to the lower expert index.
MoeOutput moe_forward(const MoeParams& m, const Matrix& x, MoeCache* cache = nullptr, RoutingTrace* trace = nullptr);
/// dy is the gradient of the output, aux_grad the gradient of the aux loss.
Matrix moe_backward(MoeParams& m, const MoeCache& cache, const Matrix& dy, double aux_grad);

// -------------------------------------------------------------- model

struct EncoderLayer {
  LayerNorm ln_attn;
  JsaParams attn;
  LayerNorm ln_ffn;
  MoeParams moe;
};

struct DecoderLayer {
  LayerNorm ln_self;
  MultiHeadAttention self_attn;
  LayerNorm ln_cross;
  MultiHeadAttention cross_attn;
  LayerNorm ln_ffn;
  MoeParams moe;
};

struct ModelParams {
  Param token_embedding;  // vocab x dm, shared by encoder and decoder inputs
  Param enc_position;     // max_len x dm
  Param dec_position;     // kDecoderLen x dm
  std::vector<EncoderLayer> encoder;
  LayerNorm enc_final;
  std::vector<DecoderLayer> decoder;
  LayerNorm dec_final;
  Linear head;  // dm -> vocab
};

class Model {
 public:
  Model(const ModelConfig& cfg, std::size_t vocab_size, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  /// Runtime knobs (gate overrides, window, top-N) may be adjusted between runs.
  JsaConfig& jsa_config() { return jsa_; }
  const JsaConfig& jsa_config() const { return jsa_; }
  std::size_t vocab_size() const { return vocab_size_; }

  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }
  ParamRefs parameters();
  std::size_t parameter_count();

 private:
  ModelConfig cfg_;
  JsaConfig jsa_;
  std::size_t vocab_size_;
  ModelParams params_;
};

struct EncoderLayerCache {
  Matrix x;
  LayerNormCache ln_attn;
  Matrix h_attn;
  JsaCache attn;
  Matrix x_mid;
  LayerNormCache ln_ffn;
  MoeCache moe;
};

struct EncoderCache {
  std::vector<TokenId> tokens;
  std::vector<EncoderLayerCache> layers;
  LayerNormCache final_ln;
};

struct EncoderOutput {
  Matrix states;  // L x dm
  double aux = 0.0;
};

EncoderOutput encode(const Model& model, std::span<const TokenId> tokens, std::span<const TokenType> types,
                     EncoderCache* cache = nullptr, RoutingTrace* trace = nullptr);
inline EncoderOutput encode(const Model& model, const TokenizedSequence& seq) {
  return encode(model, seq.tokens, seq.types);
}
/// Accumulates parameter gradients down to the embeddings. aux_grad is the
/// gradient of the total loss with respect to each MoE aux term.
void encode_backward(Model& model, const EncoderCache& cache, const Matrix& dstates, double aux_grad);

struct DecoderLayerCache {
  Matrix x;
  LayerNormCache ln_self;
  MhaCache self_attn;
  Matrix x1;
  LayerNormCache ln_cross;
  MhaCache cross_attn;
  Matrix x2;
  LayerNormCache ln_ffn;
  MoeCache moe;
};

struct DecoderCache {
  std::vector<TokenId> prefix;
  std::vector<DecoderLayerCache> layers;
  LayerNormCache final_ln;
  Matrix final_h;
};

struct DecoderOutput {
  Matrix logits;  // prefix_len x vocab
  double aux = 0.0;
};

/// Causal self-attention over the prefix, cross-attention to encoder states.
DecoderOutput decode_logits(const Model& model, const Matrix& encoder_states, std::span<const TokenId> prefix,
                            DecoderCache* cache = nullptr, RoutingTrace* trace = nullptr);
/// Accumulates parameter gradients; returns d(encoder_states).
Matrix decode_backward(Model& model, const DecoderCache& cache, const Matrix& dlogits, double aux_grad);

/// Cross-attention keys/values computed once per encoded sequence.
struct DecoderMemory {
  Matrix states;
  std::vector<Matrix> cross_k;
  std::vector<Matrix> cross_v;
};

DecoderMemory make_decoder_memory(const Model& model, const Matrix& encoder_states);
/// Log-softmax of the logits for the token following `prefix` (1 x vocab).
std::vector<double> next_token_logprobs(const Model& model, const DecoderMemory& memory,
                                        std::span<const TokenId> prefix);

// ------------------------------------------------------------------ loss

struct LossResult {
  double loss = 0.0;  // nll + aux_weight * aux
  double nll = 0.0;
  double aux = 0.0;
  Matrix dlogits;  // gradient of nll
};

/// Mean negative log-likelihood over unmasked positions plus weighted aux loss.
/// `keep[i] == false` masks position i (PAD).
LossResult loss_ce(const Matrix& logits, std::span<const TokenId> labels, std::span<const bool> keep,
                   double aux_total = 0.0, double aux_weight = 0.01);

// ------------------------------------------------------------- examples

struct TrainingExample {
  TokenizedSequence input;
  std::array<TokenId, kDecoderLen> decoder_input{};
  std::array<TokenId, kDecoderLen> labels{};
};

TrainingExample make_example(const TokenizedSequence& history, const Tokenization& tok, Behavior target_behavior,
                             std::size_t target_item);

/// Loss of one example; with `backward`, gradients scaled by grad_scale are accumulated.
LossResult example_loss(Model& model, const TrainingExample& ex, bool backward, double grad_scale = 1.0,
                        RoutingTrace* trace = nullptr);

}  // namespace grace
