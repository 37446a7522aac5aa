// SPDX-License-Identifier: Apache-2.0
#include "grace/model.hpp"

#include <algorithm>
#include <cmath>

#include "grace/simd.hpp"

namespace grace {

void ModelConfig::validate() const {
  if (layers_enc == 0 || layers_dec == 0) throw ValidationError("model: need at least one layer on each side");
  if (model_dim == 0 || ffn_width == 0 || heads == 0 || head_dim == 0 || experts == 0)
    throw ValidationError("model: dimensions must be positive");
  if (max_len < 1 + kTokensPerInteraction * truncation)
    throw ValidationError("model: max_len must cover 1 + 7 * truncation tokens");
  effective_jsa().validate();
}

JsaConfig ModelConfig::effective_jsa() const {
  JsaConfig j = jsa;
  j.heads = heads;
  j.head_dim = head_dim;
  return j;
}

// ---------------------------------------------------------------- MoE

MoeParams make_moe(const std::string& name, std::size_t model_dim, std::size_t hidden, std::size_t experts,
                   Rng& rng) {
  MoeParams m{make_linear(name + ".router", model_dim, experts, rng), {}};
  for (std::size_t e = 0; e < experts; ++e)
    m.experts.push_back(make_feedforward(name + ".expert" + std::to_string(e), model_dim, hidden, model_dim, rng));
  return m;
}

void collect(MoeParams& m, ParamRefs& out) {
  collect(m.router, out);
  for (auto& e : m.experts) collect(e, out);
}

MoeOutput moe_forward(const MoeParams& m, const Matrix& x, MoeCache* cache, RoutingTrace* trace) {
  const std::size_t T = x.rows();
  const std::size_t E = m.experts.size();
  Matrix probs = softmax_rows(linear_forward(m.router, x));
  auto choose = [&] {
    std::vector<std::size_t> r(T);
    for (std::size_t t = 0; t < T; ++t) {
      const auto row = probs.row(t);
      r[t] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return r;
  };
  std::vector<std::size_t> route = trace ? trace->resolve(choose) : choose();

  std::vector<std::vector<std::size_t>> members(E);
  for (std::size_t t = 0; t < T; ++t) members[route[t]].push_back(t);

  MoeOutput out{Matrix(T, x.cols()), 0.0};
  std::vector<FeedForwardCache> ecache(E);
  std::vector<Matrix> eout(E);
  std::vector<double> fraction(E, 0.0);
  for (std::size_t e = 0; e < E; ++e) {
    double mean_prob = 0.0;
    for (std::size_t t = 0; t < T; ++t) mean_prob += probs(t, e);
    mean_prob /= static_cast<double>(T);
    fraction[e] = static_cast<double>(members[e].size()) / static_cast<double>(T);
    out.aux += fraction[e] * mean_prob;
    if (members[e].empty()) continue;
    eout[e] = feedforward_forward(m.experts[e], gather_rows(x, members[e]), &ecache[e]);
    for (std::size_t i = 0; i < members[e].size(); ++i) {
      const std::size_t t = members[e][i];
      simd::axpy(probs(t, e), eout[e].row(i).data(), out.y.row(t).data(), x.cols());
    }
  }
  out.aux *= static_cast<double>(E);
  if (cache) {
    cache->x = x;
    cache->probs = std::move(probs);
    cache->route = std::move(route);
    cache->members = std::move(members);
    cache->expert_cache = std::move(ecache);
    cache->expert_out = std::move(eout);
    cache->fraction = std::move(fraction);
  }
  return out;
}

Matrix moe_backward(MoeParams& m, const MoeCache& c, const Matrix& dy, double aux_grad) {
  const std::size_t T = c.x.rows();
  const std::size_t E = m.experts.size();
  Matrix dprobs(T, E);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t e = 0; e < E; ++e)
      dprobs(t, e) = aux_grad * static_cast<double>(E) * c.fraction[e] / static_cast<double>(T);

  Matrix dx(T, c.x.cols());
  for (std::size_t e = 0; e < E; ++e) {
    const auto& mem = c.members[e];
    if (mem.empty()) continue;
    Matrix dout(mem.size(), c.x.cols());
    for (std::size_t i = 0; i < mem.size(); ++i) {
      const std::size_t t = mem[i];
      dprobs(t, e) += simd::dot(dy.row(t).data(), c.expert_out[e].row(i).data(), c.x.cols());
      simd::axpy(c.probs(t, e), dy.row(t).data(), dout.row(i).data(), c.x.cols());
    }
    scatter_add_rows(dx, mem, feedforward_backward(m.experts[e], c.expert_cache[e], dout));
  }
  Matrix dlogits(T, E);
  for (std::size_t t = 0; t < T; ++t) {
    double s = 0.0;
    for (std::size_t e = 0; e < E; ++e) s += c.probs(t, e) * dprobs(t, e);
    for (std::size_t e = 0; e < E; ++e) dlogits(t, e) = c.probs(t, e) * (dprobs(t, e) - s);
  }
  add_inplace(dx, linear_backward(m.router, c.x, dlogits));
  return dx;
}

// -------------------------------------------------------------- model

Model::Model(const ModelConfig& cfg, std::size_t vocab_size, std::uint64_t seed)
    : cfg_(cfg), jsa_(cfg.effective_jsa()), vocab_size_(vocab_size) {
  cfg_.validate();
  if (vocab_size == 0) throw ValidationError("model: empty vocabulary");
  Rng rng(seed);
  const std::size_t dm = cfg_.model_dim;
  const double emb_std = 1.0 / std::sqrt(static_cast<double>(dm));
  params_.token_embedding = Param("token_embedding", vocab_size, dm);
  init_normal(params_.token_embedding, rng, emb_std);
  params_.enc_position = Param("enc_position", cfg_.max_len, dm);
  init_normal(params_.enc_position, rng, 0.1 * emb_std);
  params_.dec_position = Param("dec_position", kDecoderLen, dm);
  init_normal(params_.dec_position, rng, 0.1 * emb_std);
  for (std::size_t l = 0; l < cfg_.layers_enc; ++l) {
    const std::string n = "enc" + std::to_string(l);
    params_.encoder.push_back({make_layernorm(n + ".ln_attn", dm), make_jsa_params(n + ".jsa", dm, jsa_, rng),
                               make_layernorm(n + ".ln_ffn", dm),
                               make_moe(n + ".moe", dm, cfg_.ffn_width, cfg_.experts, rng)});
  }
  params_.enc_final = make_layernorm("enc_final", dm);
  for (std::size_t l = 0; l < cfg_.layers_dec; ++l) {
    const std::string n = "dec" + std::to_string(l);
    params_.decoder.push_back({make_layernorm(n + ".ln_self", dm),
                               make_mha(n + ".self", dm, cfg_.heads, cfg_.head_dim, rng),
                               make_layernorm(n + ".ln_cross", dm),
                               make_mha(n + ".cross", dm, cfg_.heads, cfg_.head_dim, rng),
                               make_layernorm(n + ".ln_ffn", dm),
                               make_moe(n + ".moe", dm, cfg_.ffn_width, cfg_.experts, rng)});
  }
  params_.dec_final = make_layernorm("dec_final", dm);
  params_.head = make_linear("head", dm, vocab_size, rng, false);
  init_normal(params_.head.weight, rng, 0.02);
}

ParamRefs Model::parameters() {
  ParamRefs out{&params_.token_embedding, &params_.enc_position, &params_.dec_position};
  for (auto& l : params_.encoder) {
    collect(l.ln_attn, out);
    collect(l.attn, out);
    collect(l.ln_ffn, out);
    collect(l.moe, out);
  }
  collect(params_.enc_final, out);
  for (auto& l : params_.decoder) {
    collect(l.ln_self, out);
    collect(l.self_attn, out);
    collect(l.ln_cross, out);
    collect(l.cross_attn, out);
    collect(l.ln_ffn, out);
    collect(l.moe, out);
  }
  collect(params_.dec_final, out);
  collect(params_.head, out);
  return out;
}

std::size_t Model::parameter_count() {
  std::size_t n = 0;
  for (const Param* p : parameters()) n += p->value.size();
  return n;
}

namespace {

Matrix embed(const Model& model, std::span<const TokenId> tokens, const Param& positions) {
  const std::size_t dm = model.config().model_dim;
  Matrix x(tokens.size(), dm);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] >= model.vocab_size()) throw ValidationError("token id out of vocabulary");
    std::copy_n(model.params().token_embedding.value.row(tokens[i]).data(), dm, x.row(i).data());
    simd::axpy(1.0, positions.value.row(i).data(), x.row(i).data(), dm);
  }
  return x;
}

void embed_backward(Model& model, std::span<const TokenId> tokens, Param& positions, const Matrix& dx) {
  const std::size_t dm = model.config().model_dim;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    simd::axpy(1.0, dx.row(i).data(), model.params().token_embedding.grad.row(tokens[i]).data(), dm);
    simd::axpy(1.0, dx.row(i).data(), positions.grad.row(i).data(), dm);
  }
}

}  // namespace

EncoderOutput encode(const Model& model, std::span<const TokenId> tokens, std::span<const TokenType> types,
                     EncoderCache* cache, RoutingTrace* trace) {
  if (tokens.empty()) throw ValidationError("encode: empty sequence");
  if (tokens.size() > model.config().max_len)
    throw ValidationError("encode: sequence of " + std::to_string(tokens.size()) + " tokens exceeds max_len " +
                          std::to_string(model.config().max_len));
  const auto& P = model.params();
  Matrix x = embed(model, tokens, P.enc_position);
  EncoderOutput out;
  if (cache) {
    cache->tokens.assign(tokens.begin(), tokens.end());
    cache->layers.assign(P.encoder.size(), {});
  }
  for (std::size_t l = 0; l < P.encoder.size(); ++l) {
    const auto& layer = P.encoder[l];
    EncoderLayerCache* lc = cache ? &cache->layers[l] : nullptr;
    Matrix h = layernorm_forward(layer.ln_attn, x, lc ? &lc->ln_attn : nullptr);
    Matrix a = jsa_forward(layer.attn, model.jsa_config(), h, types, lc ? &lc->attn : nullptr, trace);
    if (lc) {
      lc->x = x;
      lc->h_attn = h;
    }
    add_inplace(x, a);
    Matrix h2 = layernorm_forward(layer.ln_ffn, x, lc ? &lc->ln_ffn : nullptr);
    MoeOutput m = moe_forward(layer.moe, h2, lc ? &lc->moe : nullptr, trace);
    if (lc) lc->x_mid = x;
    add_inplace(x, m.y);
    out.aux += m.aux;
  }
  out.states = layernorm_forward(P.enc_final, x, cache ? &cache->final_ln : nullptr);
  return out;
}

void encode_backward(Model& model, const EncoderCache& c, const Matrix& dstates, double aux_grad) {
  auto& P = model.params();
  Matrix dx = layernorm_backward(P.enc_final, c.final_ln, dstates);
  for (std::size_t l = P.encoder.size(); l-- > 0;) {
    auto& layer = P.encoder[l];
    const auto& lc = c.layers[l];
    add_inplace(dx, layernorm_backward(layer.ln_ffn, lc.ln_ffn, moe_backward(layer.moe, lc.moe, dx, aux_grad)));
    add_inplace(dx, layernorm_backward(layer.ln_attn, lc.ln_attn,
                                       jsa_backward(layer.attn, model.jsa_config(), lc.attn, dx)));
  }
  embed_backward(model, c.tokens, P.enc_position, dx);
}

DecoderOutput decode_logits(const Model& model, const Matrix& enc, std::span<const TokenId> prefix,
                            DecoderCache* cache, RoutingTrace* trace) {
  if (prefix.empty()) throw ValidationError("decode_logits: empty prefix");
  if (prefix.size() > kDecoderLen) throw ValidationError("decode_logits: prefix longer than the decoder");
  const auto& P = model.params();
  Matrix x = embed(model, prefix, P.dec_position);
  DecoderOutput out;
  if (cache) {
    cache->prefix.assign(prefix.begin(), prefix.end());
    cache->layers.assign(P.decoder.size(), {});
  }
  for (std::size_t l = 0; l < P.decoder.size(); ++l) {
    const auto& layer = P.decoder[l];
    DecoderLayerCache* lc = cache ? &cache->layers[l] : nullptr;
    if (lc) lc->x = x;
    Matrix h = layernorm_forward(layer.ln_self, x, lc ? &lc->ln_self : nullptr);
    add_inplace(x, mha_forward(layer.self_attn, h, h, true, lc ? &lc->self_attn : nullptr));
    if (lc) lc->x1 = x;
    h = layernorm_forward(layer.ln_cross, x, lc ? &lc->ln_cross : nullptr);
    add_inplace(x, mha_forward(layer.cross_attn, h, enc, false, lc ? &lc->cross_attn : nullptr));
    if (lc) lc->x2 = x;
    h = layernorm_forward(layer.ln_ffn, x, lc ? &lc->ln_ffn : nullptr);
    MoeOutput m = moe_forward(layer.moe, h, lc ? &lc->moe : nullptr, trace);
    add_inplace(x, m.y);
    out.aux += m.aux;
  }
  Matrix h = layernorm_forward(P.dec_final, x, cache ? &cache->final_ln : nullptr);
  out.logits = linear_forward(P.head, h);
  if (cache) cache->final_h = std::move(h);
  return out;
}

Matrix decode_backward(Model& model, const DecoderCache& c, const Matrix& dlogits, double aux_grad) {
  auto& P = model.params();
  Matrix dx = layernorm_backward(P.dec_final, c.final_ln, linear_backward(P.head, c.final_h, dlogits));
  Matrix denc;
  for (std::size_t l = P.decoder.size(); l-- > 0;) {
    auto& layer = P.decoder[l];
    const auto& lc = c.layers[l];
    add_inplace(dx, layernorm_backward(layer.ln_ffn, lc.ln_ffn, moe_backward(layer.moe, lc.moe, dx, aux_grad)));
    auto [dq, dkv] = mha_backward(layer.cross_attn, lc.cross_attn, false, dx);
    add_inplace(dx, layernorm_backward(layer.ln_cross, lc.ln_cross, dq));
    if (denc.empty()) denc = Matrix(dkv.rows(), dkv.cols());
    add_inplace(denc, dkv);
    auto [ds, dkv_self] = mha_backward(layer.self_attn, lc.self_attn, true, dx);
    add_inplace(ds, dkv_self);
    add_inplace(dx, layernorm_backward(layer.ln_self, lc.ln_self, ds));
  }
  embed_backward(model, c.prefix, P.dec_position, dx);
  return denc;
}

DecoderMemory make_decoder_memory(const Model& model, const Matrix& encoder_states) {
  DecoderMemory mem{encoder_states, {}, {}};
  for (const auto& layer : model.params().decoder) {
    mem.cross_k.push_back(linear_forward(layer.cross_attn.k, encoder_states));
    mem.cross_v.push_back(linear_forward(layer.cross_attn.v, encoder_states));
  }
  return mem;
}

std::vector<double> next_token_logprobs(const Model& model, const DecoderMemory& mem,
                                        std::span<const TokenId> prefix) {
  if (prefix.empty()) throw ValidationError("next_token_logprobs: empty prefix");
  if (prefix.size() > kDecoderLen) throw ValidationError("next_token_logprobs: prefix longer than the decoder");
  const auto& P = model.params();
  Matrix x = embed(model, prefix, P.dec_position);
  for (std::size_t l = 0; l < P.decoder.size(); ++l) {
    const auto& layer = P.decoder[l];
    Matrix h = layernorm_forward(layer.ln_self, x, nullptr);
    add_inplace(x, mha_forward(layer.self_attn, h, h, true, nullptr));
    h = layernorm_forward(layer.ln_cross, x, nullptr);
    add_inplace(x, mha_forward_projected(layer.cross_attn, h, mem.cross_k[l], mem.cross_v[l], false));
    h = layernorm_forward(layer.ln_ffn, x, nullptr);
    add_inplace(x, moe_forward(layer.moe, h).y);
  }
  Matrix last(1, x.cols());
  std::copy_n(x.row(x.rows() - 1).data(), x.cols(), last.data());
  Matrix logits = linear_forward(P.head, layernorm_forward(P.dec_final, last, nullptr));
  std::vector<double> lp(logits.values());
  const double lse = log_sum_exp(lp);
  for (double& v : lp) v -= lse;
  return lp;
}

// ------------------------------------------------------------------ loss

LossResult loss_ce(const Matrix& logits, std::span<const TokenId> labels, std::span<const bool> keep,
                   double aux_total, double aux_weight) {
  if (labels.size() != logits.rows() || keep.size() != logits.rows())
    throw ValidationError("loss_ce: labels and mask must align with logits");
  const auto kept = static_cast<std::size_t>(std::count(keep.begin(), keep.end(), true));
  if (kept == 0) throw ValidationError("loss_ce: all positions are masked");
  LossResult r;
  r.dlogits = Matrix(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (!keep[i]) continue;
    if (labels[i] >= logits.cols()) throw ValidationError("loss_ce: label out of range");
    const auto row = logits.row(i);
    const double lse = log_sum_exp(row);
    r.nll -= row[labels[i]] - lse;
    for (std::size_t j = 0; j < row.size(); ++j) r.dlogits(i, j) = std::exp(row[j] - lse) / static_cast<double>(kept);
    r.dlogits(i, labels[i]) -= 1.0 / static_cast<double>(kept);
  }
  r.nll /= static_cast<double>(kept);
  r.aux = aux_total;
  r.loss = r.nll + aux_weight * aux_total;
  return r;
}

// ------------------------------------------------------------- examples

TrainingExample make_example(const TokenizedSequence& history, const Tokenization& tok, Behavior target_behavior,
                             std::size_t target_item) {
  TrainingExample ex;
  ex.input = history;
  const auto path = tok.path(target_behavior, target_item);
  ex.decoder_input[0] = tok.vocab.bos();
  std::copy(path.begin(), path.end(), ex.decoder_input.begin() + 1);
  std::copy(path.begin(), path.end(), ex.labels.begin());
  ex.labels[kDecoderLen - 1] = tok.vocab.eos();
  return ex;
}

LossResult example_loss(Model& model, const TrainingExample& ex, bool backward, double grad_scale,
                        RoutingTrace* trace) {
  EncoderCache ec;
  DecoderCache dc;
  EncoderOutput enc = encode(model, ex.input.tokens, ex.input.types, backward ? &ec : nullptr, trace);
  DecoderOutput dec = decode_logits(model, enc.states, ex.decoder_input, backward ? &dc : nullptr, trace);
  std::array<bool, kDecoderLen> keep;
  keep.fill(true);
  LossResult r = loss_ce(dec.logits, ex.labels, keep, enc.aux + dec.aux, model.config().aux_weight);
  if (backward) {
    Matrix dlogits = r.dlogits;
    simd::scale(grad_scale, dlogits.data(), dlogits.size());
    const double aux_grad = grad_scale * model.config().aux_weight;
    Matrix denc = decode_backward(model, dc, dlogits, aux_grad);
    encode_backward(model, ec, denc, aux_grad);
  }
  return r;
}

}  // namespace grace
