// SPDX-License-Identifier: Apache-2.0
#include "grace/jsa.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "grace/simd.hpp"

namespace grace {

std::string_view branch_name(Branch b) {
  switch (b) {
    case Branch::Compression: return "compression";
    case Branch::Intra: return "intra";
    case Branch::Inter: return "inter";
    case Branch::Current: return "current";
  }
  return "unknown";
}

void JsaConfig::validate() const {
  if (block_len == 0 || stride == 0) throw ValidationError("jsa: block length and stride must be positive");
  if (stride > block_len) throw ValidationError("jsa: stride must not exceed block length");
  if (top_n == 0) throw ValidationError("jsa: top_n must be at least 1");
  if (window == 0) throw ValidationError("jsa: window must be at least 1");
  if (kept_cot > kCotHops || kept_sem > kSemanticLevels) throw ValidationError("jsa: kept token counts exceed 3");
  if (kept_cot + kept_sem == 0) throw ValidationError("jsa: inter-journey branch keeps no tokens");
  if (heads == 0 || head_dim == 0) throw ValidationError("jsa: heads and head_dim must be positive");
}

std::vector<BlockSpan> segment_blocks(std::size_t seq_len, std::size_t block_len, std::size_t stride) {
  if (block_len == 0 || stride == 0) throw ValidationError("segment_blocks: block length and stride must be positive");
  if (seq_len == 0) throw ValidationError("segment_blocks: empty sequence");
  if (seq_len < block_len) return {{0, seq_len}};
  const std::size_t count = (seq_len - block_len) / stride + 1;
  std::vector<BlockSpan> spans;
  spans.reserve(count);
  for (std::size_t b = 0; b < count; ++b) spans.push_back({b * stride, b * stride + block_len});
  return spans;
}

JsaParams make_jsa_params(const std::string& name, std::size_t model_dim, const JsaConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t inner = cfg.inner_dim();
  const std::size_t hd = cfg.head_dim;
  return {make_linear(name + ".q", model_dim, inner, rng),
          make_linear(name + ".k", model_dim, inner, rng),
          make_linear(name + ".v", model_dim, inner, rng),
          make_feedforward(name + ".compress_k", cfg.block_len * hd, 2 * hd, hd, rng),
          make_feedforward(name + ".compress_v", cfg.block_len * hd, 2 * hd, hd, rng),
          make_linear(name + ".gate", model_dim, kBranchCount, rng),
          make_linear(name + ".out", inner, model_dim, rng)};
}

void collect(JsaParams& p, ParamRefs& out) {
  collect(p.q, out);
  collect(p.k, out);
  collect(p.v, out);
  collect(p.compress_k, out);
  collect(p.compress_v, out);
  collect(p.gate, out);
  collect(p.out, out);
}

// ---------------------------------------------------------------- branches

CompressedBlocks compress_blocks(const FeedForward& mlp, const Matrix& x, std::span<const BlockSpan> spans,
                                 std::size_t block_len) {
  const std::size_t width = x.cols();
  CompressedBlocks cb;
  cb.flat = Matrix(spans.size(), block_len * width);
  for (std::size_t b = 0; b < spans.size(); ++b) {
    if (spans[b].end - spans[b].start > block_len) throw ValidationError("compress_blocks: span longer than block");
    for (std::size_t pos = spans[b].start; pos < spans[b].end; ++pos)
      std::copy_n(x.row(pos).data(), width, cb.flat.row(b).data() + (pos - spans[b].start) * width);
  }
  cb.compressed = feedforward_forward(mlp, cb.flat, &cb.cache);
  return cb;
}

namespace {

// Scatter gradients of flattened blocks back onto token rows.
void scatter_blocks(const Matrix& dflat, std::span<const BlockSpan> spans, Matrix& dx) {
  const std::size_t width = dx.cols();
  for (std::size_t b = 0; b < spans.size(); ++b)
    for (std::size_t pos = spans[b].start; pos < spans[b].end; ++pos)
      simd::axpy(1.0, dflat.row(b).data() + (pos - spans[b].start) * width, dx.row(pos).data(), width);
}

}  // namespace

CompressionResult compress_branch(const Matrix& q, const Matrix& k, const Matrix& v, const FeedForward& compress_k,
                                  const FeedForward& compress_v, std::span<const BlockSpan> spans,
                                  std::size_t block_len, double scale) {
  CompressionResult r;
  r.keys = compress_blocks(compress_k, k, spans, block_len);
  r.values = compress_blocks(compress_v, v, spans, block_len);
  r.output = attention(q, r.keys.compressed, r.values.compressed, scale, false, &r.attn);
  return r;
}

std::vector<double> block_importance(const Matrix& q, const Matrix& compressed_keys, double scale) {
  std::vector<double> qsum(q.cols(), 0.0);
  for (std::size_t i = 0; i < q.rows(); ++i) simd::axpy(1.0, q.row(i).data(), qsum.data(), q.cols());
  std::vector<double> pi(compressed_keys.rows());
  for (std::size_t b = 0; b < pi.size(); ++b)
    pi[b] = scale * simd::dot(qsum.data(), compressed_keys.row(b).data(), q.cols());
  softmax_inplace(pi);
  return pi;
}

std::vector<std::size_t> top_n_blocks(std::span<const double> pi, std::size_t n) {
  std::vector<std::size_t> order(pi.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pi[a] > pi[b]; });
  order.resize(std::min(n, order.size()));
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<std::size_t> selected_positions(std::span<const BlockSpan> spans, std::span<const std::size_t> blocks) {
  std::vector<std::size_t> pos;
  for (std::size_t b : blocks)
    for (std::size_t p = spans[b].start; p < spans[b].end; ++p) pos.push_back(p);
  return pos;
}

Matrix subset_attention(const Matrix& q, const Matrix& k, const Matrix& v, std::span<const std::size_t> positions,
                        double scale, AttentionCache* cache) {
  return attention(q, gather_rows(k, positions), gather_rows(v, positions), scale, false, cache);
}

void subset_attention_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                               std::span<const std::size_t> positions, double scale, const AttentionCache& cache,
                               const Matrix& dout, Matrix& dq, Matrix& dk, Matrix& dv) {
  const Matrix ks = gather_rows(k, positions);
  const Matrix vs = gather_rows(v, positions);
  Matrix dks(ks.rows(), ks.cols()), dvs(vs.rows(), vs.cols());
  attention_backward(q, ks, vs, scale, cache, dout, dq, dks, dvs);
  scatter_add_rows(dk, positions, dks);
  scatter_add_rows(dv, positions, dvs);
}

SelectionResult select_branch(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix& compressed_keys,
                              std::size_t top_n, std::span<const BlockSpan> spans, double scale, RoutingTrace* trace) {
  SelectionResult r;
  r.pi = block_importance(q, compressed_keys, scale);
  auto choose = [&] { return top_n_blocks(r.pi, top_n); };
  r.selected_blocks = trace ? trace->resolve(choose) : choose();
  r.positions = selected_positions(spans, r.selected_blocks);
  r.output = subset_attention(q, k, v, r.positions, scale, &r.attn);
  return r;
}

std::vector<std::size_t> inter_positions(std::span<const TokenType> types, std::size_t kept_cot,
                                         std::size_t kept_sem) {
  std::vector<std::size_t> pos;
  for (std::size_t i = 0; i < types.size(); ++i) {
    const TokenType t = types[i];
    if ((is_cot(t) && token_level(t) < kept_cot) || (is_semantic(t) && token_level(t) < kept_sem)) pos.push_back(i);
  }
  return pos;
}

std::vector<std::size_t> window_positions(std::size_t seq_len, std::size_t window) {
  const std::size_t w = std::min(window, seq_len);
  std::vector<std::size_t> pos(w);
  std::iota(pos.begin(), pos.end(), seq_len - w);
  return pos;
}

Matrix inter_branch(const Matrix& q, const Matrix& k, const Matrix& v, std::span<const TokenType> types,
                    std::size_t kept_cot, std::size_t kept_sem, double scale) {
  const auto pos = inter_positions(types, kept_cot, kept_sem);
  if (pos.empty()) throw ValidationError("no inter-journey context");
  return subset_attention(q, k, v, pos, scale);
}

Matrix window_branch(const Matrix& q, const Matrix& k, const Matrix& v, std::size_t window, double scale) {
  return subset_attention(q, k, v, window_positions(k.rows(), window), scale);
}

Matrix gated_combine(const std::array<Matrix, kBranchCount>& branches, const Matrix& gates) {
  const Matrix& first = branches[0];
  if (gates.rows() != first.rows() || gates.cols() != kBranchCount)
    throw ValidationError("gated_combine: gate matrix must be (tokens x 4)");
  for (const auto& b : branches)
    if (!b.same_shape(first)) throw ValidationError("gated_combine: branch outputs differ in shape");
  Matrix out(first.rows(), first.cols());
  for (std::size_t t = 0; t < out.rows(); ++t)
    for (std::size_t j = 0; j < kBranchCount; ++j)
      simd::axpy(gates(t, j), branches[j].row(t).data(), out.row(t).data(), out.cols());
  return out;
}

// ------------------------------------------------------------------ layer

Matrix jsa_forward(const JsaParams& p, const JsaConfig& cfg, const Matrix& x, std::span<const TokenType> types,
                   JsaCache* cache, RoutingTrace* trace) {
  const std::size_t L = x.rows();
  if (types.size() != L) throw ValidationError("jsa_forward: token type count differs from sequence length");
  const std::size_t hd = cfg.head_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  Matrix q = linear_forward(p.q, x);
  Matrix k = linear_forward(p.k, x);
  Matrix v = linear_forward(p.v, x);
  Matrix gate_pre = linear_forward(p.gate, x);
  Matrix gates(L, kBranchCount);
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t j = 0; j < kBranchCount; ++j)
      gates(t, j) = cfg.gate_override[j] ? *cfg.gate_override[j] : sigmoid(gate_pre(t, j));

  const auto spans = segment_blocks(L, cfg.block_len, cfg.stride);
  const auto inter_pos = inter_positions(types, cfg.kept_cot, cfg.kept_sem);
  if (inter_pos.empty()) throw ValidationError("no inter-journey context");
  const auto window_pos = window_positions(L, cfg.window);

  Matrix concat(L, cfg.inner_dim());
  std::vector<JsaHeadState> heads(cfg.heads);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    JsaHeadState& s = heads[h];
    const std::size_t off = h * hd;
    s.q = slice_cols(q, off, hd);
    s.k = slice_cols(k, off, hd);
    s.v = slice_cols(v, off, hd);
    s.spans = spans;
    s.comp = compress_branch(s.q, s.k, s.v, p.compress_k, p.compress_v, spans, cfg.block_len, scale);
    s.intra = select_branch(s.q, s.k, s.v, s.comp.keys.compressed, cfg.top_n, spans, scale, trace);
    s.inter_pos = inter_pos;
    s.window_pos = window_pos;
    s.branch[0] = s.comp.output;
    s.branch[1] = s.intra.output;
    s.branch[2] = subset_attention(s.q, s.k, s.v, inter_pos, scale, &s.inter_attn);
    s.branch[3] = subset_attention(s.q, s.k, s.v, window_pos, scale, &s.window_attn);
    add_into_cols(concat, off, gated_combine(s.branch, gates));
  }
  Matrix y = linear_forward(p.out, concat);
  if (cache) {
    cache->x = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->gate_pre = std::move(gate_pre);
    cache->gates = std::move(gates);
    cache->heads = std::move(heads);
    cache->concat = std::move(concat);
  }
  return y;
}

Matrix jsa_backward(JsaParams& p, const JsaConfig& cfg, const JsaCache& c, const Matrix& dy) {
  const std::size_t L = c.x.rows();
  const std::size_t hd = cfg.head_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  const Matrix dconcat = linear_backward(p.out, c.concat, dy);
  Matrix dq(L, cfg.inner_dim()), dk(L, cfg.inner_dim()), dv(L, cfg.inner_dim());
  Matrix dgates(L, kBranchCount);

  for (std::size_t h = 0; h < cfg.heads; ++h) {
    const JsaHeadState& s = c.heads[h];
    const std::size_t off = h * hd;
    const Matrix dout = slice_cols(dconcat, off, hd);
    std::array<Matrix, kBranchCount> dbranch;
    for (std::size_t j = 0; j < kBranchCount; ++j) {
      dbranch[j] = Matrix(L, hd);
      for (std::size_t t = 0; t < L; ++t) {
        dgates(t, j) += simd::dot(dout.row(t).data(), s.branch[j].row(t).data(), hd);
        simd::axpy(c.gates(t, j), dout.row(t).data(), dbranch[j].row(t).data(), hd);
      }
    }
    Matrix dqh(L, hd), dkh(L, hd), dvh(L, hd);

    // compression: attention over compressed blocks, then through the MLPs
    const Matrix& kt = s.comp.keys.compressed;
    const Matrix& vt = s.comp.values.compressed;
    Matrix dkt(kt.rows(), kt.cols()), dvt(vt.rows(), vt.cols());
    attention_backward(s.q, kt, vt, scale, s.comp.attn, dbranch[0], dqh, dkt, dvt);
    scatter_blocks(feedforward_backward(p.compress_k, s.comp.keys.cache, dkt), s.spans, dkh);
    scatter_blocks(feedforward_backward(p.compress_v, s.comp.values.cache, dvt), s.spans, dvh);

    subset_attention_backward(s.q, s.k, s.v, s.intra.positions, scale, s.intra.attn, dbranch[1], dqh, dkh, dvh);
    subset_attention_backward(s.q, s.k, s.v, s.inter_pos, scale, s.inter_attn, dbranch[2], dqh, dkh, dvh);
    subset_attention_backward(s.q, s.k, s.v, s.window_pos, scale, s.window_attn, dbranch[3], dqh, dkh, dvh);

    add_into_cols(dq, off, dqh);
    add_into_cols(dk, off, dkh);
    add_into_cols(dv, off, dvh);
  }

  Matrix dgate_pre(L, kBranchCount);
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t j = 0; j < kBranchCount; ++j)
      if (!cfg.gate_override[j]) dgate_pre(t, j) = dgates(t, j) * c.gates(t, j) * (1.0 - c.gates(t, j));

  Matrix dx = linear_backward(p.q, c.x, dq);
  add_inplace(dx, linear_backward(p.k, c.x, dk));
  add_inplace(dx, linear_backward(p.v, c.x, dv));
  add_inplace(dx, linear_backward(p.gate, c.x, dgate_pre));
  return dx;
}

nlohmann::json jsa_introspection(const JsaCache& c) {
  std::vector<double> means(kBranchCount, 0.0);
  for (std::size_t t = 0; t < c.gates.rows(); ++t)
    for (std::size_t j = 0; j < kBranchCount; ++j) means[j] += c.gates(t, j);
  for (double& m : means) m /= static_cast<double>(std::max<std::size_t>(1, c.gates.rows()));
  nlohmann::json selected = nlohmann::json::array();
  nlohmann::json pi = nlohmann::json::array();
  for (const auto& h : c.heads) {
    selected.push_back(h.intra.selected_blocks);
    pi.push_back(h.intra.pi);
  }
  return {{"gate_means", means}, {"selected_blocks", selected}, {"pi", pi}};
}

}  // namespace grace
