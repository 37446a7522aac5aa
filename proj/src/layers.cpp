// SPDX-License-Identifier: Apache-2.0
#include "grace/layers.hpp"

#include <cmath>

#include "grace/simd.hpp"

namespace grace {

std::vector<std::size_t> RoutingTrace::resolve(const std::function<std::vector<std::size_t>()>& compute) {
  if (mode_ == Mode::Record) {
    log_.push_back(compute());
    return log_.back();
  }
  if (cursor_ >= log_.size()) throw std::logic_error("routing trace exhausted during replay");
  return log_[cursor_++];
}

void init_normal(Param& p, Rng& rng, double stddev) {
  for (double& v : p.value.values()) v = stddev * standard_normal(rng);
}

Linear make_linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng, bool with_init) {
  Linear l{Param(name + ".weight", in, out), Param(name + ".bias", 1, out)};
  if (with_init) init_normal(l.weight, rng, 1.0 / std::sqrt(static_cast<double>(in)));
  return l;
}

Matrix linear_forward(const Linear& l, const Matrix& x) {
  Matrix y = matmul(x, l.weight.value);
  add_row_broadcast(y, l.bias.value);
  return y;
}

Matrix linear_backward(Linear& l, const Matrix& x, const Matrix& dy) {
  matmul_at_acc(x, dy, l.weight.grad);
  add_col_sums(l.bias.grad, dy);
  return matmul_bt(dy, l.weight.value);
}

void collect(Linear& l, ParamRefs& out) {
  out.push_back(&l.weight);
  out.push_back(&l.bias);
}

LayerNorm make_layernorm(const std::string& name, std::size_t dim) {
  LayerNorm ln{Param(name + ".gamma", 1, dim), Param(name + ".beta", 1, dim)};
  ln.gamma.value.fill(1.0);
  return ln;
}

Matrix layernorm_forward(const LayerNorm& ln, const Matrix& x, LayerNormCache* cache) {
  const std::size_t d = x.cols();
  Matrix y(x.rows(), d);
  Matrix xhat(x.rows(), d);
  std::vector<double> rstd(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto row = x.row(i);
    const double mean = simd::sum(row.data(), d) / static_cast<double>(d);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    rstd[i] = 1.0 / std::sqrt(var + ln.eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat(i, j) = (row[j] - mean) * rstd[i];
      y(i, j) = xhat(i, j) * ln.gamma.value(0, j) + ln.beta.value(0, j);
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

Matrix layernorm_backward(LayerNorm& ln, const LayerNormCache& cache, const Matrix& dy) {
  const std::size_t d = dy.cols();
  Matrix dx(dy.rows(), d);
  std::vector<double> g(d);
  for (std::size_t i = 0; i < dy.rows(); ++i) {
    double mean_g = 0.0;
    double mean_gx = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      ln.gamma.grad(0, j) += dy(i, j) * cache.xhat(i, j);
      ln.beta.grad(0, j) += dy(i, j);
      g[j] = dy(i, j) * ln.gamma.value(0, j);
      mean_g += g[j];
      mean_gx += g[j] * cache.xhat(i, j);
    }
    mean_g /= static_cast<double>(d);
    mean_gx /= static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j) dx(i, j) = cache.rstd[i] * (g[j] - mean_g - cache.xhat(i, j) * mean_gx);
  }
  return dx;
}

void collect(LayerNorm& ln, ParamRefs& out) {
  out.push_back(&ln.gamma);
  out.push_back(&ln.beta);
}

FeedForward make_feedforward(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  return {make_linear(name + ".up", in, hidden, rng), make_linear(name + ".down", hidden, out, rng)};
}

Matrix feedforward_forward(const FeedForward& f, const Matrix& x, FeedForwardCache* cache) {
  Matrix h = linear_forward(f.up, x);
  for (double& v : h.values()) v = v > 0.0 ? v : 0.0;
  Matrix y = linear_forward(f.down, h);
  if (cache) {
    cache->x = x;
    cache->hidden = std::move(h);
  }
  return y;
}

Matrix feedforward_backward(FeedForward& f, const FeedForwardCache& cache, const Matrix& dy) {
  Matrix dh = linear_backward(f.down, cache.hidden, dy);
  for (std::size_t i = 0; i < dh.size(); ++i)
    if (cache.hidden.values()[i] <= 0.0) dh.values()[i] = 0.0;
  return linear_backward(f.up, cache.x, dh);
}

void collect(FeedForward& f, ParamRefs& out) {
  collect(f.up, out);
  collect(f.down, out);
}

MultiHeadAttention make_mha(const std::string& name, std::size_t model_dim, std::size_t heads, std::size_t head_dim,
                            Rng& rng) {
  const std::size_t inner = heads * head_dim;
  MultiHeadAttention m{make_linear(name + ".q", model_dim, inner, rng), make_linear(name + ".k", model_dim, inner, rng),
                       make_linear(name + ".v", model_dim, inner, rng),
                       make_linear(name + ".out", inner, model_dim, rng), heads, head_dim};
  return m;
}

Matrix mha_forward_projected(const MultiHeadAttention& m, const Matrix& xq, const Matrix& k, const Matrix& v,
                             bool causal) {
  const Matrix q = linear_forward(m.q, xq);
  const double scale = 1.0 / std::sqrt(static_cast<double>(m.head_dim));
  Matrix concat(xq.rows(), m.heads * m.head_dim);
  for (std::size_t h = 0; h < m.heads; ++h) {
    const std::size_t off = h * m.head_dim;
    const Matrix o = attention(slice_cols(q, off, m.head_dim), slice_cols(k, off, m.head_dim),
                               slice_cols(v, off, m.head_dim), scale, causal);
    add_into_cols(concat, off, o);
  }
  return linear_forward(m.out, concat);
}

Matrix mha_forward(const MultiHeadAttention& m, const Matrix& xq, const Matrix& xkv, bool causal, MhaCache* cache) {
  Matrix q = linear_forward(m.q, xq);
  Matrix k = linear_forward(m.k, xkv);
  Matrix v = linear_forward(m.v, xkv);
  const double scale = 1.0 / std::sqrt(static_cast<double>(m.head_dim));
  Matrix concat(xq.rows(), m.heads * m.head_dim);
  std::vector<AttentionCache> hc(m.heads);
  for (std::size_t h = 0; h < m.heads; ++h) {
    const std::size_t off = h * m.head_dim;
    const Matrix o = attention(slice_cols(q, off, m.head_dim), slice_cols(k, off, m.head_dim),
                               slice_cols(v, off, m.head_dim), scale, causal, &hc[h]);
    add_into_cols(concat, off, o);
  }
  Matrix y = linear_forward(m.out, concat);
  if (cache) {
    cache->xq = xq;
    cache->xkv = xkv;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->heads = std::move(hc);
    cache->concat = std::move(concat);
  }
  return y;
}

std::pair<Matrix, Matrix> mha_backward(MultiHeadAttention& m, const MhaCache& c, bool /*causal*/, const Matrix& dy) {
  const Matrix dconcat = linear_backward(m.out, c.concat, dy);
  const double scale = 1.0 / std::sqrt(static_cast<double>(m.head_dim));
  Matrix dq(c.q.rows(), c.q.cols());
  Matrix dk(c.k.rows(), c.k.cols());
  Matrix dv(c.v.rows(), c.v.cols());
  for (std::size_t h = 0; h < m.heads; ++h) {
    const std::size_t off = h * m.head_dim;
    const Matrix qh = slice_cols(c.q, off, m.head_dim);
    const Matrix kh = slice_cols(c.k, off, m.head_dim);
    const Matrix vh = slice_cols(c.v, off, m.head_dim);
    Matrix dqh(qh.rows(), m.head_dim), dkh(kh.rows(), m.head_dim), dvh(vh.rows(), m.head_dim);
    attention_backward(qh, kh, vh, scale, c.heads[h], slice_cols(dconcat, off, m.head_dim), dqh, dkh, dvh);
    add_into_cols(dq, off, dqh);
    add_into_cols(dk, off, dkh);
    add_into_cols(dv, off, dvh);
  }
  Matrix dxq = linear_backward(m.q, c.xq, dq);
  Matrix dxkv = linear_backward(m.k, c.xkv, dk);
  add_inplace(dxkv, linear_backward(m.v, c.xkv, dv));
  return {std::move(dxq), std::move(dxkv)};
}

void collect(MultiHeadAttention& m, ParamRefs& out) {
  collect(m.q, out);
  collect(m.k, out);
  collect(m.v, out);
  collect(m.out, out);
}

}  // namespace grace
