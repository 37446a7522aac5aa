// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "grace/numerics.hpp"
#include "grace/random.hpp"

namespace grace {

/// Records discrete routing decisions (block selection, expert choice) on one
/// pass and replays them on later passes, so finite differences see a fixed
/// routing.
class RoutingTrace {
 public:
  enum class Mode { Record, Replay };

  std::vector<std::size_t> resolve(const std::function<std::vector<std::size_t>()>& compute);
  void replay() {
    mode_ = Mode::Replay;
    cursor_ = 0;
  }
  void clear() {
    log_.clear();
    cursor_ = 0;
    mode_ = Mode::Record;
  }
  Mode mode() const { return mode_; }
  std::size_t size() const { return log_.size(); }

 private:
  Mode mode_ = Mode::Record;
  std::vector<std::vector<std::size_t>> log_;
  std::size_t cursor_ = 0;
};

void init_normal(Param& p, Rng& rng, double stddev);

// y = x W + b, W is (in x out)
struct Linear {
  Param weight;
  Param bias;
};

Linear make_linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng, bool with_init = true);
Matrix linear_forward(const Linear& l, const Matrix& x);
/// Accumulates weight/bias gradients and returns dx.
Matrix linear_backward(Linear& l, const Matrix& x, const Matrix& dy);
void collect(Linear& l, ParamRefs& out);

struct LayerNorm {
  Param gamma;
  Param beta;
  double eps = 1e-5;
};

struct LayerNormCache {
  Matrix xhat;
  std::vector<double> rstd;
};

LayerNorm make_layernorm(const std::string& name, std::size_t dim);
Matrix layernorm_forward(const LayerNorm& ln, const Matrix& x, LayerNormCache* cache);
Matrix layernorm_backward(LayerNorm& ln, const LayerNormCache& cache, const Matrix& dy);
void collect(LayerNorm& ln, ParamRefs& out);

/// ReLU(x W1 + b1) W2 + b2
struct FeedForward {
  Linear up;
  Linear down;
};

struct FeedForwardCache {
  Matrix x;
  Matrix hidden;  // post-ReLU
};

FeedForward make_feedforward(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);
Matrix feedforward_forward(const FeedForward& f, const Matrix& x, FeedForwardCache* cache);
Matrix feedforward_backward(FeedForward& f, const FeedForwardCache& cache, const Matrix& dy);
void collect(FeedForward& f, ParamRefs& out);

/// Dense multi-head attention with separate query and key/value sources.
struct MultiHeadAttention {
  Linear q, k, v, out;
  std::size_t heads = 1;
  std::size_t head_dim = 1;
};

struct MhaCache {
  Matrix xq, xkv;
  Matrix q, k, v;
  std::vector<AttentionCache> heads;
  Matrix concat;
};

MultiHeadAttention make_mha(const std::string& name, std::size_t model_dim, std::size_t heads, std::size_t head_dim,
                            Rng& rng);
Matrix mha_forward(const MultiHeadAttention& m, const Matrix& xq, const Matrix& xkv, bool causal, MhaCache* cache);
/// Forward with key/value projections already computed (decoder cross-attention reuse).
Matrix mha_forward_projected(const MultiHeadAttention& m, const Matrix& xq, const Matrix& k, const Matrix& v,
                             bool causal);
/// Returns {dxq, dxkv}.
std::pair<Matrix, Matrix> mha_backward(MultiHeadAttention& m, const MhaCache& cache, bool causal, const Matrix& dy);
void collect(MultiHeadAttention& m, ParamRefs& out);

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace grace
