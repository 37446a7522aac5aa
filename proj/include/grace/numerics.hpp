// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "grace/matrix.hpp"

namespace grace {

/// Precondition violations: bad shapes, out-of-range ids, malformed input.
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------- softmax

/// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& m);
void softmax_inplace(std::span<double> row);
double log_sum_exp(std::span<const double> row);

// -------------------------------------------------------------- attention

struct AttentionCache {
  Matrix probs;  // queries x keys
};

/// Scaled dot-product attention, one query per row of q. Each output row is
/// a convex combination of the rows of v. With `causal`, query i only sees
/// keys 0..i. Throws ValidationError when there are no keys.
Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v, double scale, bool causal = false,
                 AttentionCache* cache = nullptr);

/// Accumulates into dq, dk, dv (which must be pre-shaped like q, k, v).
void attention_backward(const Matrix& q, const Matrix& k, const Matrix& v, double scale,
                        const AttentionCache& cache, const Matrix& dout, Matrix& dq, Matrix& dk, Matrix& dv);

// ------------------------------------------------------------- parameters

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;

  Param() = default;
  Param(std::string n, std::size_t rows, std::size_t cols)
      : name(std::move(n)), value(rows, cols), grad(rows, cols) {}

  void zero_grad() { grad.fill(0.0); }
};

using ParamRefs = std::vector<Param*>;

void zero_grads(const ParamRefs& params);

// ------------------------------------------------------------------ AdamW

struct AdamWConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct OptState {
  AdamWConfig config;
  std::int64_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
};

OptState make_opt_state(const ParamRefs& params, const AdamWConfig& config);

/// Decoupled weight decay followed by a bias-corrected Adam update.
void adamw_step(OptState& opt, const ParamRefs& params);

// ------------------------------------------------------------- grad check

struct GradCheckOptions {
  double eps = 1e-5;
  // Entries checked per parameter; 0 means every entry.
  std::size_t max_entries_per_param = 0;
  std::uint64_t seed = 0;
  // Five-point stencil (error O(eps^4)) instead of the two-point one.
  bool fourth_order = false;
  double denominator_floor = 1e-8;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t entries_checked = 0;
};

/// Compares the gradients already stored in `params` against central
/// differences of `loss`. Relative error is |a - n| / max(floor, |a| + |n|).
GradCheckResult grad_check(const std::function<double()>& loss, const ParamRefs& params,
                           const GradCheckOptions& opts = {});

// ------------------------------------------------------------- checkpoint

inline constexpr int kCheckpointVersion = 1;

/// JSON: {"format":"grace-checkpoint","version":1,"params":[{name,rows,cols,values}]}.
void save_checkpoint(const std::string& path, const ParamRefs& params);
/// Loads values into `params`, matching by name; shape mismatches throw.
void load_checkpoint(const std::string& path, const ParamRefs& params);

}  // namespace grace
