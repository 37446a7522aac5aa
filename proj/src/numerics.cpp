// SPDX-License-Identifier: Apache-2.0
#include "grace/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include <json.hpp>

#include "grace/simd.hpp"

namespace grace {

void softmax_inplace(std::span<double> row) {
  if (row.empty()) return;
  const double mx = *std::max_element(row.begin(), row.end());
  double total = 0.0;
  for (double& v : row) {
    v = std::exp(v - mx);
    total += v;
  }
  simd::scale(1.0 / total, row.data(), row.size());
}

double log_sum_exp(std::span<const double> row) {
  const double mx = *std::max_element(row.begin(), row.end());
  double total = 0.0;
  for (double v : row) total += std::exp(v - mx);
  return mx + std::log(total);
}

Matrix softmax_rows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t i = 0; i < out.rows(); ++i) softmax_inplace(out.row(i));
  return out;
}

Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v, double scale, bool causal,
                 AttentionCache* cache) {
  if (k.rows() == 0) throw ValidationError("empty attention context");
  if (k.rows() != v.rows()) throw ValidationError("attention: key/value count mismatch");
  if (q.cols() != k.cols()) throw ValidationError("attention: query/key width mismatch");
  if (causal && q.rows() > k.rows()) throw ValidationError("attention: causal needs keys for every query");

  const auto& kern = simd::active();
  const std::size_t d = q.cols();
  Matrix probs(q.rows(), k.rows());
  Matrix out(q.rows(), v.cols());
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const std::size_t visible = causal ? i + 1 : k.rows();
    auto p = probs.row(i).first(visible);
    for (std::size_t j = 0; j < visible; ++j) p[j] = scale * kern.dot(q.row(i).data(), k.row(j).data(), d);
    softmax_inplace(p);
    double* oi = out.row(i).data();
    for (std::size_t j = 0; j < visible; ++j) kern.axpy(p[j], v.row(j).data(), oi, v.cols());
  }
  if (cache) cache->probs = std::move(probs);
  return out;
}

void attention_backward(const Matrix& q, const Matrix& k, const Matrix& v, double scale,
                        const AttentionCache& cache, const Matrix& dout, Matrix& dq, Matrix& dk, Matrix& dv) {
  const auto& kern = simd::active();
  const Matrix& p = cache.probs;
  const std::size_t d = q.cols();
  std::vector<double> ds(k.rows());
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const double* go = dout.row(i).data();
    const double* pi = p.row(i).data();
    // dP_ij = dout_i . v_j ; dS = P * (dP - sum_j P dP)
    double weighted = 0.0;
    for (std::size_t j = 0; j < k.rows(); ++j) {
      if (pi[j] == 0.0) {
        ds[j] = 0.0;
        continue;
      }
      ds[j] = kern.dot(go, v.row(j).data(), v.cols());
      weighted += pi[j] * ds[j];
      kern.axpy(pi[j], go, dv.row(j).data(), v.cols());
    }
    for (std::size_t j = 0; j < k.rows(); ++j) {
      if (pi[j] == 0.0) continue;
      const double g = scale * pi[j] * (ds[j] - weighted);
      kern.axpy(g, k.row(j).data(), dq.row(i).data(), d);
      kern.axpy(g, q.row(i).data(), dk.row(j).data(), d);
    }
  }
}

void zero_grads(const ParamRefs& params) {
  for (Param* p : params) p->zero_grad();
}

OptState make_opt_state(const ParamRefs& params, const AdamWConfig& config) {
  OptState s;
  s.config = config;
  for (const Param* p : params) {
    s.first_moment.emplace_back(p->value.rows(), p->value.cols());
    s.second_moment.emplace_back(p->value.rows(), p->value.cols());
  }
  return s;
}

void adamw_step(OptState& opt, const ParamRefs& params) {
  if (params.size() != opt.first_moment.size()) throw ValidationError("adamw: parameter count changed");
  const auto& c = opt.config;
  ++opt.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(opt.step));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param& p = *params[pi];
    auto& m = opt.first_moment[pi].values();
    auto& v = opt.second_moment[pi].values();
    auto& w = p.value.values();
    const auto& g = p.grad.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] -= c.learning_rate * c.weight_decay * w[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

GradCheckResult grad_check(const std::function<double()>& loss, const ParamRefs& params,
                           const GradCheckOptions& opts) {
  GradCheckResult r;
  std::mt19937_64 rng(opts.seed);
  for (Param* p : params) {
    auto& w = p->value.values();
    std::vector<std::size_t> idx(w.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (opts.max_entries_per_param && idx.size() > opts.max_entries_per_param) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(opts.max_entries_per_param);
    }
    for (std::size_t i : idx) {
      const double saved = w[i];
      auto at = [&](double offset) {
        w[i] = saved + offset;
        const double v = loss();
        if (!std::isfinite(v)) throw std::runtime_error("grad_check: non-finite loss");
        return v;
      };
      const double h = opts.eps;
      double numeric = 0.0;
      if (opts.fourth_order)
        numeric = (-at(2 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2 * h)) / (12.0 * h);
      else
        numeric = (at(h) - at(-h)) / (2.0 * h);
      w[i] = saved;
      const double analytic = p->grad.values()[i];
      const double rel =
          std::abs(analytic - numeric) / std::max(opts.denominator_floor, std::abs(analytic) + std::abs(numeric));
      ++r.entries_checked;
      if (rel > r.max_rel_error) {
        r.max_rel_error = rel;
        r.worst_param = p->name;
        r.worst_index = i;
        r.analytic = analytic;
        r.numeric = numeric;
      }
    }
  }
  return r;
}

void save_checkpoint(const std::string& path, const ParamRefs& params) {
  nlohmann::json j;
  j["format"] = "grace-checkpoint";
  j["version"] = kCheckpointVersion;
  auto& arr = j["params"] = nlohmann::json::array();
  for (const Param* p : params) {
    arr.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()},
                   {"values", p->value.values()}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << j.dump() << '\n';
}

void load_checkpoint(const std::string& path, const ParamRefs& params) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint " + path + ": " + e.what());
  }
  if (j.value("format", "") != "grace-checkpoint" || j.value("version", 0) != kCheckpointVersion)
    throw ValidationError("checkpoint " + path + ": unsupported format or version");
  std::size_t matched = 0;
  for (const auto& entry : j.at("params")) {
    const auto name = entry.at("name").get<std::string>();
    auto it = std::find_if(params.begin(), params.end(), [&](const Param* p) { return p->name == name; });
    if (it == params.end()) throw ValidationError("checkpoint has unknown parameter " + name);
    Param& p = **it;
    const auto rows = entry.at("rows").get<std::size_t>();
    const auto cols = entry.at("cols").get<std::size_t>();
    if (rows != p.value.rows() || cols != p.value.cols())
      throw ValidationError("checkpoint shape mismatch for " + name);
    p.value = Matrix(rows, cols, entry.at("values").get<std::vector<double>>());
    ++matched;
  }
  if (matched != params.size()) throw ValidationError("checkpoint is missing parameters");
}

}  // namespace grace
