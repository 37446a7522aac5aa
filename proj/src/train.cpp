// SPDX-License-Identifier: Apache-2.0
#include "grace/train.hpp"

#include <cstdio>
#include <numeric>

#include "grace/random.hpp"

namespace grace {

TrainResult train(Model& model, std::span<const TrainingExample> data, const TrainConfig& cfg,
                  const std::function<void(const LossPoint&)>& on_step) {
  if (data.empty()) throw ValidationError("train: empty dataset");
  if (cfg.batch_size == 0) throw ValidationError("train: batch size must be positive");
  const ParamRefs params = model.parameters();
  OptState opt = make_opt_state(params, {cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay});
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;

  TrainResult result;
  result.curve.reserve(cfg.steps);
  const std::size_t batch = std::min(cfg.batch_size, data.size());
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    zero_grads(params);
    LossPoint point{step, 0.0, 0.0};
    for (std::size_t b = 0; b < batch; ++b) {
      if (cursor == order.size()) {
        shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const LossResult r = example_loss(model, data[order[cursor++]], true, 1.0 / static_cast<double>(batch));
      point.loss += r.loss / static_cast<double>(batch);
      point.aux += r.aux / static_cast<double>(batch);
    }
    adamw_step(opt, params);
    result.curve.push_back(point);
    if (on_step) on_step(point);
  }
  return result;
}

std::string loss_curve_csv(const std::vector<LossPoint>& curve) {
  std::string out = "step,loss,aux\n";
  char buf[96];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g\n", p.step, p.loss, p.aux);
    out += buf;
  }
  return out;
}

}  // namespace grace
