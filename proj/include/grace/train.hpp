// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "grace/model.hpp"

namespace grace {

struct TrainConfig {
  std::size_t steps = 2000;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
};

struct LossPoint {
  std::size_t step = 0;
  double loss = 0.0;
  double aux = 0.0;
};

struct TrainResult {
  std::vector<LossPoint> curve;
};

/// AdamW on mean batch loss. Batches walk a seeded shuffle of the examples,
/// reshuffling each epoch. The reported loss is measured before the update.
TrainResult train(Model& model, std::span<const TrainingExample> data, const TrainConfig& cfg,
                  const std::function<void(const LossPoint&)>& on_step = {});

/// "step,loss,aux" CSV.
std::string loss_curve_csv(const std::vector<LossPoint>& curve);

}  // namespace grace
