#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vocnet/autodiff.hpp"
#include "vocnet/dataset.hpp"
#include "vocnet/optim.hpp"

namespace vocnet {

struct TrainConfig {
  int epochs = 300;
  int batch_size = 32;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  std::uint64_t seed = 0;
  int patience = 30;

  // Throws DomainError unless every field is positive.
  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_validation_loss = 0.0;
};

using ParameterSnapshot = std::vector<Tensor>;

template <typename Model>
ParameterSnapshot snapshot(const Model& model) {
  ParameterSnapshot out;
  for (const Parameter* p : model.parameters()) out.push_back(p->value);
  return out;
}

template <typename Model>
void restore(Model& model, const ParameterSnapshot& snap) {
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = snap.at(i);
}

// [N, 1, channels] input batch for the selected spectra.
Tensor spectra_batch(std::span<const Spectrum> spectra, std::span<const std::size_t> order);
// [N, 10] one-hot targets and [N, 9] concentration targets.
Tensor class_targets(std::span<const Spectrum> spectra, std::span<const std::size_t> order);
Tensor concentration_targets(std::span<const Spectrum> spectra,
                             std::span<const std::size_t> order);

std::vector<std::size_t> iota_indices(std::size_t n);

}  // namespace vocnet
