#pragma once

#include <cstdint>
#include <filesystem>

#include "orgtrl/autodiff.hpp"

namespace orgtrl {

// Checkpoint directory: one tensor file per parameter plus index.txt listing
// names and shapes. Training state (Adam moments, step counter, next epoch)
// goes into an optimizer/ subdirectory so weight-only checkpoints stay usable
// on their own.
void save_parameters(const ad::ParameterStore<float>& store, const std::filesystem::path& dir);
void load_parameters(ad::ParameterStore<float>& store, const std::filesystem::path& dir);

struct TrainState {
  std::int64_t step = 0;
  std::int64_t next_epoch = 0;
};

void save_train_state(const ad::ParameterStore<float>& store, const std::filesystem::path& dir,
                      const TrainState& state);
TrainState load_train_state(ad::ParameterStore<float>& store, const std::filesystem::path& dir);
bool has_train_state(const std::filesystem::path& dir);

}  // namespace orgtrl
