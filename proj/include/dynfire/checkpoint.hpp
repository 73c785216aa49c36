#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dynfire/training.hpp"

namespace dynfire {

/// Container layout: magic "DFCK1\0", u64 LE manifest length, JSON manifest,
/// then float32 LE tensors in manifest order. Files carry no timestamps, so
/// equal states give byte-identical files.
struct CheckpointInfo {
  Variant variant = Variant::dynamic_autoenc;
  ModelDims dims;
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;
  bool has_train_state = false;
  std::vector<std::string> param_names;
};

std::vector<std::uint8_t> encode_model_checkpoint(const Model& model, std::uint64_t seed = 0,
                                                  std::uint64_t iteration = 0);
std::vector<std::uint8_t> encode_train_checkpoint(const TrainState& state);

void save_model_checkpoint(const Model& model, const std::filesystem::path& path, std::uint64_t seed = 0,
                           std::uint64_t iteration = 0);
void save_train_checkpoint(const TrainState& state, const std::filesystem::path& path);

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);
/// Model parameters from either kind of checkpoint.
Model load_model(const std::filesystem::path& path);
Model decode_model(const std::vector<std::uint8_t>& bytes);
/// Full training state. The replay buffer is rebuilt from `train`, which
/// must be the dataset the state was produced on (checked by fingerprint).
TrainState load_train_checkpoint(const std::filesystem::path& path, const Dataset& train);
TrainState decode_train_checkpoint(const std::vector<std::uint8_t>& bytes, const Dataset& train);

std::uint64_t dataset_fingerprint(const Dataset& data);

}  // namespace dynfire
