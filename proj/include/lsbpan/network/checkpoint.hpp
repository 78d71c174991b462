#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "lsbpan/network/model.hpp"
#include "lsbpan/network/train.hpp"

namespace lsbpan::network {

// File layout (all integers little-endian):
//   "LSBC"  u32 version  u64 header_bytes  header JSON  tensor data
// The header holds the model config, anchor config, epoch, step count, the
// train schedule (when saved from a trainer), optimizer step counts and a
// tensor directory of {name, shape, offset} entries. Offsets are in bytes
// from the start of the tensor data; values are float32. Optimizer buffers
// are stored as tensors named "optim.velocity/<param>", "optim.adam_m/<param>"
// and "optim.adam_v/<param>".
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig model;
  int epoch = 0;
  long steps = 0;
  std::optional<TrainSchedule> schedule;
  std::map<std::string, Tensor> tensors;  // parameters and optimizer buffers
  std::map<std::string, long> adam_steps;
};

void save_checkpoint(const std::filesystem::path& path, const PanopticModel& model, const Trainer* trainer = nullptr);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Copies every model parameter from `tensors`. A stored first-layer kernel
// with 3 input channels is widened by expand_input_channels. With `strict`,
// a missing parameter is an error; otherwise it keeps its initial value.
// Returns the number of parameters loaded.
std::size_t load_weights(PanopticModel& model, const std::map<std::string, Tensor>& tensors, bool strict = true);

std::unique_ptr<PanopticModel> model_from_checkpoint(const Checkpoint& ckpt);
// Restores epoch, step count and optimizer buffers.
void restore_trainer(Trainer& trainer, const Checkpoint& ckpt);

}  // namespace lsbpan::network
