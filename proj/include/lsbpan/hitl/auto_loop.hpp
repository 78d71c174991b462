#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lsbpan/hitl/store.hpp"
#include "lsbpan/network/checkpoint.hpp"
#include "lsbpan/network/train.hpp"
#include "lsbpan/panoptic/panoptic.hpp"

namespace lsbpan::hitl {

struct AutoLoopConfig {
  int total_epochs = 200;
  double withhold = 0.5;
  std::uint64_t seed = 0;
  EnqueueConfig enqueue;
  double oracle_iou = 0.5;
  panoptic::FuseConfig fuse;
  network::InferenceConfig inference;
  network::TrainSchedule train;  // total_epochs and seed are overridden
  network::ModelConfig model;
  int checkpoint_every = 10;  // 0 disables
  std::string host = "127.0.0.1";
  bool use_http = true;  // post decisions through the review service
};

struct RoundSummary {
  int round = 0;
  int epoch = 0;
  std::size_t enqueued = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  int version = 0;
  std::size_t labels = 0;  // after the round
};

struct AutoLoopResult {
  std::vector<RoundSummary> rounds;
  std::size_t withheld = 0;
  std::size_t withheld_enqueued = 0;
  std::size_t initial_labels = 0;
  std::size_t accepted = 0;
  std::size_t final_labels = 0;
  AcceptanceStats stats;
  std::vector<network::EpochReport> epochs;

  nlohmann::json to_json() const;
};

using LogFn = std::function<void(const std::string&)>;

// Runs the review protocol on `full`: withholds labels, trains with reviews
// at the schedule's epochs, lets the oracle decide each queue (over HTTP when
// use_http) and trains on each new dataset version until total_epochs.
// State goes to out_dir/state, checkpoints to out_dir/checkpoints. The
// trained model is returned through `model_out` when given.
AutoLoopResult run_auto_loop(const Dataset& full, const AutoLoopConfig& config, const std::filesystem::path& out_dir,
                             const LogFn& log = {},
                             std::unique_ptr<network::PanopticModel>* model_out = nullptr);

// Model predictions fused per sample.
std::vector<panoptic::PanopticOutput> predict_dataset(const network::PanopticModel& model, const Dataset& data,
                                                      const network::InferenceConfig& inference,
                                                      const panoptic::FuseConfig& fuse);

std::size_t label_count(const Dataset& d);

}  // namespace lsbpan::hitl
