#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "lsbpan/annotations/labels.hpp"
#include "lsbpan/network/losses.hpp"
#include "lsbpan/network/model.hpp"

namespace lsbpan::network {

struct TrainSchedule {
  int total_epochs = 200;
  int batch_size = 2;
  std::uint64_t seed = 0;

  // Instance group: SGD with momentum.
  double instance_lr = 0.01;
  int instance_lr_halving_epochs = 25;
  double momentum = 0.9;
  double instance_weight_decay = 5e-4;

  // Semantic group: Adam.
  double semantic_lr = 1e-3;
  double semantic_lr_decay = 0.98;  // per epoch
  double semantic_weight_decay = 5e-7;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  double grad_clip_norm = 10.0;  // global L2 norm; <= 0 disables
  bool augment = true;
  double augment_sigma = 0.1;
  LossWeights loss_weights;
  MatchConfig matching;

  double instance_lr_at(int epoch) const;
  double semantic_lr_at(int epoch) const;
  void validate() const;
};

nlohmann::json to_json(const TrainSchedule& s);
// Missing keys keep their defaults; unknown keys are a config error.
TrainSchedule train_schedule_from_json(const nlohmann::json& j);

struct StepLosses {
  double objectness = 0, box = 0, classification = 0, mask = 0, semantic = 0, total = 0;
  StepLosses& operator+=(const StepLosses& o);
};

struct EpochReport {
  int epoch = 0;  // index of the finished epoch
  int steps = 0;
  StepLosses mean;
};

// Per-parameter optimizer buffers.
struct OptimizerState {
  std::map<std::string, Tensor> velocity;  // SGD
  std::map<std::string, Tensor> adam_m;
  std::map<std::string, Tensor> adam_v;
  std::map<std::string, long> adam_steps;
};

class Trainer {
 public:
  Trainer(PanopticModel& model, TrainSchedule schedule);

  // Runs one epoch: seeded shuffle, batches of batch_size samples, one
  // optimizer update per batch.
  EpochReport train_epoch(const annotations::Dataset& data);

  // Forward, loss and backward for one sample; gradients accumulate.
  StepLosses accumulate(const annotations::Sample& sample, Rng& rng);
  // Applies averaged accumulated gradients and clears them. Parameters that
  // received no gradient are left untouched.
  void apply_update(int batch_samples);

  int epoch() const { return epoch_; }
  void set_epoch(int e) { epoch_ = e; }
  long steps() const { return steps_; }
  void set_steps(long s) { steps_ = s; }
  const TrainSchedule& schedule() const { return schedule_; }
  OptimizerState& optimizer_state() { return state_; }
  const OptimizerState& optimizer_state() const { return state_; }

 private:
  PanopticModel& model_;
  TrainSchedule schedule_;
  OptimizerState state_;
  int epoch_ = 0;
  long steps_ = 0;
};

// Called after each finished epoch with its 1-based count; return false to stop.
using EpochCallback = std::function<bool(const EpochReport&)>;

// Trains until trainer.epoch() == end_epoch. Throws ErrorKind::data on an
// empty dataset.
std::vector<EpochReport> train(Trainer& trainer, const annotations::Dataset& data, int end_epoch,
                               const EpochCallback& on_epoch = {});

}  // namespace lsbpan::network
