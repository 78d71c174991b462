#include "lsbpan/network/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lsbpan/error.hpp"
#include "lsbpan/imaging/transform.hpp"

namespace lsbpan::network {

using namespace lsbpan::nn;

double TrainSchedule::instance_lr_at(int epoch) const {
  return instance_lr * std::pow(0.5, std::floor(static_cast<double>(epoch) / instance_lr_halving_epochs));
}

double TrainSchedule::semantic_lr_at(int epoch) const { return semantic_lr * std::pow(semantic_lr_decay, epoch); }

void TrainSchedule::validate() const {
  if (total_epochs < 1) fail(ErrorKind::config, "train.total_epochs must be positive");
  if (batch_size < 1) fail(ErrorKind::config, "train.batch_size must be positive");
  if (!(instance_lr > 0) || !(semantic_lr > 0)) fail(ErrorKind::config, "learning rates must be positive");
  if (instance_lr_halving_epochs < 1) fail(ErrorKind::config, "train.instance_lr_halving_epochs must be positive");
  if (!(semantic_lr_decay > 0 && semantic_lr_decay <= 1)) fail(ErrorKind::config, "train.semantic_lr_decay must be in (0,1]");
  if (momentum < 0 || momentum >= 1) fail(ErrorKind::config, "train.momentum must be in [0,1)");
  if (augment_sigma < 0) fail(ErrorKind::config, "train.augment_sigma must be >= 0");
  if (matching.max_positives < 1 || matching.negative_ratio < 0 || matching.max_mask_rois < 0)
    fail(ErrorKind::config, "train.matching values are invalid");
  if (!(matching.negative_iou <= matching.positive_iou)) fail(ErrorKind::config, "train.matching IoU thresholds are inverted");
}

nlohmann::json to_json(const TrainSchedule& s) {
  return {{"total_epochs", s.total_epochs},
          {"batch_size", s.batch_size},
          {"seed", s.seed},
          {"instance_lr", s.instance_lr},
          {"instance_lr_halving_epochs", s.instance_lr_halving_epochs},
          {"momentum", s.momentum},
          {"instance_weight_decay", s.instance_weight_decay},
          {"semantic_lr", s.semantic_lr},
          {"semantic_lr_decay", s.semantic_lr_decay},
          {"semantic_weight_decay", s.semantic_weight_decay},
          {"adam_beta1", s.adam_beta1},
          {"adam_beta2", s.adam_beta2},
          {"adam_eps", s.adam_eps},
          {"grad_clip_norm", s.grad_clip_norm},
          {"augment", s.augment},
          {"augment_sigma", s.augment_sigma},
          {"loss_weights",
           {{"objectness", s.loss_weights.objectness},
            {"box", s.loss_weights.box},
            {"class", s.loss_weights.classification},
            {"mask", s.loss_weights.mask},
            {"semantic", s.loss_weights.semantic}}},
          {"matching",
           {{"positive_iou", s.matching.positive_iou},
            {"negative_iou", s.matching.negative_iou},
            {"keep_best_anchor", s.matching.keep_best_anchor},
            {"max_positives", s.matching.max_positives},
            {"negative_ratio", s.matching.negative_ratio},
            {"max_mask_rois", s.matching.max_mask_rois}}}};
}

namespace {

void check_keys(const nlohmann::json& j, const nlohmann::json& reference, const std::string& where) {
  if (!j.is_object()) fail(ErrorKind::config, where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!reference.contains(k)) fail(ErrorKind::config, "unknown key " + where + "." + k);
    if (reference.at(k).is_object()) check_keys(v, reference.at(k), where + "." + k);
  }
}

template <class T>
void get_to(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, where + "." + key + ": " + e.what());
  }
}

}  // namespace

TrainSchedule train_schedule_from_json(const nlohmann::json& j) {
  TrainSchedule s;
  check_keys(j, to_json(s), "train");
  get_to(j, "total_epochs", s.total_epochs, "train");
  get_to(j, "batch_size", s.batch_size, "train");
  get_to(j, "seed", s.seed, "train");
  get_to(j, "instance_lr", s.instance_lr, "train");
  get_to(j, "instance_lr_halving_epochs", s.instance_lr_halving_epochs, "train");
  get_to(j, "momentum", s.momentum, "train");
  get_to(j, "instance_weight_decay", s.instance_weight_decay, "train");
  get_to(j, "semantic_lr", s.semantic_lr, "train");
  get_to(j, "semantic_lr_decay", s.semantic_lr_decay, "train");
  get_to(j, "semantic_weight_decay", s.semantic_weight_decay, "train");
  get_to(j, "adam_beta1", s.adam_beta1, "train");
  get_to(j, "adam_beta2", s.adam_beta2, "train");
  get_to(j, "adam_eps", s.adam_eps, "train");
  get_to(j, "grad_clip_norm", s.grad_clip_norm, "train");
  get_to(j, "augment", s.augment, "train");
  get_to(j, "augment_sigma", s.augment_sigma, "train");
  if (j.contains("loss_weights")) {
    const auto& w = j.at("loss_weights");
    get_to(w, "objectness", s.loss_weights.objectness, "train.loss_weights");
    get_to(w, "box", s.loss_weights.box, "train.loss_weights");
    get_to(w, "class", s.loss_weights.classification, "train.loss_weights");
    get_to(w, "mask", s.loss_weights.mask, "train.loss_weights");
    get_to(w, "semantic", s.loss_weights.semantic, "train.loss_weights");
  }
  if (j.contains("matching")) {
    const auto& m = j.at("matching");
    get_to(m, "positive_iou", s.matching.positive_iou, "train.matching");
    get_to(m, "negative_iou", s.matching.negative_iou, "train.matching");
    get_to(m, "keep_best_anchor", s.matching.keep_best_anchor, "train.matching");
    get_to(m, "max_positives", s.matching.max_positives, "train.matching");
    get_to(m, "negative_ratio", s.matching.negative_ratio, "train.matching");
    get_to(m, "max_mask_rois", s.matching.max_mask_rois, "train.matching");
  }
  s.validate();
  return s;
}

StepLosses& StepLosses::operator+=(const StepLosses& o) {
  objectness += o.objectness;
  box += o.box;
  classification += o.classification;
  mask += o.mask;
  semantic += o.semantic;
  total += o.total;
  return *this;
}

Trainer::Trainer(PanopticModel& model, TrainSchedule schedule) : model_(model), schedule_(std::move(schedule)) {
  schedule_.validate();
}

StepLosses Trainer::accumulate(const annotations::Sample& input, Rng& rng) {
  const annotations::Sample sample = schedule_.augment ? imaging::augment(input, rng, schedule_.augment_sigma) : input;
  const int H = sample.image.height, W = sample.image.width;
  const AnchorSet anchors = model_.anchors(H, W);
  const Features f = model_.backbone(image_tensor(sample.image));
  const DenseOutput dense = model_.instance_dense(f, anchors);
  LossTargets targets = build_targets(sample, anchors, schedule_.matching, rng);
  select_mask_rois(targets, sample, anchors, dense.box_deltas->value, schedule_.matching,
                   model_.config().mask_size, rng);

  Predictions pred{dense.objectness, dense.class_logits, dense.box_deltas, nullptr, nullptr};
  pred.mask_logits = model_.mask_logits(f, targets.mask_rois, targets.mask_classes);
  if (targets.cirrus) pred.cirrus_logits = model_.semantic(f, H, W).logits;
  const LossTerms L = compute_losses(pred, targets, schedule_.loss_weights);
  L.check_finite();
  backward(L.total);

  StepLosses s;
  s.objectness = L.objectness->value.item();
  s.box = L.box->value.item();
  s.classification = L.classification->value.item();
  s.mask = L.mask->value.item();
  s.semantic = L.semantic->value.item();
  s.total = L.total->value.item();
  return s;
}

void Trainer::apply_update(int batch_samples) {
  auto& params = model_.params().params();
  const double inv = 1.0 / std::max(1, batch_samples);
  double norm2 = 0.0;
  for (auto& p : params) {
    if (p.var->grad.empty()) continue;
    for (std::size_t i = 0; i < p.var->grad.size(); ++i) {
      p.var->grad[i] *= inv;
      norm2 += p.var->grad[i] * p.var->grad[i];
    }
  }
  if (!std::isfinite(norm2)) fail(ErrorKind::numeric, "non-finite gradient norm");
  const double clip = schedule_.grad_clip_norm > 0 && std::sqrt(norm2) > schedule_.grad_clip_norm
                          ? schedule_.grad_clip_norm / std::sqrt(norm2)
                          : 1.0;

  const double lr_i = schedule_.instance_lr_at(epoch_), lr_s = schedule_.semantic_lr_at(epoch_);
  const double b1 = schedule_.adam_beta1, b2 = schedule_.adam_beta2;
  for (auto& p : params) {
    if (p.var->grad.empty()) continue;
    Tensor& w = p.var->value;
    auto grad_at = [&](std::size_t i) { return p.var->grad[i] * clip; };
    if (p.group == ParamGroup::instance) {
      Tensor& v = state_.velocity.try_emplace(p.name, Tensor::zeros_like(w)).first->second;
      for (std::size_t i = 0; i < w.size(); ++i) {
        v[i] = schedule_.momentum * v[i] + grad_at(i) + schedule_.instance_weight_decay * w[i];
        w[i] -= lr_i * v[i];
      }
    } else {
      Tensor& m = state_.adam_m.try_emplace(p.name, Tensor::zeros_like(w)).first->second;
      Tensor& v = state_.adam_v.try_emplace(p.name, Tensor::zeros_like(w)).first->second;
      const auto t = static_cast<double>(++state_.adam_steps[p.name]);
      const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double g = grad_at(i) + schedule_.semantic_weight_decay * w[i];
        m[i] = b1 * m[i] + (1 - b1) * g;
        v[i] = b2 * v[i] + (1 - b2) * g * g;
        w[i] -= lr_s * (m[i] / c1) / (std::sqrt(v[i] / c2) + schedule_.adam_eps);
      }
    }
  }
  model_.params().zero_grad();
  ++steps_;
}

EpochReport Trainer::train_epoch(const annotations::Dataset& data) {
  if (data.empty()) fail(ErrorKind::data, "cannot train on an empty dataset");
  Rng rng = derive_rng(schedule_.seed, static_cast<std::uint64_t>(epoch_));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  EpochReport report;
  model_.params().zero_grad();
  int in_batch = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    report.mean += accumulate(data[order[k]], rng);
    if (++in_batch == schedule_.batch_size || k + 1 == order.size()) {
      apply_update(in_batch);
      ++report.steps;
      in_batch = 0;
    }
  }
  const double n = static_cast<double>(order.size());
  report.mean = {report.mean.objectness / n, report.mean.box / n, report.mean.classification / n,
                 report.mean.mask / n,       report.mean.semantic / n, report.mean.total / n};
  ++epoch_;
  report.epoch = epoch_;
  return report;
}

std::vector<EpochReport> train(Trainer& trainer, const annotations::Dataset& data, int end_epoch,
                               const EpochCallback& on_epoch) {
  if (data.empty()) fail(ErrorKind::data, "cannot train on an empty dataset");
  std::vector<EpochReport> reports;
  while (trainer.epoch() < end_epoch) {
    reports.push_back(trainer.train_epoch(data));
    if (on_epoch && !on_epoch(reports.back())) break;
  }
  return reports;
}

}  // namespace lsbpan::network
