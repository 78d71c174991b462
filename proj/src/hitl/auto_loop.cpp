#include "lsbpan/hitl/auto_loop.hpp"

#include <cstdio>

#include "httplib.h"
#include "lsbpan/error.hpp"
#include "lsbpan/hitl/service.hpp"
#include "lsbpan/nn/autograd.hpp"

namespace lsbpan::hitl {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::size_t label_count(const Dataset& d) {
  std::size_t n = 0;
  for (const auto& s : d) n += s.instances.size();
  return n;
}

std::vector<panoptic::PanopticOutput> predict_dataset(const network::PanopticModel& model, const Dataset& data,
                                                      const network::InferenceConfig& inference,
                                                      const panoptic::FuseConfig& fuse) {
  nn::NoGradGuard no_grad;
  std::vector<panoptic::PanopticOutput> out;
  out.reserve(data.size());
  for (const auto& s : data) {
    auto raw = model.predict(s.image, inference);
    auto o = panoptic::fuse(raw.detections, std::move(raw.cirrus_prob), raw.height, raw.width, fuse);
    o.sample_id = s.id();
    out.push_back(std::move(o));
  }
  return out;
}

namespace {

json rate_json(const RateCount& c) {
  const auto r = c.rate();
  return {{"accepted", c.accepted}, {"decided", c.decided}, {"rate", r ? json(*r) : json(nullptr)}};
}

void post_decisions(const std::string& host, int port, const std::vector<Decision>& decisions) {
  httplib::Client client(host, port);
  client.set_read_timeout(60, 0);
  for (const auto& d : decisions) {
    const json body = {{"status", std::string(to_string(d.status))}};
    const auto res = client.Post("/api/items/" + d.item_id + "/decision", body.dump(), "application/json");
    if (!res) fail(ErrorKind::data, "review service unreachable while posting " + d.item_id);
    if (res->status != 200) fail(ErrorKind::data, "review service rejected " + d.item_id + ": " + res->body);
  }
}

}  // namespace

json AutoLoopResult::to_json() const {
  json rounds_j = json::array();
  for (const auto& r : rounds)
    rounds_j.push_back({{"round", r.round},
                        {"epoch", r.epoch},
                        {"enqueued", r.enqueued},
                        {"accepted", r.accepted},
                        {"rejected", r.rejected},
                        {"version", r.version},
                        {"labels", r.labels}});
  const int n = static_cast<int>(rounds.size());
  return {{"rounds", rounds_j},
          {"withheld", withheld},
          {"withheld_enqueued", withheld_enqueued},
          {"withheld_enqueued_fraction",
           withheld == 0 ? json(nullptr) : json(static_cast<double>(withheld_enqueued) / withheld)},
          {"initial_labels", initial_labels},
          {"accepted", accepted},
          {"final_labels", final_labels},
          {"acceptance", stats.to_json()},
          {"early_rounds", rate_json(stats.over_rounds(1, std::min(n, 4)))},
          {"late_rounds", rate_json(stats.over_rounds(5, n))}};
}

AutoLoopResult run_auto_loop(const Dataset& full, const AutoLoopConfig& config, const fs::path& out_dir,
                             const LogFn& log, std::unique_ptr<network::PanopticModel>* model_out) {
  const auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  const HitlSchedule schedule = build_schedule(config.total_epochs);
  if (full.empty()) fail(ErrorKind::data, "HITL loop needs a non-empty dataset");

  const Withheld withheld = withhold_labels(full, config.withhold, config.seed);
  HitlStore store = HitlStore::create(out_dir / "state", withheld.visible);

  auto model = std::make_unique<network::PanopticModel>(config.model);
  network::TrainSchedule ts = config.train;
  ts.total_epochs = config.total_epochs;
  ts.seed = config.seed;
  network::Trainer trainer(*model, ts);

  const fs::path ckpt_dir = out_dir / "checkpoints";
  const auto on_epoch = [&](const network::EpochReport& r) {
    char line[160];
    std::snprintf(line, sizeof line, "epoch %d loss %.4f", r.epoch, r.mean.total);
    say(line);
    if (config.checkpoint_every > 0 && r.epoch % config.checkpoint_every == 0) {
      fs::create_directories(ckpt_dir);
      char name[64];
      std::snprintf(name, sizeof name, "epoch_%04d.ckpt", r.epoch);
      network::save_checkpoint(ckpt_dir / name, *model, &trainer);
    }
    return true;
  };

  std::unique_ptr<ReviewServer> server;
  int port = 0;
  if (config.use_http) {
    server = std::make_unique<ReviewServer>(store);
    port = server->start(config.host, 0);
    say("review service on " + config.host + ":" + std::to_string(port));
  }

  AutoLoopResult result;
  result.withheld = withheld.count();
  result.initial_labels = label_count(withheld.visible);
  Dataset dataset = withheld.visible;
  std::vector<ReviewItem> all_items;

  for (int r = 0; r < schedule.rounds(); ++r) {
    const int round = r + 1, epoch = schedule.review_epochs[static_cast<std::size_t>(r)];
    auto reports = network::train(trainer, dataset, epoch, on_epoch);
    result.epochs.insert(result.epochs.end(), reports.begin(), reports.end());

    const auto preds = predict_dataset(*model, dataset, config.inference, config.fuse);
    auto items = enqueue_false_positives(preds, dataset, round, config.enqueue);
    store.open_round(round, items);
    const auto decisions = oracle_reviewer(items, full, dataset, config.oracle_iou);
    if (config.use_http) {
      post_decisions(config.host, port, decisions);
    } else {
      for (const auto& d : decisions) store.decide(d.item_id, d.status);
    }
    const int version = store.commit_round();
    dataset = store.load_current();

    RoundSummary s;
    s.round = round;
    s.epoch = epoch;
    s.enqueued = items.size();
    for (const auto& d : decisions) (d.status == ReviewStatus::accepted ? s.accepted : s.rejected)++;
    s.version = version;
    s.labels = label_count(dataset);
    result.rounds.push_back(s);
    result.accepted += s.accepted;
    all_items.insert(all_items.end(), items.begin(), items.end());
    say("round " + std::to_string(round) + " at epoch " + std::to_string(epoch) + ": " + std::to_string(s.enqueued) +
        " enqueued, " + std::to_string(s.accepted) + " accepted, " + std::to_string(s.labels) + " labels");
  }
  if (server) server->stop();

  auto reports = network::train(trainer, dataset, config.total_epochs, on_epoch);
  result.epochs.insert(result.epochs.end(), reports.begin(), reports.end());

  result.final_labels = label_count(dataset);
  result.withheld_enqueued = withheld_enqueued(withheld, all_items, config.oracle_iou);
  result.stats = store.stats();
  if (model_out) *model_out = std::move(model);
  return result;
}

}  // namespace lsbpan::hitl
