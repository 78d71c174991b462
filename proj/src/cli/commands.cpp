#include "lsbpan/cli/commands.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>

#include "lsbpan/annotations/box_stats.hpp"
#include "lsbpan/annotations/dataset_io.hpp"
#include "lsbpan/annotations/halo_separation.hpp"
#include "lsbpan/error.hpp"
#include "lsbpan/hitl/auto_loop.hpp"
#include "lsbpan/hitl/service.hpp"
#include "lsbpan/hitl/store.hpp"
#include "lsbpan/imaging/transform.hpp"
#include "lsbpan/io_util.hpp"
#include "lsbpan/metrics/evaluate.hpp"
#include "lsbpan/network/checkpoint.hpp"

namespace lsbpan::cli {

using nlohmann::json;

namespace {

void require_path(const fs::path& p) {
  if (!fs::exists(p)) fail(ErrorKind::data, "missing input: " + p.string());
}

annotations::Dataset load_input(const fs::path& dir) {
  require_path(dir);
  return annotations::load_dataset(dir);
}

void emit(const Log& log, const std::string& s) {
  if (log) log(s);
}

json histogram_json(const annotations::Histogram& h) { return {{"edges", h.edges}, {"mass", h.mass}}; }

json stats_json(const annotations::BoxStatistics& s) {
  return {{"boxes", s.widths.size()},
          {"width_p5", s.width_p5},
          {"width_p95", s.width_p95},
          {"height_p5", s.height_p5},
          {"height_p95", s.height_p95},
          {"ratio_p5", s.ratio_p5},
          {"ratio_p95", s.ratio_p95},
          {"side_p5", s.side_p5},
          {"side_p95", s.side_p95},
          {"width_hist", histogram_json(s.width_hist)},
          {"height_hist", histogram_json(s.height_hist)},
          {"ratio_hist", histogram_json(s.ratio_hist)}};
}

// Anchors from the dataset's boxes; the configured ones when it has none.
annotations::AnchorConfig dataset_anchors(const annotations::Dataset& d, const annotations::AnchorConfig& fallback) {
  const auto stats = annotations::compute_box_statistics(d);
  return stats.empty() ? fallback : annotations::select_anchor_config(stats);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string rate_text(const hitl::RateCount& r) {
  const auto rate = r.rate();
  return std::to_string(r.accepted) + "/" + std::to_string(r.decided) +
         (rate ? " (" + fmt("%.1f", 100.0 * *rate) + "%)" : " (n/a)");
}

void write_outputs(const fs::path& out, const std::string& stem, const json& j, const std::string& text) {
  io::write_text_atomic(out / (stem + ".json"), j.dump(2) + "\n");
  io::write_text_atomic(out / (stem + ".txt"), text);
}

}  // namespace

fs::path output_dir(const std::optional<fs::path>& out, const std::string& command) {
  fs::path dir;
  if (out) {
    dir = *out;
  } else {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
    const fs::path base = fs::path("runs") / (command + "-" + stamp);
    dir = base;
    for (int k = 2; fs::exists(dir); ++k) dir = base.string() + "-" + std::to_string(k);
  }
  fs::create_directories(dir);
  return dir;
}

void run_synth(RunConfig config, const SynthArgs& args, const fs::path& out, const Log& log) {
  if (args.n) config.synth.count = *args.n;
  if (args.seed) config.synth.scene.seed = *args.seed;
  if (args.size) config.synth.image_size = *args.size;
  config.validate();
  const auto scene = config.synth.resolved(config.synth.scene.seed);
  emit(log, "synthesizing " + std::to_string(config.synth.count) + " samples at " +
                std::to_string(config.synth.image_size) + " px");
  const auto data = imaging::synthesize_dataset(scene, config.synth.count);
  annotations::save_dataset(data, out);
  echo_config(config, out);
}

void run_prepare(const RunConfig& config, const PrepareArgs& args, const fs::path& out, const Log& log) {
  const auto raw = load_input(args.data);
  annotations::Dataset train, test;
  const auto& p = config.prepare;
  for (const auto& s0 : raw) {
    auto s = s0;
    if (p.crop_size > 0) s = imaging::center_crop_and_resize(s, p.crop_size, p.out_size > 0 ? p.out_size : p.crop_size);
    if (p.separate_halos) s = annotations::separate_sample_halos(s);
    const double u = static_cast<double>(io::fnv1a(s.id()) % 1000000) / 1e6;
    (u < p.train_fraction ? train : test).push_back(std::move(s));
  }
  emit(log, "split " + std::to_string(train.size()) + " train / " + std::to_string(test.size()) + " test");
  annotations::save_dataset(train, out / "train");
  annotations::save_dataset(test, out / "test");

  const auto stats = annotations::compute_box_statistics(train);
  const auto anchors = stats.empty() ? config.model.config.anchors : annotations::select_anchor_config(stats);
  json j = {{"statistics", stats_json(stats)},
            {"anchor_widths", anchors.widths},
            {"anchor_ratios", anchors.aspect_ratios},
            {"anchors", anchors.total()}};
  io::write_text_atomic(out / "anchors.json", j.dump(2) + "\n");
  emit(log, "anchors: " + std::to_string(anchors.total()));
  echo_config(config, out);
}

void run_train(RunConfig config, const TrainArgs& args, const fs::path& out, const Log& log) {
  const auto data = load_input(args.dataset);
  std::unique_ptr<network::PanopticModel> model;
  std::optional<network::Checkpoint> ckpt;
  auto& schedule = config.train.schedule;
  if (args.resume) {
    require_path(*args.resume);
    ckpt = network::read_checkpoint(*args.resume);
    model = network::model_from_checkpoint(*ckpt);
    config.model.config = ckpt->model;
    if (ckpt->schedule) schedule = *ckpt->schedule;
  } else {
    if (args.seed) {
      schedule.seed = *args.seed;
      config.model.config.init_seed = *args.seed;
    }
    if (config.model.auto_anchors) config.model.config.anchors = dataset_anchors(data, config.model.config.anchors);
    model = std::make_unique<network::PanopticModel>(config.model.config);
  }
  if (args.epochs) schedule.total_epochs = *args.epochs;
  config.validate();
  echo_config(config, out);

  network::Trainer trainer(*model, schedule);
  if (ckpt) network::restore_trainer(trainer, *ckpt);
  const fs::path ckpt_dir = args.checkpoint_out.value_or(out / "checkpoints");
  fs::create_directories(ckpt_dir);
  std::ofstream train_log(out / "train_log.jsonl", args.resume ? std::ios::app : std::ios::trunc);
  const int every = config.train.checkpoint_every;
  network::train(trainer, data, schedule.total_epochs, [&](const network::EpochReport& r) {
    const auto& m = r.mean;
    train_log << json{{"epoch", r.epoch},     {"steps", r.steps},
                      {"total", m.total},     {"objectness", m.objectness},
                      {"box", m.box},         {"class", m.classification},
                      {"mask", m.mask},       {"semantic", m.semantic}}
                     .dump()
              << "\n";
    train_log.flush();
    emit(log, "epoch " + std::to_string(r.epoch) + " loss " + fmt("%.5f", m.total));
    if (every > 0 && r.epoch % every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04d.ckpt", r.epoch);
      network::save_checkpoint(ckpt_dir / name, *model, &trainer);
    }
    return true;
  });
  network::save_checkpoint(out / "model.ckpt", *model, &trainer);
  emit(log, "wrote " + (out / "model.ckpt").string());
}

namespace {

std::vector<panoptic::PanopticOutput> predict_with(const RunConfig& config, const fs::path& checkpoint,
                                                   const annotations::Dataset& data) {
  require_path(checkpoint);
  const auto model = network::model_from_checkpoint(network::read_checkpoint(checkpoint));
  return hitl::predict_dataset(*model, data, config.eval.inference, config.eval.fuse);
}

}  // namespace

void run_predict(const RunConfig& config, const PredictArgs& args, const fs::path& out, const Log& log) {
  const auto data = load_input(args.dataset);
  const auto outputs = predict_with(config, args.checkpoint, data);
  panoptic::save_predictions(outputs, out, fs::absolute(args.dataset).string());
  emit(log, "wrote predictions for " + std::to_string(outputs.size()) + " samples");
  echo_config(config, out);
}

void run_eval(const RunConfig& config, const EvalArgs& args, const fs::path& out, const Log& log) {
  if (args.predictions.has_value() == args.checkpoint.has_value())
    fail(ErrorKind::config, "eval needs exactly one of --predictions and --checkpoint");
  const auto data = load_input(args.dataset);
  std::vector<panoptic::PanopticOutput> preds;
  if (args.predictions) {
    require_path(*args.predictions);
    preds = panoptic::load_predictions(*args.predictions, config.eval.fuse);
  } else {
    preds = predict_with(config, *args.checkpoint, data);
  }
  const auto report = metrics::evaluate(preds, data, config.eval.iou_thresholds);
  const auto text = report.to_text();
  std::cout << text;
  write_outputs(out, "eval", report.to_json(), text);
  if (args.json) io::write_text_atomic(*args.json, report.to_json().dump(2) + "\n");
  echo_config(config, out);
  emit(log, "wrote " + (out / "eval.json").string());
}

void run_serve(const RunConfig& config, const ServeArgs& args, const Log& log) {
  require_path(args.state);
  auto store = hitl::HitlStore::open(args.state);
  hitl::ReviewServer server(store);
  const std::string host = args.host.value_or(config.hitl.host);
  const int port = args.port.value_or(config.hitl.port);
  emit(log, "serving " + args.state.string() + " on " + host + ":" + std::to_string(port));
  server.listen(host, port);
}

std::string acceptance_text(const hitl::AcceptanceStats& stats) {
  std::string out = "acceptance (accepted/decided):\n";
  for (const auto& [round, by_class] : stats.by_round_class) {
    out += "  round " + std::to_string(round) + ": " + rate_text(stats.by_round.at(round)) + "\n";
    for (const auto& [cls, r] : by_class) out += "    " + std::string(annotations::to_string(cls)) + ": " + rate_text(r) + "\n";
  }
  for (const auto& [cls, r] : stats.by_class) out += "  " + std::string(annotations::to_string(cls)) + ": " + rate_text(r) + "\n";
  out += "  total: " + rate_text(stats.total) + "\n";
  out += "  pending: " + std::to_string(stats.pending) + "\n";
  return out;
}

void run_auto(RunConfig config, const AutoArgs& args, const fs::path& out, const Log& log) {
  if (args.withhold) config.hitl.withhold = *args.withhold;
  if (args.seed) {
    config.train.schedule.seed = *args.seed;
    config.model.config.init_seed = *args.seed;
    config.synth.scene.seed = *args.seed;
  }
  if (args.epochs) config.train.schedule.total_epochs = *args.epochs;
  config.validate();

  annotations::Dataset full;
  if (args.dataset) {
    full = load_input(*args.dataset);
  } else {
    full = imaging::synthesize_dataset(config.synth.resolved(config.synth.scene.seed), config.hitl.samples);
    annotations::save_dataset(full, out / "dataset");
  }
  if (full.empty()) fail(ErrorKind::data, "hitl auto: empty dataset");
  if (config.model.auto_anchors) config.model.config.anchors = dataset_anchors(full, config.model.config.anchors);
  echo_config(config, out);

  hitl::AutoLoopConfig loop;
  loop.total_epochs = config.train.schedule.total_epochs;
  loop.withhold = config.hitl.withhold;
  loop.seed = config.train.schedule.seed;
  loop.enqueue = {config.hitl.enqueue_iou, config.hitl.score_min};
  loop.oracle_iou = config.hitl.oracle_iou;
  loop.fuse = config.eval.fuse;
  loop.inference = config.eval.inference;
  loop.train = config.train.schedule;
  loop.model = config.model.config;
  loop.checkpoint_every = config.train.checkpoint_every;
  loop.host = config.hitl.host;
  loop.use_http = config.hitl.use_http;

  std::unique_ptr<network::PanopticModel> model;
  const auto result = hitl::run_auto_loop(full, loop, out, log, &model);
  network::save_checkpoint(out / "model.ckpt", *model);

  annotations::Dataset eval_set = full;
  std::string evaluated_on = "full_labels";
  if (args.test) {
    eval_set = load_input(*args.test);
    evaluated_on = args.test->string();
  }
  const auto outputs = hitl::predict_dataset(*model, eval_set, config.eval.inference, config.eval.fuse);
  const auto report = metrics::evaluate(outputs, eval_set, config.eval.iou_thresholds);

  json j = {{"loop", result.to_json()}, {"eval", report.to_json()}, {"evaluated_on", evaluated_on}};
  std::string text = "hitl auto: " + std::to_string(result.rounds.size()) + " rounds, " +
                     std::to_string(result.withheld_enqueued) + "/" + std::to_string(result.withheld) +
                     " withheld objects enqueued\n";
  text += "labels: initial " + std::to_string(result.initial_labels) + " + accepted " +
          std::to_string(result.accepted) + " = final " + std::to_string(result.final_labels) + "\n";
  text += acceptance_text(result.stats);
  text += "evaluation on " + evaluated_on + ":\n" + report.to_text();
  write_outputs(out, "report", j, text);
  std::cout << text;
}

void run_report(const ReportArgs& args, const fs::path& out, const Log& log) {
  if (!args.eval && !args.hitl) fail(ErrorKind::config, "report needs --eval and/or --hitl");
  json j = json::object();
  std::string text;
  if (args.eval) {
    require_path(*args.eval);
    json e;
    try {
      e = json::parse(io::read_text(*args.eval));
    } catch (const json::parse_error& err) {
      fail(ErrorKind::data, args.eval->string() + ": " + err.what());
    }
    if (e.contains("eval")) e = e.at("eval");
    const auto report = metrics::eval_report_from_json(e);
    j["eval"] = report.to_json();
    text += report.to_text();
  }
  if (args.hitl) {
    require_path(*args.hitl);
    const fs::path state = fs::exists(*args.hitl / "state.json") ? *args.hitl : *args.hitl / "state";
    const auto store = hitl::HitlStore::open(state);
    const auto stats = store.stats();
    j["acceptance"] = stats.to_json();
    j["progress"] = store.progress();
    text += acceptance_text(stats);
  }
  std::cout << text;
  write_outputs(out, "report", j, text);
  if (args.json) io::write_text_atomic(*args.json, j.dump(2) + "\n");
  emit(log, "wrote " + (out / "report.json").string());
}

}  // namespace lsbpan::cli
