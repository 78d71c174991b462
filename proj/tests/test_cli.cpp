#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "lsbpan/annotations/dataset_io.hpp"
#include "lsbpan/cli/commands.hpp"
#include "lsbpan/error.hpp"
#include "lsbpan/io_util.hpp"
#include "lsbpan/metrics/evaluate.hpp"
#include "lsbpan/network/checkpoint.hpp"

using namespace lsbpan;
using namespace lsbpan::cli;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ErrorKind kind_of(const json& j) {
  try {
    run_config_from_json(j);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("config accepted");
  return ErrorKind::data;
}

RunConfig tiny_config() {
  RunConfig c;
  c.synth.image_size = 64;
  c.synth.object_scale = 0.25;
  auto& m = c.model.config;
  m.anchors = {{16, 32}, {0.5, 1.0, 2.0}};
  m.stem_channels = 4;
  m.stage_channels = {4, 6, 8, 8};
  m.head_channels = 6;
  m.mask_roi_size = 7;
  m.mask_size = 14;
  m.mask_channels = 4;
  m.decoder_channels = 4;
  m.gga.dim = 4;
  c.model.auto_anchors = false;
  return c;
}

std::string tree_digest(const fs::path& dir) {
  std::string acc;
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) acc += fs::relative(f, dir).string() + ":" + std::to_string(io::fnv1a(io::read_text(f))) + "\n";
  return acc;
}

}  // namespace

TEST_CASE("run config round trip keeps every default") {
  const RunConfig c;
  const json j = to_json(c);
  for (const char* section : {"synth", "prepare", "train", "model", "hitl", "eval"}) CHECK(j.contains(section));
  CHECK(j["train"]["instance_lr"] == 0.01);
  CHECK(j["train"]["instance_lr_halving_epochs"] == 25);
  CHECK(j["train"]["checkpoint_every"] == 10);
  CHECK(j["hitl"]["withhold"] == 0.5);
  CHECK(j["eval"]["score_threshold"] == 0.5);
  CHECK(j["eval"]["nms_iou"] == 0.5);
  CHECK(j["prepare"]["train_fraction"] == 0.8);
  CHECK(j["model"]["anchor_widths"].size() == 5);
  CHECK(to_json(run_config_from_json(j)) == j);

  json k = j;
  k["synth"]["scene"]["galaxy_radius"] = {10.0, 12.0};
  k["eval"]["inference"]["max_detections"] = 7;
  const auto c2 = run_config_from_json(k);
  CHECK(c2.synth.scene.galaxy_radius.lo == 10.0);
  CHECK(c2.eval.inference.max_detections == 7);
}

TEST_CASE("run config rejects unknown keys and bad values") {
  CHECK(kind_of({{"bogus", 1}}) == ErrorKind::config);
  CHECK(kind_of({{"synth", {{"scene", {{"bogus", 1}}}}}}) == ErrorKind::config);
  CHECK(kind_of({{"eval", {{"inference", {{"bogus", 1}}}}}}) == ErrorKind::config);
  CHECK(kind_of({{"train", {{"bogus", 1}}}}) == ErrorKind::config);
  CHECK(kind_of({{"model", {{"gga", {{"bogus", 1}}}}}}) == ErrorKind::config);
  CHECK(kind_of({{"hitl", {{"withhold", "half"}}}}) == ErrorKind::config);
  CHECK(kind_of({{"hitl", {{"withhold", 1.5}}}}) == ErrorKind::config);
  CHECK(kind_of({{"synth", {{"scene", {{"galaxy_radius", {1.0}}}}}}}) == ErrorKind::config);
  CHECK(kind_of({{"eval", {{"iou_thresholds", json::array()}}}}) == ErrorKind::config);
  try {
    run_config_from_json({{"prepare", {{"crop", 3}}}});
    FAIL("accepted");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("prepare.crop") != std::string::npos);
  }
}

TEST_CASE("config file loading") {
  TempDir tmp("lsbpan_cli_config");
  CHECK_THROWS_AS(load_run_config(tmp.path / "absent.json"), Error);
  io::write_text_atomic(tmp.path / "broken.json", "{\"synth\": ");
  try {
    load_run_config(tmp.path / "broken.json");
    FAIL("accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
  }
  io::write_text_atomic(tmp.path / "ok.json", R"({"synth": {"count": 3}})");
  CHECK(load_run_config(tmp.path / "ok.json").synth.count == 3);
}

TEST_CASE("synth is byte-identical for a fixed seed") {
  TempDir tmp("lsbpan_cli_synth");
  const auto c = tiny_config();
  run_synth(c, {4, 9, std::nullopt}, tmp.path / "a", {});
  run_synth(c, {4, 9, std::nullopt}, tmp.path / "b", {});
  run_synth(c, {4, 10, std::nullopt}, tmp.path / "c", {});
  CHECK(tree_digest(tmp.path / "a") == tree_digest(tmp.path / "b"));
  CHECK(tree_digest(tmp.path / "a") != tree_digest(tmp.path / "c"));
  CHECK(fs::exists(tmp.path / "a" / "config.json"));
  CHECK(annotations::load_dataset(tmp.path / "a").size() == 4);
}

TEST_CASE("prepare splits by id hash and writes anchors") {
  TempDir tmp("lsbpan_cli_prepare");
  const auto c = tiny_config();
  run_synth(c, {20, 3, std::nullopt}, tmp.path / "raw", {});
  run_prepare(c, {tmp.path / "raw"}, tmp.path / "p1", {});
  run_prepare(c, {tmp.path / "raw"}, tmp.path / "p2", {});
  const auto train = annotations::load_dataset(tmp.path / "p1" / "train");
  const auto test = annotations::load_dataset(tmp.path / "p1" / "test");
  CHECK(train.size() + test.size() == 20);
  CHECK(train.size() >= 10);
  CHECK(tree_digest(tmp.path / "p1") == tree_digest(tmp.path / "p2"));
  const auto anchors = json::parse(io::read_text(tmp.path / "p1" / "anchors.json"));
  CHECK(anchors["anchors"].get<int>() == 3 * static_cast<int>(anchors["anchor_widths"].size()));
  for (const auto& s : test) CHECK(static_cast<double>(io::fnv1a(s.id()) % 1000000) / 1e6 >= 0.8);
}

TEST_CASE("train writes a checkpoint at every multiple of checkpoint_every") {
  TempDir tmp("lsbpan_cli_train");
  auto c = tiny_config();
  c.train.checkpoint_every = 2;
  run_synth(c, {2, 1, std::nullopt}, tmp.path / "data", {});
  run_train(c, {tmp.path / "data", 5, 4, std::nullopt, std::nullopt}, tmp.path / "t", {});
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(tmp.path / "t" / "checkpoints")) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  CHECK(names == std::vector<std::string>{"epoch_0002.ckpt", "epoch_0004.ckpt"});
  CHECK(fs::exists(tmp.path / "t" / "model.ckpt"));
  CHECK(fs::exists(tmp.path / "t" / "config.json"));

  // Resuming from epoch 4 continues the same run; checkpoints hold float32
  // weights, so the result matches to float precision only.
  run_train(c, {tmp.path / "data", 5, std::nullopt, std::nullopt, tmp.path / "t" / "checkpoints" / "epoch_0004.ckpt"},
            tmp.path / "r", {});
  const auto a = network::read_checkpoint(tmp.path / "t" / "model.ckpt");
  const auto b = network::read_checkpoint(tmp.path / "r" / "model.ckpt");
  CHECK(a.epoch == 5);
  CHECK(b.epoch == 5);
  REQUIRE(a.tensors.size() == b.tensors.size());
  double worst = 0.0;
  for (const auto& [name, t] : a.tensors) {
    REQUIRE(b.tensors.count(name));
    const auto& u = b.tensors.at(name).values();
    for (std::size_t i = 0; i < u.size(); ++i) worst = std::max(worst, std::abs(u[i] - t.values()[i]));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("eval, predict and report agree") {
  TempDir tmp("lsbpan_cli_eval");
  const auto c = tiny_config();
  run_synth(c, {3, 2, std::nullopt}, tmp.path / "data", {});
  run_train(c, {tmp.path / "data", 1, 1, std::nullopt, std::nullopt}, tmp.path / "t", {});
  const auto ckpt = tmp.path / "t" / "model.ckpt";
  run_eval(c, {tmp.path / "data", std::nullopt, ckpt, tmp.path / "direct.json"}, tmp.path / "e1", {});
  run_predict(c, {ckpt, tmp.path / "data"}, tmp.path / "pred", {});
  run_eval(c, {tmp.path / "data", tmp.path / "pred", std::nullopt, std::nullopt}, tmp.path / "e2", {});
  const auto j1 = json::parse(io::read_text(tmp.path / "direct.json"));
  const auto j2 = json::parse(io::read_text(tmp.path / "e2" / "eval.json"));
  CHECK(j1 == j2);
  CHECK(metrics::eval_report_from_json(j1).to_json() == j1);

  run_report({tmp.path / "direct.json", std::nullopt, tmp.path / "report.json"}, tmp.path / "rep", {});
  CHECK(json::parse(io::read_text(tmp.path / "report.json"))["eval"] == j1);
  CHECK_THROWS_AS(run_eval(c, {tmp.path / "data", std::nullopt, std::nullopt, std::nullopt}, tmp.path / "e3", {}), Error);
  try {
    run_eval(c, {tmp.path / "missing", tmp.path / "pred", std::nullopt, std::nullopt}, tmp.path / "e4", {});
    FAIL("accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::data);
    CHECK(std::string(e.what()).find("missing") != std::string::npos);
  }
}

TEST_CASE("output directories") {
  TempDir tmp("lsbpan_cli_out");
  CHECK(output_dir(tmp.path / "x", "synth") == tmp.path / "x");
  CHECK(fs::is_directory(tmp.path / "x"));
  const auto cwd = fs::current_path();
  fs::current_path(tmp.path);
  const auto a = output_dir(std::nullopt, "eval");
  const auto b = output_dir(std::nullopt, "eval");
  fs::current_path(cwd);
  CHECK(a != b);
  CHECK(a.parent_path() == "runs");
  CHECK(a.filename().string().rfind("eval-", 0) == 0);
}
