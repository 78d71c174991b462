#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "lsbpan/cli/config.hpp"
#include "lsbpan/hitl/protocol.hpp"

namespace lsbpan::cli {

namespace fs = std::filesystem;

using Log = std::function<void(const std::string&)>;

// `out` when given, otherwise a fresh runs/<command>-<UTC time> directory.
// The directory is created.
fs::path output_dir(const std::optional<fs::path>& out, const std::string& command);

struct SynthArgs {
  std::optional<int> n;
  std::optional<std::uint64_t> seed;
  std::optional<int> size;
};
// Writes a dataset directory.
void run_synth(RunConfig config, const SynthArgs& args, const fs::path& out, const Log& log);

struct PrepareArgs {
  fs::path data;
};
// Writes out/train, out/test and out/anchors.json.
void run_prepare(const RunConfig& config, const PrepareArgs& args, const fs::path& out, const Log& log);

struct TrainArgs {
  fs::path dataset;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> checkpoint_out;  // default out/checkpoints
  std::optional<fs::path> resume;
};
// Writes out/model.ckpt, out/train_log.jsonl and periodic checkpoints.
void run_train(RunConfig config, const TrainArgs& args, const fs::path& out, const Log& log);

struct PredictArgs {
  fs::path checkpoint;
  fs::path dataset;
};
void run_predict(const RunConfig& config, const PredictArgs& args, const fs::path& out, const Log& log);

struct EvalArgs {
  fs::path dataset;
  std::optional<fs::path> predictions;
  std::optional<fs::path> checkpoint;
  std::optional<fs::path> json;
};
// Prints the report and writes out/eval.json and out/eval.txt.
void run_eval(const RunConfig& config, const EvalArgs& args, const fs::path& out, const Log& log);

struct ServeArgs {
  fs::path state;
  std::optional<int> port;
  std::optional<std::string> host;
};
void run_serve(const RunConfig& config, const ServeArgs& args, const Log& log);

struct AutoArgs {
  std::optional<fs::path> dataset;  // synthesized from the synth section when absent
  std::optional<fs::path> test;     // evaluation set; the full labels when absent
  std::optional<double> withhold;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
};
// Writes out/report.json and out/report.txt besides the loop state.
void run_auto(RunConfig config, const AutoArgs& args, const fs::path& out, const Log& log);

struct ReportArgs {
  std::optional<fs::path> eval;  // eval.json or a hitl auto report.json
  std::optional<fs::path> hitl;  // store directory or hitl auto output directory
  std::optional<fs::path> json;
};
void run_report(const ReportArgs& args, const fs::path& out, const Log& log);

std::string acceptance_text(const hitl::AcceptanceStats& stats);

}  // namespace lsbpan::cli
