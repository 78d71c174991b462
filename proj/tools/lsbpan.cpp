// lsbpan: synthesis, training, evaluation and review-loop driver.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "lsbpan/cli/commands.hpp"
#include "lsbpan/error.hpp"

namespace {

using lsbpan::cli::fs::path;

void log_line(const std::string& s) { std::cerr << "[lsbpan] " << s << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  using namespace lsbpan::cli;

  CLI::App app{"Panoptic segmentation of low-surface-brightness structures"};
  app.require_subcommand(1);
  app.fallthrough();
  std::optional<path> config_path, out;
  app.add_option("--config", config_path, "Run configuration (JSON)")->check(CLI::ExistingFile);
  app.add_option("--out", out, "Output directory (default: runs/<command>-<UTC time>)");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth_cmd->add_option("--n", synth.n, "Number of samples");
  synth_cmd->add_option("--seed", synth.seed, "Generator seed");
  synth_cmd->add_option("--size", synth.size, "Image side in pixels");

  PrepareArgs prepare;
  auto* prepare_cmd = app.add_subcommand("prepare", "Crop, separate halos, select anchors and split 80/20");
  prepare_cmd->add_option("--data", prepare.data, "Input dataset directory")->required();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train the panoptic model");
  train_cmd->add_option("--dataset", train.dataset, "Training dataset directory")->required();
  train_cmd->add_option("--epochs", train.epochs, "Final epoch count");
  train_cmd->add_option("--seed", train.seed, "Initialization and shuffling seed");
  train_cmd->add_option("--checkpoint-out", train.checkpoint_out, "Periodic checkpoint directory");
  train_cmd->add_option("--resume", train.resume, "Checkpoint to resume from");

  PredictArgs predict;
  auto* predict_cmd = app.add_subcommand("predict", "Write fused predictions for a dataset");
  predict_cmd->add_option("--checkpoint", predict.checkpoint, "Model checkpoint")->required();
  predict_cmd->add_option("--dataset", predict.dataset, "Dataset directory")->required();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate predictions against a dataset");
  eval_cmd->add_option("--dataset", eval.dataset, "Ground-truth dataset directory")->required();
  auto* pred_opt = eval_cmd->add_option("--predictions", eval.predictions, "Prediction dump directory");
  auto* ckpt_opt = eval_cmd->add_option("--checkpoint", eval.checkpoint, "Predict with this checkpoint instead");
  pred_opt->excludes(ckpt_opt);
  eval_cmd->add_option("--json", eval.json, "Also write the report JSON here");

  auto* hitl_cmd = app.add_subcommand("hitl", "Human-in-the-loop review");
  hitl_cmd->require_subcommand(1);
  hitl_cmd->fallthrough();
  ServeArgs serve;
  auto* serve_cmd = hitl_cmd->add_subcommand("serve", "Serve the review API for a state directory");
  serve_cmd->add_option("--state", serve.state, "Review state directory")->required();
  serve_cmd->add_option("--port", serve.port, "TCP port");
  serve_cmd->add_option("--host", serve.host, "Bind address");
  AutoArgs autoloop;
  auto* auto_cmd = hitl_cmd->add_subcommand("auto", "Run the review protocol with the oracle reviewer");
  auto_cmd->add_option("--dataset", autoloop.dataset, "Fully labeled dataset (default: synthesized)");
  auto_cmd->add_option("--test", autoloop.test, "Evaluation dataset (default: the full labels)");
  auto_cmd->add_option("--withhold", autoloop.withhold, "Fraction of galaxy/halo labels withheld");
  auto_cmd->add_option("--seed", autoloop.seed, "Seed for synthesis, withholding and training");
  auto_cmd->add_option("--epochs", autoloop.epochs, "Total training epochs");

  ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "Render evaluation and acceptance statistics");
  report_cmd->add_option("--eval", report.eval, "eval.json or hitl report.json");
  report_cmd->add_option("--hitl", report.hitl, "Review state or hitl auto output directory");
  report_cmd->add_option("--json", report.json, "Also write the report JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : lsbpan::exit_code(lsbpan::ErrorKind::config);
  }

  try {
    const RunConfig config = config_path ? load_run_config(*config_path) : RunConfig{};
    if (*synth_cmd) {
      run_synth(config, synth, output_dir(out, "synth"), log_line);
    } else if (*prepare_cmd) {
      run_prepare(config, prepare, output_dir(out, "prepare"), log_line);
    } else if (*train_cmd) {
      run_train(config, train, output_dir(out, "train"), log_line);
    } else if (*predict_cmd) {
      run_predict(config, predict, output_dir(out, "predict"), log_line);
    } else if (*eval_cmd) {
      run_eval(config, eval, output_dir(out, "eval"), log_line);
    } else if (*serve_cmd) {
      run_serve(config, serve, log_line);
    } else if (*auto_cmd) {
      run_auto(config, autoloop, output_dir(out, "hitl-auto"), log_line);
    } else if (*report_cmd) {
      run_report(report, output_dir(out, "report"), log_line);
    }
  } catch (const lsbpan::Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return lsbpan::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return lsbpan::exit_code(lsbpan::ErrorKind::data);
  }
  return 0;
}
