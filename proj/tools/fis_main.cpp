#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "fis/checkpoint.hpp"
#include "fis/common.hpp"
#include "fis/config.hpp"
#include "fis/inference.hpp"
#include "fis/logging.hpp"
#include "fis/png_io.hpp"
#include "fis/synthetic.hpp"
#include "fis/trainer.hpp"

namespace fs = std::filesystem;

namespace {

struct SizeArg {
  int height = 128;
  int width = 128;
};

SizeArg parse_size(const std::string& text) {
  const auto sep = text.find('x');
  FIS_CHECK(sep != std::string::npos, "--size must look like HxW, got \"", text, "\"");
  SizeArg size;
  size.height = std::stoi(text.substr(0, sep));
  size.width = std::stoi(text.substr(sep + 1));
  return size;
}

std::pair<int, int> parse_pairs(const std::string& text) {
  const auto sep = text.find("..");
  FIS_CHECK(sep != std::string::npos, "--pairs must look like A..B, got \"", text, "\"");
  return {std::stoi(text.substr(0, sep)), std::stoi(text.substr(sep + 2))};
}

// Builds a model from a checkpoint's embedded config snapshot and restores
// its parameters. An explicit config, when given, must agree on the model
// section (e.g. the decoder layer count).
std::pair<fis::FisModel, fis::RunConfig> model_from_checkpoint(
    const std::string& checkpoint_path, const std::string& config_path) {
  const fis::Checkpoint checkpoint = fis::load_checkpoint(checkpoint_path);
  FIS_CHECK(!checkpoint.config.empty(), "checkpoint ", checkpoint_path,
            " carries no config snapshot");
  fis::RunConfig config = fis::parse_run_config(checkpoint.config);
  if (!config_path.empty()) {
    const fis::RunConfig requested = fis::load_run_config(config_path);
    FIS_CHECK(requested.model.decoder_layers == config.model.decoder_layers,
              "decoder_layers mismatch: config asks for ", requested.model.decoder_layers,
              " but checkpoint was trained with ", config.model.decoder_layers);
    FIS_CHECK(requested.model.extractor.channel_count == config.model.extractor.channel_count,
              "channel count mismatch between config and checkpoint");
    config.eval = requested.eval;
    config.eval_data = requested.eval_data.empty() ? config.eval_data : requested.eval_data;
  }
  fis::FisModel model(config.model);
  fis::load_model_parameters(*model, checkpoint);
  return {std::move(model), std::move(config)};
}

int cmd_gen_data(const std::string& out_dir, int count, std::uint64_t seed,
                 const std::string& size_text, const std::string& pairs_text) {
  fis::SceneConfig scene;
  const SizeArg size = parse_size(size_text);
  scene.height = size.height;
  scene.width = size.width;
  std::tie(scene.min_pairs, scene.max_pairs) = parse_pairs(pairs_text);

  const auto samples = fis::generate_dataset(seed, count, scene);
  const std::string annotation_path = fis::save_annotations(samples, out_dir);
  std::size_t pairs = 0;
  for (const auto& s : samples) pairs += s.instances.size();
  std::cout << "wrote " << samples.size() << " images, " << pairs << " shadow-object pairs to "
            << out_dir << " (" << annotation_path << ")\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& resume_path) {
  const fis::RunConfig config = fis::load_run_config(config_path);
  FIS_CHECK(!config.train_data.empty(), "config has no data.train path");
  const auto dataset = fis::load_annotations(config.train_data);

  torch::manual_seed(config.seed);
  fis::FisModel model(config.model);
  fis::Trainer trainer(model, config.train, config.loss, fis::run_config_to_json(config));
  if (!resume_path.empty()) trainer.restore(resume_path);

  const auto result = trainer.run(dataset, [](const fis::IterationRecord& record) {
    if (record.iter % 50 == 0) {
      fis::log(fis::LogLevel::kInfo,
               fis::str_cat("epoch ", record.epoch, " iter ", record.iter, " lr ", record.lr,
                            " loss ", record.total));
    }
  });
  std::cout << "training finished after " << trainer.completed_iters()
            << " iterations, final loss " << result.final_loss << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_path,
             const std::string& report_path, const std::string& config_path, bool oracle,
             bool empty_predictions) {
  auto [model, config] = model_from_checkpoint(checkpoint_path, config_path);
  const auto samples = fis::load_annotations(data_path);

  std::vector<std::vector<fis::Detection>> detections;
  std::vector<std::vector<fis::ShadowObjectInstance>> gts;
  for (const auto& sample : samples) gts.push_back(sample.instances);
  if (oracle) {
    for (const auto& sample : samples) detections.push_back(fis::detections_from_gt(sample.instances));
  } else if (empty_predictions) {
    detections.assign(samples.size(), {});
  } else {
    detections = fis::run_inference_dataset(*model, samples, config.eval);
  }

  const fis::MetricReport report = fis::evaluate_detections(detections, gts, config.eval);
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    FIS_CHECK(out.good(), "cannot write report: ", report_path);
    out << report.to_json().dump(2) << "\n";
  }
  std::cout << report.table_row() << "\n";
  return 0;
}

int cmd_infer(const std::string& checkpoint_path, const std::string& image_path,
              const std::string& out_path) {
  auto [model, config] = model_from_checkpoint(checkpoint_path, "");
  const fis::Image image = fis::rgb8_to_image(fis::read_png_rgb8(image_path));
  const auto detections = fis::run_inference(*model, image, config.eval);
  fis::save_detections({detections}, {fs::path(image_path).filename().string()}, image.height,
                       image.width, out_path);
  std::cout << "wrote " << detections.size() << " detections to " << out_path << "\n";
  return 0;
}

int cmd_render(const std::string& checkpoint_path, const std::string& image_path,
               const std::string& out_path) {
  auto [model, config] = model_from_checkpoint(checkpoint_path, "");
  const fis::Image image = fis::rgb8_to_image(fis::read_png_rgb8(image_path));
  const auto detections = fis::run_inference(*model, image, config.eval);
  const fis::Image overlay = fis::render_overlay(image, detections);
  fis::write_png_rgb8(out_path, fis::image_to_rgb8(overlay));
  std::cout << "rendered " << detections.size() << " pairs to " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FIS: instance shadow detection with an association transformer decoder"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic paired shadow-object dataset");
  std::string gen_out = "dataset";
  int gen_n = 16;
  std::uint64_t gen_seed = 0;
  std::string gen_size = "128x128";
  std::string gen_pairs = "1..4";
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--n", gen_n, "number of scenes");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--size", gen_size, "image size HxW");
  gen->add_option("--pairs", gen_pairs, "pair count range A..B");

  auto* train = app.add_subcommand("train", "train a model from a config file");
  std::string train_config;
  std::string train_resume;
  train->add_option("--config", train_config, "run config JSON")->required();
  train->add_option("--resume", train_resume, "checkpoint to resume from");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  std::string eval_checkpoint, eval_data, eval_report, eval_config;
  bool eval_oracle = false;
  bool eval_empty = false;
  eval->add_option("--checkpoint", eval_checkpoint, "model checkpoint")->required();
  eval->add_option("--data", eval_data, "annotation JSON to evaluate on")->required();
  eval->add_option("--report", eval_report, "metric report output path");
  eval->add_option("--config", eval_config, "optional config override (eval section)");
  eval->add_flag("--oracle", eval_oracle, "score the ground truth against itself (sanity mode)");
  eval->add_flag("--empty", eval_empty, "score an empty prediction set (sanity mode)");

  auto* infer = app.add_subcommand("infer", "run inference on one image");
  std::string infer_checkpoint, infer_image, infer_out;
  infer->add_option("--checkpoint", infer_checkpoint, "model checkpoint")->required();
  infer->add_option("--image", infer_image, "input PNG")->required();
  infer->add_option("--out", infer_out, "detections JSON output")->required();

  auto* render = app.add_subcommand("render", "render a detection overlay for one image");
  std::string render_checkpoint, render_image, render_out;
  render->add_option("--checkpoint", render_checkpoint, "model checkpoint")->required();
  render->add_option("--image", render_image, "input PNG")->required();
  render->add_option("--out", render_out, "overlay PNG output")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(gen_out, gen_n, gen_seed, gen_size, gen_pairs);
    if (train->parsed()) return cmd_train(train_config, train_resume);
    if (eval->parsed()) {
      return cmd_eval(eval_checkpoint, eval_data, eval_report, eval_config, eval_oracle,
                      eval_empty);
    }
    if (infer->parsed()) return cmd_infer(infer_checkpoint, infer_image, infer_out);
    if (render->parsed()) return cmd_render(render_checkpoint, render_image, render_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
