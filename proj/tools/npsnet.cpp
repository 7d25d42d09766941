// npsnet: synthesize data, ingest gaze, render maps, train, predict, evaluate
// and count parameters.
//
// Exit codes: 0 success, 1 invalid input or usage, 2 any other failure.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "npsnet/npsnet.hpp"

using namespace npsnet;

namespace {

std::optional<Split> parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  if (s == "all") return std::nullopt;
  throw UsageError("unknown split '" + s + "' (expected train, test or all)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"npsnet: audio-visual saliency prediction for cartoon and game video"};
  app.require_subcommand(1);
  app.fallthrough();

  ConfigArgs cfg_args;
  std::string config_file;
  std::uint64_t seed = 0;
  std::string out;
  app.add_option("--config", config_file, "Model configuration JSON (overrides the preset)");
  app.add_option("--preset", cfg_args.preset, "Base configuration: default, fixture or reference")->capture_default_str();
  auto* seed_opt = app.add_option("--seed", seed, "Seed for initialization, data order and sampling");
  app.add_option("--out", out, "Output file or directory");

  // synth
  SynthSpec synth;
  auto* c_synth = app.add_subcommand("synth", "Write a synthetic dataset with manifest.json");
  c_synth->add_option("--cartoon", synth.cartoon_videos, "Cartoon videos")->capture_default_str();
  c_synth->add_option("--game", synth.game_videos, "Game videos")->capture_default_str();
  c_synth->add_option("--frames", synth.frames, "Frames per video")->capture_default_str();
  c_synth->add_option("--height", synth.height, "Frame height")->capture_default_str();
  c_synth->add_option("--width", synth.width, "Frame width")->capture_default_str();
  c_synth->add_option("--observers", synth.observers, "Simulated observers")->capture_default_str();
  c_synth->add_option("--sigma", synth.sigma, "Ground-truth render sigma in pixels")->capture_default_str();

  // ingest
  IngestArgs ingest;
  std::string gaze_path;
  auto* c_ingest = app.add_subcommand("ingest", "Convert a gaze CSV into per-frame fixations");
  c_ingest->add_option("--gaze", gaze_path, "Gaze CSV (timestamp_ms,observer,x,y)")->required();
  c_ingest->add_option("--fps", ingest.cfg.fps, "Video frame rate")->capture_default_str();
  c_ingest->add_option("--width", ingest.cfg.width, "Frame width in pixels")->required();
  c_ingest->add_option("--height", ingest.cfg.height, "Frame height in pixels")->required();
  c_ingest->add_flag("--per-sample", ingest.cfg.per_sample, "Keep every sample instead of the latest per observer and frame");

  // render
  RenderArgs render;
  std::string fix_path;
  std::int64_t render_frame = -1;
  auto* c_render = app.add_subcommand("render", "Render fixation CSV frames into saliency maps (.pgm and .npsm)");
  c_render->add_option("--fixations", fix_path, "Fixation CSV (frame,observer,x,y)")->required();
  c_render->add_option("--height", render.height, "Map height")->required();
  c_render->add_option("--width", render.width, "Map width")->required();
  c_render->add_option("--source-height", render.source_height, "Height the fixations were recorded at (default: map height)");
  c_render->add_option("--source-width", render.source_width, "Width the fixations were recorded at (default: map width)");
  c_render->add_option("--sigma", render.render.sigma, "Gaussian sigma in pixels (0: one degree of visual angle)")
      ->capture_default_str();
  c_render->add_option("--frame", render_frame, "Render only this frame");

  // manifest
  ManifestArgs manifest;
  std::string root;
  auto* c_manifest = app.add_subcommand("manifest", "Scan a dataset tree and write manifest.json with the train/test split");
  c_manifest->add_option("--root", root, "Dataset root (<domain>/<category>/<video>/)")->required();
  c_manifest->add_option("--sigma", manifest.sigma, "Ground-truth sigma in source pixels (0: one degree)")->capture_default_str();
  c_manifest->add_option("--fps", manifest.fps, "Frame rate")->capture_default_str();

  // train
  std::string manifest_path;
  std::size_t steps = 0;
  auto* c_train = app.add_subcommand("train", "Train on the manifest's train split");
  c_train->add_option("--manifest", manifest_path, "manifest.json")->required();
  c_train->add_option("--steps", steps, "Optimizer steps (overrides the configuration)");
  c_train->add_flag("--no-ufm", cfg_args.no_ufm, "Drop every UFM module");
  c_train->add_flag("--no-inter", cfg_args.no_inter, "Drop the cross-modal interaction (bilinear + attention)");
  std::string branches;
  c_train->add_option("--branches", branches, "UFM branches to keep: comma list of high,low,channel or none");

  // predict
  PredictArgs predict;
  std::string ckpt, clip, split_name = "test";
  std::vector<std::size_t> frames;
  auto* c_predict = app.add_subcommand("predict", "Predict saliency maps with a trained checkpoint");
  c_predict->add_option("--checkpoint", ckpt, "checkpoint.bin")->required();
  auto* p_manifest = c_predict->add_option("--manifest", manifest_path, "Predict every target frame of a split");
  c_predict->add_option("--split", split_name, "train, test or all")->capture_default_str();
  auto* p_clip = c_predict->add_option("--clip", clip, "Clip directory with frames/ and audio.wav");
  c_predict->add_option("--frame", frames, "Target frame index (repeatable, with --clip)");
  c_predict->add_option("--fps", predict.fps, "Clip frame rate")->capture_default_str();
  p_manifest->excludes(p_clip);

  // eval
  EvalArgs eval;
  std::string pred_dir;
  std::string eval_split = "test";
  auto* c_eval = app.add_subcommand("eval", "Score predictions against rendered ground truth");
  c_eval->add_option("--manifest", manifest_path, "manifest.json")->required();
  c_eval->add_option("--predictions", pred_dir, "Prediction directory")->required();
  c_eval->add_option("--split", eval_split, "train, test or all")->capture_default_str();
  c_eval->add_option("--trials", eval.options.trials, "s-AUC negative sampling trials")->capture_default_str();
  c_eval->add_option("--threads", eval.options.threads, "Worker threads (0: all cores)")->capture_default_str();
  c_eval->add_flag("--allow-partial", eval.options.allow_partial, "Score the frames that have predictions");

  // params
  ParamsArgs params;
  std::string params_ckpt;
  bool no_macs = false;
  auto* c_params = app.add_subcommand("params", "Count parameters and multiply-accumulates");
  c_params->add_option("--checkpoint", params_ckpt, "Count the tensors stored in a checkpoint");
  c_params->add_flag("--reference-width", params.reference_width, "Also count the reference-width configuration");
  c_params->add_flag("--no-macs", no_macs, "Skip the MAC count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (!config_file.empty()) cfg_args.file = config_file;
    if (seed_opt->count()) cfg_args.seed = seed;
    if (!branches.empty()) cfg_args.branches = branches;
    if (steps) cfg_args.steps = steps;
    auto need_out = [&](const char* what) {
      if (out.empty()) throw UsageError(std::string("--out is required for ") + what);
      return std::filesystem::path(out);
    };

    if (*c_synth) {
      synth.seed = seed;
      cmd_synth(need_out("synth"), synth, std::cout);
    } else if (*c_ingest) {
      ingest.gaze = gaze_path;
      ingest.out = need_out("ingest");
      cmd_ingest(ingest, std::cout);
    } else if (*c_render) {
      render.fixations = fix_path;
      render.out = need_out("render");
      if (render_frame >= 0) render.frame = render_frame;
      cmd_render(render, std::cout);
    } else if (*c_manifest) {
      manifest.root = root;
      manifest.seed = seed;
      manifest.out = out;
      cmd_manifest(manifest, std::cout);
    } else if (*c_train) {
      TrainArgs t;
      t.manifest = manifest_path;
      t.out = need_out("train");
      t.config = resolve_config(cfg_args);
      cmd_train(t, std::cout);
    } else if (*c_predict) {
      predict.checkpoint = ckpt;
      predict.out = need_out("predict");
      if (!config_file.empty()) predict.config_file = config_file;
      if (!manifest_path.empty()) predict.manifest = manifest_path;
      if (!clip.empty()) predict.clip = clip;
      predict.frames = frames;
      predict.split = parse_split(split_name);
      cmd_predict(predict, std::cout);
    } else if (*c_eval) {
      eval.manifest = manifest_path;
      eval.predictions = pred_dir;
      eval.out = need_out("eval");
      eval.config = resolve_config(cfg_args);
      eval.options.split = parse_split(eval_split);
      eval.options.seed = seed;
      cmd_eval(eval, std::cout);
    } else if (*c_params) {
      if (!params_ckpt.empty()) params.checkpoint = params_ckpt;
      params.config = resolve_config(cfg_args);
      params.macs = !no_macs;
      if (!out.empty()) params.out = out;
      cmd_params(params, std::cout);
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
