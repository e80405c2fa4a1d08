// Batch entry points: scene generation, training, rendering, evaluation,
// and gradient checking.
//
// Exit codes: 0 ok, 1 usage, 2 numeric failure, 3 data error.

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <iostream>

#include "epiwarp/gradsuite.hpp"
#include "epiwarp/metrics.hpp"
#include "epiwarp/train.hpp"

namespace fs = std::filesystem;
using namespace epiwarp;

namespace {

RunConfig load_or_default(const std::string& path, std::uint64_t seed_override) {
  RunConfig cfg = path.empty() ? RunConfig{} : load_config(path);
  if (seed_override != 0) cfg.seed = seed_override;
  return cfg;
}

int cmd_make_scene(const std::string& out, std::uint64_t seed,
                   const std::string& kind, std::size_t size,
                   double max_disparity) {
  SceneSpec spec = kind == "one-plane"
                       ? one_plane_scene(seed, size, size, max_disparity)
                       : two_plane_scene(seed, size, size, max_disparity);
  auto sample = render<float>(spec);
  save_scene_dir(out, sample);
  std::cout << "wrote " << out << " (" << spec.cameras.size() << " views, "
            << size << "x" << size << ")\n";
  return 0;
}

std::vector<RenderedSample<float>> load_scenes(
    const std::vector<std::string>& dirs) {
  std::vector<RenderedSample<float>> scenes;
  for (const auto& d : dirs) scenes.push_back(load_scene_dir<float>(d));
  return scenes;
}

int cmd_train(const std::string& config_path, std::uint64_t seed,
              const std::string& out, const std::vector<std::string>& scenes) {
  RunConfig cfg = load_or_default(config_path, seed);
  fs::create_directories(out);
  {
    std::ofstream f(out + "/config.txt");
    dump_config(f, cfg);
  }
  EpiWarpModel<float> model(cfg);
  Trainer<float> trainer(model, load_scenes(scenes), out);
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    auto r = trainer.train_step();
    if (s % 100 == 0)
      std::cout << "step " << s << " total " << r.total << " recon " << r.recon
                << "\n";
  }
  model.save(trainer.checkpoint_path());
  std::cout << "checkpoint " << trainer.checkpoint_path() << "\n";
  return 0;
}

int cmd_render(const std::string& config_path, std::uint64_t seed,
               const std::string& checkpoint, const std::string& scene,
               const std::string& out, bool dump_intermediates) {
  RunConfig cfg = load_or_default(config_path, seed);
  EpiWarpModel<float> model(cfg);
  model.load(checkpoint);
  auto sample = load_scene_dir<float>(scene);
  auto fwd = model.forward(sample);
  fs::create_directories(out);
  write_png(out + "/render.png", fwd.final_image);
  if (dump_intermediates) {
    write_pfm(out + "/intermediate.pfm", fwd.intermediate);
    dump_confidence_volume(out + "/confidence", fwd.confidence);
    for (std::size_t s = 0; s < fwd.weights.size(); ++s)
      dump_weight_volume(out + "/weights_src" + std::to_string(s),
                         fwd.weights[s]);
  }
  std::cout << "wrote " << out << "/render.png\n";
  return 0;
}

int cmd_eval(const std::string& config_path, std::uint64_t seed,
             const std::string& checkpoint,
             const std::vector<std::string>& scenes) {
  RunConfig cfg = load_or_default(config_path, seed);
  EpiWarpModel<float> model(cfg);
  model.load(checkpoint);
  MetricsReport report;
  for (const auto& dir : scenes) {
    auto sample = load_scene_dir<float>(dir);
    auto fwd = model.forward(sample);
    const double p =
        psnr(fwd.final_image, sample.target().image, &fwd.valid_mask);
    const double s = double(ssim(fwd.final_image, sample.target().image).item());
    report.add(p, s);
    std::cout << dir << " psnr " << p << " ssim " << s << "\n";
  }
  std::cout << "mean psnr " << report.mean_psnr << " mean ssim "
            << report.mean_ssim << "\n";
  return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  auto entries = run_gradcheck_suite(seed == 0 ? 1 : seed);
  const auto dt = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
  bool ok = true;
  for (const auto& e : entries) {
    std::cout << (e.pass() ? "PASS " : "FAIL ") << e.name << " rel_err "
              << e.rel_err << " threshold " << e.threshold << "\n";
    ok = ok && e.pass();
  }
  std::cout << "gradcheck " << (ok ? "passed" : "FAILED") << " in " << dt
            << " s\n";
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"epipolar content-aware warping toolkit"};
  app.require_subcommand(1);

  std::string config_path, out, checkpoint, scene, kind = "two-plane";
  std::vector<std::string> scenes;
  std::uint64_t seed = 0;
  std::size_t size = 32;
  double max_disparity = 4.0;
  bool dump_intermediates = false;

  auto* make = app.add_subcommand("make-scene", "render a synthetic scene");
  make->add_option("--out", out, "output scene directory")->required();
  make->add_option("--seed", seed, "scene seed");
  make->add_option("--kind", kind, "two-plane or one-plane");
  make->add_option("--size", size, "square resolution");
  make->add_option("--max-disparity", max_disparity, "source disparity bound");

  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config_path, "config file");
  train->add_option("--seed", seed, "seed override");
  train->add_option("--out", out, "output directory")->required();
  train->add_option("--scene", scenes, "scene directory (repeatable)")
      ->required();

  auto* render_cmd = app.add_subcommand("render", "render the target view");
  render_cmd->add_option("--config", config_path, "config file");
  render_cmd->add_option("--seed", seed, "seed override");
  render_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")
      ->required();
  render_cmd->add_option("--scene", scene, "scene directory")->required();
  render_cmd->add_option("--out", out, "output directory")->required();
  render_cmd->add_flag("--dump-intermediates", dump_intermediates,
                       "write confidence and weight PFMs");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate on scenes");
  eval_cmd->add_option("--config", config_path, "config file");
  eval_cmd->add_option("--seed", seed, "seed override");
  eval_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")
      ->required();
  eval_cmd->add_option("--scene", scenes, "scene directory (repeatable)")
      ->required();

  auto* grad = app.add_subcommand("gradcheck", "finite-difference suite");
  grad->add_option("--seed", seed, "suite seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (make->parsed())
      return cmd_make_scene(out, seed, kind, size, max_disparity);
    if (train->parsed()) return cmd_train(config_path, seed, out, scenes);
    if (render_cmd->parsed())
      return cmd_render(config_path, seed, checkpoint, scene, out,
                        dump_intermediates);
    if (eval_cmd->parsed()) return cmd_eval(config_path, seed, checkpoint, scenes);
    if (grad->parsed()) return cmd_gradcheck(seed);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
