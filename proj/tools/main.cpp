// fineray command-line entry point: train | render | eval | sweep.
//
// Exit codes: 0 success, 2 user error (flags, config, missing inputs),
// 3 numerical failure (NaN loss/gradients).

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fineray/checkpoint.hpp"
#include "fineray/config.hpp"
#include "fineray/dataset.hpp"
#include "fineray/image.hpp"
#include "fineray/metrics.hpp"
#include "fineray/trainer.hpp"

namespace fs = std::filesystem;
using namespace fineray;

#ifndef FINERAY_VERSION
#define FINERAY_VERSION "0.0.0"
#endif

namespace {

std::string timestamp_utc() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

/// One manifest per output directory; rerunning onto it needs --force.
struct RunManifest {
  std::string command;
  std::string out_dir;
  uint64_t seed = 0;
  std::string started = timestamp_utc();
  std::string finished;

  void write(const std::string& note = "") const {
    std::ofstream f(fs::path(out_dir) / "run_manifest.txt");
    f << "fineray-run 1\n";
    f << "command: " << command << "\n";
    f << "version: fineray " << FINERAY_VERSION << "\n";
    f << "seed: " << seed << "\n";
    f << "started: " << started << "\n";
    f << "finished: " << (finished.empty() ? timestamp_utc() : finished) << "\n";
    f << "output: " << out_dir << "\n";
    if (!note.empty()) f << "artifacts: " << note << "\n";
  }
};

void claim_out_dir(const std::string& out, bool force) {
  fs::path manifest = fs::path(out) / "run_manifest.txt";
  if (fs::exists(manifest) && !force)
    throw Error("output directory '" + out +
                "' already holds a run (use --force to overwrite)");
  fs::create_directories(out);
}

Dataset resolve_dataset(const RunConfig& cfg, bool allow_generate) {
  Dataset d;
  d.scene_config = cfg.scene;
  const std::string& path = cfg.dataset_path;
  auto split_dir = [&](const char* name) { return (fs::path(path) / name).string(); };

  if (!path.empty() && fs::exists(fs::path(path) / "train" / "manifest.txt")) {
    auto load_split = [&](const char* name) -> std::vector<View> {
      if (!fs::exists(fs::path(path) / name / "manifest.txt")) return {};
      return load_posed_images(split_dir(name));
    };
    d.train = load_split("train");
    d.val = load_split("val");
    d.test = load_split("test");
    return d;
  }

  if (cfg.scene.kind == SceneKind::kPosedImages)
    throw Error("dataset path '" + path + "' has no train/manifest.txt");
  if (!allow_generate)
    throw Error("no dataset found at '" + path + "' (train writes one next to its checkpoints)");

  AnalyticScene scene = make_builtin_scene(cfg.scene.kind, cfg.scene_seed);
  d = generate_dataset(scene, cfg.scene, cfg.train_views, cfg.val_views, cfg.test_views,
                       cfg.scene_seed);
  if (!path.empty()) {
    save_views(split_dir("train"), d.train);
    save_views(split_dir("val"), d.val);
    save_views(split_dir("test"), d.test);
    // evaluate against what render/eval will later reload (8-bit quantized)
    d.train = load_posed_images(split_dir("train"));
    d.val = load_posed_images(split_dir("val"));
    d.test = load_posed_images(split_dir("test"));
  }
  return d;
}

void save_trainer_checkpoint(Trainer& trainer, const std::string& dir) {
  save_checkpoint(dir, trainer.to_checkpoint());
  std::ofstream f(fs::path(dir) / "config.txt");
  f << serialize_config(trainer.config());
}

/// Rebuilds a trainer from a checkpoint directory written by cmd_train.
struct LoadedRun {
  RunConfig cfg;
  Dataset data;
  std::unique_ptr<Trainer> trainer;
};

LoadedRun load_run(const std::string& checkpoint_dir) {
  fs::path cfg_path = fs::path(checkpoint_dir) / "config.txt";
  if (!fs::exists(cfg_path))
    throw Error("checkpoint '" + checkpoint_dir + "' not found (no config.txt)");
  LoadedRun run;
  run.cfg = load_config_file(cfg_path.string());
  run.data = resolve_dataset(run.cfg, /*allow_generate=*/false);
  run.trainer = std::make_unique<Trainer>(run.cfg, &run.data);
  run.trainer->restore(load_checkpoint(checkpoint_dir));
  return run;
}

const std::vector<View>& pick_split(const Dataset& d, const std::string& name) {
  const std::vector<View>& views = d.split(name);
  if (views.empty()) throw Error("split '" + name + "' is empty");
  return views;
}

// ---- train ----

int cmd_train(const std::string& config_path, const std::string& preset,
              std::optional<uint64_t> seed, const std::string& proposer, const std::string& out,
              bool force) {
  if (config_path.empty() == preset.empty())
    throw Error("train needs exactly one of --config or --preset");
  RunConfig cfg = config_path.empty() ? preset_config(preset) : load_config_file(config_path);
  if (seed) cfg.train.seed = *seed;
  if (!proposer.empty()) apply_override(cfg, "proposer.arch", proposer);
  cfg.validate();

  claim_out_dir(out, force);
  RunManifest manifest{"train", out, cfg.train.seed};
  // Absolute so render/eval/sweep find it from any working directory.
  if (cfg.dataset_path.empty() && cfg.scene.kind != SceneKind::kPosedImages)
    cfg.dataset_path = fs::absolute(fs::path(out) / "dataset").string();

  std::printf("generating dataset (%d/%d/%d views)...\n", cfg.train_views, cfg.val_views,
              cfg.test_views);
  Dataset data = resolve_dataset(cfg, /*allow_generate=*/true);
  Trainer trainer(cfg, &data);
  {
    std::ofstream f(fs::path(out) / "config.txt");
    f << serialize_config(cfg);
  }

  std::ofstream metrics(fs::path(out) / "metrics.csv");
  metrics << "step,stage,loss_coarse,loss_fine,loss_match,loss_importance,lr,val_psnr\n";
  metrics.precision(10);

  const TrainConfig& tc = cfg.train;
  for (int s = 0; s < tc.total_steps; ++s) {
    StepLosses l = trainer.train_step();
    bool eval_now = (s + 1) % tc.eval_every == 0 || s + 1 == tc.total_steps;
    metrics << l.step << ',' << l.stage << ',' << l.coarse << ',' << l.fine << ',' << l.match
            << ',' << l.importance << ',' << l.lr << ',';
    if (eval_now) {
      double prev_best = trainer.best_val_psnr();
      EvalResult ev = trainer.evaluate(data.val, tc.eval_images, /*track_best=*/true);
      metrics << ev.mean_psnr;
      std::printf("step %6d stage %d loss %.5f val psnr %.3f\n", l.step, l.stage, l.total(),
                  ev.mean_psnr);
      if (trainer.best_val_psnr() > prev_best)
        save_trainer_checkpoint(trainer, (fs::path(out) / "ckpt_best").string());
    }
    metrics << '\n';
    if ((s + 1) % tc.checkpoint_every == 0)
      save_trainer_checkpoint(
          trainer, (fs::path(out) / ("ckpt_step_" + std::to_string(s + 1))).string());
  }
  save_trainer_checkpoint(trainer, (fs::path(out) / "ckpt_final").string());
  manifest.write("metrics.csv, ckpt_final, ckpt_best");
  std::printf("done; best val psnr %.3f at step %d\n", trainer.best_val_psnr(),
              trainer.best_val_step());
  return 0;
}

// ---- render ----

int cmd_render(const std::string& checkpoint, const std::string& split, const std::string& out,
               std::optional<double> threshold, bool force) {
  LoadedRun run = load_run(checkpoint);
  const std::vector<View>& views = pick_split(run.data, split);
  claim_out_dir(out, force);
  RunManifest manifest{"render", out, run.cfg.train.seed};

  std::ofstream stats_csv(fs::path(out) / "render_stats.csv");
  stats_csv << "image,wall_ms,fine_evals,fine_evals_full,kept_fraction\n";
  stats_csv.precision(10);
  for (size_t i = 0; i < views.size(); ++i) {
    RenderStats stats;
    auto t0 = std::chrono::steady_clock::now();
    Image img = run.trainer->render_view(views[i], &stats, threshold);
    double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                    .count();
    char name[32];
    std::snprintf(name, sizeof(name), "%s_%03zu.ppm", split.c_str(), i);
    write_ppm((fs::path(out) / name).string(), img);
    stats_csv << name << ',' << ms << ',' << stats.fine_evals << ',' << stats.fine_evals_full
              << ',' << stats.kept_fraction << '\n';
    std::printf("%s: %.1f ms, kept fraction %.4f\n", name, ms, stats.kept_fraction);
  }
  manifest.write("render_stats.csv");
  return 0;
}

// ---- eval ----

int cmd_eval(const std::string& checkpoint, const std::string& split, const std::string& out,
             bool force) {
  LoadedRun run = load_run(checkpoint);
  const std::vector<View>& views = pick_split(run.data, split);
  claim_out_dir(out, force);
  RunManifest manifest{"eval", out, run.cfg.train.seed};

  std::ofstream csv(fs::path(out) / "eval.csv");
  csv << "image,psnr,ssim\n";
  csv.precision(10);
  double mean_psnr = 0, mean_ssim = 0;
  for (size_t i = 0; i < views.size(); ++i) {
    Image img = run.trainer->render_view(views[i]);
    double p = psnr(img, views[i].image), s = ssim(img, views[i].image);
    mean_psnr += p / views.size();
    mean_ssim += s / views.size();
    csv << split << '_' << i << ',' << p << ',' << s << '\n';
    std::printf("%s_%zu: psnr %.4f ssim %.5f\n", split.c_str(), i, p, s);
  }
  csv << "mean," << mean_psnr << ',' << mean_ssim << '\n';
  std::printf("mean: psnr %.4f ssim %.5f over %zu images\n", mean_psnr, mean_ssim, views.size());
  manifest.write("eval.csv");
  return 0;
}

// ---- sweep ----

void write_sweep_svg(const std::string& path, const std::vector<std::array<double, 5>>& rows) {
  // rows: threshold, kept, relative_time, psnr, ssim
  const int w = 640, h = 420, ml = 70, mr = 20, mt = 30, mb = 50;
  double x_lo = 0.0, x_hi = 1.0;
  double y_lo = 1e30, y_hi = -1e30;
  for (const auto& r : rows) {
    y_lo = std::min(y_lo, r[3]);
    y_hi = std::max(y_hi, r[3]);
  }
  double pad = std::max(0.2, 0.1 * (y_hi - y_lo));
  y_lo -= pad;
  y_hi += pad;
  auto X = [&](double v) { return ml + (v - x_lo) / (x_hi - x_lo) * (w - ml - mr); };
  auto Y = [&](double v) { return h - mb - (v - y_lo) / (y_hi - y_lo) * (h - mt - mb); };

  std::ofstream f(path);
  f.precision(6);
  f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
  f << "<rect width='100%' height='100%' fill='white'/>\n";
  f << "<line x1='" << ml << "' y1='" << h - mb << "' x2='" << w - mr << "' y2='" << h - mb
    << "' stroke='black'/>\n";
  f << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << h - mb
    << "' stroke='black'/>\n";
  f << "<text x='" << (w / 2) << "' y='" << h - 12
    << "' text-anchor='middle' font-size='14'>relative render time (fine evaluations)</text>\n";
  f << "<text x='16' y='" << (h / 2)
    << "' text-anchor='middle' font-size='14' transform='rotate(-90 16 " << h / 2
    << ")'>PSNR (dB)</text>\n";
  for (int i = 0; i <= 4; ++i) {
    double vx = x_lo + i * (x_hi - x_lo) / 4, vy = y_lo + i * (y_hi - y_lo) / 4;
    f << "<text x='" << X(vx) << "' y='" << h - mb + 18 << "' text-anchor='middle' font-size='11'>"
      << vx << "</text>\n";
    f << "<text x='" << ml - 8 << "' y='" << Y(vy) + 4 << "' text-anchor='end' font-size='11'>"
      << vy << "</text>\n";
  }
  f << "<polyline fill='none' stroke='steelblue' stroke-width='2' points='";
  for (const auto& r : rows) f << X(r[2]) << ',' << Y(r[3]) << ' ';
  f << "'/>\n";
  for (const auto& r : rows) {
    f << "<circle cx='" << X(r[2]) << "' cy='" << Y(r[3]) << "' r='3.5' fill='steelblue'/>\n";
    f << "<text x='" << X(r[2]) << "' y='" << Y(r[3]) - 8
      << "' text-anchor='middle' font-size='10'>t=" << r[0] << "</text>\n";
  }
  f << "</svg>\n";
}

int cmd_sweep(const std::string& checkpoint, std::vector<double> thresholds,
              const std::string& split, const std::string& out, bool force) {
  LoadedRun run = load_run(checkpoint);
  if (!run.cfg.learned_proposer() || !run.cfg.with_importance)
    throw Error("sweep needs a checkpoint trained with a learnt proposer and an importance head "
                "(this one has proposer=" +
                run.cfg.proposer + ", importance=" + (run.cfg.with_importance ? "on" : "off") +
                ")");
  const std::vector<View>& views = pick_split(run.data, split);
  claim_out_dir(out, force);
  RunManifest manifest{"sweep", out, run.cfg.train.seed};
  if (thresholds.empty())
    thresholds = {0.0, 0.005, 0.01, 0.02, 0.03, 0.05, 0.1, 0.2, 0.5, 1.0};

  std::ofstream csv(fs::path(out) / "sweep.csv");
  csv << "threshold,kept_fraction,relative_time,psnr,ssim,wall_seconds\n";
  csv.precision(10);
  std::vector<std::array<double, 5>> rows;
  for (double thr : thresholds) {
    double mean_psnr = 0, mean_ssim = 0, kept = 0;
    int64_t fine_evals = 0, fine_evals_full = 0;
    auto t0 = std::chrono::steady_clock::now();
    for (const View& v : views) {
      RenderStats stats;
      Image img = run.trainer->render_view(
          v, &stats, thr > 0.0 ? std::optional<double>(thr) : std::nullopt);
      mean_psnr += psnr(img, v.image) / views.size();
      mean_ssim += ssim(img, v.image) / views.size();
      kept += stats.kept_fraction / views.size();
      fine_evals += stats.fine_evals;
      fine_evals_full += stats.fine_evals_full;
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    double rel = static_cast<double>(fine_evals) / fine_evals_full;
    csv << thr << ',' << kept << ',' << rel << ',' << mean_psnr << ',' << mean_ssim << ','
        << secs << '\n';
    rows.push_back({thr, kept, rel, mean_psnr, mean_ssim});
    std::printf("threshold %.4f: kept %.4f relative time %.4f psnr %.4f\n", thr, kept, rel,
                mean_psnr);
  }
  write_sweep_svg((fs::path(out) / "sweep.svg").string(), rows);
  manifest.write("sweep.csv, sweep.svg");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fineray: coarse-to-fine neural radiance field toolkit"};
  app.require_subcommand(1);

  std::string config_path, preset, proposer, checkpoint, split = "test", out;
  std::optional<uint64_t> seed;
  std::optional<double> threshold;
  std::vector<double> thresholds;
  bool force = false;

  CLI::App* train = app.add_subcommand("train", "two-stage training run");
  train->add_option("--config", config_path, "key=value config file");
  train->add_option("--preset", preset, "built-in preset name");
  train->add_option("--seed", seed, "training seed override");
  train->add_option("--proposer", proposer,
                    "heuristic|transformer|pool|mlpmix|blind|pool_no_position|pool_concat|"
                    "pool_learnt_position");
  train->add_option("--out", out, "output directory")->required();
  train->add_flag("--force", force, "overwrite an existing run directory");

  CLI::App* render = app.add_subcommand("render", "render a split from a checkpoint");
  render->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
  render->add_option("--split", split, "train|val|test (default test)");
  render->add_option("--threshold", threshold, "importance pruning threshold");
  render->add_option("--out", out, "output directory")->required();
  render->add_flag("--force", force, "overwrite an existing run directory");

  CLI::App* eval = app.add_subcommand("eval", "PSNR/SSIM table for a split");
  eval->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
  eval->add_option("--split", split, "train|val|test (default test)");
  eval->add_option("--out", out, "output directory")->required();
  eval->add_flag("--force", force, "overwrite an existing run directory");

  CLI::App* sweep = app.add_subcommand("sweep", "importance-threshold pruning sweep");
  sweep->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
  sweep->add_option("--thresholds", thresholds, "threshold list (default 0..1)")->delimiter(',');
  sweep->add_option("--split", split, "train|val|test (default test)");
  sweep->add_option("--out", out, "output directory")->required();
  sweep->add_flag("--force", force, "overwrite an existing run directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand(train))
      return cmd_train(config_path, preset, seed, proposer, out, force);
    if (app.got_subcommand(render)) return cmd_render(checkpoint, split, out, threshold, force);
    if (app.got_subcommand(eval)) return cmd_eval(checkpoint, split, out, force);
    if (app.got_subcommand(sweep)) return cmd_sweep(checkpoint, thresholds, split, out, force);
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
