// End-to-end tests of the fineray binary: exit-code contract, artifact
// layout, determinism, and the render/eval/sweep behavior around importance
// pruning. The binary path arrives as argv[1].

#define DOCTEST_CONFIG_IMPLEMENT
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

std::string g_bin;
fs::path g_work;

struct CmdResult {
  int code = -1;
  std::string output;  // stdout + stderr
};

CmdResult run_cli(const std::string& args) {
  CmdResult r;
  FILE* p = popen((g_bin + " " + args + " 2>&1").c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  size_t n;
  while ((n = fread(buf, 1, sizeof(buf), p)) > 0) r.output.append(buf, n);
  int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream f(p);
  REQUIRE(f.good());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(f, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    rows.push_back(cells);
  }
  return rows;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p);
  f << text;
}

/// Quick micro run used by most cases; trained once per process.
const fs::path& micro_run() {
  static fs::path dir = [] {
    fs::path d = g_work / "micro_run";
    CmdResult r = run_cli("train --preset micro-spheres --seed 9 --out " + d.string());
    REQUIRE_MESSAGE(r.code == 0, r.output);
    return d;
  }();
  return dir;
}

/// Longer run that overfits its six training images (PSNR well above 30).
const fs::path& overfit_run() {
  static fs::path dir = [] {
    fs::path d = g_work / "overfit_run";
    fs::path cfg = g_work / "overfit.cfg";
    write_file(cfg,
               "preset = micro-spheres\n"
               "train.steps = 8000\n"
               "train.warmup_steps = 200\n"
               "train.eval_every = 2000\n"
               "train.checkpoint_every = 8000\n");
    CmdResult r = run_cli("train --config " + cfg.string() + " --seed 5 --out " + d.string());
    REQUIRE_MESSAGE(r.code == 0, r.output);
    return d;
  }();
  return dir;
}

/// Heuristic-baseline run: no proposer, so no importance head to sweep.
const fs::path& heuristic_run() {
  static fs::path dir = [] {
    fs::path d = g_work / "heuristic_run";
    fs::path cfg = g_work / "heuristic.cfg";
    write_file(cfg,
               "preset = micro-spheres\n"
               "train.steps = 100\n"
               "train.eval_every = 100\n"
               "train.checkpoint_every = 100\n");
    CmdResult r = run_cli("train --config " + cfg.string() +
                          " --proposer heuristic --seed 2 --out " + d.string());
    REQUIRE_MESSAGE(r.code == 0, r.output);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("flag and config errors exit 2, help exits 0") {
  CHECK(run_cli("--help").code == 0);
  CHECK(run_cli("").code == 2);                    // subcommand required
  CHECK(run_cli("train --bogus").code == 2);       // unknown flag
  CHECK(run_cli("frobnicate").code == 2);          // unknown subcommand
  CHECK(run_cli("train --out " + (g_work / "x1").string()).code == 2);  // no config/preset

  CmdResult r = run_cli("train --preset no-such-preset --out " + (g_work / "x2").string());
  CHECK(r.code == 2);
  CHECK(r.output.find("no-such-preset") != std::string::npos);

  fs::path bad = g_work / "bad.cfg";
  write_file(bad, "preset = micro-spheres\ntrain.nonexistent_key = 1\n");
  r = run_cli("train --config " + bad.string() + " --out " + (g_work / "x3").string());
  CHECK(r.code == 2);
  CHECK(r.output.find("nonexistent_key") != std::string::npos);
}

TEST_CASE("train writes the documented artifacts and respects --force") {
  const fs::path& d = micro_run();
  CHECK(fs::exists(d / "run_manifest.txt"));
  CHECK(fs::exists(d / "config.txt"));
  CHECK(fs::exists(d / "ckpt_final" / "params.bin"));
  CHECK(fs::exists(d / "ckpt_final" / "manifest.txt"));
  CHECK(fs::exists(d / "ckpt_final" / "config.txt"));
  CHECK(fs::exists(d / "ckpt_best" / "params.bin"));
  CHECK(fs::exists(d / "dataset" / "train" / "manifest.txt"));

  auto metrics = read_csv(d / "metrics.csv");
  REQUIRE(metrics.size() == 401);  // header + one row per step
  CHECK(metrics[0] ==
        std::vector<std::string>{"step", "stage", "loss_coarse", "loss_fine", "loss_match",
                                 "loss_importance", "lr", "val_psnr"});
  CHECK(metrics[1][0] == "0");
  CHECK(metrics[1][1] == "1");
  CHECK(metrics[400][1] == "2");          // two-stage run ends in stage 2
  CHECK(metrics[400][7] != "");           // final step evaluates
  CHECK(metrics[2][7] == "");             // intermediate steps do not

  std::string manifest = slurp(d / "run_manifest.txt");
  CHECK(manifest.find("command: train") != std::string::npos);
  CHECK(manifest.find("seed: 9") != std::string::npos);

  // occupied output directory: refused without --force
  CmdResult r = run_cli("train --preset micro-spheres --seed 9 --out " + d.string());
  CHECK(r.code == 2);
  CHECK(r.output.find("--force") != std::string::npos);
}

TEST_CASE("render is deterministic and reports kept fractions") {
  std::string ckpt = (micro_run() / "ckpt_final").string();
  fs::path r1 = g_work / "render1", r2 = g_work / "render2";
  REQUIRE(run_cli("render --checkpoint " + ckpt + " --split test --out " + r1.string()).code == 0);
  REQUIRE(run_cli("render --checkpoint " + ckpt + " --split test --out " + r2.string()).code == 0);

  CHECK(fs::exists(r1 / "test_000.ppm"));
  CHECK(slurp(r1 / "test_000.ppm") == slurp(r2 / "test_000.ppm"));
  CHECK(slurp(r1 / "test_001.ppm") == slurp(r2 / "test_001.ppm"));

  // no threshold: every fine sample kept
  auto stats = read_csv(r1 / "render_stats.csv");
  REQUIRE(stats.size() == 3);
  CHECK(stats[0][0] == "image");
  CHECK(std::stod(stats[1][4]) == doctest::Approx(1.0));
  CHECK(std::stod(stats[1][2]) == std::stod(stats[1][3]));

  // threshold 1.0: argmax fallback keeps exactly one of n_coarse+n_fine = 24
  fs::path r3 = g_work / "render3";
  REQUIRE(run_cli("render --checkpoint " + ckpt + " --threshold 1.0 --split test --out " +
                  r3.string())
              .code == 0);
  auto pruned = read_csv(r3 / "render_stats.csv");
  CHECK(std::stod(pruned[1][4]) == doctest::Approx(1.0 / 24));

  CmdResult r = run_cli("render --checkpoint " + (g_work / "no_such_ckpt").string() + " --out " +
                        (g_work / "render4").string());
  CHECK(r.code == 2);
}

TEST_CASE("eval overfits past 30 dB on its training images and is deterministic") {
  std::string ckpt = (overfit_run() / "ckpt_final").string();
  fs::path e1 = g_work / "eval1", e2 = g_work / "eval2";
  CmdResult r = run_cli("eval --checkpoint " + ckpt + " --split train --out " + e1.string());
  REQUIRE_MESSAGE(r.code == 0, r.output);
  REQUIRE(run_cli("eval --checkpoint " + ckpt + " --split train --out " + e2.string()).code == 0);

  auto csv = read_csv(e1 / "eval.csv");
  REQUIRE(csv.size() == 8);  // header + 6 images + mean
  CHECK(csv[0] == std::vector<std::string>{"image", "psnr", "ssim"});
  CHECK(csv[7][0] == "mean");
  CHECK(std::stod(csv[7][1]) > 30.0);
  CHECK(std::stod(csv[7][2]) > 0.0);
  CHECK(std::stod(csv[7][2]) <= 1.0);

  CHECK(slurp(e1 / "eval.csv") == slurp(e2 / "eval.csv"));
}

TEST_CASE("eval rejects bad splits") {
  std::string ckpt = (micro_run() / "ckpt_final").string();
  CHECK(run_cli("eval --checkpoint " + ckpt + " --split nonsense --out " +
                (g_work / "eval3").string())
            .code == 2);

  // a split whose manifest lists no images is a user error, not a crash
  fs::path val_manifest = micro_run() / "dataset" / "val" / "manifest.txt";
  std::string saved = slurp(val_manifest);
  write_file(val_manifest, "fineray-manifest 1\n");
  CmdResult r =
      run_cli("eval --checkpoint " + ckpt + " --split val --out " + (g_work / "eval4").string());
  write_file(val_manifest, saved);
  CHECK(r.code == 2);
  CHECK(r.output.find("empty") != std::string::npos);
}

TEST_CASE("sweep prunes monotonically and needs an importance head") {
  std::string ckpt = (overfit_run() / "ckpt_final").string();
  fs::path out = g_work / "sweep1";
  CmdResult r = run_cli("sweep --checkpoint " + ckpt +
                        " --thresholds 0,0.05,0.2,0.5,1.0 --out " + out.string());
  REQUIRE_MESSAGE(r.code == 0, r.output);

  auto csv = read_csv(out / "sweep.csv");
  REQUIRE(csv.size() == 6);
  CHECK(csv[0] == std::vector<std::string>{"threshold", "kept_fraction", "relative_time", "psnr",
                                           "ssim", "wall_seconds"});
  CHECK(std::stod(csv[1][0]) == 0.0);
  CHECK(std::stod(csv[1][1]) == doctest::Approx(1.0));
  CHECK(std::stod(csv[1][2]) == doctest::Approx(1.0));
  for (int i = 2; i < 6; ++i)  // kept fraction non-increasing in threshold
    CHECK(std::stod(csv[i][1]) <= std::stod(csv[i - 1][1]) + 1e-12);
  CHECK(std::stod(csv[5][1]) == doctest::Approx(1.0 / 24));  // argmax fallback

  std::string svg = slurp(out / "sweep.svg");
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("polyline") != std::string::npos);

  // heuristic baseline has no proposer, hence nothing to sweep
  r = run_cli("sweep --checkpoint " + (heuristic_run() / "ckpt_final").string() + " --out " +
              (g_work / "sweep2").string());
  CHECK(r.code == 2);
  CHECK(r.output.find("importance") != std::string::npos);
}

TEST_CASE("diverging optimization exits with the numerical failure code") {
  fs::path cfg = g_work / "diverge.cfg";
  write_file(cfg,
             "preset = micro-spheres\n"
             "train.steps = 50\n"
             "train.warmup_steps = 1\n"
             "train.lr_peak = 1e200\n");
  CmdResult r =
      run_cli("train --config " + cfg.string() + " --seed 1 --out " + (g_work / "nan").string());
  CHECK(r.code == 3);
  CHECK(r.output.find("non-finite") != std::string::npos);
}

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: cli_test <path-to-fineray-binary> [doctest args]\n");
    return 1;
  }
  g_bin = argv[1];
  g_work = fs::temp_directory_path() / "fineray_test_cli";
  fs::remove_all(g_work);
  fs::create_directories(g_work);

  doctest::Context ctx;
  ctx.applyCommandLine(argc - 1, argv + 1);
  int rc = ctx.run();
  fs::remove_all(g_work);
  return rc;
}
