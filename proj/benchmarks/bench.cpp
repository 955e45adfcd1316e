// Microbenchmarks for the hot paths: field queries, ray compositing,
// proposer forward passes, inverse-CDF sampling, and a full training step.

#include <benchmark/benchmark.h>

#include "fineray/config.hpp"
#include "fineray/dataset.hpp"
#include "fineray/field.hpp"
#include "fineray/proposer.hpp"
#include "fineray/render.hpp"
#include "fineray/trainer.hpp"

using namespace fineray;

namespace {

Tensor<double> unit_rows(int n, Rng& rng) {
  Tensor<double> t = Tensor<double>::zeros({n, 3});
  for (int r = 0; r < n; ++r) {
    double norm = 0;
    for (int c = 0; c < 3; ++c) {
      t.at(r, c) = rng.normal();
      norm += t.at(r, c) * t.at(r, c);
    }
    for (int c = 0; c < 3; ++c) t.at(r, c) /= std::sqrt(norm);
  }
  return t;
}

FieldConfig desk_field() {
  return preset_config("desk-spheres").field;
}

void BM_FieldQueryForward(benchmark::State& state) {
  int rows = static_cast<int>(state.range(0));
  FieldNetwork<double> net(desk_field(), "f.");
  ParameterStore<double> store;
  net.init(store, 1);
  Rng rng(2);
  Tensor<double> pos = Tensor<double>::zeros({rows, 3});
  for (double& v : pos.data) v = rng.uniform(-1, 1);
  Tensor<double> dir = unit_rows(rows, rng);

  for (auto _ : state) {
    Tape<double> tape;
    TapeParams<double> tp(tape, store);
    auto out = net.query(tp, tape.constant(pos), tape.constant(dir));
    benchmark::DoNotOptimize(tape.value(out.sigma).data.data());
  }
  state.SetItemsProcessed(state.iterations() * rows);
}
BENCHMARK(BM_FieldQueryForward)->Arg(32)->Arg(128)->Arg(512);

void BM_FieldQueryBackward(benchmark::State& state) {
  int rows = static_cast<int>(state.range(0));
  FieldNetwork<double> net(desk_field(), "f.");
  ParameterStore<double> store;
  net.init(store, 1);
  Rng rng(2);
  Tensor<double> pos = Tensor<double>::zeros({rows, 3});
  for (double& v : pos.data) v = rng.uniform(-1, 1);
  Tensor<double> dir = unit_rows(rows, rng);

  for (auto _ : state) {
    Tape<double> tape;
    TapeParams<double> tp(tape, store);
    auto out = net.query(tp, tape.constant(pos), tape.constant(dir));
    auto loss = tape.add(tape.sum(out.sigma), tape.sum(out.color));
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad(tp("f.density.w")).data.data());
  }
  state.SetItemsProcessed(state.iterations() * rows);
}
BENCHMARK(BM_FieldQueryBackward)->Arg(32)->Arg(128)->Arg(512);

void BM_RenderRay(benchmark::State& state) {
  int n = static_cast<int>(state.range(0));
  Rng rng(3);
  std::vector<double> t(n), sigma(n);
  for (int i = 0; i < n; ++i) t[i] = (i + rng.uniform()) / n;
  for (double& s : sigma) s = rng.uniform(0, 20);
  Tensor<double> color = Tensor<double>::zeros({n, 3});
  for (double& v : color.data) v = rng.uniform();

  for (auto _ : state) {
    Tape<double> tape;
    auto rr = render_ray(tape, tape.leaf(Tensor<double>({n}, t)),
                         tape.leaf(Tensor<double>({n}, sigma)), tape.leaf(color),
                         std::array<double, 3>{1, 1, 1});
    tape.backward(tape.sum(rr.color));
    benchmark::DoNotOptimize(tape.value(rr.weights).data.data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_RenderRay)->Arg(32)->Arg(96);

void BM_ProposerForward(benchmark::State& state) {
  static const ProposerArch archs[] = {ProposerArch::kTransformer, ProposerArch::kPool,
                                       ProposerArch::kMlpMix};
  ProposerConfig cfg;
  cfg.arch = archs[state.range(0)];
  cfg.n_coarse = 32;
  cfg.n_fine = 64;
  cfg.feature_dim = desk_field().trunk_width;
  cfg.with_importance = true;
  Proposer<double> proposer(cfg);
  ParameterStore<double> store;
  proposer.init(store, 1);

  Rng rng(4);
  Tensor<double> feats = Tensor<double>::zeros({cfg.n_coarse, cfg.feature_dim});
  for (double& v : feats.data) v = rng.uniform(-1, 1);
  SamplePositions t = stratified_sample(cfg.n_coarse, rng, false);

  for (auto _ : state) {
    Tape<double> tape;
    TapeParams<double> tp(tape, store);
    auto prop = proposer.propose(tp, tape.constant(feats), t.t, false);
    benchmark::DoNotOptimize(tape.value(prop.t_fine).data.data());
  }
  state.SetLabel(to_string(cfg.arch));
}
BENCHMARK(BM_ProposerForward)->Arg(0)->Arg(1)->Arg(2);

void BM_InverseCdfSample(benchmark::State& state) {
  Rng rng(5);
  std::vector<double> w(32);
  for (double& v : w) v = rng.uniform();
  SamplePositions coarse = stratified_sample(32, rng, false);
  PiecewisePdf pdf = heuristic_pdf(w, coarse);

  for (auto _ : state) {
    SamplePositions s = inverse_cdf_sample(pdf, 64, &rng, /*deterministic=*/false);
    benchmark::DoNotOptimize(s.t.data());
  }
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_InverseCdfSample);

void BM_TrainStep(benchmark::State& state) {
  static RunConfig cfg = [] {
    RunConfig c = preset_config("micro-spheres");
    c.train.batch_rays = 4;
    return c;
  }();
  static Dataset data = [] {
    AnalyticScene scene = make_builtin_scene(cfg.scene.kind, cfg.scene_seed);
    return generate_dataset(scene, cfg.scene, cfg.train_views, cfg.val_views, cfg.test_views,
                            cfg.scene_seed, /*oracle_quadrature=*/1024);
  }();
  Trainer trainer(cfg, &data);
  for (auto _ : state) {
    StepLosses l = trainer.train_step();
    benchmark::DoNotOptimize(l.coarse);
    if (trainer.step() + 2 >= cfg.train.total_steps) {
      state.PauseTiming();
      trainer = Trainer(cfg, &data);  // schedule exhausted; start over
      state.ResumeTiming();
    }
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
