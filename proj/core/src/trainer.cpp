#include "fineray/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "fineray/camera.hpp"
#include "fineray/losses.hpp"
#include "fineray/metrics.hpp"
#include "fineray/render.hpp"
#include "fineray/schedule.hpp"

namespace fineray {

namespace {

using Id = Tape<double>::Id;

Tensor<double> vec_tensor(const std::vector<double>& v) {
  return Tensor<double>({static_cast<int>(v.size())}, v);
}

/// World positions/directions for samples along one ray, as (n,3) tensors.
void fill_sample_rows(const Ray& ray, const std::vector<double>& t, Tensor<double>* pos,
                      Tensor<double>* dir, int row0) {
  for (size_t i = 0; i < t.size(); ++i) {
    Eigen::Vector3d p = ray.at_normalized(t[i]);
    for (int c = 0; c < 3; ++c) {
      pos->at(row0 + static_cast<int>(i), c) = p[c];
      dir->at(row0 + static_cast<int>(i), c) = ray.direction[c];
    }
  }
}

/// Stable argsort of concat(a, b) by value; ties keep the lower concat index.
std::vector<int> merge_order(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<int> order(a.size() + b.size());
  std::iota(order.begin(), order.end(), 0);
  auto key = [&](int i) {
    return i < static_cast<int>(a.size()) ? a[i] : b[i - a.size()];
  };
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return key(x) < key(y); });
  return order;
}

}  // namespace

Trainer::Trainer(RunConfig cfg, const Dataset* data)
    : cfg_(std::move(cfg)),
      data_(data),
      coarse_net_(cfg_.field, "coarse."),
      fine_net_(cfg_.field, "fine."),
      rng_(Rng::derive(cfg_.train.seed, "train_loop")) {
  cfg_.validate();
  coarse_net_.init(params_, cfg_.train.seed);
  fine_net_.init(params_, cfg_.train.seed);
  if (cfg_.learned_proposer()) {
    proposer_.emplace(cfg_.proposer_config());
    proposer_->init(params_, cfg_.train.seed);
  }
  opt_ = AdamState<double>::zeros_like(params_);
  stage1_steps_ =
      static_cast<int>(std::lround(cfg_.train.stage_split * cfg_.train.total_steps));
  stage_ = (cfg_.learned_proposer() && !cfg_.train.two_stage) ? 2 : 1;
}

void Trainer::switch_stage() {
  if (stage_ != 1) throw Error("switch_stage: not in stage 1");
  if (!cfg_.learned_proposer()) throw Error("switch_stage: no learnt proposer configured");
  opt_.reset();
  stage_ = 2;
  stage_start_ = step_;
}

StepLosses Trainer::train_step() {
  const TrainConfig& tc = cfg_.train;
  if (!data_) throw Error("train_step: trainer was built without a dataset");
  if (step_ >= tc.total_steps) throw Error("train_step: schedule exhausted");
  if (cfg_.learned_proposer() && tc.two_stage && stage_ == 1 && step_ == stage1_steps_)
    switch_stage();

  double lr = learning_rate(step_, stage_start_, tc.total_steps, tc.lr_peak, tc.warmup_steps);
  const std::vector<View>& train = data_->train;
  if (train.empty()) throw Error("train_step: empty training split");

  const int B = tc.batch_rays;
  const int nc = cfg_.n_coarse, nf = cfg_.n_fine, nm = nc + nf;
  const std::array<double, 3>& bg = cfg_.scene.background;

  struct RayBatchEntry {
    Ray ray;
    std::array<double, 3> gt;
    SamplePositions t_coarse;
  };
  std::vector<RayBatchEntry> batch(B);
  for (int r = 0; r < B; ++r) {
    const View& v = train[rng_.below(train.size())];
    int px = static_cast<int>(rng_.below(v.image.width));
    int py = static_cast<int>(rng_.below(v.image.height));
    batch[r].ray = pixel_ray(v.camera, px, py, v.near, v.far);
    const double* gt = v.image.pixel(py, px);
    batch[r].gt = {gt[0], gt[1], gt[2]};
    batch[r].t_coarse = stratified_sample(nc, rng_, /*jitter=*/true);
  }

  Tape<double> tape;
  TapeParams<double> tp(tape, params_);

  Tensor<double> cpos = Tensor<double>::zeros({B * nc, 3});
  Tensor<double> cdir = Tensor<double>::zeros({B * nc, 3});
  for (int r = 0; r < B; ++r)
    fill_sample_rows(batch[r].ray, batch[r].t_coarse.t, &cpos, &cdir, r * nc);
  auto cq = coarse_net_.query(tp, tape.constant(std::move(cpos)), tape.constant(std::move(cdir)),
                              cfg_.scene.density_noise_std, &rng_);

  std::vector<Id> loss_coarse, loss_fine, loss_match, loss_imp;
  std::vector<Id> gt_ids(B);
  std::vector<std::vector<double>> coarse_w(B);
  for (int r = 0; r < B; ++r) {
    auto sig = tape.slice(cq.sigma, r * nc, (r + 1) * nc);
    auto col = tape.slice_rows(cq.color, r * nc, (r + 1) * nc);
    auto t_id = tape.constant(vec_tensor(batch[r].t_coarse.t));
    auto rr = render_ray(tape, t_id, sig, col, bg);
    gt_ids[r] = tape.constant(Tensor<double>({3}, {batch[r].gt[0], batch[r].gt[1], batch[r].gt[2]}));
    loss_coarse.push_back(tape.mse(rr.color, gt_ids[r]));
    coarse_w[r] = tape.value(rr.weights).data;
  }

  bool learned = cfg_.learned_proposer();
  bool with_imp = learned && cfg_.with_importance;

  if (stage_ == 1) {
    // Vanilla fine pass on the heuristic samples; proposer (if any) mimics
    // behind stop-gradients so the baseline trajectory is untouched.
    std::vector<SamplePositions> fine_t(B);
    std::vector<MergedSamples> merged(B);
    Tensor<double> fpos = Tensor<double>::zeros({B * nm, 3});
    Tensor<double> fdir = Tensor<double>::zeros({B * nm, 3});
    for (int r = 0; r < B; ++r) {
      PiecewisePdf pdf = heuristic_pdf(coarse_w[r], batch[r].t_coarse);
      fine_t[r] = inverse_cdf_sample(pdf, nf, &rng_, /*deterministic=*/false,
                                     cfg_.stratified_fine);
      merged[r] = merge_and_sort(batch[r].t_coarse, fine_t[r]);
      fill_sample_rows(batch[r].ray, merged[r].t.t, &fpos, &fdir, r * nm);
    }
    auto fq = fine_net_.query(tp, tape.constant(std::move(fpos)), tape.constant(std::move(fdir)),
                              cfg_.scene.density_noise_std, &rng_);
    for (int r = 0; r < B; ++r) {
      auto sig = tape.slice(fq.sigma, r * nm, (r + 1) * nm);
      auto col = tape.slice_rows(fq.color, r * nm, (r + 1) * nm);
      auto t_id = tape.constant(vec_tensor(merged[r].t.t));
      auto rr = render_ray(tape, t_id, sig, col, bg);
      loss_fine.push_back(tape.mse(rr.color, gt_ids[r]));

      if (learned) {
        auto feats = tape.slice_rows(cq.feature, r * nc, (r + 1) * nc);
        auto prop = proposer_->propose(tp, feats, batch[r].t_coarse.t,
                                       /*stop_features_for_proposal=*/true);
        loss_match.push_back(greedy_match_loss(tape, prop.t_fine, fine_t[r].t,
                                               tc.match_loss == "squared"));
        if (with_imp) {
          auto logits = tape.gather(prop.importance, merged[r].source_index);
          loss_imp.push_back(importance_loss(tape, logits, tape.value(rr.weights).data,
                                             tc.importance_weight_threshold));
        }
      }
    }
  } else {
    // End-to-end: the learnt proposals join the coarse samples in the fine
    // pass, so reconstruction gradients reach the proposer and, through its
    // feature inputs, the coarse trunk.
    std::vector<Id> sorted_t(B), pos_parts(B), imp_logits(B, -1);
    std::vector<std::vector<int>> orders(B);
    Tensor<double> fdir = Tensor<double>::zeros({B * nm, 3});
    for (int r = 0; r < B; ++r) {
      auto feats = tape.slice_rows(cq.feature, r * nc, (r + 1) * nc);
      auto prop = proposer_->propose(tp, feats, batch[r].t_coarse.t,
                                     /*stop_features_for_proposal=*/false);
      orders[r] = merge_order(batch[r].t_coarse.t, tape.value(prop.t_fine).data);
      auto cat = tape.concat({tape.constant(vec_tensor(batch[r].t_coarse.t)), prop.t_fine});
      sorted_t[r] = tape.gather(cat, orders[r]);
      if (with_imp) imp_logits[r] = prop.importance;  // slot order until the render exists

      const Ray& ray = batch[r].ray;
      Eigen::Vector3d base = ray.origin + ray.t_near * ray.direction;
      Eigen::Vector3d span = (ray.t_far - ray.t_near) * ray.direction;
      auto span_row = tape.constant(Tensor<double>({1, 3}, {span[0], span[1], span[2]}));
      auto base_vec = tape.constant(Tensor<double>({3}, {base[0], base[1], base[2]}));
      pos_parts[r] =
          tape.bias_add(tape.matmul(tape.reshape(sorted_t[r], {nm, 1}), span_row), base_vec);
      for (int i = 0; i < nm; ++i)
        for (int c = 0; c < 3; ++c) fdir.at(r * nm + i, c) = ray.direction[c];
    }

    auto fq = fine_net_.query(tp, tape.concat(pos_parts), tape.constant(std::move(fdir)),
                              cfg_.scene.density_noise_std, &rng_);
    for (int r = 0; r < B; ++r) {
      auto sig = tape.slice(fq.sigma, r * nm, (r + 1) * nm);
      auto col = tape.slice_rows(fq.color, r * nm, (r + 1) * nm);
      auto rr = render_ray(tape, sorted_t[r], sig, col, bg);
      loss_fine.push_back(tape.mse(rr.color, gt_ids[r]));
      if (with_imp) {
        auto logits = tape.gather(imp_logits[r], orders[r]);
        loss_imp.push_back(importance_loss(tape, logits, tape.value(rr.weights).data,
                                           tc.importance_weight_threshold));
      }
    }
  }

  auto mean_of = [&](const std::vector<Id>& terms) {
    Id s = terms[0];
    for (size_t i = 1; i < terms.size(); ++i) s = tape.add(s, terms[i]);
    return tape.scale(s, 1.0 / static_cast<double>(terms.size()));
  };

  StepLosses out;
  out.step = step_;
  out.stage = stage_;
  out.lr = lr;
  Id mc = mean_of(loss_coarse), mf = mean_of(loss_fine);
  Id total = tape.add(mc, mf);
  out.coarse = tape.value(mc).data[0];
  out.fine = tape.value(mf).data[0];
  if (!loss_match.empty()) {
    Id m = mean_of(loss_match);
    out.match = tape.value(m).data[0];
    total = tape.add(total, m);
  }
  if (!loss_imp.empty()) {
    Id m = mean_of(loss_imp);
    out.importance = tape.value(m).data[0];
    total = tape.add(total, m);
  }
  if (!std::isfinite(tape.value(total).data[0]))
    throw NumericalError("train_step: non-finite loss at step " + std::to_string(step_));

  tape.backward(total);
  std::unordered_map<std::string, Tensor<double>> grads;
  for (const std::string& name : tp.bound()) grads.emplace(name, tape.grad(tp.id_of(name)));
  adam_step(params_, grads, opt_, lr);

  ++step_;
  return out;
}

Image Trainer::render_view(const View& view, RenderStats* stats,
                           std::optional<double> importance_threshold) {
  if (importance_threshold && (!cfg_.learned_proposer() || !cfg_.with_importance))
    throw Error("render_view: importance pruning needs a learnt proposer with an importance head");
  const Camera& cam = view.camera;
  Image out(cam.height, cam.width);
  const int nc = cfg_.n_coarse, nf = cfg_.n_fine, nm = nc + nf;
  const std::array<double, 3>& bg = cfg_.scene.background;
  bool use_learned = cfg_.learned_proposer() && stage_ == 2;

  Rng unused;  // inference never draws
  SamplePositions t_coarse = stratified_sample(nc, unused, /*jitter=*/false);

  const int chunk = 32;
  int n_px = cam.height * cam.width;
  double kept_sum = 0.0;
  for (int p0 = 0; p0 < n_px; p0 += chunk) {
    int n = std::min(chunk, n_px - p0);
    std::vector<Ray> rays(n);
    for (int k = 0; k < n; ++k) {
      int py = (p0 + k) / cam.width, px = (p0 + k) % cam.width;
      rays[k] = pixel_ray(cam, px, py, view.near, view.far);
    }

    Tape<double> tape;
    TapeParams<double> tp(tape, params_);
    Tensor<double> cpos = Tensor<double>::zeros({n * nc, 3});
    Tensor<double> cdir = Tensor<double>::zeros({n * nc, 3});
    for (int k = 0; k < n; ++k) fill_sample_rows(rays[k], t_coarse.t, &cpos, &cdir, k * nc);
    auto cq = coarse_net_.query(tp, tape.constant(std::move(cpos)),
                                tape.constant(std::move(cdir)));

    // Per-ray merged sample set and (optionally pruned) fine query rows.
    std::vector<std::vector<double>> merged_t(n);
    std::vector<std::vector<int>> kept(n);
    int64_t total_rows = 0;
    for (int k = 0; k < n; ++k) {
      auto rr = render_ray(tape, tape.constant(vec_tensor(t_coarse.t)),
                           tape.slice(cq.sigma, k * nc, (k + 1) * nc),
                           tape.slice_rows(cq.color, k * nc, (k + 1) * nc), bg);
      std::vector<double> w = tape.value(rr.weights).data;

      std::vector<double> fine_vals;
      std::vector<double> logits;
      if (use_learned) {
        auto feats = tape.slice_rows(cq.feature, k * nc, (k + 1) * nc);
        auto prop = proposer_->propose(tp, feats, t_coarse.t, false);
        fine_vals = tape.value(prop.t_fine).data;
        if (importance_threshold) logits = tape.value(prop.importance).data;
      } else {
        PiecewisePdf pdf = heuristic_pdf(w, t_coarse);
        fine_vals = inverse_cdf_sample(pdf, nf, nullptr, /*deterministic=*/true).t;
      }

      std::vector<int> order = merge_order(t_coarse.t, fine_vals);
      merged_t[k].resize(nm);
      for (int i = 0; i < nm; ++i)
        merged_t[k][i] =
            order[i] < nc ? t_coarse.t[order[i]] : fine_vals[order[i] - nc];

      if (importance_threshold) {
        std::vector<double> merged_logits(nm);
        for (int i = 0; i < nm; ++i) merged_logits[i] = logits[order[i]];
        SamplePositions sp;
        sp.t = merged_t[k];
        FilterResult fr = importance_filter(sp, merged_logits, *importance_threshold);
        kept[k] = fr.kept;
        kept_sum += fr.kept_fraction;
      } else {
        kept[k].resize(nm);
        std::iota(kept[k].begin(), kept[k].end(), 0);
        kept_sum += 1.0;
      }
      total_rows += static_cast<int64_t>(kept[k].size());
    }

    Tensor<double> fpos = Tensor<double>::zeros({static_cast<int>(total_rows), 3});
    Tensor<double> fdir = Tensor<double>::zeros({static_cast<int>(total_rows), 3});
    std::vector<int> offset(n + 1, 0);
    for (int k = 0; k < n; ++k) {
      std::vector<double> t_kept;
      for (int i : kept[k]) t_kept.push_back(merged_t[k][i]);
      fill_sample_rows(rays[k], t_kept, &fpos, &fdir, offset[k]);
      offset[k + 1] = offset[k] + static_cast<int>(t_kept.size());
    }
    auto fq = fine_net_.query(tp, tape.constant(std::move(fpos)),
                              tape.constant(std::move(fdir)));
    const Tensor<double>& fsig = tape.value(fq.sigma);
    const Tensor<double>& fcol = tape.value(fq.color);
    for (int k = 0; k < n; ++k) {
      int rows = offset[k + 1] - offset[k];
      std::vector<double> t_kept(rows), sig(rows), rgb(3 * rows);
      for (int i = 0; i < rows; ++i) {
        t_kept[i] = merged_t[k][kept[k][i]];
        sig[i] = fsig.data[offset[k] + i];
        for (int c = 0; c < 3; ++c) rgb[3 * i + c] = fcol.at(offset[k] + i, c);
      }
      RayRenderValues rv = render_ray_values(t_kept, sig, rgb, bg);
      int py = (p0 + k) / cam.width, px = (p0 + k) % cam.width;
      for (int c = 0; c < 3; ++c) out.pixel(py, px)[c] = rv.color[c];
    }
    if (stats) {
      stats->fine_evals += total_rows;
      stats->fine_evals_full += static_cast<int64_t>(n) * nm;
    }
  }
  if (stats) stats->kept_fraction = kept_sum / n_px;
  return out;
}

EvalResult Trainer::evaluate(const std::vector<View>& views, int max_images, bool track_best) {
  EvalResult out;
  int n = static_cast<int>(views.size());
  if (max_images > 0) n = std::min(n, max_images);
  if (n == 0) throw Error("evaluate: empty split");
  for (int i = 0; i < n; ++i) {
    Image img = render_view(views[i]);
    out.psnr.push_back(psnr(img, views[i].image));
    out.ssim.push_back(ssim(img, views[i].image));
    out.mean_psnr += out.psnr.back();
    out.mean_ssim += out.ssim.back();
  }
  out.mean_psnr /= n;
  out.mean_ssim /= n;
  if (track_best && out.mean_psnr > best_val_psnr_) {
    best_val_psnr_ = out.mean_psnr;
    best_val_step_ = step_;
  }
  return out;
}

Checkpoint Trainer::to_checkpoint() const {
  Checkpoint c;
  auto push_store = [&c](const ParameterStore<double>& store, const std::string& prefix) {
    for (const std::string& name : store.names()) {
      const Tensor<double>& t = store.get(name);
      Tensor<float> f;
      f.shape = t.shape;
      f.data.assign(t.data.begin(), t.data.end());
      c.tensors.emplace_back(prefix + name, std::move(f));
    }
  };
  push_store(params_, "");
  push_store(opt_.m, "adam.m.");
  push_store(opt_.v, "adam.v.");
  c.meta.emplace_back("step", std::to_string(step_));
  c.meta.emplace_back("stage", std::to_string(stage_));
  c.meta.emplace_back("stage_start", std::to_string(stage_start_));
  c.meta.emplace_back("adam_t", std::to_string(opt_.t));
  c.meta.emplace_back("best_val_psnr", std::to_string(best_val_psnr_));
  c.meta.emplace_back("best_val_step", std::to_string(best_val_step_));
  c.meta.emplace_back("proposer", cfg_.proposer);
  c.meta.emplace_back("importance", cfg_.with_importance ? "1" : "0");
  c.meta.emplace_back("rng", rng_.serialize());
  return c;
}

void Trainer::restore(const Checkpoint& ckpt) {
  auto pull_store = [&ckpt](ParameterStore<double>& store, const std::string& prefix) {
    for (const std::string& name : store.names()) {
      const Tensor<float>* f = ckpt.find_tensor(prefix + name);
      if (!f) throw Error("restore: checkpoint is missing tensor '" + prefix + name + "'");
      Tensor<double>& t = store.get(name);
      if (f->shape != t.shape)
        throw Error("restore: shape mismatch for tensor '" + prefix + name + "'");
      t.data.assign(f->data.begin(), f->data.end());
    }
  };
  pull_store(params_, "");
  pull_store(opt_.m, "adam.m.");
  pull_store(opt_.v, "adam.v.");
  step_ = std::stoi(ckpt.require_meta("step"));
  stage_ = std::stoi(ckpt.require_meta("stage"));
  stage_start_ = std::stoi(ckpt.require_meta("stage_start"));
  opt_.t = std::stoll(ckpt.require_meta("adam_t"));
  best_val_psnr_ = std::stod(ckpt.require_meta("best_val_psnr"));
  best_val_step_ = std::stoi(ckpt.require_meta("best_val_step"));
  if (ckpt.require_meta("proposer") != cfg_.proposer)
    throw Error("restore: checkpoint proposer '" + ckpt.require_meta("proposer") +
                "' does not match configured '" + cfg_.proposer + "'");
  rng_.deserialize(ckpt.require_meta("rng"));
}

}  // namespace fineray
