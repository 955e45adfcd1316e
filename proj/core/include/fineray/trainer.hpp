#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fineray/adam.hpp"
#include "fineray/checkpoint.hpp"
#include "fineray/config.hpp"
#include "fineray/dataset.hpp"
#include "fineray/field.hpp"
#include "fineray/proposer.hpp"
#include "fineray/rng.hpp"

namespace fineray {

/// Per-step loss breakdown; each entry is a mean over the ray batch.
struct StepLosses {
  int step = 0;
  int stage = 1;
  double coarse = 0.0;
  double fine = 0.0;
  double match = 0.0;
  double importance = 0.0;
  double lr = 0.0;

  double total() const { return coarse + fine + match + importance; }
};

struct EvalResult {
  std::vector<double> psnr, ssim;  // per evaluated image
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
};

struct RenderStats {
  int64_t fine_evals = 0;       // fine-network sample evaluations actually run
  int64_t fine_evals_full = 0;  // what an unpruned render would have run
  double kept_fraction = 1.0;   // mean over rays
};

/// Two-stage coarse-to-fine trainer. Stage 1 trains both fields as vanilla
/// NeRF with heuristic fine sampling while the proposer (if any) mimics the
/// heuristic behind a stop-gradient; stage 2 swaps the learnt proposals into
/// the fine pass and trains end-to-end. A run configured with
/// proposer=heuristic never leaves stage 1 and never switches schedules.
class Trainer {
 public:
  Trainer(RunConfig cfg, const Dataset* data);

  const RunConfig& config() const { return cfg_; }
  ParameterStore<double>& params() { return params_; }
  AdamState<double>& opt() { return opt_; }
  Rng& rng() { return rng_; }
  int step() const { return step_; }
  int stage() const { return stage_; }
  int stage1_steps() const { return stage1_steps_; }
  bool learned_proposer() const { return cfg_.learned_proposer(); }
  double best_val_psnr() const { return best_val_psnr_; }
  int best_val_step() const { return best_val_step_; }

  /// One optimization step on a fresh ray batch; performs the stage switch
  /// when the schedule crosses the split point.
  StepLosses train_step();

  /// Resets optimizer moments and restarts the warmup ramp; parameters are
  /// untouched. Called automatically by train_step at the split point.
  void switch_stage();

  /// Renders up to max_images views (all if max_images <= 0) and scores them.
  /// track_best updates the early-stopping bookkeeping.
  EvalResult evaluate(const std::vector<View>& views, int max_images, bool track_best = false);

  /// Deterministic inference render. With a threshold, the learnt importance
  /// logits prune fine-network queries (argmax fallback keeps one sample).
  Image render_view(const View& view, RenderStats* stats = nullptr,
                    std::optional<double> importance_threshold = std::nullopt);

  Checkpoint to_checkpoint() const;
  void restore(const Checkpoint& ckpt);

 private:
  RunConfig cfg_;
  const Dataset* data_;
  FieldNetwork<double> coarse_net_;
  FieldNetwork<double> fine_net_;
  std::optional<Proposer<double>> proposer_;
  ParameterStore<double> params_;
  AdamState<double> opt_;
  Rng rng_;
  int step_ = 0;
  int stage_ = 1;
  int stage_start_ = 0;
  int stage1_steps_ = 0;
  double best_val_psnr_ = -1.0;
  int best_val_step_ = -1;
};

}  // namespace fineray
