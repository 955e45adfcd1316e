#pragma once

#include <string>

#include "fineray/field.hpp"
#include "fineray/proposer.hpp"
#include "fineray/scene.hpp"

namespace fineray {

struct TrainConfig {
  int total_steps = 20000;
  int batch_rays = 8;
  double lr_peak = 5e-4;
  int warmup_steps = 1000;
  double stage_split = 0.5;  // fraction of total_steps spent in stage 1
  double importance_weight_threshold = 0.03;
  std::string match_loss = "squared";  // squared | absolute
  bool two_stage = true;               // false: stage 2 from step 0 ("scratch")
  int eval_every = 500;
  int eval_images = 4;  // validation images re-rendered per eval
  int checkpoint_every = 2000;
  uint64_t seed = 1;

  void validate() const;
};

/// Everything a run needs, assembled from a preset and/or a key=value config
/// file, then CLI overrides. The key schema is documented in README.md and
/// enforced by apply_override (unknown keys are errors).
struct RunConfig {
  SceneConfig scene;
  uint64_t scene_seed = 7;  // procedural geometry + camera orbit
  int train_views = 20, val_views = 4, test_views = 8;
  std::string dataset_path;  // posed-image ingestion; empty for analytic scenes

  FieldConfig field;
  int n_coarse = 32;
  int n_fine = 64;
  bool stratified_fine = true;  // stratify the inverse-CDF draws

  std::string proposer = "mlpmix";  // heuristic | <proposer arch string>
  bool with_importance = true;

  TrainConfig train;

  bool learned_proposer() const { return proposer != "heuristic"; }
  ProposerConfig proposer_config() const;
  void validate() const;
};

/// Built-in presets: desk-spheres, desk-boxes, micro-spheres (tiny smoke-test
/// scale). Unknown name is an error listing the available presets.
RunConfig preset_config(const std::string& name);

/// Applies one `key=value` override in place. Unknown key or unparsable value
/// throws Error naming the key.
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);

/// Key=value text file; '#' starts a comment, blank lines ignored. An optional
/// `preset` key (first) seeds defaults before the remaining keys apply.
RunConfig load_config_file(const std::string& path);

/// Full snapshot in the same key=value schema; round-trips through the parser.
std::string serialize_config(const RunConfig& cfg);

}  // namespace fineray
