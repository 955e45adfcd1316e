#pragma once

#include <algorithm>
#include <cmath>

#include "fineray/tensor.hpp"

namespace fineray {

/// Learning rate at a global 0-based step: a linear warmup ramp local to the
/// current stage multiplied by a cosine decay that runs over the whole
/// schedule. A stage switch restarts the ramp (stage_start moves) while the
/// cosine keeps decaying where it left off.
inline double learning_rate(int step, int stage_start, int total_steps, double lr_peak,
                            int warmup_steps) {
  if (step < 0 || step >= total_steps) throw Error("learning_rate: step out of range");
  if (stage_start < 0 || stage_start > step) throw Error("learning_rate: bad stage_start");

  double cosine = 1.0;
  if (total_steps > warmup_steps && step >= warmup_steps) {
    double progress =
        static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
    cosine = 0.5 * (1.0 + std::cos(M_PI * progress));
  }
  double ramp = 1.0;
  if (warmup_steps > 0)
    ramp = std::min(1.0, static_cast<double>(step - stage_start + 1) / warmup_steps);
  return lr_peak * ramp * cosine;
}

}  // namespace fineray
