#pragma once

#include <cmath>
#include <vector>

#include "fineray/tape.hpp"

namespace fineray {

/// Greedy mimicry loss: each heuristic sample is matched to the closest learnt
/// proposal by current value (many-to-one allowed, ties to the lowest index);
/// the summed squared (or absolute) distances are differentiable w.r.t. the
/// proposals only.
template <class Real>
typename Tape<Real>::Id greedy_match_loss(Tape<Real>& tape, typename Tape<Real>::Id learnt,
                                          const std::vector<double>& heuristic,
                                          bool squared = true) {
  const Tensor<Real>& p = tape.value(learnt);
  if (p.rank() != 1 || static_cast<size_t>(p.shape[0]) != heuristic.size())
    throw Error("greedy_match_loss: proposal/heuristic length mismatch");
  if (heuristic.empty()) throw Error("greedy_match_loss: empty input");

  std::vector<int> match(heuristic.size());
  for (size_t k = 0; k < heuristic.size(); ++k) {
    int best = 0;
    double best_d = std::abs(heuristic[k] - static_cast<double>(p.data[0]));
    for (int j = 1; j < p.shape[0]; ++j) {
      double d = std::abs(heuristic[k] - static_cast<double>(p.data[j]));
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    match[k] = best;
  }

  Tensor<Real> targets({static_cast<int>(heuristic.size())},
                       std::vector<Real>(heuristic.begin(), heuristic.end()));
  auto diff = tape.sub(tape.gather(learnt, match), tape.constant(std::move(targets)));
  return squared ? tape.sum(tape.mul(diff, diff)) : tape.sum(tape.abs(diff));
}

/// Balanced logistic loss for importance prediction. Labels come from the
/// (gradient-stopped) fine rendering weights thresholded at `threshold`; each
/// class contributes half the loss via its mean BCE, and an empty class
/// contributes zero.
template <class Real>
typename Tape<Real>::Id importance_loss(Tape<Real>& tape, typename Tape<Real>::Id logits,
                                        const std::vector<double>& fine_weights,
                                        double threshold) {
  const Tensor<Real>& z = tape.value(logits);
  if (z.rank() != 1 || static_cast<size_t>(z.shape[0]) != fine_weights.size())
    throw Error("importance_loss: logits/weights length mismatch");
  if (fine_weights.empty()) throw Error("importance_loss: empty input");

  int n = z.shape[0];
  Tensor<Real> labels = Tensor<Real>::zeros({n});
  int n_pos = 0;
  for (int i = 0; i < n; ++i)
    if (fine_weights[i] > threshold) {
      labels.data[i] = Real(1);
      ++n_pos;
    }
  int n_neg = n - n_pos;

  Tensor<Real> weights = Tensor<Real>::zeros({n});
  for (int i = 0; i < n; ++i) {
    if (labels.data[i] > Real(0))
      weights.data[i] = Real(0.5) / Real(n_pos);
    else if (n_neg > 0)
      weights.data[i] = Real(0.5) / Real(n_neg);
  }
  return tape.weighted_bce_logits(logits, tape.constant(std::move(labels)),
                                  tape.constant(std::move(weights)));
}

}  // namespace fineray
