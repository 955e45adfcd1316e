#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <vector>

#include "fineray/rng.hpp"
#include "fineray/tape.hpp"

namespace fineray {

enum class Provenance { kStratified, kHeuristic, kLearned };

/// Ordered normalized depths in [0,1] along a ray (0 = near plane, 1 = far).
struct SamplePositions {
  std::vector<double> t;
  Provenance provenance = Provenance::kStratified;

  void check_sorted(const char* ctx) const {
    for (size_t i = 0; i + 1 < t.size(); ++i)
      if (t[i] > t[i + 1]) throw Error(std::string(ctx) + ": sample positions not sorted");
    for (double v : t)
      if (v < 0.0 || v > 1.0) throw Error(std::string(ctx) + ": sample position outside [0,1]");
  }
};

/// One sample per equal-width bin. jitter off: bin centers (i+0.5)/n;
/// jitter on: one uniform draw per bin (training mode).
inline SamplePositions stratified_sample(int n, Rng& rng, bool jitter) {
  if (n < 2) throw Error("stratified_sample: need n >= 2");
  SamplePositions out;
  out.provenance = Provenance::kStratified;
  out.t.resize(n);
  for (int i = 0; i < n; ++i)
    out.t[i] = jitter ? (i + rng.uniform()) / n : (i + 0.5) / n;
  return out;
}

/// Piecewise-constant pdf over [0,1]: edges.size() == masses.size() + 1,
/// masses sum to 1.
struct PiecewisePdf {
  std::vector<double> edges;
  std::vector<double> masses;
};

/// Normalized coarse weights define the fine-sampling pdf. Bin edges sit at
/// midpoints between consecutive coarse samples (0 and 1 as outer edges);
/// bin mass is proportional to w_i + eps.
inline PiecewisePdf heuristic_pdf(const std::vector<double>& weights,
                                  const SamplePositions& t_coarse, double eps = 1e-5) {
  if (weights.size() != t_coarse.t.size())
    throw Error("heuristic_pdf: weights/positions length mismatch");
  if (weights.empty()) throw Error("heuristic_pdf: empty input");
  for (double w : weights)
    if (w < 0.0) throw Error("heuristic_pdf: negative weight");
  t_coarse.check_sorted("heuristic_pdf");

  size_t n = weights.size();
  PiecewisePdf pdf;
  pdf.edges.resize(n + 1);
  pdf.edges[0] = 0.0;
  pdf.edges[n] = 1.0;
  for (size_t i = 1; i < n; ++i) pdf.edges[i] = 0.5 * (t_coarse.t[i - 1] + t_coarse.t[i]);

  pdf.masses.resize(n);
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    pdf.masses[i] = weights[i] + eps;
    total += pdf.masses[i];
  }
  for (double& m : pdf.masses) m /= total;
  return pdf;
}

/// Inverse-CDF sampling with linear interpolation inside bins. deterministic:
/// u_i = (i+0.5)/n; stochastic: stratified per-bin uniforms by default, or
/// i.i.d. uniforms (sorted afterwards) when stratified == false.
inline SamplePositions inverse_cdf_sample(const PiecewisePdf& pdf, int n, Rng* rng,
                                          bool deterministic, bool stratified = true) {
  if (n < 1) throw Error("inverse_cdf_sample: need n >= 1");
  double total = std::accumulate(pdf.masses.begin(), pdf.masses.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-9) throw Error("inverse_cdf_sample: pdf not normalized");
  if (!deterministic && !rng) throw Error("inverse_cdf_sample: stochastic mode needs rng");

  std::vector<double> cdf(pdf.masses.size() + 1, 0.0);
  for (size_t i = 0; i < pdf.masses.size(); ++i) cdf[i + 1] = cdf[i] + pdf.masses[i];
  cdf.back() = 1.0;

  std::vector<double> us(n);
  for (int i = 0; i < n; ++i) {
    if (deterministic)
      us[i] = (i + 0.5) / n;
    else if (stratified)
      us[i] = (i + rng->uniform()) / n;
    else
      us[i] = rng->uniform();
  }
  if (!deterministic && !stratified) std::sort(us.begin(), us.end());

  SamplePositions out;
  out.provenance = Provenance::kHeuristic;
  out.t.resize(n);
  for (int i = 0; i < n; ++i) {
    double u = us[i];
    size_t b = static_cast<size_t>(std::upper_bound(cdf.begin(), cdf.end() - 1, u) - cdf.begin());
    b = b > 0 ? b - 1 : 0;
    double lo = cdf[b], hi = cdf[b + 1];
    double frac = hi > lo ? (u - lo) / (hi - lo) : 0.5;
    out.t[i] = pdf.edges[b] + frac * (pdf.edges[b + 1] - pdf.edges[b]);
  }
  std::sort(out.t.begin(), out.t.end());
  return out;
}

/// Sorted union of two sorted sample sets (duplicates kept), with an index
/// map back into concat(a, b) for per-sample bookkeeping.
struct MergedSamples {
  SamplePositions t;
  std::vector<int> source_index;  // position k in t came from concat(a,b)[source_index[k]]
};

inline MergedSamples merge_and_sort(const SamplePositions& a, const SamplePositions& b) {
  a.check_sorted("merge_and_sort (first)");
  b.check_sorted("merge_and_sort (second)");
  size_t na = a.t.size(), nb = b.t.size();
  MergedSamples out;
  out.t.provenance = b.provenance;
  out.source_index.resize(na + nb);
  std::iota(out.source_index.begin(), out.source_index.end(), 0);
  auto key = [&](int i) { return i < static_cast<int>(na) ? a.t[i] : b.t[i - na]; };
  std::stable_sort(out.source_index.begin(), out.source_index.end(),
                   [&](int x, int y) { return key(x) < key(y); });
  out.t.t.resize(na + nb);
  for (size_t k = 0; k < na + nb; ++k) out.t.t[k] = key(out.source_index[k]);
  return out;
}

/// Differentiable rendering of one ray.
template <class Real>
struct RayRender {
  typename Tape<Real>::Id color;          // (3)
  typename Tape<Real>::Id weights;        // (n)
  typename Tape<Real>::Id transmittance;  // (n)
  typename Tape<Real>::Id acc_alpha;      // scalar, sum of weights
};

/// Composites per-sample (sigma, color) along a ray:
///   delta_i = t_{i+1}-t_i (last: 1-t_n), alpha_i = 1-exp(-sigma_i delta_i),
///   T_i = prod_{j<i}(1-alpha_j), w_i = T_i alpha_i,
///   C = sum w_i c_i + (1 - sum w) * background.
template <class Real>
RayRender<Real> render_ray(Tape<Real>& tape, typename Tape<Real>::Id t,
                           typename Tape<Real>::Id sigma, typename Tape<Real>::Id color,
                           const std::array<Real, 3>& background) {
  const Tensor<Real>& tv = tape.value(t);
  if (tv.rank() != 1) throw Error("render_ray: t must be rank-1");
  int n = tv.shape[0];
  for (int i = 0; i + 1 < n; ++i)
    if (tv.data[i] > tv.data[i + 1]) throw Error("render_ray: t not sorted");
  if (tape.value(sigma).rank() != 1 || tape.value(sigma).shape[0] != n)
    throw Error("render_ray: sigma must be (n)");
  if (tape.value(color).rank() != 2 || tape.value(color).shape[0] != n ||
      tape.value(color).shape[1] != 3)
    throw Error("render_ray: color must be (n,3)");

  auto delta = tape.forward_diff_to_one(t);
  auto sd = tape.mul(sigma, delta);
  auto trans = tape.exp(tape.neg(tape.exclusive_cumsum(sd)));         // T_i
  auto alpha = tape.add_const(tape.neg(tape.exp(tape.neg(sd))), Real(1));
  auto w = tape.mul(trans, alpha);
  auto acc = tape.sum(w);

  auto csum = tape.matmul(tape.reshape(w, {1, n}), color);            // (1,3)
  auto one_minus = tape.add_const(tape.neg(acc), Real(1));            // scalar
  auto bg = tape.constant(Tensor<Real>({1, 3}, {background[0], background[1], background[2]}));
  auto bg_term = tape.matmul(tape.reshape(one_minus, {1, 1}), bg);    // (1,3)
  auto c = tape.reshape(tape.add(csum, bg_term), {3});

  return {c, w, trans, acc};
}

/// Plain (untaped) evaluation of the same compositing math; used for
/// forward-only rendering and quadrature oracles.
struct RayRenderValues {
  std::array<double, 3> color;
  std::vector<double> weights;
  std::vector<double> transmittance;
  double acc_alpha;
};

inline RayRenderValues render_ray_values(const std::vector<double>& t,
                                         const std::vector<double>& sigma,
                                         const std::vector<double>& rgb,  // n*3, row-major
                                         const std::array<double, 3>& background) {
  size_t n = t.size();
  if (sigma.size() != n || rgb.size() != 3 * n) throw Error("render_ray_values: size mismatch");
  RayRenderValues out;
  out.weights.resize(n);
  out.transmittance.resize(n);
  out.color = {0, 0, 0};
  double log_trans = 0.0, acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (i + 1 < n && t[i] > t[i + 1]) throw Error("render_ray_values: t not sorted");
    double delta = (i + 1 < n ? t[i + 1] - t[i] : 1.0 - t[i]);
    double trans = std::exp(log_trans);
    double alpha = 1.0 - std::exp(-sigma[i] * delta);
    double w = trans * alpha;
    out.transmittance[i] = trans;
    out.weights[i] = w;
    acc += w;
    for (int c = 0; c < 3; ++c) out.color[c] += w * rgb[3 * i + c];
    log_trans -= sigma[i] * delta;
  }
  out.acc_alpha = acc;
  for (int c = 0; c < 3; ++c) out.color[c] += (1.0 - acc) * background[c];
  return out;
}

}  // namespace fineray
