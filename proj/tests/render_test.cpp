#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "fineray/render.hpp"
#include "test_helpers.hpp"

using namespace fineray;
using fineray::testing::chi2_quantile;
using fineray::testing::finite_difference_check;
using fineray::testing::random_tensor;
using Id = Tape<double>::Id;

TEST_CASE("stratified sampling") {
  Rng rng(1);
  auto s = stratified_sample(4, rng, false);
  CHECK(s.t == std::vector<double>({0.125, 0.375, 0.625, 0.875}));

  auto j = stratified_sample(2, rng, true);
  CHECK(j.t[0] >= 0.0);
  CHECK(j.t[0] < 0.5);
  CHECK(j.t[1] >= 0.5);
  CHECK(j.t[1] < 1.0);

  CHECK_THROWS_AS(stratified_sample(1, rng, false), Error);

  // jittered draws are uniform within bins: histogram at 4x bin resolution
  const int n = 64, trials = 1562, bins = 256;
  std::vector<int> counts(bins, 0);
  for (int k = 0; k < trials; ++k)
    for (double t : stratified_sample(n, rng, true).t)
      ++counts[std::min(bins - 1, static_cast<int>(t * bins))];
  double expect = double(n) * trials / bins, chi2 = 0.0;
  for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
  CHECK(chi2 < chi2_quantile(0.99, bins - 1));
}

TEST_CASE("render_ray analytic examples") {
  std::array<double, 3> bg = {1.0, 0.5, 0.0};

  SUBCASE("empty space renders the background") {
    auto r = render_ray_values({0.2, 0.5, 0.8}, {0, 0, 0},
                               {1, 1, 1, 1, 1, 1, 1, 1, 1}, bg);
    for (double w : r.weights) CHECK(w == 0.0);
    for (int c = 0; c < 3; ++c) CHECK(r.color[c] == doctest::Approx(bg[c]));
  }
  SUBCASE("one sample with sigma*delta = ln 2 takes half the pixel") {
    // t = [0.5] so delta = 0.5; sigma = 2 ln 2
    auto r = render_ray_values({0.5}, {2.0 * std::log(2.0)}, {0.2, 0.4, 0.6}, bg);
    CHECK(r.weights[0] == doctest::Approx(0.5).epsilon(1e-12));
    for (int c = 0; c < 3; ++c) {
      double expect = 0.5 * std::array<double, 3>{0.2, 0.4, 0.6}[c] + 0.5 * bg[c];
      CHECK(r.color[c] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
  SUBCASE("two samples, unit sigma") {
    auto r = render_ray_values({0.25, 0.75}, {1.0, 1.0}, {1, 0, 0, 0, 1, 0}, bg);
    // delta = [0.5, 0.25]; w1 = 1-e^-0.5, w2 = e^-0.5 (1-e^-0.25)
    CHECK(r.weights[0] == doctest::Approx(1.0 - std::exp(-0.5)).epsilon(1e-12));
    CHECK(r.weights[1] ==
          doctest::Approx(std::exp(-0.5) * (1.0 - std::exp(-0.25))).epsilon(1e-12));
    CHECK(r.weights[0] == doctest::Approx(0.39347).epsilon(1e-4));
    CHECK(r.weights[1] == doctest::Approx(0.13416).epsilon(1e-4));
  }
  SUBCASE("unsorted t is rejected") {
    CHECK_THROWS_AS(render_ray_values({0.5, 0.2}, {1, 1}, {0, 0, 0, 0, 0, 0}, bg), Error);
  }
}

TEST_CASE("taped render matches the plain evaluation") {
  Rng rng(9);
  std::array<double, 3> bg = {0.0, 0.0, 0.0};
  std::vector<double> t = stratified_sample(16, rng, true).t;
  Tensor<double> sigma = random_tensor({16}, rng, 0.0, 8.0);
  Tensor<double> color = random_tensor({16, 3}, rng, 0.0, 1.0);

  Tape<double> tape;
  auto rr = render_ray(tape, tape.leaf(Tensor<double>::vec1d(t)), tape.leaf(sigma),
                       tape.leaf(color), bg);
  auto rv = render_ray_values(t, sigma.data, color.data, bg);
  for (int i = 0; i < 16; ++i) {
    CHECK(tape.value(rr.weights).data[i] == doctest::Approx(rv.weights[i]).epsilon(1e-12));
    CHECK(tape.value(rr.transmittance).data[i] ==
          doctest::Approx(rv.transmittance[i]).epsilon(1e-12));
  }
  for (int c = 0; c < 3; ++c)
    CHECK(tape.value(rr.color).data[c] == doctest::Approx(rv.color[c]).epsilon(1e-12));
  CHECK(tape.value(rr.acc_alpha).data[0] == doctest::Approx(rv.acc_alpha).epsilon(1e-12));
}

TEST_CASE("rendering-equation invariants on random rays") {
  Rng rng(77);
  std::array<double, 3> bg = {1.0, 1.0, 1.0};
  for (int trial = 0; trial < 1000; ++trial) {
    int n = 2 + static_cast<int>(rng.below(30));
    std::vector<double> t = stratified_sample(n, rng, true).t;
    std::vector<double> sigma(n), rgb(3 * n);
    for (double& v : sigma) v = rng.uniform(0.0, 20.0);
    for (double& v : rgb) v = rng.uniform();
    auto r = render_ray_values(t, sigma, rgb, bg);

    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      REQUIRE(r.weights[i] >= 0.0);
      if (i > 0) REQUIRE(r.transmittance[i] <= r.transmittance[i - 1] + 1e-15);
      acc += r.weights[i];
    }
    REQUIRE(r.transmittance[0] == 1.0);
    REQUIRE(acc <= 1.0 + 1e-5);

    // split compositing: head contribution + T_k * tail == full (to 1e-6).
    // The tail render restarts its transmittance at 1 and uses the same
    // deltas, so chaining through T_k must reproduce the one-pass result.
    int k = 1 + static_cast<int>(rng.below(n - 1));
    std::array<double, 3> chained = {0, 0, 0};
    double log_trans = 0.0;
    for (int i = 0; i < n; ++i) {
      double delta = (i + 1 < n ? t[i + 1] - t[i] : 1.0 - t[i]);
      double trans = std::exp(log_trans);
      (void)trans;
      if (i == k) break;
      log_trans -= sigma[i] * delta;
    }
    double t_k = std::exp(log_trans);
    // head: weights of samples [0,k) from the full render
    for (int i = 0; i < k; ++i)
      for (int c = 0; c < 3; ++c) chained[c] += r.weights[i] * rgb[3 * i + c];
    // tail rendered standalone over the same deltas
    {
      double lt = 0.0;
      for (int i = k; i < n; ++i) {
        double delta = (i + 1 < n ? t[i + 1] - t[i] : 1.0 - t[i]);
        double w = std::exp(lt) * (1.0 - std::exp(-sigma[i] * delta));
        for (int c = 0; c < 3; ++c) chained[c] += t_k * w * rgb[3 * i + c];
        lt -= sigma[i] * delta;
      }
      for (int c = 0; c < 3; ++c) chained[c] += t_k * std::exp(lt) * bg[c];
    }
    for (int c = 0; c < 3; ++c) REQUIRE(r.color[c] == doctest::Approx(chained[c]).epsilon(1e-6));
  }
}

TEST_CASE("sum of weights limits in sigma") {
  std::vector<double> t = {0.125, 0.375, 0.625, 0.875};
  std::vector<double> rgb(12, 0.5);
  auto lo = render_ray_values(t, {0, 0, 0, 0}, rgb, {0, 0, 0});
  CHECK(lo.acc_alpha == 0.0);
  auto hi = render_ray_values(t, {1e9, 1e9, 1e9, 1e9}, rgb, {0, 0, 0});
  CHECK(hi.acc_alpha == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("render_ray gradients match finite differences") {
  Rng rng(4);
  std::array<double, 3> bg = {0.3, 0.6, 0.9};
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    Rng r2(seed);
    std::vector<double> tv = stratified_sample(6, r2, true).t;
    std::vector<Tensor<double>> inputs = {
        Tensor<double>::vec1d(tv),
        random_tensor({6}, r2, 0.2, 5.0),
        random_tensor({6, 3}, r2, 0.1, 0.9),
    };
    Tensor<double> proj = random_tensor({3}, rng, -1.0, 1.0);
    auto rep = finite_difference_check(
        inputs, [&](Tape<double>& tape, const std::vector<Id>& in) {
          auto rr = render_ray(tape, in[0], in[1], in[2], bg);
          return tape.sum(tape.mul(rr.color, tape.leaf(proj)));
        },
        1e-6);
    INFO("seed ", seed, " worst err ", rep.worst);
    CHECK(rep.ok);
  }
}

TEST_CASE("heuristic pdf") {
  SUBCASE("uniform weights give a uniform pdf") {
    Rng rng(1);
    auto t = stratified_sample(8, rng, false);
    auto pdf = heuristic_pdf(std::vector<double>(8, 0.5), t);
    for (double m : pdf.masses) CHECK(m == doctest::Approx(0.125).epsilon(1e-12));
    CHECK(pdf.edges.front() == 0.0);
    CHECK(pdf.edges.back() == 1.0);
  }
  SUBCASE("a single spike dominates") {
    SamplePositions t{{0.125, 0.375, 0.625, 0.875}};
    auto pdf = heuristic_pdf({0, 1, 0, 0}, t);
    CHECK(pdf.masses[1] >= 0.9999);
  }
  SUBCASE("hand-normalized two-bin case") {
    SamplePositions t{{0.25, 0.75}};
    auto pdf = heuristic_pdf({1, 3}, t);
    CHECK(pdf.edges == std::vector<double>({0.0, 0.5, 1.0}));
    CHECK(pdf.masses[0] == doctest::Approx((1.0 + 1e-5) / (4.0 + 2e-5)).epsilon(1e-12));
    CHECK(pdf.masses[1] == doctest::Approx((3.0 + 1e-5) / (4.0 + 2e-5)).epsilon(1e-12));
  }
  SUBCASE("all-zero weights degrade to near-uniform") {
    SamplePositions t{{0.25, 0.75}};
    auto pdf = heuristic_pdf({0, 0}, t);
    CHECK(pdf.masses[0] == doctest::Approx(0.5));
  }
  SUBCASE("negative weight rejected") {
    SamplePositions t{{0.25, 0.75}};
    CHECK_THROWS_AS(heuristic_pdf({-0.1, 1.0}, t), Error);
  }
}

TEST_CASE("inverse-CDF sampling") {
  SUBCASE("uniform pdf, deterministic -> bin centers") {
    PiecewisePdf pdf{{0.0, 0.5, 1.0}, {0.5, 0.5}};
    auto s = inverse_cdf_sample(pdf, 4, nullptr, true);
    for (int i = 0; i < 4; ++i) CHECK(s.t[i] == doctest::Approx((i + 0.5) / 4).epsilon(1e-15));
  }
  SUBCASE("support containment") {
    Rng rng(3);
    PiecewisePdf pdf{{0.0, 0.5, 0.6, 1.0}, {0.0, 1.0, 0.0}};
    auto s = inverse_cdf_sample(pdf, 64, &rng, false);
    for (double t : s.t) {
      CHECK(t >= 0.5);
      CHECK(t <= 0.6);
    }
  }
  SUBCASE("composition with uniform heuristic pdf reproduces stratification") {
    Rng rng(1);
    auto coarse = stratified_sample(8, rng, false);
    auto pdf = heuristic_pdf(std::vector<double>(8, 1.0), coarse);
    auto fine = inverse_cdf_sample(pdf, 8, nullptr, true);
    auto strat = stratified_sample(8, rng, false);
    for (int i = 0; i < 8; ++i) CHECK(fine.t[i] == doctest::Approx(strat.t[i]).epsilon(1e-12));
  }
  SUBCASE("empirical frequencies match the target pdf") {
    PiecewisePdf pdf{{0.0, 0.5, 1.0}, {0.25, 0.75}};
    for (bool stratified : {false, true}) {
      Rng rng(42);
      const int n = 100000;
      int in_first = 0;
      // draw in chunks so the stratified mode still randomizes within strata
      for (int k = 0; k < n / 100; ++k)
        for (double t : inverse_cdf_sample(pdf, 100, &rng, false, stratified).t)
          if (t < 0.5) ++in_first;
      double f = double(in_first) / n;
      INFO("stratified=", stratified, " f=", f);
      CHECK(std::abs(f - 0.25) < 0.01);
      // chi-square over the two bins
      double e0 = 0.25 * n, e1 = 0.75 * n;
      double chi2 = (in_first - e0) * (in_first - e0) / e0 +
                    (n - in_first - e1) * (n - in_first - e1) / e1;
      CHECK(chi2 < chi2_quantile(0.99, 1));
    }
  }
  SUBCASE("unnormalized pdf rejected") {
    PiecewisePdf pdf{{0.0, 1.0}, {0.9}};
    CHECK_THROWS_AS(inverse_cdf_sample(pdf, 4, nullptr, true), Error);
  }
}

TEST_CASE("merge_and_sort") {
  SamplePositions a{{0.2, 0.8}};
  SamplePositions b{{0.5}};
  auto m = merge_and_sort(a, b);
  CHECK(m.t.t == std::vector<double>({0.2, 0.5, 0.8}));
  CHECK(m.source_index == std::vector<int>({0, 2, 1}));

  SamplePositions c{{0.5}};
  auto dup = merge_and_sort(c, c);
  CHECK(dup.t.t == std::vector<double>({0.5, 0.5}));

  Rng rng(8);
  std::vector<double> xs(64), ys(128);
  for (double& v : xs) v = rng.uniform();
  for (double& v : ys) v = rng.uniform();
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  auto big = merge_and_sort(SamplePositions{xs}, SamplePositions{ys});
  std::vector<double> ref = xs;
  ref.insert(ref.end(), ys.begin(), ys.end());
  std::sort(ref.begin(), ref.end());
  CHECK(big.t.t == ref);
  // index map points back at the right source values
  for (size_t k = 0; k < big.t.t.size(); ++k) {
    int i = big.source_index[k];
    double src = i < 64 ? xs[i] : ys[i - 64];
    CHECK(big.t.t[k] == src);
  }
}
