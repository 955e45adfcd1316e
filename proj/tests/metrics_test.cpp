#include <cmath>

#include "doctest.h"
#include "fineray/metrics.hpp"
#include "fineray/rng.hpp"
#include "test_helpers.hpp"

using namespace fineray;

namespace {

Image random_image(int h, int w, Rng& rng) {
  Image img;
  img.height = h;
  img.width = w;
  img.rgb.resize(static_cast<size_t>(h) * w * 3);
  for (double& v : img.rgb) v = rng.uniform();
  return img;
}

/// Naive dense sliding-window SSIM: 2-D Gaussian weights, one window at a
/// time. Deliberately structured nothing like the production separable code.
double ssim_reference(const Image& a, const Image& b) {
  const int win = 11;
  const double sigma = 1.5, c1 = 1e-4, c2 = 9e-4;
  double wsum = 0.0;
  double wgt[11][11];
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      double dy = i - 5.0, dx = j - 5.0;
      wgt[i][j] = std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
      wsum += wgt[i][j];
    }
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) wgt[i][j] /= wsum;

  double total = 0.0;
  int h = a.height, w = a.width;
  for (int ch = 0; ch < 3; ++ch) {
    double acc = 0.0;
    int count = 0;
    for (int y = 0; y + win <= h; ++y)
      for (int x = 0; x + win <= w; ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < win; ++i)
          for (int j = 0; j < win; ++j) {
            double va = a.rgb[(static_cast<size_t>(y + i) * w + x + j) * 3 + ch];
            double vb = b.rgb[(static_cast<size_t>(y + i) * w + x + j) * 3 + ch];
            ma += wgt[i][j] * va;
            mb += wgt[i][j] * vb;
            saa += wgt[i][j] * va * va;
            sbb += wgt[i][j] * vb * vb;
            sab += wgt[i][j] * va * vb;
          }
        double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
        acc += ((2 * ma * mb + c1) * (2 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
        ++count;
      }
    total += acc / count;
  }
  return total / 3.0;
}

}  // namespace

TEST_CASE("psnr") {
  Rng rng(1);
  Image a = random_image(8, 8, rng);
  CHECK(psnr(a, a) == kPsnrCap);

  // uniform error of 0.1 -> MSE 0.01 -> 20 dB
  Image b = a;
  for (size_t i = 0; i < b.rgb.size(); ++i) b.rgb[i] = a.rgb[i] * 0.0 + 0.1;
  Image zero = a;
  for (double& v : zero.rgb) v = 0.0;
  CHECK(psnr(b, zero) == doctest::Approx(20.0).epsilon(1e-12));

  // formula check on a random pair
  Image c = random_image(8, 8, rng);
  double mse = 0.0;
  for (size_t i = 0; i < a.rgb.size(); ++i) mse += (a.rgb[i] - c.rgb[i]) * (a.rgb[i] - c.rgb[i]);
  mse /= a.rgb.size();
  CHECK(psnr(a, c) == doctest::Approx(-10.0 * std::log10(mse)).epsilon(1e-12));

  Image small = random_image(4, 4, rng);
  CHECK_THROWS_AS(psnr(a, small), Error);
}

TEST_CASE("ssim matches a naive sliding-window reference") {
  Rng rng(7);
  SUBCASE("identical images score 1") {
    Image a = random_image(16, 16, rng);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("random pairs match the reference to 1e-6") {
    for (int trial = 0; trial < 4; ++trial) {
      Image a = random_image(16, 16, rng);
      Image b = random_image(16, 16, rng);
      double fast = ssim(a, b);
      double ref = ssim_reference(a, b);
      CHECK(fast == doctest::Approx(ref).epsilon(1e-9));
      CHECK(std::abs(fast - ref) < 1e-6);
    }
  }
  SUBCASE("correlated pairs score higher than independent ones") {
    Image a = random_image(20, 20, rng);
    Image noisy = a;
    Rng r2(9);
    for (double& v : noisy.rgb) v = std::clamp(v + 0.05 * r2.normal(), 0.0, 1.0);
    Image other = random_image(20, 20, rng);
    CHECK(ssim(a, noisy) > ssim(a, other));
  }
  SUBCASE("images below the window size are rejected") {
    Image a = random_image(10, 16, rng);
    Image b = random_image(10, 16, rng);
    CHECK_THROWS_WITH_AS(ssim(a, b), doctest::Contains("11x11"), Error);
  }
}
