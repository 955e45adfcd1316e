#include "fineray/metrics.hpp"

#include <cmath>

namespace fineray {

static void check_pair(const Image& a, const Image& b, const char* ctx) {
  if (a.height != b.height || a.width != b.width)
    throw Error(std::string(ctx) + ": image size mismatch");
  if (a.height < 1 || a.width < 1) throw Error(std::string(ctx) + ": empty image");
}

double psnr(const Image& a, const Image& b) {
  check_pair(a, b, "psnr");
  double mse = 0.0;
  for (size_t i = 0; i < a.rgb.size(); ++i) {
    double d = a.rgb[i] - b.rgb[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.rgb.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;

std::vector<double> gaussian_kernel() {
  std::vector<double> k(kWin);
  double sum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    double x = i - (kWin - 1) / 2.0;
    k[i] = std::exp(-x * x / (2.0 * kSigma * kSigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

/// Separable valid-region Gaussian filter of one channel plane.
std::vector<double> blur_valid(const std::vector<double>& plane, int h, int w,
                               const std::vector<double>& k, int* oh, int* ow) {
  int vh = h - kWin + 1, vw = w - kWin + 1;
  *oh = vh;
  *ow = vw;
  std::vector<double> tmp(static_cast<size_t>(h) * vw, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < vw; ++x) {
      double s = 0.0;
      for (int i = 0; i < kWin; ++i) s += k[i] * plane[static_cast<size_t>(y) * w + x + i];
      tmp[static_cast<size_t>(y) * vw + x] = s;
    }
  std::vector<double> out(static_cast<size_t>(vh) * vw, 0.0);
  for (int y = 0; y < vh; ++y)
    for (int x = 0; x < vw; ++x) {
      double s = 0.0;
      for (int i = 0; i < kWin; ++i) s += k[i] * tmp[static_cast<size_t>(y + i) * vw + x];
      out[static_cast<size_t>(y) * vw + x] = s;
    }
  return out;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  check_pair(a, b, "ssim");
  if (a.height < kWin || a.width < kWin)
    throw Error("ssim: image smaller than the 11x11 window");
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;  // L = 1
  std::vector<double> kern = gaussian_kernel();
  int h = a.height, w = a.width;

  double total = 0.0;
  for (int ch = 0; ch < 3; ++ch) {
    size_t n = static_cast<size_t>(h) * w;
    std::vector<double> pa(n), pb(n), paa(n), pbb(n), pab(n);
    for (size_t i = 0; i < n; ++i) {
      double va = a.rgb[i * 3 + ch], vb = b.rgb[i * 3 + ch];
      pa[i] = va;
      pb[i] = vb;
      paa[i] = va * va;
      pbb[i] = vb * vb;
      pab[i] = va * vb;
    }
    int oh = 0, ow = 0;
    std::vector<double> mu_a = blur_valid(pa, h, w, kern, &oh, &ow);
    std::vector<double> mu_b = blur_valid(pb, h, w, kern, &oh, &ow);
    std::vector<double> m_aa = blur_valid(paa, h, w, kern, &oh, &ow);
    std::vector<double> m_bb = blur_valid(pbb, h, w, kern, &oh, &ow);
    std::vector<double> m_ab = blur_valid(pab, h, w, kern, &oh, &ow);
    double acc = 0.0;
    for (size_t i = 0; i < mu_a.size(); ++i) {
      double ma = mu_a[i], mb = mu_b[i];
      double va = m_aa[i] - ma * ma;
      double vb = m_bb[i] - mb * mb;
      double cov = m_ab[i] - ma * mb;
      acc += ((2 * ma * mb + c1) * (2 * cov + c2)) /
             ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total += acc / static_cast<double>(mu_a.size());
  }
  return total / 3.0;
}

}  // namespace fineray
