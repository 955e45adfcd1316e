#pragma once

#include "fineray/image.hpp"

namespace fineray {

/// PSNR on [0,1] images: -10 log10(MSE). Identical images report the capped
/// sentinel kPsnrCap instead of infinity.
inline constexpr double kPsnrCap = 99.0;
double psnr(const Image& a, const Image& b);

/// SSIM with the standard 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, computed per channel over the valid (unpadded) region and
/// averaged over channels.
double ssim(const Image& a, const Image& b);

}  // namespace fineray
