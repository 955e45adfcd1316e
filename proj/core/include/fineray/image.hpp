#pragma once

#include <array>
#include <string>
#include <vector>

#include "fineray/tensor.hpp"

namespace fineray {

/// RGB image with values in [0,1], row-major.
struct Image {
  int height = 0, width = 0;
  std::vector<double> rgb;  // height*width*3

  Image() = default;
  Image(int h, int w) : height(h), width(w), rgb(static_cast<size_t>(h) * w * 3, 0.0) {}

  double* pixel(int y, int x) { return rgb.data() + (static_cast<size_t>(y) * width + x) * 3; }
  const double* pixel(int y, int x) const {
    return rgb.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
};

/// Binary PPM (P6, 8-bit); lossless for the quantized values and parseable
/// everywhere.
void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);

/// Quantization used when persisting; exposed so round-trip tests can bound
/// the error at exactly 1/255.
inline unsigned char quantize8(double v) {
  double c = v < 0 ? 0 : (v > 1 ? 1 : v);
  return static_cast<unsigned char>(c * 255.0 + 0.5);
}

}  // namespace fineray
