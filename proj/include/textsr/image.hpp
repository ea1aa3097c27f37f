#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "textsr/tensor.hpp"

namespace textsr {

// 8-bit interleaved-free RGB image as stored on disk (planar in memory).
struct ByteImage {
  int c = 0, h = 0, w = 0;
  std::vector<uint8_t> bytes;  // (c, h, w) row-major

  uint8_t at(int ch, int y, int x) const {
    return bytes[(static_cast<size_t>(ch) * h + y) * w + x];
  }
  uint8_t& at(int ch, int y, int x) {
    return bytes[(static_cast<size_t>(ch) * h + y) * w + x];
  }
};

// Quantize [0,1] floats to 8 bits with half-up rounding: round(v * 255).
ByteImage quantize_image(const Tensor& img);
// Dequantize: v = k / 255.
Tensor dequantize_image(const ByteImage& img);

// Binary PPM (P6, maxval 255).
void write_ppm(const std::string& path, const ByteImage& img);
ByteImage read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Tensor& img);

Tensor clamp01(Tensor img);

// Exact block-mean downsample by integer factor s.
Tensor area_downsample(const Tensor& img, int s);

// Separable Catmull-Rom bicubic resize with clamped borders.
Tensor bicubic_resize(const Tensor& img, int out_h, int out_w);

double mse(const Tensor& a, const Tensor& b);

}  // namespace textsr
