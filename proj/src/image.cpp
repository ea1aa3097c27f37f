#include "textsr/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace textsr {

namespace {

void check_chw(const Tensor& img, const char* where) {
  if (img.rank() != 3)
    throw std::invalid_argument(std::string(where) + ": expected (C,H,W) tensor");
}

double cubic_weight(double x) {
  // Catmull-Rom kernel (a = -0.5).
  const double a = -0.5;
  x = std::abs(x);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

}  // namespace

ByteImage quantize_image(const Tensor& img) {
  check_chw(img, "quantize_image");
  ByteImage out;
  out.c = img.shape[0];
  out.h = img.shape[1];
  out.w = img.shape[2];
  out.bytes.resize(img.v.size());
  for (size_t i = 0; i < img.v.size(); ++i) {
    double q = std::floor(img.v[i] * 255.0 + 0.5);
    out.bytes[i] = static_cast<uint8_t>(std::min(255.0, std::max(0.0, q)));
  }
  return out;
}

Tensor dequantize_image(const ByteImage& img) {
  Tensor out({img.c, img.h, img.w});
  for (size_t i = 0; i < img.bytes.size(); ++i) out.v[i] = img.bytes[i] / 255.0;
  return out;
}

void write_ppm(const std::string& path, const ByteImage& img) {
  if (img.c != 3) throw std::invalid_argument("write_ppm: expected 3 channels");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_ppm: cannot open " + path);
  f << "P6\n" << img.w << " " << img.h << "\n255\n";
  // PPM is pixel-interleaved; memory layout is planar.
  std::vector<uint8_t> row(static_cast<size_t>(img.w) * 3);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < 3; ++ch) row[static_cast<size_t>(x) * 3 + ch] = img.at(ch, y, x);
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!f) throw std::runtime_error("write_ppm: write failed for " + path);
}

ByteImage read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_ppm: cannot open " + path);
  std::string magic;
  f >> magic;
  if (magic != "P6") throw std::runtime_error("read_ppm: not a P6 file: " + path);
  int w = 0, h = 0, maxval = 0;
  f >> w >> h >> maxval;
  if (w <= 0 || h <= 0 || maxval != 255)
    throw std::runtime_error("read_ppm: unsupported header in " + path);
  f.get();  // single whitespace after header
  ByteImage img;
  img.c = 3;
  img.h = h;
  img.w = w;
  img.bytes.resize(static_cast<size_t>(3) * h * w);
  std::vector<uint8_t> row(static_cast<size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    f.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    if (!f) throw std::runtime_error("read_ppm: truncated file " + path);
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < 3; ++ch) img.at(ch, y, x) = row[static_cast<size_t>(x) * 3 + ch];
  }
  return img;
}

void write_ppm(const std::string& path, const Tensor& img) {
  write_ppm(path, quantize_image(img));
}

Tensor clamp01(Tensor img) {
  for (double& x : img.v) x = std::min(1.0, std::max(0.0, x));
  return img;
}

Tensor area_downsample(const Tensor& img, int s) {
  check_chw(img, "area_downsample");
  if (s < 1 || img.shape[1] % s != 0 || img.shape[2] % s != 0)
    throw std::invalid_argument("area_downsample: dims not divisible by scale");
  int C = img.shape[0], H = img.shape[1] / s, W = img.shape[2] / s;
  Tensor out({C, H, W});
  double inv = 1.0 / (s * s);
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double acc = 0.0;
        for (int dy = 0; dy < s; ++dy)
          for (int dx = 0; dx < s; ++dx) acc += img.at(c, y * s + dy, x * s + dx);
        out.at(c, y, x) = acc * inv;
      }
  return out;
}

Tensor bicubic_resize(const Tensor& img, int out_h, int out_w) {
  check_chw(img, "bicubic_resize");
  int C = img.shape[0], H = img.shape[1], W = img.shape[2];
  Tensor out({C, out_h, out_w});
  double sy = static_cast<double>(H) / out_h;
  double sx = static_cast<double>(W) / out_w;
  for (int c = 0; c < C; ++c) {
    for (int oy = 0; oy < out_h; ++oy) {
      double fy = (oy + 0.5) * sy - 0.5;
      int y0 = static_cast<int>(std::floor(fy));
      double ty = fy - y0;
      double wy[4];
      for (int i = 0; i < 4; ++i) wy[i] = cubic_weight(ty - (i - 1));
      for (int ox = 0; ox < out_w; ++ox) {
        double fx = (ox + 0.5) * sx - 0.5;
        int x0 = static_cast<int>(std::floor(fx));
        double tx = fx - x0;
        double wx[4];
        for (int i = 0; i < 4; ++i) wx[i] = cubic_weight(tx - (i - 1));
        double acc = 0.0;
        for (int i = 0; i < 4; ++i) {
          int yy = std::min(H - 1, std::max(0, y0 + i - 1));
          double rowacc = 0.0;
          for (int j = 0; j < 4; ++j) {
            int xx = std::min(W - 1, std::max(0, x0 + j - 1));
            rowacc += wx[j] * img.at(c, yy, xx);
          }
          acc += wy[i] * rowacc;
        }
        out.at(c, oy, ox) = acc;
      }
    }
  }
  return out;
}

double mse(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse");
  double acc = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    double d = a.v[i] - b.v[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.v.size());
}

}  // namespace textsr
