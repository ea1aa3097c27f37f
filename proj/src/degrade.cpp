#include "textsr/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "textsr/image.hpp"

namespace textsr {

namespace {

enum Op { kBlur = 0, kNoise = 1, kContrast = 2, kOcclude = 3 };

void apply_noise(Tensor& img, double sigma, Rng& rng) {
  for (double& x : img.v) x = std::min(1.0, std::max(0.0, x + sigma * normal01(rng)));
}

}  // namespace

Tensor gaussian_blur(const Tensor& img, double sigma) {
  if (sigma <= 0.0) return img;
  int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& x : k) x /= sum;

  int C = img.shape[0], H = img.shape[1], W = img.shape[2];
  Tensor tmp({C, H, W}), out({C, H, W});
  // Horizontal pass with clamped borders.
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += k[i + radius] * img.at(c, y, std::min(W - 1, std::max(0, x + i)));
        tmp.at(c, y, x) = acc;
      }
  // Vertical pass.
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += k[i + radius] * tmp.at(c, std::min(H - 1, std::max(0, y + i)), x);
        out.at(c, y, x) = acc;
      }
  return out;
}

Tensor degrade(const Tensor& x_hr, int s, const DegradeConfig& cfg, Rng& rng) {
  if (s != 2 && s != 4) throw std::invalid_argument("degrade: scale must be 2 or 4");
  if (x_hr.rank() != 3 || x_hr.shape[1] % s != 0 || x_hr.shape[2] % s != 0)
    throw std::invalid_argument("degrade: HR dims not divisible by scale");

  // Select the enabled subset, then shuffle its order.
  std::vector<Op> ops;
  if (uniform01(rng) < cfg.blur_prob) ops.push_back(kBlur);
  if (uniform01(rng) < cfg.noise_prob) ops.push_back(kNoise);
  if (uniform01(rng) < cfg.contrast_prob) ops.push_back(kContrast);
  if (uniform01(rng) < cfg.occlude_prob) ops.push_back(kOcclude);
  for (int i = static_cast<int>(ops.size()) - 1; i > 0; --i)
    std::swap(ops[i], ops[uniform_int(rng, 0, i)]);

  Tensor img = x_hr;
  int H = img.shape[1], W = img.shape[2];
  for (Op op : ops) {
    switch (op) {
      case kBlur:
        img = gaussian_blur(img, uniform_range(rng, cfg.blur_sigma_min, cfg.blur_sigma_max));
        break;
      case kNoise:
        apply_noise(img, uniform_range(rng, cfg.noise_sigma_min, cfg.noise_sigma_max), rng);
        break;
      case kContrast: {
        double a = uniform_range(rng, cfg.contrast_min, cfg.contrast_max);
        double b = uniform_range(rng, cfg.brightness_min, cfg.brightness_max);
        for (double& x : img.v) x = std::min(1.0, std::max(0.0, a * (x - 0.5) + 0.5 + b));
        break;
      }
      case kOcclude: {
        // Rectangle covering at most occlude_max_area of the image.
        double area = uniform_range(rng, 0.01, cfg.occlude_max_area);
        double aspect = uniform_range(rng, 0.3, 3.0);
        int rh = std::max(1, std::min(H, static_cast<int>(std::round(std::sqrt(area * H * W / aspect)))));
        int rw = std::max(1, std::min(W, static_cast<int>(std::round(std::sqrt(area * H * W * aspect)))));
        rh = std::min(rh, H);
        rw = std::min(rw, W);
        while (rh * rw > cfg.occlude_max_area * H * W && (rh > 1 || rw > 1)) {
          if (rh >= rw) --rh; else --rw;
        }
        int y0 = uniform_int(rng, 0, H - rh);
        int x0 = uniform_int(rng, 0, W - rw);
        double col[3] = {uniform01(rng), uniform01(rng), uniform01(rng)};
        for (int c = 0; c < 3; ++c)
          for (int y = y0; y < y0 + rh; ++y)
            for (int x = x0; x < x0 + rw; ++x) img.at(c, y, x) = col[c];
        break;
      }
    }
  }

  img = area_downsample(img, s);
  if (uniform01(rng) < cfg.second_noise_prob)
    apply_noise(img, uniform_range(rng, cfg.second_noise_sigma_min, cfg.second_noise_sigma_max),
                rng);
  return img;
}

}  // namespace textsr
