#pragma once

#include "textsr/rng.hpp"
#include "textsr/tensor.hpp"

namespace textsr {

// Randomized degradation: a random subset of {blur, noise, contrast/brightness,
// occlusion} applied in a uniformly shuffled order, then an s-fold area
// downsample, then an optional second noise pass. Parameter ranges are
// desk-scale stand-ins, not calibrated against any external pipeline.
struct DegradeConfig {
  double blur_prob = 0.7;
  double blur_sigma_min = 0.2, blur_sigma_max = 2.0;
  double noise_prob = 0.7;
  double noise_sigma_min = 0.01, noise_sigma_max = 0.1;
  double contrast_prob = 0.5;
  double contrast_min = 0.6, contrast_max = 1.4;
  double brightness_min = -0.15, brightness_max = 0.15;
  double occlude_prob = 0.3;
  double occlude_max_area = 0.15;
  double second_noise_prob = 0.5;
  double second_noise_sigma_min = 0.01, second_noise_sigma_max = 0.05;
};

Tensor gaussian_blur(const Tensor& img, double sigma);

// Throws std::invalid_argument for scale outside {2, 4} or indivisible dims.
Tensor degrade(const Tensor& x_hr, int s, const DegradeConfig& cfg, Rng& rng);

}  // namespace textsr
