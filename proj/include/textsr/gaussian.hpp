#pragma once

#include "textsr/schedule.hpp"
#include "textsr/tensor.hpp"

namespace textsr {

// Forward noising: sqrt(alpha_bar_t) * z0 + sqrt(1 - alpha_bar_t) * eps.
Tensor q_sample(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& schedule);

// One reverse DDPM update:
//   (1/sqrt(alpha_t)) * (z_t - (1-alpha_t)/sqrt(1-alpha_bar_t) * eps_pred)
//   + sigma_t * noise
// Requires noise to be all-zero when t == 1.
Tensor ddpm_step(const Tensor& z_t, const Tensor& eps_pred, int t,
                 const NoiseSchedule& schedule, const Tensor& noise);

}  // namespace textsr
