#include "textsr/gaussian.hpp"

#include <cmath>
#include <stdexcept>

namespace textsr {

Tensor q_sample(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& schedule) {
  require_same_shape(z0, eps, "q_sample");
  double ab = schedule.alpha_bar(t);
  double a = std::sqrt(ab);
  double b = std::sqrt(1.0 - ab);
  Tensor out(z0.shape);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = a * z0.v[i] + b * eps.v[i];
  return out;
}

Tensor ddpm_step(const Tensor& z_t, const Tensor& eps_pred, int t,
                 const NoiseSchedule& schedule, const Tensor& noise) {
  require_same_shape(z_t, eps_pred, "ddpm_step");
  require_same_shape(z_t, noise, "ddpm_step");
  double alpha = schedule.alpha(t);
  double ab = schedule.alpha_bar(t);
  if (t == 1) {
    for (double x : noise.v)
      if (x != 0.0)
        throw std::invalid_argument("ddpm_step: noise must be all-zero at t=1");
  }
  double inv_sqrt_a = 1.0 / std::sqrt(alpha);
  double coef = (1.0 - alpha) / std::sqrt(1.0 - ab);
  double sigma = schedule.sigma(t);
  Tensor out(z_t.shape);
  for (size_t i = 0; i < out.v.size(); ++i)
    out.v[i] = inv_sqrt_a * (z_t.v[i] - coef * eps_pred.v[i]) + sigma * noise.v[i];
  return out;
}

}  // namespace textsr
