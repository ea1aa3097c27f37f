#include "textsr/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace textsr {

namespace {

void check_t(const NoiseSchedule& s, int t) {
  if (t < 1 || t > s.T) throw std::out_of_range("schedule: t=" + std::to_string(t) +
                                                " outside 1.." + std::to_string(s.T));
}

double cosine_alpha_bar(double u, double s, double power) {
  const double pi = 3.14159265358979323846;
  double x = (std::pow(u, power) + s) / (1.0 + s) * pi / 2.0;
  double c = std::cos(x);
  return c * c;
}

}  // namespace

double NoiseSchedule::alpha(int t) const {
  check_t(*this, t);
  return alphas[t - 1];
}

double NoiseSchedule::alpha_bar(int t) const {
  check_t(*this, t);
  return alpha_bars[t - 1];
}

double NoiseSchedule::alpha_bar_prev(int t) const {
  check_t(*this, t);
  return t == 1 ? 1.0 : alpha_bars[t - 2];
}

double NoiseSchedule::sigma(int t) const {
  check_t(*this, t);
  return sigmas[t - 1];
}

NoiseSchedule make_schedule(Branch branch, int T, const ScheduleParams& params) {
  if (T < 1) throw std::invalid_argument("make_schedule: T must be >= 1");

  std::vector<double> betas(T);
  if (params.kind == ScheduleKind::Linear) {
    if (!(params.beta_min > 0.0) || !(params.beta_max < 1.0) ||
        params.beta_min > params.beta_max)
      throw std::invalid_argument("make_schedule: linear bounds must satisfy 0 < min <= max < 1");
    for (int t = 1; t <= T; ++t) {
      double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / (T - 1);
      betas[t - 1] = params.beta_min + (params.beta_max - params.beta_min) * frac;
    }
  } else {
    if (!(params.cosine_s > 0.0) || !(params.cosine_power > 0.0))
      throw std::invalid_argument("make_schedule: cosine_s and cosine_power must be positive");
    double f0 = cosine_alpha_bar(0.0, params.cosine_s, params.cosine_power);
    double prev = 1.0;
    for (int t = 1; t <= T; ++t) {
      double ab = cosine_alpha_bar(static_cast<double>(t) / T, params.cosine_s,
                                   params.cosine_power) / f0;
      double beta = 1.0 - ab / prev;
      betas[t - 1] = std::min(std::max(beta, 1e-8), 0.999);
      prev = prev * (1.0 - betas[t - 1]);
    }
  }

  NoiseSchedule s;
  s.branch = branch;
  s.T = T;
  s.alphas.resize(T);
  s.alpha_bars.resize(T);
  double bar = 1.0;
  for (int t = 1; t <= T; ++t) {
    double beta = betas[t - 1];
    if (!(beta > 0.0) || !(beta < 1.0))
      throw std::invalid_argument("make_schedule: beta_t outside (0,1) at t=" + std::to_string(t));
    s.alphas[t - 1] = 1.0 - beta;
    bar *= s.alphas[t - 1];
    s.alpha_bars[t - 1] = bar;
  }
  s.sigmas.resize(T);
  for (int t = 1; t <= T; ++t) s.sigmas[t - 1] = sigma_at(s, t, params.sigma_mode);
  return s;
}

double sigma_at(const NoiseSchedule& schedule, int t, SigmaMode mode) {
  check_t(schedule, t);
  switch (mode) {
    case SigmaMode::Zero:
      return 0.0;
    case SigmaMode::Beta:
      return std::sqrt(1.0 - schedule.alphas[t - 1]);
    case SigmaMode::BetaTilde: {
      double ab_prev = schedule.alpha_bar_prev(t);
      double ab = schedule.alpha_bars[t - 1];
      return std::sqrt((1.0 - ab_prev) / (1.0 - ab) * (1.0 - schedule.alphas[t - 1]));
    }
  }
  throw std::invalid_argument("sigma_at: bad mode");
}

ScheduleParams linear_params_scaled(int T) {
  if (T < 1) throw std::invalid_argument("linear_params_scaled: T must be >= 1");
  double scale = 1000.0 / T;
  ScheduleParams p;
  p.kind = ScheduleKind::Linear;
  // Clamped so very short schedules stay valid; the terminal invariant is
  // claimed for the default step counts, where the clamp is inactive.
  p.beta_min = std::min(scale * 1e-4, 0.05);
  p.beta_max = std::min(scale * 0.02, 0.8);
  return p;
}

SigmaMode sigma_mode_from_string(const std::string& s) {
  if (s == "beta") return SigmaMode::Beta;
  if (s == "beta_tilde") return SigmaMode::BetaTilde;
  if (s == "zero") return SigmaMode::Zero;
  throw std::invalid_argument("unknown sigma mode: " + s);
}

ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "linear") return ScheduleKind::Linear;
  if (s == "cosine") return ScheduleKind::Cosine;
  throw std::invalid_argument("unknown schedule kind: " + s);
}

}  // namespace textsr
