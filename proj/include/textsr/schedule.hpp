#pragma once

#include <string>
#include <vector>

namespace textsr {

enum class Branch { IDM, TDM };
enum class ScheduleKind { Linear, Cosine };
enum class SigmaMode { Beta, BetaTilde, Zero };

struct ScheduleParams {
  ScheduleKind kind = ScheduleKind::Linear;
  // Linear: beta_t interpolates [beta_min, beta_max] over t = 1..T.
  double beta_min = 1e-4;
  double beta_max = 0.02;
  // Cosine: alpha_bar(u) = cos^2((u^power + s)/(1 + s) * pi/2) / f(0).
  // power > 1 concentrates corruption near t = T.
  double cosine_s = 0.008;
  double cosine_power = 1.0;
  // Mode used to fill the sigmas table.
  SigmaMode sigma_mode = SigmaMode::BetaTilde;
};

// Per-branch noise schedule: retention factors alpha_t, their running
// products alpha_bar_t, and the reverse-step noise scale sigma_t.
// Immutable after construction; safe to share across threads.
struct NoiseSchedule {
  Branch branch = Branch::IDM;
  int T = 0;
  std::vector<double> alphas;      // alphas[t-1] = alpha_t
  std::vector<double> alpha_bars;  // alpha_bars[t-1] = prod_{s<=t} alpha_s
  std::vector<double> sigmas;      // sigma table for params.sigma_mode

  double alpha(int t) const;      // 1 <= t <= T
  double alpha_bar(int t) const;  // 1 <= t <= T
  double alpha_bar_prev(int t) const;  // alpha_bar_{t-1}, defined as 1 at t=1
  double sigma(int t) const;
};

// Builds a schedule; throws std::invalid_argument when T < 1 or the
// parameters produce beta_t outside (0,1).
NoiseSchedule make_schedule(Branch branch, int T, const ScheduleParams& params);

// sigma_t under the requested mode:
//   Beta      -> sqrt(1 - alpha_t)
//   BetaTilde -> sqrt((1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * (1 - alpha_t))
//   Zero      -> 0
// Throws std::out_of_range for t outside 1..T.
double sigma_at(const NoiseSchedule& schedule, int t, SigmaMode mode);

// Linear-beta bounds scaled so the terminal alpha_bar matches the
// reference [1e-4, 0.02] x 1000-step schedule at any step count.
ScheduleParams linear_params_scaled(int T);

SigmaMode sigma_mode_from_string(const std::string& s);
ScheduleKind schedule_kind_from_string(const std::string& s);

}  // namespace textsr
