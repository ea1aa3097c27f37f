#include <doctest.h>

#include <cmath>

#include "textsr/rng.hpp"
#include "textsr/schedule.hpp"

using namespace textsr;

namespace {

NoiseSchedule hand_schedule(std::vector<double> alphas) {
  NoiseSchedule s;
  s.T = static_cast<int>(alphas.size());
  s.alphas = std::move(alphas);
  double bar = 1.0;
  for (double a : s.alphas) {
    bar *= a;
    s.alpha_bars.push_back(bar);
  }
  for (int t = 1; t <= s.T; ++t) s.sigmas.push_back(sigma_at(s, t, SigmaMode::BetaTilde));
  return s;
}

ScheduleParams linear_const(double beta) {
  ScheduleParams p;
  p.kind = ScheduleKind::Linear;
  p.beta_min = beta;
  p.beta_max = beta;
  return p;
}

}  // namespace

TEST_SUITE("schedules") {

TEST_CASE("single step linear") {
  NoiseSchedule s = make_schedule(Branch::IDM, 1, linear_const(0.5));
  CHECK(s.alphas == std::vector<double>{0.5});
  CHECK(s.alpha_bars == std::vector<double>{0.5});
}

TEST_CASE("two equal steps multiply") {
  NoiseSchedule s = make_schedule(Branch::IDM, 2, linear_const(0.5));
  CHECK(s.alpha_bars[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(s.alpha_bars[1] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("reference 1000-step terminal value") {
  ScheduleParams p;
  p.beta_min = 1e-4;
  p.beta_max = 0.02;
  NoiseSchedule s = make_schedule(Branch::IDM, 1000, p);
  // Independent oracle: direct product of (1 - beta_t).
  double prod = 1.0;
  for (int t = 1; t <= 1000; ++t)
    prod *= 1.0 - (1e-4 + (0.02 - 1e-4) * (t - 1) / 999.0);
  CHECK(std::abs(s.alpha_bars.back() - prod) / prod < 1e-12);
  CHECK(s.alpha_bars.back() == doctest::Approx(4.0e-5).epsilon(0.02));
  CHECK(s.alpha_bars.back() < 1e-3);  // IDM terminal invariant
}

TEST_CASE("alpha_bars equal running products and decrease strictly") {
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    ScheduleParams p;
    if (rep % 2 == 0) {
      p.kind = ScheduleKind::Linear;
      p.beta_min = uniform_range(rng, 1e-4, 0.05);
      p.beta_max = p.beta_min + uniform_range(rng, 0.0, 0.4);
    } else {
      p.kind = ScheduleKind::Cosine;
      p.cosine_power = uniform_range(rng, 0.5, 4.0);
    }
    int T = uniform_int(rng, 1, 40);
    NoiseSchedule s = make_schedule(Branch::TDM, T, p);
    double prod = 1.0;
    for (int t = 1; t <= T; ++t) {
      prod *= s.alphas[t - 1];
      CHECK(std::abs(s.alpha_bars[t - 1] - prod) <= 1e-12 * prod);
      if (t > 1) CHECK(s.alpha_bars[t - 1] < s.alpha_bars[t - 2]);
    }
  }
}

TEST_CASE("default desk schedules satisfy terminal invariants") {
  NoiseSchedule idm = make_schedule(Branch::IDM, 100, linear_params_scaled(100));
  CHECK(idm.alpha_bars.back() < 1e-3);

  ScheduleParams tdm;
  tdm.kind = ScheduleKind::Cosine;
  tdm.cosine_power = 4.0;
  NoiseSchedule tds = make_schedule(Branch::TDM, 100, tdm);
  CHECK(tds.alpha_bars.back() < 1e-2);
  // Sharp cosine keeps the mid-trajectory nearly clean.
  CHECK(tds.alpha_bars[49] > 0.95);
}

TEST_CASE("sigma_at modes") {
  NoiseSchedule s = hand_schedule({0.9, 0.8, 0.9});
  CHECK(sigma_at(s, 1, SigmaMode::BetaTilde) == 0.0);  // alpha_bar_0 = 1
  CHECK(sigma_at(s, 2, SigmaMode::Zero) == 0.0);

  NoiseSchedule s2 = hand_schedule({0.75});
  CHECK(sigma_at(s2, 1, SigmaMode::Beta) == doctest::Approx(0.5).epsilon(1e-15));

  // alpha_t = 0.9, alpha_bar_{t-1} = 0.8, alpha_bar_t = 0.72.
  NoiseSchedule s3 = hand_schedule({0.8, 0.9});
  double expect = std::sqrt(0.2 / 0.28 * 0.1);
  CHECK(sigma_at(s3, 2, SigmaMode::BetaTilde) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(sigma_at(s3, 2, SigmaMode::BetaTilde) == doctest::Approx(0.2673).epsilon(1e-3));
}

TEST_CASE("beta_tilde never exceeds beta") {
  Rng rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    ScheduleParams p;
    p.beta_min = 1e-3;
    p.beta_max = uniform_range(rng, 0.05, 0.5);
    NoiseSchedule s = make_schedule(Branch::IDM, 30, p);
    for (int t = 1; t <= s.T; ++t)
      CHECK(sigma_at(s, t, SigmaMode::BetaTilde) <= sigma_at(s, t, SigmaMode::Beta) + 1e-15);
  }
}

TEST_CASE("construction is pure") {
  ScheduleParams p;
  p.kind = ScheduleKind::Cosine;
  p.cosine_power = 3.0;
  NoiseSchedule a = make_schedule(Branch::TDM, 64, p);
  NoiseSchedule b = make_schedule(Branch::TDM, 64, p);
  CHECK(a.alphas == b.alphas);
  CHECK(a.alpha_bars == b.alpha_bars);
  CHECK(a.sigmas == b.sigmas);
}

TEST_CASE("configuration and index errors") {
  CHECK_THROWS_AS(make_schedule(Branch::IDM, 0, ScheduleParams{}), std::invalid_argument);
  ScheduleParams bad;
  bad.beta_min = 0.0;
  CHECK_THROWS_AS(make_schedule(Branch::IDM, 4, bad), std::invalid_argument);
  bad.beta_min = 0.5;
  bad.beta_max = 1.0;
  CHECK_THROWS_AS(make_schedule(Branch::IDM, 4, bad), std::invalid_argument);

  NoiseSchedule s = make_schedule(Branch::IDM, 4, ScheduleParams{});
  CHECK_THROWS_AS(sigma_at(s, 0, SigmaMode::Beta), std::out_of_range);
  CHECK_THROWS_AS(sigma_at(s, 5, SigmaMode::Beta), std::out_of_range);
  CHECK_THROWS_AS(s.alpha(5), std::out_of_range);
}

}  // TEST_SUITE
