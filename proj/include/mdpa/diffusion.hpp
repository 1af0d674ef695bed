#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "mdpa/core.hpp"

namespace mdpa {

/// Forward-process tables. Index 0 of alpha_bar is the clean signal; beta and
/// posterior_var are indexed by t in [1, T] with slot 0 unused (kept at 0).
struct NoiseSchedule {
  int total_steps = 0;
  std::vector<double> alpha_bar;      // T + 1 entries
  std::vector<double> beta;           // T + 1 entries, beta[0] = 0
  std::vector<double> posterior_var;  // T + 1 entries, posterior_var[0] = 0

  double sqrt_alpha_bar(int t) const { return std::sqrt(alpha_bar[t]); }
  double sqrt_one_minus_alpha_bar(int t) const { return std::sqrt(1.0 - alpha_bar[t]); }
};

/// Strictly decreasing DDIM subsequence from T down to 0.
struct TimestepPlan {
  std::vector<int> steps;

  std::size_t denoising_steps() const { return steps.empty() ? 0 : steps.size() - 1; }
};

inline constexpr double kCosineOffset = 0.008;
inline constexpr double kMaxBeta = 0.999;
inline constexpr double kMinBeta = 1e-8;
inline constexpr double kAlphaBarFloor = 1e-5;

/// Unfloored cosine cumulative signal level f(t)/f(0).
inline double cosine_alpha_bar_raw(int t, int total_steps) {
  auto f = [total_steps](double step) {
    const double angle = ((step / total_steps + kCosineOffset) / (1.0 + kCosineOffset)) * std::numbers::pi / 2.0;
    const double c = std::cos(angle);
    return c * c;
  };
  return f(t) / f(0);
}

/// Cosine schedule. The raw curve reaches ~1e-33 at t = T, so the floor is
/// applied as alpha_floor + (1 - alpha_floor) * raw: this keeps alpha_bar[0]
/// at exactly 1, the sequence strictly decreasing, and alpha_bar[T] >= floor,
/// at the price of an absolute deviation of at most 1e-5 from the raw curve.
/// Betas come from consecutive ratios and alpha_bar is then rebuilt as their
/// running product so the ratio identity holds to rounding.
inline NoiseSchedule build_cosine_schedule(int total_steps) {
  if (total_steps < 2) {
    throw Error(ErrorKind::InvalidConfig, "cosine schedule needs T >= 2, got " + std::to_string(total_steps));
  }
  const auto n = static_cast<std::size_t>(total_steps);
  std::vector<double> target(n + 1);
  for (int t = 0; t <= total_steps; ++t) {
    target[t] = kAlphaBarFloor + (1.0 - kAlphaBarFloor) * cosine_alpha_bar_raw(t, total_steps);
  }
  target[0] = 1.0;

  NoiseSchedule schedule;
  schedule.total_steps = total_steps;
  schedule.alpha_bar.assign(n + 1, 1.0);
  schedule.beta.assign(n + 1, 0.0);
  schedule.posterior_var.assign(n + 1, 0.0);
  for (int t = 1; t <= total_steps; ++t) {
    const double beta = std::clamp(1.0 - target[t] / target[t - 1], kMinBeta, kMaxBeta);
    schedule.beta[t] = beta;
    schedule.alpha_bar[t] = schedule.alpha_bar[t - 1] * (1.0 - beta);
  }
  for (int t = 1; t <= total_steps; ++t) {
    schedule.posterior_var[t] =
        schedule.beta[t] * (1.0 - schedule.alpha_bar[t - 1]) / (1.0 - schedule.alpha_bar[t]);
  }
  return schedule;
}

/// Evenly spaced DDIM timesteps, steps[i] = round(T * (N - i) / N) with
/// halves rounded down. Because the stride T/N is at least 1 the rounded
/// values never collide.
inline TimestepPlan select_ddim_timesteps(const NoiseSchedule& schedule, int num_steps) {
  const int total = schedule.total_steps;
  if (num_steps < 1 || num_steps > total) {
    throw Error(ErrorKind::InvalidConfig,
                "DDIM step count must be in [1, " + std::to_string(total) + "], got " + std::to_string(num_steps));
  }
  TimestepPlan plan;
  plan.steps.reserve(static_cast<std::size_t>(num_steps) + 1);
  for (int i = 0; i <= num_steps; ++i) {
    const long long numerator = static_cast<long long>(total) * (num_steps - i);
    long long value = numerator / num_steps;
    const long long remainder = numerator % num_steps;
    if (2 * remainder > num_steps) ++value;
    plan.steps.push_back(static_cast<int>(value));
  }
  return plan;
}

inline void require_timestep(const NoiseSchedule& schedule, int t, const char* where) {
  if (t < 0 || t > schedule.total_steps) {
    throw Error(ErrorKind::Domain, std::string(where) + ": timestep " + std::to_string(t) + " outside [0, " +
                                       std::to_string(schedule.total_steps) + "]");
  }
}

inline Sequence forward_diffuse(const Sequence& x0, int t, const Sequence& noise, const NoiseSchedule& schedule) {
  require_timestep(schedule, t, "forward_diffuse");
  require_same_shape(x0, noise, "forward_diffuse");
  return axpby(schedule.sqrt_alpha_bar(t), x0, schedule.sqrt_one_minus_alpha_bar(t), noise);
}

/// Clean-signal estimate from a noise prediction. At t = 0 the state is
/// already clean and is returned as is.
inline Sequence tweedie_x0(const Sequence& x_t, const Sequence& eps, int t, const NoiseSchedule& schedule) {
  require_timestep(schedule, t, "tweedie_x0");
  require_same_shape(x_t, eps, "tweedie_x0");
  if (t == 0) return x_t;
  const double inv = 1.0 / schedule.sqrt_alpha_bar(t);
  return axpby(inv, x_t, -schedule.sqrt_one_minus_alpha_bar(t) * inv, eps);
}

/// Noise implied by a clean-signal estimate; inverse of tweedie_x0.
inline Sequence eps_of_x0(const Sequence& x_t, const Sequence& x0hat, int t, const NoiseSchedule& schedule) {
  require_timestep(schedule, t, "eps_of_x0");
  if (t == 0) throw Error(ErrorKind::DegenerateTimestep, "eps_of_x0 is undefined at t = 0");
  require_same_shape(x_t, x0hat, "eps_of_x0");
  const double inv = 1.0 / schedule.sqrt_one_minus_alpha_bar(t);
  return axpby(inv, x_t, -schedule.sqrt_alpha_bar(t) * inv, x0hat);
}

/// Deterministic (eta = 0) DDIM transition from t_n to t_next.
inline Sequence ddim_step(const Sequence& x_t, const Sequence& x0hat, int t_n, int t_next,
                          const NoiseSchedule& schedule) {
  require_timestep(schedule, t_n, "ddim_step");
  require_timestep(schedule, t_next, "ddim_step");
  if (t_next >= t_n) {
    throw Error(ErrorKind::Ordering,
                "ddim_step requires t_next < t_n, got " + std::to_string(t_next) + " >= " + std::to_string(t_n));
  }
  if (t_next == 0) return x0hat;
  const Sequence eps = eps_of_x0(x_t, x0hat, t_n, schedule);
  return axpby(schedule.sqrt_alpha_bar(t_next), x0hat, schedule.sqrt_one_minus_alpha_bar(t_next), eps);
}

}  // namespace mdpa
