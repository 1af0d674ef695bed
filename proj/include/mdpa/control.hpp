#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mdpa/core.hpp"
#include "mdpa/diffusion.hpp"
#include "mdpa/stitching.hpp"

namespace mdpa {

enum class LambdaMode { Posterior, Unit };

enum class HeuristicKind { Linear, Sigmoid, Sine };

inline const char* to_string(LambdaMode mode) { return mode == LambdaMode::Posterior ? "posterior" : "unit"; }

inline const char* to_string(HeuristicKind kind) {
  switch (kind) {
    case HeuristicKind::Linear: return "linear";
    case HeuristicKind::Sigmoid: return "sigmoid";
    case HeuristicKind::Sine: return "sine";
  }
  return "?";
}

struct ControlConfig {
  double terminal_weight = 1.0;  // w_T
  LambdaMode lambda_mode = LambdaMode::Posterior;
  double sigmoid_sharpness = 10.0;
  std::size_t root_channel = 0;

  void validate() const {
    if (!(terminal_weight >= 0.0) || !std::isfinite(terminal_weight)) {
      throw Error(ErrorKind::InvalidConfig, "w_T must be finite and >= 0");
    }
    if (!(sigmoid_sharpness > 0.0) || !std::isfinite(sigmoid_sharpness)) {
      throw Error(ErrorKind::InvalidConfig, "sigmoid_sharpness must be finite and > 0");
    }
  }
};

struct EnergyBreakdown {
  double transient = 0.0;
  double terminal = 0.0;
  double total = 0.0;
  std::vector<double> per_segment_transient;
};

/// The three denoiser outputs a segment needs at one denoising step.
struct SegmentPredictions {
  Sequence source;  // x0hat under c0
  Sequence target;  // x0hat under c1
  Sequence uncond;  // x0hat under the null condition
};

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline Sequence mix_predictions(const Sequence& pred_source, const Sequence& pred_target, double omega) {
  if (!(omega >= 0.0 && omega <= 1.0)) {
    throw Error(ErrorKind::Domain, "mixing coefficient must lie in [0, 1], got " + std::to_string(omega));
  }
  require_same_shape(pred_source, pred_target, "mix_predictions");
  if (omega == 0.0) return pred_source;
  if (omega == 1.0) return pred_target;
  return axpby(1.0 - omega, pred_source, omega, pred_target);
}

/// sqrt(abar_t / (1 - abar_t)): the factor mapping an x0-space difference to
/// an eps-space one.
inline double eps_gain(int t, const NoiseSchedule& schedule) {
  return schedule.sqrt_alpha_bar(t) / schedule.sqrt_one_minus_alpha_bar(t);
}

/// eps(mixed) - eps(uncond), i.e. the control's deviation from the
/// unconditional trajectory.
inline Sequence guidance_delta(const Sequence& x_t, const Sequence& mixed_x0, const Sequence& uncond_x0, int t,
                               const NoiseSchedule& schedule) {
  require_timestep(schedule, t, "guidance_delta");
  if (t == 0) throw Error(ErrorKind::DegenerateTimestep, "guidance_delta is undefined at t = 0");
  require_same_shape(x_t, mixed_x0, "guidance_delta");
  require_same_shape(mixed_x0, uncond_x0, "guidance_delta");
  const double gain = eps_gain(t, schedule);
  return axpby(gain, uncond_x0, -gain, mixed_x0);
}

inline constexpr double kPosteriorVarFloor = 1e-12;

/// Weight turning ||delta eps||^2 into the KL between the controlled and
/// unconditional DDPM reverse transitions at step t.
inline double lambda_weight(int t, const NoiseSchedule& schedule, LambdaMode mode, Diagnostics* diag = nullptr) {
  require_timestep(schedule, t, "lambda_weight");
  if (t == 0) throw Error(ErrorKind::DegenerateTimestep, "lambda_weight needs t >= 1");
  if (mode == LambdaMode::Unit) return 1.0;
  const double beta = schedule.beta[t];
  double var = schedule.posterior_var[t];
  if (!(var > 0.0)) {
    note(diag, "lambda_weight: posterior variance is zero at t = " + std::to_string(t) + ", using floor");
    var = kPosteriorVarFloor;
  }
  return beta * beta / (2.0 * (1.0 - beta) * (1.0 - schedule.alpha_bar[t]) * var);
}

/// KL between two DDPM reverse Gaussians sharing posterior_var[t], with means
/// induced by two noise predictions. Used to validate lambda_weight.
inline double reverse_kl_check(const Sequence& x_t, const Sequence& eps_a, const Sequence& eps_b, int t,
                               const NoiseSchedule& schedule) {
  require_timestep(schedule, t, "reverse_kl_check");
  if (t == 0) throw Error(ErrorKind::DegenerateTimestep, "reverse_kl_check needs t >= 1");
  const double beta = schedule.beta[t];
  const double coef = beta / schedule.sqrt_one_minus_alpha_bar(t);
  const double scale = 1.0 / std::sqrt(1.0 - beta);
  const Sequence mean_a = axpby(scale, x_t, -scale * coef, eps_a);
  const Sequence mean_b = axpby(scale, x_t, -scale * coef, eps_b);
  double var = schedule.posterior_var[t];
  if (!(var > 0.0)) var = kPosteriorVarFloor;
  return squared_norm(axpby(1.0, mean_a, -1.0, mean_b)) / (2.0 * var);
}

/// Sum over adjacent pairs of the squared L2 gap between the second half of
/// segment k and the first half of segment k + 1.
inline double stitch_cost(const SegmentSet& segments, Diagnostics* diag = nullptr) {
  require_segments(segments, "stitch_cost");
  const std::size_t frames = segments.front().frames();
  require_even_frames(frames, "stitch_cost");
  if (segments.size() < 2) {
    note(diag, "stitch_cost: fewer than two segments, cost is 0");
    return 0.0;
  }
  const std::size_t half = frames / 2;
  const std::size_t channels = segments.front().channels();
  double cost = 0.0;
  for (std::size_t k = 0; k + 1 < segments.size(); ++k) {
    for (std::size_t j = 0; j < half; ++j) {
      for (std::size_t c = 0; c < channels; ++c) {
        const double d = segments[k + 1](j, c) - segments[k](half + j, c);
        cost += d * d;
      }
    }
  }
  return cost;
}

inline void require_pinned(std::span<const double> omega) {
  if (omega.size() < 2) throw Error(ErrorKind::Contract, "mixing schedule needs at least two segments");
  if (omega.front() != 0.0 || omega.back() != 1.0) {
    throw Error(ErrorKind::Contract, "mixing schedule must be pinned to 0 at the first and 1 at the last segment");
  }
}

inline void require_consistent(const SegmentSet& x_t, const std::vector<SegmentPredictions>& preds,
                               std::span<const double> omega, const char* where) {
  require_segments(x_t, where);
  if (preds.size() != x_t.size() || omega.size() != x_t.size()) {
    throw Error(ErrorKind::Dimension, std::string(where) + ": segment, prediction and omega counts differ");
  }
  for (const auto& p : preds) {
    require_same_shape(x_t.front(), p.source, where);
    require_same_shape(x_t.front(), p.target, where);
    require_same_shape(x_t.front(), p.uncond, where);
  }
}

inline SegmentSet mixed_segments(const std::vector<SegmentPredictions>& preds, std::span<const double> omega) {
  SegmentSet out;
  out.reserve(preds.size());
  for (std::size_t k = 0; k < preds.size(); ++k) out.push_back(mix_predictions(preds[k].source, preds[k].target, omega[k]));
  return out;
}

/// Per-step control energy: lambda_t * sum_k ||delta eps_k||^2 plus
/// w_T * stitch_cost of the root-aligned mixed clean estimates.
inline EnergyBreakdown control_energy(const SegmentSet& x_t, const std::vector<SegmentPredictions>& preds,
                                      std::span<const double> omega, int t, const ControlConfig& config,
                                      const NoiseSchedule& schedule, Diagnostics* diag = nullptr) {
  require_pinned(omega);
  require_consistent(x_t, preds, omega, "control_energy");
  const double lambda = lambda_weight(t, schedule, config.lambda_mode, diag);
  const SegmentSet mixed = mixed_segments(preds, omega);

  EnergyBreakdown out;
  out.per_segment_transient.reserve(preds.size());
  for (std::size_t k = 0; k < preds.size(); ++k) {
    const double e = lambda * squared_norm(guidance_delta(x_t[k], mixed[k], preds[k].uncond, t, schedule));
    out.per_segment_transient.push_back(e);
    out.transient += e;
  }
  if (config.terminal_weight > 0.0) {
    out.terminal = config.terminal_weight * stitch_cost(align_root(mixed, config.root_channel), diag);
  }
  out.total = out.transient + out.terminal;
  return out;
}

/// Fixed interpolation schedules over segment index, pinned to 0 and 1.
inline std::vector<double> heuristic_omega(HeuristicKind kind, std::size_t segments, double sharpness = 10.0) {
  if (segments < 2) throw Error(ErrorKind::InvalidConfig, "heuristic schedules need K >= 2");
  if (!(sharpness > 0.0)) throw Error(ErrorKind::InvalidConfig, "sigmoid sharpness must be > 0");
  const double last = static_cast<double>(segments - 1);
  std::vector<double> omega(segments);
  const double lo = sigmoid(-0.5 * sharpness);
  const double hi = sigmoid(0.5 * sharpness);
  for (std::size_t k = 0; k < segments; ++k) {
    const double u = static_cast<double>(k) / last;
    switch (kind) {
      case HeuristicKind::Linear: omega[k] = u; break;
      case HeuristicKind::Sigmoid: omega[k] = (sigmoid(sharpness * (u - 0.5)) - lo) / (hi - lo); break;
      case HeuristicKind::Sine: omega[k] = 0.5 * (1.0 - std::cos(std::numbers::pi * u)); break;
    }
  }
  omega.front() = 0.0;
  omega.back() = 1.0;
  return omega;
}

}  // namespace mdpa
