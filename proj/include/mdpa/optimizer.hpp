#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mdpa/control.hpp"
#include "mdpa/core.hpp"
#include "mdpa/diffusion.hpp"
#include "mdpa/stitching.hpp"

namespace mdpa {

struct OptimizerConfig {
  int inner_steps = 20;  // J
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool warm_start = false;  // carry z across denoising steps instead of resetting it

  void validate() const {
    if (inner_steps < 0) throw Error(ErrorKind::InvalidConfig, "J must be >= 0");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw Error(ErrorKind::InvalidConfig, "lr must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw Error(ErrorKind::InvalidConfig, "Adam betas must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) throw Error(ErrorKind::InvalidConfig, "Adam epsilon must be > 0");
  }
};

struct TraceEntry {
  std::vector<double> omega;
  EnergyBreakdown energy;
};

/// Segment mixing weights for one denoising step. omega is [0, sigmoid(z), 1].
struct MixingSchedule {
  std::size_t segments = 0;
  std::vector<double> latent;  // z, K - 2 entries
  std::vector<double> omega;   // K entries
  std::vector<TraceEntry> trace;
  std::size_t best_iteration = 0;
};

inline std::vector<double> omega_from_latent(std::span<const double> latent) {
  std::vector<double> omega;
  omega.reserve(latent.size() + 2);
  omega.push_back(0.0);
  for (double z : latent) omega.push_back(sigmoid(z));
  omega.push_back(1.0);
  return omega;
}

inline MixingSchedule init_mixing_latent(std::size_t segments) {
  if (segments < 2) throw Error(ErrorKind::InvalidConfig, "mixing schedule needs K >= 2");
  MixingSchedule out;
  out.segments = segments;
  out.latent.assign(segments - 2, 0.0);
  out.omega = omega_from_latent(out.latent);
  return out;
}

/// dC/d(omega_k) for every segment, by reverse-mode chain rule through the
/// mixing, the guidance delta, root alignment and the stitch cost.
inline std::vector<double> energy_gradient_omega(std::span<const double> omega, const std::vector<SegmentPredictions>& preds,
                                                 const SegmentSet& x_t, int t, const ControlConfig& config,
                                                 const NoiseSchedule& schedule) {
  require_consistent(x_t, preds, omega, "energy_gradient");
  const std::size_t k_count = preds.size();
  const double lambda = lambda_weight(t, schedule, config.lambda_mode);
  const double gain = eps_gain(t, schedule);
  const SegmentSet mixed = mixed_segments(preds, omega);

  std::vector<double> grad(k_count, 0.0);
  for (std::size_t k = 0; k < k_count; ++k) {
    const Sequence delta = guidance_delta(x_t[k], mixed[k], preds[k].uncond, t, schedule);
    const Sequence direction = axpby(1.0, preds[k].target, -1.0, preds[k].source);
    grad[k] = -2.0 * lambda * gain * dot(delta, direction);
  }

  if (config.terminal_weight > 0.0 && k_count >= 2) {
    const SegmentSet aligned = align_root(mixed, config.root_channel);
    const std::size_t frames = aligned.front().frames();
    const std::size_t channels = aligned.front().channels();
    const std::size_t half = frames / 2;
    SegmentSet adj(k_count, Sequence(frames, channels));
    for (std::size_t k = 0; k + 1 < k_count; ++k) {
      for (std::size_t j = 0; j < half; ++j) {
        for (std::size_t c = 0; c < channels; ++c) {
          const double d = aligned[k + 1](j, c) - aligned[k](half + j, c);
          adj[k + 1](j, c) += 2.0 * d;
          adj[k](half + j, c) -= 2.0 * d;
        }
      }
    }
    adj = align_root_adjoint(std::move(adj), config.root_channel);
    for (std::size_t k = 0; k < k_count; ++k) {
      const Sequence direction = axpby(1.0, preds[k].target, -1.0, preds[k].source);
      grad[k] += config.terminal_weight * dot(adj[k], direction);
    }
  }
  return grad;
}

/// Gradient of the control energy with respect to the interior latent z.
inline std::vector<double> energy_gradient(std::span<const double> latent, const std::vector<SegmentPredictions>& preds,
                                           const SegmentSet& x_t, int t, const ControlConfig& config,
                                           const NoiseSchedule& schedule) {
  if (latent.size() + 2 != preds.size()) {
    throw Error(ErrorKind::Dimension, "energy_gradient: latent must have K - 2 entries");
  }
  if (latent.empty()) return {};
  const auto omega = omega_from_latent(latent);
  const auto grad_omega = energy_gradient_omega(omega, preds, x_t, t, config, schedule);
  std::vector<double> grad(latent.size());
  for (std::size_t i = 0; i < latent.size(); ++i) {
    const double s = omega[i + 1];
    grad[i] = grad_omega[i + 1] * s * (1.0 - s);
    if (!std::isfinite(grad[i])) {
      throw Error(ErrorKind::Numeric, "energy_gradient: non-finite gradient at t = " + std::to_string(t) +
                                          ", segment " + std::to_string(i + 1));
    }
  }
  return grad;
}

struct AdamState {
  std::vector<double> params;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  int step = 0;

  static AdamState fresh(std::vector<double> params) {
    AdamState s;
    s.first_moment.assign(params.size(), 0.0);
    s.second_moment.assign(params.size(), 0.0);
    s.params = std::move(params);
    return s;
  }
};

/// One bias-corrected Adam step.
inline AdamState adam_update(AdamState state, std::span<const double> grad, const OptimizerConfig& config) {
  if (grad.size() != state.params.size()) throw Error(ErrorKind::Dimension, "adam_update: gradient size mismatch");
  ++state.step;
  const double correction1 = 1.0 - std::pow(config.beta1, state.step);
  const double correction2 = 1.0 - std::pow(config.beta2, state.step);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    state.first_moment[i] = config.beta1 * state.first_moment[i] + (1.0 - config.beta1) * grad[i];
    state.second_moment[i] = config.beta2 * state.second_moment[i] + (1.0 - config.beta2) * grad[i] * grad[i];
    const double m_hat = state.first_moment[i] / correction1;
    const double v_hat = state.second_moment[i] / correction2;
    state.params[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
  return state;
}

/// Runs J Adam steps on z and returns the lowest-energy iterate seen,
/// initialization included. `initial_latent` overrides the z = 0 start.
inline MixingSchedule optimize_mixing(const std::vector<SegmentPredictions>& preds, const SegmentSet& x_t, int t,
                                      const OptimizerConfig& opt, const ControlConfig& control,
                                      const NoiseSchedule& schedule,
                                      const std::vector<double>* initial_latent = nullptr) {
  opt.validate();
  MixingSchedule out = init_mixing_latent(preds.size());
  if (initial_latent != nullptr) {
    if (initial_latent->size() != out.latent.size()) {
      throw Error(ErrorKind::Dimension, "optimize_mixing: initial latent must have K - 2 entries");
    }
    out.latent = *initial_latent;
    out.omega = omega_from_latent(out.latent);
  }

  AdamState state = AdamState::fresh(out.latent);
  double best = 0.0;
  std::vector<double> best_latent;
  for (int j = 0; j <= opt.inner_steps; ++j) {
    auto omega = omega_from_latent(state.params);
    EnergyBreakdown energy = control_energy(x_t, preds, omega, t, control, schedule);
    if (!std::isfinite(energy.total)) {
      throw Error(ErrorKind::Numeric, "optimize_mixing: non-finite energy at t = " + std::to_string(t) +
                                          ", iteration " + std::to_string(j));
    }
    if (j == 0 || energy.total < best) {
      best = energy.total;
      best_latent = state.params;
      out.best_iteration = static_cast<std::size_t>(j);
    }
    out.trace.push_back({std::move(omega), std::move(energy)});
    if (j == opt.inner_steps || state.params.empty()) continue;
    const auto grad = energy_gradient(state.params, preds, x_t, t, control, schedule);
    state = adam_update(std::move(state), grad, opt);
  }
  out.latent = std::move(best_latent);
  out.omega = omega_from_latent(out.latent);
  return out;
}

namespace detail {

/// Solves A x = b in place by Gaussian elimination with partial pivoting.
/// Returns nullopt when a pivot vanishes relative to the matrix scale.
inline std::optional<std::vector<double>> solve_dense(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  double scale = 0.0;
  for (const auto& row : a) {
    for (double v : row) scale = std::max(scale, std::abs(v));
  }
  if (scale == 0.0) return std::nullopt;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    }
    if (std::abs(a[pivot][col]) <= 1e-13 * scale) return std::nullopt;
    std::swap(a[pivot], a[col]);
    std::swap(b[pivot], b[col]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double acc = b[i];
    for (std::size_t c = i + 1; c < n; ++c) acc -= a[i][c] * x[c];
    x[i] = acc / a[i][i];
  }
  return x;
}

}  // namespace detail

/// Unconstrained minimizer of the (quadratic in omega) control energy over the
/// interior segments, built from the explicit quadratic form. Returns the full
/// K-vector, or nullopt when the system is singular.
inline std::optional<std::vector<double>> closed_form_oracle(const std::vector<SegmentPredictions>& preds,
                                                             const SegmentSet& x_t, int t, const ControlConfig& control,
                                                             const NoiseSchedule& schedule) {
  const std::size_t k_count = preds.size();
  if (k_count < 3) throw Error(ErrorKind::InvalidConfig, "closed_form_oracle needs K >= 3");
  std::vector<double> pinned(k_count, 0.0);
  pinned.back() = 1.0;
  require_consistent(x_t, preds, pinned, "closed_form_oracle");

  const std::size_t frames = x_t.front().frames();
  const std::size_t channels = x_t.front().channels();
  const std::size_t half = frames / 2;
  const double lambda = lambda_weight(t, schedule, control.lambda_mode);
  const double gain = eps_gain(t, schedule);

  // C(omega) = 1/2 omega^T H omega + g^T omega + const.
  std::vector<std::vector<double>> hessian(k_count, std::vector<double>(k_count, 0.0));
  std::vector<double> linear(k_count, 0.0);

  std::vector<Sequence> directions;
  for (std::size_t k = 0; k < k_count; ++k) {
    const Sequence d = axpby(1.0, preds[k].target, -1.0, preds[k].source);
    const Sequence offset = axpby(1.0, preds[k].uncond, -1.0, preds[k].source);
    // delta eps_k = gain * (offset - omega_k d)
    const double w = lambda * gain * gain;
    hessian[k][k] += 2.0 * w * squared_norm(d);
    linear[k] += -2.0 * w * dot(offset, d);
    directions.push_back(d);
  }

  if (control.terminal_weight > 0.0) {
    // Overlap residuals are affine in omega: r(omega) = r0 + sum_k omega_k r_k.
    auto residual = [&](const SegmentSet& segs) {
      const SegmentSet aligned = align_root(segs, control.root_channel);
      std::vector<double> r;
      r.reserve((k_count - 1) * half * channels);
      for (std::size_t k = 0; k + 1 < k_count; ++k) {
        for (std::size_t j = 0; j < half; ++j) {
          for (std::size_t c = 0; c < channels; ++c) r.push_back(aligned[k + 1](j, c) - aligned[k](half + j, c));
        }
      }
      return r;
    };
    SegmentSet base;
    for (const auto& p : preds) base.push_back(p.source);
    const auto r0 = residual(base);
    std::vector<std::vector<double>> basis;
    for (std::size_t k = 0; k < k_count; ++k) {
      SegmentSet probe(k_count, Sequence(frames, channels));
      probe[k] = directions[k];
      basis.push_back(residual(probe));
    }
    const double w = control.terminal_weight;
    for (std::size_t i = 0; i < k_count; ++i) {
      for (std::size_t j = 0; j < k_count; ++j) {
        double acc = 0.0;
        for (std::size_t e = 0; e < r0.size(); ++e) acc += basis[i][e] * basis[j][e];
        hessian[i][j] += 2.0 * w * acc;
      }
      double acc = 0.0;
      for (std::size_t e = 0; e < r0.size(); ++e) acc += basis[i][e] * r0[e];
      linear[i] += 2.0 * w * acc;
    }
  }

  const std::size_t n = k_count - 2;
  std::vector<std::vector<double>> a(n, std::vector<double>(n));
  std::vector<double> b(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) a[i][j] = hessian[i + 1][j + 1];
    b[i] = -(linear[i + 1] + hessian[i + 1][k_count - 1]);
  }
  auto interior = detail::solve_dense(std::move(a), std::move(b));
  if (!interior) return std::nullopt;
  std::vector<double> omega(k_count, 0.0);
  omega.back() = 1.0;
  for (std::size_t i = 0; i < n; ++i) omega[i + 1] = (*interior)[i];
  return omega;
}

}  // namespace mdpa
