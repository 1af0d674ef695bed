#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mdpa/control.hpp"
#include "mdpa/diffusion.hpp"
#include "mdpa/evaluation.hpp"
#include "mdpa/optimizer.hpp"
#include "mdpa/score_oracle.hpp"
#include "mdpa/stitching.hpp"

namespace mdpa {

struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double tolerance = 0.0;
};

struct CheckOptions {
  std::uint64_t seed = 20240601;
  // Replaces lambda_weight inside the KL check. Left empty outside fault-injection runs.
  std::function<double(int, const NoiseSchedule&)> lambda_override;
};

/// A control-energy instance: predictions, current states and a timestep.
struct EnergyInstance {
  std::vector<SegmentPredictions> preds;
  SegmentSet x_t;
  int t = 0;
};

/// Predictions of the toy mixture model at noised ground-truth-like states.
inline EnergyInstance model_instance(const ConditionModel& model, const NoiseSchedule& schedule, std::size_t segments,
                                     int t, std::uint64_t seed) {
  EnergyInstance inst;
  inst.t = t;
  for (std::size_t k = 0; k < segments; ++k) {
    const ConditionId cond = k * 2 < segments ? ConditionId::Source : ConditionId::Target;
    const Sequence x0 = sample_clips(model, cond, 1, derive_seed(seed, streams::kClipSampling, k)).front();
    const Sequence noise = gaussian_sequence(model.frames(), model.channels(), derive_seed(seed, streams::kInitialNoise, k));
    Sequence x = forward_diffuse(x0, t, noise, schedule);
    inst.preds.push_back({predict_x0(model, x, t, ConditionId::Source, schedule),
                          predict_x0(model, x, t, ConditionId::Target, schedule),
                          predict_x0(model, x, t, ConditionId::Null, schedule)});
    inst.x_t.push_back(std::move(x));
  }
  return inst;
}

/// Synthetic instance whose unconditional prediction sits near the mixing
/// line at a random interior weight, so the transient optimum is interior.
inline EnergyInstance interior_instance(std::size_t segments, std::size_t frames, std::size_t channels, int t,
                                        std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  std::uniform_real_distribution<double> weight(0.25, 0.75);
  EnergyInstance inst;
  inst.t = t;
  for (std::size_t k = 0; k < segments; ++k) {
    const std::uint64_t s = derive_seed(seed, streams::kClipSampling, k);
    Sequence source = gaussian_sequence(frames, channels, derive_seed(s, 1));
    Sequence target = gaussian_sequence(frames, channels, derive_seed(s, 2));
    const double rho = weight(engine);
    Sequence uncond = axpby(1.0 - rho, source, rho, target);
    uncond = axpby(1.0, uncond, 0.05, gaussian_sequence(frames, channels, derive_seed(s, 3)));
    inst.x_t.push_back(gaussian_sequence(frames, channels, derive_seed(s, 4)));
    inst.preds.push_back({std::move(source), std::move(target), std::move(uncond)});
  }
  return inst;
}

inline double latent_energy(const EnergyInstance& inst, std::span<const double> latent, const ControlConfig& control,
                            const NoiseSchedule& schedule) {
  return control_energy(inst.x_t, inst.preds, omega_from_latent(latent), inst.t, control, schedule).total;
}

/// max over instances of ||g - g_fd|| / max(||g||, ||g_fd||), central differences with step h.
inline double gradient_fd_error(const EnergyInstance& inst, std::span<const double> latent, const ControlConfig& control,
                                const NoiseSchedule& schedule, double h = 1e-5) {
  const auto g = energy_gradient(latent, inst.preds, inst.x_t, inst.t, control, schedule);
  std::vector<double> z(latent.begin(), latent.end());
  double diff = 0.0;
  double norm_g = 0.0;
  double norm_fd = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double keep = z[i];
    z[i] = keep + h;
    const double up = latent_energy(inst, z, control, schedule);
    z[i] = keep - h;
    const double down = latent_energy(inst, z, control, schedule);
    z[i] = keep;
    const double fd = (up - down) / (2.0 * h);
    diff += (g[i] - fd) * (g[i] - fd);
    norm_g += g[i] * g[i];
    norm_fd += fd * fd;
  }
  const double scale = std::sqrt(std::max(norm_g, norm_fd));
  return scale == 0.0 ? std::sqrt(diff) : std::sqrt(diff) / scale;
}

namespace detail {

inline CheckResult verdict(std::string name, double measured, double tolerance) {
  return {std::move(name), measured <= tolerance, measured, tolerance};
}

inline double relative(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

}  // namespace detail

/// The built-in property suite: every check reports its worst measured error.
inline std::vector<CheckResult> run_checks(const CheckOptions& options = {}) {
  std::vector<CheckResult> out;
  const NoiseSchedule schedule = build_cosine_schedule(1000);
  const std::uint64_t seed = options.seed;
  std::mt19937_64 engine(seed);
  std::uniform_int_distribution<int> any_t(1, schedule.total_steps);

  {
    double worst = 0.0;
    for (int t = 1; t <= schedule.total_steps; ++t) {
      double product = 1.0;
      for (int s = 1; s <= t; ++s) product *= 1.0 - schedule.beta[s];
      worst = std::max(worst, detail::relative(product, schedule.alpha_bar[t]));
    }
    out.push_back(detail::verdict("schedule_identity", worst, 1e-12));
  }

  {
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
      const int t = any_t(engine);
      const Sequence x = gaussian_sequence(8, 3, derive_seed(seed, 1, i));
      const Sequence eps = gaussian_sequence(8, 3, derive_seed(seed, 2, i));
      const Sequence x0 = tweedie_x0(x, eps, t, schedule);
      const Sequence back = eps_of_x0(x, x0, t, schedule);
      worst = std::max(worst, std::sqrt(squared_norm(axpby(1.0, back, -1.0, eps)) / squared_norm(eps)));
    }
    out.push_back(detail::verdict("tweedie_round_trip", worst, 1e-12));
  }

  {
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      const int t = 1 + i * (schedule.total_steps - 1) / 19;
      const double lambda = options.lambda_override ? options.lambda_override(t, schedule)
                                                    : lambda_weight(t, schedule, LambdaMode::Posterior);
      for (int j = 0; j < 20; ++j) {
        const std::uint64_t s = derive_seed(seed, 3, static_cast<std::uint64_t>(i * 20 + j));
        const Sequence x = gaussian_sequence(8, 3, derive_seed(s, 0));
        const Sequence a = gaussian_sequence(8, 3, derive_seed(s, 1));
        const Sequence b = gaussian_sequence(8, 3, derive_seed(s, 2));
        const double kl = reverse_kl_check(x, a, b, t, schedule);
        worst = std::max(worst, detail::relative(kl, lambda * squared_norm(axpby(1.0, a, -1.0, b))));
      }
    }
    out.push_back(detail::verdict("kl_proportionality", worst, 1e-10));
  }

  {
    const ConditionModel model = make_condition_model(default_model_spec(8, 3));
    ControlConfig control;
    double worst = 0.0;
    const std::size_t sizes[] = {3, 4, 6};
    const int times[] = {900, 500, 100};
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int i = 0; i < 30; ++i) {
      const auto inst = model_instance(model, schedule, sizes[i % 3], times[(i / 3) % 3], derive_seed(seed, 4, i));
      std::vector<double> z(inst.preds.size() - 2);
      for (double& v : z) v = normal(engine);
      worst = std::max(worst, gradient_fd_error(inst, z, control, schedule));
    }
    out.push_back(detail::verdict("gradient_vs_finite_differences", worst, 1e-5));
  }

  {
    ControlConfig control;
    OptimizerConfig opt;
    opt.inner_steps = 500;
    opt.learning_rate = 0.05;
    double worst = 0.0;
    int used = 0;
    for (std::uint64_t i = 0; used < 10 && i < 200; ++i) {
      const auto inst = interior_instance(4 + i % 2, 8, 3, 500, derive_seed(seed, 5, i));
      const auto oracle = closed_form_oracle(inst.preds, inst.x_t, inst.t, control, schedule);
      if (!oracle) continue;
      if (!std::all_of(oracle->begin() + 1, oracle->end() - 1, [](double w) { return w > 0.15 && w < 0.85; })) continue;
      const double best = control_energy(inst.x_t, inst.preds, *oracle, inst.t, control, schedule).total;
      const auto found = optimize_mixing(inst.preds, inst.x_t, inst.t, opt, control, schedule);
      worst = std::max(worst, detail::relative(found.trace[found.best_iteration].energy.total, best));
      ++used;
    }
    out.push_back(detail::verdict("optimizer_vs_closed_form", used == 10 ? worst : 1.0, 1e-6));
  }

  {
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
      SegmentSet segs;
      for (int k = 0; k < 4; ++k) segs.push_back(gaussian_sequence(8, 3, derive_seed(seed, 6, i * 4 + k)));
      const SegmentSet once = hard_stitch_project(segs);
      const SegmentSet twice = hard_stitch_project(once);
      if (once != twice || stitch_cost(once) != 0.0) worst = 1.0;
    }
    out.push_back(detail::verdict("stitch_projection_idempotent", worst, 0.0));
  }

  {
    // 1-D Gaussians: FD = (m1 - m2)^2 + (s1 - s2)^2.
    double worst = 0.0;
    std::uniform_real_distribution<double> u(0.1, 3.0);
    for (int i = 0; i < 20; ++i) {
      FeatureStats a{{u(engine)}, Matrix(1, u(engine)), 2};
      FeatureStats b{{u(engine)}, Matrix(1, u(engine)), 2};
      const double dm = a.mean[0] - b.mean[0];
      const double ds = std::sqrt(a.cov(0, 0)) - std::sqrt(b.cov(0, 0));
      worst = std::max(worst, std::abs(frechet_distance(a, b) - (dm * dm + ds * ds)));
    }
    out.push_back(detail::verdict("frechet_1d_closed_form", worst, 1e-10));
  }

  {
    double worst = 0.0;
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int i = 0; i < 10; ++i) {
      const std::size_t n = 6;
      Matrix g(n);
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) g(r, c) = normal(engine);
      }
      Matrix a(n);
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
          for (std::size_t k = 0; k < n; ++k) a(r, c) += g(r, k) * g(c, k);
        }
      }
      const Matrix root = psd_sqrt(a);
      worst = std::max(worst, (root * root - a).frobenius() / a.frobenius());
    }
    out.push_back(detail::verdict("matrix_sqrt_reconstruction", worst, 1e-8));
  }
  return out;
}

}  // namespace mdpa
