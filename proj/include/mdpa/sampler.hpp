#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "mdpa/control.hpp"
#include "mdpa/core.hpp"
#include "mdpa/diffusion.hpp"
#include "mdpa/optimizer.hpp"
#include "mdpa/scenario.hpp"
#include "mdpa/score_oracle.hpp"
#include "mdpa/stitching.hpp"

namespace mdpa {

enum class Method { Mdpa, Linear, Sigmoid, Sine };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::Mdpa: return "mdpa";
    case Method::Linear: return "linear";
    case Method::Sigmoid: return "sigmoid";
    case Method::Sine: return "sine";
  }
  return "?";
}

inline Method parse_method(const std::string& name) {
  if (name == "mdpa") return Method::Mdpa;
  if (name == "linear") return Method::Linear;
  if (name == "sigmoid") return Method::Sigmoid;
  if (name == "sine") return Method::Sine;
  throw Error(ErrorKind::InvalidConfig, "unknown method '" + name + "' (expected mdpa, linear, sigmoid or sine)");
}

inline HeuristicKind heuristic_of(Method m) {
  switch (m) {
    case Method::Linear: return HeuristicKind::Linear;
    case Method::Sigmoid: return HeuristicKind::Sigmoid;
    case Method::Sine: return HeuristicKind::Sine;
    case Method::Mdpa: break;
  }
  throw Error(ErrorKind::InvalidConfig, "mdpa has no heuristic schedule");
}

struct RunResult {
  Method method = Method::Mdpa;
  SegmentSet final_segments;             // hard-stitched x0, before root alignment
  Sequence long_sequence;                // cross-faded assembly of the root-aligned segments
  std::vector<std::vector<double>> omega_grid;  // N x K
  std::vector<EnergyBreakdown> energy_trace;    // N entries
  std::vector<int> timesteps;                   // t_n for each recorded step
  std::uint64_t seed = 0;
  std::string fingerprint;
  double wall_time_seconds = 0.0;
  std::vector<std::string> diagnostics;
};

/// Initial noise for segment k; depends only on (seed, k).
inline Sequence initial_noise(std::uint64_t seed, std::size_t segment, std::size_t frames, std::size_t channels) {
  return gaussian_sequence(frames, channels, derive_seed(seed, streams::kInitialNoise, segment));
}

/// Segmented DDIM sampler over a fixed scenario. Holds only immutable,
/// precomputed tables; `run` is a pure function of (method, seed).
class LongRangeSampler {
 public:
  explicit LongRangeSampler(Scenario scenario)
      : scenario_(std::move(scenario)),
        schedule_(build_cosine_schedule(scenario_.schedule.total_steps)),
        plan_(select_ddim_timesteps(schedule_, scenario_.schedule.ddim_steps)),
        model_(make_condition_model(scenario_.model_spec())),
        fingerprint_(scenario_fingerprint(scenario_)) {
    scenario_.validate();
    scenario_.control.root_channel = scenario_.layout.root_channel;
  }

  const Scenario& scenario() const noexcept { return scenario_; }
  const NoiseSchedule& schedule() const noexcept { return schedule_; }
  const TimestepPlan& plan() const noexcept { return plan_; }
  const ConditionModel& model() const noexcept { return model_; }
  const std::string& fingerprint() const noexcept { return fingerprint_; }

  RunResult run(Method method, std::uint64_t seed) const {
    const auto started = std::chrono::steady_clock::now();
    const SegmentLayout& layout = scenario_.layout;
    const std::size_t k_count = layout.segments;

    RunResult result;
    result.method = method;
    result.seed = seed;
    result.fingerprint = fingerprint_;

    SegmentSet x;
    x.reserve(k_count);
    for (std::size_t k = 0; k < k_count; ++k) x.push_back(initial_noise(seed, k, layout.frames, layout.channels));

    std::vector<double> fixed_omega;
    if (method != Method::Mdpa) {
      fixed_omega = heuristic_omega(heuristic_of(method), k_count, scenario_.control.sigmoid_sharpness);
    }
    std::vector<double> carried_latent(k_count - 2, 0.0);
    Diagnostics diag;

    for (std::size_t n = 0; n + 1 < plan_.steps.size(); ++n) {
      const int t = plan_.steps[n];
      const int t_next = plan_.steps[n + 1];

      std::vector<SegmentPredictions> preds;
      preds.reserve(k_count);
      for (std::size_t k = 0; k < k_count; ++k) {
        try {
          preds.push_back({predict_x0(model_, x[k], t, ConditionId::Source, schedule_),
                           predict_x0(model_, x[k], t, ConditionId::Target, schedule_),
                           predict_x0(model_, x[k], t, ConditionId::Null, schedule_)});
        } catch (const Error& e) {
          throw Error(e.kind(), "step " + std::to_string(n) + ", segment " + std::to_string(k) + ": " + e.what());
        }
      }

      std::vector<double> omega;
      EnergyBreakdown energy;
      if (method == Method::Mdpa) {
        const auto* warm = scenario_.optimizer.warm_start ? &carried_latent : nullptr;
        MixingSchedule mixing =
            optimize_mixing(preds, x, t, scenario_.optimizer, scenario_.control, schedule_, warm);
        omega = mixing.omega;
        energy = mixing.trace[mixing.best_iteration].energy;
        carried_latent = mixing.latent;
      } else {
        omega = fixed_omega;
        energy = control_energy(x, preds, omega, t, scenario_.control, schedule_, &diag);
      }

      SegmentSet next;
      next.reserve(k_count);
      for (std::size_t k = 0; k < k_count; ++k) {
        const Sequence mixed = mix_predictions(preds[k].source, preds[k].target, omega[k]);
        Sequence stepped = ddim_step(x[k], mixed, t, t_next, schedule_);
        if (!all_finite(stepped)) {
          throw Error(ErrorKind::Numeric,
                      "step " + std::to_string(n) + ", segment " + std::to_string(k) + ": non-finite DDIM update");
        }
        next.push_back(std::move(stepped));
      }
      x = hard_stitch_project(std::move(next));

      result.omega_grid.push_back(std::move(omega));
      result.energy_trace.push_back(std::move(energy));
      result.timesteps.push_back(t);
    }

    result.final_segments = x;
    result.long_sequence = assemble_crossfade(align_root(std::move(x), layout.root_channel));
    result.diagnostics = std::move(diag.notes);
    result.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
  }

  /// Evaluation clips from consecutive runs (seeds derived from `seed`),
  /// each long sequence sliced with stride S/2, truncated to `count`.
  std::vector<Sequence> generate_clips(Method method, std::size_t count, std::uint64_t seed) const {
    std::vector<Sequence> clips;
    const std::size_t frames = scenario_.layout.frames;
    for (std::uint64_t r = 0; clips.size() < count; ++r) {
      const RunResult run_result = run(method, derive_seed(seed, streams::kRunSeeds, r));
      for (auto& clip : slice_windows(run_result.long_sequence, frames, frames / 2)) {
        if (clips.size() == count) break;
        clips.push_back(std::move(clip));
      }
    }
    return clips;
  }

  /// Class-balanced ground truth: floor(n/2) clips from c0, the rest from c1.
  std::vector<Sequence> ground_truth_clips(std::size_t count, std::uint64_t seed) const {
    const std::size_t n_source = count / 2;
    std::vector<Sequence> clips;
    if (n_source > 0) clips = sample_clips(model_, ConditionId::Source, n_source, derive_seed(seed, streams::kGroundTruth, 0));
    if (count > n_source) {
      auto rest = sample_clips(model_, ConditionId::Target, count - n_source, derive_seed(seed, streams::kGroundTruth, 1));
      for (auto& c : rest) clips.push_back(std::move(c));
    }
    return clips;
  }

 private:
  Scenario scenario_;
  NoiseSchedule schedule_;
  TimestepPlan plan_;
  ConditionModel model_;
  std::string fingerprint_;
};

/// Long-range sampling with per-step mixing optimization.
inline RunResult mdpa_sample(const Scenario& scenario, std::uint64_t seed) {
  return LongRangeSampler(scenario).run(Method::Mdpa, seed);
}

/// Same loop with a fixed heuristic schedule instead of optimization.
inline RunResult baseline_sample(const Scenario& scenario, HeuristicKind kind, std::uint64_t seed) {
  Method m = Method::Linear;
  if (kind == HeuristicKind::Sigmoid) m = Method::Sigmoid;
  if (kind == HeuristicKind::Sine) m = Method::Sine;
  return LongRangeSampler(scenario).run(m, seed);
}

}  // namespace mdpa
