#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "mdpa/core.hpp"
#include "mdpa/diffusion.hpp"

namespace mdpa {

enum class ConditionId { Source, Target, Null };

inline const char* to_string(ConditionId id) {
  switch (id) {
    case ConditionId::Source: return "c0";
    case ConditionId::Target: return "c1";
    case ConditionId::Null: return "null";
  }
  return "?";
}

/// Diagonal Gaussian over a whole frames x channels clip.
struct GaussianComponent {
  double weight = 1.0;
  Sequence mean;
  Sequence variance;
};

/// Parameters of the built-in sinusoidal domain: every channel follows
/// amplitude * sin(2 pi cycles s / S + phase + channel offset), with one
/// mixture component per phase in `phases` (radians). The root channel also
/// carries a linear drift of `drift` per frame.
struct SinusoidDomain {
  double cycles = 1.0;
  double amplitude = 1.0;
  double variance = 0.05;
  double drift = 0.02;
  std::vector<double> phases = {0.0, std::numbers::pi};
};

struct DomainSpec {
  // Either explicit components, or (when empty) the sinusoid description.
  std::vector<GaussianComponent> components;
  SinusoidDomain sinusoid;
};

struct ModelSpec {
  std::size_t frames = 16;
  std::size_t channels = 4;
  std::size_t root_channel = 0;
  DomainSpec source;
  DomainSpec target;
  double prior_source = 0.5;
};

inline ModelSpec default_model_spec(std::size_t frames = 16, std::size_t channels = 4) {
  ModelSpec spec;
  spec.frames = frames;
  spec.channels = channels;
  spec.source.sinusoid.cycles = 1.0;
  spec.target.sinusoid.cycles = 3.0;
  return spec;
}

inline std::vector<GaussianComponent> sinusoid_components(const SinusoidDomain& domain, std::size_t frames,
                                                          std::size_t channels, std::size_t root_channel) {
  std::vector<GaussianComponent> out;
  const double n_phases = static_cast<double>(domain.phases.size());
  for (double phase : domain.phases) {
    GaussianComponent component{1.0 / n_phases, Sequence(frames, channels), Sequence(frames, channels, domain.variance)};
    for (std::size_t s = 0; s < frames; ++s) {
      for (std::size_t c = 0; c < channels; ++c) {
        const double arg = 2.0 * std::numbers::pi * domain.cycles * static_cast<double>(s) / static_cast<double>(frames) +
                           phase + std::numbers::pi * static_cast<double>(c) / (2.0 * static_cast<double>(channels));
        double value = domain.amplitude * std::sin(arg);
        if (c == root_channel) value = 0.5 * value + domain.drift * static_cast<double>(s);
        component.mean(s, c) = value;
      }
    }
    out.push_back(std::move(component));
  }
  return out;
}

/// Closed-form conditional denoiser: a diagonal Gaussian mixture per
/// condition, with the unconditional model being their prior-weighted union.
/// Immutable after construction.
class ConditionModel {
 public:
  ConditionModel(std::size_t frames, std::size_t channels, std::vector<GaussianComponent> source,
                 std::vector<GaussianComponent> target, double prior_source)
      : frames_(frames), channels_(channels), prior_source_(prior_source) {
    if (frames == 0 || channels == 0) throw Error(ErrorKind::InvalidConfig, "model needs S >= 1 and C >= 1");
    if (!(prior_source >= 0.0 && prior_source <= 1.0)) {
      throw Error(ErrorKind::InvalidConfig, "p0 must lie in [0, 1]");
    }
    source_ = validated(std::move(source), "c0");
    target_ = validated(std::move(target), "c1");
  }

  std::size_t frames() const noexcept { return frames_; }
  std::size_t channels() const noexcept { return channels_; }
  double prior_source() const noexcept { return prior_source_; }
  const std::vector<GaussianComponent>& source() const noexcept { return source_; }
  const std::vector<GaussianComponent>& target() const noexcept { return target_; }

  /// Components with effective weights for a condition. Null scales the two
  /// conditionals by p0 and 1 - p0; zero-weight entries are dropped.
  std::vector<GaussianComponent> components(ConditionId cond) const {
    switch (cond) {
      case ConditionId::Source: return source_;
      case ConditionId::Target: return target_;
      case ConditionId::Null: break;
    }
    std::vector<GaussianComponent> out;
    for (const auto& c : source_) {
      if (prior_source_ > 0.0) out.push_back({prior_source_ * c.weight, c.mean, c.variance});
    }
    for (const auto& c : target_) {
      if (prior_source_ < 1.0) out.push_back({(1.0 - prior_source_) * c.weight, c.mean, c.variance});
    }
    return out;
  }

 private:
  std::vector<GaussianComponent> validated(std::vector<GaussianComponent> comps, const char* name) const {
    if (comps.empty()) throw Error(ErrorKind::InvalidConfig, std::string(name) + ": empty mixture");
    double total = 0.0;
    for (auto& c : comps) {
      if (!(c.weight > 0.0) || !std::isfinite(c.weight)) {
        throw Error(ErrorKind::InvalidConfig, std::string(name) + ": mixture weights must be positive");
      }
      if (c.mean.frames() != frames_ || c.mean.channels() != channels_ || !c.variance.same_shape(c.mean)) {
        throw Error(ErrorKind::InvalidConfig, std::string(name) + ": component shape does not match S x C");
      }
      for (double& v : c.variance.values()) {
        if (!(v > 0.0) || !std::isfinite(v)) {
          throw Error(ErrorKind::InvalidConfig, std::string(name) + ": variances must be positive");
        }
        v = std::max(v, 1e-8);
      }
      if (!all_finite(c.mean)) throw Error(ErrorKind::InvalidConfig, std::string(name) + ": non-finite mean");
      total += c.weight;
    }
    for (auto& c : comps) c.weight /= total;
    return comps;
  }

  std::size_t frames_;
  std::size_t channels_;
  double prior_source_;
  std::vector<GaussianComponent> source_;
  std::vector<GaussianComponent> target_;
};

inline ConditionModel make_condition_model(const ModelSpec& spec) {
  if (spec.frames == 0 || spec.channels == 0) throw Error(ErrorKind::InvalidConfig, "S and C must be positive");
  auto build = [&](const DomainSpec& d) {
    if (!d.components.empty()) return d.components;
    if (d.sinusoid.phases.empty()) throw Error(ErrorKind::InvalidConfig, "sinusoid domain needs at least one phase");
    if (!(d.sinusoid.variance > 0.0)) throw Error(ErrorKind::InvalidConfig, "sinusoid variance must be positive");
    return sinusoid_components(d.sinusoid, spec.frames, spec.channels, spec.root_channel);
  };
  return ConditionModel(spec.frames, spec.channels, build(spec.source), build(spec.target), spec.prior_source);
}

namespace detail {

inline double log_sum_exp(std::span<const double> values) {
  double peak = -std::numeric_limits<double>::infinity();
  for (double v : values) peak = std::max(peak, v);
  if (!std::isfinite(peak)) return peak;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - peak);
  return peak + std::log(acc);
}

/// log N(x; sqrt(a) mu, a v + 1 - a) summed over all elements.
inline double component_log_density(const GaussianComponent& c, const Sequence& x, double alpha_bar) {
  constexpr double kLog2Pi = 1.8378770664093454835606594728112;
  const double root = std::sqrt(alpha_bar);
  auto mu = c.mean.values();
  auto var = c.variance.values();
  auto xs = x.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double s2 = alpha_bar * var[i] + (1.0 - alpha_bar);
    const double d = xs[i] - root * mu[i];
    acc += -0.5 * (kLog2Pi + std::log(s2) + d * d / s2);
  }
  return acc;
}

inline std::vector<double> log_joint(const std::vector<GaussianComponent>& comps, const Sequence& x, double alpha_bar) {
  std::vector<double> out;
  out.reserve(comps.size());
  for (const auto& c : comps) out.push_back(std::log(c.weight) + component_log_density(c, x, alpha_bar));
  return out;
}

inline void require_clip_shape(const ConditionModel& model, const Sequence& x, const char* where) {
  if (x.frames() != model.frames() || x.channels() != model.channels()) {
    throw Error(ErrorKind::Dimension, std::string(where) + ": expected " + std::to_string(model.frames()) + "x" +
                                          std::to_string(model.channels()) + " clip");
  }
}

}  // namespace detail

/// Posterior responsibilities of each component of `cond` given x_t.
inline std::vector<double> responsibilities(const ConditionModel& model, const Sequence& x_t, int t, ConditionId cond,
                                            const NoiseSchedule& schedule) {
  require_timestep(schedule, t, "responsibilities");
  detail::require_clip_shape(model, x_t, "responsibilities");
  auto logs = detail::log_joint(model.components(cond), x_t, schedule.alpha_bar[t]);
  const double norm = detail::log_sum_exp(logs);
  for (double& v : logs) v = std::exp(v - norm);
  return logs;
}

/// Exact E[x0 | x_t, cond] under the forward process.
inline Sequence predict_x0(const ConditionModel& model, const Sequence& x_t, int t, ConditionId cond,
                           const NoiseSchedule& schedule) {
  detail::require_clip_shape(model, x_t, "predict_x0");
  if (!all_finite(x_t)) throw Error(ErrorKind::Numeric, "predict_x0: non-finite x_t at t = " + std::to_string(t));
  require_timestep(schedule, t, "predict_x0");
  const double a = schedule.alpha_bar[t];
  const double root = std::sqrt(a);
  const auto comps = model.components(cond);
  auto logs = detail::log_joint(comps, x_t, a);
  const double norm = detail::log_sum_exp(logs);

  Sequence out(x_t.frames(), x_t.channels());
  auto o = out.values();
  auto xs = x_t.values();
  for (std::size_t m = 0; m < comps.size(); ++m) {
    const double r = std::exp(logs[m] - norm);
    if (r == 0.0) continue;
    auto mu = comps[m].mean.values();
    auto var = comps[m].variance.values();
    for (std::size_t i = 0; i < o.size(); ++i) {
      const double gain = root * var[i] / (a * var[i] + (1.0 - a));
      o[i] += r * (mu[i] + gain * (xs[i] - root * mu[i]));
    }
  }
  return out;
}

/// log p_t(x_t | cond) of the noisy marginal at timestep t.
inline double noisy_log_density(const ConditionModel& model, const Sequence& x_t, int t, ConditionId cond,
                                const NoiseSchedule& schedule) {
  require_timestep(schedule, t, "noisy_log_density");
  detail::require_clip_shape(model, x_t, "noisy_log_density");
  const auto logs = detail::log_joint(model.components(cond), x_t, schedule.alpha_bar[t]);
  return detail::log_sum_exp(logs);
}

/// Exact mixture log-density of a clean clip.
inline double domain_log_likelihood(const ConditionModel& model, const Sequence& clip, ConditionId cond) {
  detail::require_clip_shape(model, clip, "domain_log_likelihood");
  const auto logs = detail::log_joint(model.components(cond), clip, 1.0);
  return detail::log_sum_exp(logs);
}

/// Exact draws from the clean distribution of `cond`. Deterministic in seed.
inline std::vector<Sequence> sample_clips(const ConditionModel& model, ConditionId cond, std::size_t n,
                                          std::uint64_t seed) {
  if (n == 0) throw Error(ErrorKind::InvalidConfig, "sample_clips needs n >= 1");
  const auto comps = model.components(cond);
  std::vector<double> weights;
  for (const auto& c : comps) weights.push_back(c.weight);
  std::mt19937_64 engine(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<Sequence> clips;
  clips.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    double u = uniform(engine);
    std::size_t pick = comps.size() - 1;
    for (std::size_t m = 0; m < comps.size(); ++m) {
      if (u < weights[m]) {
        pick = m;
        break;
      }
      u -= weights[m];
    }
    const auto& c = comps[pick];
    Sequence clip(model.frames(), model.channels());
    auto o = clip.values();
    auto mu = c.mean.values();
    auto var = c.variance.values();
    for (std::size_t j = 0; j < o.size(); ++j) o[j] = mu[j] + std::sqrt(var[j]) * normal(engine);
    clips.push_back(std::move(clip));
  }
  return clips;
}

/// Condition with the higher clean log-likelihood (Source on ties).
inline ConditionId classify_clip(const ConditionModel& model, const Sequence& clip) {
  return domain_log_likelihood(model, clip, ConditionId::Source) >=
                 domain_log_likelihood(model, clip, ConditionId::Target)
             ? ConditionId::Source
             : ConditionId::Target;
}

}  // namespace mdpa
