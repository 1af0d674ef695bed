#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mdpa {

enum class ErrorKind {
  InvalidConfig,
  Dimension,
  Numeric,
  Domain,
  DegenerateTimestep,
  Ordering,
  Contract,
  InsufficientFrames,
  Io,
  Parse,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidConfig: return "invalid-config";
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::DegenerateTimestep: return "degenerate-timestep";
    case ErrorKind::Ordering: return "ordering";
    case ErrorKind::Contract: return "contract";
    case ErrorKind::InsufficientFrames: return "insufficient-frames";
    case ErrorKind::Io: return "io";
    case ErrorKind::Parse: return "parse";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Collects non-fatal conditions (floored weights, empty slicing, ...).
/// Operations take an optional pointer; passing nullptr discards notes.
struct Diagnostics {
  std::vector<std::string> notes;

  void note(std::string message) { notes.push_back(std::move(message)); }
  bool empty() const { return notes.empty(); }
};

inline void note(Diagnostics* diag, std::string message) {
  if (diag != nullptr) diag->note(std::move(message));
}

/// Row-major frames x channels block of doubles. Used for single segments,
/// clips and assembled long sequences alike.
class Sequence {
 public:
  Sequence() = default;
  Sequence(std::size_t frames, std::size_t channels, double fill = 0.0)
      : frames_(frames), channels_(channels), values_(frames * channels, fill) {}

  std::size_t frames() const noexcept { return frames_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t size() const noexcept { return values_.size(); }

  double& operator()(std::size_t frame, std::size_t channel) {
    return values_[frame * channels_ + channel];
  }
  double operator()(std::size_t frame, std::size_t channel) const {
    return values_[frame * channels_ + channel];
  }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  bool same_shape(const Sequence& other) const noexcept {
    return frames_ == other.frames_ && channels_ == other.channels_;
  }

  friend bool operator==(const Sequence&, const Sequence&) = default;

 private:
  std::size_t frames_ = 0;
  std::size_t channels_ = 0;
  std::vector<double> values_;
};

/// K segments of identical shape.
using SegmentSet = std::vector<Sequence>;

inline void require_same_shape(const Sequence& a, const Sequence& b, const char* where) {
  if (!a.same_shape(b)) {
    throw Error(ErrorKind::Dimension, std::string(where) + ": shape mismatch (" +
                                          std::to_string(a.frames()) + "x" + std::to_string(a.channels()) +
                                          " vs " + std::to_string(b.frames()) + "x" +
                                          std::to_string(b.channels()) + ")");
  }
}

/// alpha * a + beta * b, elementwise.
inline Sequence axpby(double alpha, const Sequence& a, double beta, const Sequence& b) {
  require_same_shape(a, b, "axpby");
  Sequence out(a.frames(), a.channels());
  auto o = out.values();
  auto x = a.values();
  auto y = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = alpha * x[i] + beta * y[i];
  return out;
}

inline Sequence scaled(const Sequence& a, double factor) {
  Sequence out = a;
  for (double& v : out.values()) v *= factor;
  return out;
}

inline double squared_norm(const Sequence& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v * v;
  return acc;
}

inline double dot(const Sequence& a, const Sequence& b) {
  require_same_shape(a, b, "dot");
  double acc = 0.0;
  auto x = a.values();
  auto y = b.values();
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

inline bool all_finite(const Sequence& a) {
  for (double v : a.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Seeding. One master seed fans out into independent streams by a
// counter-based split, so the stream for (seed, purpose, index) never depends
// on how many other streams were drawn before it.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index);
}

namespace streams {
inline constexpr std::uint64_t kInitialNoise = 0x6e6f697365ULL;
inline constexpr std::uint64_t kClipSampling = 0x636c697073ULL;
inline constexpr std::uint64_t kRunSeeds = 0x72756e73ULL;
inline constexpr std::uint64_t kPairs = 0x7061697273ULL;
inline constexpr std::uint64_t kGroundTruth = 0x6774ULL;
}  // namespace streams

inline Sequence gaussian_sequence(std::size_t frames, std::size_t channels, std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Sequence out(frames, channels);
  for (double& v : out.values()) v = normal(engine);
  return out;
}

}  // namespace mdpa
