#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "mdpa/core.hpp"

namespace mdpa {

using FeatureVector = std::vector<double>;

/// Dense square matrix, row-major.
class Matrix {
 public:
  Matrix() = default;
  explicit Matrix(std::size_t n, double fill = 0.0) : n_(n), a_(n * n, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t dim() const noexcept { return n_; }
  double& operator()(std::size_t i, std::size_t j) { return a_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a_[i * n_ + j]; }

  double trace() const {
    double t = 0.0;
    for (std::size_t i = 0; i < n_; ++i) t += (*this)(i, i);
    return t;
  }

  double frobenius() const {
    double acc = 0.0;
    for (double v : a_) acc += v * v;
    return std::sqrt(acc);
  }

  friend Matrix operator*(const Matrix& x, const Matrix& y) {
    const std::size_t n = x.n_;
    Matrix out(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < n; ++k) {
        const double xik = x(i, k);
        if (xik == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) out(i, j) += xik * y(k, j);
      }
    }
    return out;
  }

  friend Matrix operator-(const Matrix& x, const Matrix& y) {
    Matrix out = x;
    for (std::size_t i = 0; i < out.a_.size(); ++i) out.a_[i] -= y.a_[i];
    return out;
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> a_;
};

struct SymmetricEigen {
  std::vector<double> values;
  Matrix vectors;  // columns are eigenvectors
};

/// Cyclic Jacobi rotations; stops when the off-diagonal Frobenius norm drops
/// below 1e-12 relative to the full norm.
inline SymmetricEigen symmetric_eigen(Matrix a) {
  const std::size_t n = a.dim();
  Matrix v = Matrix::identity(n);
  const double scale = std::max(a.frobenius(), 1e-300);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) off += 2.0 * a(i, j) * a(i, j);
    }
    if (std::sqrt(off) <= 1e-12 * scale) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  SymmetricEigen out;
  out.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.values[i] = a(i, i);
  out.vectors = std::move(v);
  return out;
}

inline constexpr double kPsdTolerance = 1e-8;

/// Principal square root of a symmetric PSD matrix. Eigenvalues are floored
/// at 0; anything below -1e-8 (relative to the spectrum's scale) is rejected.
inline Matrix psd_sqrt(const Matrix& a) {
  const std::size_t n = a.dim();
  const SymmetricEigen eig = symmetric_eigen(a);
  double peak = 1.0;
  for (double lam : eig.values) peak = std::max(peak, std::abs(lam));
  Matrix out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double lam = eig.values[k];
    if (lam < -kPsdTolerance * peak) {
      throw Error(ErrorKind::Numeric, "matrix is not positive semi-definite (eigenvalue " + std::to_string(lam) + ")");
    }
    const double root = std::sqrt(std::max(lam, 0.0));
    if (root == 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) {
      const double vi = eig.vectors(i, k) * root;
      for (std::size_t j = 0; j < n; ++j) out(i, j) += vi * eig.vectors(j, k);
    }
  }
  return out;
}

inline Matrix symmetrized(const Matrix& a) {
  Matrix out = a;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    for (std::size_t j = i + 1; j < a.dim(); ++j) out(i, j) = out(j, i) = 0.5 * (a(i, j) + a(j, i));
  }
  return out;
}

struct FeatureStats {
  FeatureVector mean;
  Matrix cov;
  std::size_t count = 0;
};

/// Sample mean and unbiased covariance.
inline FeatureStats feature_stats(const std::vector<FeatureVector>& features) {
  if (features.empty()) throw Error(ErrorKind::InvalidConfig, "feature_stats: empty feature set");
  const std::size_t d = features.front().size();
  FeatureStats out;
  out.count = features.size();
  out.mean.assign(d, 0.0);
  for (const auto& f : features) {
    if (f.size() != d) throw Error(ErrorKind::Dimension, "feature_stats: ragged feature set");
    for (std::size_t i = 0; i < d; ++i) out.mean[i] += f[i];
  }
  for (double& m : out.mean) m /= static_cast<double>(out.count);
  out.cov = Matrix(d);
  if (out.count < 2) return out;
  for (const auto& f : features) {
    for (std::size_t i = 0; i < d; ++i) {
      const double di = f[i] - out.mean[i];
      for (std::size_t j = i; j < d; ++j) out.cov(i, j) += di * (f[j] - out.mean[j]);
    }
  }
  const double denom = static_cast<double>(out.count - 1);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      out.cov(i, j) /= denom;
      out.cov(j, i) = out.cov(i, j);
    }
  }
  return out;
}

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2), clamped at 0.
inline double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
  const std::size_t d = a.mean.size();
  if (b.mean.size() != d || a.cov.dim() != d || b.cov.dim() != d) {
    throw Error(ErrorKind::Dimension, "frechet_distance: dimension mismatch");
  }
  double mean_term = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = a.mean[i] - b.mean[i];
    mean_term += diff * diff;
  }
  const Matrix root_a = psd_sqrt(a.cov);
  const Matrix inner = symmetrized(root_a * b.cov * root_a);
  const Matrix cross = psd_sqrt(inner);
  const double value = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * cross.trace();
  return std::max(value, 0.0);
}

// ---------------------------------------------------------------------------
// Feature spaces

/// Per channel: RMS of first differences, then RMS of second differences.
inline FeatureVector kinetic_features(const Sequence& clip) {
  const std::size_t frames = clip.frames();
  const std::size_t channels = clip.channels();
  if (frames < 3) throw Error(ErrorKind::InsufficientFrames, "kinetic_features needs at least 3 frames");
  FeatureVector out(2 * channels, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    double vel = 0.0;
    for (std::size_t s = 1; s < frames; ++s) {
      const double d = clip(s, c) - clip(s - 1, c);
      vel += d * d;
    }
    double acc = 0.0;
    for (std::size_t s = 2; s < frames; ++s) {
      const double d = clip(s, c) - 2.0 * clip(s - 1, c) + clip(s - 2, c);
      acc += d * d;
    }
    out[c] = std::sqrt(vel / static_cast<double>(frames - 1));
    out[channels + c] = std::sqrt(acc / static_cast<double>(frames - 2));
  }
  return out;
}

/// Per-channel temporal means, then temporal means of |x_i - x_j| for i < j.
inline FeatureVector geometric_features(const Sequence& clip) {
  const std::size_t frames = clip.frames();
  const std::size_t channels = clip.channels();
  if (channels < 2) throw Error(ErrorKind::InvalidConfig, "geometric_features needs at least 2 channels");
  if (frames == 0) throw Error(ErrorKind::InsufficientFrames, "geometric_features needs at least 1 frame");
  FeatureVector out(channels + channels * (channels - 1) / 2, 0.0);
  const double inv = 1.0 / static_cast<double>(frames);
  for (std::size_t s = 0; s < frames; ++s) {
    std::size_t slot = channels;
    for (std::size_t i = 0; i < channels; ++i) {
      out[i] += clip(s, i) * inv;
      for (std::size_t j = i + 1; j < channels; ++j) out[slot++] += std::abs(clip(s, i) - clip(s, j)) * inv;
    }
  }
  return out;
}

/// Per-dimension mean and (unbiased) standard deviation of a reference set.
struct Standardizer {
  FeatureVector mean;
  FeatureVector std;

  static constexpr double kStdFloor = 1e-8;

  static Standardizer fit(const std::vector<FeatureVector>& reference) {
    const FeatureStats stats = feature_stats(reference);
    Standardizer out;
    out.mean = stats.mean;
    out.std.resize(stats.mean.size());
    for (std::size_t i = 0; i < out.std.size(); ++i) out.std[i] = std::max(std::sqrt(stats.cov(i, i)), kStdFloor);
    return out;
  }

  FeatureVector apply(const FeatureVector& x) const {
    if (x.size() != mean.size()) throw Error(ErrorKind::Dimension, "standardize: feature size mismatch");
    FeatureVector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean[i]) / std[i];
    return out;
  }

  FeatureVector invert(const FeatureVector& z) const {
    FeatureVector out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] * std[i] + mean[i];
    return out;
  }
};

inline std::vector<FeatureVector> standardize(const std::vector<FeatureVector>& features, const Standardizer& gt) {
  std::vector<FeatureVector> out;
  out.reserve(features.size());
  for (const auto& f : features) out.push_back(gt.apply(f));
  return out;
}

/// Mean Euclidean distance over n_pairs uniformly drawn pairs of distinct items.
inline double diversity(const std::vector<FeatureVector>& features, std::size_t n_pairs, std::uint64_t seed) {
  if (features.size() < 2) throw Error(ErrorKind::InvalidConfig, "diversity needs at least 2 samples");
  if (n_pairs == 0) throw Error(ErrorKind::InvalidConfig, "diversity needs n_pairs >= 1");
  std::mt19937_64 engine(seed);
  std::uniform_int_distribution<std::size_t> first(0, features.size() - 1);
  std::uniform_int_distribution<std::size_t> second(0, features.size() - 2);
  double total = 0.0;
  for (std::size_t p = 0; p < n_pairs; ++p) {
    const std::size_t i = first(engine);
    std::size_t j = second(engine);
    if (j >= i) ++j;
    double acc = 0.0;
    for (std::size_t d = 0; d < features[i].size(); ++d) {
      const double diff = features[i][d] - features[j][d];
      acc += diff * diff;
    }
    total += std::sqrt(acc);
  }
  return total / static_cast<double>(n_pairs);
}

struct DynamicsStats {
  double accel_mean = 0.0;
  double accel_var = 0.0;
  double jerk_mean = 0.0;
  double jerk_var = 0.0;
};

/// Pooled magnitudes of second (acceleration) and third (jerk) differences;
/// variances are population variances of the pools.
inline DynamicsStats dynamics_stats(const std::vector<Sequence>& clips) {
  std::vector<double> accel;
  std::vector<double> jerk;
  for (const auto& clip : clips) {
    if (clip.frames() < 4) throw Error(ErrorKind::InsufficientFrames, "dynamics_stats needs at least 4 frames");
    for (std::size_t c = 0; c < clip.channels(); ++c) {
      for (std::size_t s = 2; s < clip.frames(); ++s) {
        accel.push_back(std::abs(clip(s, c) - 2.0 * clip(s - 1, c) + clip(s - 2, c)));
      }
      for (std::size_t s = 3; s < clip.frames(); ++s) {
        jerk.push_back(std::abs(clip(s, c) - 3.0 * clip(s - 1, c) + 3.0 * clip(s - 2, c) - clip(s - 3, c)));
      }
    }
  }
  auto moments = [](const std::vector<double>& pool) {
    if (pool.empty()) return std::pair{0.0, 0.0};
    double mean = 0.0;
    for (double v : pool) mean += v;
    mean /= static_cast<double>(pool.size());
    double var = 0.0;
    for (double v : pool) var += (v - mean) * (v - mean);
    return std::pair{mean, var / static_cast<double>(pool.size())};
  };
  DynamicsStats out;
  std::tie(out.accel_mean, out.accel_var) = moments(accel);
  std::tie(out.jerk_mean, out.jerk_var) = moments(jerk);
  return out;
}

struct EvalReport {
  double fid_k = 0.0;
  double fid_m = 0.0;
  double div_k = 0.0;
  double div_m = 0.0;
  double accel_mean = 0.0;
  double accel_var = 0.0;
  double jerk_mean = 0.0;
  double jerk_var = 0.0;
  std::size_t n_gen = 0;
  std::size_t n_gt = 0;
};

template <typename Extract>
std::vector<FeatureVector> extract_all(const std::vector<Sequence>& clips, Extract extract) {
  std::vector<FeatureVector> out;
  out.reserve(clips.size());
  for (const auto& c : clips) out.push_back(extract(c));
  return out;
}

/// Full metric suite for a generated set against ground truth. Both feature
/// spaces are standardized with ground-truth statistics.
inline EvalReport evaluate(const std::vector<Sequence>& gen_clips, const std::vector<Sequence>& gt_clips,
                           std::size_t n_pairs, std::uint64_t seed) {
  if (gen_clips.empty() || gt_clips.empty()) throw Error(ErrorKind::InvalidConfig, "evaluate needs non-empty clip sets");
  EvalReport report;
  report.n_gen = gen_clips.size();
  report.n_gt = gt_clips.size();

  auto score = [&](auto extract, double& fid, double& div, std::uint64_t stream) {
    const auto gt = extract_all(gt_clips, extract);
    const auto gen = extract_all(gen_clips, extract);
    const Standardizer norm = Standardizer::fit(gt);
    const auto gt_z = standardize(gt, norm);
    const auto gen_z = standardize(gen, norm);
    fid = frechet_distance(feature_stats(gen_z), feature_stats(gt_z));
    div = gen_z.size() >= 2 ? diversity(gen_z, n_pairs, derive_seed(seed, streams::kPairs, stream)) : 0.0;
  };
  score(kinetic_features, report.fid_k, report.div_k, 0);
  score(geometric_features, report.fid_m, report.div_m, 1);

  const DynamicsStats dyn = dynamics_stats(gen_clips);
  report.accel_mean = dyn.accel_mean;
  report.accel_var = dyn.accel_var;
  report.jerk_mean = dyn.jerk_mean;
  report.jerk_var = dyn.jerk_var;
  return report;
}

}  // namespace mdpa
