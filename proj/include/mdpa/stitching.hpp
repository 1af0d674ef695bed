#pragma once

#include <string>
#include <vector>

#include "mdpa/core.hpp"

namespace mdpa {

inline void require_segments(const SegmentSet& segments, const char* where) {
  if (segments.empty()) throw Error(ErrorKind::Dimension, std::string(where) + ": no segments");
  for (const auto& s : segments) require_same_shape(segments.front(), s, where);
}

inline void require_even_frames(std::size_t frames, const char* where) {
  if (frames == 0 || frames % 2 != 0) {
    throw Error(ErrorKind::InvalidConfig,
                std::string(where) + ": segment length must be even and positive, got " + std::to_string(frames));
  }
}

/// Copies the second half of each segment onto the first half of its
/// successor, in ascending order, so the overlaps match bitwise.
inline SegmentSet hard_stitch_project(SegmentSet segments) {
  require_segments(segments, "hard_stitch_project");
  const std::size_t frames = segments.front().frames();
  const std::size_t channels = segments.front().channels();
  require_even_frames(frames, "hard_stitch_project");
  const std::size_t half = frames / 2;
  for (std::size_t k = 0; k + 1 < segments.size(); ++k) {
    for (std::size_t s = 0; s < half; ++s) {
      for (std::size_t c = 0; c < channels; ++c) segments[k + 1](s, c) = segments[k](half + s, c);
    }
  }
  return segments;
}

/// Shifts the root channel of each segment so it starts where its
/// predecessor ends. Other channels are untouched.
inline SegmentSet align_root(SegmentSet segments, std::size_t root_channel) {
  require_segments(segments, "align_root");
  const std::size_t frames = segments.front().frames();
  if (root_channel >= segments.front().channels()) {
    throw Error(ErrorKind::InvalidConfig, "align_root: root channel " + std::to_string(root_channel) + " out of range");
  }
  for (std::size_t k = 0; k + 1 < segments.size(); ++k) {
    const double offset = segments[k](frames - 1, root_channel) - segments[k + 1](0, root_channel);
    for (std::size_t s = 0; s < frames; ++s) segments[k + 1](s, root_channel) += offset;
  }
  return segments;
}

/// Transpose of align_root's (linear) Jacobian: maps a gradient with respect
/// to the aligned segments back onto the unaligned ones.
inline SegmentSet align_root_adjoint(SegmentSet grad, std::size_t root_channel) {
  require_segments(grad, "align_root_adjoint");
  const std::size_t frames = grad.front().frames();
  for (std::size_t k = grad.size() - 1; k >= 1; --k) {
    double offset_grad = 0.0;
    for (std::size_t s = 0; s < frames; ++s) offset_grad += grad[k](s, root_channel);
    grad[k](0, root_channel) -= offset_grad;
    grad[k - 1](frames - 1, root_channel) += offset_grad;
  }
  return grad;
}

/// Joins K segments overlapping by half into one sequence of length
/// S + (K - 1) S / 2. In each overlap the incoming segment is weighted j/(S/2)
/// at overlap frame j and the outgoing one by the complement.
inline Sequence assemble_crossfade(const SegmentSet& segments) {
  require_segments(segments, "assemble_crossfade");
  const std::size_t frames = segments.front().frames();
  const std::size_t channels = segments.front().channels();
  require_even_frames(frames, "assemble_crossfade");
  const std::size_t half = frames / 2;
  const std::size_t k_count = segments.size();
  Sequence out(frames + (k_count - 1) * half, channels);
  for (std::size_t s = 0; s < frames; ++s) {
    for (std::size_t c = 0; c < channels; ++c) out(s, c) = segments[0](s, c);
  }
  for (std::size_t k = 1; k < k_count; ++k) {
    const std::size_t start = k * half;
    for (std::size_t j = 0; j < half; ++j) {
      const double w = static_cast<double>(j) / static_cast<double>(half);
      for (std::size_t c = 0; c < channels; ++c) {
        const double outgoing = out(start + j, c);
        const double incoming = segments[k](j, c);
        // equal values must come through unchanged
        out(start + j, c) = outgoing == incoming ? incoming : (1.0 - w) * outgoing + w * incoming;
      }
    }
    for (std::size_t j = half; j < frames; ++j) {
      for (std::size_t c = 0; c < channels; ++c) out(start + j, c) = segments[k](j, c);
    }
  }
  return out;
}

/// Fixed-length windows at offsets 0, stride, 2 stride, ...; a short tail is dropped.
inline std::vector<Sequence> slice_windows(const Sequence& sequence, std::size_t length, std::size_t stride,
                                           Diagnostics* diag = nullptr) {
  if (length == 0 || stride == 0) throw Error(ErrorKind::InvalidConfig, "slice_windows: length and stride must be positive");
  std::vector<Sequence> clips;
  if (sequence.frames() < length) {
    note(diag, "slice_windows: sequence of " + std::to_string(sequence.frames()) + " frames is shorter than window " +
                   std::to_string(length));
    return clips;
  }
  for (std::size_t offset = 0; offset + length <= sequence.frames(); offset += stride) {
    Sequence clip(length, sequence.channels());
    for (std::size_t s = 0; s < length; ++s) {
      for (std::size_t c = 0; c < sequence.channels(); ++c) clip(s, c) = sequence(offset + s, c);
    }
    clips.push_back(std::move(clip));
  }
  return clips;
}

}  // namespace mdpa
