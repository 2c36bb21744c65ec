#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "moprior/container.hpp"
#include "moprior/errors.hpp"
#include "moprior/geometry.hpp"

namespace moprior {

// The universal currency of the toolkit: per-frame, per-joint 3D positions
// (meters) at a fixed frame rate, with optional per-joint axis-angle
// rotations. Storage is 32-bit float so the native file format round-trips
// bit-exactly.
struct MotionSequence {
  int fps = 0;
  std::vector<std::string> joints;
  std::vector<float> positions;  // frames x joints x 3
  std::vector<float> rotations;  // empty, or frames x joints x 3 (axis-angle)
  int root_index = 0;

  int joint_count() const { return static_cast<int>(joints.size()); }
  int frame_count() const {
    return joints.empty() ? 0 : static_cast<int>(positions.size() / (joints.size() * 3));
  }
  bool has_rotations() const { return !rotations.empty(); }

  float* position(int frame, int joint) {
    return positions.data() + (static_cast<std::size_t>(frame) * joint_count() + joint) * 3;
  }
  const float* position(int frame, int joint) const {
    return positions.data() + (static_cast<std::size_t>(frame) * joint_count() + joint) * 3;
  }
  float* rotation(int frame, int joint) {
    return rotations.data() + (static_cast<std::size_t>(frame) * joint_count() + joint) * 3;
  }
  const float* rotation(int frame, int joint) const {
    return rotations.data() + (static_cast<std::size_t>(frame) * joint_count() + joint) * 3;
  }

  void validate() const {
    const std::size_t k = joints.size();
    if (k < 2) throw ValidationError("motion sequence needs at least 2 joints");
    if (fps <= 0) throw ValidationError("fps must be positive");
    if (positions.empty() || positions.size() % (k * 3) != 0)
      throw ValidationError("positions array is not frames x joints x 3");
    if (frame_count() < 1) throw ValidationError("motion sequence needs at least 1 frame");
    if (root_index < 0 || root_index >= static_cast<int>(k))
      throw ValidationError("root index out of range");
    for (float v : positions)
      if (!std::isfinite(v)) throw ValidationError("non-finite coordinate in positions");
    if (!rotations.empty()) {
      if (rotations.size() != positions.size())
        throw ValidationError("rotations present but shaped differently from positions");
      for (float v : rotations)
        if (!std::isfinite(v)) throw ValidationError("non-finite value in rotations");
    }
  }
};

// A T-frame window of a parent sequence. T >= 5: the acceleration vector
// needs at least three interior stencils to say anything about dynamics.
struct MotionSegment {
  int length = 0;
  int joint_count = 0;
  int source_offset = 0;
  std::vector<double> positions;  // length x joint_count x 3, meters

  const double* position(int frame, int joint) const {
    return positions.data() + (static_cast<std::size_t>(frame) * joint_count + joint) * 3;
  }
  double* position(int frame, int joint) {
    return positions.data() + (static_cast<std::size_t>(frame) * joint_count + joint) * 3;
  }

  void validate() const {
    if (length < 5) throw ValidationError("motion segment length must be >= 5 frames");
    if (joint_count < 2) throw ValidationError("motion segment needs >= 2 joints");
    if (positions.size() != static_cast<std::size_t>(length) * joint_count * 3)
      throw ValidationError("motion segment position array mismatch");
  }
};

inline MotionSegment extract_segment(const MotionSequence& seq, int start, int length) {
  if (length < 5) throw ValidationError("motion segment length must be >= 5 frames");
  if (start < 0 || start + length > seq.frame_count())
    throw DimensionError("segment window [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") exceeds sequence of " +
                         std::to_string(seq.frame_count()) + " frames");
  MotionSegment seg;
  seg.length = length;
  seg.joint_count = seq.joint_count();
  seg.source_offset = start;
  seg.positions.resize(static_cast<std::size_t>(length) * seg.joint_count * 3);
  for (int f = 0; f < length; ++f)
    for (int j = 0; j < seg.joint_count; ++j) {
      const float* src = seq.position(start + f, j);
      double* dst = seg.position(f, j);
      dst[0] = src[0];
      dst[1] = src[1];
      dst[2] = src[2];
    }
  return seg;
}

// Per-(frame, joint) missing-observation flags.
struct OcclusionMask {
  int frames = 0;
  int joints = 0;
  std::vector<std::uint8_t> missing;  // frames x joints

  bool at(int frame, int joint) const {
    return missing[static_cast<std::size_t>(frame) * joints + joint] != 0;
  }
  void set(int frame, int joint, bool v) {
    missing[static_cast<std::size_t>(frame) * joints + joint] = v ? 1 : 0;
  }
  static OcclusionMask none(int frames, int joints) {
    OcclusionMask m;
    m.frames = frames;
    m.joints = joints;
    m.missing.assign(static_cast<std::size_t>(frames) * joints, 0);
    return m;
  }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : missing) n += v;
    return n;
  }
};

inline void write_mask(const OcclusionMask& mask, const std::string& path) {
  nlohmann::json header;
  header["frames"] = mask.frames;
  header["joints"] = mask.joints;
  container::Blob b;
  b.name = "missing";
  b.dtype = "u8";
  b.bytes = mask.missing;
  container::write(path, "mask", header, {b});
}

inline OcclusionMask read_mask(const std::string& path) {
  container::File f = container::read(path, "mask");
  OcclusionMask m;
  m.frames = f.header.at("frames").get<int>();
  m.joints = f.header.at("joints").get<int>();
  m.missing = f.blob("missing").bytes;
  if (m.missing.size() != static_cast<std::size_t>(m.frames) * m.joints)
    throw ParseError("mask blob size disagrees with header: " + path);
  return m;
}

// ---------------------------------------------------------------------------
// Native motion file format: container of type "motion".

inline void write_native(const MotionSequence& seq, const std::string& path) {
  seq.validate();
  nlohmann::json header;
  header["fps"] = seq.fps;
  header["joints"] = seq.joints;
  header["root_index"] = seq.root_index;
  header["frames"] = seq.frame_count();
  header["has_rotations"] = seq.has_rotations();
  std::vector<container::Blob> blobs;
  blobs.push_back(container::Blob::from_f32("positions", seq.positions));
  if (seq.has_rotations()) blobs.push_back(container::Blob::from_f32("rotations", seq.rotations));
  container::write(path, "motion", header, blobs);
}

inline MotionSequence read_native(const std::string& path) {
  container::File f = container::read(path, "motion");
  MotionSequence seq;
  seq.fps = f.header.at("fps").get<int>();
  for (const auto& j : f.header.at("joints")) seq.joints.push_back(j.get<std::string>());
  seq.root_index = f.header.at("root_index").get<int>();
  seq.positions = f.blob("positions").as_f32();
  if (f.header.value("has_rotations", false)) seq.rotations = f.blob("rotations").as_f32();
  seq.validate();
  if (seq.frame_count() != f.header.at("frames").get<int>())
    throw ParseError("frame count in header disagrees with blob size: " + path);
  return seq;
}

// ---------------------------------------------------------------------------
// Resampling.

// Integer decimation keeps every (fps/target)-th frame starting at frame 0,
// copying stored samples exactly. Linear interpolation must be requested
// explicitly and handles non-integer ratios (positions lerp, rotations
// quaternion-nlerp).
inline MotionSequence resample(const MotionSequence& seq, int target_fps,
                               bool allow_interpolation = false) {
  seq.validate();
  if (target_fps <= 0) throw ConfigError("target fps must be positive");
  if (target_fps > seq.fps) throw ConfigError("resample only reduces the frame rate");
  if (target_fps == seq.fps) return seq;

  MotionSequence out;
  out.fps = target_fps;
  out.joints = seq.joints;
  out.root_index = seq.root_index;
  const int k = seq.joint_count();

  if (seq.fps % target_fps == 0 && !allow_interpolation) {
    const int ratio = seq.fps / target_fps;
    const int frames = (seq.frame_count() + ratio - 1) / ratio;  // ceil(F / r)
    out.positions.resize(static_cast<std::size_t>(frames) * k * 3);
    if (seq.has_rotations()) out.rotations.resize(out.positions.size());
    for (int f = 0; f < frames; ++f) {
      int src = f * ratio;
      std::copy_n(seq.position(src, 0), static_cast<std::size_t>(k) * 3, out.position(f, 0));
      if (seq.has_rotations())
        std::copy_n(seq.rotation(src, 0), static_cast<std::size_t>(k) * 3, out.rotation(f, 0));
    }
    return out;
  }
  if (!allow_interpolation)
    throw ConfigError("fps " + std::to_string(seq.fps) + " is not an integer multiple of " +
                      std::to_string(target_fps) + "; pass the interpolation flag to resample anyway");

  const double ratio = static_cast<double>(seq.fps) / target_fps;
  const int frames = static_cast<int>(std::ceil(seq.frame_count() / ratio));
  out.positions.resize(static_cast<std::size_t>(frames) * k * 3);
  if (seq.has_rotations()) out.rotations.resize(out.positions.size());
  for (int f = 0; f < frames; ++f) {
    double t = f * ratio;
    int lo = static_cast<int>(std::floor(t));
    int hi = std::min(lo + 1, seq.frame_count() - 1);
    double a = t - lo;
    for (int j = 0; j < k; ++j) {
      const float* plo = seq.position(lo, j);
      const float* phi = seq.position(hi, j);
      float* dst = out.position(f, j);
      for (int c = 0; c < 3; ++c)
        dst[c] = static_cast<float>((1.0 - a) * plo[c] + a * phi[c]);
      if (seq.has_rotations()) {
        const float* rlo = seq.rotation(lo, j);
        const float* rhi = seq.rotation(hi, j);
        Mat3 m = rotation_nlerp(rotation_from_axis_angle(Vec3(rlo[0], rlo[1], rlo[2])),
                                rotation_from_axis_angle(Vec3(rhi[0], rhi[1], rhi[2])), a);
        Vec3 aa = axis_angle_from_rotation(m);
        float* rd = out.rotation(f, j);
        rd[0] = static_cast<float>(aa.x());
        rd[1] = static_cast<float>(aa.y());
        rd[2] = static_cast<float>(aa.z());
      }
    }
  }
  return out;
}

}  // namespace moprior
