#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "moprior/errors.hpp"
#include "moprior/motion.hpp"
#include "moprior/rng.hpp"
#include "moprior/skeleton.hpp"

namespace moprior {

enum class SynthKind { WalkCycle, ArmSwing, Squat, RandomSpline };

inline SynthKind synth_kind_from_string(const std::string& s) {
  if (s == "walk-cycle") return SynthKind::WalkCycle;
  if (s == "arm-swing") return SynthKind::ArmSwing;
  if (s == "squat") return SynthKind::Squat;
  if (s == "random-spline") return SynthKind::RandomSpline;
  throw ConfigError("unknown synthesis kind: " + s);
}

inline std::string to_string(SynthKind k) {
  switch (k) {
    case SynthKind::WalkCycle: return "walk-cycle";
    case SynthKind::ArmSwing: return "arm-swing";
    case SynthKind::Squat: return "squat";
    case SynthKind::RandomSpline: return "random-spline";
  }
  return "?";
}

namespace synth_detail {

// A smooth scalar signal: sum of sinusoids. Infinitely differentiable, so
// every generated trajectory is trivially C^2, and the angular acceleration
// bound is the analytic sum of A * w^2.
struct Oscillator {
  struct Term {
    double amplitude, omega, phase;
  };
  std::vector<Term> terms;
  double offset = 0.0;

  double operator()(double t) const {
    double v = offset;
    for (const Term& x : terms) v += x.amplitude * std::sin(x.omega * t + x.phase);
    return v;
  }
  double accel_bound() const {
    double b = 0.0;
    for (const Term& x : terms) b += std::abs(x.amplitude) * x.omega * x.omega;
    return b;
  }
};

constexpr double kTwoPi = 6.283185307179586;

}  // namespace synth_detail

// Deterministic per seed. Joint trajectories come from smooth joint-angle
// signals pushed through FK over the default skeleton, so bone lengths are
// constant by construction. The root stays pinned at the origin: the whole
// toolkit works in root-local coordinates.
inline MotionSequence synthesize_motion(SynthKind kind, int frames, int fps, std::uint64_t seed,
                                        const Skeleton& skel = default_skeleton()) {
  using synth_detail::Oscillator;
  using synth_detail::kTwoPi;
  if (frames < 5) throw ConfigError("synthesize_motion needs at least 5 frames");
  if (fps <= 0) throw ConfigError("fps must be positive");

  const int k = skel.joint_count();
  Rng rng(seed ^ (static_cast<std::uint64_t>(kind) << 56));

  // One oscillator per (joint, axis) of the local rotation vector.
  std::vector<Oscillator> osc(static_cast<std::size_t>(k) * 3);
  auto at = [&](int joint, int axis) -> Oscillator& { return osc[joint * 3 + axis]; };

  const double jitter = 0.9 + 0.2 * rng.uniform();  // per-sequence tempo variation
  switch (kind) {
    case SynthKind::WalkCycle: {
      double w = kTwoPi * 0.9 * jitter;  // gait ~0.9 Hz
      double phase = rng.uniform(0.0, kTwoPi);
      double leg = 0.45 + 0.1 * rng.uniform();
      double knee = 0.55 + 0.1 * rng.uniform();
      double arm = 0.35 + 0.1 * rng.uniform();
      at(1, 0).terms = {{leg, w, phase}};                     // left hip swing
      at(2, 0).terms = {{leg, w, phase + M_PI}};              // right hip, antiphase
      at(4, 0).terms = {{knee, w, phase - 1.1}};              // left knee
      at(4, 0).offset = knee;                                 // knees flex one way
      at(5, 0).terms = {{knee, w, phase + M_PI - 1.1}};
      at(5, 0).offset = knee;
      at(7, 0).terms = {{0.2, w, phase + 0.4}};               // ankles
      at(8, 0).terms = {{0.2, w, phase + M_PI + 0.4}};
      at(16, 0).terms = {{arm, w, phase + M_PI}};             // arms counter-swing
      at(17, 0).terms = {{arm, w, phase}};
      at(18, 0).terms = {{0.3, w, phase + M_PI - 0.7}};
      at(18, 0).offset = 0.3;
      at(19, 0).terms = {{0.3, w, phase - 0.7}};
      at(19, 0).offset = 0.3;
      at(3, 2).terms = {{0.06, w, phase}};                    // slight spine sway
      at(9, 1).terms = {{0.08, 2.0 * w, phase}};              // torso bob (double step rate)
      break;
    }
    case SynthKind::ArmSwing: {
      double w1 = kTwoPi * 0.6 * jitter;
      double w2 = kTwoPi * 1.1 * jitter;
      double phase = rng.uniform(0.0, kTwoPi);
      at(16, 2).terms = {{0.9, w1, phase}, {0.15, w2, phase * 0.5}};  // shoulders raise/lower
      at(17, 2).terms = {{-0.9, w1, phase}, {-0.15, w2, phase * 0.5}};
      at(16, 0).terms = {{0.5, w1, phase + 1.0}};
      at(17, 0).terms = {{0.5, w1, phase + 1.0 + M_PI}};
      at(18, 1).terms = {{0.5, w2, phase}};
      at(19, 1).terms = {{-0.5, w2, phase}};
      at(12, 0).terms = {{0.1, w1, phase}};  // neck follows a little
      break;
    }
    case SynthKind::Squat: {
      double w = kTwoPi * 0.45 * jitter;
      double phase = rng.uniform(0.0, kTwoPi);
      double depth = 0.7 + 0.2 * rng.uniform();
      at(1, 0).terms = {{-depth, w, phase}};
      at(1, 0).offset = -depth;  // hips flex
      at(2, 0).terms = {{-depth, w, phase}};
      at(2, 0).offset = -depth;
      at(4, 0).terms = {{1.4 * depth, w, phase}};
      at(4, 0).offset = 1.4 * depth;  // knees flex opposite
      at(5, 0).terms = {{1.4 * depth, w, phase}};
      at(5, 0).offset = 1.4 * depth;
      at(7, 0).terms = {{-0.4 * depth, w, phase}};
      at(8, 0).terms = {{-0.4 * depth, w, phase}};
      at(16, 2).terms = {{0.5, w, phase + M_PI}};  // arms raise forward on the way down
      at(17, 2).terms = {{-0.5, w, phase + M_PI}};
      break;
    }
    case SynthKind::RandomSpline: {
      // Smooth wandering on every non-root joint; amplitudes rescaled so the
      // summed angular-acceleration bound stays below a fixed cap. The cap
      // keeps worst-case joint accelerations under ~0.04 m/frame^2 at 25 fps.
      const double angular_accel_cap = 8.0;  // rad/s^2 per joint axis
      for (int j = 1; j < k; ++j)
        for (int axis = 0; axis < 3; ++axis) {
          Oscillator& o = at(j, axis);
          int nterms = 2 + static_cast<int>(rng.below(2));
          for (int q = 0; q < nterms; ++q)
            o.terms.push_back({rng.uniform(-0.3, 0.3), kTwoPi * rng.uniform(0.3, 1.5),
                               rng.uniform(0.0, kTwoPi)});
          double bound = o.accel_bound();
          if (bound > angular_accel_cap)
            for (auto& t : o.terms) t.amplitude *= angular_accel_cap / bound;
        }
      break;
    }
  }

  PoseParams pose = identity_pose(RotationParam::AxisAngle, frames, k);
  for (int f = 0; f < frames; ++f) {
    double t = static_cast<double>(f) / fps;
    for (int j = 0; j < k; ++j) {
      double* v = pose.at(f, j);
      v[0] = at(j, 0)(t);
      v[1] = at(j, 1)(t);
      v[2] = at(j, 2)(t);
    }
  }
  std::vector<double> pos = forward_kinematics(skel, pose);

  MotionSequence seq;
  seq.fps = fps;
  seq.joints = skel.names;
  seq.root_index = 0;
  seq.positions.resize(pos.size());
  for (std::size_t i = 0; i < pos.size(); ++i) seq.positions[i] = static_cast<float>(pos[i]);
  seq.rotations.resize(pose.values.size());
  for (std::size_t i = 0; i < pose.values.size(); ++i)
    seq.rotations[i] = static_cast<float>(pose.values[i]);
  seq.validate();
  return seq;
}

// ---------------------------------------------------------------------------
// Corruption operators.

enum class CorruptionKind { GaussianPositions, UniformRotations, Occlusion };

inline CorruptionKind corruption_kind_from_string(const std::string& s) {
  if (s == "gaussian-positions") return CorruptionKind::GaussianPositions;
  if (s == "uniform-rotations") return CorruptionKind::UniformRotations;
  if (s == "occlusion") return CorruptionKind::Occlusion;
  throw ConfigError("unknown corruption kind: " + s);
}

inline std::string to_string(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::GaussianPositions: return "gaussian-positions";
    case CorruptionKind::UniformRotations: return "uniform-rotations";
    case CorruptionKind::Occlusion: return "occlusion";
  }
  return "?";
}

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::GaussianPositions;
  double magnitude = 0.0;       // meters (positions) or radians (rotations)
  double frame_fraction = 1.0;  // fraction of frames affected
  std::uint64_t seed = 0;
  // Joints affected by occlusion; empty means every non-root joint.
  std::vector<int> joint_indices;

  void validate() const {
    if (magnitude < 0) throw ConfigError("corruption magnitude must be >= 0");
    if (frame_fraction < 0 || frame_fraction > 1)
      throw ConfigError("frame fraction must lie in [0, 1]");
  }
};

// Default magnitude for uniform rotation noise when building off-manifold
// training motion: large enough to leave the plausible set, small enough to
// stay recoverable.
constexpr double kDefaultUniformRotationNoise = 0.35;

struct CorruptionResult {
  MotionSequence sequence;
  OcclusionMask mask;
};

// Per-axis Gaussian sigma such that the expected Euclidean displacement of a
// 3D sample equals `mean_displacement`. For an isotropic 3D Gaussian the
// displacement norm is chi-distributed with mean sigma * sqrt(8 / pi).
inline double gaussian_sigma_for_mean_displacement(double mean_displacement) {
  return mean_displacement * std::sqrt(M_PI / 8.0);
}

// For rotation-space corruption, passing the matching skeleton refreshes the
// stored positions by forward kinematics so the artifact stays consistent;
// without one, only the rotation track changes.
inline CorruptionResult corrupt(const MotionSequence& seq, const CorruptionSpec& spec,
                                const Skeleton* skel = nullptr) {
  seq.validate();
  spec.validate();
  const int frames = seq.frame_count();
  const int k = seq.joint_count();
  CorruptionResult out;
  out.sequence = seq;
  out.mask = OcclusionMask::none(frames, k);
  if (spec.magnitude == 0.0 && spec.kind != CorruptionKind::Occlusion) return out;

  Rng rng(spec.seed);
  const int affected = static_cast<int>(std::lround(spec.frame_fraction * frames));
  std::vector<std::size_t> frame_set =
      sample_without_replacement(rng, static_cast<std::size_t>(frames), affected);

  switch (spec.kind) {
    case CorruptionKind::GaussianPositions: {
      const double sigma = gaussian_sigma_for_mean_displacement(spec.magnitude);
      for (std::size_t f : frame_set)
        for (int j = 0; j < k; ++j) {
          float* p = out.sequence.position(static_cast<int>(f), j);
          for (int c = 0; c < 3; ++c) p[c] += static_cast<float>(sigma * rng.gaussian());
        }
      break;
    }
    case CorruptionKind::UniformRotations: {
      if (!seq.has_rotations())
        throw ValidationError("uniform-rotations corruption needs a sequence with rotations");
      for (std::size_t f : frame_set)
        for (int j = 0; j < k; ++j) {
          float* r = out.sequence.rotation(static_cast<int>(f), j);
          for (int c = 0; c < 3; ++c)
            r[c] += static_cast<float>(rng.uniform(-spec.magnitude, spec.magnitude));
        }
      if (skel) {
        if (skel->joint_count() != k)
          throw DimensionError("skeleton joint count does not match the sequence");
        PoseParams pose;
        pose.param = RotationParam::AxisAngle;
        pose.frames = frames;
        pose.joints = k;
        pose.values.assign(out.sequence.rotations.begin(), out.sequence.rotations.end());
        std::vector<double> pos = forward_kinematics(*skel, pose);
        for (std::size_t i = 0; i < pos.size(); ++i)
          out.sequence.positions[i] = static_cast<float>(pos[i]);
      }
      break;
    }
    case CorruptionKind::Occlusion: {
      std::vector<int> joints = spec.joint_indices;
      if (joints.empty())
        for (int j = 0; j < k; ++j)
          if (j != seq.root_index) joints.push_back(j);
      for (std::size_t f : frame_set)
        for (int j : joints) {
          if (j < 0 || j >= k) throw ConfigError("occlusion joint index out of range");
          out.mask.set(static_cast<int>(f), j, true);
          if (seq.has_rotations()) {
            float* r = out.sequence.rotation(static_cast<int>(f), j);
            r[0] = r[1] = r[2] = 0.0f;
          }
          // The observation is gone either way; the stored value must not
          // leak it.
          float* p = out.sequence.position(static_cast<int>(f), j);
          p[0] = p[1] = p[2] = 0.0f;
        }
      break;
    }
  }
  return out;
}

}  // namespace moprior
