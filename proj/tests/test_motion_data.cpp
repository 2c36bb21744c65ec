#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "moprior/bvh.hpp"
#include "moprior/motion.hpp"
#include "moprior/rng.hpp"
#include "moprior/synth.hpp"

using namespace moprior;

namespace {

std::string tmp_path(const std::string& name) {
  return std::string(::testing::TempDir()) + name;
}

std::string fixture(const std::string& name) {
  return std::string(MOPRIOR_TEST_DATA_DIR) + "/" + name;
}

MotionSequence random_walk_sequence(int frames, int joints, std::uint64_t seed) {
  Rng rng(seed);
  MotionSequence seq;
  seq.fps = 30;
  for (int j = 0; j < joints; ++j) seq.joints.push_back("j" + std::to_string(j));
  seq.positions.assign(static_cast<std::size_t>(frames) * joints * 3, 0.0f);
  for (int f = 1; f < frames; ++f)
    for (int j = 0; j < joints; ++j)
      for (int c = 0; c < 3; ++c)
        seq.position(f, j)[c] =
            seq.position(f - 1, j)[c] + static_cast<float>(0.01 * rng.gaussian());
  return seq;
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::vector<char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

// --- BVH -------------------------------------------------------------------

TEST(Bvh, SingleJointZeroRotationsGivesRestOffset) {
  std::string path = tmp_path("single.bvh");
  std::ofstream out(path);
  out << "HIERARCHY\nROOT only\n{\n  OFFSET 0.5 1.5 -0.25\n"
      << "  CHANNELS 3 Zrotation Xrotation Yrotation\n"
      << "  End Site\n  {\n    OFFSET 0.0 0.5 0.0\n  }\n}\n"
      << "MOTION\nFrames: 3\nFrame Time: 0.04\n"
      << "0 0 0\n0 0 0\n0 0 0\n";
  out.close();
  MotionSequence seq = read_bvh(path);
  EXPECT_EQ(seq.fps, 25);
  EXPECT_EQ(seq.frame_count(), 3);
  ASSERT_EQ(seq.joint_count(), 2);  // root + end site
  for (int f = 0; f < 3; ++f) {
    const float* p = seq.position(f, 0);
    EXPECT_FLOAT_EQ(p[0], 0.5f);
    EXPECT_FLOAT_EQ(p[1], 1.5f);
    EXPECT_FLOAT_EQ(p[2], -0.25f);
    const float* e = seq.position(f, 1);
    EXPECT_FLOAT_EQ(e[1], 2.0f);
  }
}

TEST(Bvh, QuarterTurnOnMiddleJoint) {
  // 90 degrees about Z on joint 1; its child carries offset (1,0,0), which
  // must land at (0,1,0) relative to joint 1.
  std::string path = tmp_path("chain.bvh");
  std::ofstream out(path);
  out << "HIERARCHY\nROOT base\n{\n  OFFSET 0 0 0\n"
      << "  CHANNELS 3 Zrotation Xrotation Yrotation\n"
      << "  JOINT mid\n  {\n    OFFSET 0 1 0\n"
      << "    CHANNELS 3 Zrotation Xrotation Yrotation\n"
      << "    End Site\n    {\n      OFFSET 1 0 0\n    }\n  }\n}\n"
      << "MOTION\nFrames: 1\nFrame Time: 0.033333\n"
      << "0 0 0 90 0 0\n";
  out.close();
  MotionSequence seq = read_bvh(path);
  ASSERT_EQ(seq.joint_count(), 3);
  const float* mid = seq.position(0, 1);
  const float* tip = seq.position(0, 2);
  EXPECT_NEAR(tip[0] - mid[0], 0.0, 1e-6);
  EXPECT_NEAR(tip[1] - mid[1], 1.0, 1e-6);
  EXPECT_NEAR(tip[2] - mid[2], 0.0, 1e-6);
}

TEST(Bvh, FixtureRoundTripsThroughNativeFormat) {
  MotionSequence seq = read_bvh(fixture("arm_swing_60.bvh"));
  EXPECT_EQ(seq.frame_count(), 60);
  EXPECT_EQ(seq.fps, 30);
  std::string native = tmp_path("arm_swing.mseq");
  write_native(seq, native);
  MotionSequence back = read_native(native);
  EXPECT_EQ(back.positions, seq.positions);
  EXPECT_EQ(back.rotations, seq.rotations);
  EXPECT_EQ(back.joints, seq.joints);
  EXPECT_EQ(back.fps, seq.fps);
}

TEST(Bvh, RejectsUnsupportedRotationOrder) {
  std::string path = tmp_path("badorder.bvh");
  std::ofstream out(path);
  out << "HIERARCHY\nROOT r\n{\n  OFFSET 0 0 0\n"
      << "  CHANNELS 3 Xrotation Yrotation Zrotation\n"
      << "  End Site\n  {\n    OFFSET 0 1 0\n  }\n}\n"
      << "MOTION\nFrames: 1\nFrame Time: 0.04\n0 0 0\n";
  out.close();
  EXPECT_THROW(read_bvh(path), ParseError);
}

TEST(Bvh, ParseErrorCarriesLineNumber) {
  std::string path = tmp_path("truncated.bvh");
  std::ofstream out(path);
  out << "HIERARCHY\nROOT r\n{\n  OFFSET 0 0 zero\n";
  out.close();
  try {
    read_bvh(path);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4);
  }
}

// --- native format -----------------------------------------------------------

TEST(NativeFormat, RandomWalkRoundTripsByteIdentical) {
  MotionSequence seq = random_walk_sequence(1000, 5, 77);
  std::string a = tmp_path("walk_a.mseq");
  std::string b = tmp_path("walk_b.mseq");
  write_native(seq, a);
  MotionSequence back = read_native(a);
  write_native(back, b);
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_EQ(back.positions, seq.positions);
}

TEST(NativeFormat, RotationlessRoundTrip) {
  MotionSequence seq = random_walk_sequence(12, 3, 5);
  std::string path = tmp_path("noro.mseq");
  write_native(seq, path);
  MotionSequence back = read_native(path);
  EXPECT_FALSE(back.has_rotations());
  EXPECT_EQ(back.positions, seq.positions);
}

TEST(NativeFormat, RefusesNonFiniteCoordinates) {
  MotionSequence seq = random_walk_sequence(4, 2, 9);
  seq.position(2, 1)[0] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(write_native(seq, tmp_path("nan.mseq")), ValidationError);
}

TEST(NativeFormat, WrongTypeRejected) {
  MotionSequence seq = random_walk_sequence(4, 2, 9);
  std::string path = tmp_path("typed.mseq");
  write_native(seq, path);
  EXPECT_THROW(container::read(path, "zero_level"), VersionError);
}

// --- resample ---------------------------------------------------------------

TEST(Resample, DecimationKeepsEveryFourthFrame) {
  MotionSequence seq = random_walk_sequence(100, 3, 21);
  seq.fps = 100;
  MotionSequence out = resample(seq, 25);
  EXPECT_EQ(out.fps, 25);
  EXPECT_EQ(out.frame_count(), 25);
  for (int f = 0; f < 25; ++f)
    for (int j = 0; j < 3; ++j)
      for (int c = 0; c < 3; ++c)
        EXPECT_EQ(out.position(f, j)[c], seq.position(4 * f, j)[c]);
}

TEST(Resample, IdentityWhenTargetEqualsSource) {
  MotionSequence seq = random_walk_sequence(40, 3, 22);
  MotionSequence out = resample(seq, seq.fps);
  EXPECT_EQ(out.positions, seq.positions);
}

TEST(Resample, SinusoidDecimationMatchesAnalyticSamples) {
  // Stored samples are exact copies, so the decimated track equals the
  // analytic signal evaluated at the kept timestamps.
  MotionSequence seq;
  seq.fps = 120;
  seq.joints = {"a", "b"};
  const int frames = 120;
  seq.positions.resize(static_cast<std::size_t>(frames) * 2 * 3);
  auto value = [](int frame, int joint, int axis) {
    double t = frame / 120.0;
    return static_cast<float>(std::sin(2 * M_PI * (joint + 1) * t + axis));
  };
  for (int f = 0; f < frames; ++f)
    for (int j = 0; j < 2; ++j)
      for (int c = 0; c < 3; ++c) seq.position(f, j)[c] = value(f, j, c);
  MotionSequence out = resample(seq, 24);
  ASSERT_EQ(out.frame_count(), 24);
  for (int f = 0; f < 24; ++f)
    for (int j = 0; j < 2; ++j)
      for (int c = 0; c < 3; ++c)
        EXPECT_NEAR(out.position(f, j)[c], value(5 * f, j, c), 1e-12);
}

TEST(Resample, NonIntegerRatioNeedsInterpolationFlag) {
  MotionSequence seq = random_walk_sequence(30, 2, 3);
  seq.fps = 30;
  EXPECT_THROW(resample(seq, 24), ConfigError);
  MotionSequence out = resample(seq, 24, /*allow_interpolation=*/true);
  EXPECT_EQ(out.fps, 24);
  EXPECT_EQ(out.frame_count(), 24);
}

// --- synthesis ----------------------------------------------------------------

TEST(Synthesize, BoneLengthsConstant) {
  Skeleton skel = default_skeleton();
  MotionSequence seq = synthesize_motion(SynthKind::WalkCycle, 64, 25, 3);
  for (int f = 0; f < seq.frame_count(); ++f)
    for (int j = 1; j < skel.joint_count(); ++j) {
      const float* a = seq.position(f, j);
      const float* b = seq.position(f, skel.parents[j]);
      double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
      double len = std::sqrt(dx * dx + dy * dy + dz * dz);
      double rest = skel.offsets[j].norm();
      EXPECT_NEAR(len / rest, 1.0, 1e-6) << skel.names[j];
    }
}

TEST(Synthesize, DeterministicPerSeed) {
  for (SynthKind kind : {SynthKind::WalkCycle, SynthKind::ArmSwing, SynthKind::Squat,
                         SynthKind::RandomSpline}) {
    MotionSequence a = synthesize_motion(kind, 32, 25, 42);
    MotionSequence b = synthesize_motion(kind, 32, 25, 42);
    EXPECT_EQ(a.positions, b.positions);
    EXPECT_EQ(a.rotations, b.rotations);
    MotionSequence c = synthesize_motion(kind, 32, 25, 43);
    EXPECT_NE(a.positions, c.positions);
  }
}

TEST(Synthesize, RandomSplineAccelerationBounded) {
  // Numeric second differences stay under a loose bound at 25 fps.
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
    MotionSequence seq = synthesize_motion(SynthKind::RandomSpline, 16, 25, seed);
    double max_accel = 0.0;
    for (int f = 1; f + 1 < seq.frame_count(); ++f)
      for (int j = 0; j < seq.joint_count(); ++j) {
        double a2 = 0.0;
        for (int c = 0; c < 3; ++c) {
          double a = seq.position(f + 1, j)[c] - 2.0 * seq.position(f, j)[c] +
                     seq.position(f - 1, j)[c];
          a2 += a * a;
        }
        max_accel = std::max(max_accel, std::sqrt(a2));
      }
    EXPECT_LT(max_accel, 0.05) << "seed " << seed;
  }
}

TEST(Synthesize, RootPinnedAtOrigin) {
  MotionSequence seq = synthesize_motion(SynthKind::Squat, 16, 25, 5);
  for (int f = 0; f < seq.frame_count(); ++f)
    for (int c = 0; c < 3; ++c) EXPECT_EQ(seq.position(f, 0)[c], 0.0f);
}

TEST(Synthesize, RejectsTooFewFrames) {
  EXPECT_THROW(synthesize_motion(SynthKind::WalkCycle, 4, 25, 1), ConfigError);
}

// --- corruption ----------------------------------------------------------------

TEST(Corrupt, ZeroMagnitudeIsIdentity) {
  MotionSequence seq = synthesize_motion(SynthKind::WalkCycle, 30, 25, 8);
  CorruptionSpec spec;
  spec.kind = CorruptionKind::GaussianPositions;
  spec.magnitude = 0.0;
  CorruptionResult r = corrupt(seq, spec);
  EXPECT_EQ(r.sequence.positions, seq.positions);
  EXPECT_EQ(r.mask.count(), 0u);
}

TEST(Corrupt, GaussianDisplacementCalibration) {
  // The per-axis sigma is calibrated so the mean Euclidean displacement
  // matches the requested magnitude (0.087 m here) within 5%.
  MotionSequence seq = synthesize_motion(SynthKind::WalkCycle, 60, 25, 9);
  CorruptionSpec spec;
  spec.kind = CorruptionKind::GaussianPositions;
  spec.magnitude = 0.087;
  spec.seed = 4;
  CorruptionResult r = corrupt(seq, spec);
  double total = 0.0;
  int count = 0;
  for (int f = 0; f < seq.frame_count(); ++f)
    for (int j = 0; j < seq.joint_count(); ++j) {
      const float* a = r.sequence.position(f, j);
      const float* b = seq.position(f, j);
      double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
      total += std::sqrt(dx * dx + dy * dy + dz * dz);
      ++count;
    }
  ASSERT_GE(count, 1000);
  EXPECT_NEAR(total / count, 0.087, 0.05 * 0.087);
}

TEST(Corrupt, OcclusionMasksExactFrameCount) {
  MotionSequence seq = synthesize_motion(SynthKind::WalkCycle, 60, 25, 10);
  CorruptionSpec spec;
  spec.kind = CorruptionKind::Occlusion;
  spec.frame_fraction = 1.0 / 3.0;
  spec.seed = 11;
  spec.joint_indices = {18, 20, 22};
  CorruptionResult r = corrupt(seq, spec);
  std::set<int> masked_frames;
  for (int f = 0; f < 60; ++f)
    for (int j : {18, 20, 22})
      if (r.mask.at(f, j)) masked_frames.insert(f);
  EXPECT_EQ(masked_frames.size(), 20u);
  EXPECT_EQ(r.mask.count(), 60u);  // 20 frames x 3 joints
  // Rotations of masked entries are zeroed.
  for (int f : masked_frames)
    for (int j : {18, 20, 22})
      for (int c = 0; c < 3; ++c) EXPECT_EQ(r.sequence.rotation(f, j)[c], 0.0f);
}

TEST(Corrupt, DeterministicPerSeed) {
  MotionSequence seq = synthesize_motion(SynthKind::ArmSwing, 40, 25, 12);
  CorruptionSpec spec;
  spec.kind = CorruptionKind::UniformRotations;
  spec.magnitude = kDefaultUniformRotationNoise;
  spec.frame_fraction = 0.5;
  spec.seed = 1234;
  CorruptionResult a = corrupt(seq, spec);
  CorruptionResult b = corrupt(seq, spec);
  EXPECT_EQ(a.sequence.rotations, b.sequence.rotations);
  EXPECT_EQ(a.sequence.positions, b.sequence.positions);
}

TEST(Corrupt, UniformRotationsWithFkRefreshMovesPositions) {
  Skeleton skel = default_skeleton();
  MotionSequence seq = synthesize_motion(SynthKind::WalkCycle, 30, 25, 13);
  CorruptionSpec spec;
  spec.kind = CorruptionKind::UniformRotations;
  spec.magnitude = 0.3;
  spec.seed = 5;
  CorruptionResult without = corrupt(seq, spec);
  EXPECT_EQ(without.sequence.positions, seq.positions);  // rotations only
  CorruptionResult with_fk = corrupt(seq, spec, &skel);
  EXPECT_EQ(with_fk.sequence.rotations, without.sequence.rotations);
  EXPECT_NE(with_fk.sequence.positions, seq.positions);
}

TEST(Corrupt, OcclusionWithoutRotationsUsesPositionVariant) {
  MotionSequence seq = random_walk_sequence(30, 4, 14);
  CorruptionSpec spec;
  spec.kind = CorruptionKind::Occlusion;
  spec.frame_fraction = 0.5;
  spec.seed = 6;
  CorruptionResult r = corrupt(seq, spec);
  EXPECT_GT(r.mask.count(), 0u);
  for (int f = 0; f < 30; ++f)
    for (int j = 0; j < 4; ++j)
      if (r.mask.at(f, j))
        for (int c = 0; c < 3; ++c) EXPECT_EQ(r.sequence.position(f, j)[c], 0.0f);
}

// --- segments -------------------------------------------------------------------

TEST(Segments, ShorterThanMinimumRejected) {
  MotionSequence seq = random_walk_sequence(20, 3, 15);
  EXPECT_THROW(extract_segment(seq, 0, 4), ValidationError);
  EXPECT_THROW(extract_segment(seq, 18, 5), DimensionError);
  MotionSegment seg = extract_segment(seq, 3, 8);
  EXPECT_EQ(seg.length, 8);
  EXPECT_EQ(seg.source_offset, 3);
}

TEST(Masks, FileRoundTrip) {
  OcclusionMask m = OcclusionMask::none(7, 3);
  m.set(2, 1, true);
  m.set(6, 0, true);
  std::string path = tmp_path("mask.bin");
  write_mask(m, path);
  OcclusionMask back = read_mask(path);
  EXPECT_EQ(back.missing, m.missing);
  EXPECT_EQ(back.frames, 7);
  EXPECT_EQ(back.joints, 3);
}
