#include <gtest/gtest.h>

#include <cmath>

#include "moprior/manifold.hpp"
#include "moprior/rng.hpp"
#include "moprior/synth.hpp"

using namespace moprior;

namespace {

MotionSegment constant_segment(int length, int joints, double value) {
  MotionSegment seg;
  seg.length = length;
  seg.joint_count = joints;
  seg.positions.assign(static_cast<std::size_t>(length) * joints * 3, value);
  return seg;
}

AccelVector random_accel(Rng& rng, int dim, double scale = 1.0) {
  AccelVector a;
  a.values.resize(dim);
  for (double& v : a.values) v = rng.uniform(-scale, scale);
  return a;
}

AccelVector constant_accel(int dim, double value) {
  AccelVector a;
  a.values.assign(dim, value);
  return a;
}

ZeroLevelSet tiny_zero_level(const std::vector<std::vector<double>>& points) {
  ZeroLevelSet zl;
  zl.dim = static_cast<int>(points.front().size());
  zl.segment_length = zl.dim / 3 + 2;
  for (const auto& p : points) zl.points.insert(zl.points.end(), p.begin(), p.end());
  zl.stats.mean.assign(zl.dim, 0.0);
  zl.stats.std.assign(zl.dim, 1.0);
  return zl;
}

}  // namespace

// --- acceleration extraction ---------------------------------------------------

TEST(Acceleration, ConstantPositionsGiveZero) {
  MotionSegment seg = constant_segment(16, 4, 0.7);
  AccelVector a = acceleration(seg, 2);
  EXPECT_EQ(a.dim(), 42);
  for (double v : a.values) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Acceleration, LinearTrajectoryGivesZero) {
  MotionSegment seg = constant_segment(10, 3, 0.0);
  for (int t = 0; t < 10; ++t)
    for (int j = 0; j < 3; ++j)
      for (int c = 0; c < 3; ++c) seg.position(t, j)[c] = 0.3 * t * (c + 1);
  AccelVector a = acceleration(seg, 1);
  for (double v : a.values) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Acceleration, QuadraticGivesTwiceTheCoefficient) {
  const double c2 = 0.05;
  MotionSegment seg = constant_segment(12, 2, 0.0);
  for (int t = 0; t < 12; ++t)
    for (int c = 0; c < 3; ++c) seg.position(t, 1)[c] = c2 * t * t;
  AccelVector a = acceleration(seg, 1);
  EXPECT_EQ(a.dim(), 30);
  for (double v : a.values) EXPECT_NEAR(v, 2.0 * c2, 1e-12);
}

TEST(Acceleration, SixteenFrameSegmentHasDim42) {
  // For T = 16 every per-joint vector has 42 components; a full-body stack
  // of the default skeleton would be 24 * 42 = 1008, which this library
  // never forms.
  MotionSegment seg = constant_segment(16, 24, 0.0);
  EXPECT_EQ(acceleration(seg, 5).dim(), 42);
  EXPECT_EQ(24 * acceleration(seg, 5).dim(), 1008);
}

// --- the L1 distance -----------------------------------------------------------

TEST(AccelDistance, HandValues) {
  EXPECT_DOUBLE_EQ(accel_distance(constant_accel(42, 0.0), constant_accel(42, 1.0)), 42.0);
  AccelVector a = constant_accel(12, 0.25);
  EXPECT_DOUBLE_EQ(accel_distance(a, a), 0.0);
}

TEST(AccelDistance, DimensionMismatchThrows) {
  EXPECT_THROW(accel_distance(constant_accel(42, 0.0), constant_accel(30, 0.0)), DimensionError);
}

TEST(AccelDistance, MetricAxiomsOnRandomTriples) {
  Rng rng(31);
  for (int i = 0; i < 10000; ++i) {
    AccelVector a = random_accel(rng, 12), b = random_accel(rng, 12), c = random_accel(rng, 12);
    double dab = accel_distance(a, b);
    double dba = accel_distance(b, a);
    double dac = accel_distance(a, c);
    double dcb = accel_distance(c, b);
    EXPECT_GE(dab, 0.0);
    EXPECT_DOUBLE_EQ(dab, dba);
    EXPECT_LE(dab, dac + dcb + 1e-12);
  }
  AccelVector a = random_accel(rng, 12);
  EXPECT_DOUBLE_EQ(accel_distance(a, a), 0.0);
}

// --- zero-level construction ------------------------------------------------------

TEST(ZeroLevel, SingleWindowSequenceGivesOnePoint) {
  MotionSequence seq = synthesize_motion(SynthKind::WalkCycle, 16, 25, 1);
  ZeroLevelSet zl = build_zero_level({seq}, 16, 5, /*stride=*/3, /*cap=*/100, /*seed=*/2);
  EXPECT_EQ(zl.count(), 1);
  EXPECT_EQ(zl.dim, 42);
}

TEST(ZeroLevel, CapIsExact) {
  std::vector<MotionSequence> seqs;
  for (int i = 0; i < 3; ++i) seqs.push_back(synthesize_motion(SynthKind::WalkCycle, 80, 25, 10 + i));
  ZeroLevelSet zl = build_zero_level(seqs, 16, 7, 1, 100, 3);
  EXPECT_EQ(zl.count(), 100);
}

TEST(ZeroLevel, StatsMatchNaiveTwoPass) {
  std::vector<MotionSequence> seqs{synthesize_motion(SynthKind::ArmSwing, 60, 25, 4)};
  ZeroLevelSet zl = build_zero_level(seqs, 16, 18, 1, 1000, 5);
  const int n = zl.count();
  ASSERT_GT(n, 5);
  for (int d = 0; d < zl.dim; ++d) {
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += zl.point(i)[d];
    mean /= n;
    double var = 0.0;
    for (int i = 0; i < n; ++i) var += (zl.point(i)[d] - mean) * (zl.point(i)[d] - mean);
    EXPECT_NEAR(zl.stats.mean[d], mean, 1e-12);
    EXPECT_NEAR(zl.stats.std[d], std::sqrt(var / n), 1e-12);
  }
}

TEST(ZeroLevel, ShortSequenceRejected) {
  MotionSequence seq = synthesize_motion(SynthKind::WalkCycle, 12, 25, 1);
  EXPECT_THROW(build_zero_level({seq}, 16, 4, 1, 10, 1), ValidationError);
}

TEST(ZeroLevel, SerializationRoundTrip) {
  std::vector<MotionSequence> seqs{synthesize_motion(SynthKind::Squat, 40, 25, 6)};
  ZeroLevelSet zl = build_zero_level(seqs, 16, 9, 1, 50, 7);
  std::string path = std::string(::testing::TempDir()) + "zl.bin";
  write_zero_level({zl}, path);
  std::vector<ZeroLevelSet> back = read_zero_level(path);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].points, zl.points);
  EXPECT_EQ(back[0].stats.mean, zl.stats.mean);
  EXPECT_EQ(back[0].joint_index, 9);
  EXPECT_EQ(back[0].segment_length, 16);
}

// --- KNN labeling ------------------------------------------------------------------

TEST(KnnLabel, SelfDistanceIsZero) {
  std::vector<MotionSequence> seqs{synthesize_motion(SynthKind::WalkCycle, 40, 25, 8)};
  ZeroLevelSet zl = build_zero_level(seqs, 16, 10, 1, 50, 9);
  AccelVector q;
  q.values.assign(zl.point(3), zl.point(3) + zl.dim);
  EXPECT_DOUBLE_EQ(knn_label(q, zl, 1), 0.0);
}

TEST(KnnLabel, HandComputedTwoPointExample) {
  // Stored points: the zero vector and the all-ones vector in dim 42. The
  // all-halves query sits at L1 distance 21 from both, so the 2-NN mean is
  // exactly 21.
  ZeroLevelSet zl = tiny_zero_level({std::vector<double>(42, 0.0), std::vector<double>(42, 1.0)});
  AccelVector q = constant_accel(42, 0.5);
  EXPECT_DOUBLE_EQ(knn_label(q, zl, 2), 21.0);
}

TEST(KnnLabel, KLargerThanSetThrows) {
  ZeroLevelSet zl = tiny_zero_level({std::vector<double>(6, 0.0)});
  AccelVector q = constant_accel(6, 0.1);
  EXPECT_THROW(knn_label(q, zl, 2), DimensionError);
}

TEST(KnnLabel, PermutationInvariant) {
  Rng rng(41);
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < 40; ++i) {
    std::vector<double> p(12);
    for (double& v : p) v = rng.uniform(-1, 1);
    pts.push_back(p);
  }
  ZeroLevelSet a = tiny_zero_level(pts);
  std::reverse(pts.begin(), pts.end());
  ZeroLevelSet b = tiny_zero_level(pts);
  for (int i = 0; i < 50; ++i) {
    AccelVector q = random_accel(rng, 12);
    EXPECT_DOUBLE_EQ(knn_label(q, a, 5), knn_label(q, b, 5));
  }
}

TEST(KnnLabel, MonotoneAlongARay) {
  // Walking away from a stored point along a fixed direction cannot bring
  // the k-NN mean down once past the local neighborhood.
  Rng rng(43);
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < 100; ++i) {
    std::vector<double> p(12);
    for (double& v : p) v = rng.uniform(-0.5, 0.5);
    pts.push_back(p);
  }
  ZeroLevelSet zl = tiny_zero_level(pts);
  AccelVector base;
  base.values = pts[17];
  AccelVector dir = random_accel(rng, 12);
  double norm = 0;
  for (double v : dir.values) norm += std::abs(v);
  for (double& v : dir.values) v /= norm;

  double prev = -1.0;
  for (double t = 2.0; t < 30.0; t += 1.0) {
    AccelVector q = base;
    for (int d = 0; d < 12; ++d) q.values[d] += t * dir.values[d];
    double lab = knn_label(q, zl, 5);
    EXPECT_GE(lab, prev - 1e-9) << "t=" << t;
    prev = lab;
  }
}

TEST(VpTree, MatchesExhaustiveScanExactly) {
  Rng rng(47);
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < 500; ++i) {
    std::vector<double> p(42);
    for (double& v : p) v = rng.uniform(-1, 1);
    pts.push_back(p);
  }
  // Insert exact duplicates to force distance ties.
  pts.push_back(pts[3]);
  pts.push_back(pts[3]);
  ZeroLevelSet zl = tiny_zero_level(pts);
  VpTree tree(zl);
  for (int i = 0; i < 1000; ++i) {
    AccelVector q = random_accel(rng, 42, i % 7 == 0 ? 0.05 : 1.5);
    for (int k : {1, 5, 13}) {
      auto scan = knn_scan(q, zl, k);
      auto fast = tree.search(q, k);
      ASSERT_EQ(scan.size(), fast.size());
      for (std::size_t h = 0; h < scan.size(); ++h) {
        EXPECT_EQ(scan[h].index, fast[h].index);
        EXPECT_EQ(scan[h].dist, fast[h].dist);
      }
      EXPECT_EQ(knn_label(q, zl, k), knn_label(q, tree, k));
    }
  }
}

TEST(LabelDataset, MatchesPerQueryLabeling) {
  Rng rng(53);
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < 64; ++i) {
    std::vector<double> p(12);
    for (double& v : p) v = rng.uniform(-1, 1);
    pts.push_back(p);
  }
  ZeroLevelSet zl = tiny_zero_level(pts);
  std::vector<AccelVector> queries;
  for (int i = 0; i < 40; ++i) queries.push_back(random_accel(rng, 12));
  std::vector<LabeledSample> batch = label_dataset(queries, zl, 5);
  ASSERT_EQ(batch.size(), queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    double d = knn_label(queries[i], zl, 5);
    EXPECT_DOUBLE_EQ(batch[i].d, d);
    EXPECT_DOUBLE_EQ(batch[i].target, std::log1p(d));
  }
}

TEST(LabelDataset, ZeroLevelQueriesGetZeroTargets) {
  ZeroLevelSet zl = tiny_zero_level({std::vector<double>(9, 0.1), std::vector<double>(9, 0.4),
                                     std::vector<double>(9, -0.3)});
  std::vector<AccelVector> queries;
  for (int i = 0; i < zl.count(); ++i) {
    AccelVector q;
    q.values.assign(zl.point(i), zl.point(i) + zl.dim);
    queries.push_back(q);
  }
  for (const LabeledSample& s : label_dataset(queries, zl, 1)) {
    EXPECT_DOUBLE_EQ(s.d, 0.0);
    EXPECT_DOUBLE_EQ(s.target, 0.0);
  }
}

TEST(LabeledSample, LogIdentity) {
  LabeledSample s = make_labeled(constant_accel(6, 0.0), std::exp(1.0) - 1.0);
  EXPECT_NEAR(s.target, 1.0, 1e-15);
}
