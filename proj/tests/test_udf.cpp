#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "controlled_manifold.hpp"
#include "moprior/manifold.hpp"
#include "moprior/rng.hpp"
#include "moprior/udf.hpp"

using namespace moprior;

namespace {

JointUdf make_net(const std::vector<int>& dims, std::uint64_t seed, double weight_scale = 1.0) {
  Rng rng(seed);
  JointUdf net;
  net.joint_index = 4;
  net.segment_length = dims.front() / 3 + 2;
  net.params = MlpParams::init(dims, rng);
  for (MatX& w : net.params.weights) w *= weight_scale;
  for (VecX& b : net.params.biases)
    for (int i = 0; i < b.size(); ++i) b(i) = 0.1 * rng.gaussian();
  net.stats.mean.assign(dims.front(), 0.0);
  net.stats.std.assign(dims.front(), 1.0);
  return net;
}

AccelVector random_accel(Rng& rng, int dim, double scale = 1.0) {
  AccelVector a;
  a.values.resize(dim);
  for (double& v : a.values) v = rng.uniform(-scale, scale);
  return a;
}

MatX to_row(const AccelVector& a) {
  MatX r(1, a.dim());
  for (int i = 0; i < a.dim(); ++i) r(0, i) = a.values[i];
  return r;
}

// Flattened view over all parameters, for finite differencing.
double* param_ptr(MlpParams& p, int flat_index) {
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    int wn = static_cast<int>(p.weights[l].size());
    if (flat_index < wn) return p.weights[l].data() + flat_index;
    flat_index -= wn;
    int bn = static_cast<int>(p.biases[l].size());
    if (flat_index < bn) return p.biases[l].data() + flat_index;
    flat_index -= bn;
  }
  return nullptr;
}

int param_count(const MlpParams& p) {
  int n = 0;
  for (std::size_t l = 0; l < p.weights.size(); ++l)
    n += static_cast<int>(p.weights[l].size() + p.biases[l].size());
  return n;
}

double flat_grad(const MlpParams& g, int flat_index) {
  MlpParams& mut = const_cast<MlpParams&>(g);
  return *param_ptr(mut, flat_index);
}

}  // namespace

TEST(UdfForward, NonNegativeOnRandomInputs) {
  Rng rng(1);
  JointUdf net = make_net({12, 16, 16, 1}, 2);
  for (int i = 0; i < 500; ++i) {
    double f = udf_forward(net, random_accel(rng, 12, 20.0));
    EXPECT_TRUE(std::isfinite(f));
    EXPECT_GE(f, 0.0);
  }
}

TEST(UdfForward, NormalizationAppliedExactlyOnce) {
  Rng rng(3);
  JointUdf net = make_net({9, 8, 1}, 4);
  for (int i = 0; i < 9; ++i) {
    net.stats.mean[i] = rng.uniform(-1, 1);
    net.stats.std[i] = rng.uniform(0.5, 2.0);
  }
  AccelVector raw = random_accel(rng, 9);
  AccelVector pre;
  pre.values.resize(9);
  for (int i = 0; i < 9; ++i)
    pre.values[i] = (raw.values[i] - net.stats.mean[i]) / net.input_scale();
  EXPECT_NEAR(udf_forward(net, raw), udf_forward_prenormalized(net, pre), 1e-14);
}

TEST(UdfForward, DimensionMismatchThrows) {
  JointUdf net = make_net({12, 8, 1}, 5);
  Rng rng(6);
  EXPECT_THROW(udf_forward(net, random_accel(rng, 9)), DimensionError);
}

TEST(UdfInputGradient, ZeroWeightNetHasZeroGradient) {
  JointUdf net = make_net({6, 4, 1}, 7, 0.0);
  for (MatX& w : net.params.weights) w.setZero();
  Rng rng(8);
  std::vector<double> g = udf_input_gradient(net, random_accel(rng, 6));
  ASSERT_EQ(g.size(), 6u);
  for (double v : g) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(UdfInputGradient, MatchesFiniteDifferences) {
  Rng rng(9);
  JointUdf net = make_net({12, 10, 10, 1}, 10);
  for (int i = 0; i < 12; ++i) {
    net.stats.mean[i] = rng.uniform(-0.5, 0.5);
    net.stats.std[i] = rng.uniform(0.5, 2.0);
  }
  const double h = 1e-5;
  for (int trial = 0; trial < 20; ++trial) {
    AccelVector x = random_accel(rng, 12);
    std::vector<double> g = udf_input_gradient(net, x);
    for (int i = 0; i < 12; ++i) {
      AccelVector plus = x, minus = x;
      plus.values[i] += h;
      minus.values[i] -= h;
      double fd = (udf_forward(net, plus) - udf_forward(net, minus)) / (2 * h);
      double denom = std::max(1e-6, std::abs(fd));
      EXPECT_LT(std::abs(g[i] - fd) / denom, 1e-4) << "component " << i;
    }
  }
}

TEST(Losses, PerfectPredictionIsZeroAndHandValue) {
  // A constant-output network: zero weights, output bias solving
  // softplus(b) = 1 so the field is exactly 1 everywhere.
  JointUdf net = make_net({6, 4, 1}, 11, 0.0);
  for (MatX& w : net.params.weights) w.setZero();
  for (VecX& b : net.params.biases) b.setZero();
  net.params.biases.back()(0) = std::log(std::exp(1.0) - 1.0);
  Rng rng(12);
  AccelVector x = random_accel(rng, 6);
  EXPECT_NEAR(udf_forward(net, x), 1.0, 1e-12);
  // Perfect target: loss 0. Target 0 (d = 0): loss 1.
  LabeledSample perfect = make_labeled(x, std::exp(1.0) - 1.0);
  EXPECT_NEAR(loss_udf(net, perfect), 0.0, 1e-12);
  LabeledSample zero = make_labeled(x, 0.0);
  EXPECT_NEAR(loss_udf(net, zero), 1.0, 1e-12);
}

TEST(Losses, UdfLossInvariantToTargetReencoding) {
  Rng rng(13);
  JointUdf net = make_net({6, 8, 1}, 14);
  AccelVector x = random_accel(rng, 6);
  double d = 0.73;
  LabeledSample direct = make_labeled(x, d);
  LabeledSample reencoded = make_labeled(x, std::exp(direct.target) - 1.0);
  EXPECT_NEAR(loss_udf(net, direct), loss_udf(net, reencoded), 1e-12);
}

TEST(Losses, EikonalZeroGradientPointGivesOne) {
  JointUdf net = make_net({6, 4, 1}, 15, 0.0);
  for (MatX& w : net.params.weights) w.setZero();
  Rng rng(16);
  EXPECT_DOUBLE_EQ(loss_eikonal(net, random_accel(rng, 6)), 1.0);
}

TEST(Losses, EikonalRecomposesFromInputGradient) {
  Rng rng(17);
  JointUdf net = make_net({9, 12, 1}, 18);
  for (int trial = 0; trial < 30; ++trial) {
    AccelVector x = random_accel(rng, 9);
    std::vector<double> g = udf_input_gradient(net, x);
    double n2 = 0;
    for (double v : g) n2 += v * v;
    double expect = (std::sqrt(n2) - 1.0) * (std::sqrt(n2) - 1.0);
    EXPECT_NEAR(loss_eikonal(net, x), expect, 1e-12);
  }
}

// Parameter gradients of the combined loss against central finite
// differences on a tiny network. This exercises the nested differentiation
// of the unit-gradient term.
TEST(LossGradients, CombinedLossMatchesFiniteDifferences) {
  Rng rng(19);
  const std::vector<int> dims{6, 2, 2, 1};
  JointUdf net = make_net(dims, 20);
  for (int i = 0; i < 6; ++i) {
    net.stats.mean[i] = rng.uniform(-0.3, 0.3);
    net.stats.std[i] = rng.uniform(0.7, 1.4);
  }
  const double lambda_udf = 1.0, lambda_eik = 0.1;
  const int batch = 5;
  MatX x(batch, 6);
  VecX targets(batch);
  for (int i = 0; i < batch; ++i) {
    for (int d = 0; d < 6; ++d) x(i, d) = rng.uniform(-1, 1);
    targets(i) = rng.uniform(0.0, 1.5);
  }

  MlpParams grad = net.params.zeros_like();
  accumulate_udf_loss_grad(net, x, targets, lambda_udf, grad);
  accumulate_eikonal_loss_grad(net, x, lambda_eik, grad);

  auto loss_at = [&](JointUdf& n) {
    VecX f = udf_forward_batch(n, x);
    double l = lambda_udf * (f - targets).squaredNorm() / batch;
    double e = 0.0;
    for (int i = 0; i < batch; ++i) {
      AccelVector a;
      a.values.assign(x.row(i).begin(), x.row(i).end());
      e += loss_eikonal(n, a);
    }
    return l + lambda_eik * e / batch;
  };

  const double h = 1e-6;
  const int n_params = param_count(net.params);
  double max_rel = 0.0;
  for (int p = 0; p < n_params; ++p) {
    JointUdf plus = net, minus = net;
    *param_ptr(plus.params, p) += h;
    *param_ptr(minus.params, p) -= h;
    double fd = (loss_at(plus) - loss_at(minus)) / (2 * h);
    double denom = std::max(1e-4, std::abs(fd));
    max_rel = std::max(max_rel, std::abs(flat_grad(grad, p) - fd) / denom);
  }
  EXPECT_LT(max_rel, 1e-4);
}

TEST(LossGradients, EikonalAloneMatchesFiniteDifferences) {
  Rng rng(21);
  const std::vector<int> dims{4, 3, 1};
  JointUdf net = make_net(dims, 22);
  const int batch = 3;
  MatX x(batch, 4);
  for (int i = 0; i < batch; ++i)
    for (int d = 0; d < 4; ++d) x(i, d) = rng.uniform(-1, 1);

  MlpParams grad = net.params.zeros_like();
  accumulate_eikonal_loss_grad(net, x, 1.0, grad);

  auto loss_at = [&](JointUdf& n) {
    double e = 0.0;
    for (int i = 0; i < batch; ++i) {
      AccelVector a;
      a.values.assign(x.row(i).begin(), x.row(i).end());
      e += loss_eikonal(n, a);
    }
    return e / batch;
  };
  const double h = 1e-6;
  for (int p = 0; p < param_count(net.params); ++p) {
    JointUdf plus = net, minus = net;
    *param_ptr(plus.params, p) += h;
    *param_ptr(minus.params, p) -= h;
    double fd = (loss_at(plus) - loss_at(minus)) / (2 * h);
    EXPECT_NEAR(flat_grad(grad, p), fd, 1e-5 * std::max(1.0, std::abs(fd))) << "param " << p;
  }
}

// --- training on the controlled synthetic manifold ------------------------------

TEST(Training, LearnsTheControlledManifold) {
  using namespace moprior::testing;
  ControlledManifold m = make_controlled_manifold(2000, 2000, 100);
  TrainResult r = train_joint_udf(m.zl, m.negatives, controlled_manifold_train_config());
  ControlledOutcome o = evaluate_controlled(m, r);
  EXPECT_LT(o.heldout_mae, 0.05);
  EXPECT_LT(o.zero_max, 0.02);
  // Loss should be non-increasing across at least 90% of epoch transitions.
  EXPECT_GE(o.epochs_non_increasing,
            static_cast<int>(std::ceil(0.9 * o.epoch_transitions)));
}

TEST(Training, EikonalTermImprovesGradientNorms) {
  using namespace moprior::testing;
  ControlledManifold m = make_controlled_manifold(600, 600, 101);
  TrainConfig with = controlled_manifold_train_config();
  with.epochs = 150;
  with.lambda_eikonal = 0.1;
  TrainConfig without = with;
  without.lambda_eikonal = 0.0;
  TrainResult rw = train_joint_udf(m.zl, m.negatives, with);
  TrainResult ro = train_joint_udf(m.zl, m.negatives, without);

  double dev_with = 0.0, dev_without = 0.0;
  for (const LabeledSample& s : m.heldout_negatives) {
    auto norm_of = [&](const JointUdf& net) {
      std::vector<double> g = udf_input_gradient(net, s.accel);
      double n2 = 0;
      for (double v : g) n2 += v * v;
      return std::sqrt(n2);
    };
    dev_with += std::abs(norm_of(rw.net) - 1.0);
    dev_without += std::abs(norm_of(ro.net) - 1.0);
  }
  EXPECT_LT(dev_with, dev_without);
}

TEST(Training, DeterministicPerSeed) {
  using namespace moprior::testing;
  ControlledManifold m = make_controlled_manifold(300, 300, 102);
  TrainConfig cfg = controlled_manifold_train_config();
  cfg.epochs = 5;
  TrainResult a = train_joint_udf(m.zl, m.negatives, cfg);
  TrainResult b = train_joint_udf(m.zl, m.negatives, cfg);
  for (std::size_t l = 0; l < a.net.params.weights.size(); ++l) {
    EXPECT_EQ(std::memcmp(a.net.params.weights[l].data(), b.net.params.weights[l].data(),
                          sizeof(double) * a.net.params.weights[l].size()),
              0);
    EXPECT_EQ(std::memcmp(a.net.params.biases[l].data(), b.net.params.biases[l].data(),
                          sizeof(double) * a.net.params.biases[l].size()),
              0);
  }
}

TEST(Training, WarmStartContinuesFromGivenParameters) {
  using namespace moprior::testing;
  ControlledManifold m = make_controlled_manifold(200, 200, 104);
  TrainConfig cfg = controlled_manifold_train_config();
  cfg.epochs = 3;
  TrainResult first = train_joint_udf(m.zl, m.negatives, cfg);
  TrainResult second = train_joint_udf(m.zl, m.negatives, cfg, &first.net.params);
  // Different starting point, same machinery; shapes preserved.
  EXPECT_EQ(second.net.params.dims(), first.net.params.dims());
  std::vector<int> bad{7, 3, 1};
  MlpParams wrong;
  Rng rng(1);
  wrong = MlpParams::init(bad, rng);
  EXPECT_THROW(train_joint_udf(m.zl, m.negatives, cfg, &wrong), DimensionError);
}

TEST(Training, EmptyInputsRejected) {
  using namespace moprior::testing;
  ControlledManifold m = make_controlled_manifold(50, 50, 103);
  ZeroLevelSet empty;
  empty.dim = 42;
  TrainConfig cfg = controlled_manifold_train_config();
  EXPECT_THROW(train_joint_udf(empty, m.negatives, cfg), ValidationError);
  EXPECT_THROW(train_joint_udf(m.zl, {}, cfg), ValidationError);
}

// --- checkpointing ---------------------------------------------------------------

namespace {

ManifoldModel tiny_model(std::uint64_t seed) {
  ManifoldModel model;
  model.segment_length = 6;
  model.fps = 25;
  model.weights = joint_weights(default_skeleton());
  Rng rng(seed);
  for (int j = 0; j < 24; ++j) {
    if (excluded_joints().count(j)) continue;
    JointUdf net = make_net({12, 8, 1}, seed + j);
    net.joint_index = j;
    net.segment_length = 6;
    model.joints[j] = net;
  }
  return model;
}

}  // namespace

TEST(Checkpoint, RoundTripPreservesOutputs) {
  ManifoldModel model = tiny_model(200);
  std::string path = std::string(::testing::TempDir()) + "model.ckpt";
  save_model(model, path);
  ManifoldModel back = load_model(path);
  EXPECT_EQ(back.segment_length, 6);
  EXPECT_EQ(back.fps, 25);
  Rng rng(201);
  for (int i = 0; i < 100; ++i) {
    int j = 4 + static_cast<int>(rng.below(20));
    AccelVector q = random_accel(rng, 12, 2.0);
    double a = udf_forward(model.joints.at(j), q);
    double b = udf_forward(back.joints.at(j), q);
    EXPECT_EQ(a, b);  // bit-identical forward outputs
  }
}

TEST(Checkpoint, MissingJointRejected) {
  ManifoldModel model = tiny_model(202);
  model.joints.erase(11);
  std::string path = std::string(::testing::TempDir()) + "missing.ckpt";
  save_model(model, path);
  EXPECT_THROW(load_model(path), VersionError);
}

TEST(Checkpoint, SegmentLengthMismatchRejected) {
  ManifoldModel model = tiny_model(203);
  model.joints.at(4).segment_length = 60;
  EXPECT_THROW(model.validate(24), VersionError);
}
