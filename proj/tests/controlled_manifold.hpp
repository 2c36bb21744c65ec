#pragma once

// The controlled synthetic-manifold experiment shared by the unit tests and
// the acceptance suite: the zero level is a circle of radius 1 lying in a
// random 2-plane of the 42-dim acceleration space (a closed curve avoids
// boundary artifacts at segment ends); negatives are circle points pushed
// along a fixed 2-dim subspace orthogonal to the circle plane, labeled by
// exhaustive KNN. Off-manifold directions are confined to that subspace so
// the regression is well-posed at the 2,000-sample budget.

#include <cmath>
#include <vector>

#include "moprior/manifold.hpp"
#include "moprior/rng.hpp"
#include "moprior/udf.hpp"

namespace moprior::testing {

struct ControlledManifold {
  ZeroLevelSet zl;
  std::vector<LabeledSample> negatives;
  std::vector<LabeledSample> heldout_negatives;
  std::vector<AccelVector> heldout_zero;
};

inline ControlledManifold make_controlled_manifold(int n_zero, int n_neg, std::uint64_t seed) {
  Rng rng(seed);
  const int dim = 42;
  auto random_unit = [&]() {
    std::vector<double> v(dim);
    double n2 = 0;
    for (double& x : v) {
      x = rng.gaussian();
      n2 += x * x;
    }
    for (double& x : v) x /= std::sqrt(n2);
    return v;
  };
  auto orthogonalize = [&](std::vector<double> v, const std::vector<std::vector<double>>& others) {
    for (const auto& o : others) {
      double dot = 0;
      for (int d = 0; d < dim; ++d) dot += v[d] * o[d];
      for (int d = 0; d < dim; ++d) v[d] -= dot * o[d];
    }
    double n2 = 0;
    for (double x : v) n2 += x * x;
    for (double& x : v) x /= std::sqrt(n2);
    return v;
  };
  std::vector<double> u = random_unit();
  std::vector<double> v = orthogonalize(random_unit(), {u});
  std::vector<double> e1 = orthogonalize(random_unit(), {u, v});
  std::vector<double> e2 = orthogonalize(random_unit(), {u, v, e1});

  ControlledManifold m;
  m.zl.dim = dim;
  m.zl.segment_length = 16;
  m.zl.joint_index = 4;
  auto circle_point = [&](double theta) {
    std::vector<double> p(dim);
    for (int d = 0; d < dim; ++d) p[d] = std::cos(theta) * u[d] + std::sin(theta) * v[d];
    return p;
  };
  for (int i = 0; i < n_zero; ++i) {
    auto p = circle_point(rng.uniform(0, 2 * M_PI));
    m.zl.points.insert(m.zl.points.end(), p.begin(), p.end());
  }
  m.zl.stats.mean.assign(dim, 0.0);
  m.zl.stats.std.assign(dim, 0.0);
  for (int i = 0; i < m.zl.count(); ++i)
    for (int d = 0; d < dim; ++d) m.zl.stats.mean[d] += m.zl.point(i)[d];
  for (double& x : m.zl.stats.mean) x /= m.zl.count();
  for (int i = 0; i < m.zl.count(); ++i)
    for (int d = 0; d < dim; ++d) {
      double c = m.zl.point(i)[d] - m.zl.stats.mean[d];
      m.zl.stats.std[d] += c * c;
    }
  for (double& x : m.zl.stats.std) x = std::sqrt(x / m.zl.count());

  VpTree tree(m.zl);
  auto negative = [&]() {
    AccelVector q;
    q.values = circle_point(rng.uniform(0, 2 * M_PI));
    double radius = rng.uniform(0.01, 1.2);
    double ang = rng.uniform(0, 2 * M_PI);
    double c1 = radius * std::cos(ang), c2 = radius * std::sin(ang);
    for (int d = 0; d < dim; ++d) q.values[d] += c1 * e1[d] + c2 * e2[d];
    return make_labeled(q, knn_label(q, tree, kDefaultKnnK));
  };
  for (int i = 0; i < n_neg; ++i) m.negatives.push_back(negative());
  for (int i = 0; i < std::max(n_neg / 4, 50); ++i) m.heldout_negatives.push_back(negative());
  for (int i = 0; i < 200; ++i) {
    AccelVector q;
    q.values = circle_point(rng.uniform(0, 2 * M_PI));
    m.heldout_zero.push_back(q);
  }
  return m;
}

// Training configuration tuned for the controlled experiment.
inline TrainConfig controlled_manifold_train_config() {
  TrainConfig cfg;
  cfg.hidden_dims = {64, 64};
  cfg.epochs = 600;
  cfg.adam.lr = 5e-3;
  cfg.batch_size = 256;
  cfg.lambda_eikonal = 0.002;
  cfg.zero_sample_weight = 4.0;
  cfg.seed = 5;
  return cfg;
}

struct ControlledOutcome {
  double heldout_mae = 0.0;
  double zero_max = 0.0;
  int epochs_non_increasing = 0;
  int epoch_transitions = 0;
};

inline ControlledOutcome evaluate_controlled(const ControlledManifold& m, const TrainResult& r) {
  ControlledOutcome o;
  for (const LabeledSample& s : m.heldout_negatives)
    o.heldout_mae += std::abs(udf_forward(r.net, s.accel) - s.target);
  o.heldout_mae /= static_cast<double>(m.heldout_negatives.size());
  for (const AccelVector& q : m.heldout_zero)
    o.zero_max = std::max(o.zero_max, udf_forward(r.net, q));
  // "Non-increasing" up to plateau dither: upticks below 1% of the curve's
  // total descent do not count as increases (a converged run hovers).
  double descent = std::max(0.0, r.curve.front().train_loss - r.curve.back().train_loss);
  double tol = std::max(1e-12, 0.01 * descent);
  for (std::size_t e = 1; e < r.curve.size(); ++e) {
    ++o.epoch_transitions;
    if (r.curve[e].train_loss <= r.curve[e - 1].train_loss + tol) ++o.epochs_non_increasing;
  }
  return o;
}

}  // namespace moprior::testing
