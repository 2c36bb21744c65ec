#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "moprior/container.hpp"
#include "moprior/errors.hpp"
#include "moprior/manifold.hpp"
#include "moprior/rng.hpp"
#include "moprior/skeleton.hpp"

namespace moprior {

using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;
using ArrX = Eigen::ArrayXXd;

// Numerically stable softplus and its first two derivatives. Softplus is
// used on every layer including the scalar output, which keeps the field
// non-negative and twice differentiable; both properties are load-bearing
// (the unit-gradient regularizer differentiates through the input gradient).
inline double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}
inline double sigmoid(double x) {
  if (x >= 0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

namespace mlp_detail {

// Hidden layers use tanh (zero-centered, well-conditioned); the output layer
// uses softplus so the field stays non-negative. Both are C^2, which the
// nested differentiation of the unit-gradient penalty requires.
inline ArrX activation(const ArrX& z, bool output_layer) {
  if (output_layer) return z.unaryExpr([](double v) { return moprior::softplus(v); });
  return z.tanh();
}
inline ArrX activation_d1(const ArrX& z, bool output_layer) {
  if (output_layer) return z.unaryExpr([](double v) { return moprior::sigmoid(v); });
  return 1.0 - z.tanh().square();
}
inline ArrX activation_d2(const ArrX& z, bool output_layer) {
  if (output_layer)
    return z.unaryExpr([](double v) {
      double s = moprior::sigmoid(v);
      return s * (1.0 - s);
    });
  ArrX t = z.tanh();
  return -2.0 * t * (1.0 - t.square());
}

}  // namespace mlp_detail

// Fully-connected network parameters. W[l] has shape dims[l+1] x dims[l].
struct MlpParams {
  std::vector<MatX> weights;
  std::vector<VecX> biases;

  std::vector<int> dims() const {
    std::vector<int> d;
    if (weights.empty()) return d;
    d.push_back(static_cast<int>(weights.front().cols()));
    for (const MatX& w : weights) d.push_back(static_cast<int>(w.rows()));
    return d;
  }

  static MlpParams init(const std::vector<int>& dims, Rng& rng) {
    if (dims.size() < 2) throw ConfigError("mlp needs at least input and output dims");
    MlpParams p;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      // LeCun scaling keeps tanh units in their responsive range.
      double scale = std::sqrt(1.0 / dims[l]);
      MatX w(dims[l + 1], dims[l]);
      for (int r = 0; r < w.rows(); ++r)
        for (int c = 0; c < w.cols(); ++c) w(r, c) = scale * rng.gaussian();
      p.weights.push_back(std::move(w));
      p.biases.push_back(VecX::Zero(dims[l + 1]));
    }
    return p;
  }

  MlpParams zeros_like() const {
    MlpParams g;
    for (const MatX& w : weights) g.weights.push_back(MatX::Zero(w.rows(), w.cols()));
    for (const VecX& b : biases) g.biases.push_back(VecX::Zero(b.size()));
    return g;
  }
};

// Activations of a batched forward pass: X[0] is the (normalized) input
// batch, Z[l] / X[l+1] the pre- and post-activation of layer l. Batch along
// rows throughout.
struct MlpForward {
  std::vector<MatX> z;
  std::vector<MatX> x;
};

inline MlpForward mlp_forward(const MlpParams& p, const MatX& input) {
  MlpForward f;
  f.x.push_back(input);
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    MatX z = f.x.back() * p.weights[l].transpose();
    z.rowwise() += p.biases[l].transpose();
    f.z.push_back(z);
    bool output_layer = (l + 1 == p.weights.size());
    f.x.push_back(mlp_detail::activation(z.array(), output_layer).matrix());
  }
  return f;
}

// One per-joint unsigned distance field: MLP weights plus the input
// normalization copied from the zero-level set it was trained on.
//
// Inputs are mean-centered per dimension but scaled by a single isotropic
// factor (the RMS of the per-dimension stds). Per-dimension scaling would
// warp the L1 geometry the distance labels are computed in, and blows up
// when the manifold barely moves along some axes.
struct JointUdf {
  int joint_index = 0;
  int segment_length = 0;  // T
  MlpParams params;
  NormStats stats;

  int input_dim() const { return params.weights.empty() ? 0 : static_cast<int>(params.weights[0].cols()); }

  double input_scale() const {
    double s2 = 0.0;
    for (double v : stats.std) s2 += v * v;
    double s = std::sqrt(s2 / static_cast<double>(stats.std.size()));
    return s > 1e-12 ? s : 1.0;
  }

  MatX normalize(const MatX& raw) const {
    const double inv = 1.0 / input_scale();
    MatX out = raw;
    for (int c = 0; c < out.cols(); ++c)
      out.col(c) = (out.col(c).array() - stats.mean[c]) * inv;
    return out;
  }
};

inline void check_input_dim(const JointUdf& net, int dim) {
  if (dim != net.input_dim())
    throw DimensionError("input dimension " + std::to_string(dim) +
                         " does not match the network's " + std::to_string(net.input_dim()));
}

// Batched field evaluation on raw (unnormalized) acceleration rows.
inline VecX udf_forward_batch(const JointUdf& net, const MatX& raw) {
  check_input_dim(net, static_cast<int>(raw.cols()));
  MlpForward f = mlp_forward(net.params, net.normalize(raw));
  return f.x.back().col(0);
}

inline double udf_forward(const JointUdf& net, const AccelVector& accel) {
  check_input_dim(net, accel.dim());
  MatX row(1, accel.dim());
  for (int i = 0; i < accel.dim(); ++i) row(0, i) = accel.values[i];
  return udf_forward_batch(net, row)(0);
}

// Field evaluation when the caller already normalized with the same stats;
// used to verify that normalization is applied exactly once.
inline double udf_forward_prenormalized(const JointUdf& net, const AccelVector& normalized) {
  check_input_dim(net, normalized.dim());
  MatX row(1, normalized.dim());
  for (int i = 0; i < normalized.dim(); ++i) row(0, i) = normalized.values[i];
  MlpForward f = mlp_forward(net.params, row);
  return f.x.back()(0, 0);
}

// Batched exact gradient of the field value with respect to the raw input,
// one row per sample. Reverse sweep:
//   u_L = sigmoid(z_L);   u_{l-1} = sigmoid(z_{l-1}) .* (u_l W_l)
//   d f / d input = (u_1 W_1) ./ std
inline MatX udf_input_gradient_batch(const JointUdf& net, const MatX& raw,
                                     MlpForward* forward_out = nullptr) {
  check_input_dim(net, static_cast<int>(raw.cols()));
  MlpForward f = mlp_forward(net.params, net.normalize(raw));
  const auto& w = net.params.weights;
  MatX u = mlp_detail::activation_d1(f.z.back().array(), true).matrix();
  for (std::size_t l = w.size() - 1; l > 0; --l) {
    MatX back = u * w[l];
    u = (mlp_detail::activation_d1(f.z[l - 1].array(), false) * back.array()).matrix();
  }
  MatX g = u * w[0];
  g *= 1.0 / net.input_scale();
  if (forward_out) *forward_out = std::move(f);
  return g;
}

inline std::vector<double> udf_input_gradient(const JointUdf& net, const AccelVector& accel) {
  MatX row(1, accel.dim());
  for (int i = 0; i < accel.dim(); ++i) row(0, i) = accel.values[i];
  MatX g = udf_input_gradient_batch(net, row);
  return std::vector<double>(g.data(), g.data() + g.size());
}

// Squared error against the log-scaled distance target.
inline double loss_udf(const JointUdf& net, const LabeledSample& sample) {
  double f = udf_forward(net, sample.accel);
  double r = f - sample.target;
  return r * r;
}

// Unit-gradient penalty at one input point.
inline double loss_eikonal(const JointUdf& net, const AccelVector& accel) {
  std::vector<double> g = udf_input_gradient(net, accel);
  double n2 = 0.0;
  for (double v : g) n2 += v * v;
  double r = std::sqrt(n2) - 1.0;
  return r * r;
}

// ---------------------------------------------------------------------------
// Gradients of the training losses with respect to the parameters.

// Accumulates lambda * d/dparams of mean_i w_i (f(x_i) - t_i)^2 into grad
// (w_i = 1 without row_weights). Returns the mean weighted loss.
inline double accumulate_udf_loss_grad(const JointUdf& net, const MatX& raw, const VecX& targets,
                                       double lambda, MlpParams& grad,
                                       const VecX* row_weights = nullptr) {
  const int n = static_cast<int>(raw.rows());
  MlpForward f = mlp_forward(net.params, net.normalize(raw));
  const auto& w = net.params.weights;
  VecX resid = f.x.back().col(0) - targets;
  VecX weighted = row_weights ? VecX(resid.array() * row_weights->array()) : resid;
  double loss = resid.dot(weighted) / n;

  // delta_L = 2 lambda / n * w .* resid .* act'(z_L)
  MatX delta = (mlp_detail::activation_d1(f.z.back().array(), true) *
                ((2.0 * lambda / n) * weighted.array()))
                   .matrix();
  for (std::size_t l = w.size(); l-- > 0;) {
    grad.weights[l].noalias() += delta.transpose() * f.x[l];
    grad.biases[l] += delta.colwise().sum().transpose();
    if (l > 0) {
      MatX back = delta * w[l];
      delta = (mlp_detail::activation_d1(f.z[l - 1].array(), false) * back.array()).matrix();
    }
  }
  return loss;
}

// Accumulates lambda * d/dparams of mean_i (|grad_x f(x_i)| - 1)^2 into
// grad, where grad_x is taken with respect to the raw input. Returns the
// mean penalty.
//
// The nested derivative is taken exactly: first a reverse sweep builds the
// input gradient g_i per sample, then the scalar c_i^T g_i (c_i the penalty
// gradient, held constant) is differentiated by a forward-mode sweep through
// the network followed by a reverse sweep through that augmented
// computation. For each layer, with tangent quantities marked by a dot:
//   zdot_l = xdot_{l-1} W_l^T,     xdot_l = sigmoid(z_l) .* zdot_l
//   B_l = A_l .* sigmoid(z_l) + Adot_l .* sigmoid'(z_l) .* zdot_l
//   Bdot_l = Adot_l .* sigmoid(z_l)
//   dW_l += B_l^T x_{l-1} + Bdot_l^T xdot_{l-1},   db_l += sum B_l
//   A_{l-1} = B_l W_l,             Adot_{l-1} = Bdot_l W_l
inline double accumulate_eikonal_loss_grad(const JointUdf& net, const MatX& raw, double lambda,
                                           MlpParams& grad) {
  const int n = static_cast<int>(raw.rows());
  const auto& w = net.params.weights;
  const std::size_t layers = w.size();

  MlpForward f;
  MatX g = udf_input_gradient_batch(net, raw, &f);  // n x input_dim, raw-input gradient

  VecX norms(n);
  for (int i = 0; i < n; ++i) norms(i) = g.row(i).norm();
  double loss = 0.0;
  MatX c(n, g.cols());  // d penalty / d g, per sample, then pulled back through ./ std
  for (int i = 0; i < n; ++i) {
    double r = norms(i) - 1.0;
    loss += r * r / n;
    double scale = norms(i) > 1e-300 ? 2.0 * lambda * r / (norms(i) * n) : 0.0;
    c.row(i) = scale * g.row(i);
  }
  c *= 1.0 / net.input_scale();

  // Forward-mode sweep with per-sample tangent direction c.
  std::vector<MatX> xdot(layers + 1), zdot(layers), d1(layers);
  xdot[0] = c;
  for (std::size_t l = 0; l < layers; ++l) {
    bool output_layer = (l + 1 == layers);
    zdot[l] = xdot[l] * w[l].transpose();
    d1[l] = mlp_detail::activation_d1(f.z[l].array(), output_layer).matrix();
    xdot[l + 1] = (d1[l].array() * zdot[l].array()).matrix();
  }

  // Reverse sweep through the augmented computation. The seed adjoint of the
  // output tangent is 1 per sample (the loss scaling already sits in c).
  MatX a = MatX::Zero(n, 1);
  MatX adot = MatX::Ones(n, 1);
  for (std::size_t l = layers; l-- > 0;) {
    bool output_layer = (l + 1 == layers);
    ArrX s = d1[l].array();
    ArrX ds = mlp_detail::activation_d2(f.z[l].array(), output_layer);
    MatX b = (a.array() * s + adot.array() * ds * zdot[l].array()).matrix();
    MatX bdot = (adot.array() * s).matrix();
    grad.weights[l].noalias() += b.transpose() * f.x[l];
    grad.weights[l].noalias() += bdot.transpose() * xdot[l];
    grad.biases[l] += b.colwise().sum().transpose();
    if (l > 0) {
      a = b * w[l];
      adot = bdot * w[l];
    }
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Adam.

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamState {
 public:
  explicit AdamState(const MlpParams& shape)
      : m_(shape.zeros_like()), v_(shape.zeros_like()) {}

  void step(MlpParams& params, const MlpParams& grad, const AdamConfig& cfg) {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg.beta1, t_);
    double bc2 = 1.0 - std::pow(cfg.beta2, t_);
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
      update(params.weights[l], grad.weights[l], m_.weights[l], v_.weights[l], cfg, bc1, bc2);
      update(params.biases[l], grad.biases[l], m_.biases[l], v_.biases[l], cfg, bc1, bc2);
    }
  }

 private:
  template <typename M>
  static void update(M& p, const M& g, M& m, M& v, const AdamConfig& cfg, double bc1, double bc2) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = (cfg.beta2 * v.array() + (1.0 - cfg.beta2) * g.array().square()).matrix();
    p.array() -= cfg.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
  }

  MlpParams m_, v_;
  long t_ = 0;
};

// ---------------------------------------------------------------------------
// Training.

enum class EikonalSamplePolicy { NegativesOnly, NegativesPlusPerturbedZero };

struct TrainConfig {
  double lambda_udf = 1.0;      // weight on the distance regression term
  double lambda_eikonal = 0.1;  // weight on the unit-gradient term
  AdamConfig adam{1e-4, 0.9, 0.999, 1e-8};
  int batch_size = 256;
  int epochs = 30;
  // Cosine-annealed learning rate: epoch e runs at
  // lr * (final + (1 - final) * 0.5 * (1 + cos(pi e / (epochs - 1)))).
  double lr_final_scale = 0.1;
  // Global gradient-norm clip; guards the saturating output layer against
  // the zero-collapse that large steps can cause. 0 disables.
  double grad_clip = 10.0;
  // Regression-loss multiplier for on-manifold (target 0) samples; values
  // above 1 pin the zero level harder against the unit-gradient pull.
  double zero_sample_weight = 1.0;
  double validation_fraction = 0.1;
  EikonalSamplePolicy eikonal_policy = EikonalSamplePolicy::NegativesPlusPerturbedZero;
  double eikonal_perturb_sigma = 0.5;  // in units of per-dimension std
  std::vector<int> hidden_dims{256, 256, 256};
  std::uint64_t seed = 0;

  void validate() const {
    if (lambda_udf < 0 || lambda_eikonal < 0) throw ConfigError("loss weights must be >= 0");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (validation_fraction < 0 || validation_fraction >= 1)
      throw ConfigError("validation fraction must lie in [0, 1)");
    if (hidden_dims.empty()) throw ConfigError("at least one hidden layer required");
  }
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;     // mean combined loss over batches
  double val_udf_loss = 0.0;   // mean squared target error on the validation split
};

struct TrainResult {
  JointUdf net;
  std::vector<EpochStats> curve;
  int best_epoch = 0;
};

// Train one joint's distance field: minibatch Adam on
// lambda_udf * L_udf + lambda_eikonal * L_eikonal, where zero-level points
// carry target 0 and negatives carry their log-scaled KNN labels. The
// unit-gradient term is evaluated off-manifold, on the batch's negatives
// (optionally plus perturbed zero-level points). Deterministic per seed;
// returns the parameter state with the best validation regression loss.
inline TrainResult train_joint_udf(const ZeroLevelSet& zl, const std::vector<LabeledSample>& negatives,
                                   const TrainConfig& cfg,
                                   const MlpParams* warm_start = nullptr) {
  cfg.validate();
  if (zl.count() < 1) throw ValidationError("training needs at least one zero-level point");
  if (negatives.empty()) throw ValidationError("training needs at least one negative sample");
  for (const LabeledSample& s : negatives)
    if (s.accel.dim() != zl.dim)
      throw DimensionError("negative sample dimension does not match the zero-level set");

  const int dim = zl.dim;
  Rng rng(cfg.seed * 0x9E3779B97F4A7C15ull + 0x42ull);

  // Assemble the dataset: raw inputs plus targets (0 for on-manifold rows).
  const int n_pos = zl.count();
  const int n_neg = static_cast<int>(negatives.size());
  const int n = n_pos + n_neg;
  MatX inputs(n, dim);
  VecX targets(n);
  std::vector<std::uint8_t> is_negative(n, 0);
  for (int i = 0; i < n_pos; ++i) {
    for (int d = 0; d < dim; ++d) inputs(i, d) = zl.point(i)[d];
    targets(i) = 0.0;
  }
  for (int i = 0; i < n_neg; ++i) {
    for (int d = 0; d < dim; ++d) inputs(n_pos + i, d) = negatives[i].accel.values[d];
    targets(n_pos + i) = negatives[i].target;
    is_negative[n_pos + i] = 1;
  }

  std::vector<std::size_t> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  const int n_val = std::min(n - 1, static_cast<int>(std::lround(cfg.validation_fraction * n)));
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + n_val);
  std::vector<std::size_t> train_idx(order.begin() + n_val, order.end());

  JointUdf net;
  net.joint_index = zl.joint_index;
  net.segment_length = zl.segment_length;
  net.stats = zl.stats;
  std::vector<int> dims;
  dims.push_back(dim);
  for (int h : cfg.hidden_dims) dims.push_back(h);
  dims.push_back(1);
  if (warm_start) {
    if (warm_start->dims() != dims)
      throw DimensionError("warm-start parameters do not match the configured architecture");
    net.params = *warm_start;
  } else {
    net.params = MlpParams::init(dims, rng);
    // Start the field at the mean target instead of deep in the output
    // nonlinearity's flat region.
    double mean_target = std::max(targets.mean(), 0.05);
    net.params.biases.back()(0) = std::log(std::expm1(mean_target));
  }

  AdamState adam(net.params);
  TrainResult result;
  MlpParams best = net.params;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = 0;

  auto gather = [&](const std::vector<std::size_t>& idx, int from, int count, MatX& x, VecX& t) {
    x.resize(count, dim);
    t.resize(count);
    for (int i = 0; i < count; ++i) {
      x.row(i) = inputs.row(static_cast<int>(idx[from + i]));
      t(i) = targets(idx[from + i]);
    }
  };

  MatX bx;
  VecX bt, bw;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    AdamConfig adam_cfg = cfg.adam;
    if (cfg.epochs > 1) {
      double cosine = 0.5 * (1.0 + std::cos(M_PI * epoch / (cfg.epochs - 1)));
      adam_cfg.lr *= cfg.lr_final_scale + (1.0 - cfg.lr_final_scale) * cosine;
    }
    rng.shuffle(train_idx);
    double epoch_loss = 0.0;
    int batches = 0;
    for (int start = 0; start < static_cast<int>(train_idx.size()); start += cfg.batch_size) {
      int count = std::min<int>(cfg.batch_size, static_cast<int>(train_idx.size()) - start);
      gather(train_idx, start, count, bx, bt);

      MlpParams grad = net.params.zeros_like();
      const VecX* row_weights = nullptr;
      if (cfg.zero_sample_weight != 1.0) {
        bw = VecX::Ones(count);
        for (int i = 0; i < count; ++i)
          if (!is_negative[train_idx[start + i]]) bw(i) = cfg.zero_sample_weight;
        row_weights = &bw;
      }
      double loss =
          cfg.lambda_udf * accumulate_udf_loss_grad(net, bx, bt, cfg.lambda_udf, grad, row_weights);

      if (cfg.lambda_eikonal > 0.0) {
        // Off-manifold evaluation points for the unit-gradient term.
        std::vector<int> eik_rows;
        for (int i = 0; i < count; ++i)
          if (is_negative[train_idx[start + i]]) eik_rows.push_back(i);
        int n_perturb = cfg.eikonal_policy == EikonalSamplePolicy::NegativesPlusPerturbedZero
                            ? static_cast<int>(eik_rows.size())
                            : 0;
        if (!eik_rows.empty()) {
          MatX ex(static_cast<int>(eik_rows.size()) + n_perturb, dim);
          for (std::size_t i = 0; i < eik_rows.size(); ++i) ex.row(static_cast<int>(i)) = bx.row(eik_rows[i]);
          for (int i = 0; i < n_perturb; ++i) {
            int src = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_pos)));
            for (int d = 0; d < dim; ++d) {
              double s = zl.stats.std[d] > 1e-12 ? zl.stats.std[d] : 1.0;
              ex(static_cast<int>(eik_rows.size()) + i, d) =
                  zl.point(src)[d] + cfg.eikonal_perturb_sigma * s * rng.gaussian();
            }
          }
          loss += cfg.lambda_eikonal * accumulate_eikonal_loss_grad(net, ex, cfg.lambda_eikonal, grad);
        }
      }
      if (!std::isfinite(loss))
        throw NumericError("training diverged (non-finite loss) at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batches) + ", joint " +
                           std::to_string(zl.joint_index));
      if (cfg.grad_clip > 0) {
        double n2 = 0.0;
        for (std::size_t l = 0; l < grad.weights.size(); ++l)
          n2 += grad.weights[l].squaredNorm() + grad.biases[l].squaredNorm();
        if (n2 > cfg.grad_clip * cfg.grad_clip) {
          double scale = cfg.grad_clip / std::sqrt(n2);
          for (std::size_t l = 0; l < grad.weights.size(); ++l) {
            grad.weights[l] *= scale;
            grad.biases[l] *= scale;
          }
        }
      }
      adam.step(net.params, grad, adam_cfg);
      epoch_loss += loss;
      ++batches;
    }

    EpochStats es;
    es.epoch = epoch;
    es.train_loss = batches > 0 ? epoch_loss / batches : 0.0;
    if (!val_idx.empty()) {
      gather(val_idx, 0, static_cast<int>(val_idx.size()), bx, bt);
      VecX pred = udf_forward_batch(net, bx);
      es.val_udf_loss = (pred - bt).squaredNorm() / static_cast<double>(val_idx.size());
    } else {
      es.val_udf_loss = es.train_loss;
    }
    result.curve.push_back(es);
    if (es.val_udf_loss < best_val) {
      best_val = es.val_udf_loss;
      best = net.params;
      best_epoch = epoch;
    }
  }

  net.params = best;
  result.net = std::move(net);
  result.best_epoch = best_epoch;
  return result;
}

// ---------------------------------------------------------------------------
// The composed model: one field per non-excluded joint plus the weights that
// mix them, tied to a segment length and frame rate.

struct ManifoldModel {
  int segment_length = 0;  // T
  int fps = 0;
  JointWeights weights;
  std::map<int, JointUdf> joints;

  void validate(int expected_joint_count) const {
    if (segment_length < 5) throw ValidationError("model segment length must be >= 5");
    if (fps <= 0) throw ValidationError("model fps must be positive");
    for (int j = 0; j < expected_joint_count; ++j) {
      bool excluded = excluded_joints().count(j) > 0;
      auto it = joints.find(j);
      if (excluded && it != joints.end())
        throw ValidationError("model must not contain excluded joint " + std::to_string(j));
      if (!excluded && it == joints.end())
        throw VersionError("model is missing joint " + std::to_string(j));
      if (!excluded && it->second.segment_length != segment_length)
        throw VersionError("joint " + std::to_string(j) + " was trained with segment length " +
                           std::to_string(it->second.segment_length) + ", model declares " +
                           std::to_string(segment_length));
    }
  }
};

inline void save_model(const ManifoldModel& model, const std::string& path) {
  nlohmann::json header;
  header["segment_length"] = model.segment_length;
  header["fps"] = model.fps;
  header["path_sums"] = model.weights.path_sum;
  header["joint_weights"] = model.weights.w;
  auto& nets = header["nets"] = nlohmann::json::array();
  std::vector<container::Blob> blobs;
  for (const auto& [j, net] : model.joints) {
    std::string tag = "j" + std::to_string(j);
    nets.push_back({{"joint_index", j}, {"dims", net.params.dims()}, {"activation", "tanh-softplus"}});
    blobs.push_back(container::Blob::from_f64(tag + "_mean", net.stats.mean));
    blobs.push_back(container::Blob::from_f64(tag + "_std", net.stats.std));
    for (std::size_t l = 0; l < net.params.weights.size(); ++l) {
      const MatX& w = net.params.weights[l];
      std::vector<double> wv(w.data(), w.data() + w.size());
      blobs.push_back(container::Blob::from_f64(tag + "_w" + std::to_string(l), wv));
      const VecX& b = net.params.biases[l];
      blobs.push_back(container::Blob::from_f64(tag + "_b" + std::to_string(l),
                                                std::vector<double>(b.data(), b.data() + b.size())));
    }
  }
  container::write(path, "manifold_model", header, blobs);
}

inline ManifoldModel load_model(const std::string& path) {
  container::File f = container::read(path, "manifold_model");
  ManifoldModel model;
  model.segment_length = f.header.at("segment_length").get<int>();
  model.fps = f.header.at("fps").get<int>();
  model.weights.path_sum = f.header.at("path_sums").get<std::vector<double>>();
  model.weights.w = f.header.at("joint_weights").get<std::vector<double>>();
  for (const auto& nj : f.header.at("nets")) {
    JointUdf net;
    net.joint_index = nj.at("joint_index").get<int>();
    net.segment_length = model.segment_length;
    if (nj.at("activation").get<std::string>() != "tanh-softplus")
      throw VersionError("unsupported activation in checkpoint: " + path);
    std::vector<int> dims = nj.at("dims").get<std::vector<int>>();
    std::string tag = "j" + std::to_string(net.joint_index);
    net.stats.mean = f.blob(tag + "_mean").as_f64();
    net.stats.std = f.blob(tag + "_std").as_f64();
    if (static_cast<int>(net.stats.mean.size()) != dims.front())
      throw VersionError("checkpoint stats do not match input dim: " + path);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      std::vector<double> wv = f.blob(tag + "_w" + std::to_string(l)).as_f64();
      if (static_cast<int>(wv.size()) != dims[l] * dims[l + 1])
        throw VersionError("checkpoint weight blob has wrong size: " + path);
      MatX w(dims[l + 1], dims[l]);
      std::copy(wv.begin(), wv.end(), w.data());
      net.params.weights.push_back(std::move(w));
      std::vector<double> bv = f.blob(tag + "_b" + std::to_string(l)).as_f64();
      if (static_cast<int>(bv.size()) != dims[l + 1])
        throw VersionError("checkpoint bias blob has wrong size: " + path);
      VecX b(dims[l + 1]);
      std::copy(bv.begin(), bv.end(), b.data());
      net.params.biases.push_back(std::move(b));
    }
    model.joints[net.joint_index] = std::move(net);
  }
  model.validate(static_cast<int>(model.weights.w.size()));
  return model;
}

}  // namespace moprior
