#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <map>
#include <string>
#include <vector>

#include "moprior/errors.hpp"
#include "moprior/motion.hpp"
#include "moprior/udf.hpp"

namespace moprior {

namespace eval_detail {

inline void check_shapes(const MotionSequence& pred, const MotionSequence& gt) {
  if (pred.frame_count() != gt.frame_count() || pred.joint_count() != gt.joint_count())
    throw DimensionError("prediction and ground truth disagree in shape");
}

}  // namespace eval_detail

// Plain mean Euclidean joint error in mm, no alignment. Used for paired
// experiments where both sequences live in the same root-local frame.
inline double mean_joint_error(const MotionSequence& pred, const MotionSequence& gt) {
  eval_detail::check_shapes(pred, gt);
  double sum = 0.0;
  const int frames = pred.frame_count(), joints = pred.joint_count();
  for (int t = 0; t < frames; ++t)
    for (int j = 0; j < joints; ++j) {
      const float* a = pred.position(t, j);
      const float* b = gt.position(t, j);
      double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
      sum += std::sqrt(dx * dx + dy * dy + dz * dz);
    }
  return 1000.0 * sum / (static_cast<double>(frames) * joints);
}

// Mean per-joint position error (mm) after aligning the prediction's root
// joint onto the ground truth's, per frame.
inline double mpjpe(const MotionSequence& pred, const MotionSequence& gt) {
  eval_detail::check_shapes(pred, gt);
  const int frames = pred.frame_count(), joints = pred.joint_count();
  const int root = gt.root_index;
  double sum = 0.0;
  for (int t = 0; t < frames; ++t) {
    const float* pr = pred.position(t, root);
    const float* gr = gt.position(t, root);
    double ox = gr[0] - pr[0], oy = gr[1] - pr[1], oz = gr[2] - pr[2];
    for (int j = 0; j < joints; ++j) {
      const float* a = pred.position(t, j);
      const float* b = gt.position(t, j);
      double dx = a[0] + ox - b[0], dy = a[1] + oy - b[1], dz = a[2] + oz - b[2];
      sum += std::sqrt(dx * dx + dy * dy + dz * dz);
    }
  }
  return 1000.0 * sum / (static_cast<double>(frames) * joints);
}

// Closed-form similarity alignment (rotation + translation + scale) of one
// frame's joints onto another's, least squares via SVD.
inline void procrustes_align(const Eigen::Matrix3Xd& x, const Eigen::Matrix3Xd& y, Mat3& r,
                             double& s, Vec3& t) {
  const int n = static_cast<int>(x.cols());
  Vec3 mx = x.rowwise().mean();
  Vec3 my = y.rowwise().mean();
  Eigen::Matrix3Xd xc = x.colwise() - mx;
  Eigen::Matrix3Xd yc = y.colwise() - my;
  Mat3 cov = yc * xc.transpose() / n;
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU(), v = svd.matrixV();
  Vec3 d = Vec3::Ones();
  if ((u * v.transpose()).determinant() < 0) d(2) = -1.0;
  r = u * d.asDiagonal() * v.transpose();
  double var_x = xc.squaredNorm() / n;
  s = var_x > 0 ? svd.singularValues().dot(d) / var_x : 1.0;
  t = my - s * (r * mx);
}

// MPJPE after per-frame Procrustes alignment of the prediction onto the
// ground truth (mm). Invariant to similarity transforms of the prediction.
inline double pa_mpjpe(const MotionSequence& pred, const MotionSequence& gt) {
  eval_detail::check_shapes(pred, gt);
  const int frames = pred.frame_count(), joints = pred.joint_count();
  double sum = 0.0;
  Eigen::Matrix3Xd x(3, joints), y(3, joints);
  for (int t = 0; t < frames; ++t) {
    for (int j = 0; j < joints; ++j) {
      const float* a = pred.position(t, j);
      const float* b = gt.position(t, j);
      x.col(j) = Vec3(a[0], a[1], a[2]);
      y.col(j) = Vec3(b[0], b[1], b[2]);
    }
    Mat3 r;
    double s;
    Vec3 tr;
    procrustes_align(x, y, r, s, tr);
    Eigen::Matrix3Xd aligned = (s * (r * x)).colwise() + tr;
    sum += (aligned - y).colwise().norm().sum();
  }
  return 1000.0 * sum / (static_cast<double>(frames) * joints);
}

// Mean acceleration difference (mm / frame^2) using the second central
// difference; insensitive to constant offsets by construction.
inline double accel_error(const MotionSequence& pred, const MotionSequence& gt) {
  eval_detail::check_shapes(pred, gt);
  const int frames = pred.frame_count(), joints = pred.joint_count();
  if (frames < 3) throw ValidationError("acceleration error needs at least 3 frames");
  double sum = 0.0;
  for (int t = 1; t + 1 < frames; ++t)
    for (int j = 0; j < joints; ++j) {
      double d2 = 0.0;
      for (int c = 0; c < 3; ++c) {
        double ap = pred.position(t + 1, j)[c] - 2.0 * pred.position(t, j)[c] +
                    pred.position(t - 1, j)[c];
        double ag =
            gt.position(t + 1, j)[c] - 2.0 * gt.position(t, j)[c] + gt.position(t - 1, j)[c];
        double d = ap - ag;
        d2 += d * d;
      }
      sum += std::sqrt(d2);
    }
  return 1000.0 * sum / (static_cast<double>(frames - 2) * joints);
}

// Per-joint acceleration error of one segment pair (mm / frame^2), the
// per-segment quantity the correlation analysis pairs with field values.
inline double segment_joint_accel_error(const MotionSegment& pred, const MotionSegment& gt,
                                        int joint) {
  AccelVector a = acceleration(pred, joint);
  AccelVector b = acceleration(gt, joint);
  double sum = 0.0;
  const int n = a.dim() / 3;
  for (int t = 0; t < n; ++t) {
    double d2 = 0.0;
    for (int c = 0; c < 3; ++c) {
      double d = a.values[t * 3 + c] - b.values[t * 3 + c];
      d2 += d * d;
    }
    sum += std::sqrt(d2);
  }
  return 1000.0 * sum / n;
}

// Normalized power spectrum similarity over rotation features. Each
// (joint, axis) track is a feature; its full DFT power spectrum is
// normalized to a distribution, and the L1 distance between cumulative
// spectra is averaged across features weighted by ground-truth power.
inline double npss(const MotionSequence& pred, const MotionSequence& gt) {
  eval_detail::check_shapes(pred, gt);
  if (!pred.has_rotations() || !gt.has_rotations())
    throw ValidationError("npss needs rotations on both sequences");
  const int frames = pred.frame_count();
  const int features = pred.joint_count() * 3;

  auto power_spectrum = [frames](const MotionSequence& seq, int feature, std::vector<double>& p) {
    // Naive O(F^2) DFT; fine at this scale and easy to cross-check.
    p.assign(frames, 0.0);
    const int joint = feature / 3, axis = feature % 3;
    for (int k = 0; k < frames; ++k) {
      double re = 0.0, im = 0.0;
      for (int t = 0; t < frames; ++t) {
        double v = seq.rotation(t, joint)[axis];
        double ang = -2.0 * M_PI * k * t / frames;
        re += v * std::cos(ang);
        im += v * std::sin(ang);
      }
      p[k] = re * re + im * im;
    }
  };

  double weighted = 0.0, total_weight = 0.0;
  std::vector<double> pp, pg;
  for (int d = 0; d < features; ++d) {
    power_spectrum(pred, d, pp);
    power_spectrum(gt, d, pg);
    double sp = 0.0, sg = 0.0;
    for (int k = 0; k < frames; ++k) {
      sp += pp[k];
      sg += pg[k];
    }
    if (sg <= 0.0) continue;  // silent ground-truth feature carries no weight
    double emd = 0.0, cp = 0.0, cg = 0.0;
    for (int k = 0; k < frames; ++k) {
      cp += sp > 0.0 ? pp[k] / sp : 0.0;
      cg += pg[k] / sg;
      emd += std::abs(cp - cg);
    }
    weighted += sg * emd;
    total_weight += sg;
  }
  return total_weight > 0.0 ? weighted / total_weight : 0.0;
}

struct MetricReport {
  double mpjpe_mm = 0.0;
  double pa_mpjpe_mm = 0.0;
  double accel_err = 0.0;
  double npss_value = 0.0;
  bool npss_defined = false;
  std::vector<double> per_joint_mpjpe_mm;
};

inline MetricReport evaluate(const MotionSequence& pred, const MotionSequence& gt) {
  MetricReport r;
  r.mpjpe_mm = mpjpe(pred, gt);
  r.pa_mpjpe_mm = pa_mpjpe(pred, gt);
  r.accel_err = accel_error(pred, gt);
  if (pred.has_rotations() && gt.has_rotations()) {
    r.npss_value = npss(pred, gt);
    r.npss_defined = true;
  }
  const int frames = pred.frame_count(), joints = pred.joint_count();
  const int root = gt.root_index;
  r.per_joint_mpjpe_mm.assign(joints, 0.0);
  for (int t = 0; t < frames; ++t) {
    const float* pr = pred.position(t, root);
    const float* gr = gt.position(t, root);
    double ox = gr[0] - pr[0], oy = gr[1] - pr[1], oz = gr[2] - pr[2];
    for (int j = 0; j < joints; ++j) {
      const float* a = pred.position(t, j);
      const float* b = gt.position(t, j);
      double dx = a[0] + ox - b[0], dy = a[1] + oy - b[1], dz = a[2] + oz - b[2];
      r.per_joint_mpjpe_mm[j] += std::sqrt(dx * dx + dy * dy + dz * dz);
    }
  }
  for (double& v : r.per_joint_mpjpe_mm) v = 1000.0 * v / frames;
  return r;
}

// ---------------------------------------------------------------------------
// Pearson correlation.

struct PearsonResult {
  double r = 0.0;
  bool defined = false;  // false when either side has zero variance
};

// Textbook two-pass formula.
inline PearsonResult pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw DimensionError("pearson inputs disagree in length");
  const std::size_t n = xs.size();
  if (n < 2) return {0.0, false};
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return {0.0, false};
  return {sxy / std::sqrt(sxx * syy), true};
}

// ---------------------------------------------------------------------------
// Correlation analysis: per joint, how well the predicted manifold distance
// of a segment tracks its true acceleration error.

struct CorrelationReport {
  struct JointEntry {
    int joint = 0;
    PearsonResult pearson;
    std::vector<double> distances;     // predicted field values per segment
    std::vector<double> accel_errors;  // per-segment acceleration error, mm/frame^2
  };
  std::vector<JointEntry> joints;

  int count_defined_above(double threshold) const {
    int n = 0;
    for (const auto& e : joints)
      if (e.pearson.defined && e.pearson.r > threshold) ++n;
    return n;
  }
};

inline CorrelationReport correlation_analysis(const ManifoldModel& model,
                                              const std::vector<MotionSegment>& segments,
                                              const std::vector<MotionSegment>& clean) {
  if (segments.size() != clean.size())
    throw DimensionError("corrupted and clean segment lists disagree in length");
  CorrelationReport report;
  for (const auto& [j, net] : model.joints) {
    CorrelationReport::JointEntry entry;
    entry.joint = j;
    // Batched field evaluation over segments.
    const int dim = (model.segment_length - 2) * 3;
    MatX rows(static_cast<int>(segments.size()), dim);
    for (std::size_t s = 0; s < segments.size(); ++s) {
      if (segments[s].length != model.segment_length)
        throw DimensionError("segment length does not match the model");
      AccelVector a = acceleration(segments[s], j);
      for (int d = 0; d < dim; ++d) rows(static_cast<int>(s), d) = a.values[d];
      entry.accel_errors.push_back(segment_joint_accel_error(segments[s], clean[s], j));
    }
    VecX f = udf_forward_batch(net, rows);
    entry.distances.assign(f.data(), f.data() + f.size());
    entry.pearson = pearson(entry.distances, entry.accel_errors);
    report.joints.push_back(std::move(entry));
  }
  return report;
}

}  // namespace moprior
