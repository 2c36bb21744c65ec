#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "moprior/errors.hpp"
#include "moprior/motion.hpp"
#include "moprior/skeleton.hpp"
#include "moprior/udf.hpp"

namespace moprior {

enum class TermMode { TemporalOnly, MotionOnly, Fusion };

inline TermMode term_mode_from_string(const std::string& s) {
  if (s == "temporal-only") return TermMode::TemporalOnly;
  if (s == "motion-only") return TermMode::MotionOnly;
  if (s == "fusion") return TermMode::Fusion;
  throw ConfigError("unknown term mode: " + s);
}

inline std::string to_string(TermMode m) {
  switch (m) {
    case TermMode::TemporalOnly: return "temporal-only";
    case TermMode::MotionOnly: return "motion-only";
    case TermMode::Fusion: return "fusion";
  }
  return "?";
}

struct EnergyConfig {
  double lambda_obs = 1.0;    // weight on the observation term
  double lambda_prior = 0.2;  // weight on the selected regularizer
  // Slot for an external single-pose prior. Not wired to anything in this
  // toolkit; any non-zero value is rejected rather than silently ignored.
  double lambda_pose = 0.0;
  TermMode mode = TermMode::Fusion;
  RotationParam rotation = RotationParam::SixD;
  AdamConfig adam{1e-2, 0.9, 0.999, 1e-8};
  int iterations = 300;
  int window_length = 16;  // L
  int stride = 1;          // window stride; only 1 is supported
  double ema_factor = 1.0;  // global-orientation smoothing; 1 = none
  std::vector<std::uint8_t> freeze_frames;  // optional per-frame freeze flags

  void validate() const {
    if (lambda_obs < 0 || lambda_prior < 0) throw ConfigError("energy weights must be >= 0");
    if (lambda_pose != 0.0)
      throw ConfigError("the single-pose prior term is not available; its weight must stay 0");
    if (window_length < 5) throw ConfigError("window length must be >= 5");
    if (stride != 1) throw ConfigError("only stride 1 is supported");
    if (iterations < 1) throw ConfigError("iterations must be >= 1");
    if (ema_factor <= 0 || ema_factor > 1) throw ConfigError("ema factor must lie in (0, 1]");
  }

  bool frozen(int frame) const {
    return frame < static_cast<int>(freeze_frames.size()) && freeze_frames[frame] != 0;
  }
};

struct Observation {
  std::vector<double> targets;  // frames x joints x 3
  OcclusionMask mask;

  static Observation from_sequence(const MotionSequence& seq) {
    Observation o;
    o.targets.assign(seq.positions.begin(), seq.positions.end());
    o.mask = OcclusionMask::none(seq.frame_count(), seq.joint_count());
    return o;
  }
  static Observation from_sequence(const MotionSequence& seq, OcclusionMask mask) {
    Observation o;
    o.targets.assign(seq.positions.begin(), seq.positions.end());
    o.mask = std::move(mask);
    return o;
  }
};

// ---------------------------------------------------------------------------
// Energy terms over a frame-major position buffer (frames x joints x 3).
// Each *_grad variant accumulates d energy / d positions into `grad`
// (same layout) scaled by `scale`, and returns the energy value.

// Sum of frame-to-frame joint displacements, optionally weighted per joint.
inline double energy_temporal_weighted(const double* pos, int frames, int joints,
                                       const double* joint_scale, double scale = 0.0,
                                       double* grad = nullptr) {
  double e = 0.0;
  for (int t = 1; t < frames; ++t)
    for (int j = 0; j < joints; ++j) {
      const double* a = pos + (static_cast<std::size_t>(t - 1) * joints + j) * 3;
      const double* b = pos + (static_cast<std::size_t>(t) * joints + j) * 3;
      double dx = b[0] - a[0], dy = b[1] - a[1], dz = b[2] - a[2];
      double n = std::sqrt(dx * dx + dy * dy + dz * dz);
      double w = joint_scale ? joint_scale[j] : 1.0;
      e += w * n;
      if (grad && n > 1e-12) {
        double s = scale * w / n;
        double* ga = grad + (static_cast<std::size_t>(t - 1) * joints + j) * 3;
        double* gb = grad + (static_cast<std::size_t>(t) * joints + j) * 3;
        gb[0] += s * dx;
        gb[1] += s * dy;
        gb[2] += s * dz;
        ga[0] -= s * dx;
        ga[1] -= s * dy;
        ga[2] -= s * dz;
      }
    }
  return e;
}

inline double energy_temporal(const double* pos, int frames, int joints, double scale = 0.0,
                              double* grad = nullptr) {
  return energy_temporal_weighted(pos, frames, joints, nullptr, scale, grad);
}

inline double energy_temporal(const MotionSequence& seq) {
  std::vector<double> pos(seq.positions.begin(), seq.positions.end());
  return energy_temporal(pos.data(), seq.frame_count(), seq.joint_count());
}

// Squared distance to observed joint positions; masked entries are skipped.
inline double energy_observation(const double* pos, int frames, int joints, const Observation& obs,
                                 double scale = 0.0, double* grad = nullptr) {
  if (obs.mask.frames != frames || obs.mask.joints != joints)
    throw DimensionError("observation shape does not match the optimized sequence");
  double e = 0.0;
  for (int t = 0; t < frames; ++t)
    for (int j = 0; j < joints; ++j) {
      if (obs.mask.at(t, j)) continue;
      std::size_t off = (static_cast<std::size_t>(t) * joints + j) * 3;
      for (int c = 0; c < 3; ++c) {
        double r = pos[off + c] - obs.targets[off + c];
        e += r * r;
        if (grad) grad[off + c] += scale * 2.0 * r;
      }
    }
  return e;
}

// Weighted sum of the per-joint field values over one segment.
inline double motion_field(const ManifoldModel& model, const MotionSegment& segment) {
  if (segment.length != model.segment_length)
    throw DimensionError("segment length " + std::to_string(segment.length) +
                         " does not match the model's " + std::to_string(model.segment_length));
  double total = 0.0;
  for (const auto& [j, net] : model.joints) {
    double w = model.weights.w[j];
    if (w == 0.0) continue;
    total += w * udf_forward(net, acceleration(segment, j));
  }
  return total;
}

namespace energy_detail {

// Mean field value over all stride-1 windows, with an optional gradient
// accumulation into the position buffer. Per joint, the field is evaluated
// batched over windows: window rows are slices of the global second
// difference, and the input-gradient rows scatter back through the
// (1, -2, 1) stencil.
inline double energy_motion_impl(const ManifoldModel& model, const double* pos, int frames,
                                 int joints, double scale, double* grad) {
  const int L = model.segment_length;
  if (frames < L)
    throw DimensionError("sequence of " + std::to_string(frames) +
                         " frames is shorter than the window length " + std::to_string(L));
  const int n_win = frames - L + 1;
  const int dim = (L - 2) * 3;
  double total = 0.0;

  std::vector<double> accel(static_cast<std::size_t>(std::max(frames - 2, 0)) * 3);
  for (const auto& [j, net] : model.joints) {
    double w = model.weights.w[j];
    if (w == 0.0) continue;
    // Global second differences for this joint.
    for (int f = 1; f + 1 < frames; ++f) {
      const double* prev = pos + (static_cast<std::size_t>(f - 1) * joints + j) * 3;
      const double* cur = pos + (static_cast<std::size_t>(f) * joints + j) * 3;
      const double* next = pos + (static_cast<std::size_t>(f + 1) * joints + j) * 3;
      double* dst = accel.data() + static_cast<std::size_t>(f - 1) * 3;
      for (int c = 0; c < 3; ++c) dst[c] = next[c] - 2.0 * cur[c] + prev[c];
    }
    MatX rows(n_win, dim);
    for (int s = 0; s < n_win; ++s)
      for (int d = 0; d < dim; ++d) rows(s, d) = accel[static_cast<std::size_t>(s) * 3 + d];

    if (!grad) {
      VecX f = udf_forward_batch(net, rows);
      total += w * f.sum() / n_win;
    } else {
      MlpForward fwd;
      MatX g = udf_input_gradient_batch(net, rows, &fwd);
      total += w * fwd.x.back().col(0).sum() / n_win;
      const double coeff = scale * w / n_win;
      for (int s = 0; s < n_win; ++s)
        for (int t = 0; t < L - 2; ++t) {
          int f = s + t + 1;  // center frame of this stencil
          for (int c = 0; c < 3; ++c) {
            double gv = coeff * g(s, t * 3 + c);
            grad[(static_cast<std::size_t>(f - 1) * joints + j) * 3 + c] += gv;
            grad[(static_cast<std::size_t>(f) * joints + j) * 3 + c] -= 2.0 * gv;
            grad[(static_cast<std::size_t>(f + 1) * joints + j) * 3 + c] += gv;
          }
        }
    }
  }
  return total;
}

}  // namespace energy_detail

// Mean manifold distance over all stride-1 windows of the sequence. For a
// single-window sequence this equals motion_field exactly.
inline double energy_motion(const ManifoldModel& model, const double* pos, int frames, int joints,
                            double scale = 0.0, double* grad = nullptr) {
  return energy_detail::energy_motion_impl(model, pos, frames, joints, scale, grad);
}

inline double energy_motion(const ManifoldModel& model, const MotionSequence& seq) {
  std::vector<double> pos(seq.positions.begin(), seq.positions.end());
  return energy_motion(model, pos.data(), seq.frame_count(), seq.joint_count());
}

// Motion term plus the (1 - w_i)-weighted classical temporal term; excluded
// joints carry weight 0, so their temporal part keeps the full scale 1.
inline double energy_fusion(const ManifoldModel& model, const double* pos, int frames, int joints,
                            double scale = 0.0, double* grad = nullptr) {
  std::vector<double> temporal_scale(joints, 1.0);
  for (int j = 0; j < joints && j < static_cast<int>(model.weights.w.size()); ++j)
    temporal_scale[j] = 1.0 - model.weights.w[j];
  double e = energy_motion(model, pos, frames, joints, scale, grad);
  e += energy_temporal_weighted(pos, frames, joints, temporal_scale.data(), scale, grad);
  return e;
}

inline double energy_fusion(const ManifoldModel& model, const MotionSequence& seq) {
  std::vector<double> pos(seq.positions.begin(), seq.positions.end());
  return energy_fusion(model, pos.data(), seq.frame_count(), seq.joint_count());
}

// ---------------------------------------------------------------------------
// Sequence optimization.

struct IterationRow {
  int iter = 0;
  double e_obs = 0.0;
  double e_motion = 0.0;
  double e_temporal = 0.0;
  double total = 0.0;
};

struct OptimizeResult {
  MotionSequence sequence;
  std::vector<IterationRow> log;
};

namespace energy_detail {

struct EnergyEval {
  IterationRow row;
};

// Energy and gradient with respect to positions; shared by both
// optimization variable spaces.
inline IterationRow eval_energy(const ManifoldModel* model, const EnergyConfig& cfg,
                                const Observation* obs, const double* pos, int frames, int joints,
                                double* grad) {
  IterationRow row;
  if (obs && cfg.lambda_obs > 0.0)
    row.e_obs = energy_observation(pos, frames, joints, *obs, cfg.lambda_obs, grad);
  if (cfg.lambda_prior > 0.0) {
    switch (cfg.mode) {
      case TermMode::TemporalOnly:
        row.e_temporal = energy_temporal(pos, frames, joints, cfg.lambda_prior, grad);
        break;
      case TermMode::MotionOnly:
        row.e_motion = energy_motion(*model, pos, frames, joints, cfg.lambda_prior, grad);
        break;
      case TermMode::Fusion: {
        std::vector<double> temporal_scale(joints, 1.0);
        for (int j = 0; j < joints && j < static_cast<int>(model->weights.w.size()); ++j)
          temporal_scale[j] = 1.0 - model->weights.w[j];
        row.e_motion = energy_motion(*model, pos, frames, joints, cfg.lambda_prior, grad);
        row.e_temporal = energy_temporal_weighted(pos, frames, joints, temporal_scale.data(),
                                                  cfg.lambda_prior, grad);
        break;
      }
    }
  }
  row.total = cfg.lambda_obs * row.e_obs + cfg.lambda_prior * (row.e_motion + row.e_temporal);
  if (!std::isfinite(row.total)) {
    std::string term = !std::isfinite(row.e_obs)        ? "observation"
                       : !std::isfinite(row.e_motion)   ? "motion"
                       : !std::isfinite(row.e_temporal) ? "temporal"
                                                        : "total";
    throw NumericError("non-finite " + term + " energy during optimization");
  }
  return row;
}

// Flat-vector Adam for the sequence optimizers.
class FlatAdam {
 public:
  explicit FlatAdam(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}

  void step(std::vector<double>& x, const std::vector<double>& g, const AdamConfig& cfg) {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg.beta1, t_);
    double bc2 = 1.0 - std::pow(cfg.beta2, t_);
    for (std::size_t i = 0; i < x.size(); ++i) {
      m_[i] = cfg.beta1 * m_[i] + (1.0 - cfg.beta1) * g[i];
      v_[i] = cfg.beta2 * v_[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      x[i] -= cfg.lr * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + cfg.eps);
    }
  }

 private:
  std::vector<double> m_, v_;
  long t_ = 0;
};

}  // namespace energy_detail

// Gradient-based refinement of a motion sequence.
//
// With rotations present and cfg.rotation selected, the optimization
// variables are per-frame local rotations (root translation stays pinned at
// the origin) and gradients flow through forward kinematics. Without
// rotations, positions are optimized directly; bone lengths are then
// unconstrained, which is the documented trade-off of that mode.
//
// Frames flagged in cfg.freeze_frames receive zero updates and come out
// bit-identical.
inline OptimizeResult optimize_sequence(const ManifoldModel* model, const MotionSequence& init,
                                        const Observation* obs, const EnergyConfig& cfg,
                                        const Skeleton* skel = nullptr) {
  cfg.validate();
  init.validate();
  const int frames = init.frame_count();
  const int joints = init.joint_count();
  const bool needs_model = cfg.mode != TermMode::TemporalOnly && cfg.lambda_prior > 0.0;
  if (needs_model) {
    if (!model) throw ConfigError("the selected term mode needs a trained model");
    if (init.fps != model->fps)
      throw VersionError("sequence fps " + std::to_string(init.fps) +
                         " does not match the model's " + std::to_string(model->fps));
    if (frames < model->segment_length)
      throw DimensionError("sequence of " + std::to_string(frames) +
                           " frames is shorter than the model's segment length " +
                           std::to_string(model->segment_length));
  }
  if (obs && (obs->mask.frames != frames || obs->mask.joints != joints))
    throw DimensionError("observation shape does not match the sequence");

  const bool rotation_mode = init.has_rotations() && skel != nullptr;

  OptimizeResult out;
  out.sequence = init;

  if (!rotation_mode) {
    std::vector<double> x(init.positions.begin(), init.positions.end());
    std::vector<double> g(x.size());
    energy_detail::FlatAdam adam(x.size());
    for (int it = 0; it < cfg.iterations; ++it) {
      std::fill(g.begin(), g.end(), 0.0);
      IterationRow row = energy_detail::eval_energy(model, cfg, obs, x.data(), frames, joints, g.data());
      row.iter = it;
      out.log.push_back(row);
      for (int t = 0; t < frames; ++t)
        if (cfg.frozen(t))
          std::fill_n(g.begin() + static_cast<std::size_t>(t) * joints * 3,
                      static_cast<std::size_t>(joints) * 3, 0.0);
      adam.step(x, g, cfg.adam);
    }
    for (std::size_t i = 0; i < x.size(); ++i)
      out.sequence.positions[i] = static_cast<float>(x[i]);
    for (int t = 0; t < frames; ++t)
      if (cfg.frozen(t))
        std::copy_n(init.positions.begin() + static_cast<std::size_t>(t) * joints * 3,
                    static_cast<std::size_t>(joints) * 3,
                    out.sequence.positions.begin() + static_cast<std::size_t>(t) * joints * 3);
    return out;
  }

  // Rotation-space optimization.
  PoseParams pose;
  pose.param = RotationParam::AxisAngle;
  pose.frames = frames;
  pose.joints = joints;
  pose.values.assign(init.rotations.begin(), init.rotations.end());
  pose = convert_pose(pose, cfg.rotation);
  const int ps = pose.param_size();

  std::vector<double> g(pose.values.size());
  std::vector<double> pos_grad(static_cast<std::size_t>(frames) * joints * 3);
  energy_detail::FlatAdam adam(pose.values.size());
  std::vector<double> pos;
  for (int it = 0; it < cfg.iterations; ++it) {
    pos = forward_kinematics(*skel, pose);
    std::fill(pos_grad.begin(), pos_grad.end(), 0.0);
    IterationRow row =
        energy_detail::eval_energy(model, cfg, obs, pos.data(), frames, joints, pos_grad.data());
    row.iter = it;
    out.log.push_back(row);

    std::fill(g.begin(), g.end(), 0.0);
    std::vector<Vec3> adj(joints);
    for (int f = 0; f < frames; ++f) {
      if (cfg.frozen(f)) continue;
      FkFrame fwd = fk_frame(*skel, pose, f);
      for (int j = 0; j < joints; ++j) {
        const double* pg = pos_grad.data() + (static_cast<std::size_t>(f) * joints + j) * 3;
        adj[j] = Vec3(pg[0], pg[1], pg[2]);
      }
      fk_frame_backward(*skel, pose, f, fwd, adj,
                        g.data() + static_cast<std::size_t>(f) * joints * ps);
    }
    adam.step(pose.values, g, cfg.adam);
  }

  pos = forward_kinematics(*skel, pose);
  for (std::size_t i = 0; i < pos.size(); ++i)
    out.sequence.positions[i] = static_cast<float>(pos[i]);
  PoseParams aa = convert_pose(pose, RotationParam::AxisAngle);
  for (std::size_t i = 0; i < aa.values.size(); ++i)
    out.sequence.rotations[i] = static_cast<float>(aa.values[i]);
  for (int t = 0; t < frames; ++t)
    if (cfg.frozen(t)) {
      std::copy_n(init.positions.begin() + static_cast<std::size_t>(t) * joints * 3,
                  static_cast<std::size_t>(joints) * 3,
                  out.sequence.positions.begin() + static_cast<std::size_t>(t) * joints * 3);
      std::copy_n(init.rotations.begin() + static_cast<std::size_t>(t) * joints * 3,
                  static_cast<std::size_t>(joints) * 3,
                  out.sequence.rotations.begin() + static_cast<std::size_t>(t) * joints * 3);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Sliding-window refinement.

// Symmetric triangular kernel over window-relative frame positions.
inline std::vector<double> merge_kernel(int window_length) {
  std::vector<double> k(window_length);
  for (int j = 0; j < window_length; ++j)
    k[j] = static_cast<double>(std::min(j + 1, window_length - j));
  return k;
}

// Optimize every stride-1 window of length L independently (motion term
// only by default: the window IS the segment) and merge per-frame results
// with the kernel-weighted average. Deterministic regardless of how the
// windows are scheduled, because the merge accumulates in window order.
inline OptimizeResult sliding_window_optimize(
    const ManifoldModel& model, const MotionSequence& seq, const EnergyConfig& cfg,
    const std::function<void(int, std::function<void(int)>)>& for_each_window = nullptr) {
  cfg.validate();
  seq.validate();
  if (cfg.mode == TermMode::TemporalOnly)
    throw ConfigError("sliding-window refinement needs the motion or fusion term");
  const int L = model.segment_length;
  const int frames = seq.frame_count();
  const int joints = seq.joint_count();
  if (frames < L)
    throw DimensionError("sequence of " + std::to_string(frames) +
                         " frames is shorter than the window length " + std::to_string(L));
  if (seq.fps != model.fps)
    throw VersionError("sequence fps does not match the model's");

  const int n_win = frames - L + 1;
  std::vector<std::vector<float>> results(n_win);

  auto run_window = [&](int s) {
    MotionSequence window;
    window.fps = seq.fps;
    window.joints = seq.joints;
    window.root_index = seq.root_index;
    window.positions.assign(seq.positions.begin() + static_cast<std::size_t>(s) * joints * 3,
                            seq.positions.begin() + static_cast<std::size_t>(s + L) * joints * 3);
    EnergyConfig wcfg = cfg;
    wcfg.freeze_frames.clear();
    wcfg.lambda_obs = 0.0;
    OptimizeResult r = optimize_sequence(&model, window, nullptr, wcfg, nullptr);
    results[s] = std::move(r.sequence.positions);
  };

  if (for_each_window) {
    for_each_window(n_win, run_window);
  } else {
    for (int s = 0; s < n_win; ++s) run_window(s);
  }

  const std::vector<double> kernel = merge_kernel(L);
  OptimizeResult out;
  out.sequence = seq;
  std::vector<double> acc(static_cast<std::size_t>(joints) * 3);
  for (int t = 0; t < frames; ++t) {
    std::fill(acc.begin(), acc.end(), 0.0);
    double wsum = 0.0;
    int s_lo = std::max(0, t - L + 1);
    int s_hi = std::min(t, n_win - 1);
    for (int s = s_lo; s <= s_hi; ++s) {
      double w = kernel[t - s];
      wsum += w;
      const float* src = results[s].data() + static_cast<std::size_t>(t - s) * joints * 3;
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w * src[i];
    }
    float* dst = out.sequence.position(t, 0);
    for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = static_cast<float>(acc[i] / wsum);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Global-orientation smoothing.

// Exponential moving average of the root-joint rotation track in its 6D
// embedding, re-orthonormalized per frame. factor = 1 leaves the input
// unchanged; smaller factors smooth harder.
inline MotionSequence ema_smooth_orientation(const MotionSequence& seq, double factor) {
  seq.validate();
  if (!seq.has_rotations())
    throw ValidationError("orientation smoothing needs rotations");
  if (factor <= 0 || factor > 1) throw ConfigError("ema factor must lie in (0, 1]");
  MotionSequence out = seq;
  const int root = seq.root_index;
  Vec6 state;
  for (int f = 0; f < seq.frame_count(); ++f) {
    const float* r = seq.rotation(f, root);
    Vec6 cur = sixd_from_rotation(rotation_from_axis_angle(Vec3(r[0], r[1], r[2])));
    state = (f == 0) ? cur : Vec6(factor * cur + (1.0 - factor) * state);
    Vec3 aa = axis_angle_from_rotation(rotation_from_sixd(state));
    float* dst = out.rotation(f, root);
    dst[0] = static_cast<float>(aa.x());
    dst[1] = static_cast<float>(aa.y());
    dst[2] = static_cast<float>(aa.z());
  }
  return out;
}

}  // namespace moprior
