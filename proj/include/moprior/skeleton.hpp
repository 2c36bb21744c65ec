#pragma once

#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <set>
#include <string>
#include <vector>

#include "moprior/geometry.hpp"

namespace moprior {

// Kinematic tree: parent indices (root = -1), rest-pose offsets in meters,
// per-joint names. Joints are topologically ordered (parent[i] < i).
struct Skeleton {
  std::vector<std::string> names;
  std::vector<int> parents;
  std::vector<Vec3> offsets;

  int joint_count() const { return static_cast<int>(parents.size()); }

  void validate() const {
    const int k = joint_count();
    if (k < 2) throw ValidationError("skeleton needs at least 2 joints");
    if (static_cast<int>(names.size()) != k || static_cast<int>(offsets.size()) != k)
      throw ValidationError("skeleton arrays disagree in length");
    if (parents[0] != -1) throw ValidationError("joint 0 must be the root");
    for (int i = 1; i < k; ++i) {
      if (parents[i] < 0 || parents[i] >= i)
        throw ValidationError("skeleton parents must be topologically ordered with a single root");
      if (!offsets[i].allFinite()) throw ValidationError("non-finite skeleton offset");
      if (offsets[i].norm() == 0.0)
        throw ValidationError("zero-length offset on non-root joint " + names[i]);
    }
  }
};

// Indices of the joints excluded from the acceleration manifolds: the pinned
// root and its immediate neighbours, which barely accelerate in root-local
// coordinates.
inline const std::set<int>& excluded_joints() {
  static const std::set<int> s{0, 1, 2, 3};
  return s;
}

// Default 24-joint skeleton in SMPL-style ordering with nominal rest offsets.
inline Skeleton default_skeleton() {
  Skeleton s;
  struct J {
    const char* name;
    int parent;
    double x, y, z;
  };
  // x: left+, y: up+, z: forward+.
  static const J table[24] = {
      {"pelvis", -1, 0.0, 0.0, 0.0},
      {"leftHip", 0, 0.09, -0.07, 0.0},
      {"rightHip", 0, -0.09, -0.07, 0.0},
      {"spine1", 0, 0.0, 0.11, 0.0},
      {"leftKnee", 1, 0.02, -0.39, 0.0},
      {"rightKnee", 2, -0.02, -0.39, 0.0},
      {"spine2", 3, 0.0, 0.13, 0.0},
      {"leftAnkle", 4, -0.01, -0.40, 0.0},
      {"rightAnkle", 5, 0.01, -0.40, 0.0},
      {"spine3", 6, 0.0, 0.05, 0.0},
      {"leftFoot", 7, 0.0, -0.06, 0.12},
      {"rightFoot", 8, 0.0, -0.06, 0.12},
      {"neck", 9, 0.0, 0.21, 0.0},
      {"leftCollar", 9, 0.08, 0.10, 0.0},
      {"rightCollar", 9, -0.08, 0.10, 0.0},
      {"head", 12, 0.0, 0.09, 0.0},
      {"leftShoulder", 13, 0.10, 0.02, 0.0},
      {"rightShoulder", 14, -0.10, 0.02, 0.0},
      {"leftElbow", 16, 0.26, 0.0, 0.0},
      {"rightElbow", 17, -0.26, 0.0, 0.0},
      {"leftWrist", 18, 0.25, 0.0, 0.0},
      {"rightWrist", 19, -0.25, 0.0, 0.0},
      {"leftHand", 20, 0.08, 0.0, 0.0},
      {"rightHand", 21, -0.08, 0.0, 0.0},
  };
  for (const J& j : table) {
    s.names.emplace_back(j.name);
    s.parents.push_back(j.parent);
    s.offsets.emplace_back(j.x, j.y, j.z);
  }
  s.validate();
  return s;
}

inline Skeleton load_skeleton(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open skeleton file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ParseError(std::string("bad skeleton json: ") + e.what());
  }
  Skeleton s;
  for (const auto& n : j.at("names")) s.names.push_back(n.get<std::string>());
  for (const auto& p : j.at("parents")) s.parents.push_back(p.get<int>());
  for (const auto& o : j.at("offsets"))
    s.offsets.emplace_back(o.at(0).get<double>(), o.at(1).get<double>(), o.at(2).get<double>());
  s.validate();
  return s;
}

inline void save_skeleton(const Skeleton& s, const std::string& path) {
  nlohmann::json j;
  j["names"] = s.names;
  j["parents"] = s.parents;
  auto& offs = j["offsets"] = nlohmann::json::array();
  for (const Vec3& o : s.offsets) offs.push_back({o.x(), o.y(), o.z()});
  std::ofstream out(path);
  if (!out) throw IoError("cannot write skeleton file: " + path);
  out << j.dump(2) << "\n";
}

// Sum of bone lengths from each joint up to (excluding) the root.
inline std::vector<double> bone_path_sums(const Skeleton& skel) {
  skel.validate();
  std::vector<double> l(skel.joint_count(), 0.0);
  for (int i = 1; i < skel.joint_count(); ++i) {
    l[i] = l[skel.parents[i]] + skel.offsets[i].norm();
  }
  return l;
}

struct JointWeights {
  std::vector<double> path_sum;  // l_i, meters
  std::vector<double> w;         // in [0, 1); forced to 0 on excluded joints

  bool excluded(int joint) const { return excluded_joints().count(joint) > 0; }
};

// w = 4 l^2 / (4 l^2 + 1) outside the excluded set, 0 inside it. Distal
// joints (longer chains) get proportionally larger weight.
inline JointWeights joint_weights(const std::vector<double>& path_sums) {
  JointWeights jw;
  jw.path_sum = path_sums;
  jw.w.resize(path_sums.size());
  for (std::size_t i = 0; i < path_sums.size(); ++i) {
    if (excluded_joints().count(static_cast<int>(i))) {
      jw.w[i] = 0.0;
    } else {
      double l2 = path_sums[i] * path_sums[i];
      jw.w[i] = 4.0 * l2 / (4.0 * l2 + 1.0);
    }
  }
  return jw;
}

inline JointWeights joint_weights(const Skeleton& skel) {
  return joint_weights(bone_path_sums(skel));
}

enum class RotationParam { AxisAngle, SixD };

inline int rotation_param_size(RotationParam p) {
  return p == RotationParam::AxisAngle ? 3 : 6;
}

// Per-frame, per-joint local rotations in one of two parameterizations.
// Root translation is fixed at the origin; the root entry holds the global
// orientation.
struct PoseParams {
  RotationParam param = RotationParam::AxisAngle;
  int frames = 0;
  int joints = 0;
  std::vector<double> values;  // frames x joints x param_size

  int param_size() const { return rotation_param_size(param); }

  double* at(int frame, int joint) {
    return values.data() + (static_cast<std::size_t>(frame) * joints + joint) * param_size();
  }
  const double* at(int frame, int joint) const {
    return values.data() + (static_cast<std::size_t>(frame) * joints + joint) * param_size();
  }

  void validate() const {
    if (frames < 1 || joints < 2) throw ValidationError("pose params need frames >= 1, joints >= 2");
    if (values.size() != static_cast<std::size_t>(frames) * joints * param_size())
      throw ValidationError("pose param array length mismatch");
  }

  Mat3 rotation(int frame, int joint) const {
    const double* p = at(frame, joint);
    if (param == RotationParam::AxisAngle) return rotation_from_axis_angle(Vec3(p[0], p[1], p[2]));
    Vec6 u;
    for (int i = 0; i < 6; ++i) u(i) = p[i];
    try {
      return rotation_from_sixd(u);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at frame " + std::to_string(frame) +
                         ", joint " + std::to_string(joint));
    }
  }
};

inline PoseParams identity_pose(RotationParam param, int frames, int joints) {
  PoseParams p;
  p.param = param;
  p.frames = frames;
  p.joints = joints;
  p.values.assign(static_cast<std::size_t>(frames) * joints * p.param_size(), 0.0);
  if (param == RotationParam::SixD) {
    // Identity encodes as the first two basis vectors.
    for (int f = 0; f < frames; ++f)
      for (int j = 0; j < joints; ++j) {
        double* v = p.at(f, j);
        v[0] = 1.0;
        v[4] = 1.0;
      }
  }
  return p;
}

inline PoseParams convert_pose(const PoseParams& in, RotationParam target) {
  if (in.param == target) return in;
  PoseParams out;
  out.param = target;
  out.frames = in.frames;
  out.joints = in.joints;
  out.values.resize(static_cast<std::size_t>(in.frames) * in.joints * out.param_size());
  for (int f = 0; f < in.frames; ++f)
    for (int j = 0; j < in.joints; ++j) {
      Mat3 r = in.rotation(f, j);
      double* dst = out.at(f, j);
      if (target == RotationParam::AxisAngle) {
        Vec3 aa = axis_angle_from_rotation(r);
        dst[0] = aa.x();
        dst[1] = aa.y();
        dst[2] = aa.z();
      } else {
        Vec6 u = sixd_from_rotation(r);
        for (int i = 0; i < 6; ++i) dst[i] = u(i);
      }
    }
  return out;
}

// Forward kinematics for a single frame. World rotation of joint i is
// R_parent * R_local_i; world position is p_parent + R_parent * offset_i.
// The root is pinned at the origin.
struct FkFrame {
  std::vector<Mat3> local;
  std::vector<Mat3> world;
  std::vector<Vec3> positions;
};

inline FkFrame fk_frame(const Skeleton& skel, const PoseParams& pose, int frame) {
  const int k = skel.joint_count();
  FkFrame out;
  out.local.resize(k);
  out.world.resize(k);
  out.positions.resize(k);
  for (int i = 0; i < k; ++i) {
    out.local[i] = pose.rotation(frame, i);
    if (skel.parents[i] < 0) {
      out.world[i] = out.local[i];
      out.positions[i] = Vec3::Zero();
    } else {
      int p = skel.parents[i];
      out.world[i] = out.world[p] * out.local[i];
      out.positions[i] = out.positions[p] + out.world[p] * skel.offsets[i];
    }
  }
  return out;
}

// All-frame FK: returns frame-major positions (frames x joints x 3).
inline std::vector<double> forward_kinematics(const Skeleton& skel, const PoseParams& pose) {
  pose.validate();
  if (pose.joints != skel.joint_count())
    throw DimensionError("pose joint count does not match skeleton");
  std::vector<double> positions(static_cast<std::size_t>(pose.frames) * pose.joints * 3);
  for (int f = 0; f < pose.frames; ++f) {
    FkFrame fr = fk_frame(skel, pose, f);
    for (int j = 0; j < pose.joints; ++j) {
      double* dst = positions.data() + (static_cast<std::size_t>(f) * pose.joints + j) * 3;
      dst[0] = fr.positions[j].x();
      dst[1] = fr.positions[j].y();
      dst[2] = fr.positions[j].z();
    }
  }
  return positions;
}

// Reverse-mode sweep through one FK frame: given dE/dposition for every
// joint, accumulate dE/d(pose params of this frame) into grad_out (layout:
// joints x param_size for this frame).
inline void fk_frame_backward(const Skeleton& skel, const PoseParams& pose, int frame,
                              const FkFrame& fwd, const std::vector<Vec3>& pos_adjoint,
                              double* grad_out) {
  const int k = skel.joint_count();
  std::vector<Vec3> p_bar(pos_adjoint);
  std::vector<Mat3> rw_bar(k, Mat3::Zero());
  std::vector<Mat3> rl_bar(k, Mat3::Zero());
  for (int i = k - 1; i >= 0; --i) {
    int p = skel.parents[i];
    if (p >= 0) {
      // position_i = position_p + world_p * offset_i
      p_bar[p] += p_bar[i];
      rw_bar[p] += p_bar[i] * skel.offsets[i].transpose();
      // world_i = world_p * local_i
      rw_bar[p] += rw_bar[i] * fwd.local[i].transpose();
      rl_bar[i] = fwd.world[p].transpose() * rw_bar[i];
    } else {
      rl_bar[i] = rw_bar[i];
    }
  }
  const int ps = pose.param_size();
  for (int i = 0; i < k; ++i) {
    const double* v = pose.at(frame, i);
    if (pose.param == RotationParam::AxisAngle) {
      auto dj = rotation_from_axis_angle_jacobian(Vec3(v[0], v[1], v[2]));
      for (int a = 0; a < 3; ++a)
        grad_out[i * ps + a] += (rl_bar[i].array() * dj[a].array()).sum();
    } else {
      Vec6 u;
      for (int a = 0; a < 6; ++a) u(a) = v[a];
      auto dj = rotation_from_sixd_jacobian(u);
      for (int a = 0; a < 6; ++a)
        grad_out[i * ps + a] += (rl_bar[i].array() * dj[a].array()).sum();
    }
  }
}

// Dense Jacobian of one frame's joint positions with respect to that frame's
// pose parameters: (joints*3) rows by (joints*param_size) columns. Assembled
// from reverse sweeps; intended for verification and small problems.
inline Eigen::MatrixXd fk_jacobian(const Skeleton& skel, const PoseParams& pose, int frame) {
  const int k = skel.joint_count();
  const int ps = pose.param_size();
  FkFrame fwd = fk_frame(skel, pose, frame);
  Eigen::MatrixXd jac(k * 3, k * ps);
  std::vector<double> row(static_cast<std::size_t>(k) * ps);
  for (int j = 0; j < k; ++j) {
    for (int axis = 0; axis < 3; ++axis) {
      std::vector<Vec3> adj(k, Vec3::Zero());
      adj[j](axis) = 1.0;
      std::fill(row.begin(), row.end(), 0.0);
      fk_frame_backward(skel, pose, frame, fwd, adj, row.data());
      for (std::size_t c = 0; c < row.size(); ++c) jac(j * 3 + axis, static_cast<int>(c)) = row[c];
    }
  }
  return jac;
}

}  // namespace moprior
