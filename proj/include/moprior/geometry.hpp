#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>

#include "moprior/errors.hpp"

namespace moprior {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

// Axis-angle (rotation vector) to rotation matrix.
inline Mat3 rotation_from_axis_angle(const Vec3& v) {
  double theta2 = v.squaredNorm();
  if (theta2 < 1e-16) {
    // Second-order Taylor keeps the map smooth through the origin.
    return Mat3::Identity() + skew(v) + 0.5 * skew(v) * skew(v);
  }
  double theta = std::sqrt(theta2);
  Mat3 k = skew(v / theta);
  return Mat3::Identity() + std::sin(theta) * k + (1.0 - std::cos(theta)) * k * k;
}

// Partial derivatives of rotation_from_axis_angle with respect to the three
// rotation-vector components, exact away from the origin with a Taylor
// branch near it.
inline std::array<Mat3, 3> rotation_from_axis_angle_jacobian(const Vec3& v) {
  std::array<Mat3, 3> d;
  double theta2 = v.squaredNorm();
  Mat3 r = rotation_from_axis_angle(v);
  if (theta2 < 1e-10) {
    Mat3 vx = skew(v);
    for (int i = 0; i < 3; ++i) {
      Mat3 ex = skew(Vec3::Unit(i));
      d[i] = ex + 0.5 * (ex * vx + vx * ex);
    }
    return d;
  }
  Mat3 vx = skew(v);
  Mat3 eye_minus_r = Mat3::Identity() - r;
  for (int i = 0; i < 3; ++i) {
    Vec3 col = eye_minus_r.col(i);
    d[i] = ((v(i) * vx + skew(v.cross(col))) / theta2) * r;
  }
  return d;
}

// Rotation matrix to axis-angle (principal branch, angle in [0, pi]).
inline Vec3 axis_angle_from_rotation(const Mat3& r) {
  double cos_theta = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
  double theta = std::acos(cos_theta);
  Vec3 w(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  if (theta < 1e-8) {
    return 0.5 * w;  // first-order
  }
  if (theta > M_PI - 1e-6) {
    // Near pi: the antisymmetric part degenerates; recover the axis from
    // the symmetric part.
    Mat3 s = 0.5 * (r + Mat3::Identity());
    Vec3 axis(std::sqrt(std::max(0.0, s(0, 0))), std::sqrt(std::max(0.0, s(1, 1))),
              std::sqrt(std::max(0.0, s(2, 2))));
    // Fix signs using the largest component.
    int k = 0;
    axis.cwiseAbs().maxCoeff(&k);
    if (axis(k) > 0) {
      for (int i = 0; i < 3; ++i) {
        if (i == k) continue;
        double off = s(k, i);
        if (off < 0) axis(i) = -axis(i);
      }
    }
    axis.normalize();
    // Keep consistency with the antisymmetric part when it is nonzero.
    if (w.dot(axis) < 0) axis = -axis;
    return theta * axis;
  }
  return (theta / (2.0 * std::sin(theta))) * w;
}

// First two columns of a rotation matrix, the continuous 6D encoding.
inline Vec6 sixd_from_rotation(const Mat3& r) {
  Vec6 u;
  u.head<3>() = r.col(0);
  u.tail<3>() = r.col(1);
  return u;
}

// Gram-Schmidt decode of the 6D encoding. Throws on degenerate input.
inline Mat3 rotation_from_sixd(const Vec6& u) {
  Vec3 a1 = u.head<3>();
  Vec3 a2 = u.tail<3>();
  double n1 = a1.norm();
  if (n1 < 1e-12) throw NumericError("degenerate 6d rotation: first column has near-zero norm");
  Vec3 b1 = a1 / n1;
  Vec3 w = a2 - b1.dot(a2) * b1;
  double n2 = w.norm();
  if (n2 < 1e-12) throw NumericError("degenerate 6d rotation: columns are near-parallel");
  Vec3 b2 = w / n2;
  Mat3 r;
  r.col(0) = b1;
  r.col(1) = b2;
  r.col(2) = b1.cross(b2);
  return r;
}

// Partial derivatives of rotation_from_sixd with respect to the six inputs.
inline std::array<Mat3, 6> rotation_from_sixd_jacobian(const Vec6& u) {
  Vec3 a1 = u.head<3>();
  Vec3 a2 = u.tail<3>();
  double n1 = a1.norm();
  if (n1 < 1e-12) throw NumericError("degenerate 6d rotation: first column has near-zero norm");
  Vec3 b1 = a1 / n1;
  Vec3 w = a2 - b1.dot(a2) * b1;
  double n2 = w.norm();
  if (n2 < 1e-12) throw NumericError("degenerate 6d rotation: columns are near-parallel");
  Vec3 b2 = w / n2;

  // db1/da1 = (I - b1 b1^T) / |a1|
  Mat3 db1_da1 = (Mat3::Identity() - b1 * b1.transpose()) / n1;
  // w = a2 - (b1 . a2) b1
  // dw/db1 = -(b1 . a2) I - b1 a2^T ; dw/da2 = I - b1 b1^T
  Mat3 dw_db1 = -(b1.dot(a2)) * Mat3::Identity() - b1 * a2.transpose();
  Mat3 dw_da2 = Mat3::Identity() - b1 * b1.transpose();
  // db2/dw = (I - b2 b2^T) / |w|
  Mat3 db2_dw = (Mat3::Identity() - b2 * b2.transpose()) / n2;

  Mat3 db2_da1 = db2_dw * dw_db1 * db1_da1;
  Mat3 db2_da2 = db2_dw * dw_da2;

  std::array<Mat3, 6> d;
  for (int i = 0; i < 6; ++i) {
    Vec3 db1 = (i < 3) ? Vec3(db1_da1.col(i)) : Vec3(Vec3::Zero());
    Vec3 db2 = (i < 3) ? Vec3(db2_da1.col(i)) : Vec3(db2_da2.col(i - 3));
    Vec3 db3 = db1.cross(b2) + b1.cross(db2);
    Mat3 m;
    m.col(0) = db1;
    m.col(1) = db2;
    m.col(2) = db3;
    d[i] = m;
  }
  return d;
}

inline Eigen::Vector4d quat_from_rotation(const Mat3& r) {
  Eigen::Quaterniond q(r);
  q.normalize();
  return Eigen::Vector4d(q.w(), q.x(), q.y(), q.z());
}

// Normalized linear quaternion interpolation with hemisphere alignment.
inline Mat3 rotation_nlerp(const Mat3& a, const Mat3& b, double t) {
  Eigen::Quaterniond qa(a), qb(b);
  if (qa.dot(qb) < 0) qb.coeffs() = -qb.coeffs();
  Eigen::Quaterniond q;
  q.coeffs() = (1.0 - t) * qa.coeffs() + t * qb.coeffs();
  q.normalize();
  return q.toRotationMatrix();
}

}  // namespace moprior
