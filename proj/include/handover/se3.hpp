// Copyright 2026 The Flexible Handover Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <numbers>

namespace handover {

template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;

using Matrix3d = Matrix3<double>;
using Vector3d = Vector3<double>;

/// Orthonormality drift above which compose() re-projects onto SO(3).
inline constexpr double kRotationDriftTolerance = 1e-9;

template <typename Scalar>
Scalar deg2rad(Scalar deg) {
  return deg * std::numbers::pi_v<Scalar> / Scalar(180);
}
template <typename Scalar>
Scalar rad2deg(Scalar rad) {
  return rad * Scalar(180) / std::numbers::pi_v<Scalar>;
}

template <typename Scalar>
Matrix3<Scalar> rotation_x(Scalar angle) {
  return Eigen::AngleAxis<Scalar>(angle, Vector3<Scalar>::UnitX()).toRotationMatrix();
}
template <typename Scalar>
Matrix3<Scalar> rotation_y(Scalar angle) {
  return Eigen::AngleAxis<Scalar>(angle, Vector3<Scalar>::UnitY()).toRotationMatrix();
}
template <typename Scalar>
Matrix3<Scalar> rotation_z(Scalar angle) {
  return Eigen::AngleAxis<Scalar>(angle, Vector3<Scalar>::UnitZ()).toRotationMatrix();
}

/// Max-abs deviation of RᵀR from identity.
template <typename Derived>
typename Derived::Scalar rotation_drift(const Eigen::MatrixBase<Derived>& r) {
  using Scalar = typename Derived::Scalar;
  return (r.transpose() * r - Matrix3<Scalar>::Identity()).cwiseAbs().maxCoeff();
}

/// Nearest rotation in the Frobenius sense (polar factor), det forced to +1.
template <typename Derived>
Matrix3<typename Derived::Scalar> orthonormalize(const Eigen::MatrixBase<Derived>& r) {
  using Scalar = typename Derived::Scalar;
  Eigen::JacobiSVD<Matrix3<Scalar>> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3<Scalar> u = svd.matrixU();
  const Matrix3<Scalar> v = svd.matrixV();
  if ((u * v.transpose()).determinant() < Scalar(0)) u.col(2) *= Scalar(-1);
  return u * v.transpose();
}

/// Rigid transform: x ↦ rotation·x + translation.
template <typename Scalar>
struct PoseT {
  Matrix3<Scalar> rotation = Matrix3<Scalar>::Identity();
  Vector3<Scalar> translation = Vector3<Scalar>::Zero();

  static PoseT Identity() { return {}; }

  PoseT() = default;
  PoseT(const Matrix3<Scalar>& r, const Vector3<Scalar>& t) : rotation(r), translation(t) {}

  Vector3<Scalar> operator*(const Vector3<Scalar>& p) const { return rotation * p + translation; }

  template <typename Other>
  PoseT<Other> cast() const {
    return {rotation.template cast<Other>(), translation.template cast<Other>()};
  }
};

using Pose = PoseT<double>;

/// a∘b: applies b first, then a.
template <typename Scalar>
PoseT<Scalar> compose(const PoseT<Scalar>& a, const PoseT<Scalar>& b) {
  PoseT<Scalar> out(a.rotation * b.rotation, a.rotation * b.translation + a.translation);
  if (rotation_drift(out.rotation) > Scalar(kRotationDriftTolerance)) {
    out.rotation = orthonormalize(out.rotation);
  }
  return out;
}

template <typename Scalar>
PoseT<Scalar> operator*(const PoseT<Scalar>& a, const PoseT<Scalar>& b) {
  return compose(a, b);
}

template <typename Scalar>
PoseT<Scalar> invert(const PoseT<Scalar>& p) {
  const Matrix3<Scalar> rt = p.rotation.transpose();
  return {rt, -(rt * p.translation)};
}

/// Angle in [0, π] of r_aᵀ·r_b.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar rotation_geodesic(const Eigen::MatrixBase<DerivedA>& r_a,
                                            const Eigen::MatrixBase<DerivedB>& r_b) {
  using Scalar = typename DerivedA::Scalar;
  const Matrix3<Scalar> rel = r_a.transpose() * r_b;
  const Vector3<Scalar> axis_sin(rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0),
                                 rel(1, 0) - rel(0, 1));
  const Scalar sin_theta = Scalar(0.5) * axis_sin.norm();
  const Scalar cos_theta = Scalar(0.5) * (rel.trace() - Scalar(1));
  return std::atan2(sin_theta, std::clamp(cos_theta, Scalar(-1), Scalar(1)));
}

/// Unit quaternion (w, x, y, z) with w ≥ 0.
template <typename Derived>
Eigen::Quaternion<typename Derived::Scalar> to_quaternion(const Eigen::MatrixBase<Derived>& r) {
  using Scalar = typename Derived::Scalar;
  Eigen::Quaternion<Scalar> q{Matrix3<Scalar>(r)};
  q.normalize();
  if (q.w() < Scalar(0)) q.coeffs() *= Scalar(-1);
  return q;
}

template <typename Scalar>
Matrix3<Scalar> from_quaternion(Scalar w, Scalar x, Scalar y, Scalar z) {
  return Eigen::Quaternion<Scalar>(w, x, y, z).normalized().toRotationMatrix();
}

/// Gripper approach direction: first rotation column.
template <typename Derived>
Vector3<typename Derived::Scalar> approach_axis(const Eigen::MatrixBase<Derived>& r) {
  return r.col(0);
}

/// The parallel-jaw equivalent of r, rotated half a turn about its approach axis.
template <typename Derived>
Matrix3<typename Derived::Scalar> flip_about_approach(const Eigen::MatrixBase<Derived>& r) {
  using Scalar = typename Derived::Scalar;
  Matrix3<Scalar> out = r;
  out.col(1) *= Scalar(-1);
  out.col(2) *= Scalar(-1);
  return out;
}

/// Geodesic distance treating a grasp and its half-turn flip as equivalent.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar symmetric_grasp_geodesic(const Eigen::MatrixBase<DerivedA>& r_a,
                                                   const Eigen::MatrixBase<DerivedB>& r_b) {
  return std::min(rotation_geodesic(r_a, r_b), rotation_geodesic(r_a, flip_about_approach(r_b)));
}

/// Rotation with approach axis straight down (world −z), then yawed about world z.
inline Matrix3d top_down_rotation(double yaw) {
  return rotation_z(yaw) * rotation_y(std::numbers::pi / 2.0);
}

/// 7-DoF parallel-jaw grasp [R, t, w] with detector score.
struct Grasp {
  Pose pose;
  double width = 0.0;
  double score = 0.0;
  int candidate_index = 0;
  /// Index of the object annotation this detection came from; -1 for
  /// hallucinated candidates. Only the learned feature channel reads it.
  int annotation = -1;
};

/// Grasp expressed in a new frame: pose ↦ frame∘pose.
inline Grasp transformed(const Pose& frame, Grasp g) {
  g.pose = compose(frame, g.pose);
  return g;
}

/// Translation of a world-frame grasp in the object frame: Rᵀ(t_g − t_obj).
inline Vector3d to_object_frame(const Grasp& g, const Pose& object_pose) {
  return object_pose.rotation.transpose() * (g.pose.translation - object_pose.translation);
}

/// Euclidean distance between grasp translations in the object frame.
inline double object_frame_distance(const Grasp& a, const Grasp& b, const Pose& object_pose) {
  return (to_object_frame(a, object_pose) - to_object_frame(b, object_pose)).norm();
}

/// Same metric across two observations, each with its own object pose.
inline double object_frame_distance(const Grasp& a, const Pose& object_a, const Grasp& b,
                                    const Pose& object_b) {
  return (to_object_frame(a, object_a) - to_object_frame(b, object_b)).norm();
}

/// Rotation difference of two grasps, both expressed in their object frames.
inline double object_frame_rotation(const Grasp& a, const Pose& object_a, const Grasp& b,
                                    const Pose& object_b) {
  return rotation_geodesic(object_a.rotation.transpose() * a.pose.rotation,
                           object_b.rotation.transpose() * b.pose.rotation);
}

}  // namespace handover
