#pragma once

#include <chrono>
#include <cmath>
#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "asyncbev/errors.hpp"

namespace asyncbev {

using Duration = std::chrono::microseconds;

inline double to_seconds(Duration d) { return static_cast<double>(d.count()) * 1e-6; }

/// Microseconds since scenario start. All duration arithmetic stays integral;
/// conversion to seconds only happens where a velocity is multiplied in.
class Timestamp {
 public:
  constexpr Timestamp() = default;
  constexpr explicit Timestamp(std::int64_t micros) : micros_(micros) {
    if (micros < 0) throw RangeError("timestamp must be non-negative");
  }

  constexpr std::int64_t micros() const { return micros_; }
  double seconds() const { return static_cast<double>(micros_) * 1e-6; }

  constexpr auto operator<=>(const Timestamp&) const = default;

  friend constexpr Duration operator-(Timestamp a, Timestamp b) { return Duration(a.micros_ - b.micros_); }
  friend constexpr Timestamp operator+(Timestamp a, Duration d) { return Timestamp(a.micros_ + d.count()); }
  friend constexpr Timestamp operator-(Timestamp a, Duration d) { return Timestamp(a.micros_ - d.count()); }

 private:
  std::int64_t micros_ = 0;
};

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  bool operator==(const Point3&) const = default;

  Eigen::Vector3d vec() const { return {x, y, z}; }
  static Point3 from(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline double distance(const Point3& a, const Point3& b) { return (a.vec() - b.vec()).norm(); }

// Planar vector (velocities), meters per second unless stated otherwise.
struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Vec2&) const = default;
  double norm() const { return std::hypot(x, y); }
};

/// Unit quaternion rotation.
class Rotation {
 public:
  Rotation() : q_(Eigen::Quaterniond::Identity()) {}

  // Normalizes unless the input is already unit to within rounding, so that
  // stored rotations read back bit-identical.
  static Rotation from_wxyz(double w, double x, double y, double z) {
    Eigen::Quaterniond q(w, x, y, z);
    const double n2 = q.squaredNorm();
    if (!std::isfinite(n2) || n2 < 1e-24) throw PreconditionError("rotation quaternion must be finite and nonzero");
    if (std::abs(n2 - 1.0) > 4e-16) q.normalize();
    return Rotation(q);
  }

  static Rotation identity() { return {}; }

  static Rotation about_z(double radians) {
    return Rotation(Eigen::Quaterniond(Eigen::AngleAxisd(radians, Eigen::Vector3d::UnitZ())));
  }

  static Rotation about_axis(const Eigen::Vector3d& axis, double radians) {
    return Rotation(Eigen::Quaterniond(Eigen::AngleAxisd(radians, axis.normalized())));
  }

  double w() const { return q_.w(); }
  double x() const { return q_.x(); }
  double y() const { return q_.y(); }
  double z() const { return q_.z(); }
  const Eigen::Quaterniond& quaternion() const { return q_; }

  Rotation operator*(const Rotation& other) const { return Rotation((q_ * other.q_).normalized()); }
  Rotation inverse() const { return Rotation(q_.conjugate()); }

  Eigen::Vector3d rotate(const Eigen::Vector3d& v) const { return q_ * v; }
  Point3 rotate(const Point3& p) const { return Point3::from(q_ * p.vec()); }

  // Heading of the rotated x axis in the xy plane.
  double yaw() const {
    const Eigen::Vector3d fwd = q_ * Eigen::Vector3d::UnitX();
    return std::atan2(fwd.y(), fwd.x());
  }

  // Shortest-arc spherical interpolation, fraction in [0, 1].
  Rotation slerp(const Rotation& to, double fraction) const {
    if (fraction == 0.0) return *this;
    if (fraction == 1.0) return to;
    return Rotation(q_.slerp(fraction, to.q_).normalized());
  }

  bool operator==(const Rotation& o) const {
    return q_.w() == o.q_.w() && q_.x() == o.q_.x() && q_.y() == o.q_.y() && q_.z() == o.q_.z();
  }

 private:
  explicit Rotation(const Eigen::Quaterniond& q) : q_(q) {}
  Eigen::Quaterniond q_;
};

/// Rigid transform mapping points from a child frame into a parent frame:
/// p_parent = R * p_child + t.
struct Pose {
  Rotation rotation;
  Point3 translation;

  static Pose identity() { return {}; }
  static Pose translate(double x, double y, double z) { return {Rotation::identity(), {x, y, z}}; }
  static Pose rot_z(double radians) { return {Rotation::about_z(radians), {}}; }
  static Pose planar(double x, double y, double yaw) { return {Rotation::about_z(yaw), {x, y, 0.0}}; }

  bool operator==(const Pose&) const = default;
};

inline Point3 apply(const Pose& p, const Point3& pt) {
  return Point3::from(p.rotation.rotate(pt.vec()) + p.translation.vec());
}

// a ∘ b: apply(compose(a, b), x) == apply(a, apply(b, x)).
inline Pose compose(const Pose& a, const Pose& b) {
  return {a.rotation * b.rotation, apply(a, b.translation)};
}

inline Pose invert(const Pose& p) {
  const Rotation inv = p.rotation.inverse();
  return {inv, Point3::from(-inv.rotate(p.translation.vec()))};
}

/// Relative transform taking points expressed in the ego frame at capture
/// (src_ego, ego-to-global) into the ego frame at reference (dst_ego):
/// src ego -> global -> dst ego.
inline Pose relative_pose(const Pose& src_ego, const Pose& dst_ego) {
  return compose(invert(dst_ego), src_ego);
}

inline std::vector<Point3> retarget_points(std::span<const Point3> points, const Pose& src_ego, const Pose& dst_ego) {
  const Pose rel = relative_pose(src_ego, dst_ego);
  std::vector<Point3> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(apply(rel, p));
  return out;
}

// Planar vectors transform by rotation only; any vertical component the
// rotation would introduce is dropped.
inline Vec2 rotate_planar(const Rotation& r, const Vec2& v) {
  const Eigen::Vector3d out = r.rotate(Eigen::Vector3d(v.x, v.y, 0.0));
  return {out.x(), out.y()};
}

}  // namespace asyncbev
