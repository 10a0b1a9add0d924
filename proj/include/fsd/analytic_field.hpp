#pragma once

#include <cmath>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fsd/types.hpp"

namespace fsd {

/// Closed-form signed distance fields living in the canonical cube [-1,1]^3.
/// These are exact SDFs and serve as oracles for the learned decoders.
class AnalyticField {
 public:
  struct Sphere {
    double radius;
  };
  struct Box {
    Vec3 half_extents;
  };
  /// Torus around the y axis.
  struct Torus {
    double major_radius;
    double minor_radius;
  };
  using Shape = std::variant<Sphere, Box, Torus>;

  static AnalyticField sphere(double radius) {
    if (!(radius > 0.0) || radius > 1.0)
      throw InvalidArgument("sphere radius must lie in (0, 1]");
    return AnalyticField(Sphere{radius});
  }

  static AnalyticField box(const Vec3& half_extents) {
    if (!(half_extents.array() > 0.0).all() || !(half_extents.array() <= 1.0).all())
      throw InvalidArgument("box half extents must lie in (0, 1]");
    return AnalyticField(Box{half_extents});
  }

  static AnalyticField torus(double major_radius, double minor_radius) {
    if (!(major_radius > 0.0) || !(minor_radius > 0.0))
      throw InvalidArgument("torus radii must be positive");
    if (major_radius + minor_radius > 1.0)
      throw InvalidArgument("torus must fit inside the unit cube");
    return AnalyticField(Torus{major_radius, minor_radius});
  }

  const Shape& shape() const { return shape_; }

  double value(const Vec3& q) const {
    return std::visit([&](const auto& s) { return value_of(s, q); }, shape_);
  }

  /// Exact gradient. Returns the zero vector where the SDF is not
  /// differentiable and no direction is preferred (e.g. a sphere center).
  Vec3 gradient(const Vec3& q) const {
    return std::visit([&](const auto& s) { return gradient_of(s, q); }, shape_);
  }

  void values(std::span<const Vec3> points, std::span<double> out) const {
    for (std::size_t i = 0; i < points.size(); ++i) out[i] = value(points[i]);
  }

  std::vector<double> values(std::span<const Vec3> points) const {
    std::vector<double> out(points.size());
    values(points, out);
    return out;
  }

  std::vector<Vec3> gradients(std::span<const Vec3> points) const {
    std::vector<Vec3> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(gradient(p));
    return out;
  }

  std::string describe() const {
    struct {
      std::string operator()(const Sphere& s) const {
        return "sphere:" + std::to_string(s.radius);
      }
      std::string operator()(const Box& b) const {
        return "box:" + std::to_string(b.half_extents.x()) + "," +
               std::to_string(b.half_extents.y()) + "," + std::to_string(b.half_extents.z());
      }
      std::string operator()(const Torus& t) const {
        return "torus:" + std::to_string(t.major_radius) + "," + std::to_string(t.minor_radius);
      }
    } v;
    return std::visit(v, shape_);
  }

 private:
  explicit AnalyticField(Shape s) : shape_(std::move(s)) {}

  static double value_of(const Sphere& s, const Vec3& q) { return q.norm() - s.radius; }

  static Vec3 gradient_of(const Sphere&, const Vec3& q) {
    const double n = q.norm();
    if (n == 0.0) return Vec3::Zero();
    return q / n;
  }

  static double value_of(const Box& b, const Vec3& q) {
    const Vec3 d = q.cwiseAbs() - b.half_extents;
    const double outside = d.cwiseMax(0.0).norm();
    const double inside = std::min(d.maxCoeff(), 0.0);
    return outside + inside;
  }

  static Vec3 gradient_of(const Box& b, const Vec3& q) {
    const Vec3 d = q.cwiseAbs() - b.half_extents;
    Vec3 sign;
    for (int i = 0; i < 3; ++i) sign[i] = q[i] < 0.0 ? -1.0 : 1.0;
    if (d.maxCoeff() > 0.0) {
      const Vec3 o = d.cwiseMax(0.0);
      return o.cwiseProduct(sign) / o.norm();
    }
    Eigen::Index axis = 0;
    d.maxCoeff(&axis);
    Vec3 g = Vec3::Zero();
    g[axis] = sign[axis];
    return g;
  }

  static double value_of(const Torus& t, const Vec3& q) {
    const double rho = std::hypot(q.x(), q.z());
    return std::hypot(rho - t.major_radius, q.y()) - t.minor_radius;
  }

  static Vec3 gradient_of(const Torus& t, const Vec3& q) {
    const double rho = std::hypot(q.x(), q.z());
    const double a = rho - t.major_radius;
    const double len = std::hypot(a, q.y());
    if (len == 0.0 || rho == 0.0) return Vec3::Zero();
    const double na = a / len;
    return Vec3(na * q.x() / rho, q.y() / len, na * q.z() / rho);
  }

  Shape shape_;
};

}  // namespace fsd
