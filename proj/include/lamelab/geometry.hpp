#pragma once

#include "lamelab/common.hpp"

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace lamelab {

struct Box {
    Vec3 lo = Vec3::Zero();
    Vec3 hi = Vec3::Ones();

    Vec3 center() const { return 0.5 * (lo + hi); }
    Vec3 extent() const { return hi - lo; }
    double diameter() const { return extent().norm(); }
    double volume() const { return extent().prod(); }
    bool contains(const Vec3& x, double tol = 0.0) const;
    // Euclidean distance from x to the closed box (0 inside).
    double distance(const Vec3& x) const;
    // Distance from an interior point to the box boundary (0 outside).
    double depth(const Vec3& x) const;
    Box scaled(double s) const { return {s * lo, s * hi}; }
};

double box_box_distance(const Box& a, const Box& b);

struct DomainSpec {
    Box box;
    double rho0 = 1.0;
    double M0 = 1.0;
    double M1 = 1.0;
    double alpha = 1.0;

    // Throws InputError if |Omega| > M1 rho0^3 or any constant is nonpositive.
    void validate() const;
    DomainSpec scaled(double s) const;
};

/// Inclusion primitive. Balls and ellipsoids are the user-facing kinds; the
/// half-space is used internally for the flat-interface reference problem
/// (inside means (x - point) . normal < 0).
class InclusionGeometry {
public:
    enum class Kind { Ball, Ellipsoid, HalfSpace };

    static InclusionGeometry ball(const Vec3& center, double radius);
    static InclusionGeometry ellipsoid(const Vec3& center, const Vec3& semiaxes,
                                       const Mat3& rotation = Mat3::Identity());
    static InclusionGeometry half_space(const Vec3& point, const Vec3& outward_normal);

    Kind kind() const { return kind_; }
    const Vec3& center() const { return center_; }
    const Vec3& semiaxes() const { return axes_; }
    const Mat3& rotation() const { return rot_; }
    double radius() const { return axes_[0]; }

    bool contains(const Vec3& x) const;
    double signed_distance(const Vec3& x) const;
    // Distance to the closed set D (0 inside).
    double distance(const Vec3& x) const { return std::max(0.0, signed_distance(x)); }
    // Closest point on the boundary.
    Vec3 project(const Vec3& x) const;
    // Outward unit normal at a boundary point (or at the projection of x).
    Vec3 normal(const Vec3& x) const;

    Box bounding_box() const;
    InclusionGeometry translated(const Vec3& t) const;
    InclusionGeometry scaled(double s) const;  // about the origin
    bool operator==(const InclusionGeometry& o) const;

    std::string describe() const;

private:
    Kind kind_ = Kind::Ball;
    Vec3 center_ = Vec3::Zero();
    Vec3 axes_ = Vec3::Ones();
    Mat3 rot_ = Mat3::Identity();
};

/// Fibonacci-lattice sample of a closed inclusion surface.
struct SurfaceSample {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;
    double spacing = 0.0;  // max nearest-neighbour distance
};

SurfaceSample sample_surface(const InclusionGeometry& g, int count = 4096);
void write_surface_csv(const SurfaceSample& s, std::ostream& os);

/// Brute-force Hausdorff distance between two point clouds.
double hausdorff_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

/// Hausdorff distance between two inclusion boundaries: each sampled surface
/// is measured against the exact distance to the other boundary.
double hausdorff_distance(const InclusionGeometry& d1, const InclusionGeometry& d2, int count = 4096);

double dist_point_set(const Vec3& x, const InclusionGeometry& d);

struct ProbeFrame {
    Vec3 P = Vec3::Zero();
    Vec3 nu = -Vec3::UnitZ();  // outward normal of D1 at P; e3 = -nu
    double lambda_w = 2.0 / 3.0;
    double h = 0.1;
};

struct ProbePoints {
    Vec3 y;
    Vec3 w;
};

// y_h = P + h nu, w_h = P + lambda_w h nu. When d1 is given, y_h inside it is
// reported as an InvariantError.
ProbePoints probe_points(const ProbeFrame& frame, const InclusionGeometry* d1 = nullptr);

struct ProbeSelection {
    ProbeFrame frame;
    bool swapped = false;       // true if the roles of D1 and D2 were exchanged
    double dist_P_D2 = 0.0;
    double hausdorff = 0.0;
    double c_bar = 1.0;         // hausdorff / dist_P_D2
};

ProbeSelection select_probe_P(const InclusionGeometry& d1, const InclusionGeometry& d2, int count = 4096);

/// Union of closed balls of radius R centred on a polyline, plus the
/// truncated cone C(P, nu, (d^2 - R^2)/d, arcsin(R/d)).
class TubeCone {
public:
    TubeCone(std::vector<Vec3> path, const Vec3& P, const Vec3& nu, double d, double R);

    bool contains(const Vec3& x) const;
    bool in_cone(const Vec3& x) const;
    double distance_to_path(const Vec3& x) const;

    double cone_height() const { return (d_ * d_ - R_ * R_) / d_; }
    double cone_half_angle() const { return std::asin(R_ / d_); }
    const std::vector<Vec3>& path() const { return path_; }

private:
    std::vector<Vec3> path_;
    Vec3 P_, nu_;
    double d_, R_;
};

// The shell rho0 < dist(x, Omega) < 2 rho0.
bool in_shell(const Vec3& x, const DomainSpec& omega);

Mat3 frame_with_e3(const Vec3& e3);  // orthonormal columns (e1, e2, e3)

}  // namespace lamelab
