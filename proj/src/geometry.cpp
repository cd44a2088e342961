#include "lamelab/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

namespace lamelab {

bool Box::contains(const Vec3& x, double tol) const {
    for (int k = 0; k < 3; ++k)
        if (x[k] < lo[k] - tol || x[k] > hi[k] + tol) return false;
    return true;
}

double Box::distance(const Vec3& x) const {
    Vec3 d;
    for (int k = 0; k < 3; ++k) d[k] = std::max({lo[k] - x[k], 0.0, x[k] - hi[k]});
    return d.norm();
}

double Box::depth(const Vec3& x) const {
    if (!contains(x)) return 0.0;
    double m = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 3; ++k) m = std::min({m, x[k] - lo[k], hi[k] - x[k]});
    return m;
}

double box_box_distance(const Box& a, const Box& b) {
    Vec3 d;
    for (int k = 0; k < 3; ++k) d[k] = std::max({a.lo[k] - b.hi[k], 0.0, b.lo[k] - a.hi[k]});
    return d.norm();
}

void DomainSpec::validate() const {
    if (!(rho0 > 0 && M0 > 0 && M1 > 0 && alpha > 0 && alpha <= 1))
        throw InputError("domain constants must satisfy rho0, M0, M1 > 0 and 0 < alpha <= 1");
    for (int k = 0; k < 3; ++k)
        if (!(box.hi[k] > box.lo[k])) throw InputError("domain box has nonpositive extent");
    if (box.volume() > M1 * rho0 * rho0 * rho0 * (1.0 + 1e-12))
        throw InputError("domain volume exceeds M1 * rho0^3");
}

DomainSpec DomainSpec::scaled(double s) const {
    DomainSpec d = *this;
    d.box = box.scaled(s);
    d.rho0 = rho0 * s;
    return d;
}

// ---------------------------------------------------------------------------
// Closest point on an ellipsoid (robust bisection on the Lagrange multiplier).
namespace {

double robust_length(double a, double b) { return std::hypot(a, b); }
double robust_length(double a, double b, double c) { return std::sqrt(a * a + b * b + c * c); }

double root2(double r0, double z0, double z1, double g) {
    const double n0 = r0 * z0;
    double s0 = z1 - 1.0;
    double s1 = g < 0 ? 0.0 : robust_length(n0, z1) - 1.0;
    double s = 0.0;
    for (int i = 0; i < 200; ++i) {
        s = 0.5 * (s0 + s1);
        if (s == s0 || s == s1) break;
        const double q0 = n0 / (s + r0), q1 = z1 / (s + 1.0);
        g = q0 * q0 + q1 * q1 - 1.0;
        if (g > 0) s0 = s;
        else if (g < 0) s1 = s;
        else break;
    }
    return s;
}

double root3(double r0, double r1, double z0, double z1, double z2, double g) {
    const double n0 = r0 * z0, n1 = r1 * z1;
    double s0 = z2 - 1.0;
    double s1 = g < 0 ? 0.0 : robust_length(n0, n1, z2) - 1.0;
    double s = 0.0;
    for (int i = 0; i < 200; ++i) {
        s = 0.5 * (s0 + s1);
        if (s == s0 || s == s1) break;
        const double q0 = n0 / (s + r0), q1 = n1 / (s + r1), q2 = z2 / (s + 1.0);
        g = q0 * q0 + q1 * q1 + q2 * q2 - 1.0;
        if (g > 0) s0 = s;
        else if (g < 0) s1 = s;
        else break;
    }
    return s;
}

// e0 >= e1 > 0, y0, y1 >= 0.
void closest_ellipse(double e0, double e1, double y0, double y1, double& x0, double& x1) {
    if (y1 > 0) {
        if (y0 > 0) {
            const double z0 = y0 / e0, z1 = y1 / e1, g = z0 * z0 + z1 * z1 - 1.0;
            if (g != 0) {
                const double r0 = (e0 / e1) * (e0 / e1);
                const double sbar = root2(r0, z0, z1, g);
                x0 = r0 * y0 / (sbar + r0);
                x1 = y1 / (sbar + 1.0);
            } else {
                x0 = y0;
                x1 = y1;
            }
        } else {
            x0 = 0;
            x1 = e1;
        }
    } else {
        const double numer0 = e0 * y0, denom0 = e0 * e0 - e1 * e1;
        if (numer0 < denom0) {
            const double xde0 = numer0 / denom0;
            x0 = e0 * xde0;
            x1 = e1 * std::sqrt(std::max(0.0, 1.0 - xde0 * xde0));
        } else {
            x0 = e0;
            x1 = 0;
        }
    }
}

// e0 >= e1 >= e2 > 0, y >= 0 componentwise.
Vec3 closest_ellipsoid_sorted(const Vec3& e, const Vec3& y) {
    Vec3 x;
    if (y[2] > 0) {
        if (y[1] > 0) {
            if (y[0] > 0) {
                const double z0 = y[0] / e[0], z1 = y[1] / e[1], z2 = y[2] / e[2];
                const double g = z0 * z0 + z1 * z1 + z2 * z2 - 1.0;
                if (g != 0) {
                    const double r0 = (e[0] / e[2]) * (e[0] / e[2]);
                    const double r1 = (e[1] / e[2]) * (e[1] / e[2]);
                    const double sbar = root3(r0, r1, z0, z1, z2, g);
                    x[0] = r0 * y[0] / (sbar + r0);
                    x[1] = r1 * y[1] / (sbar + r1);
                    x[2] = y[2] / (sbar + 1.0);
                } else {
                    x = y;
                }
            } else {
                x[0] = 0;
                closest_ellipse(e[1], e[2], y[1], y[2], x[1], x[2]);
            }
        } else {
            x[1] = 0;
            if (y[0] > 0) closest_ellipse(e[0], e[2], y[0], y[2], x[0], x[2]);
            else {
                x[0] = 0;
                x[2] = e[2];
            }
        }
    } else {
        const double denom0 = e[0] * e[0] - e[2] * e[2], denom1 = e[1] * e[1] - e[2] * e[2];
        const double numer0 = e[0] * y[0], numer1 = e[1] * y[1];
        bool done = false;
        if (numer0 < denom0 && numer1 < denom1) {
            const double xde0 = numer0 / denom0, xde1 = numer1 / denom1;
            const double discr = 1.0 - xde0 * xde0 - xde1 * xde1;
            if (discr > 0) {
                x[0] = e[0] * xde0;
                x[1] = e[1] * xde1;
                x[2] = e[2] * std::sqrt(discr);
                done = true;
            }
        }
        if (!done) {
            x[2] = 0;
            closest_ellipse(e[0], e[1], y[0], y[1], x[0], x[1]);
        }
    }
    return x;
}

// Closest boundary point for an axis-aligned ellipsoid centred at the origin.
Vec3 closest_ellipsoid(const Vec3& axes, const Vec3& y) {
    std::array<int, 3> perm = {0, 1, 2};
    std::sort(perm.begin(), perm.end(), [&](int a, int b) { return axes[a] > axes[b]; });
    Vec3 e, ya;
    for (int k = 0; k < 3; ++k) {
        e[k] = axes[perm[k]];
        ya[k] = std::fabs(y[perm[k]]);
    }
    const Vec3 xs = closest_ellipsoid_sorted(e, ya);
    Vec3 x;
    for (int k = 0; k < 3; ++k) x[perm[k]] = std::copysign(xs[k], y[perm[k]]);
    return x;
}

}  // namespace

InclusionGeometry InclusionGeometry::ball(const Vec3& center, double radius) {
    if (!(radius > 0)) throw InputError("ball radius must be positive");
    InclusionGeometry g;
    g.kind_ = Kind::Ball;
    g.center_ = center;
    g.axes_ = Vec3::Constant(radius);
    return g;
}

InclusionGeometry InclusionGeometry::ellipsoid(const Vec3& center, const Vec3& semiaxes, const Mat3& rotation) {
    if (!(semiaxes.minCoeff() > 0)) throw InputError("ellipsoid semiaxes must be positive");
    if ((rotation.transpose() * rotation - Mat3::Identity()).norm() > 1e-10 || rotation.determinant() < 0)
        throw InputError("ellipsoid rotation must be a proper orthogonal matrix");
    InclusionGeometry g;
    g.kind_ = Kind::Ellipsoid;
    g.center_ = center;
    g.axes_ = semiaxes;
    g.rot_ = rotation;
    return g;
}

InclusionGeometry InclusionGeometry::half_space(const Vec3& point, const Vec3& outward_normal) {
    if (!(outward_normal.norm() > 0)) throw InputError("half-space normal must be nonzero");
    InclusionGeometry g;
    g.kind_ = Kind::HalfSpace;
    g.center_ = point;
    g.axes_ = outward_normal.normalized();
    return g;
}

double InclusionGeometry::signed_distance(const Vec3& x) const {
    switch (kind_) {
    case Kind::Ball: return (x - center_).norm() - axes_[0];
    case Kind::HalfSpace: return (x - center_).dot(axes_);
    case Kind::Ellipsoid: {
        const Vec3 y = rot_.transpose() * (x - center_);
        const Vec3 p = closest_ellipsoid(axes_, y);
        const double d = (y - p).norm();
        const double level = (y.array() / axes_.array()).square().sum();
        return level < 1.0 ? -d : d;
    }
    }
    return 0.0;
}

bool InclusionGeometry::contains(const Vec3& x) const {
    if (kind_ == Kind::Ellipsoid) {
        const Vec3 y = rot_.transpose() * (x - center_);
        return (y.array() / axes_.array()).square().sum() <= 1.0;
    }
    return signed_distance(x) <= 0.0;
}

Vec3 InclusionGeometry::project(const Vec3& x) const {
    switch (kind_) {
    case Kind::Ball: {
        Vec3 r = x - center_;
        const double n = r.norm();
        if (n == 0.0) return center_ + axes_[0] * Vec3::UnitX();
        return center_ + axes_[0] * r / n;
    }
    case Kind::HalfSpace: return x - signed_distance(x) * axes_;
    case Kind::Ellipsoid: {
        const Vec3 y = rot_.transpose() * (x - center_);
        return center_ + rot_ * closest_ellipsoid(axes_, y);
    }
    }
    return x;
}

Vec3 InclusionGeometry::normal(const Vec3& x) const {
    switch (kind_) {
    case Kind::Ball: return (project(x) - center_).normalized();
    case Kind::HalfSpace: return axes_;
    case Kind::Ellipsoid: {
        const Vec3 p = rot_.transpose() * (project(x) - center_);
        const Vec3 g = (p.array() / axes_.array().square()).matrix();
        return (rot_ * g).normalized();
    }
    }
    return Vec3::UnitZ();
}

Box InclusionGeometry::bounding_box() const {
    if (kind_ == Kind::HalfSpace) {
        const double big = std::numeric_limits<double>::infinity();
        return {Vec3::Constant(-big), Vec3::Constant(big)};
    }
    // Half-widths of a rotated ellipsoid: sqrt(sum_j R_kj^2 a_j^2).
    Vec3 half;
    for (int k = 0; k < 3; ++k) {
        double s = 0;
        for (int j = 0; j < 3; ++j) s += rot_(k, j) * rot_(k, j) * axes_[j] * axes_[j];
        half[k] = std::sqrt(s);
    }
    return {center_ - half, center_ + half};
}

InclusionGeometry InclusionGeometry::translated(const Vec3& t) const {
    InclusionGeometry g = *this;
    g.center_ += t;
    return g;
}

InclusionGeometry InclusionGeometry::scaled(double s) const {
    if (!(s > 0)) throw InputError("scale factor must be positive");
    InclusionGeometry g = *this;
    g.center_ *= s;
    if (kind_ != Kind::HalfSpace) g.axes_ *= s;
    return g;
}

bool InclusionGeometry::operator==(const InclusionGeometry& o) const {
    return kind_ == o.kind_ && center_ == o.center_ && axes_ == o.axes_ && rot_ == o.rot_;
}

std::string InclusionGeometry::describe() const {
    std::ostringstream os;
    os.precision(17);
    auto v = [&](const Vec3& a) { os << "[" << a[0] << "," << a[1] << "," << a[2] << "]"; };
    switch (kind_) {
    case Kind::Ball: os << "ball c="; v(center_); os << " r=" << axes_[0]; break;
    case Kind::Ellipsoid:
        os << "ellipsoid c=";
        v(center_);
        os << " a=";
        v(axes_);
        os << " R=";
        for (int i = 0; i < 3; ++i) v(rot_.row(i).transpose());
        break;
    case Kind::HalfSpace: os << "halfspace p="; v(center_); os << " n="; v(axes_); break;
    }
    return os.str();
}

SurfaceSample sample_surface(const InclusionGeometry& g, int count) {
    if (count < 2) throw InputError("surface sample count must be at least 2");
    if (g.kind() == InclusionGeometry::Kind::HalfSpace) throw InputError("cannot sample an unbounded surface");
    SurfaceSample s;
    s.points.reserve(count);
    s.normals.reserve(count);
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < count; ++i) {
        const double z = 1.0 - (2.0 * i + 1.0) / count;
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = golden * i;
        const Vec3 u(r * std::cos(phi), r * std::sin(phi), z);
        const Vec3 local = (g.semiaxes().array() * u.array()).matrix();
        const Vec3 nloc = (u.array() / g.semiaxes().array()).matrix();
        s.points.push_back(g.center() + g.rotation() * local);
        s.normals.push_back((g.rotation() * nloc).normalized());
    }
    double spacing = 0.0;
    for (int i = 0; i < count; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (int j = 0; j < count; ++j)
            if (j != i) best = std::min(best, (s.points[i] - s.points[j]).squaredNorm());
        spacing = std::max(spacing, best);
    }
    s.spacing = std::sqrt(spacing);
    return s;
}

void write_surface_csv(const SurfaceSample& s, std::ostream& os) {
    char buf[256];
    os << "x,y,z,nx,ny,nz\n";
    for (size_t i = 0; i < s.points.size(); ++i) {
        const Vec3& p = s.points[i];
        const Vec3& n = s.normals[i];
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", p[0], p[1], p[2], n[0], n[1], n[2]);
        os << buf;
    }
}

namespace {
double directed(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    double worst = 0.0;
    for (const Vec3& p : a) {
        double best = std::numeric_limits<double>::infinity();
        for (const Vec3& q : b) {
            best = std::min(best, (p - q).squaredNorm());
            if (best <= worst) break;  // cannot raise the running maximum
        }
        worst = std::max(worst, best);
    }
    return std::sqrt(worst);
}
}  // namespace

double hausdorff_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    if (a.empty() || b.empty()) throw InputError("hausdorff_distance: empty sample set");
    return std::max(directed(a, b), directed(b, a));
}

double hausdorff_distance(const InclusionGeometry& d1, const InclusionGeometry& d2, int count) {
    const SurfaceSample s1 = sample_surface(d1, count);
    const SurfaceSample s2 = sample_surface(d2, count);
    double h = 0.0;
    for (const Vec3& p : s1.points) h = std::max(h, std::fabs(d2.signed_distance(p)));
    for (const Vec3& p : s2.points) h = std::max(h, std::fabs(d1.signed_distance(p)));
    return h;
}

double dist_point_set(const Vec3& x, const InclusionGeometry& d) { return d.distance(x); }

ProbePoints probe_points(const ProbeFrame& f, const InclusionGeometry* d1) {
    if (!(f.h > 0)) throw InputError("probe depth h must be positive");
    if (!(f.lambda_w > 0 && f.lambda_w < 1)) throw InputError("lambda_w must lie in (0, 1)");
    const Vec3 nu = f.nu.normalized();
    ProbePoints p{f.P + f.h * nu, f.P + f.lambda_w * f.h * nu};
    if (d1 && d1->signed_distance(p.y) <= 0.0)
        throw InvariantError("probe point y_h lies inside D1; check the normal orientation");
    return p;
}

ProbeSelection select_probe_P(const InclusionGeometry& d1, const InclusionGeometry& d2, int count) {
    const SurfaceSample s1 = sample_surface(d1, count);
    const SurfaceSample s2 = sample_surface(d2, count);
    auto best_on = [](const SurfaceSample& s, const InclusionGeometry& other, int& arg) {
        double best = -1.0;
        for (size_t i = 0; i < s.points.size(); ++i) {
            const double d = other.distance(s.points[i]);
            if (d > best) {
                best = d;
                arg = static_cast<int>(i);
            }
        }
        return best;
    };
    int i1 = 0, i2 = 0;
    const double m1 = best_on(s1, d2, i1);
    const double m2 = best_on(s2, d1, i2);
    double hd = 0.0;
    for (const Vec3& p : s1.points) hd = std::max(hd, std::fabs(d2.signed_distance(p)));
    for (const Vec3& p : s2.points) hd = std::max(hd, std::fabs(d1.signed_distance(p)));
    const double tol = 1e-12 * std::max(d1.bounding_box().diameter(), d2.bounding_box().diameter());
    if (std::max(m1, m2) <= tol || hd <= tol)
        throw DomainError("select_probe_P: inclusions coincide up to sampling (distance 0)");

    ProbeSelection sel;
    sel.swapped = m2 > m1;
    const SurfaceSample& s = sel.swapped ? s2 : s1;
    const InclusionGeometry& own = sel.swapped ? d2 : d1;
    const int idx = sel.swapped ? i2 : i1;
    sel.frame.P = own.project(s.points[idx]);
    sel.frame.nu = own.normal(sel.frame.P);
    sel.dist_P_D2 = sel.swapped ? d1.distance(sel.frame.P) : d2.distance(sel.frame.P);
    sel.hausdorff = hd;
    sel.c_bar = hd / std::max(m1, m2);
    return sel;
}

TubeCone::TubeCone(std::vector<Vec3> path, const Vec3& P, const Vec3& nu, double d, double R)
    : path_(std::move(path)), P_(P), nu_(nu.normalized()), d_(d), R_(R) {
    if (!(R > 0) || !(d > R)) throw InputError("TubeCone requires 0 < R < d");
    if (path_.empty()) throw InputError("TubeCone path must contain at least one point");
}

bool TubeCone::in_cone(const Vec3& x) const {
    const Vec3 r = x - P_;
    const double axial = r.dot(nu_);
    if (axial < 0.0 || axial > cone_height()) return false;
    const double lateral = (r - axial * nu_).norm();
    return lateral <= (R_ / d_) * r.norm() * (1.0 + 1e-14);
}

double TubeCone::distance_to_path(const Vec3& x) const {
    double best = (x - path_.front()).norm();
    for (size_t i = 0; i + 1 < path_.size(); ++i) {
        const Vec3 a = path_[i], b = path_[i + 1];
        const Vec3 ab = b - a;
        const double len2 = ab.squaredNorm();
        const double t = len2 > 0 ? std::clamp((x - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
        best = std::min(best, (x - (a + t * ab)).norm());
    }
    return best;
}

bool TubeCone::contains(const Vec3& x) const { return distance_to_path(x) <= R_ || in_cone(x); }

bool in_shell(const Vec3& x, const DomainSpec& omega) {
    const double d = omega.box.distance(x);
    return d > omega.rho0 && d < 2.0 * omega.rho0;
}

Mat3 frame_with_e3(const Vec3& e3in) {
    const Vec3 e3 = e3in.normalized();
    int k = 0;
    for (int i = 1; i < 3; ++i)
        if (std::fabs(e3[i]) < std::fabs(e3[k])) k = i;
    Vec3 e1 = unit(k) - e3[k] * e3;
    e1.normalize();
    const Vec3 e2 = e3.cross(e1);
    Mat3 F;
    F.col(0) = e1;
    F.col(1) = e2;
    F.col(2) = e3;
    return F;
}

}  // namespace lamelab
