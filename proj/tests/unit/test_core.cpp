#include "lamelab/expr.hpp"
#include "lamelab/geometry.hpp"
#include "lamelab/recon_norms.hpp"
#include "lamelab/tensor_field.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <random>

using namespace lamelab;

namespace {

Mat3 random_matrix(std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    Mat3 A;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) A(i, j) = nd(rng);
    return A;
}

Mat3 random_rotation(std::mt19937_64& rng) {
    Eigen::HouseholderQR<Mat3> qr(random_matrix(rng));
    Mat3 Q = qr.householderQ();
    if (Q.determinant() < 0) Q.col(0) *= -1.0;
    return Q;
}

}  // namespace

// ---------------------------------------------------------------------------
// Expressions and tensor fields

TEST(Expr, ParsesAndDifferentiates) {
    const Expr e = Expr::parse("2*x^2 + sin(y) - z/4");
    const Vec3 p(0.3, -1.2, 0.8);
    EXPECT_NEAR(e(p), 2 * 0.09 + std::sin(-1.2) - 0.2, 1e-15);
    EXPECT_NEAR(e.derivative(0)(p), 4 * 0.3, 1e-15);
    EXPECT_NEAR(e.derivative(1)(p), std::cos(-1.2), 1e-15);
    EXPECT_NEAR(e.derivative(2)(p), -0.25, 1e-15);
    EXPECT_TRUE(Expr::parse("3*pi - 1").is_constant());
    EXPECT_FALSE(e.is_constant());
    EXPECT_ANY_THROW(Expr::parse("x +* 2"));
}

TEST(Tensor, ApplyTrivialCases) {
    const Mat3 I = Mat3::Identity();
    EXPECT_LT((apply_tensor({1, 1}, I) - 5 * I).norm(), 1e-15);
    std::mt19937_64 rng(3);
    const Mat3 A = random_matrix(rng);
    EXPECT_LT((apply_tensor({0, 0.5}, A) - 0.5 * (A + A.transpose())).norm(), 1e-15);
}

TEST(Tensor, ApplyMatchesComponentSummation) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ud(0.1, 5.0);
    const IsotropicTensor fixed{2.3, 0.7};
    for (int trial = 0; trial < 1000; ++trial) {
        const IsotropicTensor C = trial == 0 ? fixed : IsotropicTensor{ud(rng), ud(rng)};
        const Mat3 A = random_matrix(rng);
        Mat3 ref = Mat3::Zero();
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int k = 0; k < 3; ++k)
                    for (int l = 0; l < 3; ++l) ref(i, j) += C.component(i, j, k, l) * A(k, l);
        // The component form is written out independently of apply().
        Mat3 direct = Mat3::Zero();
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int k = 0; k < 3; ++k)
                    for (int l = 0; l < 3; ++l)
                        direct(i, j) += (C.lambda * (i == j) * (k == l) +
                                         C.mu * ((i == k) * (j == l) + (i == l) * (j == k))) *
                                        A(k, l);
        EXPECT_LT((C.apply(A) - ref).norm(), 1e-13 * ref.norm());
        EXPECT_LT((direct - ref).norm(), 1e-13 * ref.norm());
    }
}

TEST(Tensor, SymmetriesAndSkewKernel) {
    std::mt19937_64 rng(5);
    const IsotropicTensor C{1.7, 0.9};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k)
                for (int l = 0; l < 3; ++l) {
                    EXPECT_EQ(C.component(i, j, k, l), C.component(k, l, i, j));
                    EXPECT_EQ(C.component(i, j, k, l), C.component(l, k, i, j));
                }
    for (int trial = 0; trial < 100; ++trial) {
        const Mat3 A = random_matrix(rng);
        const Mat3 W = A - A.transpose();
        EXPECT_LT(C.apply(W).norm(), 1e-14 * W.norm());
        const Mat3 S1 = A + A.transpose();
        const Mat3 B = random_matrix(rng);
        const Mat3 S2 = B + B.transpose();
        EXPECT_NEAR(C.apply(S1).cwiseProduct(S2).sum(), C.apply(S2).cwiseProduct(S1).sum(), 1e-12 * S1.norm() * S2.norm());
    }
}

TEST(Tensor, ValidateMaterial) {
    const MaterialBounds loose{0.5, 0.5, 10, 10};
    const auto grid = grid_points(Box{}, 10);
    EXPECT_TRUE(validate_material(LameField::constant(1, 1), grid, loose).pass());
    const MaterialReport soft = validate_material(LameField::constant(1, 0.1), grid, loose);
    EXPECT_FALSE(soft.passed("mu>=alpha0"));
    EXPECT_TRUE(soft.passed("2mu+3lambda>=gamma0"));
    EXPECT_THROW(validate_material(LameField::constant(1, 1), {}, loose), InputError);

    // 2 mu + 3 lambda = 0.2 + 0.3 z: fails exactly where z < 1.
    LameField f;
    f.lambda = ScalarField::expression("-0.6 + 0.1*z");
    f.mu = ScalarField::constant(1.0);
    const MaterialReport r = validate_material(f, grid, loose);
    int expected = 0;
    for (const Vec3& p : grid) expected += 2.0 + 3.0 * (-0.6 + 0.1 * p.z()) < 0.5;
    int found = 0;
    for (const auto& v : r.violations)
        if (v.condition == "2mu+3lambda>=gamma0") {
            ++found;
            EXPECT_NEAR(v.margin, 2.0 + 3.0 * (-0.6 + 0.1 * v.point.z()) - 0.5, 1e-12);
        }
    EXPECT_EQ(found, expected);
    EXPECT_GT(found, 0);
}

TEST(Tensor, ValidationIsMonotoneInThresholds) {
    LameField f;
    f.lambda = ScalarField::expression("0.3*sin(3*x) - 0.2");
    f.mu = ScalarField::expression("0.4 + 0.3*y");
    const auto grid = grid_points(Box{}, 6);
    bool passed_before = false;
    for (double a = 1.0; a >= 0.0; a -= 0.05) {
        const bool pass = validate_material(f, grid, {a, a, 10, 10}).pass();
        EXPECT_TRUE(!passed_before || pass);
        passed_before = passed_before || pass;
    }
    EXPECT_TRUE(passed_before);
}

TEST(Tensor, JumpMagnitudeAndFreezing) {
    const DomainSpec omega;
    auto ball = std::make_shared<const InclusionGeometry>(InclusionGeometry::ball(Vec3(0.5, 0.5, 0.5), 0.2));
    const PiecewiseTensor same = PiecewiseTensor::constant({1, 1}, {1, 1}, ball);
    const PiecewiseTensor p345 = PiecewiseTensor::constant({1, 2}, {4, 6}, ball);
    for (const Vec3& x : grid_points(omega.box, 4)) {
        EXPECT_EQ(jump_magnitude(same, omega, x), 0.0);
        EXPECT_NEAR(jump_magnitude(p345, omega, x), 5.0, 1e-15);
    }
    EXPECT_THROW(jump_magnitude(same, omega, Vec3(1.5, 0.5, 0.5)), DomainError);

    PiecewiseTensor varying;
    varying.background.lambda = ScalarField::expression("1 + x*y");
    varying.background.mu = ScalarField::expression("2 + z");
    varying.inclusion.lambda = ScalarField::expression("3 - y");
    varying.inclusion.mu = ScalarField::constant(4.0);
    varying.region = ball;
    for (const Vec3& x : grid_points(omega.box, 5)) {
        const double dl = (1 + x.x() * x.y()) - (3 - x.y()), dm = (2 + x.z()) - 4.0;
        EXPECT_NEAR(jump_magnitude(varying, omega, x), std::hypot(dl, dm), 1e-14);
    }

    LameField g;
    g.lambda = ScalarField::expression("1 + z");
    EXPECT_EQ(freeze_at(g, Vec3::Zero()).lambda, 1.0);
    const Vec3 P(0.2, 0.5, 0.7);
    EXPECT_NEAR(freeze_at(g, P).lambda, 1.7, 1e-15);
    EXPECT_EQ(freeze_at(LameField::constant(2, 3), P), (IsotropicTensor{2, 3}));
}

TEST(Tensor, PiecewiseSwitchesExactlyAtQueryPoints) {
    auto ball = std::make_shared<const InclusionGeometry>(InclusionGeometry::ball(Vec3(0.5, 0.5, 0.5), 0.25));
    const PiecewiseTensor p = PiecewiseTensor::constant({1, 1}, {4, 4}, ball);
    EXPECT_EQ(p.at(Vec3(0.5, 0.5, 0.5)), (IsotropicTensor{4, 4}));
    EXPECT_EQ(p.at(Vec3(0.5, 0.5, 0.76)), (IsotropicTensor{1, 1}));
    EXPECT_EQ(p.at(Vec3(0.5, 0.5, 0.74)), (IsotropicTensor{4, 4}));
}

TEST(Tensor, PresetJsonRoundTripAndUnknownKeys) {
    const MaterialPreset d = MaterialPreset::defaults();
    EXPECT_NEAR(d.eta0, std::sqrt(18.0), 1e-15);
    const MaterialPreset back = MaterialPreset::from_json(d.to_json());
    EXPECT_EQ(back.to_json(), d.to_json());
    nlohmann::json j = d.to_json();
    j["bogus"] = 1;
    EXPECT_THROW(MaterialPreset::from_json(j), ConfigError);
    nlohmann::json k = d.to_json();
    k["background"]["lambda"] = "1 + 0.1*x";
    const MaterialPreset e = MaterialPreset::from_json(k);
    EXPECT_NEAR(e.background.lambda(Vec3(0.5, 0, 0)), 1.05, 1e-15);
}

// ---------------------------------------------------------------------------
// Geometry

TEST(Geometry, DomainValidation) {
    DomainSpec ok;
    EXPECT_NO_THROW(ok.validate());
    DomainSpec big;
    big.box.hi = Vec3(2, 2, 2);
    EXPECT_THROW(big.validate(), InputError);
    big.M1 = 8.0;
    EXPECT_NO_THROW(big.validate());
}

TEST(Geometry, HausdorffTrivialCases) {
    const auto a = InclusionGeometry::ball(Vec3(0.5, 0.5, 0.5), 0.3);
    const auto b = InclusionGeometry::ball(Vec3(0.5, 0.5, 0.5), 0.5);
    EXPECT_EQ(hausdorff_distance(sample_surface(a).points, sample_surface(a).points), 0.0);
    EXPECT_NEAR(hausdorff_distance(a, b), 0.2, 1e-12);
    const auto c = a.translated(Vec3(0.1, 0, 0));
    EXPECT_NEAR(hausdorff_distance(a, c), 0.1, 1e-3);
    EXPECT_THROW(hausdorff_distance(std::vector<Vec3>{}, sample_surface(a).points), InputError);
}

TEST(Geometry, HausdorffOfTranslatesMatchesBruteForce) {
    const auto a = InclusionGeometry::ball(Vec3(0.4, 0.5, 0.5), 0.3);
    for (double t : {0.02, 0.1, 0.3}) {
        const auto c = a.translated(t * Vec3(1, 1, 0).normalized());
        const SurfaceSample sa = sample_surface(a, 4096), sc = sample_surface(c, 4096);
        const double brute = hausdorff_distance(sa.points, sc.points);
        EXPECT_NEAR(brute, t, 2 * sa.spacing);
        EXPECT_LE(hausdorff_distance(a, c), t + 1e-12);
        EXPECT_NEAR(hausdorff_distance(a, c), t, 1e-3);
    }
}

TEST(Geometry, HausdorffIsAMetricOnSamples) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> ud(0.3, 0.7), rd(0.1, 0.25);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<std::vector<Vec3>> s;
        for (int k = 0; k < 3; ++k)
            s.push_back(sample_surface(InclusionGeometry::ball(Vec3(ud(rng), ud(rng), ud(rng)), rd(rng)), 400).points);
        const double ab = hausdorff_distance(s[0], s[1]), ba = hausdorff_distance(s[1], s[0]);
        const double bc = hausdorff_distance(s[1], s[2]), ac = hausdorff_distance(s[0], s[2]);
        EXPECT_EQ(ab, ba);
        EXPECT_GT(ab, 0.0);
        EXPECT_LE(ac, ab + bc + 1e-14);
    }
}

TEST(Geometry, DistanceToEllipsoidMatchesMinimization) {
    std::mt19937_64 rng(9);
    const auto E = InclusionGeometry::ellipsoid(Vec3(0.5, 0.4, 0.6), Vec3(0.3, 0.15, 0.2), random_rotation(rng));
    const auto B = InclusionGeometry::ball(Vec3(0.2, 0.2, 0.2), 1.0);
    EXPECT_EQ(dist_point_set(Vec3(0.2, 0.2, 0.2), B), 0.0);
    EXPECT_NEAR(dist_point_set(Vec3(0.2, 0.2, 1.9), B), 0.7, 1e-14);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 20; ++trial) {
        const Vec3 x = E.center() + 0.6 * Vec3(nd(rng), nd(rng), nd(rng)).normalized() * (1.0 + 0.5 * std::fabs(nd(rng)));
        if (E.contains(x)) continue;
        // Oracle: projected gradient descent over the ellipsoid parametrization.
        const Mat3 R = E.rotation();
        const Vec3 a = E.semiaxes();
        const Vec3 xl = R.transpose() * (x - E.center());
        Vec3 q = xl.cwiseQuotient(a).normalized();
        double step = 0.05;
        double best = (a.cwiseProduct(q) - xl).norm();
        for (int it = 0; it < 20000; ++it) {
            const Vec3 g = a.cwiseProduct(a.cwiseProduct(q) - xl);
            Vec3 nq = (q - step * g).normalized();
            const double f = (a.cwiseProduct(nq) - xl).norm();
            if (f < best) {
                best = f;
                q = nq;
            } else {
                step *= 0.5;
                if (step < 1e-16) break;
            }
        }
        EXPECT_NEAR(dist_point_set(x, E), best, 1e-8);
    }
}

TEST(Geometry, ProbePoints) {
    ProbeFrame f;
    f.P = Vec3::Zero();
    f.nu = Vec3(0, 0, -1);
    f.h = 0.3;
    const ProbePoints p = probe_points(f);
    EXPECT_LT((p.y - Vec3(0, 0, -0.3)).norm(), 1e-15);
    EXPECT_LT((p.w - Vec3(0, 0, -0.2)).norm(), 1e-15);
    EXPECT_NEAR((p.y - p.w).norm(), f.h / 3, 1e-15);
    f.h = 1e-9;
    EXPECT_LT(probe_points(f).y.norm(), 2e-9);

    const auto D1 = InclusionGeometry::ball(Vec3(0, 0, 1), 1.0);  // outward normal at origin is -e3
    f.h = 0.3;
    EXPECT_NO_THROW(probe_points(f, &D1));
    f.nu = Vec3(0, 0, 1);
    EXPECT_THROW(probe_points(f, &D1), InvariantError);
    f.lambda_w = 1.0;
    EXPECT_THROW(probe_points(f), InputError);
}

TEST(Geometry, SelectProbeP) {
    const auto d1 = InclusionGeometry::ball(Vec3(0.4, 0.5, 0.5), 0.2);
    const auto d2 = d1.translated(Vec3(0.1, 0, 0));
    const ProbeSelection s = select_probe_P(d1, d2);
    // The farthest point of D1 from D2 is the antipode at distance t.
    EXPECT_NEAR(s.dist_P_D2, 0.1, 2e-3);
    EXPECT_NEAR(s.c_bar, 1.0, 2e-2);
    const Vec3 expected = s.swapped ? Vec3(0.7, 0.5, 0.5) : Vec3(0.2, 0.5, 0.5);
    EXPECT_LT((s.frame.P - expected).norm(), 0.03);

    const auto outer = InclusionGeometry::ball(Vec3(0.5, 0.5, 0.5), 0.5);
    const auto inner = InclusionGeometry::ball(Vec3(0.5, 0.5, 0.5), 0.3);
    const ProbeSelection c = select_probe_P(outer, inner);
    EXPECT_FALSE(c.swapped);
    EXPECT_NEAR(c.dist_P_D2, 0.2, 1e-12);
    EXPECT_NEAR(c.hausdorff, 0.2, 1e-12);
    EXPECT_NEAR(c.c_bar, 1.0, 1e-12);
    EXPECT_THROW(select_probe_P(d1, d1), DomainError);

    std::mt19937_64 rng(4);
    const auto e = InclusionGeometry::ellipsoid(Vec3(0.5, 0.5, 0.5), Vec3(0.25, 0.15, 0.1), random_rotation(rng));
    const ProbeSelection es = select_probe_P(e, inner);
    EXPECT_GE(es.c_bar, 1.0 - 1e-12);
    EXPECT_LE(es.hausdorff, es.c_bar * es.dist_P_D2 * (1 + 1e-12));
}

TEST(Geometry, ProbeTriangleInequality) {
    const auto d1 = InclusionGeometry::ball(Vec3(0.45, 0.5, 0.5), 0.25);
    const auto d2 = InclusionGeometry::ball(Vec3(0.8, 0.5, 0.5), 0.1);
    const ProbeSelection s = select_probe_P(d1, d2);
    for (double lw : {2.0 / 3.0, 0.75, 0.8})
        for (double h : {0.1, 0.03, 0.01}) {
            ProbeFrame f = s.frame;
            f.lambda_w = lw;
            f.h = h;
            const ProbePoints p = probe_points(f, &d1);
            EXPECT_GE(d2.distance(p.w), s.dist_P_D2 - lw * h - 1e-12);
        }
}

TEST(Geometry, TubeConeMembership) {
    const std::vector<Vec3> path = {Vec3(0, 0, 1), Vec3(0, 0, 2), Vec3(1, 0, 2)};
    const Vec3 P = Vec3::Zero(), nu = Vec3::UnitZ();
    const double d = 1.0, R = 0.3;
    EXPECT_THROW(TubeCone(path, P, nu, 0.3, 0.3), InputError);
    const TubeCone V(path, P, nu, d, R);
    EXPECT_TRUE(V.contains(P));
    EXPECT_FALSE(V.contains(Vec3(2, 2, -1)));

    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> ud(-0.5, 2.5);
    const double H = (d * d - R * R) / d, theta = std::asin(R / d);
    int inside = 0;
    for (int trial = 0; trial < 20000; ++trial) {
        const Vec3 x(ud(rng), ud(rng) - 1.0, ud(rng));
        // Per-primitive oracle: sampled segments and the cone by angle.
        double dp = 1e300;
        for (size_t k = 0; k + 1 < path.size(); ++k)
            for (int s = 0; s <= 2000; ++s) dp = std::min(dp, (x - (path[k] + (path[k + 1] - path[k]) * (s / 2000.0))).norm());
        const double axial = (x - P).dot(nu);
        const bool cone = axial >= 0 && axial <= H && std::acos(std::min(1.0, axial / std::max((x - P).norm(), 1e-300))) <= theta;
        const bool oracle = dp <= R || cone;
        if (std::fabs(dp - R) < 1e-3) continue;  // sampled-segment tolerance band
        EXPECT_EQ(V.contains(x), oracle) << x.transpose();
        inside += oracle;
    }
    EXPECT_GT(inside, 100);
}

TEST(Geometry, ShellAndFrame) {
    const DomainSpec omega;
    EXPECT_TRUE(in_shell(Vec3(-1.5, 0.5, 0.5), omega));
    EXPECT_FALSE(in_shell(Vec3(-0.5, 0.5, 0.5), omega));
    EXPECT_FALSE(in_shell(Vec3(3.5, 0.5, 0.5), omega));
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd;
    for (int t = 0; t < 50; ++t) {
        const Vec3 e3 = Vec3(nd(rng), nd(rng), nd(rng)).normalized();
        const Mat3 F = frame_with_e3(e3);
        EXPECT_LT((F.transpose() * F - Mat3::Identity()).norm(), 1e-14);
        EXPECT_NEAR(F.determinant(), 1.0, 1e-14);
        EXPECT_LT((F.col(2) - e3).norm(), 1e-15);
    }
}

TEST(Geometry, SurfaceSamplesLieOnTheBoundary) {
    std::mt19937_64 rng(6);
    const auto e = InclusionGeometry::ellipsoid(Vec3(0.5, 0.5, 0.5), Vec3(0.3, 0.2, 0.1), random_rotation(rng));
    const SurfaceSample s = sample_surface(e, 2000);
    ASSERT_EQ(s.points.size(), 2000u);
    for (size_t i = 0; i < s.points.size(); ++i) {
        EXPECT_LT(std::fabs(e.signed_distance(s.points[i])), 1e-10);
        EXPECT_NEAR(s.normals[i].norm(), 1.0, 1e-12);
        EXPECT_GT(e.signed_distance(s.points[i] + 1e-4 * s.normals[i]), 0.0);
    }
    EXPECT_GT(s.spacing, 0.0);
}

// ---------------------------------------------------------------------------
// Numerical kernels

TEST(Kernels, SpectralTransformRoundTrip) {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> nd;
    const int n = 30;
    Eigen::MatrixXd A(n, n), B(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) A(i, j) = nd(rng), B(i, j) = nd(rng);
    const Eigen::MatrixXd S = A * A.transpose();
    const Eigen::MatrixXd M = B * B.transpose() + n * Eigen::MatrixXd::Identity(n, n);
    const SpectralTransform T = SpectralTransform::from_pencil(S, M, 1e-3);
    for (int k = 0; k < n; ++k) EXPECT_GE(T.eigenvalues()[k], 1e-3);
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::VectorXd x(n);
        for (int i = 0; i < n; ++i) x[i] = nd(rng);
        EXPECT_LE((T.apply(T.apply(x, -0.5), 0.5) - x).norm(), 1e-10 * x.norm());
    }
    EXPECT_THROW(SpectralTransform::from_pencil(S, M, 0.0), InputError);
}

TEST(Kernels, Richardson) {
    const RichardsonResult r = richardson(2, 3.5, 4, 3.25);
    EXPECT_NEAR(r.value, 3.0, 1e-15);
    EXPECT_NEAR(r.error_estimate, 0.25, 1e-15);
    const RichardsonResult c = richardson(2, 7.0, 4, 7.0);
    EXPECT_EQ(c.value, 7.0);
    EXPECT_EQ(c.error_estimate, 0.0);
    EXPECT_THROW(richardson(4, 1, 4, 1), InputError);
    EXPECT_THROW(richardson(4, 1, 2, 1), InputError);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd;
    for (int t = 0; t < 100; ++t) {
        const double v = nd(rng), c1 = nd(rng), L1 = 1 + std::fabs(nd(rng)), L2 = L1 * (1.5 + std::fabs(nd(rng)));
        EXPECT_NEAR(richardson(L1, v + c1 / L1, L2, v + c1 / L2).value, v, 1e-12 * (1 + std::fabs(c1)));
    }
}

TEST(Kernels, LogLogFit) {
    std::vector<double> x, y, z;
    for (int k = 1; k <= 8; ++k) {
        x.push_back(0.1 * k);
        y.push_back(1.0 / (0.1 * k));
        z.push_back(5.0 * std::pow(0.1 * k, 0.3));
    }
    const FitResult a = loglog_fit(x, y);
    EXPECT_NEAR(a.slope, -1.0, 1e-13);
    EXPECT_NEAR(a.r2, 1.0, 1e-13);
    const FitResult b = loglog_fit(x, z);
    EXPECT_NEAR(b.slope, 0.3, 1e-13);
    EXPECT_NEAR(b.intercept, std::log(5.0), 1e-13);
    y[2] = -1.0;
    EXPECT_THROW(loglog_fit(x, y), InputError);
    EXPECT_NO_THROW(loglog_fit(x, y, {2}));
    EXPECT_EQ(loglog_fit(x, y, {2}).excluded, std::vector<int>{2});
    EXPECT_THROW(loglog_fit({1, 2}, {1, 2}), FitError);

    // Scale equivariance and refit stability.
    const double s = 3.7;
    std::vector<double> xs;
    for (double v : x) xs.push_back(s * v);
    const FitResult bs = loglog_fit(xs, z);
    EXPECT_NEAR(bs.slope, b.slope, 1e-13);
    EXPECT_NEAR(bs.intercept, b.intercept - b.slope * std::log(s), 1e-12);
    std::vector<double> on;
    for (double v : x) on.push_back(std::exp(b.intercept) * std::pow(v, b.slope));
    const FitResult re = loglog_fit(x, on);
    EXPECT_NEAR(re.slope, b.slope, 1e-12);
    EXPECT_NEAR(re.intercept, b.intercept, 1e-12);
}

TEST(Kernels, LogLogFitUnderMultiplicativeNoise) {
    std::vector<double> x;
    for (int k = 0; k < 8; ++k) x.push_back(0.1 * std::pow(0.1, k / 7.0));
    int inside = 0;
    const int trials = 1000;
    for (int seed = 0; seed < trials; ++seed) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> nd(0.0, 0.05);
        std::vector<double> y;
        for (double v : x) y.push_back(std::exp(nd(rng)) / v);
        const double s = loglog_fit(x, y).slope;
        inside += s >= -1.1 && s <= -0.9;
    }
    EXPECT_GE(inside, 0.95 * trials);
}

TEST(Kernels, PlateauDetection) {
    std::vector<double> h;
    for (int k = 0; k < 8; ++k) h.push_back(0.3 * std::pow(0.01 / 0.3, k / 7.0));
    const std::vector<double> flat(8, 2.5);
    const auto a = plateau_detect(h, flat);
    ASSERT_TRUE(a.has_value());
    EXPECT_EQ(a->onset, 0);
    EXPECT_EQ(a->value, 2.5);
    EXPECT_FALSE(plateau_detect(h, h).has_value());
    std::vector<double> p;
    for (double v : h) p.push_back(0.5 + v);
    const auto c = plateau_detect(h, p);
    ASSERT_TRUE(c.has_value());
    EXPECT_GT(c->onset, 0);
    EXPECT_NEAR(c->value, 0.5, 0.05);
    // Invariance under positive scaling.
    std::vector<double> q;
    for (double v : p) q.push_back(7.0 * v);
    const auto d = plateau_detect(h, q);
    ASSERT_TRUE(d.has_value());
    EXPECT_EQ(d->onset, c->onset);
    EXPECT_NEAR(d->value, 7.0 * c->value, 1e-12);
    EXPECT_THROW(plateau_detect(h, std::vector<double>(7, 1.0)), InputError);
}

TEST(Kernels, LanczosFindsTheExtremeEigenvalue) {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> nd;
    const int n = 80;
    Eigen::MatrixXd A(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) A(i, j) = nd(rng);
    A = (A + A.transpose()).eval();
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    const double ref = std::max(std::fabs(es.eigenvalues()[0]), std::fabs(es.eigenvalues()[n - 1]));
    const LanczosResult r = lanczos_extreme([&](const Eigen::VectorXd& x) { return Eigen::VectorXd(A * x); }, n);
    EXPECT_NEAR(std::fabs(r.value), ref, 1e-9 * ref);
}
