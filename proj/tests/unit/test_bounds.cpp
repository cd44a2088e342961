#include "lamelab/bounds.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace lamelab;

namespace {

BoundsConfig base_config() {
    BoundsConfig c;
    c.d1 = std::make_shared<const InclusionGeometry>(InclusionGeometry::ball(Vec3(0.45, 0.5, 0.5), 0.25));
    c.d2 = std::make_shared<const InclusionGeometry>(InclusionGeometry::ball(Vec3(0.8, 0.5, 0.5), 0.1));
    c.greens.center = Vec3(0.5, 0.5, 0.5);
    return c;
}

// Rows of one (i, lambda_w) group with g = a h^p.
std::vector<SweepRow> power_rows(double a, double p, const std::vector<double>& hs, double lw = 2.0 / 3.0) {
    std::vector<SweepRow> rows;
    for (double h : hs) {
        SweepRow r;
        r.h = h;
        r.lambda_w = lw;
        r.i = 3;
        r.g = a * std::pow(h, p);
        r.hg = h * r.g;
        rows.push_back(r);
    }
    return rows;
}

}  // namespace

TEST(BoundsSweep, HValuesRespectTheConstraints) {
    BoundsConfig c = base_config();
    for (double d : {0.05, 0.5, 3.0}) {
        const auto hs = sweep_h_values(c, d);
        ASSERT_EQ(static_cast<int>(hs.size()), c.num_h);
        for (size_t k = 0; k < hs.size(); ++k) {
            EXPECT_LT(hs[k], c.h_bar * c.omega.rho0);
            EXPECT_LT(hs[k], c.h_tilde * d);
            EXPECT_LE(hs[k], c.h_ceiling * d);
            if (k) EXPECT_LT(hs[k], hs[k - 1]);
        }
        EXPECT_NEAR(hs.front() / hs.back(), c.h_ratio, 1e-9);
        EXPECT_GE(hs.front() / hs.back(), 10.0 - 1e-9);
    }
    c.h_override = {0.01, 0.1, 0.05};
    EXPECT_EQ(sweep_h_values(c, 1.0), (std::vector<double>{0.1, 0.05, 0.01}));
    EXPECT_THROW(sweep_h_values(base_config(), 0.0), InputError);
}

TEST(BoundsSweep, ConfigValidation) {
    BoundsConfig c = base_config();
    c.lambda_ws = {1.0};
    EXPECT_THROW(c.validate(), InputError);
    c = base_config();
    c.directions = {4};
    EXPECT_THROW(c.validate(), InputError);
    c = base_config();
    c.d2.reset();
    EXPECT_THROW(c.validate(), InputError);
    c = base_config();
    c.h_ratio = 2.0;
    EXPECT_THROW(c.validate(), InputError);
}

TEST(BoundsAnalysis, PlantedInverseLawPasses) {
    const BoundsConfig c = base_config();
    std::vector<double> hs;
    for (int k = 0; k < 8; ++k) hs.push_back(0.05 * std::pow(0.1, k / 7.0));
    const LowerBoundReport rep = analyze_lower_bound(power_rows(0.03, -1.0, hs), c);
    EXPECT_FALSE(rep.no_signal);
    EXPECT_TRUE(rep.success);
    ASSERT_EQ(rep.fits.size(), 3u);
    EXPECT_NEAR(rep.fits[0].slope->slope, -1.0, 1e-12);
    EXPECT_TRUE(rep.fits[0].plateau);
    EXPECT_NEAR(rep.chosen_lambda_w[0], 2.0 / 3.0, 0.0);
    // The other lambda_w groups are empty and cannot be chosen.
    EXPECT_EQ(rep.fits[1].resolved, 0);
}

TEST(BoundsAnalysis, BoundedOrSteeperLawsFail) {
    const BoundsConfig c = base_config();
    std::vector<double> hs;
    for (int k = 0; k < 8; ++k) hs.push_back(0.05 * std::pow(0.1, k / 7.0));
    const LowerBoundReport flat = analyze_lower_bound(power_rows(0.03, 0.5, hs), c);
    EXPECT_FALSE(flat.success);
    EXPECT_FALSE(flat.fits[0].plateau);  // h g decays by a decade and a half
    const LowerBoundReport steep = analyze_lower_bound(power_rows(0.03, -2.0, hs), c);
    EXPECT_FALSE(steep.success);
    EXPECT_FALSE(steep.fits[0].slope_ok);
    const LowerBoundReport none = analyze_lower_bound(power_rows(0.0, -1.0, hs), c);
    EXPECT_TRUE(none.no_signal);
    EXPECT_FALSE(none.success);
}

TEST(BoundsAnalysis, UnresolvedRowsAreLeftOut) {
    const BoundsConfig c = base_config();
    std::vector<double> hs;
    for (int k = 0; k < 8; ++k) hs.push_back(0.05 * std::pow(0.1, k / 7.0));
    auto rows = power_rows(0.03, -1.0, hs);
    rows.back().resolved = false;
    rows.back().g = 1e6;
    const LowerBoundReport rep = analyze_lower_bound(rows, c);
    EXPECT_EQ(rep.fits[0].resolved, 7);
    EXPECT_TRUE(rep.success);
}

TEST(BoundsAnalysis, TermReportOnPlantedTerms) {
    const BoundsConfig c = base_config();
    std::vector<double> hs;
    for (int k = 0; k < 6; ++k) hs.push_back(0.05 * std::pow(0.1, k / 5.0));
    auto rows = power_rows(0.03, -1.0, hs);
    for (auto& r : rows) {
        r.term = {0.032 / r.h, 1e-3, 0.0, 0.05 * std::sqrt(r.h), 0.0};
        r.g = r.term[0] - r.term[1] - r.term[3];
        const double lower = r.term[0] - (r.term[1] + r.term[2] + r.term[3] + r.term[4]);
        r.triangle_slack = (r.g - lower) / std::max(r.g, r.term[0]);
        r.triangle_ok = r.triangle_slack >= -c.triangle_tol;
    }
    const TermReport t = analyze_terms(rows, c, 0.5, 3, 2.0 / 3.0);
    EXPECT_TRUE(t.triangle_all);
    EXPECT_TRUE(t.term2_flat);
    EXPECT_NEAR(t.term2.fit->slope, 0.0, 1e-12);
    EXPECT_NEAR(t.term2_constant, 5e-4, 1e-15);
    EXPECT_EQ(t.term3_max, 0.0);
    EXPECT_FALSE(t.term3_scaled.fit.has_value());
    EXPECT_NEAR(t.term4_scaled.fit->slope, 1.5, 1e-12);
    EXPECT_TRUE(t.term1_dominates);
    EXPECT_TRUE(t.conclusion);
    EXPECT_THROW(analyze_terms(rows, c, 0.5, 1, 2.0 / 3.0), FitError);
}

TEST(BoundsShell, ProbePairsLieInTheShellAndAreSeeded) {
    DomainSpec omega;
    const auto a = shell_probe_pairs(omega, 10, 7);
    const auto b = shell_probe_pairs(omega, 10, 7);
    const auto c = shell_probe_pairs(omega, 10, 8);
    ASSERT_EQ(a.size(), 10u);
    for (size_t k = 0; k < a.size(); ++k) {
        EXPECT_TRUE(in_shell(a[k].first, omega));
        EXPECT_TRUE(in_shell(a[k].second, omega));
        EXPECT_GE((a[k].first - a[k].second).norm(), 0.5 * omega.rho0);
        EXPECT_EQ(a[k].first, b[k].first);
        EXPECT_EQ(a[k].second, b[k].second);
    }
    EXPECT_NE(a[0].first, c[0].first);
}

TEST(BoundsLabRun, ZeroJumpGivesNoSignal) {
    BoundsConfig c = base_config();
    c.materials.inclusion = c.materials.background;
    c.materials.eta0 = 0.0;
    c.num_h = 4;
    c.lambda_ws = {2.0 / 3.0};
    BoundsLab lab(c);
    lab.prepare(false);
    const auto rows = lab.sweep();
    ASSERT_EQ(rows.size(), 4u);
    for (const auto& r : rows) {
        EXPECT_TRUE(r.resolved);
        EXPECT_LE(r.g, 1e-12);
    }
    const LowerBoundReport rep = analyze_lower_bound(rows, c);
    EXPECT_TRUE(rep.no_signal);
    EXPECT_FALSE(rep.success);
    EXPECT_FALSE(rep.fits[0].plateau);
}

TEST(BoundsLabRun, FrameAndFrozenTensors) {
    const BoundsConfig c = base_config();
    const BoundsLab lab(c);
    const ProbeSelection& s = lab.selection();
    EXPECT_FALSE(s.swapped);
    EXPECT_NEAR(s.dist_P_D2, 0.5, 1e-3);
    EXPECT_LT((s.frame.nu + Vec3::UnitX()).norm(), 0.05);
    EXPECT_LT((lab.frame().col(2) + s.frame.nu).norm(), 1e-14);
    EXPECT_EQ(lab.c0(), (IsotropicTensor{1, 1}));
    EXPECT_EQ(lab.c0_inclusion(), (IsotropicTensor{4, 4}));
    EXPECT_THROW(lab.sweep(), InputError);
}

TEST(BoundsLabRun, DecompositionUnderConstantMaterials) {
    BoundsConfig c = base_config();
    c.num_h = 4;
    c.lambda_ws = {2.0 / 3.0};
    c.directions = {1, 3};
    BoundsLab lab(c);
    lab.prepare(true);
    const auto rows = lab.sweep();
    ASSERT_EQ(rows.size(), 8u);
    for (const auto& r : rows) {
        ASSERT_TRUE(r.resolved);
        // Frozen background equals the actual one, and so does the frozen inclusion problem.
        EXPECT_LE(r.term[2], 1e-8);
        EXPECT_LE(r.term[4], 1e-8);
        EXPECT_TRUE(r.triangle_ok) << r.triangle_slack;
        EXPECT_GT(r.g, 0.0);
    }
    std::ostringstream os;
    write_sweep_csv(os, rows);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "h,lambda_w,i,g,h_g,term1,term2,term3,term4,term5,triangle_slack,flags");
    int n = 0;
    while (std::getline(is, line)) ++n;
    EXPECT_EQ(n, 8);
}

TEST(BoundsLabRun, SmallnessVanishesForIdenticalInclusions) {
    BoundsConfig c = base_config();
    const auto pairs = shell_probe_pairs(c.omega, 3, 1);
    std::vector<Vec3> pts;
    for (const auto& p : pairs) pts.push_back(p.first), pts.push_back(p.second);
    GreensOptions o = c.greens;
    o.L1 = 8.0;  // the shell reaches 2 rho0 beyond the unit cube
    o.L2 = 16.0;
    GreensEvaluator a(GreensProblem::full(c.materials.background, c.materials.inclusion, c.d1), o);
    GreensEvaluator b(GreensProblem::full(c.materials.background, c.materials.inclusion, c.d1), o);
    a.prepare(pts);
    b.prepare(pts);
    const auto rows = smallness_check(a, b, c.omega, pairs, 0.0);
    ASSERT_EQ(rows.size(), 3u);
    for (const auto& r : rows) {
        EXPECT_EQ(r.diff, 0.0);
        EXPECT_EQ(r.ratio, 0.0);
    }
    const std::vector<std::pair<Vec3, Vec3>> bad = {{Vec3(0.5, 0.5, 0.5), Vec3(-1.5, 0.5, 0.5)}};
    EXPECT_THROW(smallness_check(a, b, c.omega, bad, 0.1), InputError);
}
