#pragma once

#include "lamelab/common.hpp"
#include "lamelab/geometry.hpp"
#include "lamelab/greens.hpp"
#include "lamelab/recon_norms.hpp"
#include "lamelab/tensor_field.hpp"

#include <array>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace lamelab {

struct BoundsConfig {
    MaterialPreset materials = MaterialPreset::defaults();
    DomainSpec omega;
    std::shared_ptr<const InclusionGeometry> d1;
    std::shared_ptr<const InclusionGeometry> d2;
    GreensOptions greens;
    double h_bar = 0.25;     // h < h_bar rho0
    double h_tilde = 0.1;    // h < h_tilde dist(P, D2)
    double h_ceiling = 0.4;  // h_max <= h_ceiling dist(P, D2)
    int num_h = 8;
    double h_ratio = 10.0;   // h_max / h_min
    std::vector<double> lambda_ws = {2.0 / 3.0, 3.0 / 4.0, 4.0 / 5.0};
    std::vector<int> directions = {3};  // 1..3 in the frame with e3 = -nu
    double plateau_fraction = 0.1;
    double triangle_tol = 0.05;
    double slope_center = -1.0;
    double slope_halfwidth = 0.25;
    double term2_slope_max = 0.2;
    double null_tol = 1e-8;
    std::vector<double> h_override;          // replaces the geometric list when set
    std::optional<ProbeFrame> frame_override;  // replaces select_probe_P when set

    void validate() const;
};

// Geometric h values, descending, spanning h_ratio below
// h_max = min(h_ceiling d, h_bar rho0, h_tilde d) (strict inequalities kept by
// a 1e-9 relative margin).
std::vector<double> sweep_h_values(const BoundsConfig& cfg, double dist_P_D2);

struct SweepRow {
    double h = 0.0;
    double lambda_w = 0.0;
    int i = 3;
    double g = 0.0;   // |(Gamma^{D2} - Gamma^{D1})(y_h, w_h) e_i . e_i|
    double hg = 0.0;
    // |(G0+ - G0)|, |(GD2 - G)|, |(G - G0)|, |(G0+ - G0D1)|, |(G0D1 - GD1)|
    std::array<double, 5> term{};
    double triangle_slack = 0.0;  // g - (term1 - terms 2..5), normalized by max(g, term1)
    bool triangle_ok = true;
    bool resolved = true;
    std::string flags;
};

/// The six Green's evaluators of the decomposition, all refined around every
/// probe of the sweep, in the frame selected by select_probe_P.
class BoundsLab {
public:
    explicit BoundsLab(BoundsConfig cfg);

    const BoundsConfig& config() const { return cfg_; }
    const ProbeSelection& selection() const { return sel_; }
    const Mat3& frame() const { return R_; }  // columns e1, e2, e3 = -nu
    const std::vector<double>& h_values() const { return hs_; }
    IsotropicTensor c0() const { return c0_; }
    IsotropicTensor c0_inclusion() const { return c0d_; }

    // Builds and solves. With terms = false only the two full problems are built.
    void prepare(bool terms = true);
    std::vector<SweepRow> sweep() const;
    // g at one probe pair, for callers that build their own h lists.
    double g_at(double h, double lambda_w, int i) const;

    const GreensEvaluator& full1() const { return *full1_; }
    const GreensEvaluator& full2() const { return *full2_; }

private:
    std::vector<Vec3> probe_cloud() const;
    ProbePoints probes(double h, double lambda_w) const;

    BoundsConfig cfg_;
    ProbeSelection sel_;
    Mat3 R_ = Mat3::Identity();
    std::vector<double> hs_;
    IsotropicTensor c0_, c0d_;
    bool terms_ = false;
    std::unique_ptr<GreensEvaluator> full1_, full2_, background_, frozen_, plus_, frozen_incl_;
};

struct LowerBoundFit {
    int i = 3;
    double lambda_w = 0.0;
    int resolved = 0;
    std::optional<FitResult> slope;
    double hg_min = 0.0;
    double hg_max = 0.0;
    bool slope_ok = false;
    bool plateau = false;          // hg_min >= plateau_fraction * hg_max > 0
    std::optional<Plateau> detected;  // 25% suffix detector, reported only
};

struct LowerBoundReport {
    std::vector<LowerBoundFit> fits;
    bool no_signal = false;  // every g below null_tol
    bool success = false;    // every direction has a lambda_w with plateau and slope in range
    std::vector<double> chosen_lambda_w;  // per direction, 0 if none
};

LowerBoundReport analyze_lower_bound(const std::vector<SweepRow>& rows, const BoundsConfig& cfg);

struct TermFit {
    std::string name;
    double max_abs = 0.0;
    std::optional<FitResult> fit;  // log(h term) or log(term) vs log h
};

struct TermReport {
    bool triangle_all = true;
    double worst_triangle = 0.0;  // most negative normalized slack
    TermFit term2;                // slope of log term2 vs log h
    double term2_constant = 0.0;  // max term2 * dist(P, D2)
    bool term2_flat = false;
    TermFit term3_scaled, term4_scaled, term5_scaled;  // fits of h * term
    double term3_max = 0.0;
    double term5_max = 0.0;
    bool term1_dominates = false;  // at the smallest resolved h
    bool conclusion = false;       // g >= term1 - sum(others) > 0 at the smallest resolved h
};

// Term analysis on the rows of one (direction, lambda_w) group.
TermReport analyze_terms(const std::vector<SweepRow>& rows, const BoundsConfig& cfg, double dist_P_D2, int i,
                         double lambda_w);

struct SmallnessRow {
    Vec3 y, w, l, m;
    double diff = 0.0;   // |(Gamma^{D2} - Gamma^{D1})(y, w) m . l|
    double ratio = 0.0;  // diff / (eps / rho0)
};

// Probe pairs drawn from the shell rho0 < dist(x, Omega) < 2 rho0.
std::vector<std::pair<Vec3, Vec3>> shell_probe_pairs(const DomainSpec& omega, int count, uint64_t seed);

std::vector<SmallnessRow> smallness_check(const GreensEvaluator& full1, const GreensEvaluator& full2,
                                          const DomainSpec& omega, const std::vector<std::pair<Vec3, Vec3>>& pairs,
                                          double eps_scaled);

struct ShapeFamily {
    double t = 0.0;
    double epsilon = 0.0;
    std::vector<double> h;
    std::vector<double> g;
};

struct UpperBoundReport {
    std::vector<ShapeFamily> families;  // ascending epsilon
    bool ordered = false;          // g_A <= slack g_B at every matched h when eps_A < eps_B
    double worst_ratio = 0.0;      // max over h of g_A / g_B
    std::vector<double> limit_t, limit_eps, limit_g;  // fixed-h limit, t descending
    bool vanishes = false;         // limit_g decreasing to exactly 0 at t = 0
    std::vector<bool> h_monotone;  // per family: log(g h) monotone in h
    std::optional<FitResult> exponent_fit;  // log(log(g lw h)/log eps) vs log(h/rho0)
};

// D2(t) = D1 translated by t * direction. `epsilon` computes the scaled DtN
// discrepancy of (D1, D2(t)). Families are compared on a common h grid.
UpperBoundReport upper_bound_shape(const BoundsConfig& base, const std::vector<double>& family_t,
                                   const std::vector<double>& limit_t, const Vec3& direction,
                                   const std::function<double(const InclusionGeometry&)>& epsilon,
                                   double slack = 1.3);

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);

}  // namespace lamelab
