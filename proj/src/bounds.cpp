#include "lamelab/bounds.hpp"

#include "lamelab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <random>

namespace lamelab {

void BoundsConfig::validate() const {
    omega.validate();
    if (!d1 || !d2) throw InputError("bounds: both inclusions are required");
    if (!(h_bar > 0) || !(h_tilde > 0 && h_tilde < 0.5)) throw InputError("bounds: need h_bar > 0 and 0 < h_tilde < 1/2");
    if (!(h_ceiling > 0)) throw InputError("bounds: h_ceiling must be positive");
    if (h_override.empty() && (num_h < 4 || !(h_ratio >= 10.0)))
        throw InputError("bounds: the h sweep needs at least 4 points spanning a decade");
    for (double h : h_override)
        if (!(h > 0)) throw InputError("bounds: h values must be positive");
    if (lambda_ws.empty()) throw InputError("bounds: lambda_w list is empty");
    for (double l : lambda_ws)
        if (!(l > 0 && l < 1)) throw InputError("bounds: lambda_w must lie in (0, 1)");
    if (directions.empty()) throw InputError("bounds: direction list is empty");
    for (int i : directions)
        if (i < 1 || i > 3) throw InputError("bounds: directions are 1, 2 or 3");
    if (!(plateau_fraction > 0 && plateau_fraction < 1)) throw InputError("bounds: plateau_fraction must lie in (0, 1)");
}

std::vector<double> sweep_h_values(const BoundsConfig& cfg, double d) {
    if (!cfg.h_override.empty()) {
        std::vector<double> hs = cfg.h_override;
        std::sort(hs.begin(), hs.end(), std::greater<>());
        return hs;
    }
    if (!(d > 0)) throw InputError("bounds: dist(P, D2) must be positive");
    const double margin = 1.0 - 1e-9;
    const double hmax =
        std::min({cfg.h_ceiling * d, margin * cfg.h_bar * cfg.omega.rho0, margin * cfg.h_tilde * d});
    std::vector<double> hs(cfg.num_h);
    for (int k = 0; k < cfg.num_h; ++k)
        hs[k] = hmax * std::pow(cfg.h_ratio, -static_cast<double>(k) / (cfg.num_h - 1));
    return hs;
}

// ---------------------------------------------------------------------------

BoundsLab::BoundsLab(BoundsConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    if (cfg_.frame_override) {
        sel_.frame = *cfg_.frame_override;
        sel_.frame.nu.normalize();
        sel_.dist_P_D2 = cfg_.d2->distance(sel_.frame.P);
    } else {
        sel_ = select_probe_P(*cfg_.d1, *cfg_.d2);
        if (sel_.swapped) std::swap(cfg_.d1, cfg_.d2);
    }
    R_ = frame_with_e3(-sel_.frame.nu);
    c0_ = cfg_.materials.background.at(sel_.frame.P);
    c0d_ = cfg_.materials.inclusion.at(sel_.frame.P);
    hs_ = sweep_h_values(cfg_, sel_.dist_P_D2);
}

ProbePoints BoundsLab::probes(double h, double lambda_w) const {
    ProbeFrame f = sel_.frame;
    f.h = h;
    f.lambda_w = lambda_w;
    return probe_points(f, cfg_.d1.get());
}

std::vector<Vec3> BoundsLab::probe_cloud() const {
    std::vector<Vec3> pts;
    for (double h : hs_)
        for (double lw : cfg_.lambda_ws) {
            const ProbePoints p = probes(h, lw);
            pts.push_back(p.y);
            pts.push_back(p.w);
        }
    return pts;
}

void BoundsLab::prepare(bool terms) {
    terms_ = terms;
    const auto& m = cfg_.materials;
    const Vec3 P = sel_.frame.P;
    full1_ = std::make_unique<GreensEvaluator>(GreensProblem::full(m.background, m.inclusion, cfg_.d1), cfg_.greens);
    full2_ = std::make_unique<GreensEvaluator>(GreensProblem::full(m.background, m.inclusion, cfg_.d2), cfg_.greens);
    std::vector<GreensEvaluator*> all = {full1_.get(), full2_.get()};
    if (terms) {
        background_ = std::make_unique<GreensEvaluator>(GreensProblem::variable_background(m.background), cfg_.greens);
        frozen_ = std::make_unique<GreensEvaluator>(GreensProblem::frozen(c0_), cfg_.greens);
        plus_ = std::make_unique<GreensEvaluator>(GreensProblem::halfspace(c0_, c0d_, P, -sel_.frame.nu), cfg_.greens);
        frozen_incl_ = std::make_unique<GreensEvaluator>(GreensProblem::frozen_inclusion(c0_, c0d_, cfg_.d1), cfg_.greens);
        for (auto* e : {background_.get(), frozen_.get(), plus_.get(), frozen_incl_.get()}) all.push_back(e);
    }
    const std::vector<Vec3> cloud = probe_cloud();
    std::vector<Vec3> loads;
    for (size_t k = 1; k < cloud.size(); k += 2) loads.push_back(cloud[k]);
    for (GreensEvaluator* e : all) {
        e->prepare(cloud);
        e->precompute(loads);
    }
}

double BoundsLab::g_at(double h, double lambda_w, int i) const {
    if (!full1_) throw InputError("BoundsLab::prepare must be called first");
    const ProbePoints p = probes(h, lambda_w);
    const Vec3 e = R_.col(i - 1);
    return std::fabs(e.dot((full2_->evaluate(p.y, p.w) - full1_->evaluate(p.y, p.w)) * e));
}

std::vector<SweepRow> BoundsLab::sweep() const {
    if (!full1_) throw InputError("BoundsLab::prepare must be called first");
    const size_t nl = cfg_.lambda_ws.size(), nd = cfg_.directions.size();
    std::vector<SweepRow> rows(hs_.size() * nl * nd);
    parallel_for(hs_.size() * nl, [&](std::size_t k) {
        const double h = hs_[k / nl], lw = cfg_.lambda_ws[k % nl];
        const ProbePoints p = probes(h, lw);
        std::array<Mat3, 6> M;  // D2, D1, background, frozen, plus, frozen inclusion
        bool resolved = true;
        std::string flags;
        try {
            M[0] = full2_->evaluate(p.y, p.w);
            M[1] = full1_->evaluate(p.y, p.w);
            if (terms_) {
                M[2] = background_->evaluate(p.y, p.w);
                M[3] = frozen_->evaluate(p.y, p.w);
                M[4] = plus_->evaluate(p.y, p.w);
                M[5] = frozen_incl_->evaluate(p.y, p.w);
            }
        } catch (const ResolutionError&) {
            resolved = false;
            flags = "unresolved";
        }
        for (size_t d = 0; d < nd; ++d) {
            SweepRow& r = rows[k * nd + d];
            r.h = h;
            r.lambda_w = lw;
            r.i = cfg_.directions[d];
            r.resolved = resolved;
            r.flags = flags;
            if (!resolved) continue;
            const Vec3 e = R_.col(r.i - 1);
            auto q = [&](const Mat3& A) { return std::fabs(e.dot(A * e)); };
            r.g = q(M[0] - M[1]);
            r.hg = h * r.g;
            if (terms_) {
                r.term = {q(M[4] - M[3]), q(M[0] - M[2]), q(M[2] - M[3]), q(M[4] - M[5]), q(M[5] - M[1])};
                const double lower = r.term[0] - (r.term[1] + r.term[2] + r.term[3] + r.term[4]);
                const double scale = std::max({r.g, r.term[0], std::numeric_limits<double>::min()});
                r.triangle_slack = (r.g - lower) / scale;
                r.triangle_ok = r.triangle_slack >= -cfg_.triangle_tol;
            }
        }
    });
    return rows;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<const SweepRow*> group(const std::vector<SweepRow>& rows, int i, double lw, bool resolved_only = true) {
    std::vector<const SweepRow*> out;
    for (const auto& r : rows)
        if (r.i == i && r.lambda_w == lw && (r.resolved || !resolved_only)) out.push_back(&r);
    std::sort(out.begin(), out.end(), [](const SweepRow* a, const SweepRow* b) { return a->h > b->h; });
    return out;
}

std::optional<FitResult> try_loglog(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() < 3) return std::nullopt;
    for (double v : y)
        if (!(v > 0)) return std::nullopt;
    return loglog_fit(x, y);
}

}  // namespace

LowerBoundReport analyze_lower_bound(const std::vector<SweepRow>& rows, const BoundsConfig& cfg) {
    LowerBoundReport rep;
    double gmax = 0.0;
    for (const auto& r : rows)
        if (r.resolved) gmax = std::max(gmax, r.g);
    rep.no_signal = gmax <= cfg.null_tol;
    rep.success = !rep.no_signal;
    for (int i : cfg.directions) {
        double chosen = 0.0;
        for (double lw : cfg.lambda_ws) {
            LowerBoundFit f;
            f.i = i;
            f.lambda_w = lw;
            const auto g = group(rows, i, lw);
            f.resolved = static_cast<int>(g.size());
            std::vector<double> h, gv, hg;
            for (const SweepRow* r : g) {
                h.push_back(r->h);
                gv.push_back(r->g);
                hg.push_back(r->hg);
            }
            if (!hg.empty()) {
                f.hg_min = *std::min_element(hg.begin(), hg.end());
                f.hg_max = *std::max_element(hg.begin(), hg.end());
            }
            if (!rep.no_signal) {
                f.slope = try_loglog(h, gv);
                f.slope_ok = f.slope && std::fabs(f.slope->slope - cfg.slope_center) <= cfg.slope_halfwidth;
                f.plateau = f.resolved >= 3 && f.hg_max > 0 && f.hg_min >= cfg.plateau_fraction * f.hg_max;
                if (h.size() >= 4) f.detected = plateau_detect(h, hg);
            }
            if (chosen == 0.0 && f.plateau && f.slope_ok) chosen = lw;
            rep.fits.push_back(f);
        }
        rep.chosen_lambda_w.push_back(chosen);
        if (chosen == 0.0) rep.success = false;
    }
    return rep;
}

TermReport analyze_terms(const std::vector<SweepRow>& rows, const BoundsConfig& cfg, double dist_P_D2, int i,
                         double lambda_w) {
    TermReport rep;
    rep.term2.name = "term2";
    rep.term3_scaled.name = "h*term3";
    rep.term4_scaled.name = "h*term4";
    rep.term5_scaled.name = "h*term5";
    const auto g = group(rows, i, lambda_w);
    if (g.empty()) throw FitError("term analysis: no resolved sweep rows for this direction and lambda_w");
    std::vector<double> h, t2, s3, s4, s5;
    for (const SweepRow* r : g) {
        rep.triangle_all = rep.triangle_all && r->triangle_ok;
        rep.worst_triangle = std::min(rep.worst_triangle, r->triangle_slack);
        h.push_back(r->h);
        t2.push_back(r->term[1]);
        s3.push_back(r->h * r->term[2]);
        s4.push_back(r->h * r->term[3]);
        s5.push_back(r->h * r->term[4]);
        rep.term3_max = std::max(rep.term3_max, r->term[2]);
        rep.term5_max = std::max(rep.term5_max, r->term[4]);
    }
    auto fill = [&](TermFit& tf, const std::vector<double>& v) {
        tf.max_abs = *std::max_element(v.begin(), v.end());
        if (tf.max_abs > cfg.null_tol) tf.fit = try_loglog(h, v);
    };
    fill(rep.term2, t2);
    fill(rep.term3_scaled, s3);
    fill(rep.term4_scaled, s4);
    fill(rep.term5_scaled, s5);
    rep.term2_constant = rep.term2.max_abs * dist_P_D2;
    rep.term2_flat = rep.term2.fit ? std::fabs(rep.term2.fit->slope) < cfg.term2_slope_max
                                   : rep.term2.max_abs <= cfg.null_tol;
    const SweepRow& last = *g.back();
    const double others = last.term[1] + last.term[2] + last.term[3] + last.term[4];
    rep.term1_dominates = last.term[0] > others;
    rep.conclusion = last.term[0] - others > 0 && last.g >= (last.term[0] - others) * (1.0 - cfg.triangle_tol);
    return rep;
}

// ---------------------------------------------------------------------------

std::vector<std::pair<Vec3, Vec3>> shell_probe_pairs(const DomainSpec& omega, int count, uint64_t seed) {
    if (count < 1) throw InputError("shell probes: count must be positive");
    std::mt19937_64 rng(seed);
    const double r0 = omega.rho0;
    const Vec3 lo = omega.box.lo - Vec3::Constant(2 * r0), hi = omega.box.hi + Vec3::Constant(2 * r0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto draw = [&]() {
        for (;;) {
            Vec3 x;
            for (int k = 0; k < 3; ++k) x[k] = lo[k] + (hi[k] - lo[k]) * u(rng);
            const double d = omega.box.distance(x);
            if (d > 1.1 * r0 && d < 1.9 * r0) return x;
        }
    };
    std::vector<std::pair<Vec3, Vec3>> out;
    while (static_cast<int>(out.size()) < count) {
        const Vec3 y = draw(), w = draw();
        if ((y - w).norm() >= 0.5 * r0) out.emplace_back(y, w);
    }
    return out;
}

std::vector<SmallnessRow> smallness_check(const GreensEvaluator& full1, const GreensEvaluator& full2,
                                          const DomainSpec& omega, const std::vector<std::pair<Vec3, Vec3>>& pairs,
                                          double eps_scaled) {
    const double r0 = omega.rho0;
    for (const auto& [y, w] : pairs)
        for (const Vec3& p : {y, w}) {
            const double d = omega.box.distance(p);
            if (!(d > r0 && d < 2 * r0)) throw InputError("smallness check: probe outside the shell rho0 < dist < 2 rho0");
        }
    std::vector<SmallnessRow> rows(pairs.size());
    parallel_for(pairs.size(), [&](std::size_t k) {
        SmallnessRow& r = rows[k];
        r.y = pairs[k].first;
        r.w = pairs[k].second;
        const Mat3 D = full2.evaluate(r.y, r.w) - full1.evaluate(r.y, r.w);
        // Largest singular pair from the eigenproblem of D^T D.
        const Eigen::SelfAdjointEigenSolver<Mat3> es(D.transpose() * D);
        r.m = es.eigenvectors().col(2);
        const Vec3 Dm = D * r.m;
        r.diff = Dm.norm();
        r.l = r.diff > 0 ? Vec3(Dm / r.diff) : unit(0);
        const double bound = eps_scaled / r0;
        r.ratio = bound > 0 ? r.diff / bound : (r.diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    });
    return rows;
}

// ---------------------------------------------------------------------------

UpperBoundReport upper_bound_shape(const BoundsConfig& base, const std::vector<double>& family_t,
                                   const std::vector<double>& limit_t, const Vec3& direction,
                                   const std::function<double(const InclusionGeometry&)>& epsilon, double slack) {
    if (family_t.size() < 2) throw InputError("upper bound: at least two families are needed");
    for (double t : family_t)
        if (!(t > 0)) throw InputError("upper bound: family offsets must be positive");
    const Vec3 dir = direction.normalized();
    const int i = base.directions.front();
    const double lw = base.lambda_ws.front();
    auto shifted = [&](double t) { return std::make_shared<const InclusionGeometry>(base.d1->translated(t * dir)); };

    // Common probe frame and h grid from the smallest offset.
    const double tmin = *std::min_element(family_t.begin(), family_t.end());
    BoundsConfig c0 = base;
    c0.d2 = shifted(tmin);
    const ProbeSelection sel = select_probe_P(*c0.d1, *c0.d2);
    if (sel.swapped) throw InputError("upper bound: the probe point must lie on D1");
    std::vector<double> hs = base.h_override.empty() ? sweep_h_values(c0, sel.dist_P_D2) : base.h_override;
    std::sort(hs.begin(), hs.end(), std::greater<>());

    auto run = [&](double t) {
        ShapeFamily f;
        f.t = t;
        BoundsConfig c = base;
        c.d2 = t > 0 ? shifted(t) : base.d1;
        c.h_override = hs;
        c.frame_override = sel.frame;
        c.lambda_ws = {lw};
        c.directions = {i};
        f.epsilon = epsilon(*c.d2);
        BoundsLab lab(c);
        lab.prepare(false);
        f.h = hs;
        for (double h : hs) f.g.push_back(lab.g_at(h, lw, i));
        return f;
    };

    UpperBoundReport rep;
    for (double t : family_t) rep.families.push_back(run(t));
    std::sort(rep.families.begin(), rep.families.end(),
              [](const ShapeFamily& a, const ShapeFamily& b) { return a.epsilon < b.epsilon; });
    rep.ordered = true;
    for (size_t f = 0; f + 1 < rep.families.size(); ++f) {
        const auto& A = rep.families[f];
        const auto& B = rep.families[f + 1];
        for (size_t k = 0; k < hs.size(); ++k) {
            const double ratio = B.g[k] > 0 ? A.g[k] / B.g[k] : std::numeric_limits<double>::infinity();
            rep.worst_ratio = std::max(rep.worst_ratio, ratio);
            if (A.g[k] > slack * B.g[k]) rep.ordered = false;
        }
    }
    for (const auto& f : rep.families) {
        bool mono = true;
        for (size_t k = 1; k < f.h.size(); ++k) mono = mono && f.h[k] * f.g[k] >= f.h[k - 1] * f.g[k - 1];
        rep.h_monotone.push_back(mono);
    }

    std::vector<double> lt = limit_t;
    std::sort(lt.begin(), lt.end(), std::greater<>());
    if (!lt.empty()) {
        const double hfix = hs.back();
        for (double t : lt) {
            ShapeFamily f = [&] {
                BoundsConfig cc = base;
                cc.d2 = t > 0 ? shifted(t) : base.d1;
                cc.h_override = {hfix};
                cc.frame_override = sel.frame;
                cc.lambda_ws = {lw};
                cc.directions = {i};
                ShapeFamily s;
                s.t = t;
                s.epsilon = t > 0 ? epsilon(*cc.d2) : 0.0;
                BoundsLab lab(cc);
                lab.prepare(false);
                s.g = {lab.g_at(hfix, lw, i)};
                return s;
            }();
            rep.limit_t.push_back(t);
            rep.limit_eps.push_back(f.epsilon);
            rep.limit_g.push_back(f.g[0]);
        }
        rep.vanishes = rep.limit_t.back() == 0.0 && rep.limit_g.back() <= base.null_tol;
        for (size_t k = 1; k < rep.limit_g.size(); ++k) rep.vanishes = rep.vanishes && rep.limit_g[k] <= rep.limit_g[k - 1];
    }

    std::vector<double> x, y;
    for (const auto& f : rep.families) {
        if (!(f.epsilon > 0 && f.epsilon < 1)) continue;
        for (size_t k = 0; k < f.h.size(); ++k) {
            const double v = f.g[k] * lw * f.h[k];
            if (!(v > 0 && v < 1)) continue;
            x.push_back(f.h[k] / base.omega.rho0);
            y.push_back(std::log(v) / std::log(f.epsilon));
        }
    }
    if (x.size() >= 3) rep.exponent_fit = loglog_fit(x, y);
    return rep;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
    os << "h,lambda_w,i,g,h_g,term1,term2,term3,term4,term5,triangle_slack,flags\n";
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    for (const auto& r : rows) {
        std::string flags = r.flags;
        if (r.resolved && !r.triangle_ok) flags += flags.empty() ? "triangle" : ";triangle";
        os << num(r.h) << ',' << num(r.lambda_w) << ',' << r.i << ',' << num(r.g) << ',' << num(r.hg);
        for (double t : r.term) os << ',' << num(t);
        os << ',' << num(r.triangle_slack) << ',' << flags << '\n';
    }
}

}  // namespace lamelab
