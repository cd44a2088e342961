#include "lamelab/stability.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <random>

namespace lamelab {

PiecewiseTensor ForwardSetup::composite(std::shared_ptr<const InclusionGeometry> d) const {
    PiecewiseTensor p;
    p.background = materials.background;
    p.inclusion = materials.inclusion;
    p.region = std::move(d);
    return p;
}

DtnWorkspace::DtnWorkspace(ForwardSetup setup)
    : setup_(std::move(setup)),
      mesh_(std::make_shared<const HexMesh>(HexMesh::structured(setup_.omega.box, setup_.n))),
      space_(BoundarySpace::build(mesh_)) {
    setup_.omega.validate();
}

DtnMatrix DtnWorkspace::dtn(const InclusionGeometry& d) const {
    FemSystem sys(mesh_, setup_.composite(std::make_shared<const InclusionGeometry>(d)), setup_.assembly);
    return build_dtn(sys, space_);
}

NormValue DtnWorkspace::discrepancy(const DtnMatrix& L1, const DtnMatrix& L2) const {
    if (L1.mesh_id != L2.mesh_id) throw InputError("DtN matrices come from different meshes");
    const double r0 = setup_.omega.rho0;
    return operator_norm_h12(space_, L1.L - L2.L, r0, setup_.norm_scale * std::pow(r0, setup_.rho0_exponent - 1.0));
}

// ---------------------------------------------------------------------------

InclusionGeometry PairFamily::member(double t) const {
    switch (kind) {
    case FamilyKind::Offset: return base.translated(t * direction.normalized());
    case FamilyKind::Radius: {
        if (!(1.0 + t > 0)) throw InputError("radius family: 1 + t must be positive");
        if (base.kind() == InclusionGeometry::Kind::Ball) return InclusionGeometry::ball(base.center(), base.radius() * (1.0 + t));
        if (base.kind() == InclusionGeometry::Kind::Ellipsoid)
            return InclusionGeometry::ellipsoid(base.center(), base.semiaxes() * (1.0 + t), base.rotation());
        throw InputError("radius family needs a ball or an ellipsoid");
    }
    }
    return base;
}

void PairFamily::validate(const DomainSpec& omega, double clearance) const {
    if (t.empty()) throw InputError("family has no members");
    std::vector<double> all = t;
    all.push_back(0.0);
    for (double v : all) {
        const Box b = member(v).bounding_box();
        for (int k = 0; k < 3; ++k)
            if (b.lo[k] - omega.box.lo[k] < clearance || omega.box.hi[k] - b.hi[k] < clearance)
                throw InputError("family member at t = " + std::to_string(v) + " comes closer than the clearance to the boundary");
    }
}

PairFamily PairFamily::ball_offset(const DomainSpec& omega, int count) {
    if (count < 1) throw InputError("family size must be positive");
    PairFamily f;
    const double r0 = omega.rho0;
    f.base = InclusionGeometry::ball(omega.box.center(), 0.2 * r0);
    f.kind = FamilyKind::Offset;
    f.direction = Vec3::Ones().normalized();
    for (int k = 0; k < count; ++k)
        f.t.push_back(r0 * (count == 1 ? 0.02 : 0.02 + 0.10 * k / (count - 1)));
    return f;
}

PairFamily PairFamily::radius_growth(const DomainSpec& omega, int count) {
    if (count < 1) throw InputError("family size must be positive");
    PairFamily f;
    f.base = InclusionGeometry::ball(omega.box.center(), 0.2 * omega.rho0);
    f.kind = FamilyKind::Radius;
    for (int k = 0; k < count; ++k) f.t.push_back(count == 1 ? 0.05 : 0.05 + 0.25 * k / (count - 1));
    return f;
}

std::vector<StabilityRecord> run_family(const PairFamily& family, const DtnWorkspace& ws, int hausdorff_samples) {
    const DtnMatrix L1 = ws.dtn(family.base);
    std::vector<StabilityRecord> out;
    for (double t : family.t) {
        StabilityRecord r;
        r.t = t;
        r.n = ws.setup().n;
        try {
            const InclusionGeometry d2 = family.member(t);
            r.d_hausdorff = t == 0.0 ? 0.0 : hausdorff_distance(family.base, d2, hausdorff_samples);
            const NormValue e = t == 0.0 ? ws.discrepancy(L1, L1) : ws.discrepancy(L1, ws.dtn(d2));
            r.epsilon_raw = e.raw;
            r.epsilon_scaled = e.scaled;
            if (t == 0.0) r.flags = "reference";
            else if (r.epsilon_scaled >= 1.0) r.flags = "eps>=1";
        } catch (const SolverError& e) {
            r.flags = std::string("skipped:solver:") + e.what();
        } catch (const InputError& e) {
            r.flags = std::string("skipped:input:") + e.what();
        }
        out.push_back(r);
    }
    return out;
}

FamilyChecks check_family(const std::vector<StabilityRecord>& records) {
    std::vector<const StabilityRecord*> v;
    for (const auto& r : records)
        if (r.t > 0 && r.flags.rfind("skipped", 0) != 0) v.push_back(&r);
    std::sort(v.begin(), v.end(), [](auto* a, auto* b) { return a->t < b->t; });
    FamilyChecks c;
    c.d_increasing = c.eps_increasing = v.size() >= 2;
    for (size_t k = 1; k < v.size(); ++k) {
        c.d_increasing = c.d_increasing && v[k]->d_hausdorff > v[k - 1]->d_hausdorff;
        c.eps_increasing = c.eps_increasing && v[k]->epsilon_scaled > v[k - 1]->epsilon_scaled;
    }
    return c;
}

StabilityFit fit_log_stability(const std::vector<StabilityRecord>& records, double rho0) {
    if (!(rho0 > 0)) throw InputError("rho0 must be positive");
    std::vector<double> x, y;
    StabilityFit f;
    for (size_t k = 0; k < records.size(); ++k) {
        const auto& r = records[k];
        const bool ok = r.flags.rfind("skipped", 0) != 0 && r.epsilon_scaled > 0 && r.epsilon_scaled < 1 &&
                        r.d_hausdorff > 0;
        if (!ok) {
            f.excluded.push_back(static_cast<int>(k));
            continue;
        }
        x.push_back(std::log(std::fabs(std::log(r.epsilon_scaled))));
        y.push_back(std::log(r.d_hausdorff));
    }
    f.n_records = static_cast<int>(x.size());
    if (f.n_records < 4) throw FitError("stability fit needs at least 4 records with 0 < eps < 1, got " + std::to_string(f.n_records));
    const FitResult lf = linear_fit(x, y);
    f.eta_fit = -lf.slope;
    f.r2 = lf.r2;
    f.C_fit = std::exp(lf.intercept) / rho0;
    double worst = 0.0;
    for (size_t k = 0; k < x.size(); ++k) worst = std::max(worst, y[k] - (lf.intercept + lf.slope * x[k]));
    f.C_envelope = f.C_fit * std::exp(worst);
    return f;
}

namespace {

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void write_stability_csv(std::ostream& os, const std::vector<StabilityRecord>& records) {
    os << "t,epsilon_raw,epsilon_scaled,d_hausdorff,n,flags\n";
    for (const auto& r : records) {
        std::string flags = r.flags;
        std::replace(flags.begin(), flags.end(), ',', ';');
        os << num(r.t) << ',' << num(r.epsilon_raw) << ',' << num(r.epsilon_scaled) << ',' << num(r.d_hausdorff) << ','
           << r.n << ',' << flags << '\n';
    }
}

std::string fit_json(const StabilityFit& fit) {
    nlohmann::ordered_json j;
    j["C_fit"] = fit.C_fit;
    j["eta_fit"] = fit.eta_fit;
    j["r2"] = fit.r2;
    j["C_envelope"] = fit.C_envelope;
    j["n_records"] = fit.n_records;
    j["excluded"] = fit.excluded;
    return j.dump(2);
}

double rho0_covariance(const ForwardSetup& setup, const InclusionGeometry& d1, const InclusionGeometry& d2, double s) {
    if (!(s > 0)) throw InputError("scale factor must be positive");
    auto eps_at = [&](double scale) {
        ForwardSetup st = setup;
        st.omega = setup.omega.scaled(scale);
        DtnWorkspace ws(st);
        return ws.discrepancy(ws.dtn(d1.scaled(scale)), ws.dtn(d2.scaled(scale))).scaled;
    };
    const double e1 = eps_at(1.0), e2 = eps_at(s);
    return std::fabs(e2 - e1) / std::max(std::fabs(e1), std::numeric_limits<double>::min());
}

DtnMatrix perturb_dtn(const DtnMatrix& L, const BoundarySpace& space, double delta, uint64_t seed) {
    if (!(delta >= 0)) throw InputError("perturbation size must be nonnegative");
    const int n = static_cast<int>(L.L.rows());
    if (n != space.num_dofs()) throw InputError("perturbation: matrix does not match the trace space");
    DtnMatrix out = L;
    if (delta == 0.0) return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd S(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) S(i, j) = nd(rng);
    S = (0.5 * (S + S.transpose())).eval();
    // Project out the rigid motions so the kernel of L is kept.
    const auto rigid = space.rigid_motions();
    Eigen::MatrixXd Q(n, static_cast<int>(rigid.size()));
    for (size_t k = 0; k < rigid.size(); ++k) Q.col(static_cast<int>(k)) = rigid[k];
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(Q);
    const Eigen::MatrixXd U = qr.householderQ() * Eigen::MatrixXd::Identity(n, Q.cols());
    const Eigen::MatrixXd P = Eigen::MatrixXd::Identity(n, n) - U * U.transpose();
    S = P * S * P;
    S = (0.5 * (S + S.transpose())).eval();
    out.L += delta * L.L.norm() / S.norm() * S;
    return out;
}

// ---------------------------------------------------------------------------

ReconstructionResult reconstruct_inclusion(const DtnMatrix& observed, const DtnWorkspace& ws,
                                           const std::function<InclusionGeometry(const std::vector<double>&)>& family,
                                           const ReconstructionOptions& opt) {
    const size_t k = opt.lower.size();
    if (k == 0 || opt.upper.size() != k) throw InputError("reconstruction: bounds must be given for every parameter");
    for (size_t c = 0; c < k; ++c)
        if (!(opt.upper[c] > opt.lower[c])) throw InputError("reconstruction: empty parameter interval");
    if (opt.grid < 3 || opt.sweeps < 1 || opt.golden_iterations < 0) throw InputError("reconstruction: bad search options");

    ReconstructionResult res;
    const double inf = std::numeric_limits<double>::infinity();
    auto misfit = [&](const std::vector<double>& th) {
        res.probed.push_back(th);
        double m = inf;
        try {
            const InclusionGeometry d = family(th);
            const Box b = d.bounding_box();
            for (int a = 0; a < 3; ++a)
                if (b.lo[a] <= ws.setup().omega.box.lo[a] || b.hi[a] >= ws.setup().omega.box.hi[a])
                    throw InputError("candidate leaves the domain");
            m = ws.discrepancy(ws.dtn(d), observed).scaled;
        } catch (const Error&) {
            res.skipped.push_back(static_cast<int>(res.probed.size()) - 1);
        }
        res.probed_misfit.push_back(m);
        return m;
    };

    std::vector<double> theta(k);
    for (size_t c = 0; c < k; ++c) theta[c] = 0.5 * (opt.lower[c] + opt.upper[c]);
    std::vector<double> grid_misfits;
    for (int s = 0; s < opt.sweeps; ++s) {
        for (size_t c = 0; c < k; ++c) {
            std::vector<double> xs(opt.grid), ms(opt.grid);
            for (int g = 0; g < opt.grid; ++g) {
                xs[g] = opt.lower[c] + (opt.upper[c] - opt.lower[c]) * g / (opt.grid - 1);
                std::vector<double> th = theta;
                th[c] = xs[g];
                ms[g] = misfit(th);
            }
            if (s == 0 && c == 0) grid_misfits = ms;
            const int best = static_cast<int>(std::min_element(ms.begin(), ms.end()) - ms.begin());
            double a = xs[std::max(best - 1, 0)], b = xs[std::min(best + 1, opt.grid - 1)];
            double bx = xs[best], bm = ms[best];
            const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
            double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
            auto at = [&](double x) {
                std::vector<double> th = theta;
                th[c] = x;
                const double m = misfit(th);
                if (m < bm) bm = m, bx = x;
                return m;
            };
            double f1 = at(x1), f2 = at(x2);
            for (int it = 0; it < opt.golden_iterations; ++it) {
                if (f1 <= f2) {
                    b = x2, x2 = x1, f2 = f1;
                    x1 = b - phi * (b - a);
                    f1 = at(x1);
                } else {
                    a = x1, x1 = x2, f1 = f2;
                    x2 = a + phi * (b - a);
                    f2 = at(x2);
                }
            }
            theta[c] = bx;
        }
    }
    const int best = static_cast<int>(std::min_element(res.probed_misfit.begin(), res.probed_misfit.end()) -
                                      res.probed_misfit.begin());
    res.theta = res.probed[best];
    res.misfit = res.probed_misfit[best];
    if (!std::isfinite(res.misfit)) throw InputError("reconstruction: every candidate failed");
    const double gmin = *std::min_element(grid_misfits.begin(), grid_misfits.end());
    const double level = 2.0 * gmin + 1e-12;
    int within = 0;
    for (double m : grid_misfits) within += m <= level;
    res.flatness = static_cast<double>(within) / grid_misfits.size();
    return res;
}

}  // namespace lamelab
