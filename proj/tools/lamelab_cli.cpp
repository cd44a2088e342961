#include "lamelab/bounds.hpp"
#include "lamelab/config.hpp"
#include "lamelab/dtn.hpp"
#include "lamelab/fem.hpp"
#include "lamelab/greens.hpp"
#include "lamelab/parallel.hpp"
#include "lamelab/recon_norms.hpp"
#include "lamelab/stability.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include <unistd.h>

using namespace lamelab;
using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kInvariant = 1, kConfig = 2, kSolver = 3, kInsufficient = 4 };

struct Run {
    std::string command;
    fs::path out;
    RunConfig cfg;
    json results = json::object();
    json timings = json::object();
    std::vector<std::string> files;
    std::string status = "ok";

    std::ofstream open(const std::string& name) {
        files.push_back(name);
        std::ofstream os(out / name, std::ios::binary);
        if (!os) throw InputError("cannot write '" + (out / name).string() + "'");
        return os;
    }
};

class Stopwatch {
public:
    double seconds() const { return std::chrono::duration<double>(Clock::now() - t0_).count(); }

private:
    using Clock = std::chrono::steady_clock;
    Clock::time_point t0_ = Clock::now();
};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::function<Vec3(const Vec3&)> boundary_data(const std::string& kind, const Vec3& c) {
    if (kind == "zero") return [](const Vec3&) { return Vec3::Zero().eval(); };
    if (kind == "translation") return [](const Vec3&) { return Vec3(0.1, -0.2, 0.05); };
    if (kind == "rotation") {
        const Vec3 w(0.1, 0.2, -0.1);
        return [w, c](const Vec3& x) { return Vec3(w.cross(x - c)); };
    }
    Mat3 E;
    E << 0.01, 0.002, 0.0, 0.002, -0.005, 0.001, 0.0, 0.001, 0.003;
    return [E, c](const Vec3& x) { return Vec3(E * (x - c)); };
}

json solver_stats(const FemSystem& sys) {
    const SpdSolver& s = sys.solver();
    return {{"method", s.method()},
            {"unknowns", s.size()},
            {"assembly_seconds", sys.assembly_seconds()},
            {"factor_seconds", s.factor_seconds()},
            {"check_residual", s.check_residual()}};
}

double spectral_norm(const Eigen::MatrixXd& A) {
    return std::fabs(lanczos_extreme([&](const Eigen::VectorXd& x) { return Eigen::VectorXd(A * x); }, A.rows()).value);
}

double kernel_defect(const DtnMatrix& L, const BoundarySpace& space) {
    const double n2 = spectral_norm(L.L);
    double worst = 0.0;
    for (const auto& r : space.rigid_motions()) worst = std::max(worst, (L.L * r).norm() / (n2 * r.norm()));
    return worst;
}

std::shared_ptr<const InclusionGeometry> share(const InclusionGeometry& g) {
    return std::make_shared<const InclusionGeometry>(g);
}

int cmd_forward(Run& run) {
    const RunConfig& c = run.cfg;
    Stopwatch sw;
    auto mesh = std::make_shared<const HexMesh>(HexMesh::structured(c.omega.box, c.setup.n));
    FemSystem sys(mesh, c.setup.composite(share(c.d1())), c.setup.assembly);
    const Vec3 center = 0.5 * (c.omega.box.lo + c.omega.box.hi);
    const DisplacementField u = sys.solve_dirichlet(boundary_data(c.forward.data, center));
    const double energy = sys.energy_inner_product(u, u);
    const double seconds = sw.seconds();
    if (c.forward.export_field) {
        auto os = run.open("field.csv");
        os << "node,x,y,z,ux,uy,uz\n";
        for (int i = 0; i < mesh->num_nodes(); ++i) {
            const Vec3& x = mesh->nodes()[i];
            const Vec3 v = u.node_value(i);
            os << i << ',' << num(x[0]) << ',' << num(x[1]) << ',' << num(x[2]) << ',' << num(v[0]) << ','
               << num(v[1]) << ',' << num(v[2]) << '\n';
        }
    }
    const bool rigid = c.forward.data != "linear";
    run.results["forward"] = {{"data", c.forward.data},
                              {"n", c.setup.n},
                              {"energy", energy},
                              {"max_displacement", u.values().cwiseAbs().maxCoeff()},
                              {"solver", solver_stats(sys)},
                              {"budget_exceeded", seconds > 60.0}};
    run.timings["forward"] = seconds;
    if (seconds > 60.0) std::cerr << "warning: forward solve took " << seconds << " s (budget 60 s)\n";
    if (rigid && !(energy < 1e-10)) {
        run.status = "rigid data produced energy " + num(energy);
        return kInvariant;
    }
    return kOk;
}

int cmd_dtn(Run& run) {
    const RunConfig& c = run.cfg;
    Stopwatch sw;
    DtnWorkspace ws(c.setup);
    const DtnMatrix L1 = ws.dtn(c.d1());
    const DtnMatrix L2 = ws.dtn(c.d2());
    const NormValue eps = ws.discrepancy(L1, L2);
    json mats = json::array();
    int code = kOk;
    for (const DtnMatrix* L : {&L1, &L2}) {
        const double asym = L->asymmetry(), kern = kernel_defect(*L, ws.space());
        mats.push_back({{"rows", L->L.rows()}, {"asymmetry", asym}, {"kernel_defect", kern}, {"tensor_id", L->tensor_id}});
        if (!(asym <= 1e-10 && kern <= 1e-8)) code = kInvariant;
    }
    if (c.dtn_export) {
        for (int k = 0; k < 2; ++k) {
            const std::string name = "dtn_D" + std::to_string(k + 1) + ".bin";
            (k ? L2 : L1).save((run.out / name).string());
            run.files.push_back(name);
        }
    }
    run.results["dtn"] = {{"n", c.setup.n},
                          {"mesh_id", L1.mesh_id},
                          {"boundary_dofs", ws.space().num_dofs()},
                          {"matrices", mats},
                          {"epsilon_raw", eps.raw},
                          {"epsilon_scaled", eps.scaled},
                          {"lanczos_iterations", eps.iterations}};
    run.timings["dtn"] = sw.seconds();
    if (code != kOk) run.status = "DtN symmetry or rigid kernel out of tolerance";
    return code;
}

GreensProblem variant_problem(const RunConfig& c, const std::string& name) {
    if (name == "frozen") return GreensProblem::frozen(freeze_at(c.materials.background, c.greens.center));
    if (name == "variable_background") return GreensProblem::variable_background(c.materials.background);
    return GreensProblem::full(c.materials.background, c.materials.inclusion,
                               share(name == "full1" ? c.d1() : c.d2()));
}

int cmd_greens(Run& run) {
    const RunConfig& c = run.cfg;
    Stopwatch sw;
    std::vector<Vec3> pts;
    for (const auto& [x, y] : c.greens_probes.pairs) pts.push_back(x), pts.push_back(y);
    auto os = run.open("probes.csv");
    os << "variant,x1,x2,x3,y1,y2,y3";
    for (int i = 1; i <= 3; ++i)
        for (int j = 1; j <= 3; ++j) os << ",g" << i << j;
    os << ",error_estimate,extrapolated,symmetry_defect\n";
    json variants = json::array();
    for (const auto& name : c.greens_probes.variants) {
        GreensEvaluator ev(variant_problem(c, name), c.greens);
        ev.prepare(pts);
        std::vector<Vec3> ys;
        for (const auto& [x, y] : c.greens_probes.pairs) ys.push_back(y), ys.push_back(x);
        ev.precompute(ys);
        double worst_sym = 0.0;
        for (const auto& [x, y] : c.greens_probes.pairs) {
            const GreensValue g = ev.evaluate_full(x, y);
            const Mat3 gt = ev.evaluate(y, x).transpose();
            const double sym = (g.value - gt).norm() / std::max(g.value.norm(), 1e-300);
            worst_sym = std::max(worst_sym, sym);
            os << name;
            for (int k = 0; k < 3; ++k) os << ',' << num(x[k]);
            for (int k = 0; k < 3; ++k) os << ',' << num(y[k]);
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) os << ',' << num(g.value(i, j));
            os << ',' << num(g.error_estimate) << ',' << (g.extrapolated ? 1 : 0) << ',' << num(sym) << '\n';
        }
        const GreensStats st = ev.stats();
        variants.push_back({{"variant", name},
                            {"label", ev.label()},
                            {"worst_symmetry_defect", worst_sym},
                            {"meshes", st.meshes},
                            {"max_dofs", st.max_dofs},
                            {"factor_seconds", st.factor_seconds},
                            {"loads", st.loads}});
    }
    run.results["greens"] = {{"backend", to_string(c.greens.backend)}, {"pairs", c.greens_probes.pairs.size()},
                             {"variants", variants}};
    run.timings["greens"] = sw.seconds();
    return kOk;
}

json fit_to_json(const std::optional<FitResult>& f) {
    if (!f) return nullptr;
    return {{"slope", f->slope}, {"intercept", f->intercept}, {"r2", f->r2}, {"n_used", f->n_used}};
}

json lower_bound_json(const LowerBoundReport& rep) {
    json fits = json::array();
    for (const auto& f : rep.fits)
        fits.push_back({{"i", f.i},
                        {"lambda_w", f.lambda_w},
                        {"resolved", f.resolved},
                        {"slope", fit_to_json(f.slope)},
                        {"hg_min", f.hg_min},
                        {"hg_max", f.hg_max},
                        {"slope_ok", f.slope_ok},
                        {"plateau", f.plateau}});
    return {{"success", rep.success}, {"no_signal", rep.no_signal}, {"chosen_lambda_w", rep.chosen_lambda_w},
            {"fits", fits}};
}

json term_json(const TermReport& t) {
    auto tf = [](const TermFit& f) { return json{{"name", f.name}, {"max_abs", f.max_abs}, {"fit", fit_to_json(f.fit)}}; };
    return {{"triangle_all", t.triangle_all},
            {"worst_triangle", t.worst_triangle},
            {"term2", tf(t.term2)},
            {"term2_constant", t.term2_constant},
            {"term2_flat", t.term2_flat},
            {"term3_scaled", tf(t.term3_scaled)},
            {"term4_scaled", tf(t.term4_scaled)},
            {"term5_scaled", tf(t.term5_scaled)},
            {"term3_max", t.term3_max},
            {"term5_max", t.term5_max},
            {"term1_dominates", t.term1_dominates},
            {"conclusion", t.conclusion}};
}

struct BoundsOutcome {
    std::vector<SweepRow> rows;
    LowerBoundReport lower;
    json terms = json::array();
    double dist = 0.0;
};

BoundsOutcome run_bounds(const BoundsConfig& cfg, bool terms) {
    BoundsOutcome out;
    BoundsLab lab(cfg);
    lab.prepare(terms);
    out.rows = lab.sweep();
    out.dist = lab.selection().dist_P_D2;
    out.lower = analyze_lower_bound(out.rows, cfg);
    if (terms) {
        for (size_t d = 0; d < cfg.directions.size(); ++d) {
            const int i = cfg.directions[d];
            const double lw = out.lower.chosen_lambda_w[d] > 0 ? out.lower.chosen_lambda_w[d] : cfg.lambda_ws.front();
            try {
                json t = term_json(analyze_terms(out.rows, cfg, out.dist, i, lw));
                t["i"] = i;
                t["lambda_w"] = lw;
                out.terms.push_back(t);
            } catch (const FitError& e) {
                out.terms.push_back({{"i", i}, {"lambda_w", lw}, {"error", e.what()}});
            }
        }
    }
    return out;
}

int cmd_bounds(Run& run) {
    const RunConfig& c = run.cfg;
    Stopwatch sw;
    const BoundsOutcome b = run_bounds(c.bounds, c.bounds_terms);
    {
        auto os = run.open("sweep.csv");
        write_sweep_csv(os, b.rows);
    }
    json fit = {{"dist_P_D2", b.dist}, {"lower_bound", lower_bound_json(b.lower)}};
    if (c.bounds_terms) fit["terms"] = b.terms;
    {
        auto os = run.open("fit.json");
        os << fit.dump(2) << '\n';
    }
    run.results["bounds"] = {{"rows", b.rows.size()}, {"success", b.lower.success}, {"no_signal", b.lower.no_signal}};
    run.timings["bounds"] = sw.seconds();
    if (!b.lower.success) run.status = b.lower.no_signal ? "no signal" : "lower bound not confirmed";
    return kOk;
}

int cmd_stability(Run& run) {
    const RunConfig& c = run.cfg;
    Stopwatch sw;
    DtnWorkspace ws(c.setup);
    std::vector<StabilityRecord> records = run_family(c.stability.family, ws, c.stability.hausdorff_samples);
    if (!c.stability.include_reference)
        std::erase_if(records, [](const StabilityRecord& r) { return r.flags == "reference"; });
    {
        auto os = run.open("stability.csv");
        write_stability_csv(os, records);
    }
    const FamilyChecks chk = check_family(records);
    run.results["stability"] = {{"records", records.size()},
                                {"d_increasing", chk.d_increasing},
                                {"eps_increasing", chk.eps_increasing}};
    run.timings["stability"] = sw.seconds();
    try {
        const StabilityFit fit = fit_log_stability(records, c.omega.rho0);
        auto os = run.open("fit.json");
        os << fit_json(fit) << '\n';
        run.results["stability"]["eta_fit"] = fit.eta_fit;
        run.results["stability"]["r2"] = fit.r2;
    } catch (const FitError& e) {
        run.status = std::string("fit error: ") + e.what();
        return kInsufficient;
    }
    return kOk;
}

struct Check {
    std::string name;
    bool pass = false;
    std::string measured;
};

// Transpose symmetry of the inclusion problem at probes around D1.
Check greens_symmetry_check(const RunConfig& c) {
    const Box b = c.d1().bounding_box();
    const Vec3 mid = b.center(), half = 0.5 * b.extent();
    std::vector<Vec3> pts;
    for (int a = 0; a < 3; ++a)
        for (double s : {-1.0, 1.0}) pts.push_back(mid + s * (half[a] + 0.1) * unit(a));
    GreensEvaluator ev(GreensProblem::full(c.materials.background, c.materials.inclusion, share(c.d1())), c.greens);
    ev.prepare(pts);
    ev.precompute(pts);
    double worst = 0.0;
    for (size_t i = 0; i < pts.size(); ++i)
        for (size_t j = i + 1; j < pts.size(); ++j) {
            const Mat3 a = ev.evaluate(pts[i], pts[j]);
            worst = std::max(worst, (a - ev.evaluate(pts[j], pts[i]).transpose()).norm() / a.norm());
        }
    return {"greens_symmetry", worst < 0.05, "worst relative asymmetry " + num(worst)};
}

// |G| r along a ray leaving D1 downwards over r in [0.2, 2] rho0.
Check greens_decay_check(const RunConfig& c) {
    const Box b = c.d1().bounding_box();
    const Vec3 y(b.center()[0], b.center()[1], b.lo[2] - 0.1);
    std::vector<double> rs;
    std::vector<Vec3> ray = {y};
    for (int k = 0; k < 6; ++k) {
        rs.push_back(0.2 * c.omega.rho0 * std::pow(10.0, k / 5.0));
        ray.push_back(y - rs.back() * Vec3::UnitZ());
    }
    GreensOptions o = c.greens;
    o.center = y - c.omega.rho0 * Vec3::UnitZ();
    GreensEvaluator ev(GreensProblem::full(c.materials.background, c.materials.inclusion, share(c.d1())), o);
    ev.prepare(ray);
    double lo = 1e300, hi = 0.0;
    for (size_t k = 0; k < rs.size(); ++k) {
        const double p = ev.evaluate(ray[k + 1], y).norm() * rs[k];
        lo = std::min(lo, p), hi = std::max(hi, p);
    }
    return {"greens_decay", hi / lo < 3.0, "|G| r spread " + num(hi / lo) + " over r in [0.2, 2] rho0"};
}

// Integral representation of Gamma^{D2} - Gamma^{D1} at the first probe pair.
Check representation_check(const RunConfig& c) {
    if (c.greens_probes.pairs.empty()) return {"representation_residual", true, "skipped: no probe pairs"};
    const auto [y, w] = c.greens_probes.pairs.front();
    GreensOptions o = c.greens;
    if (!o.resolve_box) {
        const Box b1 = c.d1().bounding_box(), b2 = c.d2().bounding_box();
        Box rb;
        rb.lo = (b1.lo.cwiseMin(b2.lo).array() - 0.05).matrix().cwiseMax(c.omega.box.lo);
        rb.hi = (b1.hi.cwiseMax(b2.hi).array() + 0.05).matrix().cwiseMin(c.omega.box.hi);
        o.resolve_box = rb;
    }
    const LameField& bg = c.materials.background;
    const LameField& in = c.materials.inclusion;
    GreensEvaluator e1(GreensProblem::full(bg, in, share(c.d1())), o), e2(GreensProblem::full(bg, in, share(c.d2())), o);
    for (auto* e : {&e1, &e2}) e->prepare({y, w}), e->precompute({y, w});
    const RepresentationResult r = integral_representation_residual(e1, e2, y, w, unit(0), unit(0), c.omega.box, c.setup.n);
    return {"representation_residual", r.residual < 0.1,
            "residual " + num(r.residual) + " at n = " + std::to_string(c.setup.n) + " (lhs " + num(r.lhs) + ")"};
}

int cmd_verify(Run& run) {
    const RunConfig& c = run.cfg;
    Stopwatch sw;
    std::vector<Check> checks;
    auto add = [&](const std::string& name, bool pass, const std::string& measured) {
        checks.push_back({name, pass, measured});
        std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << measured << std::endl;
    };

    const Vec3 x(0.1, 0.2, 0.3), y(0.7, 0.4, 0.9);
    const IsotropicTensor c0 = freeze_at(c.materials.background, c.greens.center);
    const double ksym = (kelvin(x, y, c0) - kelvin(y, x, c0).transpose()).norm();
    add("kelvin_symmetry", ksym == 0.0, "defect " + num(ksym));
    {
        double worst = 0.0, first = 0.0;
        for (double r : {0.2, 0.5, 1.0, 2.0}) {
            const double p = kelvin(x + r * Vec3(1, 2, 2) / 3.0, x, c0).norm() * r;
            if (first == 0.0) first = p;
            worst = std::max(worst, std::fabs(p / first - 1.0));
        }
        add("kelvin_decay", worst < 1e-12, "|G| r spread " + num(worst));
    }

    ForwardSetup setup = c.setup;
    setup.n = c.verify.n;
    DtnWorkspace ws(setup);
    const auto d1 = share(c.d1()), d2 = share(c.d2());
    FemSystem s1(ws.mesh(), setup.composite(d1), setup.assembly), s2(ws.mesh(), setup.composite(d2), setup.assembly);
    const DtnMatrix L1 = build_dtn(s1, ws.space()), L2 = build_dtn(s2, ws.space());
    const double asym = std::max(L1.asymmetry(), L2.asymmetry());
    add("dtn_symmetry", asym <= 1e-10, "relative asymmetry " + num(asym));
    const double kern = std::max(kernel_defect(L1, ws.space()), kernel_defect(L2, ws.space()));
    add("dtn_rigid_kernel", kern <= 1e-8, "relative defect " + num(kern));

    std::mt19937_64 rng(c.seed);
    std::normal_distribution<double> nd;
    double worst_ales = 0.0;
    for (int k = 0; k < c.verify.data_pairs; ++k) {
        Eigen::VectorXd f1(ws.space().num_dofs()), f2(ws.space().num_dofs());
        for (int i = 0; i < f1.size(); ++i) f1[i] = nd(rng);
        for (int i = 0; i < f2.size(); ++i) f2[i] = nd(rng);
        worst_ales = std::max(worst_ales, alessandrini_residual(s1, s2, L1, L2, f1, f2).residual);
    }
    add("alessandrini_residual", worst_ales < 1e-9, "worst relative residual " + num(worst_ales));

    const double cov = rho0_covariance(setup, c.d1(), c.d2(), 2.0);
    add("rho0_covariance", cov <= 0.02, "relative change " + num(cov) + " at scale 2");

    if (c.verify.greens) {
        for (const Check& ch : {greens_symmetry_check(c), greens_decay_check(c), representation_check(c)})
            add(ch.name, ch.pass, ch.measured);
    }

    if (c.verify.bounds) {
        const BoundsOutcome b = run_bounds(c.bounds, false);
        const bool null_preset = c.materials.eta0 == 0.0;
        if (b.lower.no_signal) {
            add("lower_bound_plateau", null_preset,
                null_preset ? "no signal (expected)" : "no signal with eta0 = " + num(c.materials.eta0));
        } else if (null_preset) {
            add("lower_bound_plateau", false, "signal present under the null preset");
        } else {
            std::ostringstream m;
            for (const auto& f : b.lower.fits)
                if (f.slope)
                    m << "lw " << num(f.lambda_w) << " slope " << num(f.slope->slope) << " hg ["
                      << num(f.hg_min) << ", " << num(f.hg_max) << "]; ";
            bool any_plateau = false, any_slope = false;
            for (const auto& f : b.lower.fits) any_plateau |= f.plateau, any_slope |= f.slope_ok;
            add("lower_bound_plateau", any_plateau, m.str());
            add("lower_bound_slope", any_slope && b.lower.success, m.str());
        }
    }

    json list = json::array();
    std::string first_failure;
    for (const auto& ch : checks) {
        list.push_back({{"name", ch.name}, {"pass", ch.pass}, {"measured", ch.measured}});
        if (!ch.pass && first_failure.empty()) first_failure = ch.name;
    }
    run.results["verify"] = {{"checks", list}};
    run.timings["verify"] = sw.seconds();
    if (!first_failure.empty()) {
        run.status = "first failing check: " + first_failure;
        std::cout << "verify failed: " << first_failure << std::endl;
        return kInvariant;
    }
    std::cout << "verify passed (" << checks.size() << " checks)" << std::endl;
    return kOk;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InputError*>(&e) ||
        dynamic_cast<const DomainError*>(&e))
        return kConfig;
    if (dynamic_cast<const FitError*>(&e)) return kInsufficient;
    if (dynamic_cast<const InvariantError*>(&e)) return kInvariant;
    return kSolver;
}

void write_manifest(Run& run, const std::optional<json>& config, int code, double wall) {
    json m;
    m["tool"] = "lamelab";
    m["version"] = kVersion;
    m["command"] = run.command;
    m["status"] = run.status;
    m["exit_code"] = code;
    if (config) {
        m["config"] = *config;
        m["config_sha256"] = sha256_hex(canonical_dump(nlohmann::json(*config)));
    } else {
        m["config"] = nullptr;
    }
    m["threads"] = threads();
    m["wall_seconds"] = wall;
    m["timings"] = run.timings;
    m["results"] = run.results;
    json inv = json::array();
    for (const auto& f : run.files) {
        const fs::path p = run.out / f;
        if (fs::exists(p)) inv.push_back({{"name", f}, {"bytes", fs::file_size(p)}, {"sha256", sha256_file(p.string())}});
    }
    m["files"] = inv;
    std::ofstream os(run.out / "manifest.json");
    os << m.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    // OpenBLAS picks its kernel when the library is loaded; the autodetected
    // kernel on this class of machine breaks the supernodal factorization.
    if (!std::getenv("OPENBLAS_CORETYPE")) {
        setenv("OPENBLAS_CORETYPE", "Haswell", 1);
        execv("/proc/self/exe", argv);
    }
    CLI::App app{"Elastic inclusion stability laboratory"};
    app.require_subcommand(1);
    app.fallthrough();
    std::optional<std::string> config_path;
    std::vector<std::string> overrides;
    int nthreads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    std::string out_dir = ".";
    std::optional<uint64_t> seed;
    app.add_option("--config", config_path, "JSON configuration file");
    app.add_option("--set", overrides, "Override one key, e.g. --set mesh.n=12 (repeatable)");
    app.add_option("--threads", nthreads, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--out", out_dir, "Output directory");
    app.add_option("--seed", seed, "Random seed");
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"forward", "Solve one forward problem and export the field"},
        {"dtn", "Build the DtN matrices of D1 and D2 and their discrepancy"},
        {"greens", "Evaluate fundamental matrices at probe pairs"},
        {"bounds", "Sweep g(h) and decompose it into five terms"},
        {"stability", "Run a stability family and fit the logarithmic law"},
        {"verify", "Run the invariant checks"},
    };
    for (const auto& [name, help] : commands) app.add_subcommand(name, help);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }

    Run run;
    run.command = app.get_subcommands().front()->get_name();
    run.out = out_dir;
    std::error_code ec;
    fs::create_directories(run.out, ec);
    if (ec) {
        std::cerr << "error: cannot create output directory '" << out_dir << "': " << ec.message() << '\n';
        return kConfig;
    }
    set_threads(nthreads);

    Stopwatch wall;
    std::optional<json> resolved;
    int code = kOk;
    try {
        run.cfg = load_config(config_path, overrides, seed);
        resolved = json(run.cfg.doc);
        if (run.command == "forward") code = cmd_forward(run);
        else if (run.command == "dtn") code = cmd_dtn(run);
        else if (run.command == "greens") code = cmd_greens(run);
        else if (run.command == "bounds") code = cmd_bounds(run);
        else if (run.command == "stability") code = cmd_stability(run);
        else code = cmd_verify(run);
    } catch (const std::exception& e) {
        code = exit_code_for(e);
        run.status = std::string("error: ") + e.what();
        std::cerr << "error: " << e.what() << '\n';
    }
    try {
        write_manifest(run, resolved, code, wall.seconds());
    } catch (const std::exception& e) {
        std::cerr << "error: cannot write manifest: " << e.what() << '\n';
        if (code == kOk) code = kSolver;
    }
    if (code == kOk && run.status != "ok") std::cerr << "note: " << run.status << '\n';
    return code;
}
