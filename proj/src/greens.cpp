#include "lamelab/greens.hpp"

#include "lamelab/parallel.hpp"
#include "lamelab/recon_norms.hpp"

#include <chrono>
#include <cmath>
#include <numbers>

namespace lamelab {

namespace {

void kelvin_coefficients(const IsotropicTensor& C, double& a, double& b) {
    const double den = 8.0 * std::numbers::pi * C.mu * (C.lambda + 2.0 * C.mu);
    a = (C.lambda + 3.0 * C.mu) / den;
    b = (C.lambda + C.mu) / den;
}

// (C - C_ref) applied to a displacement gradient.
Mat3 apply_difference(double dl, double dm, const Mat3& G) {
    return dl * G.trace() * Mat3::Identity() + dm * (G + G.transpose());
}

}  // namespace

Mat3 kelvin(const Vec3& x, const Vec3& y, const IsotropicTensor& C) {
    const Vec3 d = x - y;
    const double r = d.norm();
    if (r == 0.0) throw DomainError("fundamental matrix evaluated at coincident points");
    double a, b;
    kelvin_coefficients(C, a, b);
    const double s = b / (r * r * r);
    Mat3 K;
    for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j) K(i, j) = K(j, i) = s * (d[i] * d[j]) + (i == j ? a / r : 0.0);
    return K;
}

std::array<Mat3, 3> kelvin_gradient(const Vec3& x, const Vec3& y, const IsotropicTensor& C) {
    const Vec3 d = x - y;
    const double r = d.norm();
    if (r == 0.0) throw DomainError("fundamental matrix evaluated at coincident points");
    double a, b;
    kelvin_coefficients(C, a, b);
    const double r3 = r * r * r, r5 = r3 * r * r;
    std::array<Mat3, 3> g;
    for (int k = 0; k < 3; ++k) {
        Mat3 M = (-a * d[k] / r3) * Mat3::Identity() - (3.0 * b * d[k] / r5) * d * d.transpose();
        for (int i = 0; i < 3; ++i) {
            M(i, k) += b * d[i] / r3;
            M(k, i) += b * d[i] / r3;
        }
        g[k] = M;
    }
    return g;
}

std::string to_string(GreensVariant v) {
    switch (v) {
    case GreensVariant::VariableBackground: return "variable_background";
    case GreensVariant::Frozen: return "frozen";
    case GreensVariant::BimaterialHalfspace: return "bimaterial_halfspace";
    case GreensVariant::FrozenInclusion: return "frozen_inclusion";
    case GreensVariant::Full: return "full";
    }
    return "full";
}

std::string to_string(GreensBackend b) {
    switch (b) {
    case GreensBackend::ClosedForm: return "closed_form";
    case GreensBackend::TruncatedFem: return "truncated_fem";
    case GreensBackend::KelvinCorrected: return "kelvin_corrected";
    }
    return "kelvin_corrected";
}

GreensBackend parse_backend(const std::string& s) {
    if (s == "closed_form") return GreensBackend::ClosedForm;
    if (s == "truncated_fem") return GreensBackend::TruncatedFem;
    if (s == "kelvin_corrected") return GreensBackend::KelvinCorrected;
    throw ConfigError("unknown Green's backend '" + s + "' (closed_form | truncated_fem | kelvin_corrected)");
}

// ---------------------------------------------------------------------------

GreensProblem GreensProblem::variable_background(const LameField& background) {
    GreensProblem p;
    p.variant = GreensVariant::VariableBackground;
    p.composite = PiecewiseTensor::homogeneous(background);
    return p;
}

GreensProblem GreensProblem::frozen(const IsotropicTensor& c0) {
    GreensProblem p;
    p.variant = GreensVariant::Frozen;
    p.composite = PiecewiseTensor::homogeneous(LameField::constant(c0.lambda, c0.mu));
    return p;
}

GreensProblem GreensProblem::halfspace(const IsotropicTensor& below, const IsotropicTensor& above, const Vec3& point,
                                       const Vec3& normal_into_above) {
    const double n = normal_into_above.norm();
    if (!(n > 0)) throw InputError("half-space normal must be nonzero");
    GreensProblem p;
    p.variant = GreensVariant::BimaterialHalfspace;
    p.plane_point = point;
    p.plane_normal = normal_into_above / n;
    p.composite = PiecewiseTensor::constant(
        below, above, std::make_shared<const InclusionGeometry>(InclusionGeometry::half_space(point, -p.plane_normal)));
    return p;
}

GreensProblem GreensProblem::frozen_inclusion(const IsotropicTensor& c0, const IsotropicTensor& c0_incl,
                                              std::shared_ptr<const InclusionGeometry> region) {
    if (!region) throw InputError("frozen-inclusion variant needs an inclusion");
    GreensProblem p;
    p.variant = GreensVariant::FrozenInclusion;
    p.composite = PiecewiseTensor::constant(c0, c0_incl, std::move(region));
    return p;
}

GreensProblem GreensProblem::full(const LameField& background, const LameField& inclusion,
                                  std::shared_ptr<const InclusionGeometry> region) {
    GreensProblem p;
    p.variant = GreensVariant::Full;
    p.composite.background = background;
    p.composite.inclusion = inclusion;
    p.composite.region = std::move(region);
    return p;
}

// ---------------------------------------------------------------------------

struct GreensEvaluator::LoadSolution {
    IsotropicTensor cref;
    bool zero = false;
    std::array<DisplacementField, 3> field;  // one per load direction (local frame)
};

struct GreensEvaluator::Level {
    double L = 0.0;
    std::shared_ptr<const HexMesh> mesh;
    std::unique_ptr<FemSystem> system;
    std::vector<std::array<double, 16>> coef;  // lambda_q (0..7), mu_q (8..15) per cell
    std::map<std::array<double, 3>, std::unique_ptr<LoadSolution>> cache;
};

GreensEvaluator::GreensEvaluator(GreensProblem problem, GreensOptions options)
    : problem_(std::move(problem)), opt_(std::move(options)) {
    if (opt_.backend == GreensBackend::ClosedForm && !problem_.is_homogeneous_constant())
        throw InputError("closed-form Green's backend requires a homogeneous constant tensor");
    if (opt_.extrapolate && !(opt_.L2 >= 1.5 * opt_.L1)) throw InputError("truncation sizes need L2 >= 1.5 L1");
    if (!(opt_.L1 > 0)) throw InputError("truncation size must be positive");
    if (problem_.variant == GreensVariant::BimaterialHalfspace) {
        R_ = frame_with_e3(problem_.plane_normal);
        origin_ = problem_.plane_point;
        local_composite_ = PiecewiseTensor::constant(
            problem_.composite.background.at(Vec3::Zero()), problem_.composite.inclusion.at(Vec3::Zero()),
            std::make_shared<const InclusionGeometry>(InclusionGeometry::half_space(Vec3::Zero(), -Vec3::UnitZ())));
    } else {
        local_composite_ = problem_.composite;
    }
}

GreensEvaluator::~GreensEvaluator() = default;

Vec3 GreensEvaluator::to_local(const Vec3& x) const { return R_.transpose() * (x - origin_); }

Mat3 GreensEvaluator::rotate_out(const Mat3& A) const { return R_ * A * R_.transpose(); }

IsotropicTensor GreensEvaluator::tensor_at(const Vec3& x) const { return problem_.composite.at(x); }

std::string GreensEvaluator::label() const { return to_string(problem_.variant) + "/" + to_string(opt_.backend); }

void GreensEvaluator::prepare(const std::vector<Vec3>& points) {
    std::lock_guard<std::mutex> lock(mutex_);
    levels_.clear();
    if (opt_.backend == GreensBackend::ClosedForm) return;
    const bool halfspace = problem_.variant == GreensVariant::BimaterialHalfspace;
    const Vec3 center = halfspace ? Vec3::Zero() : to_local(opt_.center);
    const auto& region = local_composite_.region;
    std::vector<double> sides = {opt_.L1};
    if (opt_.extrapolate) sides.push_back(opt_.L2);
    for (size_t li = 0; li < sides.size(); ++li) {
        const double L = sides[li];
        RefinementSpec spec;
        spec.h_max = L / 8.0;
        // Keep the finest lattice spacing identical across the two cubes so
        // that the meshes coincide near the probes.
        spec.max_level = opt_.max_level + static_cast<int>(std::lround(std::log2(L / opt_.L1)));
        if (spec.max_level > 20) throw InputError("octree depth exceeds the supported lattice");
        for (const Vec3& pg : points) {
            const Vec3 p = to_local(pg);
            double delta = opt_.probe_delta;
            if (region) delta = std::min(delta, opt_.probe_fraction * std::fabs(region->signed_distance(p)));
            if (!(delta > 0)) throw ResolutionError("probe point lies on a material interface");
            spec.add_point(p, delta, opt_.kappa);
        }
        if (region && region->kind() != InclusionGeometry::Kind::HalfSpace)
            spec.add_surface(region, opt_.surface_delta, opt_.surface_kappa);
        if (opt_.resolve_box) {
            const Box b = *opt_.resolve_box;
            Box lb;
            lb.lo = to_local(b.lo).cwiseMin(to_local(b.hi));
            lb.hi = to_local(b.lo).cwiseMax(to_local(b.hi));
            spec.add_box(lb, opt_.box_delta, opt_.kappa);
        }
        auto lv = std::make_unique<Level>();
        lv->L = L;
        const Box root{center - Vec3::Constant(L / 2), center + Vec3::Constant(L / 2)};
        lv->mesh = std::make_shared<const HexMesh>(HexMesh::octree(root, spec));
        lv->system = std::make_unique<FemSystem>(lv->mesh, local_composite_, AssemblyOptions{ChiMode::QuadraturePoint, 2});
        lv->coef.resize(lv->mesh->num_cells());
        for (int c = 0; c < lv->mesh->num_cells(); ++c)
            lv->system->cell_coefficients(c, local_composite_, lv->coef[c].data(), lv->coef[c].data() + 8);
        levels_.push_back(std::move(lv));
    }
}

void GreensEvaluator::check_resolution(const Level& lv, const Vec3& p) const {
    const HexMesh& m = *lv.mesh;
    const int c = m.locate(p);
    if (c < 0) throw ResolutionError("point outside the truncation box");
    const double h = m.cell_size(c).maxCoeff();
    if (m.box().depth(p) < 3.0 * h) throw ResolutionError("point within 3 cells of the truncation boundary");
    if (local_composite_.region) {
        const double sd = std::fabs(local_composite_.region->signed_distance(p));
        if (h > 0.5 * sd) throw ResolutionError("mesh too coarse near a material interface for this point");
    }
}

const GreensEvaluator::LoadSolution& GreensEvaluator::load(int level, const Vec3& yl) const {
    Level& lv = *levels_.at(level);
    const std::array<double, 3> key = {yl[0], yl[1], yl[2]};
    {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = lv.cache.find(key);
        if (it != lv.cache.end()) return *it->second;
    }
    auto sol = std::make_unique<LoadSolution>();
    const FemSystem& sys = *lv.system;
    const int ni = sys.num_interior_dofs();
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(ni, 3);
    if (opt_.backend == GreensBackend::KelvinCorrected) {
        sol->cref = local_composite_.at(yl);
        const double lr = sol->cref.lambda, mr = sol->cref.mu;
        std::vector<int> active;
        for (int c = 0; c < lv.mesh->num_cells(); ++c) {
            const auto& k = lv.coef[c];
            for (int q = 0; q < 8; ++q)
                if (k[q] != lr || k[8 + q] != mr) {
                    active.push_back(c);
                    break;
                }
        }
        sol->zero = active.empty();
        if (!sol->zero) {
            for (int j = 0; j < 3; ++j) {
                F.col(j) = sys.stress_load_vector(active, [&](int c, int q, const Vec3& x) -> Mat3 {
                    const double dl = lv.coef[c][q] - lr, dm = lv.coef[c][8 + q] - mr;
                    if (dl == 0.0 && dm == 0.0) return Mat3::Zero();
                    const auto g = kelvin_gradient(x, yl, sol->cref);
                    Mat3 G;
                    for (int k = 0; k < 3; ++k) G.col(k) = g[k].col(j);
                    return -apply_difference(dl, dm, G);
                });
            }
        }
    } else {
        const double h = lv.mesh->local_size(yl);
        const double r = opt_.moll_cells * h;
        if (lv.mesh->box().depth(yl) <= 4.0 * r)
            throw ResolutionError("point load closer than 4 mollifier radii to the truncation boundary");
        if (local_composite_.region && std::fabs(local_composite_.region->signed_distance(yl)) < r)
            throw ResolutionError("point load closer than one mollifier radius to a material interface");
        for (int j = 0; j < 3; ++j) F.col(j) = sys.point_load_vector({yl, unit(j), r});
    }
    if (sol->zero) {
        for (int j = 0; j < 3; ++j)
            sol->field[j] = DisplacementField(lv.mesh, Eigen::VectorXd::Zero(3 * lv.mesh->num_nodes()));
    } else {
        const auto fields = sys.solve_many(F);
        for (int j = 0; j < 3; ++j) sol->field[j] = fields[j];
    }
    std::lock_guard<std::mutex> lock(mutex_);
    auto [it, inserted] = lv.cache.emplace(key, std::move(sol));
    return *it->second;
}

void GreensEvaluator::precompute(const std::vector<Vec3>& ys) const {
    if (opt_.backend == GreensBackend::ClosedForm) return;
    if (levels_.empty()) throw InputError("GreensEvaluator::prepare must be called before evaluation");
    // Factorize once per level before the parallel section.
    for (const auto& lv : levels_) lv->system->solver();
    const size_t nl = levels_.size();
    parallel_for(ys.size() * nl, [&](std::size_t k) { load(static_cast<int>(k % nl), to_local(ys[k / nl])); });
}

Mat3 GreensEvaluator::correction(int level, const Vec3& xl, const Vec3& yl) const {
    const LoadSolution& s = load(level, yl);
    Mat3 v;
    for (int j = 0; j < 3; ++j) v.col(j) = s.zero ? Vec3::Zero() : s.field[j].at(xl);
    return v;
}

Mat3 GreensEvaluator::correction_gradient(int level, const Vec3& xl, const Vec3& yl, const Vec3& l) const {
    const LoadSolution& s = load(level, yl);
    Mat3 G = Mat3::Zero();
    if (s.zero) return G;
    for (int j = 0; j < 3; ++j)
        if (l[j] != 0.0) G += l[j] * s.field[j].gradient(xl);
    return G;
}

GreensValue GreensEvaluator::evaluate_full(const Vec3& x, const Vec3& y) const {
    if (x == y) throw DomainError("fundamental matrix evaluated at coincident points");
    GreensValue out;
    const Vec3 xl = to_local(x), yl = to_local(y);
    if (opt_.backend == GreensBackend::ClosedForm) {
        out.value = out.value_L1 = out.value_L2 = kelvin(x, y, problem_.composite.background.at(y));
        return out;
    }
    if (levels_.empty()) throw InputError("GreensEvaluator::prepare must be called before evaluation");
    Mat3 vals[2];
    Mat3 base = Mat3::Zero();
    for (size_t li = 0; li < levels_.size(); ++li) {
        check_resolution(*levels_[li], xl);
        check_resolution(*levels_[li], yl);
        if (opt_.backend == GreensBackend::KelvinCorrected) {
            vals[li] = correction(static_cast<int>(li), xl, yl);
            if (li == 0) base = kelvin(xl, yl, load(0, yl).cref);
        } else {
            vals[li] = correction(static_cast<int>(li), xl, yl);
        }
    }
    out.value_L1 = rotate_out(base + vals[0]);
    if (levels_.size() == 2) {
        out.value_L2 = rotate_out(base + vals[1]);
        const Mat3 ext = richardson(opt_.L1, Eigen::MatrixXd(vals[0]), opt_.L2, Eigen::MatrixXd(vals[1]));
        out.value = rotate_out(base + ext);
        out.extrapolated = true;
        out.error_estimate = (out.value_L2 - out.value).norm();
    } else {
        out.value = out.value_L2 = out.value_L1;
    }
    return out;
}

Mat3 GreensEvaluator::gradient(const Vec3& x, const Vec3& y, const Vec3& l) const {
    if (x == y) throw DomainError("fundamental matrix evaluated at coincident points");
    const Vec3 xl = to_local(x), yl = to_local(y), ll = R_.transpose() * l;
    Mat3 base = Mat3::Zero();
    auto kelvin_part = [&](const IsotropicTensor& C) {
        const auto g = kelvin_gradient(xl, yl, C);
        Mat3 G;
        for (int k = 0; k < 3; ++k) G.col(k) = g[k] * ll;
        return G;
    };
    if (opt_.backend == GreensBackend::ClosedForm) return rotate_out(kelvin_part(problem_.composite.background.at(y)));
    if (levels_.empty()) throw InputError("GreensEvaluator::prepare must be called before evaluation");
    Mat3 vals[2];
    for (size_t li = 0; li < levels_.size(); ++li) {
        check_resolution(*levels_[li], yl);
        vals[li] = correction_gradient(static_cast<int>(li), xl, yl, ll);
    }
    if (opt_.backend == GreensBackend::KelvinCorrected) base = kelvin_part(load(0, yl).cref);
    if (levels_.size() == 2)
        return rotate_out(base + Mat3(richardson(opt_.L1, Eigen::MatrixXd(vals[0]), opt_.L2, Eigen::MatrixXd(vals[1]))));
    return rotate_out(base + vals[0]);
}

GreensStats GreensEvaluator::stats() const {
    GreensStats s;
    std::lock_guard<std::mutex> lock(mutex_);
    for (const auto& lv : levels_) {
        ++s.meshes;
        s.max_dofs = std::max(s.max_dofs, lv->system->num_interior_dofs());
        s.factor_seconds += lv->system->solver().factor_seconds();
        s.loads += static_cast<int>(lv->cache.size());
    }
    return s;
}

// ---------------------------------------------------------------------------

Mat3 bimaterial_halfspace(const Vec3& x, const Vec3& y, const IsotropicTensor& below, const IsotropicTensor& above,
                          const GreensOptions& options) {
    GreensOptions opt = options;
    if (opt.backend == GreensBackend::ClosedForm) opt.backend = GreensBackend::KelvinCorrected;
    GreensEvaluator ev(GreensProblem::halfspace(below, above, Vec3::Zero(), Vec3::UnitZ()), opt);
    ev.prepare({x, y});
    return ev.evaluate(x, y);
}

RepresentationResult integral_representation_residual(const GreensEvaluator& ev1, const GreensEvaluator& ev2,
                                                      const Vec3& y, const Vec3& w, const Vec3& l, const Vec3& m,
                                                      const Box& omega, int n, int subcells) {
    for (const GreensEvaluator* ev : {&ev1, &ev2}) {
        const auto& reg = ev->problem().composite.region;
        if (reg && (reg->contains(y) || reg->contains(w)))
            throw DomainError("representation probes must lie outside the inclusions");
    }
    if (n < 1 || subcells < 1) throw InputError("quadrature resolution must be positive");
    RepresentationResult res;
    res.lhs = l.dot(ev2.evaluate(y, w) * m) - m.dot(ev1.evaluate(w, y) * l);

    const double g[2] = {0.5 - 0.5 / std::sqrt(3.0), 0.5 + 0.5 / std::sqrt(3.0)};
    const Vec3 h = omega.extent() / n;
    const int k = n * subcells;
    const Vec3 hs = h / subcells;
    const double wq = hs.prod() / 8.0;
    const int nslab = k;  // parallel over z-slabs of sub-cells, summed in order
    std::vector<double> partial(nslab, 0.0);
    std::vector<int> count(nslab, 0);
    parallel_for(nslab, [&](std::size_t kz) {
        double acc = 0.0;
        int cnt = 0;
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx)
                for (int q = 0; q < 8; ++q) {
                    const Vec3 x = omega.lo + Vec3((kx + g[q & 1]) * hs[0], (ky + g[(q >> 1) & 1]) * hs[1],
                                                   (static_cast<double>(kz) + g[(q >> 2) & 1]) * hs[2]);
                    const IsotropicTensor c1 = ev1.tensor_at(x), c2 = ev2.tensor_at(x);
                    const double dl = c1.lambda - c2.lambda, dm = c1.mu - c2.mu;
                    if (dl == 0.0 && dm == 0.0) continue;
                    const Mat3 G1 = ev1.gradient(x, y, l);
                    const Mat3 G2 = ev2.gradient(x, w, m);
                    acc += wq * (apply_difference(dl, dm, G1).array() * G2.array()).sum();
                    ++cnt;
                }
        partial[kz] = acc;
        count[kz] = cnt;
    });
    for (int i = 0; i < nslab; ++i) {
        res.rhs += partial[i];
        res.quadrature_points += count[i];
    }
    // With no point where the tensors differ the identity is 0 = 0 and the
    // residual is reported in absolute terms.
    const double err = std::fabs(res.lhs - res.rhs);
    res.residual = res.quadrature_points > 0 && res.lhs != 0.0 ? err / std::fabs(res.lhs) : err;
    return res;
}

double tail_flux(const GreensEvaluator& ev1, const GreensEvaluator& ev2, const Vec3& y, const Vec3& w, const Vec3& l,
                 const Vec3& m, const Vec3& c, double R, int samples) {
    if (!(R > 0)) throw InputError("tail radius must be positive");
    const SurfaceSample s = sample_surface(InclusionGeometry::ball(c, R), samples);
    const double wt = 4.0 * std::numbers::pi * R * R / samples;
    std::vector<double> vals(samples, 0.0);
    parallel_for(samples, [&](std::size_t i) {
        const Vec3& x = s.points[i];
        const IsotropicTensor C1 = ev1.tensor_at(x);
        const Mat3 sigma = C1.apply(ev1.gradient(x, y, l));
        vals[i] = -(sigma * s.normals[i]).dot(ev2.evaluate(x, w) * m);
    });
    double acc = 0.0;
    for (double v : vals) acc += v;
    return wt * acc;
}

}  // namespace lamelab
