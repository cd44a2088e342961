#include "lamelab/fem.hpp"

#include "lamelab/parallel.hpp"

#include <Eigen/CholmodSupport>

#include <chrono>
#include <climits>
#include <cmath>
#include <map>
#include <random>

namespace lamelab {

ChiMode parse_chi_mode(const std::string& s) {
    if (s == "centroid") return ChiMode::Centroid;
    if (s == "quadrature_point") return ChiMode::QuadraturePoint;
    if (s == "volume_fraction") return ChiMode::VolumeFraction;
    throw ConfigError("unknown chi mode '" + s + "' (centroid | quadrature_point | volume_fraction)");
}

std::string to_string(ChiMode m) {
    switch (m) {
    case ChiMode::Centroid: return "centroid";
    case ChiMode::QuadraturePoint: return "quadrature_point";
    case ChiMode::VolumeFraction: return "volume_fraction";
    }
    return "centroid";
}

// ---------------------------------------------------------------------------

struct SpdSolver::Impl {
    std::unique_ptr<Eigen::CholmodSupernodalLLT<SpMat>> super;
    std::unique_ptr<Eigen::CholmodSimplicialLLT<SpMat>> simp;
};

SpdSolver::SpdSolver() : impl_(std::make_unique<Impl>()) {}
SpdSolver::~SpdSolver() = default;

namespace {

double backward_error(const SpMat& A, const Eigen::MatrixXd& X, const Eigen::MatrixXd& B) {
    const double r = (A * X - B).norm();
    return r / (A.norm() * X.norm() + B.norm());
}

}  // namespace

void SpdSolver::compute(const SpMat& A) {
    const auto t0 = std::chrono::steady_clock::now();
    n_ = static_cast<int>(A.rows());
    impl_->super.reset();
    impl_->simp.reset();
    if (n_ == 0) {
        method_ = "empty";
        return;
    }
    std::mt19937_64 rng(12345);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    Eigen::MatrixXd B(n_, 4);
    for (int j = 0; j < 4; ++j)
        for (int i = 0; i < n_; ++i) B(i, j) = U(rng);

    auto super = std::make_unique<Eigen::CholmodSupernodalLLT<SpMat>>();
    super->compute(A);
    if (super->info() == Eigen::Success) {
        const Eigen::MatrixXd X = super->solve(B);
        const double err = backward_error(A, X, B);
        if (std::isfinite(err) && err < 1e-10) {
            impl_->super = std::move(super);
            method_ = "cholmod-supernodal";
            check_residual_ = err;
        }
    }
    if (!impl_->super) {
        auto simp = std::make_unique<Eigen::CholmodSimplicialLLT<SpMat>>();
        simp->compute(A);
        if (simp->info() != Eigen::Success)
            throw SolverError("sparse Cholesky failed: matrix not positive definite (check material/mesh)");
        const Eigen::MatrixXd X = simp->solve(B);
        check_residual_ = backward_error(A, X, B);
        if (!(check_residual_ < 1e-10)) throw SolverError("sparse Cholesky residual check failed");
        impl_->simp = std::move(simp);
        method_ = "cholmod-simplicial";
    }
    factor_seconds_ = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Eigen::MatrixXd SpdSolver::solve(const Eigen::MatrixXd& B) const {
    if (B.rows() != n_) throw InputError("solve: right-hand side has wrong size");
    if (n_ == 0 || B.cols() == 0) return Eigen::MatrixXd::Zero(B.rows(), B.cols());
    std::lock_guard<std::mutex> lock(mutex_);  // CHOLMOD's common workspace is not reentrant
    Eigen::MatrixXd X = impl_->super ? Eigen::MatrixXd(impl_->super->solve(B)) : Eigen::MatrixXd(impl_->simp->solve(B));
    if (!X.allFinite()) throw SolverError("sparse solve produced non-finite values");
    return X;
}

// ---------------------------------------------------------------------------

DisplacementField::DisplacementField(std::shared_ptr<const HexMesh> mesh, Eigen::VectorXd nodal)
    : mesh_(std::move(mesh)), u_(std::move(nodal)) {
    if (u_.size() != 3 * mesh_->num_nodes()) throw InputError("displacement vector does not match mesh");
}

Vec3 DisplacementField::at(const Vec3& x) const {
    const int c = mesh_->locate(x);
    if (c < 0) throw DomainError("field evaluation outside the mesh box");
    const Vec3 xi = ((x - mesh_->cell_lo(c)).array() / mesh_->cell_size(c).array()).matrix();
    double N[8];
    HexMesh::shape(xi.cwiseMax(0.0).cwiseMin(1.0), N);
    Vec3 v = Vec3::Zero();
    const auto& cell = mesh_->cell(c);
    for (int a = 0; a < 8; ++a) v += N[a] * u_.segment<3>(3 * cell[a]);
    return v;
}

Mat3 DisplacementField::cell_gradient(int c, const Vec3& xi) const {
    double dN[8][3];
    HexMesh::shape_gradient(xi, mesh_->cell_size(c), dN);
    Mat3 G = Mat3::Zero();
    const auto& cell = mesh_->cell(c);
    for (int a = 0; a < 8; ++a) {
        const Vec3 ua = u_.segment<3>(3 * cell[a]);
        for (int j = 0; j < 3; ++j) G.col(j) += ua * dN[a][j];
    }
    return G;
}

Mat3 DisplacementField::gradient(const Vec3& x) const {
    const int c = mesh_->locate(x);
    if (c < 0) throw DomainError("field evaluation outside the mesh box");
    const Vec3 xi = ((x - mesh_->cell_lo(c)).array() / mesh_->cell_size(c).array()).matrix();
    return cell_gradient(c, xi.cwiseMax(0.0).cwiseMin(1.0));
}

// ---------------------------------------------------------------------------

const std::array<Vec3, 8>& FemSystem::gauss_points() {
    static const std::array<Vec3, 8> pts = [] {
        std::array<Vec3, 8> p;
        const double g[2] = {0.5 - 0.5 / std::sqrt(3.0), 0.5 + 0.5 / std::sqrt(3.0)};
        for (int q = 0; q < 8; ++q) p[q] = Vec3(g[q & 1], g[(q >> 1) & 1], g[(q >> 2) & 1]);
        return p;
    }();
    return pts;
}

namespace {

// Per-Gauss-point element matrices for unit lambda and unit mu on a box cell.
struct ReferenceMatrices {
    std::array<Eigen::Matrix<double, 24, 24>, 8> Kl, Km;
};

ReferenceMatrices reference_matrices(const Vec3& size) {
    ReferenceMatrices R;
    const double w = size.prod() / 8.0;
    for (int q = 0; q < 8; ++q) {
        double dN[8][3];
        HexMesh::shape_gradient(FemSystem::gauss_points()[q], size, dN);
        auto& Kl = R.Kl[q];
        auto& Km = R.Km[q];
        for (int a = 0; a < 8; ++a)
            for (int b = 0; b < 8; ++b) {
                const double dot = dN[a][0] * dN[b][0] + dN[a][1] * dN[b][1] + dN[a][2] * dN[b][2];
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 3; ++j) {
                        Kl(3 * a + i, 3 * b + j) = w * dN[a][i] * dN[b][j];
                        Km(3 * a + i, 3 * b + j) = w * ((i == j ? dot : 0.0) + dN[a][j] * dN[b][i]);
                    }
            }
    }
    return R;
}

struct SizeKey {
    double s[3];
    bool operator<(const SizeKey& o) const {
        for (int k = 0; k < 3; ++k)
            if (s[k] != o.s[k]) return s[k] < o.s[k];
        return false;
    }
};

SizeKey key_of(const Vec3& v) { return {{v[0], v[1], v[2]}}; }

}  // namespace

FemSystem::FemSystem(std::shared_ptr<const HexMesh> mesh, PiecewiseTensor composite, AssemblyOptions opt)
    : mesh_(std::move(mesh)), composite_(std::move(composite)), opt_(opt) {
    if (!mesh_) throw InputError("FemSystem requires a mesh");
    if (opt_.chi == ChiMode::VolumeFraction && opt_.subcells < 1) throw InputError("subcells must be positive");
    const int nn = mesh_->num_nodes();
    slot_.assign(nn, INT_MIN);
    for (int i = 0; i < nn; ++i) {
        if (mesh_->is_hanging(i)) continue;
        if (mesh_->on_boundary(i)) {
            slot_[i] = -static_cast<int>(bnodes_.size()) - 1;
            bnodes_.push_back(i);
        } else {
            slot_[i] = static_cast<int>(inodes_.size());
            inodes_.push_back(i);
        }
    }
    assemble();
}

int FemSystem::dof_class(int node) const { return slot_[node]; }

void FemSystem::cell_coefficients(int c, const PiecewiseTensor& t, double lambda[8], double mu[8]) const {
    const HexMesh& m = *mesh_;
    const Vec3 lo = m.cell_lo(c), sz = m.cell_size(c);
    const auto& gp = gauss_points();
    double chi_cell = 0.0;
    if (t.region) {
        if (opt_.chi == ChiMode::Centroid) {
            chi_cell = t.region->contains(m.cell_center(c)) ? 1.0 : 0.0;
        } else if (opt_.chi == ChiMode::VolumeFraction) {
            const int k = opt_.subcells;
            int inside = 0;
            for (int a = 0; a < k; ++a)
                for (int b = 0; b < k; ++b)
                    for (int d = 0; d < k; ++d) {
                        const Vec3 xi((a + 0.5) / k, (b + 0.5) / k, (d + 0.5) / k);
                        inside += t.region->contains(lo + (xi.array() * sz.array()).matrix());
                    }
            chi_cell = static_cast<double>(inside) / (k * k * k);
        }
    }
    const bool constant = t.background.is_constant() && (!t.region || t.inclusion.is_constant());
    IsotropicTensor bg, in;
    if (constant) {
        bg = t.background.at(lo);
        in = t.region ? t.inclusion.at(lo) : bg;
    }
    for (int q = 0; q < 8; ++q) {
        const Vec3 x = lo + (gp[q].array() * sz.array()).matrix();
        double chi = chi_cell;
        if (t.region && opt_.chi == ChiMode::QuadraturePoint) chi = t.region->contains(x) ? 1.0 : 0.0;
        if (!constant) {
            bg = t.background.at(x);
            in = (t.region && chi > 0) ? t.inclusion.at(x) : bg;
        }
        lambda[q] = bg.lambda + chi * (in.lambda - bg.lambda);
        mu[q] = bg.mu + chi * (in.mu - bg.mu);
    }
}

void FemSystem::assemble() {
    const auto t0 = std::chrono::steady_clock::now();
    const HexMesh& m = *mesh_;
    std::map<SizeKey, ReferenceMatrices> refs;
    for (int c = 0; c < m.num_cells(); ++c) {
        const SizeKey k = key_of(m.cell_size(c));
        if (!refs.count(k)) refs.emplace(k, reference_matrices(m.cell_size(c)));
    }
    using Trip = Eigen::Triplet<double>;
    constexpr int kChunks = 32;
    std::vector<std::vector<Trip>> tii(kChunks), tib(kChunks), tbb(kChunks);
    const int ncell = m.num_cells();
    parallel_for(kChunks, [&](std::size_t chunk) {
        const int c0 = static_cast<int>(ncell * chunk / kChunks), c1 = static_cast<int>(ncell * (chunk + 1) / kChunks);
        std::vector<std::pair<int, double>> expansion[8];
        for (int c = c0; c < c1; ++c) {
            double lam[8], mu[8];
            cell_coefficients(c, composite_, lam, mu);
            const ReferenceMatrices& R = refs.at(key_of(m.cell_size(c)));
            Eigen::Matrix<double, 24, 24> Ke = Eigen::Matrix<double, 24, 24>::Zero();
            for (int q = 0; q < 8; ++q) Ke += lam[q] * R.Kl[q] + mu[q] * R.Km[q];
            const auto& cell = m.cell(c);
            for (int a = 0; a < 8; ++a) {
                expansion[a].clear();
                if (m.is_hanging(cell[a])) expansion[a] = m.constraint(cell[a]);
                else expansion[a].push_back({cell[a], 1.0});
            }
            for (int a = 0; a < 8; ++a)
                for (const auto& [na, wa] : expansion[a]) {
                    const int sa = slot_[na];
                    for (int b = 0; b < 8; ++b)
                        for (const auto& [nb, wb] : expansion[b]) {
                            const int sb = slot_[nb];
                            const double w = wa * wb;
                            for (int i = 0; i < 3; ++i)
                                for (int j = 0; j < 3; ++j) {
                                    const double v = w * Ke(3 * a + i, 3 * b + j);
                                    if (v == 0.0) continue;
                                    if (sa >= 0 && sb >= 0) tii[chunk].emplace_back(3 * sa + i, 3 * sb + j, v);
                                    else if (sa >= 0 && sb < 0) tib[chunk].emplace_back(3 * sa + i, 3 * (-sb - 1) + j, v);
                                    else if (sa < 0 && sb < 0)
                                        tbb[chunk].emplace_back(3 * (-sa - 1) + i, 3 * (-sb - 1) + j, v);
                                }
                        }
                }
        }
    });
    auto merge = [](std::vector<std::vector<Trip>>& parts) {
        std::vector<Trip> all;
        size_t total = 0;
        for (auto& p : parts) total += p.size();
        all.reserve(total);
        for (auto& p : parts) {
            all.insert(all.end(), p.begin(), p.end());
            std::vector<Trip>().swap(p);
        }
        return all;
    };
    const int ni = num_interior_dofs(), nb = num_boundary_dofs();
    {
        auto t = merge(tii);
        Kii_.resize(ni, ni);
        Kii_.setFromTriplets(t.begin(), t.end());
    }
    {
        auto t = merge(tib);
        Kib_.resize(ni, nb);
        Kib_.setFromTriplets(t.begin(), t.end());
    }
    {
        auto t = merge(tbb);
        Kbb_.resize(nb, nb);
        Kbb_.setFromTriplets(t.begin(), t.end());
    }
    assembly_seconds_ = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const SpdSolver& FemSystem::solver() const {
    std::call_once(factor_once_, [this] {
        auto s = std::make_unique<SpdSolver>();
        s->compute(Kii_);
        solver_ = std::move(s);
    });
    return *solver_;
}

Eigen::MatrixXd FemSystem::solve_interior(const Eigen::MatrixXd& rhs) const { return solver().solve(rhs); }

Eigen::VectorXd FemSystem::boundary_trace(const std::function<Vec3(const Vec3&)>& f) const {
    Eigen::VectorXd g(num_boundary_dofs());
    for (size_t k = 0; k < bnodes_.size(); ++k) g.segment<3>(3 * k) = f(mesh_->node(bnodes_[k]));
    return g;
}

Eigen::VectorXd FemSystem::expand(const Eigen::VectorXd& ui, const Eigen::VectorXd& ub) const {
    const HexMesh& m = *mesh_;
    Eigen::VectorXd u = Eigen::VectorXd::Zero(3 * m.num_nodes());
    for (size_t k = 0; k < inodes_.size(); ++k) u.segment<3>(3 * inodes_[k]) = ui.segment<3>(3 * k);
    for (size_t k = 0; k < bnodes_.size(); ++k) u.segment<3>(3 * bnodes_[k]) = ub.segment<3>(3 * k);
    for (int i = 0; i < m.num_nodes(); ++i) {
        if (!m.is_hanging(i)) continue;
        Vec3 v = Vec3::Zero();
        for (const auto& [master, w] : m.constraint(i)) v += w * u.segment<3>(3 * master);
        u.segment<3>(3 * i) = v;
    }
    return u;
}

DisplacementField FemSystem::solve(const Eigen::VectorXd& F, const Eigen::VectorXd& g) const {
    if (g.size() != num_boundary_dofs()) throw InputError("boundary data has wrong size");
    Eigen::VectorXd rhs = -(Kib_ * g);
    if (F.size() > 0) {
        if (F.size() != num_interior_dofs()) throw InputError("interior load has wrong size");
        rhs += F;
    }
    const Eigen::VectorXd ui = solve_interior(rhs);
    return DisplacementField(mesh_, expand(ui, g));
}

DisplacementField FemSystem::solve_dirichlet(const Eigen::VectorXd& g) const { return solve(Eigen::VectorXd(), g); }

DisplacementField FemSystem::solve_dirichlet(const std::function<Vec3(const Vec3&)>& f) const {
    return solve_dirichlet(boundary_trace(f));
}

std::vector<DisplacementField> FemSystem::solve_many(const Eigen::MatrixXd& F) const {
    const Eigen::MatrixXd U = solve_interior(F);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(num_boundary_dofs());
    std::vector<DisplacementField> out;
    out.reserve(U.cols());
    for (int j = 0; j < U.cols(); ++j) out.emplace_back(mesh_, expand(U.col(j), zero));
    return out;
}

Eigen::VectorXd FemSystem::interior_values(const DisplacementField& u) const {
    Eigen::VectorXd v(num_interior_dofs());
    for (size_t k = 0; k < inodes_.size(); ++k) v.segment<3>(3 * k) = u.node_value(inodes_[k]);
    return v;
}

Eigen::VectorXd FemSystem::boundary_values(const DisplacementField& u) const {
    Eigen::VectorXd v(num_boundary_dofs());
    for (size_t k = 0; k < bnodes_.size(); ++k) v.segment<3>(3 * k) = u.node_value(bnodes_[k]);
    return v;
}

Eigen::VectorXd FemSystem::dtn_action(const DisplacementField& u) const {
    return Kbb_ * boundary_values(u) + Kib_.transpose() * interior_values(u);
}

namespace {

// Moves nodal loads of hanging nodes onto masters and keeps interior entries.
Eigen::VectorXd restrict_to_interior(const HexMesh& m, const std::vector<int>& slot, Eigen::VectorXd full, int ni) {
    for (int i = 0; i < m.num_nodes(); ++i) {
        if (!m.is_hanging(i)) continue;
        const Vec3 f = full.segment<3>(3 * i);
        if (f.isZero(0.0)) continue;
        for (const auto& [master, w] : m.constraint(i)) full.segment<3>(3 * master) += w * f;
        full.segment<3>(3 * i).setZero();
    }
    Eigen::VectorXd out = Eigen::VectorXd::Zero(ni);
    for (int i = 0; i < m.num_nodes(); ++i)
        if (slot[i] >= 0 && slot[i] != INT_MIN) out.segment<3>(3 * slot[i]) = full.segment<3>(3 * i);
    return out;
}

}  // namespace

double FemSystem::resolved_mollifier(const PointLoad& load) const {
    return load.r_moll > 0 ? load.r_moll : 2.0 * mesh_->local_size(load.y);
}

Eigen::VectorXd FemSystem::point_load_vector(const PointLoad& load) const {
    const HexMesh& m = *mesh_;
    const double r = resolved_mollifier(load);
    if (!std::isfinite(r) || !(r > 0)) throw ResolutionError("point load outside the mesh");
    Eigen::VectorXd full = Eigen::VectorXd::Zero(3 * m.num_nodes());
    const Box ball{load.y - Vec3::Constant(r), load.y + Vec3::Constant(r)};
    const auto& gp = gauss_points();
    constexpr int kSub = 4;
    double total = 0.0;
    for (int c = 0; c < m.num_cells(); ++c) {
        const Box cb{m.cell_lo(c), m.cell_lo(c) + m.cell_size(c)};
        if (box_box_distance(cb, ball) > 0.0 || cb.distance(load.y) >= r) continue;
        const Vec3 sz = m.cell_size(c);
        const double w = sz.prod() / (8.0 * kSub * kSub * kSub);
        double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
        for (int s = 0; s < kSub * kSub * kSub; ++s) {
            const Vec3 sub(s % kSub, (s / kSub) % kSub, s / (kSub * kSub));
            for (int q = 0; q < 8; ++q) {
                const Vec3 xi = (sub + gp[q]) / kSub;
                const Vec3 x = m.cell_lo(c) + (xi.array() * sz.array()).matrix();
                const double phi = std::max(0.0, 1.0 - (x - load.y).norm() / r);
                if (phi == 0.0) continue;
                double N[8];
                HexMesh::shape(xi, N);
                for (int a = 0; a < 8; ++a) acc[a] += w * phi * N[a];
                total += w * phi;
            }
        }
        for (int a = 0; a < 8; ++a) full.segment<3>(3 * m.cell(c)[a]) += acc[a] * load.l;
    }
    if (!(total > 0)) throw ResolutionError("mollifier support contains no quadrature points");
    full /= total;
    return restrict_to_interior(m, slot_, std::move(full), num_interior_dofs());
}

DisplacementField FemSystem::solve_point_load(const PointLoad& load) const {
    const double r = resolved_mollifier(load);
    if (mesh_->box().depth(load.y) <= 4.0 * r)
        throw ResolutionError("point load closer than 4 mollifier radii to the truncation boundary");
    if (composite_.region && std::fabs(composite_.region->signed_distance(load.y)) < r)
        throw ResolutionError("point load closer than one mollifier radius to a material interface");
    PointLoad l = load;
    l.r_moll = r;
    return solve(point_load_vector(l), Eigen::VectorXd::Zero(num_boundary_dofs()));
}

Eigen::VectorXd FemSystem::body_force_vector(const std::function<Vec3(const Vec3&)>& f) const {
    const HexMesh& m = *mesh_;
    Eigen::VectorXd full = Eigen::VectorXd::Zero(3 * m.num_nodes());
    const auto& gp = gauss_points();
    for (int c = 0; c < m.num_cells(); ++c) {
        const Vec3 sz = m.cell_size(c);
        const double w = sz.prod() / 8.0;
        for (int q = 0; q < 8; ++q) {
            const Vec3 x = m.cell_lo(c) + (gp[q].array() * sz.array()).matrix();
            const Vec3 fx = f(x);
            double N[8];
            HexMesh::shape(gp[q], N);
            for (int a = 0; a < 8; ++a) full.segment<3>(3 * m.cell(c)[a]) += w * N[a] * fx;
        }
    }
    return restrict_to_interior(m, slot_, std::move(full), num_interior_dofs());
}

Eigen::VectorXd FemSystem::stress_load_vector(const std::vector<int>& cells,
                                              const std::function<Mat3(int, int, const Vec3&)>& stress) const {
    const HexMesh& m = *mesh_;
    Eigen::VectorXd full = Eigen::VectorXd::Zero(3 * m.num_nodes());
    const auto& gp = gauss_points();
    for (int c : cells) {
        const Vec3 sz = m.cell_size(c);
        const double w = sz.prod() / 8.0;
        for (int q = 0; q < 8; ++q) {
            const Vec3 x = m.cell_lo(c) + (gp[q].array() * sz.array()).matrix();
            const Mat3 G = stress(c, q, x);
            if (G.isZero(0.0)) continue;
            double dN[8][3];
            HexMesh::shape_gradient(gp[q], sz, dN);
            for (int a = 0; a < 8; ++a) {
                const Vec3 g(dN[a][0], dN[a][1], dN[a][2]);
                full.segment<3>(3 * m.cell(c)[a]) += w * (G * g);
            }
        }
    }
    return restrict_to_interior(m, slot_, std::move(full), num_interior_dofs());
}

double FemSystem::energy_inner_product(const DisplacementField& u, const DisplacementField& v,
                                       const PiecewiseTensor* override) const {
    if (&u.mesh() != mesh_.get() || &v.mesh() != mesh_.get())
        if (u.mesh().id() != mesh_->id() || v.mesh().id() != mesh_->id())
            throw InputError("energy_inner_product: fields live on a different mesh");
    const PiecewiseTensor& t = override ? *override : composite_;
    const HexMesh& m = *mesh_;
    const auto& gp = gauss_points();
    constexpr int kChunks = 32;
    std::vector<double> partial(kChunks, 0.0);
    const int ncell = m.num_cells();
    parallel_for(kChunks, [&](std::size_t chunk) {
        const int c0 = static_cast<int>(ncell * chunk / kChunks), c1 = static_cast<int>(ncell * (chunk + 1) / kChunks);
        double acc = 0.0;
        for (int c = c0; c < c1; ++c) {
            double lam[8], mu[8];
            cell_coefficients(c, t, lam, mu);
            const double w = m.cell_size(c).prod() / 8.0;
            for (int q = 0; q < 8; ++q) {
                const Mat3 gu = u.cell_gradient(c, gp[q]);
                const Mat3 gv = v.cell_gradient(c, gp[q]);
                const Mat3 su = lam[q] * gu.trace() * Mat3::Identity() + mu[q] * (gu + gu.transpose());
                acc += w * (su.array() * gv.array()).sum();
            }
        }
        partial[chunk] = acc;
    });
    // Pairwise reduction in a fixed order.
    std::vector<double> level = partial;
    while (level.size() > 1) {
        std::vector<double> next((level.size() + 1) / 2);
        for (size_t i = 0; i < next.size(); ++i)
            next[i] = level[2 * i] + (2 * i + 1 < level.size() ? level[2 * i + 1] : 0.0);
        level.swap(next);
    }
    return level[0];
}

// ---------------------------------------------------------------------------

ManufacturedSolution::ManufacturedSolution(std::array<Expr, 3> u_, Expr lambda_, Expr mu_)
    : u(std::move(u_)), lambda(std::move(lambda_)), mu(std::move(mu_)) {
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) grad_[i][j] = u[i].derivative(j);
    const Expr div = grad_[0][0] + grad_[1][1] + grad_[2][2];
    for (int i = 0; i < 3; ++i) {
        Expr f;
        for (int j = 0; j < 3; ++j) {
            Expr sigma = mu * (grad_[i][j] + grad_[j][i]);
            if (i == j) sigma = sigma + lambda * div;
            f = f - sigma.derivative(j);
        }
        force_[i] = f;
    }
}

Vec3 ManufacturedSolution::value(const Vec3& x) const { return Vec3(u[0](x), u[1](x), u[2](x)); }

Vec3 ManufacturedSolution::body_force(const Vec3& x) const { return Vec3(force_[0](x), force_[1](x), force_[2](x)); }

Mat3 ManufacturedSolution::gradient(const Vec3& x) const {
    Mat3 G;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) G(i, j) = grad_[i][j](x);
    return G;
}

double l2_error(const DisplacementField& uh, const std::function<Vec3(const Vec3&)>& u) {
    const HexMesh& m = uh.mesh();
    const double g[3] = {0.5 - 0.5 * std::sqrt(0.6), 0.5, 0.5 + 0.5 * std::sqrt(0.6)};
    const double wg[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
    double acc = 0.0;
    for (int c = 0; c < m.num_cells(); ++c) {
        const Vec3 sz = m.cell_size(c);
        const auto& cell = m.cell(c);
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                for (int d = 0; d < 3; ++d) {
                    const Vec3 xi(g[a], g[b], g[d]);
                    const Vec3 x = m.cell_lo(c) + (xi.array() * sz.array()).matrix();
                    double N[8];
                    HexMesh::shape(xi, N);
                    Vec3 v = Vec3::Zero();
                    for (int k = 0; k < 8; ++k) v += N[k] * uh.values().segment<3>(3 * cell[k]);
                    acc += wg[a] * wg[b] * wg[d] * sz.prod() * (v - u(x)).squaredNorm();
                }
    }
    return std::sqrt(acc);
}

Vec3 rigid_motion(int which, const Vec3& x, const Vec3& x0) {
    if (which < 0 || which > 5) throw InputError("rigid motion index must lie in [0, 6)");
    if (which < 3) return unit(which);
    return unit(which - 3).cross(x - x0);
}

}  // namespace lamelab
