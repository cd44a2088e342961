#include "lamelab/dtn.hpp"

#include "lamelab/parallel.hpp"
#include "lamelab/recon_norms.hpp"

#include <lapacke.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace lamelab {

namespace {

constexpr const char* kMagic = "LAMELAB-DTN-1\n";

}  // namespace

BoundarySpace BoundarySpace::build(std::shared_ptr<const HexMesh> mesh) {
    if (!mesh || !mesh->is_structured()) throw InputError("boundary space requires a structured mesh");
    BoundarySpace s;
    s.mesh_ = mesh;
    s.nodes_ = mesh->boundary_nodes();
    const int nb = static_cast<int>(s.nodes_.size());
    std::vector<int> index(mesh->num_nodes(), -1);
    for (int k = 0; k < nb; ++k) index[s.nodes_[k]] = k;

    s.M_ = Eigen::MatrixXd::Zero(nb, nb);
    s.S_ = Eigen::MatrixXd::Zero(nb, nb);
    const Box& box = mesh->box();
    const double tol = 1e-9 * box.diameter();
    const double g[2] = {0.5 - 0.5 / std::sqrt(3.0), 0.5 + 0.5 / std::sqrt(3.0)};
    for (int c = 0; c < mesh->num_cells(); ++c) {
        const Vec3 lo = mesh->cell_lo(c), sz = mesh->cell_size(c);
        for (int a = 0; a < 3; ++a)
            for (int side = 0; side < 2; ++side) {
                const double plane = side == 0 ? lo[a] : lo[a] + sz[a];
                const double wall = side == 0 ? box.lo[a] : box.hi[a];
                if (std::fabs(plane - wall) > tol) continue;
                const int u = (a + 1) % 3, v = (a + 2) % 3;
                int corner[4];
                for (int k = 0; k < 4; ++k) {
                    const int bu = k & 1, bv = (k >> 1) & 1;
                    const int local = (side << a) | (bu << u) | (bv << v);
                    corner[k] = index[mesh->cell(c)[local]];
                    if (corner[k] < 0) throw InputError("boundary face with a non-boundary node");
                }
                const double hu = sz[u], hv = sz[v], w = hu * hv / 4.0;
                for (int qu = 0; qu < 2; ++qu)
                    for (int qv = 0; qv < 2; ++qv) {
                        const double s1 = g[qu], s2 = g[qv];
                        const double N[4] = {(1 - s1) * (1 - s2), s1 * (1 - s2), (1 - s1) * s2, s1 * s2};
                        const double du[4] = {-(1 - s2) / hu, (1 - s2) / hu, -s2 / hu, s2 / hu};
                        const double dv[4] = {-(1 - s1) / hv, -s1 / hv, (1 - s1) / hv, s1 / hv};
                        for (int i = 0; i < 4; ++i)
                            for (int j = 0; j < 4; ++j) {
                                s.M_(corner[i], corner[j]) += w * N[i] * N[j];
                                s.S_(corner[i], corner[j]) += w * (du[i] * du[j] + dv[i] * dv[j]);
                            }
                    }
            }
    }

    // Generalized symmetric-definite eigenproblem S v = lambda M v.
    Eigen::MatrixXd A = s.S_, B = s.M_;
    Eigen::VectorXd lam(nb);
    const int info = LAPACKE_dsygvd(LAPACK_COL_MAJOR, 1, 'V', 'U', nb, A.data(), nb, B.data(), nb, lam.data());
    if (info != 0) throw SolverError("boundary eigenproblem failed (dsygvd info " + std::to_string(info) + ")");
    s.lambda_ = lam;
    s.V_ = std::move(A);
    s.diam_ = box.diameter();
    s.w_.resize(nb);
    const double floor = 1.0 / (s.diam_ * s.diam_);
    for (int k = 0; k < nb; ++k) s.w_[k] = s.diam_ * std::sqrt(std::max(lam[k], floor));
    return s;
}

Eigen::VectorXd BoundarySpace::apply_V(const Eigen::VectorXd& b) const {
    const int nb = num_nodes();
    if (b.size() != 3 * nb) throw InputError("boundary vector has wrong size");
    const Eigen::Map<const Eigen::MatrixXd> B(b.data(), 3, nb);
    Eigen::VectorXd x(3 * nb);
    Eigen::Map<Eigen::MatrixXd>(x.data(), 3, nb).noalias() = B * V_.transpose();
    return x;
}

Eigen::VectorXd BoundarySpace::apply_Vt(const Eigen::VectorXd& x) const {
    const int nb = num_nodes();
    if (x.size() != 3 * nb) throw InputError("boundary vector has wrong size");
    const Eigen::Map<const Eigen::MatrixXd> X(x.data(), 3, nb);
    Eigen::VectorXd b(3 * nb);
    Eigen::Map<Eigen::MatrixXd>(b.data(), 3, nb).noalias() = X * V_;
    return b;
}

double BoundarySpace::norm_h12(const Eigen::VectorXd& f) const {
    // Coefficients in the eigenbasis: c = V^T M f per component.
    const int nb = num_nodes();
    if (f.size() != 3 * nb) throw InputError("boundary vector has wrong size");
    const Eigen::Map<const Eigen::MatrixXd> F(f.data(), 3, nb);
    const Eigen::MatrixXd C = F * M_ * V_;
    double acc = 0.0;
    for (int k = 0; k < nb; ++k) acc += w_[k] * C.col(k).squaredNorm();
    return std::sqrt(acc);
}

std::vector<Eigen::VectorXd> BoundarySpace::rigid_motions() const {
    std::vector<Eigen::VectorXd> out;
    const Vec3 x0 = mesh_->box().center();
    for (int m = 0; m < 6; ++m) {
        Eigen::VectorXd r(num_dofs());
        for (int k = 0; k < num_nodes(); ++k) r.segment<3>(3 * k) = rigid_motion(m, mesh_->node(nodes_[k]), x0);
        out.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------

double DtnMatrix::asymmetry() const {
    const double n = L.norm();
    return n > 0 ? (L - L.transpose()).norm() / n : 0.0;
}

void DtnMatrix::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("cannot write " + path);
    const nlohmann::json header = {{"rows", L.rows()}, {"cols", L.cols()}, {"dtype", "float64"},
                                   {"order", "row-major"}, {"mesh_id", mesh_id}, {"tensor_id", tensor_id}};
    const std::string h = header.dump();
    const std::uint64_t len = h.size();
    os.write(kMagic, static_cast<std::streamsize>(std::strlen(kMagic)));
    os.write(reinterpret_cast<const char*>(&len), sizeof(len));
    os.write(h.data(), static_cast<std::streamsize>(h.size()));
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> R = L;
    os.write(reinterpret_cast<const char*>(R.data()), static_cast<std::streamsize>(sizeof(double) * R.size()));
    if (!os) throw InputError("write failed for " + path);
}

DtnMatrix DtnMatrix::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("cannot read " + path);
    std::string magic(std::strlen(kMagic), '\0');
    is.read(magic.data(), static_cast<std::streamsize>(magic.size()));
    if (magic != kMagic) throw InputError(path + " is not a DtN container");
    std::uint64_t len = 0;
    is.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string h(len, '\0');
    is.read(h.data(), static_cast<std::streamsize>(len));
    const auto header = nlohmann::json::parse(h);
    const long rows = header.at("rows"), cols = header.at("cols");
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> R(rows, cols);
    is.read(reinterpret_cast<char*>(R.data()), static_cast<std::streamsize>(sizeof(double) * R.size()));
    if (!is) throw InputError(path + " is truncated");
    DtnMatrix d;
    d.L = R;
    d.mesh_id = header.at("mesh_id");
    d.tensor_id = header.at("tensor_id");
    return d;
}

// ---------------------------------------------------------------------------

DtnMatrix build_dtn(const FemSystem& system, const BoundarySpace& space) {
    if (system.mesh().id() != space.mesh().id() || system.boundary_nodes() != space.nodes())
        throw InputError("build_dtn: boundary space belongs to a different mesh");
    const int nb = system.num_boundary_dofs();
    const SpMat& Kib = system.K_ib();
    DtnMatrix out;
    out.mesh_id = system.mesh().id();
    out.tensor_id = system.tensor_id();
    out.L = Eigen::MatrixXd(system.K_bb());
    constexpr int kBlock = 256;
    const int nblocks = (nb + kBlock - 1) / kBlock;
    const SpMat Kbi = Kib.transpose();
    parallel_for(nblocks, [&](std::size_t blk) {
        const int c0 = static_cast<int>(blk) * kBlock, w = std::min(kBlock, nb - c0);
        const Eigen::MatrixXd rhs = Eigen::MatrixXd(Kib.middleCols(c0, w));
        const Eigen::MatrixXd X = system.solve_interior(rhs);
        out.L.middleCols(c0, w) -= Kbi * X;
    });
    return out;
}

NormValue operator_norm_h12(const BoundarySpace& space, const Eigen::MatrixXd& delta, double rho0, double scale) {
    const int n = space.num_dofs();
    if (delta.rows() != n || delta.cols() != n) throw InputError("operator_norm_h12: matrix size mismatch");
    const double dn = delta.norm();
    NormValue out;
    if (dn == 0.0) return out;
    if ((delta - delta.transpose()).norm() > 1e-8 * dn) throw InputError("operator_norm_h12: matrix is not symmetric");
    const int nb = space.num_nodes();
    Eigen::VectorXd winv(n);
    for (int k = 0; k < nb; ++k) winv.segment<3>(3 * k).setConstant(1.0 / std::sqrt(space.weights()[k]));
    auto op = [&](const Eigen::VectorXd& a) -> Eigen::VectorXd {
        const Eigen::VectorXd x = space.apply_V(winv.cwiseProduct(a));
        return winv.cwiseProduct(space.apply_Vt(delta * x));
    };
    const LanczosResult r = lanczos_extreme(op, n, 0x5eedULL, 400, 1e-12);
    out.raw = scale * std::fabs(r.value);
    out.scaled = rho0 * out.raw;
    out.iterations = r.iterations;
    return out;
}

double operator_norm_h12_dense(const BoundarySpace& space, const Eigen::MatrixXd& delta) {
    const int nb = space.num_nodes();
    const Eigen::MatrixXd MV = space.mass() * space.eigenvectors();
    const Eigen::MatrixXd Gs = MV * space.weights().asDiagonal() * MV.transpose();
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(3 * nb, 3 * nb);
    for (int i = 0; i < nb; ++i)
        for (int j = 0; j < nb; ++j)
            for (int c = 0; c < 3; ++c) G(3 * i + c, 3 * j + c) = Gs(i, j);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    const Eigen::MatrixXd Gmh =
        es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
    const Eigen::MatrixXd T = Gmh * delta * Gmh;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(T);
    return svd.singularValues()[0];
}

AlessandriniTerms alessandrini_residual(const FemSystem& sys1, const FemSystem& sys2, const DtnMatrix& L1,
                                        const DtnMatrix& L2, const Eigen::VectorXd& f1, const Eigen::VectorXd& f2) {
    if (sys1.mesh().id() != sys2.mesh().id()) throw InputError("alessandrini_residual: systems use different meshes");
    if (L1.mesh_id != sys1.mesh().id() || L2.mesh_id != sys2.mesh().id())
        throw InputError("alessandrini_residual: DtN matrices do not match the systems");
    const DisplacementField u1 = sys1.solve_dirichlet(f1);
    const DisplacementField u2 = sys2.solve_dirichlet(f2);
    AlessandriniTerms t;
    t.energy1 = sys1.energy_inner_product(u1, u2);
    t.energy2 = sys2.energy_inner_product(u1, u2);
    t.boundary = f1.dot((L1.L - L2.L) * f2);
    const double scale = std::max({std::fabs(t.energy1), std::fabs(t.energy2), std::fabs(t.boundary)});
    t.residual = scale > 0 ? std::fabs(t.energy1 - t.energy2 - t.boundary) / scale : 0.0;
    return t;
}

}  // namespace lamelab
