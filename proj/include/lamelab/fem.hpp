#pragma once

#include "lamelab/common.hpp"
#include "lamelab/expr.hpp"
#include "lamelab/mesh.hpp"
#include "lamelab/tensor_field.hpp"

#include <Eigen/Sparse>

#include <array>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace lamelab {

using SpMat = Eigen::SparseMatrix<double>;

/// How the inclusion indicator enters the element coefficients.
enum class ChiMode {
    Centroid,         // chi of the cell centre, constant on the cell
    QuadraturePoint,  // chi at each Gauss point
    VolumeFraction,   // fraction of k^3 sub-cell centres inside, constant on the cell
};

struct AssemblyOptions {
    ChiMode chi = ChiMode::Centroid;
    int subcells = 2;  // k for VolumeFraction
};

ChiMode parse_chi_mode(const std::string& s);
std::string to_string(ChiMode m);

/// Sparse SPD factorization. Tries CHOLMOD supernodal first; if the factor
/// fails or its residual on a random block is off, falls back to the
/// simplicial (BLAS-free) variant.
class SpdSolver {
public:
    SpdSolver();
    ~SpdSolver();
    SpdSolver(const SpdSolver&) = delete;
    SpdSolver& operator=(const SpdSolver&) = delete;

    void compute(const SpMat& A);
    Eigen::MatrixXd solve(const Eigen::MatrixXd& B) const;

    const std::string& method() const { return method_; }
    double factor_seconds() const { return factor_seconds_; }
    double check_residual() const { return check_residual_; }
    int size() const { return n_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::string method_;
    double factor_seconds_ = 0.0;
    double check_residual_ = 0.0;
    int n_ = 0;
    mutable std::mutex mutex_;
};

/// Nodal displacement field (three components per node, hanging nodes already
/// interpolated).
class DisplacementField {
public:
    DisplacementField() = default;
    DisplacementField(std::shared_ptr<const HexMesh> mesh, Eigen::VectorXd nodal);

    const HexMesh& mesh() const { return *mesh_; }
    const Eigen::VectorXd& values() const { return u_; }
    Vec3 node_value(int i) const { return u_.segment<3>(3 * i); }

    Vec3 at(const Vec3& x) const;
    Mat3 gradient(const Vec3& x) const;  // G(i, j) = d u_i / d x_j
    Mat3 cell_gradient(int cell, const Vec3& xi) const;

private:
    std::shared_ptr<const HexMesh> mesh_;
    Eigen::VectorXd u_;
};

struct PointLoad {
    Vec3 y = Vec3::Zero();
    Vec3 l = Vec3::UnitX();
    double r_moll = 0.0;  // 0 selects two local cell widths
};

/// Assembled trilinear elasticity system with Dirichlet data on the boundary
/// of the mesh box. Unknowns are ordered node-major (3 k + c) over the
/// independent (non-hanging) nodes, split into interior and boundary blocks.
class FemSystem {
public:
    FemSystem(std::shared_ptr<const HexMesh> mesh, PiecewiseTensor composite, AssemblyOptions opt = {});

    const HexMesh& mesh() const { return *mesh_; }
    std::shared_ptr<const HexMesh> mesh_ptr() const { return mesh_; }
    const PiecewiseTensor& composite() const { return composite_; }
    const AssemblyOptions& options() const { return opt_; }

    const std::vector<int>& boundary_nodes() const { return bnodes_; }
    const std::vector<int>& interior_nodes() const { return inodes_; }
    int num_interior_dofs() const { return 3 * static_cast<int>(inodes_.size()); }
    int num_boundary_dofs() const { return 3 * static_cast<int>(bnodes_.size()); }

    const SpMat& K_ii() const { return Kii_; }
    const SpMat& K_ib() const { return Kib_; }
    const SpMat& K_bb() const { return Kbb_; }

    // Factorization of K_ii, computed on first use and then shared.
    const SpdSolver& solver() const;
    Eigen::MatrixXd solve_interior(const Eigen::MatrixXd& rhs) const;

    // Boundary vector (3 per boundary node) sampled from a function.
    Eigen::VectorXd boundary_trace(const std::function<Vec3(const Vec3&)>& f) const;

    DisplacementField solve_dirichlet(const Eigen::VectorXd& g) const;
    DisplacementField solve_dirichlet(const std::function<Vec3(const Vec3&)>& f) const;
    // General solve: interior load block F_i (may be empty) with boundary data g.
    DisplacementField solve(const Eigen::VectorXd& F_interior, const Eigen::VectorXd& g) const;
    std::vector<DisplacementField> solve_many(const Eigen::MatrixXd& F_interior) const;  // g = 0

    // Lambda g computed from a solved field: K_bb g + K_bi u_i.
    Eigen::VectorXd dtn_action(const DisplacementField& u) const;
    Eigen::VectorXd interior_values(const DisplacementField& u) const;
    Eigen::VectorXd boundary_values(const DisplacementField& u) const;

    // Load vectors restricted to the interior unknowns (hanging-node
    // contributions are moved to their masters).
    Eigen::VectorXd point_load_vector(const PointLoad& load) const;
    Eigen::VectorXd body_force_vector(const std::function<Vec3(const Vec3&)>& f) const;
    // Interior load of the functional v -> integral of G(x) : grad v(x), G
    // given per cell and Gauss point q by `stress` (only cells in `cells`).
    Eigen::VectorXd stress_load_vector(const std::vector<int>& cells,
                                       const std::function<Mat3(int cell, int q, const Vec3& x)>& stress) const;

    DisplacementField solve_point_load(const PointLoad& load) const;
    double resolved_mollifier(const PointLoad& load) const;

    // integral of C grad u : grad v by the assembly quadrature. `override`
    // replaces the system tensor (same chi discretization).
    double energy_inner_product(const DisplacementField& u, const DisplacementField& v,
                                const PiecewiseTensor* override = nullptr) const;

    // Coefficients (lambda, mu) at the 8 Gauss points of a cell.
    void cell_coefficients(int cell, const PiecewiseTensor& t, double lambda[8], double mu[8]) const;

    double assembly_seconds() const { return assembly_seconds_; }
    std::string tensor_id() const { return composite_.fingerprint(); }

    // Expand independent unknowns (interior block, boundary block) to all nodes.
    Eigen::VectorXd expand(const Eigen::VectorXd& ui, const Eigen::VectorXd& ub) const;

    static const std::array<Vec3, 8>& gauss_points();  // reference coordinates in [0,1]^3

private:
    void assemble();
    int dof_class(int node) const;  // index into interior (>=0) or -(boundary index)-1

    std::shared_ptr<const HexMesh> mesh_;
    PiecewiseTensor composite_;
    AssemblyOptions opt_;
    std::vector<int> bnodes_, inodes_;
    std::vector<int> slot_;  // per node: interior index, or -(boundary index) - 1, or INT_MIN for hanging
    SpMat Kii_, Kib_, Kbb_;
    mutable std::once_flag factor_once_;
    mutable std::unique_ptr<SpdSolver> solver_;
    double assembly_seconds_ = 0.0;
};

/// Manufactured solution u with the body force f = -div(C grad u) derived
/// symbolically from closed-form Lame fields.
struct ManufacturedSolution {
    std::array<Expr, 3> u;
    Expr lambda, mu;

    Vec3 value(const Vec3& x) const;
    Vec3 body_force(const Vec3& x) const;
    Mat3 gradient(const Vec3& x) const;

    ManufacturedSolution(std::array<Expr, 3> u, Expr lambda, Expr mu);

private:
    std::array<std::array<Expr, 3>, 3> grad_;
    std::array<Expr, 3> force_;
};

// L2 norm of (u_h - u) over the mesh using a 3x3x3 Gauss rule.
double l2_error(const DisplacementField& uh, const std::function<Vec3(const Vec3&)>& u);

// Rigid motions: translations e_c (c < 3) and rotations e_{c-3} x (x - x0).
Vec3 rigid_motion(int which, const Vec3& x, const Vec3& x0 = Vec3::Zero());

}  // namespace lamelab
