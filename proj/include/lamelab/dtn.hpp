#pragma once

#include "lamelab/common.hpp"
#include "lamelab/fem.hpp"

#include <memory>
#include <string>
#include <vector>

namespace lamelab {

/// Scalar bilinear trace space on the boundary of a structured mesh box,
/// with the generalized eigenpairs of (S_b, M_b). Node order matches
/// FemSystem::boundary_nodes().
class BoundarySpace {
public:
    static BoundarySpace build(std::shared_ptr<const HexMesh> mesh);

    const HexMesh& mesh() const { return *mesh_; }
    const std::vector<int>& nodes() const { return nodes_; }
    int num_nodes() const { return static_cast<int>(nodes_.size()); }
    int num_dofs() const { return 3 * num_nodes(); }

    const Eigen::MatrixXd& mass() const { return M_; }
    const Eigen::MatrixXd& stiffness() const { return S_; }
    const Eigen::VectorXd& eigenvalues() const { return lambda_; }  // ascending, unfloored
    const Eigen::MatrixXd& eigenvectors() const { return V_; }      // V^T M V = I
    double diameter() const { return diam_; }                      // diameter of the boundary

    // H^{1/2} weights per eigenmode: diam * sqrt(max(lambda_k, diam^-2)).
    const Eigen::VectorXd& weights() const { return w_; }

    // Discrete H^{1/2} norm of a 3-component boundary vector.
    double norm_h12(const Eigen::VectorXd& f) const;

    // Vector boundary coefficients (3 k + c) mapped through V (or V^T).
    Eigen::VectorXd apply_V(const Eigen::VectorXd& b) const;
    Eigen::VectorXd apply_Vt(const Eigen::VectorXd& x) const;

    // The six rigid motions sampled at the boundary nodes.
    std::vector<Eigen::VectorXd> rigid_motions() const;

private:
    std::shared_ptr<const HexMesh> mesh_;
    std::vector<int> nodes_;
    Eigen::MatrixXd M_, S_, V_;
    Eigen::VectorXd lambda_, w_;
    double diam_ = 1.0;
};

/// Dense discrete Dirichlet-to-Neumann matrix over the boundary unknowns.
struct DtnMatrix {
    Eigen::MatrixXd L;
    std::string mesh_id;
    std::string tensor_id;

    double asymmetry() const;  // ||L - L^T||_F / ||L||_F

    // Binary container: magic line, header length (uint64), JSON header,
    // then row-major float64 data.
    void save(const std::string& path) const;
    static DtnMatrix load(const std::string& path);
};

DtnMatrix build_dtn(const FemSystem& system, const BoundarySpace& space);

struct NormValue {
    double raw = 0.0;     // operator norm between the discrete trace spaces
    double scaled = 0.0;  // rho0 * raw
    int iterations = 0;
};

// Operator norm of a symmetric boundary matrix from discrete H^{1/2} to its
// dual. `scale` multiplies the result (fault injection for verification runs).
NormValue operator_norm_h12(const BoundarySpace& space, const Eigen::MatrixXd& delta, double rho0,
                            double scale = 1.0);

// Dense oracle: || G^{-1/2} delta G^{-1/2} ||_2 with G = M V W V^T M.
double operator_norm_h12_dense(const BoundarySpace& space, const Eigen::MatrixXd& delta);

struct AlessandriniTerms {
    double energy1 = 0.0;    // integral of C1 grad u1 . grad u2
    double energy2 = 0.0;    // integral of C2 grad u1 . grad u2
    double boundary = 0.0;   // <(L1 - L2) f2, f1>
    double residual = 0.0;   // |energy1 - energy2 - boundary| / scale
};

// u_i solves system i with data f_i. The DtN matrices must come from the
// same systems.
AlessandriniTerms alessandrini_residual(const FemSystem& sys1, const FemSystem& sys2, const DtnMatrix& L1,
                                        const DtnMatrix& L2, const Eigen::VectorXd& f1, const Eigen::VectorXd& f2);

}  // namespace lamelab
