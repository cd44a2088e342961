#pragma once

#include "lamelab/common.hpp"
#include "lamelab/fem.hpp"
#include "lamelab/geometry.hpp"
#include "lamelab/tensor_field.hpp"

#include <array>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace lamelab {

// Homogeneous isotropic fundamental matrix (Kelvin solution): column j is the
// displacement at x due to a unit force e_j at y.
Mat3 kelvin(const Vec3& x, const Vec3& y, const IsotropicTensor& C);
// d/dx_k of kelvin(x, y, C), returned as three matrices indexed by k.
std::array<Mat3, 3> kelvin_gradient(const Vec3& x, const Vec3& y, const IsotropicTensor& C);

enum class GreensVariant {
    VariableBackground,   // Gamma: background field, no inclusion
    Frozen,               // Gamma_0: background frozen at a point
    BimaterialHalfspace,  // Gamma_0^+: two frozen tensors split by a plane
    FrozenInclusion,      // Gamma_0^{D}: frozen tensors inside and outside D
    Full,                 // Gamma^{D}: background and inclusion fields
};

enum class GreensBackend {
    ClosedForm,       // Kelvin formula; homogeneous constant problems only
    TruncatedFem,     // mollified point load on a truncated box
    KelvinCorrected,  // Kelvin at the load point plus a FEM correction
};

std::string to_string(GreensVariant v);
std::string to_string(GreensBackend b);
GreensBackend parse_backend(const std::string& s);

struct GreensProblem {
    GreensVariant variant = GreensVariant::Frozen;
    PiecewiseTensor composite;
    // BimaterialHalfspace only: a point on the plane and the unit normal
    // pointing into the `above` material.
    Vec3 plane_point = Vec3::Zero();
    Vec3 plane_normal = Vec3::UnitZ();

    static GreensProblem variable_background(const LameField& background);
    static GreensProblem frozen(const IsotropicTensor& c0);
    static GreensProblem halfspace(const IsotropicTensor& below, const IsotropicTensor& above, const Vec3& point,
                                   const Vec3& normal_into_above);
    static GreensProblem frozen_inclusion(const IsotropicTensor& c0, const IsotropicTensor& c0_incl,
                                          std::shared_ptr<const InclusionGeometry> region);
    static GreensProblem full(const LameField& background, const LameField& inclusion,
                              std::shared_ptr<const InclusionGeometry> region);

    bool is_homogeneous_constant() const { return composite.is_homogeneous_constant(); }
};

struct GreensOptions {
    GreensBackend backend = GreensBackend::KelvinCorrected;
    Vec3 center = Vec3::Zero();  // centre of the truncation cubes
    double L1 = 4.0;             // truncation cube sides
    double L2 = 8.0;
    bool extrapolate = true;     // Richardson in 1/L; otherwise only L1 is used
    double kappa = 0.5;          // grading rate around probe points
    double probe_delta = 0.0625;   // cap on the cell size at probe points
    double probe_fraction = 0.25;  // cell size <= fraction * distance to the interface
    double surface_delta = 0.0625; // cell size on the inclusion boundary
    double surface_kappa = 0.5;
    std::optional<Box> resolve_box;  // optional region refined to box_delta
    double box_delta = 0.05;
    double moll_cells = 2.0;     // TruncatedFem mollifier radius in local cells
    int max_level = 18;
};

struct GreensValue {
    Mat3 value = Mat3::Zero();
    Mat3 value_L1 = Mat3::Zero();
    Mat3 value_L2 = Mat3::Zero();
    bool extrapolated = false;
    double error_estimate = 0.0;  // Frobenius norm of |value_L2 - value|
};

struct GreensStats {
    int meshes = 0;
    int max_dofs = 0;
    double factor_seconds = 0.0;
    int loads = 0;
};

/// Evaluates Gamma(x, y) for one variant. Meshes are built by prepare() and
/// refined around every declared point; evaluations at undeclared points are
/// subject to the same resolution checks.
class GreensEvaluator {
public:
    GreensEvaluator(GreensProblem problem, GreensOptions options);
    ~GreensEvaluator();
    GreensEvaluator(const GreensEvaluator&) = delete;
    GreensEvaluator& operator=(const GreensEvaluator&) = delete;

    const GreensProblem& problem() const { return problem_; }
    const GreensOptions& options() const { return opt_; }

    // Builds the truncation meshes refined at `points`. Clears caches.
    void prepare(const std::vector<Vec3>& points);
    // Solves for the loads at all points in `ys` (parallel over loads).
    void precompute(const std::vector<Vec3>& ys) const;

    GreensValue evaluate_full(const Vec3& x, const Vec3& y) const;
    Mat3 evaluate(const Vec3& x, const Vec3& y) const { return evaluate_full(x, y).value; }
    // Gradient in x of Gamma(x, y) l: G(i, j) = d_j (Gamma l)_i.
    Mat3 gradient(const Vec3& x, const Vec3& y, const Vec3& l) const;
    // Tensor of the problem at x (the composite, pointwise).
    IsotropicTensor tensor_at(const Vec3& x) const;

    GreensStats stats() const;
    std::string label() const;

private:
    struct Level;
    struct LoadSolution;
    const LoadSolution& load(int level, const Vec3& y) const;
    Vec3 to_local(const Vec3& x) const;
    Mat3 rotate_out(const Mat3& A) const;  // local -> global for a matrix acting on vectors
    void check_resolution(const Level& lv, const Vec3& p_local) const;
    Mat3 correction(int level, const Vec3& xl, const Vec3& yl) const;
    Mat3 correction_gradient(int level, const Vec3& xl, const Vec3& yl, const Vec3& l_local) const;

    GreensProblem problem_;
    GreensOptions opt_;
    PiecewiseTensor local_composite_;
    Mat3 R_ = Mat3::Identity();  // columns: local axes in global coordinates
    Vec3 origin_ = Vec3::Zero();
    std::vector<std::unique_ptr<Level>> levels_;
    mutable std::mutex mutex_;
};

// Fundamental matrix of the composite with `below` for x3 < 0 and `above`
// for x3 > 0, computed numerically with the flat interface aligned to the mesh.
Mat3 bimaterial_halfspace(const Vec3& x, const Vec3& y, const IsotropicTensor& below, const IsotropicTensor& above,
                          const GreensOptions& options = {});

struct RepresentationResult {
    double lhs = 0.0;   // l . (Gamma2 - Gamma1)(y, w) m
    double rhs = 0.0;   // integral over Omega of (C1 - C2) grad Gamma1(., y) l : grad Gamma2(., w) m
    double residual = 0.0;  // |lhs - rhs| / |lhs|; absolute when the tensors never differ
    int quadrature_points = 0;
};

// ev1 and ev2 must be Full variants over the same background. The right-hand
// side integrates over a structured n^3 mesh of `omega` with s^3 sub-cells
// per cell and 2x2x2 Gauss points per sub-cell.
RepresentationResult integral_representation_residual(const GreensEvaluator& ev1, const GreensEvaluator& ev2,
                                                      const Vec3& y, const Vec3& w, const Vec3& l, const Vec3& m,
                                                      const Box& omega, int n, int subcells = 2);

// -integral over the sphere |x - c| = R of (C1 grad Gamma1(., y) l) nu . Gamma2(., w) m.
double tail_flux(const GreensEvaluator& ev1, const GreensEvaluator& ev2, const Vec3& y, const Vec3& w, const Vec3& l,
                 const Vec3& m, const Vec3& c, double R, int samples = 2000);

}  // namespace lamelab
