#pragma once

#include "lamelab/common.hpp"
#include "lamelab/expr.hpp"
#include "lamelab/geometry.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace lamelab {

/// Constant isotropic tensor C A = lambda tr(A) I + 2 mu sym(A).
struct IsotropicTensor {
    double lambda = 1.0;
    double mu = 1.0;

    Mat3 apply(const Mat3& A) const;
    double component(int i, int j, int k, int l) const;
    bool operator==(const IsotropicTensor&) const = default;
};

Mat3 apply_tensor(const IsotropicTensor& C, const Mat3& A);

/// Scalar coefficient field: a closed-form expression, or piecewise constant
/// over a list of boxes (first match wins) with a default value elsewhere.
class ScalarField {
public:
    ScalarField() = default;  // the constant 0
    static ScalarField constant(double v);
    static ScalarField expression(const std::string& text);
    static ScalarField expression(Expr e);
    static ScalarField piecewise(double fallback, std::vector<std::pair<Box, double>> pieces);

    double operator()(const Vec3& x) const;
    Vec3 gradient(const Vec3& x) const;  // zero for piecewise fields away from jumps
    bool is_constant() const;
    std::string describe() const;

private:
    enum class Kind { Expression, Piecewise } kind_ = Kind::Expression;
    Expr expr_;
    std::array<Expr, 3> grad_;
    double fallback_ = 0.0;
    std::vector<std::pair<Box, double>> pieces_;
};

enum class Regularity { C11, Ctau };

struct LameField {
    ScalarField lambda = ScalarField::constant(1.0);
    ScalarField mu = ScalarField::constant(1.0);
    Regularity regularity = Regularity::C11;
    double tau = 1.0;
    double bound_M = 1.0;

    static LameField constant(double lambda, double mu);
    IsotropicTensor at(const Vec3& x) const { return {lambda(x), mu(x)}; }
    bool is_constant() const { return lambda.is_constant() && mu.is_constant(); }
    std::string describe() const;
};

IsotropicTensor freeze_at(const LameField& field, const Vec3& x0);

struct MaterialBounds {
    double alpha0 = 0.5;
    double gamma0 = 0.5;
    double mu_bar = 10.0;
    double lambda_bar = 10.0;
};

struct MaterialViolation {
    std::string condition;  // "mu>=alpha0", "2mu+3lambda>=gamma0", "mu<=mu_bar", "lambda<=lambda_bar"
    Vec3 point;
    double margin;          // negative amount by which the condition fails
};

struct MaterialReport {
    size_t samples = 0;
    std::vector<MaterialViolation> violations;
    double min_margin_convexity_mu = 0.0;
    double min_margin_convexity_bulk = 0.0;
    double min_margin_mu_bar = 0.0;
    double min_margin_lambda_bar = 0.0;

    bool pass() const { return violations.empty(); }
    bool passed(const std::string& condition) const;
};

MaterialReport validate_material(const LameField& field, const std::vector<Vec3>& samples,
                                 const MaterialBounds& bounds);

/// Background field outside `region`, inclusion field inside. An empty
/// region means the background everywhere.
struct PiecewiseTensor {
    LameField background;
    LameField inclusion;
    std::shared_ptr<const InclusionGeometry> region;

    bool inside(const Vec3& x) const { return region && region->contains(x); }
    IsotropicTensor at(const Vec3& x) const { return inside(x) ? inclusion.at(x) : background.at(x); }
    // Blend with an explicit inclusion indicator in [0, 1].
    IsotropicTensor blend(const Vec3& x, double chi) const;
    bool has_jump() const { return static_cast<bool>(region); }
    bool is_homogeneous_constant() const;
    std::string fingerprint() const;

    static PiecewiseTensor homogeneous(const LameField& f);
    static PiecewiseTensor constant(const IsotropicTensor& bg, const IsotropicTensor& incl,
                                    std::shared_ptr<const InclusionGeometry> region);
};

double jump_magnitude(const PiecewiseTensor& composite, const DomainSpec& omega, const Vec3& x);

/// A named material configuration as found in the `materials` config block.
struct MaterialPreset {
    LameField background;
    LameField inclusion;
    MaterialBounds bounds;
    double eta0 = 0.0;

    static MaterialPreset defaults();
    static MaterialPreset from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// Points of a uniform (k+1)^3 grid over a box, for sampled condition checks.
std::vector<Vec3> grid_points(const Box& box, int k);

}  // namespace lamelab
