#pragma once

#include "lamelab/common.hpp"
#include "lamelab/dtn.hpp"
#include "lamelab/fem.hpp"
#include "lamelab/geometry.hpp"
#include "lamelab/recon_norms.hpp"
#include "lamelab/tensor_field.hpp"

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace lamelab {

/// Everything needed to turn an inclusion into a discrete DtN matrix.
struct ForwardSetup {
    DomainSpec omega;
    int n = 16;
    MaterialPreset materials = MaterialPreset::defaults();
    AssemblyOptions assembly{ChiMode::VolumeFraction, 4};
    double norm_scale = 1.0;     // multiplies every norm (fault injection)
    double rho0_exponent = 1.0;  // eps = rho0^rho0_exponent ||L1 - L2|| (fault injection)

    PiecewiseTensor composite(std::shared_ptr<const InclusionGeometry> d) const;
};

/// Shared mesh and trace space for repeated DtN computations on one domain.
class DtnWorkspace {
public:
    explicit DtnWorkspace(ForwardSetup setup);

    const ForwardSetup& setup() const { return setup_; }
    std::shared_ptr<const HexMesh> mesh() const { return mesh_; }
    const BoundarySpace& space() const { return space_; }

    DtnMatrix dtn(const InclusionGeometry& d) const;
    // rho0-scaled H^{1/2} -> H^{-1/2} norm of L1 - L2.
    NormValue discrepancy(const DtnMatrix& L1, const DtnMatrix& L2) const;

private:
    ForwardSetup setup_;
    std::shared_ptr<const HexMesh> mesh_;
    BoundarySpace space_;
};

enum class FamilyKind { Offset, Radius };

struct PairFamily {
    InclusionGeometry base = InclusionGeometry::ball(Vec3(0.5, 0.5, 0.5), 0.2);
    FamilyKind kind = FamilyKind::Offset;
    Vec3 direction = Vec3::UnitX();  // Offset only
    std::vector<double> t;

    InclusionGeometry member(double t) const;
    // Members stay strictly inside Omega with the given clearance.
    void validate(const DomainSpec& omega, double clearance) const;

    // Diagonal offsets {0.02, ..., 0.12} rho0 of a ball of radius 0.2 rho0 at the centre.
    static PairFamily ball_offset(const DomainSpec& omega, int count = 6);
    // Radius growth 0.2 rho0 (1 + t) with t in {0.05, ..., 0.3}.
    static PairFamily radius_growth(const DomainSpec& omega, int count = 6);
};

struct StabilityRecord {
    double t = 0.0;
    double epsilon_raw = 0.0;
    double epsilon_scaled = 0.0;
    double d_hausdorff = 0.0;
    int n = 0;
    std::string flags;  // "reference", "eps>=1", "skipped:<reason>"
};

std::vector<StabilityRecord> run_family(const PairFamily& family, const DtnWorkspace& ws, int hausdorff_samples = 4096);

struct FamilyChecks {
    bool d_increasing = false;
    bool eps_increasing = false;
};

// Ordered by t over records without a "skipped" flag and t > 0.
FamilyChecks check_family(const std::vector<StabilityRecord>& records);

struct StabilityFit {
    double C_fit = 0.0;       // least-squares constant in d_H = C rho0 |log eps|^-eta
    double eta_fit = 0.0;
    double r2 = 0.0;
    double C_envelope = 0.0;  // smallest C with every record on or below the curve
    int n_records = 0;
    std::vector<int> excluded;  // record indices left out of the fit
};

// Least squares of log d_H on log|log eps| over records with 0 < eps < 1 and
// d_H > 0. Throws FitError with fewer than 4 usable records.
StabilityFit fit_log_stability(const std::vector<StabilityRecord>& records, double rho0);

void write_stability_csv(std::ostream& os, const std::vector<StabilityRecord>& records);
std::string fit_json(const StabilityFit& fit);

// Relative change of the rho0-scaled epsilon when every length is scaled by s.
double rho0_covariance(const ForwardSetup& setup, const InclusionGeometry& d1, const InclusionGeometry& d2, double s);

// L + delta ||L||_F S / ||S||_F with S a seeded symmetric Gaussian matrix
// projected onto the orthogonal complement of the rigid motions.
DtnMatrix perturb_dtn(const DtnMatrix& L, const BoundarySpace& space, double delta, uint64_t seed);

struct ReconstructionResult {
    std::vector<double> theta;      // argmin
    double misfit = 0.0;            // eps at the argmin
    std::vector<std::vector<double>> probed;  // every evaluated parameter vector
    std::vector<double> probed_misfit;
    std::vector<int> skipped;       // indices of probed candidates that failed
    double flatness = 0.0;          // fraction of grid candidates with misfit <= 2 * (min + floor)
};

struct ReconstructionOptions {
    std::vector<double> lower, upper;  // box constraints per parameter
    int grid = 9;                      // coarse points per coordinate
    int sweeps = 2;                    // coordinate passes
    int golden_iterations = 12;
};

// Minimizes eps(theta) = || L_{D(theta)} - L_obs || by coordinate search with
// golden-section refinement inside the best grid bracket.
ReconstructionResult reconstruct_inclusion(const DtnMatrix& observed, const DtnWorkspace& ws,
                                           const std::function<InclusionGeometry(const std::vector<double>&)>& family,
                                           const ReconstructionOptions& options);

}  // namespace lamelab
