#pragma once

#include "lamelab/common.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace lamelab {

/// Fractional powers of a symmetric-definite pencil (S, M) with generalized
/// eigenpairs S v_k = lambda_k M v_k, V^T M V = I. Coefficient vectors are in
/// the original basis; eigenvalues below `floor` are raised to it.
class SpectralTransform {
public:
    SpectralTransform() = default;
    SpectralTransform(Eigen::VectorXd eigenvalues, Eigen::MatrixXd eigenvectors, Eigen::MatrixXd mass, double floor);

    // Dense pencil solve; S symmetric, M SPD.
    static SpectralTransform from_pencil(const Eigen::MatrixXd& S, const Eigen::MatrixXd& M, double floor);

    // x -> V diag(lambda^p) V^T M x.
    Eigen::VectorXd apply(const Eigen::VectorXd& x, double p) const;

    const Eigen::VectorXd& eigenvalues() const { return lambda_; }
    const Eigen::MatrixXd& eigenvectors() const { return V_; }
    const Eigen::MatrixXd& mass() const { return M_; }
    double floor() const { return floor_; }

private:
    Eigen::VectorXd lambda_;  // floored, ascending
    Eigen::MatrixXd V_, M_;
    double floor_ = 0.0;
};

struct RichardsonResult {
    double value = 0.0;
    double error_estimate = 0.0;
};

// v(L) = v_inf + c/L fitted through (L1, v1), (L2, v2).
RichardsonResult richardson(double L1, double v1, double L2, double v2);
Eigen::MatrixXd richardson(double L1, const Eigen::MatrixXd& v1, double L2, const Eigen::MatrixXd& v2);

struct FitResult {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    std::vector<double> residuals;  // per included point, in log space
    std::vector<int> excluded;
    int n_used = 0;
};

// Ordinary least squares of log y on log x. Indices in `exclude` are skipped.
FitResult loglog_fit(const std::vector<double>& x, const std::vector<double>& y,
                     const std::vector<int>& exclude = {});
// Plain least squares line on already-transformed data.
FitResult linear_fit(const std::vector<double>& x, const std::vector<double>& y,
                     const std::vector<int>& exclude = {});

struct Plateau {
    double value = 0.0;  // median over the plateau suffix
    int onset = 0;       // first index of the suffix
    int length = 0;
};

struct PlateauOptions {
    double max_relative_variation = 0.25;
    int min_length = 3;
};

// Longest suffix of p (ordered by descending h) whose relative variation
// (max - min) / max |.| stays within the threshold.
std::optional<Plateau> plateau_detect(const std::vector<double>& h, const std::vector<double>& p,
                                      const PlateauOptions& opt = {});

/// Largest-magnitude eigenvalue of a symmetric operator by Lanczos with full
/// reorthogonalization.
struct LanczosResult {
    double value = 0.0;  // signed eigenvalue of largest magnitude
    Eigen::VectorXd vector;
    int iterations = 0;
    bool converged = false;
};

LanczosResult lanczos_extreme(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& op, int n,
                              unsigned long long seed = 0x5eed, int max_iter = 300, double tol = 1e-12);

double median(std::vector<double> v);

}  // namespace lamelab
