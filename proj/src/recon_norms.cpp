#include "lamelab/recon_norms.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <random>

namespace lamelab {

SpectralTransform::SpectralTransform(Eigen::VectorXd eigenvalues, Eigen::MatrixXd eigenvectors,
                                     Eigen::MatrixXd mass, double floor)
    : lambda_(std::move(eigenvalues)), V_(std::move(eigenvectors)), M_(std::move(mass)), floor_(floor) {
    if (!(floor > 0)) throw InputError("spectral floor must be positive");
    lambda_ = lambda_.cwiseMax(floor);
}

SpectralTransform SpectralTransform::from_pencil(const Eigen::MatrixXd& S, const Eigen::MatrixXd& M, double floor) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(S, M);
    if (es.info() != Eigen::Success) throw SolverError("generalized eigenproblem failed");
    return SpectralTransform(es.eigenvalues(), es.eigenvectors(), M, floor);
}

Eigen::VectorXd SpectralTransform::apply(const Eigen::VectorXd& x, double p) const {
    Eigen::VectorXd c = V_.transpose() * (M_ * x);
    c.array() *= lambda_.array().pow(p);
    return V_ * c;
}

RichardsonResult richardson(double L1, double v1, double L2, double v2) {
    if (!(L2 > L1) || !(L1 > 0)) throw InputError("richardson requires 0 < L1 < L2");
    RichardsonResult r;
    r.value = (L2 * v2 - L1 * v1) / (L2 - L1);
    r.error_estimate = std::fabs(v2 - r.value);
    return r;
}

Eigen::MatrixXd richardson(double L1, const Eigen::MatrixXd& v1, double L2, const Eigen::MatrixXd& v2) {
    if (!(L2 > L1) || !(L1 > 0)) throw InputError("richardson requires 0 < L1 < L2");
    return (L2 * v2 - L1 * v1) / (L2 - L1);
}

FitResult linear_fit(const std::vector<double>& x, const std::vector<double>& y, const std::vector<int>& exclude) {
    if (x.size() != y.size()) throw InputError("fit: x and y lengths differ");
    std::vector<int> use;
    for (int i = 0; i < static_cast<int>(x.size()); ++i)
        if (std::find(exclude.begin(), exclude.end(), i) == exclude.end()) use.push_back(i);
    if (use.size() < 2) throw FitError("fit: fewer than 2 points after exclusions");
    double mx = 0, my = 0;
    for (int i : use) {
        mx += x[i];
        my += y[i];
    }
    mx /= use.size();
    my /= use.size();
    double sxx = 0, sxy = 0, syy = 0;
    for (int i : use) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw FitError("fit: x values are all equal");
    FitResult f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ssr = 0;
    for (int i : use) {
        const double r = y[i] - (f.intercept + f.slope * x[i]);
        f.residuals.push_back(r);
        ssr += r * r;
    }
    f.r2 = syy > 0 ? 1.0 - ssr / syy : 1.0;
    f.excluded = exclude;
    f.n_used = static_cast<int>(use.size());
    return f;
}

FitResult loglog_fit(const std::vector<double>& x, const std::vector<double>& y, const std::vector<int>& exclude) {
    if (x.size() != y.size()) throw InputError("loglog_fit: x and y lengths differ");
    std::vector<double> lx(x.size()), ly(y.size());
    int used = 0;
    for (int i = 0; i < static_cast<int>(x.size()); ++i) {
        if (std::find(exclude.begin(), exclude.end(), i) != exclude.end()) continue;
        if (!(x[i] > 0) || !(y[i] > 0))
            throw InputError("loglog_fit: nonpositive value at index " + std::to_string(i));
        lx[i] = std::log(x[i]);
        ly[i] = std::log(y[i]);
        ++used;
    }
    if (used < 3) throw FitError("loglog_fit: fewer than 3 points after exclusions");
    return linear_fit(lx, ly, exclude);
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::optional<Plateau> plateau_detect(const std::vector<double>& h, const std::vector<double>& p,
                                      const PlateauOptions& opt) {
    if (h.size() != p.size()) throw InputError("plateau_detect: misaligned inputs");
    const int n = static_cast<int>(p.size());
    if (n < 4) throw InputError("plateau_detect: need at least 4 samples");
    // Grow the suffix from the small-h end while the variation stays bounded.
    double lo = p[n - 1], hi = p[n - 1];
    int start = n - 1;
    for (int i = n - 2; i >= 0; --i) {
        const double nlo = std::min(lo, p[i]), nhi = std::max(hi, p[i]);
        const double scale = std::max(std::fabs(nlo), std::fabs(nhi));
        if (scale == 0.0 || (nhi - nlo) > opt.max_relative_variation * scale) break;
        lo = nlo;
        hi = nhi;
        start = i;
    }
    const double scale = std::max(std::fabs(lo), std::fabs(hi));
    const int len = n - start;
    if (len < opt.min_length || scale == 0.0) return std::nullopt;
    Plateau pl;
    pl.onset = start;
    pl.length = len;
    pl.value = median(std::vector<double>(p.begin() + start, p.end()));
    return pl;
}

LanczosResult lanczos_extreme(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& op, int n,
                              unsigned long long seed, int max_iter, double tol) {
    LanczosResult res;
    if (n == 0) return res;
    max_iter = std::min(max_iter, n);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Eigen::VectorXd q(n);
    for (int i = 0; i < n; ++i) q[i] = nd(rng);
    q.normalize();

    Eigen::MatrixXd Q(n, max_iter);
    std::vector<double> alpha, beta;
    double prev = 0.0;
    for (int k = 0; k < max_iter; ++k) {
        Q.col(k) = q;
        Eigen::VectorXd w = op(q);
        const double a = q.dot(w);
        alpha.push_back(a);
        // Full reorthogonalization, applied twice for stability.
        for (int pass = 0; pass < 2; ++pass) w -= Q.leftCols(k + 1) * (Q.leftCols(k + 1).transpose() * w);
        const double b = w.norm();

        const int m = k + 1;
        Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
        for (int i = 0; i < m; ++i) {
            T(i, i) = alpha[i];
            if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = beta[i];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
        int idx = 0;
        for (int i = 1; i < m; ++i)
            if (std::fabs(es.eigenvalues()[i]) > std::fabs(es.eigenvalues()[idx])) idx = i;
        const double theta = es.eigenvalues()[idx];
        const double resid = b * std::fabs(es.eigenvectors()(m - 1, idx));
        res.value = theta;
        res.iterations = m;
        const double scale = std::max(std::fabs(theta), 1e-300);
        if (resid <= tol * scale || b <= tol * scale || m == n ||
            (k > 4 && std::fabs(theta - prev) <= 1e-15 * scale && resid <= 1e-8 * scale)) {
            res.vector = Q.leftCols(m) * es.eigenvectors().col(idx);
            res.converged = true;
            return res;
        }
        prev = theta;
        beta.push_back(b);
        q = w / b;
    }
    // Not converged within max_iter: return the best Ritz pair.
    const int m = static_cast<int>(alpha.size());
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) {
        T(i, i) = alpha[i];
        if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = beta[i];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    int idx = 0;
    for (int i = 1; i < m; ++i)
        if (std::fabs(es.eigenvalues()[i]) > std::fabs(es.eigenvalues()[idx])) idx = i;
    res.value = es.eigenvalues()[idx];
    res.vector = Q.leftCols(m) * es.eigenvectors().col(idx);
    return res;
}

}  // namespace lamelab
