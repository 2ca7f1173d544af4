#pragma once

// Test-only reference computations. Nothing here calls into the library's
// fitting or metric code, so results can be compared against it.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

struct OlsFit {
    std::vector<double> beta;
    std::vector<double> standard_errors;
};

// Solves X'X b = X'y explicitly with full-pivot LU, then computes classical
// standard errors sigma^2 (X'X)^-1 with sigma^2 = SSE / (n - p).
inline OlsFit normal_equations(const std::vector<std::vector<double>>& rows, const std::vector<double>& y,
                               bool with_intercept) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto k = static_cast<Eigen::Index>(rows.empty() ? 0 : rows.front().size());
    const Eigen::Index p = k + (with_intercept ? 1 : 0);
    Eigen::MatrixXd x(n, p);
    Eigen::VectorXd yy(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) x(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        if (with_intercept) x(i, k) = 1.0;
        yy(i) = y[static_cast<std::size_t>(i)];
    }
    const Eigen::MatrixXd xtx = x.transpose() * x;
    const Eigen::VectorXd xty = x.transpose() * yy;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(xtx);
    const Eigen::VectorXd b = lu.solve(xty);
    const Eigen::VectorXd resid = yy - x * b;
    const double sigma2 = n > p ? resid.squaredNorm() / static_cast<double>(n - p) : 0.0;
    const Eigen::MatrixXd cov = sigma2 * lu.inverse();

    OlsFit out;
    for (Eigen::Index j = 0; j < p; ++j) {
        out.beta.push_back(b(j));
        out.standard_errors.push_back(std::sqrt(std::max(0.0, cov(j, j))));
    }
    return out;
}

inline double mean(const std::vector<double>& v) {
    long double s = 0;
    for (double x : v) s += x;
    return static_cast<double>(s / static_cast<long double>(v.size()));
}

}  // namespace oracle
