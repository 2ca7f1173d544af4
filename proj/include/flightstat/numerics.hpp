#pragma once

// Least-squares fitting, linear prediction and the evaluation metrics shared
// by every model.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flightstat/errors.hpp"

namespace flightstat {

// Dense row-major matrix with value semantics.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

    static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
        Matrix m(rows.size(), rows.empty() ? 0 : rows.front().size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != m.cols_) throw ArgumentError("ragged rows");
            std::copy(rows[i].begin(), rows[i].end(), m.values_.begin() + static_cast<std::ptrdiff_t>(i * m.cols_));
        }
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

    std::vector<double>& data() noexcept { return values_; }
    const std::vector<double>& data() const noexcept { return values_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

struct LinearModel {
    std::vector<double> coefficients;
    std::optional<double> intercept;
    std::vector<std::string> feature_names;

    bool operator==(const LinearModel&) const = default;

    void validate() const {
        if (coefficients.size() != feature_names.size())
            throw ArgumentError("coefficient count " + std::to_string(coefficients.size()) +
                                " does not match feature count " + std::to_string(feature_names.size()));
        for (double c : coefficients)
            if (!std::isfinite(c)) throw ArgumentError("non-finite coefficient");
        if (intercept && !std::isfinite(*intercept)) throw ArgumentError("non-finite intercept");
    }
};

inline constexpr double kSingularConditionLimit = 1e12;

namespace detail {

// Full-pivot LU of a small square matrix: P A Q = L U, stored in place.
struct FullPivotLu {
    std::size_t n = 0;
    std::vector<long double> lu;  // row-major n x n
    std::vector<std::size_t> row_perm;
    std::vector<std::size_t> col_perm;
    std::size_t rank = 0;

    long double& at(std::size_t r, std::size_t c) { return lu[r * n + c]; }
    long double at(std::size_t r, std::size_t c) const { return lu[r * n + c]; }

    FullPivotLu(const std::vector<long double>& a, std::size_t dim, long double tiny)
        : n(dim), lu(a), row_perm(dim), col_perm(dim) {
        std::iota(row_perm.begin(), row_perm.end(), 0);
        std::iota(col_perm.begin(), col_perm.end(), 0);
        long double largest = 0;
        for (auto v : lu) largest = std::max(largest, std::fabs(v));
        for (std::size_t k = 0; k < n; ++k) {
            std::size_t pr = k, pc = k;
            long double best = -1;
            for (std::size_t r = k; r < n; ++r)
                for (std::size_t c = k; c < n; ++c)
                    if (std::fabs(at(r, c)) > best) {
                        best = std::fabs(at(r, c));
                        pr = r;
                        pc = c;
                    }
            if (best <= tiny * largest) break;
            if (pr != k) {
                for (std::size_t c = 0; c < n; ++c) std::swap(at(k, c), at(pr, c));
                std::swap(row_perm[k], row_perm[pr]);
            }
            if (pc != k) {
                for (std::size_t r = 0; r < n; ++r) std::swap(at(r, k), at(r, pc));
                std::swap(col_perm[k], col_perm[pc]);
            }
            for (std::size_t r = k + 1; r < n; ++r) {
                at(r, k) /= at(k, k);
                for (std::size_t c = k + 1; c < n; ++c) at(r, c) -= at(r, k) * at(k, c);
            }
            rank = k + 1;
        }
    }

    std::vector<long double> solve(const std::vector<long double>& b) const {
        std::vector<long double> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            long double s = b[row_perm[i]];
            for (std::size_t j = 0; j < i; ++j) s -= at(i, j) * y[j];
            y[i] = s;
        }
        for (std::size_t i = n; i-- > 0;) {
            long double s = y[i];
            for (std::size_t j = i + 1; j < n; ++j) s -= at(i, j) * y[j];
            y[i] = s / at(i, i);
        }
        std::vector<long double> x(n);
        for (std::size_t i = 0; i < n; ++i) x[col_perm[i]] = y[i];
        return x;
    }

    // Approximate null vector: free the last pivot column and back-substitute.
    std::vector<long double> null_direction() const {
        const std::size_t free_col = std::min(rank, n - 1);
        std::vector<long double> z(n, 0);
        z[free_col] = 1;
        for (std::size_t i = free_col; i-- > 0;) {
            long double s = -at(i, free_col);
            for (std::size_t j = i + 1; j < free_col; ++j) s -= at(i, j) * z[j];
            z[i] = s / at(i, i);
        }
        std::vector<long double> v(n);
        for (std::size_t i = 0; i < n; ++i) v[col_perm[i]] = z[i];
        return v;
    }
};

inline long double one_norm(const std::vector<long double>& a, std::size_t n) {
    long double best = 0;
    for (std::size_t c = 0; c < n; ++c) {
        long double s = 0;
        for (std::size_t r = 0; r < n; ++r) s += std::fabs(a[r * n + c]);
        best = std::max(best, s);
    }
    return best;
}

}  // namespace detail

// Least-squares fit of y on the columns of x through the normal equations.
// The normal matrix is Jacobi-scaled before full-pivot elimination; the
// condition estimate (1-norm, scaled matrix) must stay below 1e12.
inline LinearModel fit_ols(const Matrix& x, std::span<const double> y, bool with_intercept,
                           std::vector<std::string> names = {}) {
    const std::size_t n = x.rows();
    const std::size_t k = x.cols();
    if (names.empty())
        for (std::size_t j = 0; j < k; ++j) names.push_back("x" + std::to_string(j));
    if (names.size() != k) throw ArgumentError("feature name count does not match column count");
    if (y.size() != n) throw ArgumentError("target length " + std::to_string(y.size()) + " != row count " +
                                           std::to_string(n));
    const std::size_t p = k + (with_intercept ? 1 : 0);
    if (p == 0) throw ArgumentError("no columns to fit");
    if (n < p)
        throw InsufficientDataError("need at least " + std::to_string(p) + " rows, got " + std::to_string(n));

    auto column_name = [&](std::size_t j) { return j < k ? names[j] : std::string("(intercept)"); };
    auto value = [&](std::size_t i, std::size_t j) -> long double { return j < k ? x(i, j) : 1.0L; };

    std::vector<long double> normal(p * p, 0), rhs(p, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t a = 0; a < p; ++a) {
            const long double va = value(i, a);
            rhs[a] += va * y[i];
            for (std::size_t b = a; b < p; ++b) normal[a * p + b] += va * value(i, b);
        }
    }
    for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = 0; b < a; ++b) normal[a * p + b] = normal[b * p + a];

    std::vector<long double> scale(p);
    for (std::size_t j = 0; j < p; ++j) {
        if (!(normal[j * p + j] > 0))
            throw SingularDesignError("singular design: column '" + column_name(j) + "' is identically zero");
        scale[j] = 1.0L / std::sqrt(normal[j * p + j]);
    }
    std::vector<long double> scaled(p * p);
    for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = 0; b < p; ++b) scaled[a * p + b] = normal[a * p + b] * scale[a] * scale[b];

    detail::FullPivotLu lu(scaled, p, 1e-15L);
    bool singular = lu.rank < p;
    long double condition = 0;
    if (!singular) {
        std::vector<long double> inverse(p * p);
        for (std::size_t c = 0; c < p; ++c) {
            std::vector<long double> e(p, 0);
            e[c] = 1;
            auto col = lu.solve(e);
            for (std::size_t r = 0; r < p; ++r) inverse[r * p + c] = col[r];
        }
        condition = detail::one_norm(scaled, p) * detail::one_norm(inverse, p);
        singular = !std::isfinite(static_cast<double>(condition)) || condition > kSingularConditionLimit;
    }
    if (singular) {
        auto v = lu.null_direction();
        long double vmax = 0;
        for (auto c : v) vmax = std::max(vmax, std::fabs(c));
        std::string offending;
        for (std::size_t j = 0; j < p; ++j)
            if (std::fabs(v[j]) >= 1e-3L * vmax) offending += (offending.empty() ? "" : ", ") + column_name(j);
        throw SingularDesignError("singular design (condition estimate above 1e12); collinear columns: " +
                                  offending);
    }

    std::vector<long double> scaled_rhs(p);
    for (std::size_t j = 0; j < p; ++j) scaled_rhs[j] = rhs[j] * scale[j];
    auto z = lu.solve(scaled_rhs);
    // One round of iterative refinement on the scaled system.
    std::vector<long double> residual(p);
    for (std::size_t a = 0; a < p; ++a) {
        long double s = scaled_rhs[a];
        for (std::size_t b = 0; b < p; ++b) s -= scaled[a * p + b] * z[b];
        residual[a] = s;
    }
    auto correction = lu.solve(residual);
    for (std::size_t j = 0; j < p; ++j) z[j] += correction[j];

    LinearModel model;
    model.feature_names = std::move(names);
    for (std::size_t j = 0; j < k; ++j) model.coefficients.push_back(static_cast<double>(z[j] * scale[j]));
    if (with_intercept) model.intercept = static_cast<double>(z[k] * scale[k]);
    model.validate();
    return model;
}

inline double predict_linear(const LinearModel& model, std::span<const double> x) {
    if (x.size() != model.coefficients.size())
        throw ArgumentError("expected " + std::to_string(model.coefficients.size()) + " features, got " +
                            std::to_string(x.size()));
    double out = model.intercept.value_or(0.0);
    for (std::size_t j = 0; j < x.size(); ++j) out += model.coefficients[j] * x[j];
    return out;
}

// Explained-variance form: sum (yhat - ybar)^2 / sum (y - ybar)^2.
// Equals 1 - SSE/SST only for least-squares fits with an intercept.
inline double r_squared(std::span<const double> y, std::span<const double> y_hat) {
    if (y.size() != y_hat.size()) throw ArgumentError("y and y_hat lengths differ");
    if (y.size() < 2) throw ArgumentError("r_squared needs at least two observations");
    if (std::all_of(y.begin(), y.end(), [&](double v) { return v == y.front(); }))
        throw UndefinedVarianceError("target is constant; R^2 is undefined");
    long double sum = 0;
    for (double v : y) sum += v;
    const long double mean = sum / static_cast<long double>(y.size());
    long double explained = 0, total = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        explained += (y_hat[i] - mean) * (y_hat[i] - mean);
        total += (y[i] - mean) * (y[i] - mean);
    }
    return static_cast<double>(explained / total);
}

// 1 - (1 - R^2)(n - 1)/(n - k - 1)
inline double adjusted_r_squared(double r2, long long n, long long k) {
    if (k < 1) throw ArgumentError("k must be at least 1");
    if (n <= k + 1)
        throw DegreesOfFreedomError("adjusted R^2 needs n > k + 1 (n=" + std::to_string(n) +
                                    ", k=" + std::to_string(k) + ")");
    return 1.0 - (1.0 - r2) * static_cast<double>(n - 1) / static_cast<double>(n - k - 1);
}

inline constexpr double kDelayThresholdMinutes = 15.0;

struct MetricReport {
    double r_squared = 0;
    double adjusted_r_squared = 0;
    double mse = 0;
    double mae = 0;
    double accuracy = 0;  // delayed (> 15 min) classification agreement
    long long n = 0;
    long long k = 0;
};

inline MetricReport evaluate(std::span<const double> y, std::span<const double> y_hat, long long k) {
    if (y.size() != y_hat.size()) throw ArgumentError("y and y_hat lengths differ");
    MetricReport m;
    m.n = static_cast<long long>(y.size());
    m.k = k;
    if (m.n <= k + 1)
        throw DegreesOfFreedomError("evaluation needs n > k + 1 (n=" + std::to_string(m.n) +
                                    ", k=" + std::to_string(k) + ")");
    m.r_squared = r_squared(y, y_hat);
    m.adjusted_r_squared = adjusted_r_squared(m.r_squared, m.n, k);
    long double se = 0, ae = 0;
    std::size_t agree = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const long double d = static_cast<long double>(y_hat[i]) - y[i];
        se += d * d;
        ae += std::fabs(d);
        agree += (y[i] > kDelayThresholdMinutes) == (y_hat[i] > kDelayThresholdMinutes);
    }
    m.mse = static_cast<double>(se / m.n);
    m.mae = static_cast<double>(ae / m.n);
    m.accuracy = static_cast<double>(agree) / static_cast<double>(m.n);
    return m;
}

}  // namespace flightstat
