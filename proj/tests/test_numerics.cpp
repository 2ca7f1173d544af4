#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "flightstat/numerics.hpp"
#include "oracles.hpp"

using namespace flightstat;

namespace {

struct Instance {
    Matrix x;
    std::vector<double> y;
    std::vector<std::vector<double>> rows;
};

Instance random_instance(std::mt19937_64& rng, std::size_t n, std::size_t k) {
    std::normal_distribution<double> z(0, 1);
    Instance inst;
    inst.x = Matrix(n, k);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> row;
        for (std::size_t j = 0; j < k; ++j) {
            inst.x(i, j) = z(rng) * (j + 1) + 0.3 * j;
            row.push_back(inst.x(i, j));
        }
        inst.rows.push_back(row);
        inst.y.push_back(z(rng) * 4 + 2);
    }
    return inst;
}

}  // namespace

TEST(FitOls, ExactProportionality) {
    auto x = Matrix::from_rows({{1}, {2}});
    std::vector<double> y = {2, 4};
    auto m = fit_ols(x, y, false);
    ASSERT_EQ(m.coefficients.size(), 1u);
    EXPECT_NEAR(m.coefficients[0], 2.0, 1e-15);
    EXPECT_FALSE(m.intercept);
}

TEST(FitOls, RecoversAffineTarget) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-100, 100);
    Matrix x(40, 2);
    std::vector<double> y;
    for (std::size_t i = 0; i < 40; ++i) {
        x(i, 0) = u(rng);
        x(i, 1) = 500 + 10 * u(rng);
        y.push_back(3.5 - 1.25 * x(i, 0) + 0.0625 * x(i, 1));
    }
    auto m = fit_ols(x, y, true, {"a", "b"});
    EXPECT_NEAR(m.coefficients[0], -1.25, 1e-9);
    EXPECT_NEAR(m.coefficients[1], 0.0625, 1e-9);
    EXPECT_NEAR(*m.intercept, 3.5, 1e-9);
    EXPECT_EQ(m.feature_names, (std::vector<std::string>{"a", "b"}));
    for (std::size_t i = 0; i < 40; ++i) EXPECT_NEAR(predict_linear(m, x.row(i)), y[i], 1e-9);
}

TEST(FitOls, DuplicatedColumnIsSingularAndNamed) {
    Matrix x(10, 3);
    std::vector<double> y;
    for (std::size_t i = 0; i < 10; ++i) {
        x(i, 0) = static_cast<double>(i);
        x(i, 1) = std::sin(static_cast<double>(i));
        x(i, 2) = static_cast<double>(i);
        y.push_back(static_cast<double>(i * i));
    }
    try {
        fit_ols(x, y, false, {"dep", "wave", "dep_copy"});
        FAIL() << "expected a singular-design error";
    } catch (const SingularDesignError& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("dep_copy"), std::string::npos) << msg;
        EXPECT_NE(msg.find("dep,"), std::string::npos) << msg;
        EXPECT_EQ(msg.find("wave"), std::string::npos) << msg;
    }
}

TEST(FitOls, ConstantColumnCollidesWithIntercept) {
    Matrix x(5, 1, 7.0);
    std::vector<double> y = {1, 2, 3, 4, 5};
    EXPECT_THROW(fit_ols(x, y, true), SingularDesignError);
    Matrix zero(5, 1, 0.0);
    EXPECT_THROW(fit_ols(zero, y, false), SingularDesignError);
}

TEST(FitOls, PreconditionErrors) {
    Matrix x(2, 2, 1.0);
    std::vector<double> y = {1, 2};
    EXPECT_THROW(fit_ols(x, y, true), InsufficientDataError);
    std::vector<double> short_y = {1};
    EXPECT_THROW(fit_ols(x, short_y, false), ArgumentError);
}

TEST(FitOls, MatchesNormalEquationOracleOnRandomInstances) {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t k = 1 + rng() % 5;
        const bool intercept = trial % 2 == 0;
        const std::size_t n = k + (intercept ? 1 : 0) + 1 + rng() % (20 - k - 1);
        auto inst = random_instance(rng, n, k);
        auto model = fit_ols(inst.x, inst.y, intercept);
        auto ref = oracle::normal_equations(inst.rows, inst.y, intercept);
        for (std::size_t j = 0; j < k; ++j)
            EXPECT_NEAR(model.coefficients[j], ref.beta[j], 1e-9 * std::max(1.0, std::fabs(ref.beta[j])));
        if (intercept) EXPECT_NEAR(*model.intercept, ref.beta[k], 1e-9 * std::max(1.0, std::fabs(ref.beta[k])));
    }
}

TEST(FitOls, ResidualsAreOrthogonalToColumns) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t k = 1 + rng() % 5;
        const bool intercept = trial % 2 == 1;
        const std::size_t n = 20;
        auto inst = random_instance(rng, n, k);
        auto model = fit_ols(inst.x, inst.y, intercept);
        std::vector<double> resid(n);
        double ymax = 0;
        for (std::size_t i = 0; i < n; ++i) {
            resid[i] = inst.y[i] - predict_linear(model, inst.x.row(i));
            ymax = std::max(ymax, std::fabs(inst.y[i]));
        }
        double xty_norm = 0;
        std::vector<double> xtr(k, 0);
        for (std::size_t j = 0; j < k; ++j) {
            double xty = 0;
            for (std::size_t i = 0; i < n; ++i) {
                xty += inst.x(i, j) * inst.y[i];
                xtr[j] += inst.x(i, j) * resid[i];
            }
            xty_norm += xty * xty;
        }
        xty_norm = std::sqrt(xty_norm);
        for (double v : xtr) EXPECT_LE(std::fabs(v), 1e-8 * xty_norm);
        if (intercept) {
            double sum = 0;
            for (double r : resid) sum += r;
            EXPECT_LE(std::fabs(sum), 1e-8 * n * ymax);
        }
    }
}

TEST(PredictLinear, Examples) {
    LinearModel zero{{2, 3}, std::nullopt, {"a", "b"}};
    std::vector<double> origin = {0, 0};
    EXPECT_EQ(predict_linear(zero, origin), 0.0);

    LinearModel m{{0.9, 0.01}, std::nullopt, {"dep_delay", "distance"}};
    std::vector<double> x = {30, 500};
    EXPECT_NEAR(predict_linear(m, x), 32.0, 1e-12);

    std::vector<double> wrong = {1, 2, 3};
    EXPECT_THROW(predict_linear(m, wrong), ArgumentError);
}

TEST(RSquared, HandExamples) {
    std::vector<double> y = {1, 2, 3};
    std::vector<double> half = {1.5, 2, 2.5};
    EXPECT_NEAR(r_squared(y, half), 0.25, 1e-15);
    EXPECT_EQ(r_squared(y, y), 1.0);
    std::vector<double> mean = {2, 2, 2};
    EXPECT_EQ(r_squared(y, mean), 0.0);
}

TEST(RSquared, Errors) {
    std::vector<double> c = {0.1, 0.1, 0.1};
    EXPECT_THROW(r_squared(c, c), UndefinedVarianceError);
    std::vector<double> one = {1};
    EXPECT_THROW(r_squared(one, one), ArgumentError);
    std::vector<double> two = {1, 2};
    EXPECT_THROW(r_squared(two, one), ArgumentError);
}

TEST(RSquared, PrintedFormEqualsResidualFormForInterceptFits) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        auto inst = random_instance(rng, 15, 1 + rng() % 4);
        auto model = fit_ols(inst.x, inst.y, true);
        std::vector<double> yhat;
        for (std::size_t i = 0; i < inst.x.rows(); ++i) yhat.push_back(predict_linear(model, inst.x.row(i)));
        const double ybar = oracle::mean(inst.y);
        double sse = 0, sst = 0;
        for (std::size_t i = 0; i < yhat.size(); ++i) {
            sse += (inst.y[i] - yhat[i]) * (inst.y[i] - yhat[i]);
            sst += (inst.y[i] - ybar) * (inst.y[i] - ybar);
        }
        EXPECT_NEAR(r_squared(inst.y, yhat), 1 - sse / sst, 1e-9);
    }
}

TEST(AdjustedRSquared, HandExamples) {
    EXPECT_NEAR(adjusted_r_squared(0.5, 101, 2), 0.489796, 1e-6);
    EXPECT_EQ(adjusted_r_squared(0.0, 3, 1), -1.0);
    for (long long n : {5, 50, 1000})
        for (long long k : {1, 2, 3}) EXPECT_EQ(adjusted_r_squared(1.0, n, k), 1.0);
}

TEST(AdjustedRSquared, Errors) {
    EXPECT_THROW(adjusted_r_squared(0.5, 3, 2), DegreesOfFreedomError);
    EXPECT_THROW(adjusted_r_squared(0.5, 10, 0), ArgumentError);
}

TEST(AdjustedRSquared, StrictlyDecreasingInK) {
    for (double r2 : {-0.3, 0.0, 0.2, 0.75, 0.999}) {
        const long long n = 40;
        for (long long k = 1; k + 2 < n; ++k)
            EXPECT_LT(adjusted_r_squared(r2, n, k + 1), adjusted_r_squared(r2, n, k));
    }
}

TEST(Evaluate, PerfectPrediction) {
    std::vector<double> y = {0, 10, 20, 30};
    auto m = evaluate(y, y, 1);
    EXPECT_EQ(m.r_squared, 1.0);
    EXPECT_EQ(m.adjusted_r_squared, 1.0);
    EXPECT_EQ(m.mse, 0.0);
    EXPECT_EQ(m.mae, 0.0);
    EXPECT_EQ(m.accuracy, 1.0);
    EXPECT_EQ(m.n, 4);
    EXPECT_EQ(m.k, 1);
}

TEST(Evaluate, TotalMisclassification) {
    std::vector<double> y = {0, 20, 5, 40};
    std::vector<double> yhat = {20, 0, 16, 15};
    EXPECT_EQ(evaluate(y, yhat, 1).accuracy, 0.0);
}

TEST(Evaluate, MatchesBruteForceRecomputation) {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> z(10, 20);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 5 + rng() % 20;
        const long long k = 1 + static_cast<long long>(rng() % 3);
        std::vector<double> y(n), yhat(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = z(rng);
            yhat[i] = y[i] + z(rng) / 3;
        }
        auto m = evaluate(y, yhat, k);

        double ybar = 0;
        for (double v : y) ybar += v;
        ybar /= n;
        double num = 0, den = 0, se = 0, ae = 0, hits = 0;
        for (std::size_t i = 0; i < n; ++i) {
            num += (yhat[i] - ybar) * (yhat[i] - ybar);
            den += (y[i] - ybar) * (y[i] - ybar);
            se += (y[i] - yhat[i]) * (y[i] - yhat[i]);
            ae += std::fabs(y[i] - yhat[i]);
            hits += ((y[i] > 15) == (yhat[i] > 15)) ? 1 : 0;
        }
        const double r2 = num / den;
        EXPECT_NEAR(m.r_squared, r2, 1e-12);
        EXPECT_NEAR(m.adjusted_r_squared, 1 - (1 - r2) * (n - 1.0) / (n - k - 1.0), 1e-12);
        EXPECT_NEAR(m.mse, se / n, 1e-9);
        EXPECT_NEAR(m.mae, ae / n, 1e-9);
        EXPECT_EQ(m.accuracy, hits / n);
    }
}

TEST(Evaluate, Errors) {
    std::vector<double> y = {1, 2};
    EXPECT_THROW(evaluate(y, y, 1), DegreesOfFreedomError);
}
