#include <gtest/gtest.h>

#include <random>

#include "flightstat/mlp.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace flightstat;

namespace {

MlpNetwork zero_network(const std::vector<std::size_t>& sizes, double output_bias) {
    auto net = init_mlp(sizes, 1);
    for (auto& l : net.layers) {
        l.weights.setZero();
        l.bias.setZero();
    }
    net.layers.back().bias(0) = output_bias;
    return net;
}

EncoderSpec two_numeric_spec() {
    EncoderSpec spec;
    spec.rules = {{"dep_delay", ColumnKind::numeric, {}}, {"distance", ColumnKind::numeric, {}}};
    return spec;
}

std::vector<FlightRecord> noiseless_linear(std::size_t n, std::uint64_t seed) {
    SyntheticConfig cfg;
    cfg.count = n;
    for (auto& s : cfg.seasons) s = {0.9, 0.01};
    return usable_records(generate_synthetic(cfg, seed));
}

}  // namespace

TEST(MlpInit, ProductionShapesChain) {
    const std::size_t d = 57;
    auto net = init_mlp({d, 300, 200, 100, 50, 1}, 42);
    ASSERT_EQ(net.layers.size(), 5u);
    const std::vector<std::pair<long, long>> shapes = {{300, 57}, {200, 300}, {100, 200}, {50, 100}, {1, 50}};
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_EQ(net.layers[i].weights.rows(), shapes[i].first);
        EXPECT_EQ(net.layers[i].weights.cols(), shapes[i].second);
        EXPECT_EQ(net.layers[i].activation, i == 4 ? Activation::identity : Activation::rectifier);
    }
    EXPECT_NO_THROW(net.validate());
    EXPECT_EQ(net.layer_sizes(), (std::vector<std::size_t>{d, 300, 200, 100, 50, 1}));
}

TEST(MlpInit, DeterministicZeroBiasesWithinLimit) {
    auto a = init_mlp({6, 5, 3, 1}, 9);
    auto b = init_mlp({6, 5, 3, 1}, 9);
    auto c = init_mlp({6, 5, 3, 1}, 10);
    EXPECT_EQ(a, b);
    EXPECT_NE(flatten_parameters(a), flatten_parameters(c));
    for (const auto& l : a.layers) {
        EXPECT_TRUE((l.bias.array() == 0.0).all());
        const double limit = std::sqrt(6.0 / static_cast<double>(l.weights.rows() + l.weights.cols()));
        EXPECT_LE(l.weights.cwiseAbs().maxCoeff(), limit);
    }
}

TEST(MlpInit, RejectsInvalidSizes) {
    EXPECT_THROW(init_mlp({3}, 1), ArgumentError);
    EXPECT_THROW(init_mlp({}, 1), ArgumentError);
    EXPECT_THROW(init_mlp({3, 0, 1}, 1), ArgumentError);
}

TEST(MlpForward, ZeroWeightsGiveOutputBias) {
    auto net = zero_network({4, 3, 2, 1}, 7.25);
    for (auto x : {std::vector<double>{0, 0, 0, 0}, std::vector<double>{1e3, -5, 2, 0.5}})
        EXPECT_EQ(forward(net, x), 7.25);
}

TEST(MlpForward, SingleRectifiedUnitByHand) {
    MlpNetwork net;
    DenseLayer hidden{Eigen::MatrixXd::Constant(1, 1, 1.0), Eigen::VectorXd::Constant(1, -5.0), Activation::rectifier};
    DenseLayer out{Eigen::MatrixXd::Constant(1, 1, 2.0), Eigen::VectorXd::Constant(1, 0.5), Activation::identity};
    net.layers = {hidden, out};
    const double three[1] = {3.0};
    EXPECT_EQ(forward(net, three), 0.5);  // max(0, 3 - 5) = 0
    const double eight[1] = {8.0};
    EXPECT_EQ(forward(net, eight), 2.0 * 3.0 + 0.5);
}

TEST(MlpForward, DimensionMismatchAndPurity) {
    auto net = init_mlp({3, 4, 1}, 2);
    const std::vector<double> bad = {1, 2};
    EXPECT_THROW(forward(net, bad), ArgumentError);
    const std::vector<double> x = {0.3, -1.2, 2.0};
    const double first = forward(net, x);
    for (int i = 0; i < 5; ++i) EXPECT_EQ(forward(net, x), first);
}

TEST(MlpForward, RectifierOutputIsPiecewiseLinearAlongOneAxis) {
    // Two hidden layers of width 4: at most 4 + 4*5 kinks along any line.
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        auto net = init_mlp({3, 4, 4, 1}, rng());
        std::vector<double> x = {0.1, -0.4, 0.7};
        const int steps = 4001;
        std::vector<double> f(steps);
        for (int i = 0; i < steps; ++i) {
            x[1] = -10.0 + 20.0 * i / (steps - 1);
            f[i] = forward(net, x);
        }
        int bends = 0;
        for (int i = 1; i + 1 < steps; ++i)
            if (std::abs(f[i + 1] - 2 * f[i] + f[i - 1]) > 1e-9) ++bends;
        EXPECT_LE(bends, 2 * 24);
    }
}

TEST(MlpGradients, EmptyBatchRejected) {
    auto net = init_mlp({2, 2, 1}, 1);
    Eigen::MatrixXd x(2, 0);
    EXPECT_THROW(loss_and_gradients(net, x, {}), ArgumentError);
}

TEST(MlpGradients, PerfectFitIsStationary) {
    auto net = zero_network({3, 4, 1}, 2.5);
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 5);
    const std::vector<double> y(5, 2.5);
    auto lg = loss_and_gradients(net, x, y);
    EXPECT_EQ(lg.mse, 0.0);
    for (double g : flatten_gradients(lg.gradients)) EXPECT_EQ(g, 0.0);
}

TEST(MlpGradients, MatchFiniteDifferencesOnRandomTinyNetworks) {
    auto outcome = gradcheck::run(100, 2024);
    EXPECT_GT(outcome.parameters_checked, 100u);
    EXPECT_LT(outcome.worst_relative_error, 1e-4);
}

TEST(MlpGradients, SingleLinearLayerMatchesLeastSquaresGradient) {
    auto net = init_mlp({3, 1}, 5);
    net.layers[0].bias(0) = 0.3;
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 7);
    std::vector<double> y = {1, -2, 0.5, 3, 0, 1.5, -1};
    Eigen::Map<const Eigen::VectorXd> yy(y.data(), 7);
    // Samples in columns: residual r = X'w + b - y; dL/dw = (2/n) X r, dL/db = (2/n) sum r.
    Eigen::VectorXd w = net.layers[0].weights.row(0).transpose();
    Eigen::VectorXd r = (x.transpose() * w).array() + 0.3 - yy.array();
    Eigen::VectorXd gw = 2.0 / 7 * x * r;
    const double gb = 2.0 / 7 * r.sum();
    auto lg = loss_and_gradients(net, x, y);
    EXPECT_NEAR(lg.mse, r.squaredNorm() / 7, 1e-12);
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(lg.gradients.weights[0](0, j), gw(j), 1e-12);
    EXPECT_NEAR(lg.gradients.biases[0](0), gb, 1e-12);
}

TEST(MlpGradients, TwoLayerLinearNetworkMatchesChainRule) {
    auto net = init_mlp({3, 2, 1}, 8, Activation::identity);
    net.layers[0].bias << 0.1, -0.2;
    net.layers[1].bias << 0.4;
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 4);
    std::vector<double> y = {0.5, -1, 2, 0};
    Eigen::Map<const Eigen::RowVectorXd> yy(y.data(), 4);
    const auto& w1 = net.layers[0].weights;
    const auto& w2 = net.layers[1].weights;
    Eigen::MatrixXd h = (w1 * x).colwise() + net.layers[0].bias;
    Eigen::RowVectorXd r = (w2 * h).array() + 0.4 - yy.array();
    Eigen::MatrixXd g2 = 2.0 / 4 * r * h.transpose();
    Eigen::MatrixXd g1 = 2.0 / 4 * w2.transpose() * r * x.transpose();
    Eigen::VectorXd gb1 = 2.0 / 4 * w2.transpose() * r.sum();
    auto lg = loss_and_gradients(net, x, y);
    EXPECT_TRUE(lg.gradients.weights[1].isApprox(g2, 1e-12));
    EXPECT_TRUE(lg.gradients.weights[0].isApprox(g1, 1e-12));
    EXPECT_TRUE(lg.gradients.biases[0].isApprox(gb1, 1e-12));
    EXPECT_NEAR(lg.gradients.biases[1](0), 2.0 / 4 * r.sum(), 1e-12);
}

TEST(MlpGradients, FlatParameterRoundTrip) {
    auto net = init_mlp({3, 4, 2, 1}, 4);
    auto flat = flatten_parameters(net);
    EXPECT_EQ(flat.size(), net.parameter_count());
    auto copy = net;
    for (auto& v : flat) v *= 2;
    assign_parameters(copy, flat);
    EXPECT_EQ(copy.layers[1].weights, 2 * net.layers[1].weights);
    EXPECT_THROW(assign_parameters(copy, std::vector<double>(3)), ArgumentError);
}

TEST(MlpTrain, ZeroEpochsReturnsInitialization) {
    auto data = encode(noiseless_linear(300, 1), two_numeric_spec(), true);
    TrainConfig cfg;
    cfg.epochs = 0;
    cfg.batch_size = 16;
    cfg.hidden_sizes = {5, 3};
    auto result = train_mlp(data, cfg);
    EXPECT_EQ(result.model.network, init_mlp({2, 5, 3, 1}, cfg.seed));
    EXPECT_TRUE(result.history.epochs.empty());
}

TEST(MlpTrain, DeterministicGivenSeed) {
    auto data = encode(noiseless_linear(400, 2), two_numeric_spec(), true);
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 32;
    cfg.hidden_sizes = {8, 4};
    cfg.validation_fraction = 0.2;
    auto a = train_mlp(data, cfg);
    auto b = train_mlp(data, cfg);
    EXPECT_EQ(a.history, b.history);
    EXPECT_EQ(a.model, b.model);
    ASSERT_EQ(a.history.epochs.size(), 4u);
    EXPECT_TRUE(a.history.epochs.back().validation_mse.has_value());
    cfg.seed = 43;
    EXPECT_NE(train_mlp(data, cfg).history, a.history);
}

TEST(MlpTrain, ConvergesOnNoiselessLinearTarget) {
    auto data = encode(noiseless_linear(1000, 3), two_numeric_spec(), true);
    TrainConfig cfg;
    cfg.epochs = 40;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.01;
    cfg.hidden_sizes = {16, 8};
    auto result = train_mlp(data, cfg);
    EXPECT_LT(result.history.epochs.back().train_mse, 0.01 * result.history.initial_train_mse);
    EXPECT_TRUE(result.model.network.all_finite());
}

TEST(MlpTrain, IdentityNetworkMatchesOls) {
    auto records = noiseless_linear(2000, 4);
    auto data = encode(records, two_numeric_spec(), true);
    TrainConfig cfg;
    cfg.epochs = 60;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.01;
    cfg.hidden_sizes = {4};
    cfg.hidden_activation = Activation::identity;
    auto model = train_mlp(data, cfg).model;

    std::vector<std::vector<double>> rows;
    std::vector<double> y;
    for (const auto& r : records) {
        rows.push_back({*r.dep_delay, r.distance});
        y.push_back(*r.arr_delay);
    }
    auto ols = oracle::normal_equations(rows, y, true);
    double se = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const double linear = ols.beta[0] * rows[i][0] + ols.beta[1] * rows[i][1] + ols.beta[2];
        const double d = model.predict(select_features(records[i])) - linear;
        se += d * d;
    }
    EXPECT_LT(std::sqrt(se / records.size()), 0.1);
}

TEST(MlpTrain, PreconditionsAndDivergence) {
    auto raw = encode(noiseless_linear(100, 5), two_numeric_spec(), false);
    TrainConfig cfg;
    cfg.batch_size = 8;
    EXPECT_THROW(train_mlp(raw, cfg), ArgumentError);

    auto data = encode(noiseless_linear(100, 5), two_numeric_spec(), true);
    cfg.batch_size = 1000;
    EXPECT_THROW(train_mlp(data, cfg), ArgumentError);
    cfg.batch_size = 8;
    cfg.validation_fraction = 0.6;
    EXPECT_THROW(train_mlp(data, cfg), ArgumentError);
    cfg.validation_fraction = 0;
    cfg.learning_rate = 0;
    EXPECT_THROW(train_mlp(data, cfg), ArgumentError);

    cfg.learning_rate = 50;
    cfg.epochs = 200;
    cfg.hidden_sizes = {4, 4};
    cfg.hidden_activation = Activation::identity;
    EXPECT_THROW(train_mlp(data, cfg), DivergenceError);
}

TEST(MlpTrain, DefaultHyperparametersStayFiniteOnFullEncoding) {
    SyntheticConfig sc;
    sc.count = 1500;
    sc.noise_sd = 8;
    sc.nonlinearity = 20;
    auto records = usable_records(generate_synthetic(sc, 42));
    auto spec = fit_encoders(records);
    auto data = encode(records, spec, true);
    TrainConfig cfg;
    cfg.epochs = 3;
    auto result = train_mlp(data, cfg);
    EXPECT_TRUE(result.model.network.all_finite());
    EXPECT_NO_THROW(result.model.validate());
    for (const auto& e : result.history.epochs) EXPECT_TRUE(std::isfinite(e.train_mse));
}

TEST(MlpSerialization, NetworkRoundTripIsExact) {
    auto net = init_mlp({5, 7, 3, 1}, 77);
    net.layers[1].bias(2) = 0.1 + 0.2;
    auto back = mlp_network_from_json(nlohmann::json::parse(to_json(net).dump()));
    EXPECT_EQ(back, net);
    auto j = to_json(net);
    j["layers"][0]["weights"].erase(0);
    EXPECT_THROW(mlp_network_from_json(j), CorruptDocumentError);
    j = to_json(net);
    j["layers"][2]["activation"] = "tanh";
    EXPECT_THROW(mlp_network_from_json(j), CorruptDocumentError);
}
