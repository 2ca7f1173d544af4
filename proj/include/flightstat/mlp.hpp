#pragma once

// Fully connected regression network: rectifier hidden layers, identity
// output, trained with seeded mini-batch SGD on mean squared error.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "flightstat/errors.hpp"
#include "flightstat/features.hpp"
#include "flightstat/numerics.hpp"

namespace flightstat {

enum class Activation { rectifier, identity };

inline const char* activation_name(Activation a) { return a == Activation::rectifier ? "relu" : "identity"; }

struct DenseLayer {
    Eigen::MatrixXd weights;  // out x in
    Eigen::VectorXd bias;     // out
    Activation activation = Activation::rectifier;

    bool operator==(const DenseLayer& o) const {
        return activation == o.activation && weights.rows() == o.weights.rows() &&
               weights.cols() == o.weights.cols() && weights == o.weights && bias == o.bias;
    }
};

// Hidden widths of the production network: four hidden layers, one output.
inline const std::vector<std::size_t>& default_hidden_sizes() {
    static const std::vector<std::size_t> sizes = {300, 200, 100, 50};
    return sizes;
}

struct MlpNetwork {
    std::vector<DenseLayer> layers;

    bool operator==(const MlpNetwork&) const = default;

    std::size_t input_size() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weights.cols()); }

    std::vector<std::size_t> layer_sizes() const {
        std::vector<std::size_t> sizes;
        if (layers.empty()) return sizes;
        sizes.push_back(input_size());
        for (const auto& l : layers) sizes.push_back(static_cast<std::size_t>(l.weights.rows()));
        return sizes;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
        return n;
    }

    bool all_finite() const {
        for (const auto& l : layers)
            if (!l.weights.allFinite() || !l.bias.allFinite()) return false;
        return true;
    }

    void validate() const {
        if (layers.empty()) throw ArgumentError("network has no layers");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const auto& l = layers[i];
            if (l.bias.size() != l.weights.rows()) throw ArgumentError("bias size does not match layer width");
            if (i > 0 && l.weights.cols() != layers[i - 1].weights.rows())
                throw ArgumentError("layer " + std::to_string(i) + " input width does not chain");
        }
        if (layers.back().weights.rows() != 1) throw ArgumentError("output layer must have one unit");
        if (layers.back().activation != Activation::identity) throw ArgumentError("output activation must be identity");
        if (!all_finite()) throw ArgumentError("network has non-finite parameters");
    }
};

namespace detail {

// Uniform double in [0, 1) from the top 53 bits of the engine output.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline void activate(Eigen::MatrixXd& z, Activation a) {
    if (a == Activation::rectifier) z = z.cwiseMax(0.0);
}

}  // namespace detail

// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
// sizes = (input, hidden..., output).
inline MlpNetwork init_mlp(const std::vector<std::size_t>& sizes, std::uint64_t seed,
                           Activation hidden = Activation::rectifier) {
    if (sizes.size() < 2) throw ArgumentError("need at least an input and an output size");
    for (auto s : sizes)
        if (s == 0) throw ArgumentError("layer sizes must be positive");
    std::mt19937_64 rng(seed);
    MlpNetwork net;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
        const auto fan_in = static_cast<Eigen::Index>(sizes[i]);
        const auto fan_out = static_cast<Eigen::Index>(sizes[i + 1]);
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        DenseLayer layer;
        layer.weights.resize(fan_out, fan_in);
        for (Eigen::Index r = 0; r < fan_out; ++r)
            for (Eigen::Index c = 0; c < fan_in; ++c) layer.weights(r, c) = (2.0 * detail::unit_uniform(rng) - 1.0) * limit;
        layer.bias = Eigen::VectorXd::Zero(fan_out);
        layer.activation = i + 2 == sizes.size() ? Activation::identity : hidden;
        net.layers.push_back(std::move(layer));
    }
    return net;
}

// Columns of `inputs` are samples. Returns a 1 x batch row of outputs.
inline Eigen::MatrixXd forward_batch(const MlpNetwork& net, const Eigen::MatrixXd& inputs) {
    if (static_cast<std::size_t>(inputs.rows()) != net.input_size())
        throw ArgumentError("expected " + std::to_string(net.input_size()) + " inputs, got " +
                            std::to_string(inputs.rows()));
    Eigen::MatrixXd a = inputs;
    for (const auto& layer : net.layers) {
        Eigen::MatrixXd z = layer.weights * a;
        z.colwise() += layer.bias;
        detail::activate(z, layer.activation);
        a = std::move(z);
    }
    return a;
}

inline double forward(const MlpNetwork& net, std::span<const double> x) {
    if (x.size() != net.input_size())
        throw ArgumentError("expected " + std::to_string(net.input_size()) + " inputs, got " + std::to_string(x.size()));
    Eigen::Map<const Eigen::VectorXd> in(x.data(), static_cast<Eigen::Index>(x.size()));
    return forward_batch(net, in)(0, 0);
}

struct Gradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
};

struct LossAndGradients {
    double mse = 0;
    Gradients gradients;
};

// Mean squared error over the batch (columns of `inputs`) and its exact
// derivative with respect to every weight and bias.
inline LossAndGradients loss_and_gradients(const MlpNetwork& net, const Eigen::MatrixXd& inputs,
                                           std::span<const double> targets) {
    const Eigen::Index batch = inputs.cols();
    if (batch == 0) throw ArgumentError("empty batch");
    if (static_cast<Eigen::Index>(targets.size()) != batch) throw ArgumentError("target count does not match batch");
    if (static_cast<std::size_t>(inputs.rows()) != net.input_size())
        throw ArgumentError("expected " + std::to_string(net.input_size()) + " inputs, got " +
                            std::to_string(inputs.rows()));

    const std::size_t depth = net.layers.size();
    std::vector<Eigen::MatrixXd> acts(depth + 1);
    acts[0] = inputs;
    for (std::size_t l = 0; l < depth; ++l) {
        Eigen::MatrixXd z = net.layers[l].weights * acts[l];
        z.colwise() += net.layers[l].bias;
        detail::activate(z, net.layers[l].activation);
        acts[l + 1] = std::move(z);
    }

    Eigen::Map<const Eigen::RowVectorXd> y(targets.data(), batch);
    Eigen::MatrixXd delta = acts[depth] - y;  // 1 x batch
    LossAndGradients out;
    out.mse = delta.squaredNorm() / static_cast<double>(batch);
    delta *= 2.0 / static_cast<double>(batch);

    out.gradients.weights.resize(depth);
    out.gradients.biases.resize(depth);
    for (std::size_t l = depth; l-- > 0;) {
        const auto& layer = net.layers[l];
        if (layer.activation == Activation::rectifier)
            delta = delta.cwiseProduct((acts[l + 1].array() > 0.0).cast<double>().matrix());
        out.gradients.weights[l] = delta * acts[l].transpose();
        out.gradients.biases[l] = delta.rowwise().sum();
        if (l > 0) delta = layer.weights.transpose() * delta;
    }
    return out;
}

// Flat views used by gradient checks: layer by layer, weights (column-major) then bias.
inline std::vector<double> flatten_parameters(const MlpNetwork& net) {
    std::vector<double> out;
    for (const auto& l : net.layers) {
        out.insert(out.end(), l.weights.data(), l.weights.data() + l.weights.size());
        out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
    }
    return out;
}

inline std::vector<double> flatten_gradients(const Gradients& g) {
    std::vector<double> out;
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
        out.insert(out.end(), g.weights[l].data(), g.weights[l].data() + g.weights[l].size());
        out.insert(out.end(), g.biases[l].data(), g.biases[l].data() + g.biases[l].size());
    }
    return out;
}

inline void assign_parameters(MlpNetwork& net, std::span<const double> flat) {
    if (flat.size() != net.parameter_count()) throw ArgumentError("parameter count mismatch");
    std::size_t at = 0;
    for (auto& l : net.layers) {
        std::copy_n(flat.data() + at, l.weights.size(), l.weights.data());
        at += static_cast<std::size_t>(l.weights.size());
        std::copy_n(flat.data() + at, l.bias.size(), l.bias.data());
        at += static_cast<std::size_t>(l.bias.size());
    }
}

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 256;
    double learning_rate = 1e-3;
    std::uint64_t seed = 42;
    double validation_fraction = 0.0;
    std::vector<std::size_t> hidden_sizes = default_hidden_sizes();
    Activation hidden_activation = Activation::rectifier;

    void validate() const {
        if (batch_size == 0) throw ArgumentError("batch size must be positive");
        if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw ArgumentError("learning rate must be positive");
        if (!(validation_fraction >= 0 && validation_fraction <= 0.5))
            throw ArgumentError("validation fraction must be in [0, 0.5]");
        for (auto h : hidden_sizes)
            if (h == 0) throw ArgumentError("hidden sizes must be positive");
    }
};

struct EpochLoss {
    double train_mse = 0;
    std::optional<double> validation_mse;

    bool operator==(const EpochLoss&) const = default;
};

// Losses are on the standardized target scale.
struct TrainHistory {
    double initial_train_mse = 0;
    std::vector<EpochLoss> epochs;

    bool operator==(const TrainHistory&) const = default;
};

// Network plus everything needed to turn a flight into its input row and the
// output back into minutes.
struct MlpModel {
    MlpNetwork network;
    std::vector<std::string> input_names;
    EncoderSpec encoder;
    std::optional<Standardization> standardization;
    double target_mean = 0;
    double target_sd = 1;

    bool operator==(const MlpModel&) const = default;

    void validate() const {
        network.validate();
        if (input_names.size() != network.input_size()) throw ArgumentError("input name count does not match network");
        if (standardization && standardization->mean.size() != network.input_size())
            throw ArgumentError("standardization width does not match network");
        if (!(target_sd > 0) || !std::isfinite(target_mean)) throw ArgumentError("invalid target scaling");
    }

    double predict_encoded(std::span<const double> row) const { return target_mean + target_sd * forward(network, row); }

    double predict(const SelectedFeatures& f) const { return predict_encoded(encode_row(f, encoder, standardization)); }
};

struct MlpTrainingResult {
    MlpModel model;
    TrainHistory history;
};

namespace detail {

inline Eigen::MatrixXd gather_columns(const Matrix& x, std::span<const std::size_t> rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(x.cols()), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t c = 0; c < rows.size(); ++c) {
        auto src = x.row(rows[c]);
        for (std::size_t j = 0; j < src.size(); ++j) out(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c)) = src[j];
    }
    return out;
}

inline double dataset_mse(const MlpNetwork& net, const Matrix& x, const std::vector<double>& y_std,
                          const std::vector<std::size_t>& rows) {
    if (rows.empty()) return 0;
    long double se = 0;
    constexpr std::size_t chunk = 1024;
    for (std::size_t at = 0; at < rows.size(); at += chunk) {
        std::span<const std::size_t> part(rows.data() + at, std::min(chunk, rows.size() - at));
        auto pred = forward_batch(net, gather_columns(x, part));
        for (std::size_t c = 0; c < part.size(); ++c) {
            const double d = pred(0, static_cast<Eigen::Index>(c)) - y_std[part[c]];
            se += d * d;
        }
    }
    return static_cast<double>(se / rows.size());
}

}  // namespace detail

// Seeded mini-batch SGD on the standardized target. The dataset's inputs
// should already be standardized; the last partial batch of an epoch is kept.
inline MlpTrainingResult train_mlp(const EncodedDataset& data, const TrainConfig& config) {
    config.validate();
    const std::size_t n = data.x.rows();
    if (n == 0) throw EmptyDatasetError("cannot train on an empty dataset");
    if (!data.standardization) throw ArgumentError("dataset must be standardized before training");
    if (n < config.batch_size)
        throw ArgumentError("dataset has " + std::to_string(n) + " rows, fewer than batch size " +
                            std::to_string(config.batch_size));

    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);
    const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * config.validation_fraction));
    std::vector<std::size_t> val_rows(order.end() - static_cast<std::ptrdiff_t>(n_val), order.end());
    std::vector<std::size_t> train_rows(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_val));
    std::sort(train_rows.begin(), train_rows.end());
    if (train_rows.size() < config.batch_size) throw ArgumentError("training portion is smaller than one batch");

    MlpModel model;
    model.input_names = data.column_names;
    model.encoder = data.spec;
    model.standardization = data.standardization;
    {
        long double sum = 0;
        for (auto i : train_rows) sum += data.y[i];
        const long double mean = sum / train_rows.size();
        long double ss = 0;
        for (auto i : train_rows) ss += (data.y[i] - mean) * (data.y[i] - mean);
        const double sd = static_cast<double>(std::sqrt(ss / train_rows.size()));
        model.target_mean = static_cast<double>(mean);
        model.target_sd = sd > 0 ? sd : 1.0;
    }
    std::vector<double> y_std(n);
    for (std::size_t i = 0; i < n; ++i) y_std[i] = (data.y[i] - model.target_mean) / model.target_sd;

    std::vector<std::size_t> sizes = {data.x.cols()};
    sizes.insert(sizes.end(), config.hidden_sizes.begin(), config.hidden_sizes.end());
    sizes.push_back(1);
    model.network = init_mlp(sizes, config.seed, config.hidden_activation);

    MlpTrainingResult result;
    result.history.initial_train_mse = detail::dataset_mse(model.network, data.x, y_std, train_rows);

    std::vector<double> batch_targets;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = train_rows.size() - 1; i > 0; --i) std::swap(train_rows[i], train_rows[rng() % (i + 1)]);
        long double loss_sum = 0;
        for (std::size_t at = 0; at < train_rows.size(); at += config.batch_size) {
            std::span<const std::size_t> part(train_rows.data() + at, std::min(config.batch_size, train_rows.size() - at));
            batch_targets.clear();
            for (auto r : part) batch_targets.push_back(y_std[r]);
            auto lg = loss_and_gradients(model.network, detail::gather_columns(data.x, part), batch_targets);
            loss_sum += static_cast<long double>(lg.mse) * part.size();
            for (std::size_t l = 0; l < model.network.layers.size(); ++l) {
                model.network.layers[l].weights -= config.learning_rate * lg.gradients.weights[l];
                model.network.layers[l].bias -= config.learning_rate * lg.gradients.biases[l];
            }
        }
        if (!model.network.all_finite())
            throw DivergenceError("training diverged at epoch " + std::to_string(epoch + 1) +
                                  "; lower the learning rate");
        EpochLoss e;
        e.train_mse = static_cast<double>(loss_sum / train_rows.size());
        if (!val_rows.empty()) e.validation_mse = detail::dataset_mse(model.network, data.x, y_std, val_rows);
        result.history.epochs.push_back(e);
    }
    result.model = std::move(model);
    return result;
}

// ---------------------------------------------------------------------------
// Serialization: explicit layer sizes and row-major weight arrays.

inline nlohmann::json to_json(const MlpNetwork& net) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : net.layers) {
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(l.weights.size()));
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.push_back(l.weights(r, c));
        layers.push_back({{"in", l.weights.cols()},
                          {"out", l.weights.rows()},
                          {"activation", activation_name(l.activation)},
                          {"weights", w},
                          {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
    }
    return {{"layer_sizes", net.layer_sizes()}, {"layers", layers}};
}

inline MlpNetwork mlp_network_from_json(const nlohmann::json& j) {
    MlpNetwork net;
    for (const auto& jl : j.at("layers")) {
        const auto in = jl.at("in").get<Eigen::Index>();
        const auto out = jl.at("out").get<Eigen::Index>();
        const auto w = jl.at("weights").get<std::vector<double>>();
        const auto b = jl.at("bias").get<std::vector<double>>();
        if (in <= 0 || out <= 0 || static_cast<Eigen::Index>(w.size()) != in * out ||
            static_cast<Eigen::Index>(b.size()) != out)
            throw CorruptDocumentError("layer arrays do not match declared dimensions");
        DenseLayer l;
        l.weights.resize(out, in);
        for (Eigen::Index r = 0; r < out; ++r)
            for (Eigen::Index c = 0; c < in; ++c) l.weights(r, c) = w[static_cast<std::size_t>(r * in + c)];
        l.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), out);
        const auto act = jl.at("activation").get<std::string>();
        if (act == "relu") l.activation = Activation::rectifier;
        else if (act == "identity") l.activation = Activation::identity;
        else throw CorruptDocumentError("unknown activation '" + act + "'");
        net.layers.push_back(std::move(l));
    }
    if (j.at("layer_sizes").get<std::vector<std::size_t>>() != net.layer_sizes())
        throw CorruptDocumentError("layer_sizes does not match layer arrays");
    return net;
}

}  // namespace flightstat
