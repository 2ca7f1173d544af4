#pragma once

// Operator pipeline behind the command-line tool: ingest, train, evaluate,
// predict and scripted dialog replay. Output goes to the given streams;
// machine-readable results go to files.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "flightstat/carrier_origin.hpp"
#include "flightstat/dialog.hpp"
#include "flightstat/errors.hpp"
#include "flightstat/features.hpp"
#include "flightstat/ingest.hpp"
#include "flightstat/mlp.hpp"
#include "flightstat/numerics.hpp"
#include "flightstat/seasonal.hpp"
#include "flightstat/service.hpp"
#include "flightstat/store.hpp"

namespace flightstat {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitInternal = 3 };

// Argument problems are usage errors; anything about the data or artifacts is a data error.
inline int exit_code_for(const Error& e) {
    if (e.kind() == "argument") return kExitUsage;
    if (e.kind() == "internal" || e.kind() == "diverged") return kExitInternal;
    return kExitData;
}

// Honors SOURCE_DATE_EPOCH so repeated runs can produce identical files.
inline std::string build_timestamp() {
    if (const char* s = std::getenv("SOURCE_DATE_EPOCH"); s && *s) {
        char* end = nullptr;
        const long long v = std::strtoll(s, &end, 10);
        if (*end == '\0') return format_timestamp(Timestamp{std::chrono::seconds{v}});
    }
    return format_timestamp(now_utc());
}

// ---------------------------------------------------------------------------
// ingest

struct IngestOptions {
    std::optional<fs::path> input;
    std::optional<std::size_t> synthetic;
    std::uint64_t seed = 42;
    double test_fraction = 0.01;
    SplitMode split_mode = SplitMode::random;
    fs::path out = "data";
};

struct IngestSummary {
    std::size_t parsed = 0;
    std::size_t rejected = 0;
    std::size_t usable = 0;
    std::size_t train = 0;
    std::size_t test = 0;
};

inline void write_text(const fs::path& path, const std::string& text) { write_file_atomic(path, text); }

inline IngestSummary run_ingest(const IngestOptions& o, std::ostream& log) {
    if (o.input.has_value() == o.synthetic.has_value())
        throw ArgumentError("give exactly one of --input or --synthetic");
    ParseResult parsed;
    nlohmann::json manifest;
    if (o.input) {
        std::ifstream in(*o.input, std::ios::binary);
        if (!in) throw IoError("cannot open " + o.input->string());
        parsed = parse_flights(in);
        manifest["source"] = o.input->string();
    } else {
        const auto cfg = benchmark_config(*o.synthetic);
        parsed.records = generate_synthetic(cfg, o.seed);
        manifest["source"] = "synthetic";
        manifest["synthetic"] = synthetic_manifest(cfg, o.seed);
    }
    if (parsed.records.empty()) throw EmptyDatasetError("no valid records in input");
    auto split = split_train_test(parsed.records, o.test_fraction, o.seed, o.split_mode);

    IngestSummary s;
    s.parsed = parsed.records.size();
    s.rejected = parsed.rejects.size();
    s.usable = usable_records(parsed.records).size();
    s.train = split.train.size();
    s.test = split.test.size();

    std::ostringstream train_csv, test_csv, rejects;
    write_flights_csv(train_csv, split.train);
    write_flights_csv(test_csv, split.test);
    for (const auto& r : parsed.rejects) rejects << r << "\n";
    manifest["parsed"] = s.parsed;
    manifest["rejected"] = s.rejected;
    manifest["usable"] = s.usable;
    manifest["train"] = s.train;
    manifest["test"] = s.test;
    manifest["seed"] = o.seed;
    manifest["test_fraction"] = o.test_fraction;
    manifest["split_mode"] = o.split_mode == SplitMode::random ? "random" : "chronological";
    manifest["files"] = {"train.csv", "test.csv", "rejects.txt", kDistancesFile, kAirportsFile};

    write_text(o.out / "train.csv", train_csv.str());
    write_text(o.out / "test.csv", test_csv.str());
    write_text(o.out / "rejects.txt", rejects.str());
    write_text(o.out / kDistancesFile, to_json(build_distance_table(parsed.records)).dump(1) + "\n");
    write_text(o.out / kAirportsFile, to_json(build_airport_directory(parsed.records, o.synthetic.has_value())).dump(1) + "\n");
    write_text(o.out / "manifest.json", manifest.dump(2) + "\n");

    log << "parsed " << s.parsed << " records, rejected " << s.rejected << ", usable " << s.usable << "\n"
        << "train " << s.train << ", test " << s.test << " -> " << o.out.string() << "\n";
    return s;
}

inline std::vector<FlightRecord> load_split(const fs::path& data_dir, const std::string& split) {
    const auto path = data_dir / (split + ".csv");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string() + " (run ingest first)");
    auto parsed = parse_flights(in);
    if (!parsed.rejects.empty())
        throw SchemaError(path.string() + ": " + std::to_string(parsed.rejects.size()) + " malformed rows");
    return parsed.records;
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
    std::vector<ModelType> models = {all_model_types().begin(), all_model_types().end()};
    fs::path data_dir = "data";
    fs::path out_dir;  // empty: <data_dir>/models
    TrainConfig mlp;
    CarrierOriginOptions carrier_origin;
};

inline fs::path models_dir_for(const fs::path& data_dir, const fs::path& explicit_dir) {
    return explicit_dir.empty() ? data_dir / "models" : explicit_dir;
}

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"seed", c.seed},
            {"validation_fraction", c.validation_fraction},
            {"hidden_sizes", c.hidden_sizes},
            {"hidden_activation", activation_name(c.hidden_activation)}};
}

inline ModelFile train_model(ModelType type, const std::vector<FlightRecord>& records, const TrainOptions& o) {
    const auto usable = usable_records(records);
    ModelFile file;
    file.metadata.record_count = usable.size();
    file.metadata.trained_at = build_timestamp();
    switch (type) {
        case ModelType::carrier_origin:
            file.model = train_carrier_origin(records, o.carrier_origin);
            file.metadata.config = {{"min_group_size", o.carrier_origin.min_group_size},
                                    {"support_threshold", o.carrier_origin.support_threshold},
                                    {"with_intercept", o.carrier_origin.with_intercept}};
            break;
        case ModelType::seasonal:
            file.model = train_seasonal(records);
            file.metadata.config = {{"min_season_rows", kMinSeasonRows}};
            break;
        case ModelType::mlp: {
            if (usable.size() < kMinimumTrainingRecords)
                throw EmptyDatasetError("need at least " + std::to_string(kMinimumTrainingRecords) +
                                        " usable records, have " + std::to_string(usable.size()));
            const auto spec = fit_encoders(usable);
            const auto data = encode(usable, spec, true);
            auto result = train_mlp(data, o.mlp);
            file.model = std::move(result.model);
            nlohmann::json losses = nlohmann::json::array();
            for (const auto& e : result.history.epochs) losses.push_back(e.train_mse);
            file.metadata.config = to_json(o.mlp);
            file.metadata.config["initial_train_mse"] = result.history.initial_train_mse;
            file.metadata.config["epoch_train_mse"] = losses;
            break;
        }
    }
    return file;
}

inline std::vector<ModelFile> run_train(const TrainOptions& o, std::ostream& log) {
    const auto records = load_split(o.data_dir, "train");
    const auto out = models_dir_for(o.data_dir, o.out_dir);
    std::vector<ModelFile> files;
    for (auto type : o.models) {
        auto file = train_model(type, records, o);
        save_model(file, out / model_filename(type));
        log << "trained " << model_type_name(type) << " on " << file.metadata.record_count << " records -> "
            << (out / model_filename(type)).string() << "\n";
        files.push_back(std::move(file));
    }
    return files;
}

// ---------------------------------------------------------------------------
// evaluate

inline const char* table_label(ModelType t) {
    switch (t) {
        case ModelType::carrier_origin: return "Model 1 – Carrier Origin";
        case ModelType::seasonal: return "Model 2 – Seasonal";
        case ModelType::mlp: return "Model 3 – Neural Net";
    }
    return "?";
}

// Predictor count used for adjusted R^2: the two regressors for the linear
// models (plus the intercept for seasonal), the encoded input width for the MLP.
inline long long model_k(const ModelFile& f) {
    switch (f.type()) {
        case ModelType::carrier_origin: return 2;
        case ModelType::seasonal: return 3;
        case ModelType::mlp: return static_cast<long long>(std::get<MlpModel>(f.model).network.input_size());
    }
    return 1;
}

inline std::vector<double> predict_records(const ModelFile& f, const std::vector<FlightRecord>& records) {
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        switch (f.type()) {
            case ModelType::carrier_origin: out.push_back(predict_carrier_origin(std::get<CarrierOriginModel>(f.model), r)); break;
            case ModelType::seasonal:
                out.push_back(predict_seasonal(std::get<SeasonalModel>(f.model), r.month, *r.dep_delay, r.distance));
                break;
            case ModelType::mlp: out.push_back(std::get<MlpModel>(f.model).predict(select_features(r))); break;
        }
    }
    return out;
}

struct EvaluationRow {
    ModelType type = ModelType::mlp;
    MetricReport metrics;
};

struct EvaluationTable {
    std::string split;
    std::size_t n = 0;
    std::vector<EvaluationRow> rows;

    const EvaluationRow* row(ModelType t) const {
        for (const auto& r : rows)
            if (r.type == t) return &r;
        return nullptr;
    }
};

inline EvaluationTable evaluate_models(const ModelRegistry& registry, const std::vector<FlightRecord>& records,
                                       const std::string& split) {
    const auto usable = usable_records(records);
    if (usable.empty()) throw EmptyDatasetError("no usable records in the " + split + " split");
    std::vector<double> y;
    for (const auto& r : usable) y.push_back(*r.arr_delay);
    EvaluationTable t;
    t.split = split;
    t.n = usable.size();
    for (auto type : registry.types()) {
        const auto& f = registry.get(type);
        t.rows.push_back({type, evaluate(y, predict_records(f, usable), model_k(f))});
    }
    return t;
}

inline std::string format_table(const EvaluationTable& t) {
    std::ostringstream out;
    out << "Split: " << t.split << " (n = " << t.n << ")\n";
    char line[160];
    std::snprintf(line, sizeof line, "%-28s %12s %8s %10s %8s %9s %5s\n", "Model", "Adjusted R2", "R2", "MSE", "MAE",
                  "Accuracy", "k");
    out << line;
    for (const auto& r : t.rows) {
        const auto& m = r.metrics;
        // The label holds a 3-byte en dash; pad by display width.
        std::string label = table_label(r.type);
        label += std::string(label.size() < 30 ? 30 - label.size() : 0, ' ');
        std::snprintf(line, sizeof line, "%s %11.2f%% %7.2f%% %10.2f %8.2f %8.2f%% %5lld\n", label.c_str(),
                      100 * m.adjusted_r_squared, 100 * m.r_squared, m.mse, m.mae, 100 * m.accuracy, m.k);
        out << line;
    }
    return out.str();
}

inline nlohmann::json to_json(const MetricReport& m) {
    return {{"r_squared", m.r_squared}, {"adjusted_r_squared", m.adjusted_r_squared},
            {"mse", m.mse},             {"mae", m.mae},
            {"accuracy", m.accuracy},   {"n", m.n},
            {"k", m.k}};
}

inline nlohmann::json to_json(const EvaluationTable& t) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : t.rows)
        rows.push_back({{"model", model_type_name(r.type)}, {"label", table_label(r.type)}, {"metrics", to_json(r.metrics)}});
    return {{"split", t.split}, {"n", t.n}, {"rows", rows}};
}

struct EvaluateOptions {
    fs::path models_dir = "data/models";
    fs::path data_dir = "data";
    std::vector<std::string> splits = {"train", "test"};
    fs::path metrics_out;  // empty: <models_dir>/metrics.json
};

inline std::vector<EvaluationTable> run_evaluate(const EvaluateOptions& o, std::ostream& out) {
    const auto registry = ModelRegistry::load_dir(o.models_dir);
    if (registry.types().empty()) throw NotFoundError("no model files in " + o.models_dir.string());
    std::vector<EvaluationTable> tables;
    nlohmann::json all = nlohmann::json::object();
    for (const auto& split : o.splits) {
        if (split != "train" && split != "test") throw ArgumentError("split must be train or test");
        tables.push_back(evaluate_models(registry, load_split(o.data_dir, split), split));
        out << format_table(tables.back()) << "\n";
        all[split] = to_json(tables.back());
    }
    write_text(o.metrics_out.empty() ? o.models_dir / "metrics.json" : o.metrics_out, all.dump(2) + "\n");
    return tables;
}

// ---------------------------------------------------------------------------
// predict

inline std::string describe_prediction(const Prediction& p) {
    std::ostringstream out;
    out << model_type_name(p.model) << ": " << std::fixed << std::setprecision(1) << p.minutes << " minutes ("
        << (p.delayed() ? "delayed" : "on time") << ")";
    for (std::size_t i = 0; i < p.provenance.size(); ++i) out << (i ? ", " : "  provenance: ") << p.provenance[i];
    return out.str();
}

// ---------------------------------------------------------------------------
// simulate-dialog

inline int run_simulate_dialog(const fs::path& script_path, const DialogContext& ctx, std::ostream& out,
                               std::ostream& err) {
    std::ifstream in(script_path);
    if (!in) throw IoError("cannot open " + script_path.string());
    auto run = run_dialog_script(parse_dialog_script(in), ctx);
    for (const auto& t : run.transcript) {
        std::istringstream lines(t.text);
        std::string line;
        bool first = true;
        while (std::getline(lines, line)) {
            out << (first ? (t.speaker == "user" ? "USER: " : "SYSTEM: ") : "        ") << line << "\n";
            first = false;
        }
        if (first) out << (t.speaker == "user" ? "USER:" : "SYSTEM:") << "\n";
    }
    for (const auto& m : run.mismatches)
        err << script_path.string() << ":" << m.line_number << ": transcript mismatch\n"
            << "- expected: " << m.expected << "\n"
            << "+ actual:   " << m.actual << "\n";
    return run.ok() ? kExitOk : kExitData;
}

}  // namespace flightstat
