#include <csignal>
#include <cstdlib>
#include <iostream>
#include <random>

#include "flightstat/cli.hpp"

#include "CLI11.hpp"

using namespace flightstat;

namespace {

httplib::Server* g_server = nullptr;

void stop_server(int) {
    if (g_server) g_server->stop();
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream in(text);
    std::string part;
    while (std::getline(in, part, ',')) {
        char* end = nullptr;
        const long v = std::strtol(part.c_str(), &end, 10);
        if (part.empty() || *end != '\0' || v <= 0) throw ArgumentError("bad layer size list: " + text);
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

std::vector<ModelType> parse_model_list(const std::string& name) {
    if (name == "all") return {all_model_types().begin(), all_model_types().end()};
    auto t = parse_model_type(name);
    if (!t) throw ArgumentError("unknown model " + name + " (expected carrier-origin, seasonal, mlp or all)");
    return {*t};
}

fs::path scratch_dir() {
    std::random_device rd;
    auto dir = fs::temp_directory_path() / ("flightstat-dialog-" + std::to_string(rd()));
    fs::create_directories(dir);
    return dir;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Flight delay prediction toolkit"};
    app.require_subcommand(1);

    // ingest
    IngestOptions ingest;
    std::string input_path;
    std::size_t synthetic_count = 0;
    std::string split_mode = "random";
    auto* ingest_cmd = app.add_subcommand("ingest", "Parse flight records and write train/test splits");
    auto* input_opt = ingest_cmd->add_option("--input", input_path, "Flight CSV file");
    auto* synth_opt = ingest_cmd->add_option("--synthetic", synthetic_count, "Generate N synthetic records instead");
    input_opt->excludes(synth_opt);
    ingest_cmd->add_option("--seed", ingest.seed, "Split/generation seed")->capture_default_str();
    ingest_cmd->add_option("--out", ingest.out, "Output directory")->capture_default_str();
    ingest_cmd->add_option("--test-fraction", ingest.test_fraction, "Held-out fraction")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    ingest_cmd->add_option("--split", split_mode, "random or chronological")
        ->check(CLI::IsMember({"random", "chronological"}))
        ->capture_default_str();

    // train
    TrainOptions train;
    std::string train_model = "all";
    std::string hidden = "300,200,100,50";
    auto* train_cmd = app.add_subcommand("train", "Fit models on the training split");
    train_cmd->add_option("--model", train_model, "carrier-origin, seasonal, mlp or all")->capture_default_str();
    train_cmd->add_option("--data", train.data_dir, "Directory written by ingest")->capture_default_str();
    train_cmd->add_option("--out", train.out_dir, "Model directory (default <data>/models)");
    train_cmd->add_option("--epochs", train.mlp.epochs)->capture_default_str();
    train_cmd->add_option("--batch-size", train.mlp.batch_size)->capture_default_str();
    train_cmd->add_option("--learning-rate", train.mlp.learning_rate)->capture_default_str();
    train_cmd->add_option("--seed", train.mlp.seed)->capture_default_str();
    train_cmd->add_option("--validation-fraction", train.mlp.validation_fraction)->capture_default_str();
    train_cmd->add_option("--hidden", hidden, "Hidden layer sizes")->capture_default_str();
    train_cmd->add_option("--min-group-size", train.carrier_origin.min_group_size)->capture_default_str();

    // evaluate
    EvaluateOptions evaluate_opts;
    std::string eval_data = "data";
    std::string eval_models;
    std::string eval_split = "both";
    auto* eval_cmd = app.add_subcommand("evaluate", "Score trained models on train and/or test splits");
    eval_cmd->add_option("--data", eval_data)->capture_default_str();
    eval_cmd->add_option("--models", eval_models, "Model directory (default <data>/models)");
    eval_cmd->add_option("--split", eval_split)->check(CLI::IsMember({"train", "test", "both"}))->capture_default_str();
    eval_cmd->add_option("--metrics-out", evaluate_opts.metrics_out, "Metrics JSON (default <models>/metrics.json)");

    // predict
    std::string pred_model = "mlp", origin, dest, airline, date_text, time_text, pred_data = "data", pred_models;
    std::optional<double> dep_delay, distance;
    auto* pred_cmd = app.add_subcommand("predict", "Predict the arrival delay of one flight");
    pred_cmd->add_option("--model", pred_model, "carrier-origin, seasonal, mlp or all")->capture_default_str();
    pred_cmd->add_option("--origin", origin)->required();
    pred_cmd->add_option("--dest", dest)->required();
    pred_cmd->add_option("--airline", airline)->required();
    pred_cmd->add_option("--date", date_text, "YYYY-MM-DD")->required();
    pred_cmd->add_option("--time", time_text, "HH:MM")->required();
    pred_cmd->add_option("--dep-delay", dep_delay);
    pred_cmd->add_option("--distance", distance);
    pred_cmd->add_option("--data", pred_data)->capture_default_str();
    pred_cmd->add_option("--models", pred_models);

    // serve
    int port = 0;
    std::string host = "0.0.0.0";
    std::string serve_data;
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
    serve_cmd->add_option("--port", port, "Listen port (default $FLIGHTSTAT_PORT or 8080)");
    serve_cmd->add_option("--host", host)->capture_default_str();
    serve_cmd->add_option("--data", serve_data, "Data directory (default $FLIGHTSTAT_DATA_DIR or data)");

    // simulate-dialog
    std::string script_path, dialog_data;
    auto* dialog_cmd = app.add_subcommand("simulate-dialog", "Replay a scripted conversation");
    dialog_cmd->add_option("--script", script_path)->required();
    dialog_cmd->add_option("--data", dialog_data, "Directory with models and reference tables");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*ingest_cmd) {
            if (!input_path.empty()) ingest.input = input_path;
            if (*synth_opt) ingest.synthetic = synthetic_count;
            ingest.split_mode = split_mode == "random" ? SplitMode::random : SplitMode::chronological;
            run_ingest(ingest, std::cout);
        } else if (*train_cmd) {
            train.models = parse_model_list(train_model);
            train.mlp.hidden_sizes = parse_sizes(hidden);
            run_train(train, std::cout);
        } else if (*eval_cmd) {
            evaluate_opts.data_dir = eval_data;
            evaluate_opts.models_dir = models_dir_for(eval_data, eval_models);
            evaluate_opts.splits = eval_split == "both" ? std::vector<std::string>{"train", "test"}
                                                        : std::vector<std::string>{eval_split};
            run_evaluate(evaluate_opts, std::cout);
        } else if (*pred_cmd) {
            const auto types = parse_model_list(pred_model);
            PredictRequest req;
            req.model = pred_model;
            req.origin = origin;
            req.destination = dest;
            req.airline = airline;
            auto d = Date::parse_iso(date_text);
            auto t = ClockTime::parse(time_text);
            if (!d) throw ArgumentError("--date must be YYYY-MM-DD");
            if (!t) throw ArgumentError("--time must be HH:MM");
            req.date = *d;
            req.time = *t;
            req.dep_delay = dep_delay;
            req.distance = distance;
            const auto registry = ModelRegistry::load_dir(models_dir_for(pred_data, pred_models));
            const auto tables = load_reference_tables(pred_data);
            Predictor predictor(registry, tables);
            for (auto type : types) std::cout << describe_prediction(predictor.predict(type, req)) << "\n";
        } else if (*serve_cmd) {
            auto options = ServiceOptions::from_environment();
            if (!serve_data.empty()) options.data_dir = serve_data;
            if (port == 0) port = port_from_environment();
            FlightService service(options);
            httplib::Server server;
            server.set_socket_options(exclusive_socket_options);
            service.install(server);
            if (!server.bind_to_port(host, port)) {
                std::cerr << "error: cannot listen on " << host << ":" << port << "\n";
                return kExitInternal;
            }
            g_server = &server;
            std::signal(SIGINT, stop_server);
            std::signal(SIGTERM, stop_server);
            std::cout << "listening on " << host << ":" << port << " (data " << options.data_dir.string() << ")"
                      << std::endl;
            server.listen_after_bind();
        } else if (*dialog_cmd) {
            const auto scratch = scratch_dir();
            FlightBook book(scratch / "flights.json");
            ModelRegistry registry;
            ReferenceTables tables;
            if (!dialog_data.empty()) {
                registry = ModelRegistry::load_dir(dialog_data + "/models");
                tables = load_reference_tables(dialog_data);
            }
            Predictor predictor(registry, tables);
            DialogContext ctx;
            ctx.flights = &book;
            ctx.predict = [&](const UserFlight& f) {
                PredictRequest req;
                req.origin = f.origin;
                req.destination = f.destination;
                req.airline = f.airline;
                req.date = f.date;
                req.time = f.time;
                auto p = predictor.predict(ModelType::mlp, req);
                return DelayEstimate{p.minutes, model_type_name(p.model), p.provenance};
            };
            const int rc = run_simulate_dialog(script_path, ctx, std::cout, std::cerr);
            std::error_code ec;
            fs::remove_all(scratch, ec);
            return rc;
        }
    } catch (const Error& e) {
        std::cerr << "error (" << e.kind() << "): " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitOk;
}
