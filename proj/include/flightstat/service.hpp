#pragma once

// HTTP facade: model registry, predictions, dialog sessions, the flight list
// and event analytics, all backed by one data directory.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "flightstat/calendar.hpp"
#include "flightstat/carrier_origin.hpp"
#include "flightstat/dialog.hpp"
#include "flightstat/errors.hpp"
#include "flightstat/features.hpp"
#include "flightstat/ingest.hpp"
#include "flightstat/mlp.hpp"
#include "flightstat/seasonal.hpp"
#include "flightstat/store.hpp"

// After Eigen: <resolv.h> defines a _res macro that collides with Eigen parameter names.
#include "httplib.h"

namespace flightstat {

// ---------------------------------------------------------------------------
// Reference tables written at ingest time: airports, carriers, distances.

struct AirportEntry {
    int id = 0;
    std::string code;
    std::string city;

    bool operator==(const AirportEntry&) const = default;
};

class AirportDirectory {
public:
    AirportDirectory() = default;
    explicit AirportDirectory(std::vector<AirportEntry> entries) : entries_(std::move(entries)) {}

    // Accepts a numeric id, a code or a city name (case-insensitive).
    std::optional<int> resolve(std::string_view text) const {
        const std::string t = strip_politeness(text);
        if (t.empty()) return std::nullopt;
        if (std::all_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; }) && t.size() < 9) {
            const int id = std::stoi(t);
            for (const auto& a : entries_)
                if (a.id == id) return id;
            return id;
        }
        for (const auto& a : entries_)
            if (same_place(a.code, t)) return a.id;
        for (const auto& a : entries_)
            if (!a.city.empty() && same_place(a.city, t)) return a.id;
        return std::nullopt;
    }

    const std::vector<AirportEntry>& entries() const { return entries_; }

private:
    std::vector<AirportEntry> entries_;
};

// Codes and cities are only known for the generator's airports; real ids keep their number as the code.
inline AirportDirectory build_airport_directory(const std::vector<FlightRecord>& records, bool synthetic_names = false) {
    std::map<int, AirportEntry> seen;
    for (const auto& r : records)
        for (int id : {r.origin_airport_id, r.dest_airport_id}) seen.emplace(id, AirportEntry{id, std::to_string(id), ""});
    if (synthetic_names)
        for (const auto& a : synthetic_airports())
            if (auto it = seen.find(a.id); it != seen.end()) it->second = {a.id, a.code, a.city};
    std::vector<AirportEntry> out;
    for (auto& [id, e] : seen) out.push_back(std::move(e));
    return AirportDirectory(std::move(out));
}

inline nlohmann::json to_json(const AirportDirectory& d) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& a : d.entries()) arr.push_back({{"id", a.id}, {"code", a.code}, {"city", a.city}});
    return {{"version", 1}, {"airports", arr}};
}

inline AirportDirectory airport_directory_from_json(const nlohmann::json& j) {
    std::vector<AirportEntry> out;
    for (const auto& a : j.at("airports"))
        out.push_back({a.at("id").get<int>(), a.at("code").get<std::string>(), a.at("city").get<std::string>()});
    return AirportDirectory(std::move(out));
}

inline const std::map<std::string, std::string>& carrier_names() {
    static const std::map<std::string, std::string> names = {
        {"AA", "American"}, {"AS", "Alaska"},   {"B6", "JetBlue"},  {"DL", "Delta"},
        {"F9", "Frontier"}, {"G4", "Allegiant"}, {"HA", "Hawaiian"}, {"MQ", "Envoy"},
        {"NK", "Spirit"},   {"SY", "Sun Country"}, {"UA", "United"}, {"WN", "Southwest"}};
    return names;
}

// Airline text to carrier code: a known code, a known name ("United",
// "United Airlines"), or the text itself upper-cased.
inline std::string resolve_carrier(std::string_view text) {
    std::string t = strip_politeness(text);
    for (auto suffix : {"airlines", "airways", "air lines", "air"}) detail::strip_suffix(t, suffix);
    for (const auto& [code, name] : carrier_names())
        if (same_place(code, t) || same_place(name, t)) return code;
    std::string upper = t;
    for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return upper;
}

// Mean observed distance per unordered airport pair.
class DistanceTable {
public:
    struct Entry {
        double miles = 0;
        std::size_t count = 0;

        bool operator==(const Entry&) const = default;
    };

    static std::pair<int, int> key(int a, int b) { return {std::min(a, b), std::max(a, b)}; }

    void set(int a, int b, Entry e) { pairs_[key(a, b)] = e; }

    std::optional<double> lookup(int a, int b) const {
        auto it = pairs_.find(key(a, b));
        if (it == pairs_.end()) return std::nullopt;
        return it->second.miles;
    }

    const std::map<std::pair<int, int>, Entry>& pairs() const { return pairs_; }

    bool operator==(const DistanceTable&) const = default;

private:
    std::map<std::pair<int, int>, Entry> pairs_;
};

inline DistanceTable build_distance_table(const std::vector<FlightRecord>& records) {
    std::map<std::pair<int, int>, std::pair<long double, std::size_t>> sums;
    for (const auto& r : records) {
        auto& [sum, n] = sums[DistanceTable::key(r.origin_airport_id, r.dest_airport_id)];
        sum += r.distance;
        ++n;
    }
    DistanceTable t;
    for (const auto& [k, acc] : sums) t.set(k.first, k.second, {static_cast<double>(acc.first / acc.second), acc.second});
    return t;
}

inline nlohmann::json to_json(const DistanceTable& t) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [k, e] : t.pairs())
        arr.push_back({{"a", k.first}, {"b", k.second}, {"miles", e.miles}, {"count", e.count}});
    return {{"version", 1}, {"pairs", arr}};
}

inline DistanceTable distance_table_from_json(const nlohmann::json& j) {
    DistanceTable t;
    for (const auto& p : j.at("pairs"))
        t.set(p.at("a").get<int>(), p.at("b").get<int>(), {p.at("miles").get<double>(), p.at("count").get<std::size_t>()});
    return t;
}

struct ReferenceTables {
    AirportDirectory airports;
    DistanceTable distances;
};

inline constexpr const char* kAirportsFile = "airports.json";
inline constexpr const char* kDistancesFile = "distances.json";

// Missing files give empty tables; malformed ones are errors.
inline ReferenceTables load_reference_tables(const fs::path& dir) {
    ReferenceTables t;
    try {
        if (fs::exists(dir / kAirportsFile))
            t.airports = airport_directory_from_json(nlohmann::json::parse(read_text_file(dir / kAirportsFile)));
        if (fs::exists(dir / kDistancesFile))
            t.distances = distance_table_from_json(nlohmann::json::parse(read_text_file(dir / kDistancesFile)));
    } catch (const nlohmann::json::exception& e) {
        throw CorruptDocumentError(std::string("reference table: ") + e.what());
    }
    return t;
}

// ---------------------------------------------------------------------------
// Registry and prediction

class ModelRegistry {
public:
    void add(ModelFile file, std::string loaded_at = format_timestamp(now_utc())) {
        const auto t = file.type();
        loaded_at_[t] = std::move(loaded_at);
        models_.insert_or_assign(t, std::move(file));
    }

    // Loads every model document present in `dir`.
    static ModelRegistry load_dir(const fs::path& dir) {
        ModelRegistry r;
        for (auto t : all_model_types()) {
            const auto path = dir / model_filename(t);
            if (!fs::exists(path)) continue;
            auto file = load_model(path);
            if (file.type() != t) throw CorruptDocumentError(path.string() + " holds a " + model_type_name(file.type()) + " model");
            r.add(std::move(file));
        }
        return r;
    }

    bool has(ModelType t) const { return models_.count(t) > 0; }

    const ModelFile& get(ModelType t) const {
        auto it = models_.find(t);
        if (it == models_.end()) throw NotFoundError(std::string("model ") + model_type_name(t) + " is not loaded");
        return it->second;
    }

    std::vector<ModelType> types() const {
        std::vector<ModelType> out;
        for (const auto& [t, f] : models_) out.push_back(t);
        return out;
    }

    const std::string& loaded_at(ModelType t) const { return loaded_at_.at(t); }

private:
    std::map<ModelType, ModelFile> models_;
    std::map<ModelType, std::string> loaded_at_;
};

struct PredictRequest {
    std::string model;
    std::string origin;
    std::string destination;
    std::string airline;
    Date date;
    ClockTime time;
    std::optional<double> dep_delay;
    std::optional<double> distance;
    std::string flight_num;
};

inline PredictRequest predict_request_from_json(const nlohmann::json& j, const std::string& default_model) {
    if (!j.is_object()) throw ArgumentError("request body must be a JSON object");
    PredictRequest r;
    auto text = [&](const char* key, bool required) -> std::string {
        if (!j.contains(key) || j.at(key).is_null()) {
            if (required) throw ArgumentError(std::string("missing field ") + key);
            return {};
        }
        if (!j.at(key).is_string()) throw ArgumentError(std::string("field ") + key + " must be a string");
        return j.at(key).get<std::string>();
    };
    auto number = [&](const char* key) -> std::optional<double> {
        if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
        if (!j.at(key).is_number()) throw ArgumentError(std::string("field ") + key + " must be a number");
        const double v = j.at(key).get<double>();
        if (!std::isfinite(v)) throw ArgumentError(std::string("field ") + key + " must be finite");
        return v;
    };
    r.model = text("model", false);
    if (r.model.empty()) r.model = default_model;
    r.origin = text("origin", true);
    r.destination = text("destination", true);
    r.airline = text("airline", true);
    auto date = Date::parse_iso(text("date", true));
    if (!date) throw ArgumentError("date must be YYYY-MM-DD");
    auto time = ClockTime::parse(text("time", true));
    if (!time) throw ArgumentError("time must be HH:MM");
    r.date = *date;
    r.time = *time;
    r.dep_delay = number("dep_delay");
    r.distance = number("distance");
    if (r.distance && !(*r.distance > 0)) throw ArgumentError("distance must be positive");
    r.flight_num = text("flight_num", false);
    return r;
}

struct Prediction {
    ModelType model = ModelType::mlp;
    double minutes = 0;
    std::vector<std::string> provenance;

    bool delayed() const { return minutes > kDelayThresholdMinutes; }
};

inline nlohmann::json to_json(const Prediction& p) {
    return {{"model", model_type_name(p.model)},
            {"predicted_delay", p.minutes},
            {"delayed", p.delayed()},
            {"provenance", p.provenance}};
}

// Turns request text into model inputs and evaluates one registered model.
class Predictor {
public:
    Predictor(const ModelRegistry& registry, const ReferenceTables& tables) : registry_(registry), tables_(tables) {}

    Prediction predict(ModelType type, const PredictRequest& req) const {
        const ModelFile& file = registry_.get(type);
        std::vector<std::string> flags;

        const auto origin = tables_.airports.resolve(req.origin);
        const auto dest = tables_.airports.resolve(req.destination);
        if (!origin) flags.push_back("origin-unknown");
        if (!dest) flags.push_back("destination-unknown");
        const std::string carrier = resolve_carrier(req.airline);

        double distance = 0;
        if (req.distance) {
            distance = *req.distance;
            flags.push_back("distance-given");
        } else if (auto d = origin && dest ? tables_.distances.lookup(*origin, *dest) : std::nullopt) {
            distance = *d;
            flags.push_back("distance-table");
        } else {
            throw UnresolvableError("no distance known between " + req.origin + " and " + req.destination);
        }

        // Departure delay: given, else the historical average, else zero.
        std::optional<double> dep = req.dep_delay;
        DelayProvenance dep_source = DelayProvenance::measured;
        if (!dep) {
            const ImputationIndex* index = registry_.has(ModelType::carrier_origin)
                                               ? &std::get<CarrierOriginModel>(registry_.get(ModelType::carrier_origin).model).imputation
                                               : nullptr;
            std::optional<double> imputed;
            if (index && origin)
                imputed = impute_departure_delay(
                    *index, {*origin, carrier, req.date.month, req.time.hour / kImputationHourBucket});
            dep = imputed.value_or(0.0);
            dep_source = imputed ? DelayProvenance::imputed : DelayProvenance::assumed_zero;
        }
        flags.insert(flags.begin(), provenance_name(dep_source));

        Prediction p;
        p.model = type;
        switch (type) {
            case ModelType::carrier_origin: {
                const auto& m = std::get<CarrierOriginModel>(file.model);
                CarrierOriginQuery q{carrier, origin.value_or(0), *dep, distance, req.date.month, req.time.hhmm()};
                auto out = predict_carrier_origin(m, q);
                p.minutes = out.arr_delay;
                flags.push_back(std::string("route-") + route_name(out.route));
                break;
            }
            case ModelType::seasonal: {
                const auto& m = std::get<SeasonalModel>(file.model);
                p.minutes = predict_seasonal(m, req.date.month, *dep, distance);
                const auto s = season_of(req.date.month);
                flags.push_back(std::string("season-") + season_name(s));
                if (m.pooled[static_cast<std::size_t>(s)]) flags.push_back("season-pooled");
                break;
            }
            case ModelType::mlp: {
                const auto& m = std::get<MlpModel>(file.model);
                SelectedFeatures f;
                f.month = req.date.month;
                f.day_of_month = req.date.day;
                f.day_of_week = req.date.day_of_week();
                f.flight_num = req.flight_num;
                f.carrier = carrier;
                f.origin_airport_id = origin.value_or(0);
                f.dest_airport_id = dest.value_or(0);
                f.crs_dep_minutes = req.time.minutes_since_midnight();
                f.crs_arr_minutes = ClockTime::from_minutes(f.crs_dep_minutes + estimated_block_minutes(distance))
                                        .minutes_since_midnight();
                f.distance = distance;
                f.dep_delay = dep;
                p.minutes = m.predict(f);
                break;
            }
        }
        if (!std::isfinite(p.minutes)) throw Error("internal", "model produced a non-finite prediction");
        p.provenance = std::move(flags);
        return p;
    }

private:
    const ModelRegistry& registry_;
    const ReferenceTables& tables_;
};

// ---------------------------------------------------------------------------
// Service

struct ServiceOptions {
    fs::path data_dir = "data";
    fs::path models_dir;  // empty: <data_dir>/models
    std::string default_model = "mlp";
    std::chrono::minutes session_ttl{30};
    std::function<Timestamp()> clock = now_utc;

    // FLIGHTSTAT_DATA_DIR and FLIGHTSTAT_DEFAULT_MODEL override the defaults.
    static ServiceOptions from_environment() {
        ServiceOptions o;
        if (const char* d = std::getenv("FLIGHTSTAT_DATA_DIR"); d && *d) o.data_dir = d;
        if (const char* m = std::getenv("FLIGHTSTAT_DEFAULT_MODEL"); m && *m) o.default_model = m;
        return o;
    }
};

inline int port_from_environment(int fallback = 8080) {
    if (const char* p = std::getenv("FLIGHTSTAT_PORT"); p && *p) {
        char* end = nullptr;
        const long v = std::strtol(p, &end, 10);
        if (*end == '\0' && v > 0 && v < 65536) return static_cast<int>(v);
        throw ArgumentError(std::string("FLIGHTSTAT_PORT is not a valid port: ") + p);
    }
    return fallback;
}

// SO_REUSEADDR only: the library default adds SO_REUSEPORT, which lets a second
// server silently share a port that is already in use.
inline void exclusive_socket_options(int sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
}

inline int http_status_for(const std::string& kind) {
    if (kind == "argument" || kind == "schema" || kind == "encoding") return 400;
    if (kind == "not_found" || kind == "session_closed") return 404;
    if (kind == "conflict") return 409;
    if (kind == "unresolvable") return 422;
    return 500;
}

class FlightService {
public:
    explicit FlightService(ServiceOptions options)
        : options_(std::move(options)),
          registry_(ModelRegistry::load_dir(options_.models_dir.empty() ? options_.data_dir / "models" : options_.models_dir)),
          tables_(load_reference_tables(options_.data_dir)),
          predictor_(registry_, tables_),
          flights_(options_.data_dir / "flights.json"),
          events_(options_.data_dir / "events.ndjson", options_.clock) {
        if (!parse_model_type(options_.default_model))
            throw ArgumentError("unknown default model " + options_.default_model);
    }

    const ModelRegistry& registry() const { return registry_; }
    EventLog& events() { return events_; }
    FlightBook& flights() { return flights_; }

    void install(httplib::Server& server) {
        server.Post("/predict", [this](const httplib::Request& q, httplib::Response& r) { guarded(r, [&] { predict(q, r); }); });
        server.Post("/sessions", [this](const httplib::Request&, httplib::Response& r) { guarded(r, [&] { create_session(r); }); });
        server.Post(R"(/sessions/([^/]+)/utterance)",
                    [this](const httplib::Request& q, httplib::Response& r) { guarded(r, [&] { utterance(q, r); }); });
        server.Get(R"(/sessions/([^/]+))",
                   [this](const httplib::Request& q, httplib::Response& r) { guarded(r, [&] { get_session(q, r); }); });
        server.Get("/flights", [this](const httplib::Request&, httplib::Response& r) { guarded(r, [&] { list_flights(r); }); });
        server.Post("/flights", [this](const httplib::Request& q, httplib::Response& r) { guarded(r, [&] { add_flight(q, r); }); });
        server.Get(R"(/flights/([^/]+))",
                   [this](const httplib::Request& q, httplib::Response& r) { guarded(r, [&] { get_flight(q, r); }); });
        server.Delete(R"(/flights/([^/]+))",
                      [this](const httplib::Request& q, httplib::Response& r) { guarded(r, [&] { remove_flight(q, r); }); });
        server.Get("/analytics/summary",
                   [this](const httplib::Request& q, httplib::Response& r) { guarded(r, [&] { summary(q, r); }); });
        server.Get("/health", [this](const httplib::Request&, httplib::Response& r) { guarded(r, [&] { health(r); }); });
        const auto ui = options_.data_dir / "ui";
        if (fs::is_directory(ui)) server.set_mount_point("/ui", ui.string());
    }

    // Used by the dialog for conversational delay answers.
    DelayEstimate dialog_estimate(const UserFlight& f) const {
        PredictRequest req;
        req.model = options_.default_model;
        req.origin = f.origin;
        req.destination = f.destination;
        req.airline = f.airline;
        req.date = f.date;
        req.time = f.time;
        auto p = predictor_.predict(*parse_model_type(options_.default_model), req);
        return {p.minutes, model_type_name(p.model), p.provenance};
    }

private:
    struct SessionEntry {
        DialogSession session;
        Timestamp last_active;
        bool busy = false;
    };

    static std::string error_id() {
        static std::mutex mutex;
        static std::mt19937_64 rng{std::random_device{}()};
        std::lock_guard lock(mutex);
        char buf[24];
        std::snprintf(buf, sizeof buf, "e-%012llx", static_cast<unsigned long long>(rng() & 0xffffffffffffULL));
        return buf;
    }

    static void send(httplib::Response& r, int status, const nlohmann::json& body) {
        r.status = status;
        r.set_content(body.dump(), "application/json");
    }

    static void send_error(httplib::Response& r, int status, const std::string& message) {
        send(r, status, {{"error", message}, {"id", error_id()}});
    }

    template <class F>
    static void guarded(httplib::Response& r, F&& body) {
        try {
            body();
        } catch (const Error& e) {
            const int status = http_status_for(e.kind());
            if (status == 500) {
                const auto id = error_id();
                std::cerr << "internal error " << id << ": " << e.what() << "\n";
                send(r, 500, {{"error", "internal error"}, {"id", id}});
            } else {
                send_error(r, status, e.what());
            }
        } catch (const nlohmann::json::exception& e) {
            send_error(r, 400, std::string("malformed JSON: ") + e.what());
        } catch (const std::exception& e) {
            const auto id = error_id();
            std::cerr << "internal error " << id << ": " << e.what() << "\n";
            send(r, 500, {{"error", "internal error"}, {"id", id}});
        }
    }

    static nlohmann::json parse_body(const httplib::Request& q) {
        try {
            return nlohmann::json::parse(q.body);
        } catch (const nlohmann::json::parse_error& e) {
            throw ArgumentError(std::string("malformed JSON body: ") + e.what());
        }
    }

    void predict(const httplib::Request& q, httplib::Response& r) {
        const auto req = predict_request_from_json(parse_body(q), options_.default_model);
        std::vector<ModelType> types;
        if (req.model == "all") {
            for (auto t : all_model_types())
                if (!registry_.has(t)) throw NotFoundError(std::string("model ") + model_type_name(t) + " is not loaded");
            types.assign(all_model_types().begin(), all_model_types().end());
        } else {
            auto t = parse_model_type(req.model);
            if (!t || !registry_.has(*t)) throw NotFoundError("unknown model " + req.model);
            types.push_back(*t);
        }
        // Compute everything first so a failure appends nothing.
        std::vector<Prediction> predictions;
        for (auto t : types) predictions.push_back(predictor_.predict(t, req));
        nlohmann::json out = nlohmann::json::array();
        for (const auto& p : predictions) {
            PredictionEvent e;
            e.model = model_type_name(p.model);
            e.request = {req.origin, req.destination, req.airline, req.date.iso(), req.time.str()};
            e.predicted_delay = p.minutes;
            e.provenance = p.provenance;
            auto j = to_json(p);
            j["event_sequence"] = events_.append(std::move(e));
            out.push_back(std::move(j));
        }
        if (req.model == "all") send(r, 200, {{"predictions", out}});
        else send(r, 200, out[0]);
    }

    DialogContext dialog_context() {
        DialogContext ctx;
        ctx.flights = &flights_;
        ctx.clock = options_.clock;
        ctx.predict = [this](const UserFlight& f) { return dialog_estimate(f); };
        return ctx;
    }

    void expire_sessions_locked(Timestamp now) {
        for (auto it = sessions_.begin(); it != sessions_.end();) {
            if (!it->second->busy && now - it->second->last_active > options_.session_ttl) it = sessions_.erase(it);
            else ++it;
        }
    }

    static nlohmann::json session_view(const DialogSession& s, const std::string& text) {
        auto j = to_json(s);
        j["text"] = text;
        return j;
    }

    void create_session(httplib::Response& r) {
        auto entry = std::make_shared<SessionEntry>();
        entry->session = start_session();
        entry->last_active = options_.clock();
        const std::string greeting = entry->session.transcript.back().text;
        auto view = session_view(entry->session, greeting);
        {
            std::lock_guard lock(sessions_mutex_);
            expire_sessions_locked(entry->last_active);
            sessions_[entry->session.id] = entry;
        }
        send(r, 201, view);
    }

    std::shared_ptr<SessionEntry> find_session(const std::string& id) {
        std::lock_guard lock(sessions_mutex_);
        expire_sessions_locked(options_.clock());
        auto it = sessions_.find(id);
        if (it == sessions_.end()) throw NotFoundError("no session " + id);
        return it->second;
    }

    void utterance(const httplib::Request& q, httplib::Response& r) {
        const std::string id = q.matches[1];
        auto body = parse_body(q);
        if (!body.is_object() || !body.contains("text") || !body.at("text").is_string())
            throw ArgumentError("body must be {\"text\": string}");
        std::shared_ptr<SessionEntry> entry;
        {
            std::lock_guard lock(sessions_mutex_);
            expire_sessions_locked(options_.clock());
            auto it = sessions_.find(id);
            if (it == sessions_.end()) throw NotFoundError("no session " + id);
            entry = it->second;
            if (entry->busy) throw ConflictError("a turn is already in progress for session " + id);
            entry->busy = true;
        }
        struct Release {
            FlightService* self;
            std::shared_ptr<SessionEntry> e;
            ~Release() {
                std::lock_guard lock(self->sessions_mutex_);
                e->busy = false;
                e->last_active = self->options_.clock();
            }
        } release{this, entry};

        const auto ctx = dialog_context();
        auto result = handle_utterance(entry->session, body.at("text").get<std::string>(), ctx);
        auto view = session_view(entry->session, result.text);
        if (result.event) view["event_sequence"] = events_.append(std::move(*result.event));
        if (result.error) view["error_kind"] = *result.error;
        send(r, 200, view);
    }

    void get_session(const httplib::Request& q, httplib::Response& r) {
        auto entry = find_session(q.matches[1]);
        std::lock_guard lock(sessions_mutex_);
        if (entry->busy) throw ConflictError("a turn is in progress for session " + entry->session.id);
        send(r, 200, session_view(entry->session, entry->session.transcript.back().text));
    }

    void list_flights(httplib::Response& r) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& f : flights_.list()) arr.push_back(to_json(f));
        send(r, 200, {{"flights", arr}});
    }

    void add_flight(const httplib::Request& q, httplib::Response& r) {
        auto f = user_flight_from_json(parse_body(q));
        f.id = flights_.add(f);
        send(r, 201, {{"id", f.id}, {"flight", to_json(f)}});
    }

    void get_flight(const httplib::Request& q, httplib::Response& r) {
        auto f = flights_.get(q.matches[1]);
        if (!f) throw NotFoundError("no flight with id " + std::string(q.matches[1]));
        send(r, 200, to_json(*f));
    }

    void remove_flight(const httplib::Request& q, httplib::Response& r) {
        flights_.remove(q.matches[1]);
        r.status = 204;
    }

    static std::optional<std::uint64_t> sequence_param(const httplib::Request& q, const char* name) {
        if (!q.has_param(name)) return std::nullopt;
        const auto v = q.get_param_value(name);
        if (v.empty() || v.size() > 18 || !std::all_of(v.begin(), v.end(), [](char c) { return c >= '0' && c <= '9'; }))
            throw ArgumentError(std::string(name) + " must be a non-negative integer");
        return std::stoull(v);
    }

    void summary(const httplib::Request& q, httplib::Response& r) {
        EventWindow w;
        for (const char* key : {"from", "to"}) {
            if (!q.has_param(key)) continue;
            auto t = parse_timestamp(q.get_param_value(key));
            if (!t) throw ArgumentError(std::string(key) + " must be an ISO-8601 UTC timestamp");
            (std::string(key) == "from" ? w.from : w.to) = *t;
        }
        w.first_sequence = sequence_param(q, "from_seq");
        w.last_sequence = sequence_param(q, "to_seq");
        if (w.from && w.to && *w.to < *w.from) throw ArgumentError("to precedes from");
        auto j = to_json(events_.aggregate(w));
        j["window"] = {{"from", w.from ? nlohmann::json(format_timestamp(*w.from)) : nlohmann::json()},
                       {"to", w.to ? nlohmann::json(format_timestamp(*w.to)) : nlohmann::json()}};
        send(r, 200, j);
    }

    void health(httplib::Response& r) {
        nlohmann::json models = nlohmann::json::object();
        for (auto t : registry_.types()) models[model_type_name(t)] = {{"loaded_at", registry_.loaded_at(t)}};
        std::error_code ec;
        const bool reachable = fs::is_directory(options_.data_dir, ec);
        send(r, reachable ? 200 : 503,
             {{"status", reachable ? "ok" : "degraded"},
              {"models", models},
              {"default_model", options_.default_model},
              {"store", {{"data_dir", options_.data_dir.string()}, {"reachable", reachable}}}});
    }

    ServiceOptions options_;
    ModelRegistry registry_;
    ReferenceTables tables_;
    Predictor predictor_;
    FlightBook flights_;
    EventLog events_;
    std::mutex sessions_mutex_;
    std::map<std::string, std::shared_ptr<SessionEntry>> sessions_;
};

}  // namespace flightstat
