#pragma once

// Persistence under one directory: model documents, the user's flight list
// and the append-only prediction event log.

#include <algorithm>
#include <array>
#include <atomic>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "json.hpp"

#include "flightstat/calendar.hpp"
#include "flightstat/carrier_origin.hpp"
#include "flightstat/errors.hpp"
#include "flightstat/features.hpp"
#include "flightstat/mlp.hpp"
#include "flightstat/numerics.hpp"
#include "flightstat/seasonal.hpp"

namespace flightstat {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Files

inline std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failed for " + path.string());
    return ss.str();
}

// Write to a sibling temporary file, then rename over the target.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
    static std::atomic<unsigned> counter{0};
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
    }
    fs::path tmp = path;
    tmp += ".tmp" + std::to_string(counter++);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot replace " + path.string());
    }
}

// ---------------------------------------------------------------------------
// Model documents

inline constexpr int kModelSchemaVersion = 1;

enum class ModelType { carrier_origin, seasonal, mlp };

inline const char* model_type_name(ModelType t) {
    switch (t) {
        case ModelType::carrier_origin: return "carrier_origin";
        case ModelType::seasonal: return "seasonal";
        case ModelType::mlp: return "mlp";
    }
    return "?";
}

inline std::optional<ModelType> parse_model_type(std::string_view s) {
    if (s == "carrier_origin" || s == "carrier-origin") return ModelType::carrier_origin;
    if (s == "seasonal") return ModelType::seasonal;
    if (s == "mlp") return ModelType::mlp;
    return std::nullopt;
}

inline const std::array<ModelType, 3>& all_model_types() {
    static const std::array<ModelType, 3> types = {ModelType::carrier_origin, ModelType::seasonal, ModelType::mlp};
    return types;
}

inline std::string model_filename(ModelType t) { return std::string(model_type_name(t)) + ".json"; }

struct ModelMetadata {
    std::size_t record_count = 0;
    std::string trained_at;  // ISO-8601 UTC
    nlohmann::json config = nlohmann::json::object();

    bool operator==(const ModelMetadata&) const = default;
};

using AnyModel = std::variant<CarrierOriginModel, SeasonalModel, MlpModel>;

struct ModelFile {
    int schema_version = kModelSchemaVersion;
    AnyModel model;
    ModelMetadata metadata;

    ModelType type() const { return static_cast<ModelType>(model.index()); }

    bool operator==(const ModelFile&) const = default;
};

namespace detail {

inline nlohmann::json linear_to_json(const LinearModel& m) {
    return {{"coefficients", m.coefficients},
            {"intercept", m.intercept ? nlohmann::json(*m.intercept) : nlohmann::json(nullptr)},
            {"feature_names", m.feature_names}};
}

inline LinearModel linear_from_json(const nlohmann::json& j) {
    LinearModel m;
    m.coefficients = j.at("coefficients").get<std::vector<double>>();
    if (!j.at("intercept").is_null()) m.intercept = j.at("intercept").get<double>();
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    return m;
}

inline nlohmann::json linear_encoders() {
    return {{"features", carrier_origin_features()}, {"standardized", false}};
}

inline nlohmann::json parameters_of(const CarrierOriginModel& m) {
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& [key, lm] : m.groups)
        groups.push_back({{"carrier", key.first},
                          {"origin_airport_id", key.second},
                          {"count", m.group_counts.at(key)},
                          {"model", linear_to_json(lm)}});
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [key, e] : m.imputation.entries)
        entries.push_back({{"origin_airport_id", key.origin_airport_id},
                           {"carrier", key.carrier},
                           {"month", key.month},
                           {"hour_bucket", key.hour_bucket},
                           {"mean_dep_delay", e.mean_dep_delay},
                           {"support", e.support}});
    return {{"groups", groups},
            {"fallback", linear_to_json(m.fallback)},
            {"min_group_size", m.min_group_size},
            {"training_count", m.training_count},
            {"imputation", {{"support_threshold", m.imputation.support_threshold}, {"entries", entries}}}};
}

inline CarrierOriginModel carrier_origin_from_parameters(const nlohmann::json& p) {
    CarrierOriginModel m;
    m.min_group_size = p.at("min_group_size").get<std::size_t>();
    m.training_count = p.at("training_count").get<std::size_t>();
    m.fallback = linear_from_json(p.at("fallback"));
    for (const auto& g : p.at("groups")) {
        CarrierOriginKey key{g.at("carrier").get<std::string>(), g.at("origin_airport_id").get<int>()};
        m.groups.emplace(key, linear_from_json(g.at("model")));
        m.group_counts.emplace(key, g.at("count").get<std::size_t>());
    }
    const auto& imp = p.at("imputation");
    m.imputation.support_threshold = imp.at("support_threshold").get<std::size_t>();
    for (const auto& e : imp.at("entries"))
        m.imputation.entries.emplace(
            ImputationKey{e.at("origin_airport_id").get<int>(), e.at("carrier").get<std::string>(),
                          e.at("month").get<int>(), e.at("hour_bucket").get<int>()},
            ImputationEntry{e.at("mean_dep_delay").get<double>(), e.at("support").get<std::size_t>()});
    return m;
}

inline nlohmann::json parameters_of(const SeasonalModel& m) {
    nlohmann::json seasons = nlohmann::json::object();
    for (std::size_t s = 0; s < 4; ++s)
        seasons[season_name(static_cast<Season>(s))] = {
            {"model", linear_to_json(m.seasons[s])}, {"count", m.counts[s]}, {"pooled", m.pooled[s]}};
    return {{"seasons", seasons}};
}

inline SeasonalModel seasonal_from_parameters(const nlohmann::json& p) {
    SeasonalModel m;
    for (std::size_t s = 0; s < 4; ++s) {
        const auto& js = p.at("seasons").at(season_name(static_cast<Season>(s)));
        m.seasons[s] = linear_from_json(js.at("model"));
        m.counts[s] = js.at("count").get<std::size_t>();
        m.pooled[s] = js.at("pooled").get<bool>();
    }
    return m;
}

inline nlohmann::json parameters_of(const MlpModel& m) {
    return {{"network", to_json(m.network)},
            {"input_names", m.input_names},
            {"target_mean", m.target_mean},
            {"target_sd", m.target_sd}};
}

}  // namespace detail

inline nlohmann::json to_json(const ModelFile& f) {
    nlohmann::json encoders;
    nlohmann::json parameters;
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, MlpModel>) {
                encoders = {{"spec", to_json(m.encoder)},
                            {"standardization", m.standardization ? to_json(*m.standardization) : nlohmann::json()}};
            } else {
                encoders = detail::linear_encoders();
            }
            parameters = detail::parameters_of(m);
        },
        f.model);
    return {{"schema_version", f.schema_version},
            {"model_type", model_type_name(f.type())},
            {"encoders", encoders},
            {"parameters", parameters},
            {"metadata",
             {{"record_count", f.metadata.record_count},
              {"trained_at", f.metadata.trained_at},
              {"config", f.metadata.config}}}};
}

// Validates the version, the structure and the owning model's invariants.
inline ModelFile model_file_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("schema_version")) throw CorruptDocumentError("missing schema_version");
    if (!j.at("schema_version").is_number_integer() || j.at("schema_version").get<int>() != kModelSchemaVersion)
        throw UnknownVersionError("unsupported model schema version " + j.at("schema_version").dump());
    ModelFile f;
    try {
        const auto type = parse_model_type(j.at("model_type").get<std::string>());
        if (!type) throw CorruptDocumentError("unknown model_type " + j.at("model_type").dump());
        const auto& p = j.at("parameters");
        switch (*type) {
            case ModelType::carrier_origin: {
                auto m = detail::carrier_origin_from_parameters(p);
                m.validate();
                f.model = std::move(m);
                break;
            }
            case ModelType::seasonal: {
                auto m = detail::seasonal_from_parameters(p);
                m.validate();
                f.model = std::move(m);
                break;
            }
            case ModelType::mlp: {
                MlpModel m;
                m.network = mlp_network_from_json(p.at("network"));
                m.input_names = p.at("input_names").get<std::vector<std::string>>();
                m.target_mean = p.at("target_mean").get<double>();
                m.target_sd = p.at("target_sd").get<double>();
                const auto& enc = j.at("encoders");
                m.encoder = encoder_spec_from_json(enc.at("spec"));
                if (!enc.at("standardization").is_null())
                    m.standardization = standardization_from_json(enc.at("standardization"));
                if (m.encoder.column_names() != m.input_names)
                    throw CorruptDocumentError("encoder columns do not match network inputs");
                m.validate();
                f.model = std::move(m);
                break;
            }
        }
        const auto& meta = j.at("metadata");
        f.metadata.record_count = meta.at("record_count").get<std::size_t>();
        f.metadata.trained_at = meta.at("trained_at").get<std::string>();
        f.metadata.config = meta.at("config");
    } catch (const nlohmann::json::exception& e) {
        throw CorruptDocumentError(std::string("malformed model document: ") + e.what());
    } catch (const ArgumentError& e) {
        throw CorruptDocumentError(std::string("model invariant violated: ") + e.what());
    }
    return f;
}

inline void save_model(const ModelFile& f, const fs::path& path) { write_file_atomic(path, to_json(f).dump(1) + "\n"); }

inline ModelFile load_model(const fs::path& path) {
    const auto text = read_text_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw CorruptDocumentError(path.string() + ": " + e.what());
    }
    return model_file_from_json(j);
}

// ---------------------------------------------------------------------------
// Flight list

struct UserFlight {
    std::string id;
    std::string origin;
    std::string destination;
    std::string airline;
    Date date;
    ClockTime time;

    bool operator==(const UserFlight&) const = default;
};

inline nlohmann::json to_json(const UserFlight& f) {
    return {{"id", f.id},           {"origin", f.origin},     {"destination", f.destination},
            {"airline", f.airline}, {"date", f.date.iso()}, {"time", f.time.str()}};
}

// Parses a flight body; the id is optional (absent on creation requests).
inline UserFlight user_flight_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ArgumentError("flight must be an object");
    UserFlight f;
    auto text = [&](const char* key) -> std::string {
        if (!j.contains(key) || !j.at(key).is_string()) throw ArgumentError(std::string("missing field ") + key);
        return j.at(key).get<std::string>();
    };
    if (j.contains("id")) f.id = text("id");
    f.origin = text("origin");
    f.destination = text("destination");
    f.airline = text("airline");
    auto date = Date::parse_iso(text("date"));
    if (!date) throw ArgumentError("date must be YYYY-MM-DD");
    auto time = ClockTime::parse(text("time"));
    if (!time) throw ArgumentError("time must be HH:MM");
    f.date = *date;
    f.time = *time;
    return f;
}

inline void validate_flight(const UserFlight& f) {
    auto blank = [](const std::string& s) { return s.find_first_not_of(" \t\r\n") == std::string::npos; };
    if (blank(f.origin) || blank(f.destination) || blank(f.airline))
        throw ArgumentError("origin, destination and airline must be non-empty");
    if (!f.date.valid()) throw ArgumentError("invalid date");
    if (f.time.hour < 0 || f.time.hour > 23 || f.time.minute < 0 || f.time.minute > 59)
        throw ArgumentError("invalid time");
}

inline bool flight_order(const UserFlight& a, const UserFlight& b) {
    return std::tie(a.date, a.time, a.id) < std::tie(b.date, b.time, b.id);
}

struct FlightQuery {
    std::optional<std::string> origin;  // case-insensitive match
    std::optional<Date> date;
    std::optional<ClockTime> time;
    // Keep only the earliest flight at or after `now`.
    bool next_upcoming = false;
};

inline bool same_place(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(static_cast<unsigned char>(b[i])))
            return false;
    return true;
}

// Filters an already sorted list.
inline std::vector<UserFlight> find_flights(const std::vector<UserFlight>& sorted, const FlightQuery& q,
                                            Date today, ClockTime now) {
    std::vector<UserFlight> out;
    for (const auto& f : sorted) {
        if (q.origin && !same_place(f.origin, *q.origin)) continue;
        if (q.date && f.date != *q.date) continue;
        if (q.time && f.time != *q.time) continue;
        if (q.next_upcoming && std::tie(f.date, f.time) < std::tie(today, now)) continue;
        out.push_back(f);
        if (q.next_upcoming) break;
    }
    return out;
}

// The flight list document (flights.json), rewritten atomically on every change.
class FlightBook {
public:
    explicit FlightBook(fs::path path) : path_(std::move(path)) {
        if (!fs::exists(path_)) return;
        try {
            auto j = nlohmann::json::parse(read_text_file(path_));
            if (j.at("version").get<int>() != 1) throw UnknownVersionError("unknown flight list version");
            next_id_ = j.at("next_id").get<std::uint64_t>();
            for (const auto& jf : j.at("flights")) {
                auto f = user_flight_from_json(jf);
                validate_flight(f);
                flights_.push_back(std::move(f));
            }
        } catch (const nlohmann::json::exception& e) {
            throw CorruptDocumentError(path_.string() + ": " + e.what());
        } catch (const ArgumentError& e) {
            throw CorruptDocumentError(path_.string() + ": " + e.what());
        }
        std::sort(flights_.begin(), flights_.end(), flight_order);
    }

    std::string add(UserFlight f) {
        validate_flight(f);
        std::lock_guard lock(mutex_);
        auto next = flights_;
        f.id = "fl-" + std::to_string(next_id_);
        next.insert(std::upper_bound(next.begin(), next.end(), f, flight_order), f);
        persist(next, next_id_ + 1);
        flights_ = std::move(next);
        ++next_id_;
        return f.id;
    }

    void remove(const std::string& id) {
        std::lock_guard lock(mutex_);
        auto it = std::find_if(flights_.begin(), flights_.end(), [&](const UserFlight& f) { return f.id == id; });
        if (it == flights_.end()) throw NotFoundError("no flight with id " + id);
        auto next = flights_;
        next.erase(next.begin() + (it - flights_.begin()));
        persist(next, next_id_);
        flights_ = std::move(next);
    }

    std::vector<UserFlight> list() const {
        std::lock_guard lock(mutex_);
        return flights_;
    }

    std::optional<UserFlight> get(const std::string& id) const {
        std::lock_guard lock(mutex_);
        for (const auto& f : flights_)
            if (f.id == id) return f;
        return std::nullopt;
    }

    std::vector<UserFlight> find(const FlightQuery& q, Date today, ClockTime now) const {
        return find_flights(list(), q, today, now);
    }

    const fs::path& path() const { return path_; }

private:
    void persist(const std::vector<UserFlight>& flights, std::uint64_t next_id) const {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& f : flights) arr.push_back(to_json(f));
        write_file_atomic(path_, nlohmann::json{{"version", 1}, {"next_id", next_id}, {"flights", arr}}.dump(1) + "\n");
    }

    fs::path path_;
    mutable std::mutex mutex_;
    std::vector<UserFlight> flights_;
    std::uint64_t next_id_ = 1;
};

// ---------------------------------------------------------------------------
// Prediction event log

struct RequestSummary {
    std::string origin;
    std::string destination;
    std::string airline;
    std::string date;
    std::string time;

    bool operator==(const RequestSummary&) const = default;
};

struct PredictionEvent {
    std::uint64_t sequence = 0;
    Timestamp timestamp{};
    std::string model;
    RequestSummary request;
    double predicted_delay = 0;
    std::vector<std::string> provenance;

    bool operator==(const PredictionEvent&) const = default;
};

inline nlohmann::json to_json(const PredictionEvent& e) {
    return {{"seq", e.sequence},
            {"timestamp", format_timestamp(e.timestamp)},
            {"model", e.model},
            {"request",
             {{"origin", e.request.origin},
              {"destination", e.request.destination},
              {"airline", e.request.airline},
              {"date", e.request.date},
              {"time", e.request.time}}},
            {"predicted_delay", e.predicted_delay},
            {"provenance", e.provenance}};
}

inline PredictionEvent prediction_event_from_json(const nlohmann::json& j) {
    PredictionEvent e;
    e.sequence = j.at("seq").get<std::uint64_t>();
    auto ts = parse_timestamp(j.at("timestamp").get<std::string>());
    if (!ts) throw CorruptDocumentError("bad event timestamp");
    e.timestamp = *ts;
    e.model = j.at("model").get<std::string>();
    const auto& r = j.at("request");
    e.request = {r.at("origin").get<std::string>(), r.at("destination").get<std::string>(),
                 r.at("airline").get<std::string>(), r.at("date").get<std::string>(), r.at("time").get<std::string>()};
    e.predicted_delay = j.at("predicted_delay").get<double>();
    e.provenance = j.at("provenance").get<std::vector<std::string>>();
    return e;
}

// Sequence bounds are inclusive; the time window is [from, to).
struct EventWindow {
    std::optional<std::uint64_t> first_sequence;
    std::optional<std::uint64_t> last_sequence;
    std::optional<Timestamp> from;
    std::optional<Timestamp> to;

    bool contains(const PredictionEvent& e) const {
        if (first_sequence && e.sequence < *first_sequence) return false;
        if (last_sequence && e.sequence > *last_sequence) return false;
        if (from && e.timestamp < *from) return false;
        if (to && e.timestamp >= *to) return false;
        return true;
    }
};

struct EventSummary {
    std::size_t count = 0;
    std::map<std::string, std::size_t> per_model;
    std::optional<double> mean_predicted_delay;
    std::optional<double> delayed_share;  // predictions > 15 minutes

    bool operator==(const EventSummary&) const = default;
};

inline EventSummary aggregate_events(const std::vector<PredictionEvent>& events, const EventWindow& window = {}) {
    EventSummary s;
    for (auto t : all_model_types()) s.per_model[model_type_name(t)] = 0;
    long double sum = 0;
    std::size_t delayed = 0;
    for (const auto& e : events) {
        if (!window.contains(e)) continue;
        ++s.count;
        ++s.per_model[e.model];
        sum += e.predicted_delay;
        if (e.predicted_delay > kDelayThresholdMinutes) ++delayed;
    }
    if (s.count > 0) {
        s.mean_predicted_delay = static_cast<double>(sum / s.count);
        s.delayed_share = static_cast<double>(delayed) / static_cast<double>(s.count);
    }
    return s;
}

inline nlohmann::json to_json(const EventSummary& s) {
    return {{"count", s.count},
            {"per_model", s.per_model},
            {"mean_predicted_delay", s.mean_predicted_delay ? nlohmann::json(*s.mean_predicted_delay) : nlohmann::json()},
            {"delayed_share", s.delayed_share ? nlohmann::json(*s.delayed_share) : nlohmann::json()}};
}

// Newline-delimited JSON, one event per line. A trailing partial line (torn
// write) is ignored on read and cut off before the next append.
class EventLog {
public:
    using Clock = std::function<Timestamp()>;

    explicit EventLog(fs::path path, Clock clock = now_utc) : path_(std::move(path)), clock_(std::move(clock)) {
        if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
        std::lock_guard lock(mutex_);
        repair_locked();
    }

    // Stamps sequence and timestamp, writes the line, returns the sequence number.
    std::uint64_t append(PredictionEvent e) {
        std::lock_guard lock(mutex_);
        e.sequence = next_sequence_;
        e.timestamp = clock_();
        const std::string line = to_json(e).dump() + "\n";
        std::ofstream out(path_, std::ios::binary | std::ios::app);
        if (!out) throw IoError("cannot open event log " + path_.string());
        out.write(line.data(), static_cast<std::streamsize>(line.size()));
        out.flush();
        if (!out) {
            out.close();
            repair_locked();
            throw IoError("event append failed for " + path_.string());
        }
        return next_sequence_++;
    }

    std::vector<PredictionEvent> read_all() const {
        std::lock_guard lock(mutex_);
        return read_events(path_).events;
    }

    EventSummary aggregate(const EventWindow& window = {}) const { return aggregate_events(read_all(), window); }

    std::uint64_t next_sequence() const {
        std::lock_guard lock(mutex_);
        return next_sequence_;
    }

    const fs::path& path() const { return path_; }

    struct ReadResult {
        std::vector<PredictionEvent> events;
        std::size_t good_bytes = 0;  // length of the prefix made of complete, valid lines
        bool torn_tail = false;
    };

    // Only the final line may be damaged; anything earlier is corruption.
    static ReadResult read_events(const fs::path& path) {
        ReadResult r;
        if (!fs::exists(path)) return r;
        const std::string text = read_text_file(path);
        std::size_t at = 0;
        while (at < text.size()) {
            const auto nl = text.find('\n', at);
            const bool complete = nl != std::string::npos;
            const std::string_view line(text.data() + at, (complete ? nl : text.size()) - at);
            std::optional<PredictionEvent> e;
            try {
                e = prediction_event_from_json(nlohmann::json::parse(line));
            } catch (const std::exception&) {
            }
            const bool last = !complete || nl + 1 == text.size();
            if (!e || !complete) {
                if (!last) throw CorruptDocumentError(path.string() + ": unreadable event at byte " + std::to_string(at));
                r.torn_tail = true;
                break;
            }
            r.events.push_back(std::move(*e));
            at = nl + 1;
            r.good_bytes = at;
        }
        return r;
    }

private:
    void repair_locked() {
        auto r = read_events(path_);
        if (r.torn_tail) fs::resize_file(path_, r.good_bytes);
        next_sequence_ = r.events.empty() ? 1 : r.events.back().sequence + 1;
    }

    fs::path path_;
    Clock clock_;
    mutable std::mutex mutex_;
    std::uint64_t next_sequence_ = 1;
};

}  // namespace flightstat
