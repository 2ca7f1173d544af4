#include <gtest/gtest.h>

#include <cstring>
#include <random>

#include "flightstat/store.hpp"

using namespace flightstat;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int n = 0;
        path = fs::temp_directory_path() / ("flightstat_store_" + std::to_string(::getpid()) + "_" + std::to_string(n++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

const std::vector<FlightRecord>& training_records() {
    static const auto records = [] {
        SyntheticConfig cfg = benchmark_config(3000);
        cfg.carrier_count = 3;
        cfg.airport_count = 6;
        return usable_records(generate_synthetic(cfg, 42));
    }();
    return records;
}

MlpModel small_mlp() {
    const auto& records = training_records();
    auto spec = fit_encoders(records);
    auto data = encode(records, spec, true);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 64;
    cfg.hidden_sizes = {8, 4};
    return train_mlp(data, cfg).model;
}

SelectedFeatures random_features(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> month(1, 12), dom(1, 28), dow(1, 7), airport(0, 9), minute(0, 1439);
    std::uniform_real_distribution<double> dist(50, 2500), dep(-20, 120);
    const auto& carriers = synthetic_carriers();
    SelectedFeatures f;
    f.month = month(rng);
    f.day_of_month = dom(rng);
    f.day_of_week = dow(rng);
    f.flight_num = std::to_string(minute(rng));
    f.carrier = carriers[static_cast<std::size_t>(airport(rng)) % carriers.size()];
    f.origin_airport_id = 11000 + airport(rng);
    f.dest_airport_id = 11000 + airport(rng);
    f.crs_dep_minutes = minute(rng);
    f.crs_arr_minutes = minute(rng);
    f.distance = dist(rng);
    f.dep_delay = dep(rng);
    return f;
}

template <class Predict>
void expect_bit_identical(Predict before, Predict after) {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 100; ++i) {
        auto f = random_features(rng);
        const double a = before(f), b = after(f);
        EXPECT_EQ(std::memcmp(&a, &b, sizeof a), 0) << "input " << i;
    }
}

PredictionEvent event(const std::string& model, double delay) {
    PredictionEvent e;
    e.model = model;
    e.request = {"Boston", "Chicago", "AA", "2026-11-02", "17:00"};
    e.predicted_delay = delay;
    e.provenance = {"measured-delay"};
    return e;
}

struct SteppingClock {
    Timestamp t = *parse_timestamp("2026-10-18T12:00:00Z");
    Timestamp operator()() { return t += std::chrono::seconds(1); }
};

UserFlight flight(const std::string& origin, const std::string& date, const std::string& time) {
    return {"", origin, "Denver", "United", *Date::parse_iso(date), *ClockTime::parse(time)};
}

}  // namespace

TEST(Timestamps, FormatAndParseRoundTrip) {
    auto t = parse_timestamp("2026-10-18T09:05:07.042Z");
    ASSERT_TRUE(t);
    EXPECT_EQ(format_timestamp(*t), "2026-10-18T09:05:07.042Z");
    EXPECT_EQ(parse_timestamp("2026-10-18"), parse_timestamp("2026-10-18T00:00:00.000Z"));
    EXPECT_EQ(*parse_timestamp("1970-01-01T00:00:01Z"), Timestamp{std::chrono::milliseconds{1000}});
    EXPECT_FALSE(parse_timestamp("2026-13-01"));
    EXPECT_FALSE(parse_timestamp("2026-10-18T25:00"));
    EXPECT_FALSE(parse_timestamp("yesterday"));
}

TEST(ModelFiles, CarrierOriginRoundTripIsBitExact) {
    TempDir dir;
    ModelFile file{kModelSchemaVersion, train_carrier_origin(training_records()), {2000, "2026-10-18T00:00:00.000Z", {{"seed", 42}}}};
    save_model(file, dir.path / "co.json");
    auto back = load_model(dir.path / "co.json");
    EXPECT_EQ(back, file);
    EXPECT_EQ(back.type(), ModelType::carrier_origin);
    const auto& m0 = std::get<CarrierOriginModel>(file.model);
    const auto& m1 = std::get<CarrierOriginModel>(back.model);
    EXPECT_FALSE(m0.groups.empty());
    auto predict = [](const CarrierOriginModel& m) {
        return [&m](const SelectedFeatures& f) {
            return predict_carrier_origin(m, CarrierOriginQuery{f.carrier, f.origin_airport_id, std::nullopt,
                                                                f.distance, f.month, f.crs_dep_minutes / 60 * 100})
                .arr_delay;
        };
    };
    expect_bit_identical(std::function<double(const SelectedFeatures&)>(predict(m0)),
                         std::function<double(const SelectedFeatures&)>(predict(m1)));
}

TEST(ModelFiles, SeasonalRoundTripIsBitExact) {
    TempDir dir;
    ModelFile file{kModelSchemaVersion, train_seasonal(training_records()), {}};
    save_model(file, dir.path / "s.json");
    auto back = load_model(dir.path / "s.json");
    EXPECT_EQ(back, file);
    const auto& m0 = std::get<SeasonalModel>(file.model);
    const auto& m1 = std::get<SeasonalModel>(back.model);
    using P = std::function<double(const SelectedFeatures&)>;
    expect_bit_identical(P([&](const SelectedFeatures& f) { return predict_seasonal(m0, f.month, *f.dep_delay, f.distance); }),
                         P([&](const SelectedFeatures& f) { return predict_seasonal(m1, f.month, *f.dep_delay, f.distance); }));
}

TEST(ModelFiles, MlpRoundTripIsBitExact) {
    TempDir dir;
    ModelFile file{kModelSchemaVersion, small_mlp(), {}};
    save_model(file, dir.path / "mlp.json");
    auto back = load_model(dir.path / "mlp.json");
    EXPECT_EQ(back, file);
    const auto& m0 = std::get<MlpModel>(file.model);
    const auto& m1 = std::get<MlpModel>(back.model);
    using P = std::function<double(const SelectedFeatures&)>;
    expect_bit_identical(P([&](const SelectedFeatures& f) { return m0.predict(f); }),
                         P([&](const SelectedFeatures& f) { return m1.predict(f); }));
}

TEST(ModelFiles, AwkwardDoublesSurviveExactly) {
    SeasonalModel m = train_seasonal(training_records());
    m.seasons[0].coefficients = {0.1 + 0.2, -0.0};
    m.seasons[0].intercept = 5e-324;
    m.seasons[1].coefficients = {1.7976931348623157e308, 2.2250738585072014e-308};
    ModelFile file{kModelSchemaVersion, m, {}};
    auto back = model_file_from_json(nlohmann::json::parse(to_json(file).dump()));
    const auto& b = std::get<SeasonalModel>(back.model);
    EXPECT_EQ(b.seasons[0].coefficients[0], 0.1 + 0.2);
    EXPECT_TRUE(std::signbit(b.seasons[0].coefficients[1]));
    EXPECT_EQ(*b.seasons[0].intercept, 5e-324);
    EXPECT_EQ(b.seasons[1].coefficients, m.seasons[1].coefficients);
}

TEST(ModelFiles, GuardsOnLoad) {
    TempDir dir;
    ModelFile file{kModelSchemaVersion, train_seasonal(training_records()), {}};
    auto j = to_json(file);

    auto v999 = j;
    v999["schema_version"] = 999;
    EXPECT_THROW(model_file_from_json(v999), UnknownVersionError);

    auto bad_type = j;
    bad_type["model_type"] = "lstm";
    EXPECT_THROW(model_file_from_json(bad_type), CorruptDocumentError);

    auto broken = j;
    broken["parameters"]["seasons"]["winter"]["model"]["coefficients"] = {1.0};
    EXPECT_THROW(model_file_from_json(broken), CorruptDocumentError);

    auto missing = j;
    missing["parameters"].erase("seasons");
    EXPECT_THROW(model_file_from_json(missing), CorruptDocumentError);

    std::ofstream(dir.path / "garbage.json") << "{\"schema_version\": 1, \"model_ty";
    EXPECT_THROW(load_model(dir.path / "garbage.json"), CorruptDocumentError);
    EXPECT_THROW(load_model(dir.path / "absent.json"), IoError);
}

TEST(ModelFiles, MlpEncoderMismatchRejected) {
    ModelFile file{kModelSchemaVersion, small_mlp(), {}};
    auto j = to_json(file);
    j["parameters"]["input_names"][0] = "something_else";
    EXPECT_THROW(model_file_from_json(j), CorruptDocumentError);
}

TEST(FlightBook, AddListRemove) {
    TempDir dir;
    FlightBook book(dir.path / "flights.json");
    auto a = book.add(flight("Boston", "2026-11-02", "17:00"));
    EXPECT_EQ(book.list().size(), 1u);
    auto b = book.add(flight("Chicago", "2026-11-01", "08:00"));
    EXPECT_NE(a, b);
    book.remove(a);
    auto list = book.list();
    ASSERT_EQ(list.size(), 1u);
    EXPECT_EQ(list[0].id, b);
    EXPECT_THROW(book.remove(a), NotFoundError);
    EXPECT_THROW(book.remove("nope"), NotFoundError);
}

TEST(FlightBook, RejectsBlankAttributes) {
    TempDir dir;
    FlightBook book(dir.path / "flights.json");
    EXPECT_THROW(book.add(flight("  ", "2026-11-02", "17:00")), ArgumentError);
    auto f = flight("Boston", "2026-11-02", "17:00");
    f.airline = "";
    EXPECT_THROW(book.add(f), ArgumentError);
    EXPECT_TRUE(book.list().empty());
    EXPECT_FALSE(fs::exists(dir.path / "flights.json"));
}

TEST(FlightBook, AlwaysSortedAndPersisted) {
    TempDir dir;
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> day(1, 28), hour(0, 23), coin(0, 3);
    std::vector<std::string> ids;
    {
        FlightBook book(dir.path / "flights.json");
        for (int i = 0; i < 60; ++i) {
            if (!ids.empty() && coin(rng) == 0) {
                std::uniform_int_distribution<std::size_t> pick(0, ids.size() - 1);
                auto at = pick(rng);
                book.remove(ids[at]);
                ids.erase(ids.begin() + static_cast<std::ptrdiff_t>(at));
            } else {
                char date[16];
                std::snprintf(date, sizeof date, "2026-12-%02d", day(rng));
                ids.push_back(book.add(flight("X", date, ClockTime{hour(rng), 0}.str())));
            }
            auto list = book.list();
            EXPECT_TRUE(std::is_sorted(list.begin(), list.end(), [](const UserFlight& a, const UserFlight& b) {
                return std::tie(a.date, a.time) < std::tie(b.date, b.time);
            }));
            EXPECT_EQ(list.size(), ids.size());
        }
    }
    FlightBook reopened(dir.path / "flights.json");
    EXPECT_EQ(reopened.list().size(), ids.size());
    auto fresh = reopened.add(flight("Y", "2026-12-01", "01:00"));
    EXPECT_EQ(std::count(ids.begin(), ids.end(), fresh), 0);
}

TEST(FlightBook, FindNextUpcomingMatchesSortOracle) {
    TempDir dir;
    FlightBook book(dir.path / "flights.json");
    book.add(flight("Boston", "2026-11-05", "09:00"));
    book.add(flight("Chicago", "2026-10-20", "18:30"));
    book.add(flight("boston", "2026-10-20", "07:15"));
    book.add(flight("Austin", "2026-10-01", "07:00"));  // in the past
    const Date today{2026, 10, 18};
    const ClockTime now{12, 0};

    auto all = book.list();
    std::vector<UserFlight> future;
    for (const auto& f : all)
        if (std::tie(f.date, f.time) >= std::tie(today, now)) future.push_back(f);
    auto oracle = *std::min_element(future.begin(), future.end(), [](const UserFlight& a, const UserFlight& b) {
        return std::tie(a.date, a.time) < std::tie(b.date, b.time);
    });

    FlightQuery next;
    next.next_upcoming = true;
    auto found = book.find(next, today, now);
    ASSERT_EQ(found.size(), 1u);
    EXPECT_EQ(found[0], oracle);

    FlightQuery by_origin;
    by_origin.origin = "BOSTON";
    EXPECT_EQ(book.find(by_origin, today, now).size(), 2u);

    FlightQuery by_when;
    by_when.date = Date{2026, 10, 20};
    by_when.time = ClockTime{18, 30};
    auto when = book.find(by_when, today, now);
    ASSERT_EQ(when.size(), 1u);
    EXPECT_EQ(when[0].origin, "Chicago");
}

TEST(FlightBook, CorruptDocumentRejected) {
    TempDir dir;
    std::ofstream(dir.path / "flights.json") << "{\"version\":1,\"next_id\":";
    EXPECT_THROW(FlightBook(dir.path / "flights.json"), CorruptDocumentError);
}

TEST(EventLog, SequencesStartAtOneAndAreGapFree) {
    TempDir dir;
    EventLog log(dir.path / "events.ndjson", SteppingClock{});
    EXPECT_EQ(log.append(event("mlp", 3)), 1u);
    EXPECT_EQ(log.append(event("seasonal", 20)), 2u);
    EXPECT_EQ(log.append(event("mlp", 40)), 3u);
    EventLog reopened(dir.path / "events.ndjson");
    EXPECT_EQ(reopened.append(event("mlp", 1)), 4u);
    auto all = reopened.read_all();
    ASSERT_EQ(all.size(), 4u);
    for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i].sequence, i + 1);
}

TEST(EventLog, EmptyAggregateHasZeroCountsAndNoMeans) {
    TempDir dir;
    EventLog log(dir.path / "events.ndjson");
    auto s = log.aggregate();
    EXPECT_EQ(s.count, 0u);
    EXPECT_EQ(s.per_model.at("mlp"), 0u);
    EXPECT_EQ(s.per_model.at("seasonal"), 0u);
    EXPECT_EQ(s.per_model.at("carrier_origin"), 0u);
    EXPECT_FALSE(s.mean_predicted_delay);
    EXPECT_FALSE(s.delayed_share);
    auto j = to_json(s);
    EXPECT_TRUE(j["mean_predicted_delay"].is_null());
}

TEST(EventLog, AggregateMatchesFullScan) {
    TempDir dir;
    EventLog log(dir.path / "events.ndjson", SteppingClock{});
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> delay(-10, 60);
    const char* models[] = {"carrier_origin", "seasonal", "mlp"};
    for (int i = 0; i < 100; ++i) log.append(event(models[rng() % 3], delay(rng)));

    // Independent scan of the raw file.
    std::ifstream in(log.path());
    std::string line;
    std::vector<nlohmann::json> raw;
    while (std::getline(in, line)) raw.push_back(nlohmann::json::parse(line));
    ASSERT_EQ(raw.size(), 100u);

    const auto from = *parse_timestamp("2026-10-18T12:00:20Z");
    const auto to = *parse_timestamp("2026-10-18T12:01:10Z");
    std::vector<std::pair<EventWindow, std::function<bool(const nlohmann::json&)>>> cases;
    cases.push_back({EventWindow{}, [](const nlohmann::json&) { return true; }});
    cases.push_back({EventWindow{10, 40, {}, {}}, [](const nlohmann::json& j) {
                         auto s = j["seq"].get<int>();
                         return s >= 10 && s <= 40;
                     }});
    cases.push_back({EventWindow{{}, {}, from, to}, [&](const nlohmann::json& j) {
                         auto t = *parse_timestamp(j["timestamp"].get<std::string>());
                         return t >= from && t < to;
                     }});
    for (const auto& [window, keep] : cases) {
        std::size_t n = 0, late = 0;
        std::map<std::string, std::size_t> per;
        double sum = 0;
        for (const auto& j : raw) {
            if (!keep(j)) continue;
            ++n;
            ++per[j["model"].get<std::string>()];
            const double d = j["predicted_delay"].get<double>();
            sum += d;
            if (d > 15) ++late;
        }
        auto s = log.aggregate(window);
        EXPECT_EQ(s.count, n);
        for (const auto& [m, c] : per) EXPECT_EQ(s.per_model.at(m), c);
        ASSERT_TRUE(s.mean_predicted_delay);
        EXPECT_NEAR(*s.mean_predicted_delay, sum / n, 1e-9);
        EXPECT_DOUBLE_EQ(*s.delayed_share, static_cast<double>(late) / n);
    }
    EXPECT_EQ(log.aggregate(EventWindow{{}, {}, from, to}).count, 50u);
}

TEST(EventLog, TruncationAtAnyByteLosesAtMostOneEvent) {
    TempDir dir;
    const auto path = dir.path / "events.ndjson";
    {
        EventLog log(path, SteppingClock{});
        for (int i = 0; i < 4; ++i) log.append(event("mlp", i * 10.0));
    }
    const std::string full = read_text_file(path);
    std::vector<std::size_t> line_ends;
    for (std::size_t i = 0; i < full.size(); ++i)
        if (full[i] == '\n') line_ends.push_back(i + 1);

    for (std::size_t cut = 0; cut <= full.size(); ++cut) {
        const auto copy = dir.path / "cut.ndjson";
        std::ofstream(copy, std::ios::binary | std::ios::trunc) << full.substr(0, cut);
        const auto complete = static_cast<std::size_t>(std::count_if(line_ends.begin(), line_ends.end(),
                                                                      [&](std::size_t e) { return e <= cut; }));
        EventLog log(copy, SteppingClock{});
        auto events = log.read_all();
        ASSERT_EQ(events.size(), complete) << "cut at " << cut;
        // Only the record being written at the cut is gone.
        const std::size_t started = complete + (cut > 0 && full[cut - 1] != '\n' ? 1 : 0);
        EXPECT_LE(started - events.size(), 1u);
        const auto seq = log.append(event("seasonal", 1));
        EXPECT_EQ(seq, complete + 1);
        auto after = log.read_all();
        ASSERT_EQ(after.size(), complete + 1);
        EXPECT_EQ(after.back().model, "seasonal");
    }
}

TEST(EventLog, CorruptionBeforeTheTailIsAnError) {
    TempDir dir;
    const auto path = dir.path / "events.ndjson";
    {
        EventLog log(path, SteppingClock{});
        log.append(event("mlp", 1));
        log.append(event("mlp", 2));
    }
    auto text = read_text_file(path);
    text[3] = '#';
    std::ofstream(path, std::ios::binary | std::ios::trunc) << text;
    EXPECT_THROW(EventLog{path}, CorruptDocumentError);
}
