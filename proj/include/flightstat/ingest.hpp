#pragma once

// Parsing, cleaning and splitting of on-time-performance CSV data, plus the
// synthetic generator used by the test and benchmark suites.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "flightstat/calendar.hpp"
#include "flightstat/errors.hpp"

namespace flightstat {

struct RawRow {
    std::vector<std::pair<std::string, std::string>> cells;
    std::size_t line = 0;

    const std::string* find(std::string_view column) const {
        for (const auto& [name, value] : cells)
            if (name == column) return &value;
        return nullptr;
    }
};

struct FlightRecord {
    int year = 0;
    int quarter = 1;
    int month = 1;
    int day_of_month = 1;
    int day_of_week = 1;
    std::string flight_num;
    std::string carrier;
    int origin_airport_id = 0;
    int dest_airport_id = 0;
    int dest_wac = 0;
    int crs_dep_time = 0;  // HHMM
    int crs_arr_time = 0;  // HHMM
    double distance = 0.0;
    // Absent on cancelled and diverted flights.
    std::optional<double> dep_delay;
    std::optional<double> arr_delay;
    std::optional<bool> arr_del15;
    bool cancelled = false;
    // Optional weather columns, carried through untouched.
    std::vector<std::pair<std::string, std::string>> extras;

    bool operator==(const FlightRecord&) const = default;

    // Usable as a regression example: not cancelled and both delays known.
    bool has_delay_outcome() const { return !cancelled && dep_delay && arr_delay; }
};

struct RejectedRow {
    std::size_t line = 0;
    std::string reason;
};

inline std::ostream& operator<<(std::ostream& os, const RejectedRow& r) {
    return os << "line=" << r.line << " reason=" << r.reason;
}

struct ParseResult {
    std::vector<FlightRecord> records;
    std::vector<RejectedRow> rejects;
};

inline constexpr std::array<std::string_view, 17> kRequiredColumns = {
    "YEAR",        "QUARTER",         "MONTH",           "DAY_OF_MONTH", "DAY_OF_WEEK",
    "CARRIER",     "FLIGHT_NUM",      "ORIGIN_AIRPORT_ID", "DEST_AIRPORT_ID", "DEST_WAC",
    "CRS_DEP_TIME", "CRS_ARR_TIME",   "DISTANCE",        "DEP_DELAY",    "ARR_DELAY",
    "ARR_DEL15",   "CANCELLED"};

namespace detail {

// Splits one CSV line. Double-quoted fields may contain commas and "" escapes.
// Returns nullopt on an unterminated quote.
inline std::optional<std::vector<std::string>> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::string cell;
    bool quoted = false;
    bool was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cell.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cell.push_back(c);
            }
        } else if (c == '"' && cell.empty() && !was_quoted) {
            quoted = true;
            was_quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cell));
            cell.clear();
            was_quoted = false;
        } else {
            cell.push_back(c);
        }
    }
    if (quoted) return std::nullopt;
    out.push_back(std::move(cell));
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

inline std::optional<double> parse_real(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

// Integers may be written as "7" or "7.00" (the BTS export does both).
inline std::optional<long long> parse_integer(std::string_view s) {
    auto v = parse_real(s);
    if (!v || std::floor(*v) != *v || std::fabs(*v) > 9e15) return std::nullopt;
    return static_cast<long long>(*v);
}

inline std::string format_real(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

inline std::string format_hhmm(int hhmm) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%04d", hhmm);
    return buf;
}

struct RowParseError {
    std::string reason;
};

// Throws RowParseError with a human-readable reason.
inline FlightRecord record_from_row(const RawRow& row) {
    auto cell = [&](std::string_view name) -> std::string_view {
        const std::string* v = row.find(name);
        return v ? trim(*v) : std::string_view{};
    };
    auto required_int = [&](std::string_view name, long long lo, long long hi) -> int {
        auto text = cell(name);
        if (text.empty()) throw RowParseError{std::string(name) + " missing"};
        auto v = parse_integer(text);
        if (!v) throw RowParseError{std::string(name) + " not an integer: '" + std::string(text) + "'"};
        if (*v < lo || *v > hi)
            throw RowParseError{std::string(name) + " out of range: " + std::string(text)};
        return static_cast<int>(*v);
    };
    auto required_text = [&](std::string_view name) -> std::string {
        auto text = cell(name);
        if (text.empty()) throw RowParseError{std::string(name) + " missing"};
        return std::string(text);
    };
    auto optional_real = [&](std::string_view name) -> std::optional<double> {
        auto text = cell(name);
        if (text.empty()) return std::nullopt;
        auto v = parse_real(text);
        if (!v) throw RowParseError{std::string(name) + " not a number: '" + std::string(text) + "'"};
        return v;
    };
    auto optional_flag = [&](std::string_view name) -> std::optional<bool> {
        auto text = cell(name);
        if (text.empty()) return std::nullopt;
        auto v = parse_integer(text);
        if (!v || (*v != 0 && *v != 1))
            throw RowParseError{std::string(name) + " not a 0/1 flag: '" + std::string(text) + "'"};
        return *v == 1;
    };
    auto hhmm = [&](std::string_view name) -> int {
        int v = required_int(name, 0, 2399);
        if (v % 100 >= 60) throw RowParseError{std::string(name) + " has minutes >= 60: " + std::to_string(v)};
        return v;
    };

    FlightRecord r;
    r.year = required_int("YEAR", 1900, 2200);
    r.quarter = required_int("QUARTER", 1, 4);
    r.month = required_int("MONTH", 1, 12);
    r.day_of_month = required_int("DAY_OF_MONTH", 1, 31);
    r.day_of_week = required_int("DAY_OF_WEEK", 1, 7);
    r.carrier = required_text("CARRIER");
    r.flight_num = required_text("FLIGHT_NUM");
    r.origin_airport_id = required_int("ORIGIN_AIRPORT_ID", 0, 99'999'999);
    r.dest_airport_id = required_int("DEST_AIRPORT_ID", 0, 99'999'999);
    r.dest_wac = required_int("DEST_WAC", 0, 99'999'999);
    r.crs_dep_time = hhmm("CRS_DEP_TIME");
    r.crs_arr_time = hhmm("CRS_ARR_TIME");
    auto distance = optional_real("DISTANCE");
    if (!distance) throw RowParseError{"DISTANCE missing"};
    if (*distance <= 0.0) throw RowParseError{"DISTANCE must be positive: " + format_real(*distance)};
    r.distance = *distance;
    r.dep_delay = optional_real("DEP_DELAY");
    r.arr_delay = optional_real("ARR_DELAY");
    r.arr_del15 = optional_flag("ARR_DEL15");
    auto cancelled = optional_flag("CANCELLED");
    if (!cancelled) throw RowParseError{"CANCELLED missing"};
    r.cancelled = *cancelled;

    for (const auto& [name, value] : row.cells) {
        if (std::find(kRequiredColumns.begin(), kRequiredColumns.end(), name) == kRequiredColumns.end())
            r.extras.emplace_back(name, value);
    }
    return r;
}

}  // namespace detail

// Reads a header line and one record per following line. Malformed rows are
// reported, never silently dropped. Blank lines are skipped.
inline ParseResult parse_flights(std::istream& in) {
    if (!in) throw IoError("input stream is not readable");
    std::string line;
    if (!std::getline(in, line)) {
        if (in.bad()) throw IoError("failed reading CSV header");
        throw SchemaError("empty input: no header line");
    }
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
        static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF)
        line.erase(0, 3);

    auto header_cells = detail::split_csv_line(detail::trim(line));
    if (!header_cells) throw SchemaError("unterminated quote in header");
    std::vector<std::string> header;
    std::set<std::string> seen;
    for (const auto& h : *header_cells) {
        std::string name(detail::trim(h));
        if (!name.empty() && !seen.insert(name).second)
            throw SchemaError("duplicate column in header: " + name);
        header.push_back(std::move(name));
    }
    std::vector<std::string> missing;
    for (auto col : kRequiredColumns)
        if (!seen.count(std::string(col))) missing.emplace_back(col);
    if (!missing.empty()) {
        std::string msg = "missing mandatory column(s):";
        for (const auto& m : missing) msg += " " + m;
        throw SchemaError(msg);
    }

    ParseResult result;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        auto body = detail::trim(line);
        if (body.empty()) continue;
        auto cells = detail::split_csv_line(body);
        if (!cells) {
            result.rejects.push_back({line_no, "unterminated quoted field"});
            continue;
        }
        if (cells->size() != header.size()) {
            result.rejects.push_back({line_no, "expected " + std::to_string(header.size()) + " cells, got " +
                                                   std::to_string(cells->size())});
            continue;
        }
        RawRow row;
        row.line = line_no;
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i].empty()) continue;
            row.cells.emplace_back(header[i], std::move((*cells)[i]));
        }
        try {
            result.records.push_back(detail::record_from_row(row));
        } catch (const detail::RowParseError& e) {
            result.rejects.push_back({line_no, e.reason});
        }
    }
    if (in.bad()) throw IoError("read failure after line " + std::to_string(line_no));
    return result;
}

// Canonical CSV form: required columns in schema order, then extras of the first record.
inline void write_flights_csv(std::ostream& out, const std::vector<FlightRecord>& records) {
    std::vector<std::string> extra_names;
    if (!records.empty())
        for (const auto& [name, _] : records.front().extras) extra_names.push_back(name);

    for (std::size_t i = 0; i < kRequiredColumns.size(); ++i) out << (i ? "," : "") << kRequiredColumns[i];
    for (const auto& n : extra_names) out << ',' << n;
    out << '\n';

    auto opt = [](const std::optional<double>& v) { return v ? detail::format_real(*v) : std::string(); };
    auto quote = [](const std::string& s) {
        if (s.find_first_of(",\"") == std::string::npos) return s;
        std::string q = "\"";
        for (char c : s) {
            if (c == '"') q += '"';
            q += c;
        }
        return q + '"';
    };
    for (const auto& r : records) {
        out << r.year << ',' << r.quarter << ',' << r.month << ',' << r.day_of_month << ',' << r.day_of_week
            << ',' << quote(r.carrier) << ',' << quote(r.flight_num) << ',' << r.origin_airport_id << ','
            << r.dest_airport_id << ',' << r.dest_wac << ',' << detail::format_hhmm(r.crs_dep_time) << ','
            << detail::format_hhmm(r.crs_arr_time) << ',' << detail::format_real(r.distance) << ','
            << opt(r.dep_delay) << ',' << opt(r.arr_delay) << ','
            << (r.arr_del15 ? (*r.arr_del15 ? "1" : "0") : "") << ',' << (r.cancelled ? 1 : 0);
        for (const auto& n : extra_names) {
            std::string v;
            for (const auto& [name, value] : r.extras)
                if (name == n) v = value;
            out << ',' << quote(v);
        }
        out << '\n';
    }
}

inline std::vector<FlightRecord> drop_missing_labels(std::vector<FlightRecord> records) {
    std::erase_if(records, [](const FlightRecord& r) { return !r.arr_del15.has_value(); });
    return records;
}

// ---------------------------------------------------------------------------
// Hourly series interpolation

enum class SampleStatus { observed, interpolated, missing };

struct HourlySample {
    int hour = 0;
    std::optional<double> value;
    SampleStatus status = SampleStatus::observed;

    bool operator==(const HourlySample&) const = default;
};

struct HourlySeries {
    std::string station;
    std::vector<HourlySample> samples;  // strictly increasing hour
};

// Fills each interior gap on the line through the nearest known neighbours.
// Leading and trailing gaps stay empty with status missing.
inline HourlySeries interpolate_hourly(HourlySeries series) {
    for (std::size_t i = 1; i < series.samples.size(); ++i)
        if (series.samples[i].hour <= series.samples[i - 1].hour)
            throw ArgumentError("hour indices must be strictly increasing");

    std::vector<std::size_t> known;
    for (std::size_t i = 0; i < series.samples.size(); ++i) {
        auto& s = series.samples[i];
        if (s.value) {
            known.push_back(i);
            s.status = SampleStatus::observed;
        } else {
            s.status = SampleStatus::missing;
        }
    }
    if (known.size() < 2)
        throw InsufficientDataError("interpolation needs at least two known values, got " +
                                    std::to_string(known.size()));

    for (std::size_t k = 0; k + 1 < known.size(); ++k) {
        const auto& left = series.samples[known[k]];
        const auto& right = series.samples[known[k + 1]];
        const double span = right.hour - left.hour;
        for (std::size_t i = known[k] + 1; i < known[k + 1]; ++i) {
            auto& s = series.samples[i];
            const double t = (s.hour - left.hour) / span;
            s.value = *left.value + (*right.value - *left.value) * t;
            s.status = SampleStatus::interpolated;
        }
    }
    return series;
}

// ---------------------------------------------------------------------------
// Train/test split

enum class SplitMode { random, chronological };

struct Split {
    std::vector<FlightRecord> train;
    std::vector<FlightRecord> test;
};

// Index-level split, so callers can verify partition properties directly.
struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

inline std::size_t test_size_for(std::size_t n, double test_fraction) {
    auto k = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
    return std::clamp<std::size_t>(k, 1, n);
}

inline SplitIndices split_indices(const std::vector<FlightRecord>& records, double test_fraction,
                                  std::uint64_t seed, SplitMode mode = SplitMode::random) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw ArgumentError("test fraction must be in (0, 1)");
    if (records.empty()) throw EmptyDatasetError("cannot split an empty dataset");
    const std::size_t n = records.size();
    const std::size_t k = test_size_for(n, test_fraction);

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    if (mode == SplitMode::random) {
        // Fisher-Yates on the raw engine output so the permutation is stable
        // across standard library implementations.
        std::mt19937_64 rng(seed);
        for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);
    } else {
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const auto& x = records[a];
            const auto& y = records[b];
            return std::tie(x.year, x.month, x.day_of_month, x.crs_dep_time) <
                   std::tie(y.year, y.month, y.day_of_month, y.crs_dep_time);
        });
    }
    std::vector<bool> is_test(n, false);
    for (std::size_t i = n - k; i < n; ++i) is_test[order[i]] = true;

    SplitIndices out;
    for (std::size_t i = 0; i < n; ++i) (is_test[i] ? out.test : out.train).push_back(i);
    return out;
}

inline Split split_train_test(const std::vector<FlightRecord>& records, double test_fraction,
                              std::uint64_t seed, SplitMode mode = SplitMode::random) {
    auto idx = split_indices(records, test_fraction, seed, mode);
    Split out;
    out.train.reserve(idx.train.size());
    out.test.reserve(idx.test.size());
    for (auto i : idx.train) out.train.push_back(records[i]);
    for (auto i : idx.test) out.test.push_back(records[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic data

struct Airport {
    int id;
    std::string code;
    std::string city;
    double latitude;
    double longitude;
};

// Forty US airports with approximate coordinates. Ids are synthetic.
inline const std::vector<Airport>& synthetic_airports() {
    static const std::vector<Airport> airports = [] {
        struct Row { const char* code; const char* city; double lat; double lon; };
        static const Row rows[] = {
            {"ATL", "Atlanta", 33.64, -84.43},       {"BOS", "Boston", 42.36, -71.01},
            {"ORD", "Chicago", 41.98, -87.90},       {"DFW", "Dallas", 32.90, -97.04},
            {"DEN", "Denver", 39.86, -104.67},       {"LAX", "Los Angeles", 33.94, -118.41},
            {"JFK", "New York", 40.64, -73.78},      {"SFO", "San Francisco", 37.62, -122.38},
            {"SEA", "Seattle", 47.45, -122.31},      {"MIA", "Miami", 25.79, -80.29},
            {"PHX", "Phoenix", 33.43, -112.01},      {"IAH", "Houston", 29.98, -95.34},
            {"MSP", "Minneapolis", 44.88, -93.22},   {"DTW", "Detroit", 42.21, -83.35},
            {"PHL", "Philadelphia", 39.87, -75.24},  {"CLT", "Charlotte", 35.21, -80.94},
            {"LAS", "Las Vegas", 36.08, -115.15},    {"MCO", "Orlando", 28.43, -81.31},
            {"SLC", "Salt Lake City", 40.79, -111.98}, {"BWI", "Baltimore", 39.18, -76.67},
            {"SAN", "San Diego", 32.73, -117.19},    {"TPA", "Tampa", 27.98, -82.53},
            {"PDX", "Portland", 45.59, -122.60},     {"STL", "St. Louis", 38.75, -90.37},
            {"MCI", "Kansas City", 39.30, -94.71},   {"BNA", "Nashville", 36.12, -86.68},
            {"AUS", "Austin", 30.19, -97.67},        {"MSY", "New Orleans", 29.99, -90.26},
            {"RDU", "Raleigh", 35.88, -78.79},       {"CLE", "Cleveland", 41.41, -81.85},
            {"PIT", "Pittsburgh", 40.49, -80.23},    {"IND", "Indianapolis", 39.72, -86.29},
            {"CMH", "Columbus", 40.00, -82.89},      {"SAT", "San Antonio", 29.53, -98.47},
            {"SMF", "Sacramento", 38.70, -121.59},   {"SJC", "San Jose", 37.36, -121.93},
            {"MKE", "Milwaukee", 42.95, -87.90},     {"ABQ", "Albuquerque", 35.04, -106.61},
            {"OMA", "Omaha", 41.30, -95.89},         {"ANC", "Anchorage", 61.17, -149.99},
        };
        std::vector<Airport> out;
        int id = 11000;
        for (const auto& r : rows) out.push_back({id++, r.code, r.city, r.lat, r.lon});
        return out;
    }();
    return airports;
}

// Great-circle distance in statute miles, rounded to whole miles.
inline double great_circle_miles(const Airport& a, const Airport& b) {
    constexpr double kEarthRadiusMiles = 3958.8;
    constexpr double deg = std::numbers::pi / 180.0;
    const double dlat = (b.latitude - a.latitude) * deg;
    const double dlon = (b.longitude - a.longitude) * deg;
    const double h = std::sin(dlat / 2) * std::sin(dlat / 2) +
                     std::cos(a.latitude * deg) * std::cos(b.latitude * deg) * std::sin(dlon / 2) *
                         std::sin(dlon / 2);
    return std::max(1.0, std::round(2 * kEarthRadiusMiles * std::asin(std::sqrt(h))));
}

struct SeasonCoefficients {
    double dep_delay = 0.9;
    double distance = 0.01;
};

struct SyntheticConfig {
    std::size_t count = 1000;
    // Indexed by Season.
    std::array<SeasonCoefficients, 4> seasons{};
    double noise_sd = 0.0;
    // Amplitude in minutes of the time-of-day term.
    double nonlinearity = 0.0;
    std::vector<int> months = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
    std::size_t carrier_count = 8;
    std::size_t airport_count = 40;
    double cancelled_fraction = 0.0;
    int year = 2019;
};

// The bundled benchmark: per-season slopes, a time-of-day swing the linear
// models cannot see, and a little noise and cancellation.
inline SyntheticConfig benchmark_config(std::size_t count = 50000) {
    SyntheticConfig cfg;
    cfg.count = count;
    cfg.seasons = {SeasonCoefficients{1.10, 0.020}, {0.85, 0.005}, {1.00, 0.012}, {0.75, 0.0}};
    cfg.noise_sd = 8.0;
    cfg.nonlinearity = 25.0;
    cfg.cancelled_fraction = 0.01;
    return cfg;
}

// Time-of-day term added to the arrival delay: amplitude * sin(2*pi*(t - 480)/1440),
// t in minutes since midnight of the scheduled departure.
inline double synthetic_time_of_day_term(double amplitude, int crs_dep_minutes) {
    return amplitude * std::sin(2.0 * std::numbers::pi * (crs_dep_minutes - 480) / 1440.0);
}

inline const std::vector<std::string>& synthetic_carriers() {
    static const std::vector<std::string> carriers = {"AA", "AS", "B6", "DL", "F9", "NK", "UA", "WN",
                                                      "G4", "HA", "SY", "MQ"};
    return carriers;
}

// Block time used both by the generator and to estimate a scheduled arrival.
inline int estimated_block_minutes(double distance) {
    return static_cast<int>(std::lround(30.0 + distance / 8.0));
}

inline std::vector<FlightRecord> generate_synthetic(const SyntheticConfig& config, std::uint64_t seed) {
    if (config.count == 0) throw ArgumentError("record count must be positive");
    if (config.months.empty()) throw ArgumentError("month set must be non-empty");
    for (int m : config.months)
        if (m < 1 || m > 12) throw ArgumentError("month out of range: " + std::to_string(m));
    const auto& airports = synthetic_airports();
    const auto& carriers = synthetic_carriers();
    if (config.airport_count < 2 || config.airport_count > airports.size())
        throw ArgumentError("airport count must be in [2, " + std::to_string(airports.size()) + "]");
    if (config.carrier_count < 1 || config.carrier_count > carriers.size())
        throw ArgumentError("carrier count must be in [1, " + std::to_string(carriers.size()) + "]");
    if (config.noise_sd < 0 || config.cancelled_fraction < 0 || config.cancelled_fraction >= 1)
        throw ArgumentError("noise must be >= 0 and cancelled fraction in [0, 1)");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };

    std::vector<FlightRecord> out;
    out.reserve(config.count);
    for (std::size_t i = 0; i < config.count; ++i) {
        FlightRecord r;
        r.year = config.year;
        r.month = config.months[pick(config.months.size())];
        r.quarter = (r.month - 1) / 3 + 1;
        const int days_in_month = static_cast<int>(static_cast<unsigned>(
            std::chrono::year_month_day_last{std::chrono::year{r.year},
                                             std::chrono::month_day_last{std::chrono::month{
                                                 static_cast<unsigned>(r.month)}}}
                .day()));
        r.day_of_month = 1 + static_cast<int>(pick(static_cast<std::size_t>(days_in_month)));
        r.day_of_week = Date{r.year, r.month, r.day_of_month}.day_of_week();
        r.carrier = carriers[pick(config.carrier_count)];
        r.flight_num = std::to_string(100 + pick(4900));
        const auto& origin = airports[pick(config.airport_count)];
        const Airport* dest = &origin;
        while (dest->id == origin.id) dest = &airports[pick(config.airport_count)];
        r.origin_airport_id = origin.id;
        r.dest_airport_id = dest->id;
        r.dest_wac = 10 + static_cast<int>(dest->id % 90);
        r.distance = great_circle_miles(origin, *dest);
        const int dep_minutes = 300 + 5 * static_cast<int>(pick(217));  // 05:00 .. 23:00
        r.crs_dep_time = ClockTime::from_minutes(dep_minutes).hhmm();
        r.crs_arr_time = ClockTime::from_minutes(dep_minutes + estimated_block_minutes(r.distance)).hhmm();

        // Draw every random quantity unconditionally so the stream layout does
        // not depend on configuration values.
        const double u_mix = unit(rng);
        const double z_ontime = normal(rng);
        const double u_exp = unit(rng);
        const double z_noise = normal(rng);
        const double u_cancel = unit(rng);

        r.cancelled = u_cancel < config.cancelled_fraction;
        if (r.cancelled) {
            r.arr_del15 = true;
            out.push_back(std::move(r));
            continue;
        }
        const double dep = u_mix < 0.65 ? -3.0 + 5.0 * z_ontime : 5.0 - 35.0 * std::log1p(-u_exp);
        const auto& beta = config.seasons[static_cast<std::size_t>(season_of_month_unchecked(r.month))];
        const double arr = beta.dep_delay * dep + beta.distance * r.distance +
                           synthetic_time_of_day_term(config.nonlinearity, dep_minutes) +
                           config.noise_sd * z_noise;
        r.dep_delay = dep;
        r.arr_delay = arr;
        r.arr_del15 = arr > 15.0;
        out.push_back(std::move(r));
    }
    return out;
}

// Everything needed to recompute the noiseless ground truth of a generated set.
inline nlohmann::json synthetic_manifest(const SyntheticConfig& config, std::uint64_t seed) {
    nlohmann::json seasons = nlohmann::json::object();
    for (std::size_t s = 0; s < 4; ++s)
        seasons[season_name(static_cast<Season>(s))] = {{"dep_delay", config.seasons[s].dep_delay},
                                                        {"distance", config.seasons[s].distance}};
    return {{"generator", "flightstat-synthetic"},
            {"seed", seed},
            {"count", config.count},
            {"season_coefficients", seasons},
            {"noise_sd", config.noise_sd},
            {"nonlinearity", config.nonlinearity},
            {"time_of_day_term", "nonlinearity * sin(2*pi*(crs_dep_minutes - 480)/1440)"},
            {"arr_delay", "b_dep(season)*dep_delay + b_dist(season)*distance + time_of_day_term + noise_sd*N(0,1)"},
            {"season_map", "12,1,2 winter; 3,4,5 spring; 6,7,8 summer; 9,10,11 fall"},
            {"months", config.months},
            {"carrier_count", config.carrier_count},
            {"airport_count", config.airport_count},
            {"cancelled_fraction", config.cancelled_fraction},
            {"year", config.year}};
}

}  // namespace flightstat
