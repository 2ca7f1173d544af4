#pragma once

// Feature selection and encoding of cleaned flight records into numeric
// design matrices.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "flightstat/calendar.hpp"
#include "flightstat/errors.hpp"
#include "flightstat/ingest.hpp"
#include "flightstat/numerics.hpp"

namespace flightstat {

// Month, day, weekday, flight number, carrier, origin and destination stay;
// year, quarter and destination world area code are dropped.
struct SelectedFeatures {
    int month = 1;
    int day_of_month = 1;
    int day_of_week = 1;
    std::string flight_num;
    std::string carrier;
    int origin_airport_id = 0;
    int dest_airport_id = 0;
    int crs_dep_minutes = 0;
    int crs_arr_minutes = 0;
    double distance = 0;
    std::optional<double> dep_delay;

    bool operator==(const SelectedFeatures&) const = default;
};

inline int hhmm_to_minutes(int hhmm) { return (hhmm / 100) * 60 + hhmm % 100; }

inline SelectedFeatures select_features(const FlightRecord& r) {
    return {r.month,
            r.day_of_month,
            r.day_of_week,
            r.flight_num,
            r.carrier,
            r.origin_airport_id,
            r.dest_airport_id,
            hhmm_to_minutes(r.crs_dep_time),
            hhmm_to_minutes(r.crs_arr_time),
            r.distance,
            r.dep_delay};
}

struct DelayLabels {
    bool dep_delayed = false;
    bool arr_delayed = false;
};

// Delayed means strictly more than 15 minutes late; exactly 15 is on time.
// Cancelled and diverted (no arrival delay) flights count as arrival-delayed.
inline DelayLabels derive_delay_labels(const FlightRecord& r) {
    DelayLabels out;
    out.dep_delayed = r.dep_delay && *r.dep_delay > kDelayThresholdMinutes;
    out.arr_delayed = r.cancelled || !r.arr_delay || *r.arr_delay > kDelayThresholdMinutes;
    return out;
}

enum class ColumnKind { label, one_hot, numeric, drop };

inline const char* column_kind_name(ColumnKind k) {
    switch (k) {
        case ColumnKind::label: return "label";
        case ColumnKind::one_hot: return "one_hot";
        case ColumnKind::numeric: return "numeric";
        case ColumnKind::drop: return "drop";
    }
    return "?";
}

struct ColumnRule {
    std::string column;
    ColumnKind kind = ColumnKind::numeric;
    // Sorted lexicographically; the label code of a category is its index.
    std::vector<std::string> categories;

    bool operator==(const ColumnRule&) const = default;

    std::optional<std::size_t> code_of(const std::string& value) const {
        auto it = std::lower_bound(categories.begin(), categories.end(), value);
        if (it == categories.end() || *it != value) return std::nullopt;
        return static_cast<std::size_t>(it - categories.begin());
    }
};

inline constexpr std::size_t kDefaultOneHotCutoff = 31;

struct EncoderSpec {
    std::vector<ColumnRule> rules;
    std::size_t one_hot_cutoff = kDefaultOneHotCutoff;
    // Unseen categories encode as an all-zero one-hot group or label code -1.
    bool allow_unknown = true;

    bool operator==(const EncoderSpec&) const = default;

    const ColumnRule& rule(const std::string& column) const {
        for (const auto& r : rules)
            if (r.column == column) return r;
        throw ArgumentError("no encoder rule for column " + column);
    }

    std::vector<std::string> column_names() const {
        std::vector<std::string> names;
        for (const auto& r : rules) {
            switch (r.kind) {
                case ColumnKind::one_hot:
                    for (const auto& c : r.categories) names.push_back(r.column + "=" + c);
                    break;
                case ColumnKind::label:
                case ColumnKind::numeric: names.push_back(r.column); break;
                case ColumnKind::drop: break;
            }
        }
        return names;
    }
};

namespace detail {

inline const std::vector<std::string>& categorical_columns() {
    static const std::vector<std::string> cols = {"month", "day_of_month", "day_of_week", "flight_num",
                                                  "carrier", "origin_airport_id", "dest_airport_id"};
    return cols;
}

inline const std::vector<std::string>& continuous_columns() {
    static const std::vector<std::string> cols = {"crs_dep_minutes", "crs_arr_minutes", "distance",
                                                  "dep_delay"};
    return cols;
}

inline std::string categorical_value(const SelectedFeatures& f, const std::string& column) {
    if (column == "month") return std::to_string(f.month);
    if (column == "day_of_month") return std::to_string(f.day_of_month);
    if (column == "day_of_week") return std::to_string(f.day_of_week);
    if (column == "flight_num") return f.flight_num;
    if (column == "carrier") return f.carrier;
    if (column == "origin_airport_id") return std::to_string(f.origin_airport_id);
    if (column == "dest_airport_id") return std::to_string(f.dest_airport_id);
    throw ArgumentError("not a categorical column: " + column);
}

inline double continuous_value(const SelectedFeatures& f, const std::string& column) {
    if (column == "crs_dep_minutes") return f.crs_dep_minutes;
    if (column == "crs_arr_minutes") return f.crs_arr_minutes;
    if (column == "distance") return f.distance;
    if (column == "dep_delay") {
        if (!f.dep_delay) throw EncodingError("column dep_delay: value missing");
        return *f.dep_delay;
    }
    throw ArgumentError("not a continuous column: " + column);
}

}  // namespace detail

// One-hot when a categorical column has at most `cutoff` distinct values,
// label encoding otherwise. Tables are sorted, so the result depends only on
// the multiset of input values.
inline EncoderSpec fit_encoders(const std::vector<FlightRecord>& records,
                                std::size_t cutoff = kDefaultOneHotCutoff) {
    if (records.empty()) throw EmptyDatasetError("cannot fit encoders on an empty dataset");
    std::vector<SelectedFeatures> selected;
    selected.reserve(records.size());
    for (const auto& r : records) selected.push_back(select_features(r));

    EncoderSpec spec;
    spec.one_hot_cutoff = cutoff;
    for (const auto& dropped : {"year", "quarter", "dest_wac"}) spec.rules.push_back({dropped, ColumnKind::drop, {}});
    for (const auto& column : detail::categorical_columns()) {
        std::set<std::string> distinct;
        for (const auto& f : selected) distinct.insert(detail::categorical_value(f, column));
        ColumnRule rule{column, distinct.size() <= cutoff ? ColumnKind::one_hot : ColumnKind::label,
                        {distinct.begin(), distinct.end()}};
        spec.rules.push_back(std::move(rule));
    }
    for (const auto& column : detail::continuous_columns()) spec.rules.push_back({column, ColumnKind::numeric, {}});
    return spec;
}

// Per design-column shift and scale; one-hot columns carry (0, 1) and are
// flagged as not standardized.
struct Standardization {
    std::vector<double> mean;
    std::vector<double> sd;
    std::vector<bool> applied;

    bool operator==(const Standardization&) const = default;
};

struct EncodedDataset {
    Matrix x;
    std::vector<double> y;  // arrival delay, minutes
    std::vector<std::string> column_names;
    EncoderSpec spec;
    std::optional<Standardization> standardization;
};

// Raw (unstandardized) design row.
inline std::vector<double> encode_features(const SelectedFeatures& f, const EncoderSpec& spec) {
    std::vector<double> row;
    for (const auto& rule : spec.rules) {
        switch (rule.kind) {
            case ColumnKind::drop: break;
            case ColumnKind::numeric: row.push_back(detail::continuous_value(f, rule.column)); break;
            case ColumnKind::label:
            case ColumnKind::one_hot: {
                const std::string value = detail::categorical_value(f, rule.column);
                auto code = rule.code_of(value);
                if (!code && !spec.allow_unknown)
                    throw EncodingError("column " + rule.column + ": unknown category '" + value + "'");
                if (rule.kind == ColumnKind::label) {
                    row.push_back(code ? static_cast<double>(*code) : -1.0);
                } else {
                    const std::size_t base = row.size();
                    row.resize(base + rule.categories.size(), 0.0);
                    if (code) row[base + *code] = 1.0;
                }
                break;
            }
        }
    }
    return row;
}

namespace detail {

inline std::vector<bool> standardizable_columns(const EncoderSpec& spec) {
    std::vector<bool> out;
    for (const auto& rule : spec.rules) {
        switch (rule.kind) {
            case ColumnKind::drop: break;
            case ColumnKind::numeric:
            case ColumnKind::label: out.push_back(true); break;
            case ColumnKind::one_hot: out.insert(out.end(), rule.categories.size(), false); break;
        }
    }
    return out;
}

// Marks which raw entries are unknown label codes, so they can be mapped to
// the column mean after standardization.
inline std::vector<bool> unknown_label_mask(const SelectedFeatures& f, const EncoderSpec& spec) {
    std::vector<bool> out;
    for (const auto& rule : spec.rules) {
        switch (rule.kind) {
            case ColumnKind::drop: break;
            case ColumnKind::numeric: out.push_back(false); break;
            case ColumnKind::label:
                out.push_back(!rule.code_of(detail::categorical_value(f, rule.column)).has_value());
                break;
            case ColumnKind::one_hot: out.insert(out.end(), rule.categories.size(), false); break;
        }
    }
    return out;
}

}  // namespace detail

// Population (divide-by-n) moments over the rows of x. Constant columns keep sd = 1.
inline Standardization fit_standardization(const Matrix& x, const EncoderSpec& spec) {
    Standardization s;
    s.applied = detail::standardizable_columns(spec);
    if (s.applied.size() != x.cols()) throw ArgumentError("standardization width mismatch");
    s.mean.assign(x.cols(), 0.0);
    s.sd.assign(x.cols(), 1.0);
    const auto n = static_cast<long double>(x.rows());
    for (std::size_t j = 0; j < x.cols(); ++j) {
        if (!s.applied[j] || x.rows() == 0) continue;
        long double sum = 0;
        for (std::size_t i = 0; i < x.rows(); ++i) sum += x(i, j);
        const long double mean = sum / n;
        long double ss = 0;
        for (std::size_t i = 0; i < x.rows(); ++i) ss += (x(i, j) - mean) * (x(i, j) - mean);
        const double sd = static_cast<double>(std::sqrt(ss / n));
        s.mean[j] = static_cast<double>(mean);
        s.sd[j] = sd > 0 ? sd : 1.0;
    }
    return s;
}

inline void apply_standardization(std::span<double> row, const Standardization& s,
                                  const std::vector<bool>& unknown_mask = {}) {
    for (std::size_t j = 0; j < row.size(); ++j) {
        if (!s.applied[j]) continue;
        if (!unknown_mask.empty() && unknown_mask[j])
            row[j] = 0.0;
        else
            row[j] = (row[j] - s.mean[j]) / s.sd[j];
    }
}

// Encodes one feature tuple for prediction, applying stored standardization if any.
inline std::vector<double> encode_row(const SelectedFeatures& f, const EncoderSpec& spec,
                                      const std::optional<Standardization>& standardization) {
    auto row = encode_features(f, spec);
    if (standardization) apply_standardization(row, *standardization, detail::unknown_label_mask(f, spec));
    return row;
}

namespace detail {

inline EncodedDataset encode_impl(const std::vector<FlightRecord>& records, const EncoderSpec& spec,
                                  const Standardization* fixed, bool standardize) {
    EncodedDataset out;
    out.spec = spec;
    out.column_names = spec.column_names();
    out.x = Matrix(records.size(), out.column_names.size());
    std::vector<std::vector<bool>> unknown(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (!r.arr_delay) throw EncodingError("record " + std::to_string(i) + " has no arrival delay");
        auto f = select_features(r);
        auto row = encode_features(f, spec);
        std::copy(row.begin(), row.end(), out.x.row(i).begin());
        unknown[i] = detail::unknown_label_mask(f, spec);
        out.y.push_back(*r.arr_delay);
    }
    if (fixed || standardize) {
        out.standardization = fixed ? *fixed : fit_standardization(out.x, spec);
        for (std::size_t i = 0; i < records.size(); ++i)
            apply_standardization(out.x.row(i), *out.standardization, unknown[i]);
    }
    return out;
}

}  // namespace detail

// Records must carry both delays (see FlightRecord::has_delay_outcome).
inline EncodedDataset encode(const std::vector<FlightRecord>& records, const EncoderSpec& spec, bool standardize) {
    return detail::encode_impl(records, spec, nullptr, standardize);
}

// Applies previously fitted standardization parameters (e.g. to a test split).
inline EncodedDataset encode(const std::vector<FlightRecord>& records, const EncoderSpec& spec,
                             const Standardization& standardization) {
    return detail::encode_impl(records, spec, &standardization, true);
}

inline std::vector<FlightRecord> usable_records(const std::vector<FlightRecord>& records) {
    std::vector<FlightRecord> out;
    for (const auto& r : records)
        if (r.has_delay_outcome()) out.push_back(r);
    return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const EncoderSpec& spec) {
    nlohmann::json rules = nlohmann::json::array();
    for (const auto& r : spec.rules) {
        nlohmann::json j = {{"column", r.column}, {"rule", column_kind_name(r.kind)}};
        if (r.kind == ColumnKind::label || r.kind == ColumnKind::one_hot) j["categories"] = r.categories;
        rules.push_back(std::move(j));
    }
    return {{"version", 1}, {"one_hot_cutoff", spec.one_hot_cutoff}, {"allow_unknown", spec.allow_unknown},
            {"rules", rules}};
}

inline EncoderSpec encoder_spec_from_json(const nlohmann::json& j) {
    if (j.at("version").get<int>() != 1)
        throw UnknownVersionError("unknown encoder spec version " + j.at("version").dump());
    EncoderSpec spec;
    spec.one_hot_cutoff = j.at("one_hot_cutoff").get<std::size_t>();
    spec.allow_unknown = j.at("allow_unknown").get<bool>();
    for (const auto& r : j.at("rules")) {
        ColumnRule rule;
        rule.column = r.at("column").get<std::string>();
        const auto kind = r.at("rule").get<std::string>();
        if (kind == "label") rule.kind = ColumnKind::label;
        else if (kind == "one_hot") rule.kind = ColumnKind::one_hot;
        else if (kind == "numeric") rule.kind = ColumnKind::numeric;
        else if (kind == "drop") rule.kind = ColumnKind::drop;
        else throw CorruptDocumentError("unknown encoder rule '" + kind + "'");
        if (r.contains("categories")) rule.categories = r.at("categories").get<std::vector<std::string>>();
        if (!std::is_sorted(rule.categories.begin(), rule.categories.end()) ||
            std::adjacent_find(rule.categories.begin(), rule.categories.end()) != rule.categories.end())
            throw CorruptDocumentError("categories of " + rule.column + " are not sorted and unique");
        spec.rules.push_back(std::move(rule));
    }
    return spec;
}

inline nlohmann::json to_json(const Standardization& s) {
    return {{"mean", s.mean}, {"sd", s.sd}, {"applied", s.applied}};
}

inline Standardization standardization_from_json(const nlohmann::json& j) {
    Standardization s;
    s.mean = j.at("mean").get<std::vector<double>>();
    s.sd = j.at("sd").get<std::vector<double>>();
    s.applied = j.at("applied").get<std::vector<bool>>();
    if (s.mean.size() != s.sd.size() || s.sd.size() != s.applied.size())
        throw CorruptDocumentError("standardization arrays differ in length");
    for (double v : s.sd)
        if (!(v > 0) || !std::isfinite(v)) throw CorruptDocumentError("standardization sd must be positive");
    return s;
}

}  // namespace flightstat
