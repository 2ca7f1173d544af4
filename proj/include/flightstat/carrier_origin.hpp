#pragma once

// Carrier/origin model: one two-feature linear regression of arrival delay on
// (departure delay, distance) per (carrier, origin airport), with a pooled
// fallback fit and a historical-average index for unknown departure delays.

#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "flightstat/errors.hpp"
#include "flightstat/features.hpp"
#include "flightstat/ingest.hpp"
#include "flightstat/numerics.hpp"

namespace flightstat {

inline constexpr int kImputationHourBucket = 3;
inline constexpr std::size_t kDefaultSupportThreshold = 5;
inline constexpr std::size_t kDefaultMinGroupSize = 30;
inline constexpr std::size_t kMinimumTrainingRecords = 10;

struct ImputationKey {
    int origin_airport_id = 0;
    std::string carrier;
    int month = 1;
    int hour_bucket = 0;  // scheduled departure hour / 3

    auto operator<=>(const ImputationKey&) const = default;

    static ImputationKey of(const FlightRecord& r) {
        return {r.origin_airport_id, r.carrier, r.month, (r.crs_dep_time / 100) / kImputationHourBucket};
    }
};

struct ImputationEntry {
    double mean_dep_delay = 0;
    std::size_t support = 0;

    bool operator==(const ImputationEntry&) const = default;
};

struct ImputationIndex {
    std::map<ImputationKey, ImputationEntry> entries;
    std::size_t support_threshold = kDefaultSupportThreshold;

    bool operator==(const ImputationIndex&) const = default;
};

// Mean historical departure delay per key over every record that has one.
inline ImputationIndex build_imputation_index(const std::vector<FlightRecord>& records,
                                              std::size_t support_threshold = kDefaultSupportThreshold) {
    std::map<ImputationKey, std::pair<long double, std::size_t>> sums;
    for (const auto& r : records) {
        if (!r.dep_delay) continue;
        auto& [sum, count] = sums[ImputationKey::of(r)];
        sum += *r.dep_delay;
        ++count;
    }
    ImputationIndex index;
    index.support_threshold = support_threshold;
    for (const auto& [key, acc] : sums)
        index.entries.emplace(key, ImputationEntry{static_cast<double>(acc.first / acc.second), acc.second});
    return index;
}

// Returns the stored mean only when its support reaches the threshold.
inline std::optional<double> impute_departure_delay(const ImputationIndex& index, const ImputationKey& key) {
    auto it = index.entries.find(key);
    if (it == index.entries.end() || it->second.support < index.support_threshold) return std::nullopt;
    return it->second.mean_dep_delay;
}

using CarrierOriginKey = std::pair<std::string, int>;

struct CarrierOriginOptions {
    std::size_t min_group_size = kDefaultMinGroupSize;
    std::size_t support_threshold = kDefaultSupportThreshold;
    bool with_intercept = false;
};

struct CarrierOriginModel {
    std::map<CarrierOriginKey, LinearModel> groups;
    std::map<CarrierOriginKey, std::size_t> group_counts;
    LinearModel fallback;
    std::size_t min_group_size = kDefaultMinGroupSize;
    ImputationIndex imputation;
    std::size_t training_count = 0;

    bool operator==(const CarrierOriginModel&) const = default;

    void validate() const {
        fallback.validate();
        for (const auto& [key, m] : groups) {
            m.validate();
            auto it = group_counts.find(key);
            if (it == group_counts.end() || it->second < min_group_size)
                throw ArgumentError("group " + key.first + "/" + std::to_string(key.second) +
                                    " is below the minimum group size");
        }
    }
};

inline const std::vector<std::string>& carrier_origin_features() {
    static const std::vector<std::string> names = {"dep_delay", "distance"};
    return names;
}

inline CarrierOriginModel train_carrier_origin(const std::vector<FlightRecord>& records,
                                               const CarrierOriginOptions& options = {}) {
    std::map<CarrierOriginKey, std::vector<const FlightRecord*>> by_group;
    std::vector<const FlightRecord*> usable;
    for (const auto& r : records) {
        if (!r.has_delay_outcome()) continue;
        usable.push_back(&r);
        by_group[{r.carrier, r.origin_airport_id}].push_back(&r);
    }
    if (usable.size() < kMinimumTrainingRecords)
        throw EmptyDatasetError("carrier/origin model needs at least " + std::to_string(kMinimumTrainingRecords) +
                                " usable records, got " + std::to_string(usable.size()));

    auto fit = [&](const std::vector<const FlightRecord*>& rows) {
        Matrix x(rows.size(), 2);
        std::vector<double> y(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            x(i, 0) = *rows[i]->dep_delay;
            x(i, 1) = rows[i]->distance;
            y[i] = *rows[i]->arr_delay;
        }
        return fit_ols(x, y, options.with_intercept, carrier_origin_features());
    };

    CarrierOriginModel model;
    model.min_group_size = options.min_group_size;
    model.training_count = usable.size();
    model.fallback = fit(usable);
    for (const auto& [key, rows] : by_group) {
        if (rows.size() < options.min_group_size) continue;
        try {
            model.groups.emplace(key, fit(rows));
            model.group_counts.emplace(key, rows.size());
        } catch (const SingularDesignError&) {
            // Degenerate group (e.g. a single repeated departure delay); the fallback covers it.
        }
    }
    model.imputation = build_imputation_index(records, options.support_threshold);
    return model;
}

enum class DelayProvenance { measured, imputed, assumed_zero };
enum class ModelRoute { group, fallback };

inline const char* provenance_name(DelayProvenance p) {
    switch (p) {
        case DelayProvenance::measured: return "measured-delay";
        case DelayProvenance::imputed: return "imputed-delay";
        case DelayProvenance::assumed_zero: return "no-delay-assumed";
    }
    return "?";
}

inline const char* route_name(ModelRoute r) { return r == ModelRoute::group ? "group" : "fallback"; }

struct CarrierOriginQuery {
    std::string carrier;
    int origin_airport_id = 0;
    std::optional<double> dep_delay;
    double distance = 0;
    // Used only to look up an imputed departure delay.
    int month = 1;
    int crs_dep_time = 0;  // HHMM
};

struct CarrierOriginPrediction {
    double arr_delay = 0;
    double dep_delay_used = 0;
    DelayProvenance provenance = DelayProvenance::measured;
    ModelRoute route = ModelRoute::group;
};

// Resolves the departure delay (given, else imputed, else 0) and evaluates the
// group model for (carrier, origin), or the fallback when the group is unknown.
inline CarrierOriginPrediction predict_carrier_origin(const CarrierOriginModel& model, const CarrierOriginQuery& q,
                                                      const ImputationIndex* index = nullptr) {
    if (!(q.distance > 0)) throw ArgumentError("distance must be positive");
    if (!index) index = &model.imputation;
    CarrierOriginPrediction out;
    if (q.dep_delay) {
        out.dep_delay_used = *q.dep_delay;
        out.provenance = DelayProvenance::measured;
    } else if (auto imputed = impute_departure_delay(
                   *index, {q.origin_airport_id, q.carrier, q.month, (q.crs_dep_time / 100) / kImputationHourBucket})) {
        out.dep_delay_used = *imputed;
        out.provenance = DelayProvenance::imputed;
    } else {
        out.dep_delay_used = 0.0;
        out.provenance = DelayProvenance::assumed_zero;
    }
    auto it = model.groups.find({q.carrier, q.origin_airport_id});
    const LinearModel& linear = it != model.groups.end() ? it->second : model.fallback;
    out.route = it != model.groups.end() ? ModelRoute::group : ModelRoute::fallback;
    const double x[2] = {out.dep_delay_used, q.distance};
    out.arr_delay = predict_linear(linear, x);
    return out;
}

inline double predict_carrier_origin(const CarrierOriginModel& model, const FlightRecord& r) {
    CarrierOriginQuery q{r.carrier, r.origin_airport_id, r.dep_delay, r.distance, r.month, r.crs_dep_time};
    return predict_carrier_origin(model, q).arr_delay;
}

}  // namespace flightstat
