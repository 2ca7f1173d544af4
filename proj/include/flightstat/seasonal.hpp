#pragma once

// Seasonal model: a fixed depth-1 tree routes each flight by month to one of
// four independently fitted linear models over (departure delay, distance).

#include <array>
#include <string>
#include <vector>

#include "flightstat/calendar.hpp"
#include "flightstat/carrier_origin.hpp"
#include "flightstat/errors.hpp"
#include "flightstat/ingest.hpp"
#include "flightstat/numerics.hpp"

namespace flightstat {

inline constexpr std::size_t kMinSeasonRows = 10;

inline Season season_of(int month) {
    if (month < 1 || month > 12) throw ArgumentError("month out of range: " + std::to_string(month));
    return season_of_month_unchecked(month);
}

struct SeasonalModel {
    std::array<LinearModel, 4> seasons;
    std::array<std::size_t, 4> counts{};
    // True where a season had too few rows and carries the pooled fit.
    std::array<bool, 4> pooled{};

    bool operator==(const SeasonalModel&) const = default;

    const LinearModel& model_for(Season s) const { return seasons[static_cast<std::size_t>(s)]; }

    void validate() const {
        for (const auto& m : seasons) {
            m.validate();
            if (m.coefficients.size() != 2) throw ArgumentError("seasonal sub-model must have 2 coefficients");
        }
    }
};

inline SeasonalModel train_seasonal(const std::vector<FlightRecord>& records) {
    std::array<std::vector<const FlightRecord*>, 4> by_season;
    std::vector<const FlightRecord*> usable;
    for (const auto& r : records) {
        if (!r.has_delay_outcome()) continue;
        usable.push_back(&r);
        by_season[static_cast<std::size_t>(season_of(r.month))].push_back(&r);
    }
    if (usable.size() < kMinimumTrainingRecords)
        throw EmptyDatasetError("seasonal model needs at least " + std::to_string(kMinimumTrainingRecords) +
                                " usable records, got " + std::to_string(usable.size()));

    auto fit = [](const std::vector<const FlightRecord*>& rows) {
        Matrix x(rows.size(), 2);
        std::vector<double> y(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            x(i, 0) = *rows[i]->dep_delay;
            x(i, 1) = rows[i]->distance;
            y[i] = *rows[i]->arr_delay;
        }
        return fit_ols(x, y, true, carrier_origin_features());
    };

    SeasonalModel model;
    const LinearModel pooled = fit(usable);
    for (std::size_t s = 0; s < 4; ++s) {
        model.counts[s] = by_season[s].size();
        if (by_season[s].size() >= kMinSeasonRows) {
            try {
                model.seasons[s] = fit(by_season[s]);
                continue;
            } catch (const SingularDesignError&) {
            }
        }
        model.seasons[s] = pooled;
        model.pooled[s] = true;
    }
    return model;
}

inline double predict_seasonal(const SeasonalModel& model, int month, double dep_delay, double distance) {
    if (!(distance > 0)) throw ArgumentError("distance must be positive");
    const double x[2] = {dep_delay, distance};
    return predict_linear(model.model_for(season_of(month)), x);
}

}  // namespace flightstat
