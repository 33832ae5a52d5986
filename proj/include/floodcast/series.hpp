#ifndef FLOODCAST_SERIES_HPP
#define FLOODCAST_SERIES_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "floodcast/common.hpp"

namespace floodcast {

/// Uniformly sampled water-stage record for one gauge. Missing samples are
/// NaN; the time of sample i is t0 + i*step_s.
struct StageSeries {
    std::string gauge_id;
    UtcTime t0 = 0;
    std::int64_t step_s = 3600;
    std::vector<double> values;

    double step_hours() const { return static_cast<double>(step_s) / 3600.0; }
    UtcTime time_at(std::size_t i) const { return t0 + static_cast<std::int64_t>(i) * step_s; }
    std::size_t size() const { return values.size(); }

    /// Index of the sample at time t, if t lies exactly on the grid.
    std::optional<std::size_t> index_of(UtcTime t) const;

    void validate() const;  // throws DataError on a broken invariant
};

/// Basin-averaged precipitation depths (mm per step).
struct PrecipSeries {
    std::string basin_id;
    UtcTime t0 = 0;
    std::int64_t step_s = 3600;
    std::vector<double> values;

    double step_hours() const { return static_cast<double>(step_s) / 3600.0; }
    UtcTime time_at(std::size_t i) const { return t0 + static_cast<std::int64_t>(i) * step_s; }
    std::size_t size() const { return values.size(); }
};

// Stage CSV: header "timestamp,stage_m", ISO-8601 UTC timestamps, empty
// stage field means missing, LF line endings. Timestamps must form a strictly
// uniform grid. The same layout serves precipitation series with the header
// "timestamp,depth_mm".
StageSeries read_stage_csv(const std::string& path, const std::string& gauge_id);
void write_stage_csv(const StageSeries& s, const std::string& path);
PrecipSeries read_precip_csv(const std::string& path, const std::string& basin_id);
void write_precip_csv(const PrecipSeries& p, const std::string& path);

}  // namespace floodcast

#endif
