#ifndef FLOODCAST_HYDRODATA_HPP
#define FLOODCAST_HYDRODATA_HPP

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "floodcast/common.hpp"
#include "floodcast/raster.hpp"
#include "floodcast/series.hpp"

namespace floodcast {

/// One quality-control action per input sample.
enum class QcAction : std::uint8_t { kKept, kCorrected, kRemoved, kInterpolated };

struct QcTag {
    QcAction action = QcAction::kKept;
    double old_value = kMissing;  // set for kCorrected / kRemoved
    double new_value = kMissing;  // set for kCorrected / kInterpolated
};

/// Per-sample record of what QC did to a series. Tag count always equals the
/// input length.
struct QcReport {
    std::vector<QcTag> tags;
    std::vector<std::string> notes;

    std::size_t count(QcAction a) const;
    void write_csv(const StageSeries& s, const std::string& path) const;
};

struct QcConfig {
    double decimal_window_h = 12.0;  // sliding window for the decimal test
    double decimal_k = 6.0;          // band half width in MADs
    double outlier_margin_m = 1.0;   // slack beyond the historical min/max
    double jump_factor = 3.0;        // multiple of the historical max jump
    double max_gap_h = 6.0;          // longest gap filled by interpolation
    double precip_cap_mm_h = 200.0;  // upper rain intensity threshold
};

/// Historical stage statistics for one gauge, the reference for outlier
/// screening. An empty record (count == 0) disables the screen.
struct GaugeStats {
    double min_stage = 0.0;
    double max_stage = 0.0;
    double max_jump_m_per_h = 0.0;  // max |stage difference| per hour
    std::size_t count = 0;

    static GaugeStats from_series(const StageSeries& s);
};

/// Fixes order-of-magnitude entry errors: a sample falling outside
/// median +- k*MAD of its time window is replaced by x*10 or x/10 when that
/// candidate falls inside the band. Decisions are made against the original
/// series, so the result does not depend on scan order.
std::pair<StageSeries, QcReport> correct_decimal_errors(const StageSeries& s, double window_h,
                                                        double k = 6.0);

/// Removes (sets missing) samples outside the historical stage range, with a
/// margin, and samples whose step-to-step change exceeds jump_factor times
/// the historical maximum. Bounds are closed: a sample exactly at the
/// historical max survives.
std::pair<StageSeries, QcReport> detect_stage_outliers(const StageSeries& s, const GaugeStats& hist,
                                                       double margin_m = 1.0, double jump_factor = 3.0);

/// Linearly interpolates interior gaps of at most max_gap_h. Edge gaps and
/// longer gaps are preserved. Present samples are never altered, so the
/// operation is idempotent.
StageSeries fill_gaps_linear(const StageSeries& s, double max_gap_h);

std::pair<StageSeries, QcReport> fill_gaps_linear_report(const StageSeries& s, double max_gap_h);

/// One timestamped frame of gridded rain intensities (mm/h).
struct PrecipGridFrame {
    UtcTime timestamp = 0;
    Raster intensities;  // cell_size in degrees; NaN = missing
};

/// Fractional coverage of each grid cell by a gauge's drainage area.
struct WatershedMask {
    Raster weights;  // in [0,1], same geometry as the frames

    void validate() const;
};

/// Clamps a frame: negative intensities become missing, values above the cap
/// are set to the cap.
PrecipGridFrame clamp_precip(const PrecipGridFrame& f, double cap_mm_h = 200.0);

/// Area-weighted mean intensity per frame, accumulated to hourly depths:
/// depth(h) = mean intensity of the frames inside hour h, times 1 h. An hour
/// whose frames are all fully missing over the mask yields a missing sample.
/// Frames must share the mask geometry and arrive at a 30 minute step.
PrecipSeries basin_mean_precip(const std::vector<PrecipGridFrame>& frames, const WatershedMask& mask,
                               const std::string& basin_id = "");

/// Normalized difference water index (green - nir) / (green + nir).
/// Undefined (NaN) when green + nir == 0.
double ndwi(double green, double nir);

/// Water classification: wet iff the index is strictly positive; an
/// undefined index classifies dry.
bool ndwi_wet(double green, double nir);

/// Static configuration of one target gauge.
struct GaugeConfig {
    std::string gauge_id;
    double warning_stage_m = 0.0;
    std::optional<double> danger_stage_m;
    int max_lead_time_h = 24;
    std::vector<std::string> upstream_ids;

    void validate() const;
};

// Deployment configuration: one JSON document listing all gauges.
std::vector<GaugeConfig> read_gauge_configs(const std::string& path);
void write_gauge_configs(const std::vector<GaugeConfig>& gauges, const std::string& path);

// Precipitation frame files are named "<basin>_<ISO timestamp>.asc".
std::string precip_frame_filename(const std::string& basin_id, UtcTime t);
std::vector<PrecipGridFrame> read_precip_frames(const std::string& dir, const std::string& basin_id);
void write_precip_frame(const PrecipGridFrame& f, const std::string& dir, const std::string& basin_id);

}  // namespace floodcast

#endif
