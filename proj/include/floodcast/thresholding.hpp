#ifndef FLOODCAST_THRESHOLDING_HPP
#define FLOODCAST_THRESHOLDING_HPP

#include <string>
#include <vector>

#include "floodcast/common.hpp"
#include "floodcast/raster.hpp"

namespace floodcast {

/// One historic flood event: the gauge stage and the binary inundation
/// extent observed at it.
struct FloodEvent {
    double stage_m = 0.0;
    Raster extent;
    UtcTime timestamp = 0;
};

/// Training catalog for one gauge. All extents share geometry.
struct EventCatalog {
    std::string gauge_id;
    std::vector<FloodEvent> events;

    void validate() const;
};

/// Per-pixel stage thresholds plus what extrapolation beyond the training
/// range needs. thresholds uses +inf for never-wet and -inf for always-wet
/// pixels; nodata pixels stay NaN.
struct PixelThresholdMap {
    Raster thresholds;
    double max_train_stage_m = 0.0;
    Raster max_train_extent;  // the model's extent at the highest training stage
    double minimal_ratio = 1.0;
    double dilation_slope_px_per_m = 2.0;
};

/// Stage/wet observation pair for one pixel.
struct PixelEvent {
    double stage_m = 0.0;
    bool wet = false;
};

/// Learns one pixel's threshold by the iterative best-ratio procedure:
/// candidate thresholds are the remaining event stages; each iteration
/// accepts the candidate maximizing true-wet / false-wet (false-wet 0 counts
/// as infinite; ties prefer the lower threshold, then the larger true count),
/// discards events at or above it, and stops once the best ratio drops below
/// minimal_ratio. Never accepting yields +inf; a pixel wet in every event
/// yields -inf.
double learn_pixel_threshold(const std::vector<PixelEvent>& events, double minimal_ratio);

/// Per-pixel independent training over the catalog. Pixels nodata in any
/// event stay nodata. Deterministic regardless of the worker count.
PixelThresholdMap train_thresholding(const EventCatalog& cat, double minimal_ratio,
                                     double dilation_slope_px_per_m = 2.0);

/// Chebyshev-disc dilation of the wet set, clipped to bounds; nodata pixels
/// never turn wet.
Raster dilate_extent(const Raster& extent, int radius_px);

/// Extent at a stage: within the training range a pixel is wet iff
/// stage >= its threshold; above it, the highest training extent dilated by
/// round(slope * excess) pixels.
Raster predict_extent(const PixelThresholdMap& m, double stage_m);

// Artifact: thresholds ASCII grid (+-inf encoded as +-1e30), the highest
// training extent grid, and a JSON sidecar tying them together.
void save_threshold_model(const PixelThresholdMap& m, const std::string& dir, const std::string& gauge_id);
PixelThresholdMap load_threshold_model(const std::string& dir, const std::string& gauge_id);

// Event catalog manifest: JSON list of (stage_m, extent_path, timestamp).
void save_event_catalog(const EventCatalog& cat, const std::string& dir);
EventCatalog load_event_catalog(const std::string& manifest_path);

}  // namespace floodcast

#endif
