#include "floodcast/thresholding.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace floodcast {

void EventCatalog::validate() const {
    if (events.empty()) throw DataError("event catalog '" + gauge_id + "' is empty");
    for (const auto& e : events) {
        if (!std::isfinite(e.stage_m)) throw DataError("event catalog: non-finite stage");
        if (!e.extent.same_geometry(events.front().extent)) {
            throw DataError("event catalog: extents differ in geometry");
        }
        for (double v : e.extent.values) {
            if (is_present(v) && v != 0.0 && v != 1.0) {
                throw DataError("event catalog: extents must be binary");
            }
        }
    }
}

double learn_pixel_threshold(const std::vector<PixelEvent>& events, double minimal_ratio) {
    if (events.empty()) throw DataError("learn_pixel_threshold: no events");
    if (!(minimal_ratio > 0.0)) throw DataError("learn_pixel_threshold: minimal_ratio must be > 0");

    bool all_wet = true;
    for (const auto& e : events) all_wet = all_wet && e.wet;
    if (all_wet) return -kInf;

    std::vector<PixelEvent> remaining = events;
    double accepted = kInf;
    while (!remaining.empty()) {
        // distinct candidate stages among the remaining events
        std::vector<double> cand;
        cand.reserve(remaining.size());
        for (const auto& e : remaining) cand.push_back(e.stage_m);
        std::sort(cand.begin(), cand.end());
        cand.erase(std::unique(cand.begin(), cand.end()), cand.end());

        double best_t = kMissing, best_ratio = -kInf;
        std::int64_t best_tp = -1;
        for (double t : cand) {
            std::int64_t tp = 0, fp = 0;
            for (const auto& e : remaining) {
                if (e.stage_m >= t) (e.wet ? tp : fp) += 1;
            }
            double ratio = fp == 0 ? kInf : static_cast<double>(tp) / static_cast<double>(fp);
            bool better = ratio > best_ratio ||
                          (ratio == best_ratio && t < best_t) ||
                          (ratio == best_ratio && t == best_t && tp > best_tp);
            if (better) {
                best_ratio = ratio;
                best_t = t;
                best_tp = tp;
            }
        }
        if (best_ratio < minimal_ratio) break;
        accepted = best_t;
        std::erase_if(remaining, [&](const PixelEvent& e) { return e.stage_m >= best_t; });
    }
    return accepted;
}

PixelThresholdMap train_thresholding(const EventCatalog& cat, double minimal_ratio,
                                     double dilation_slope_px_per_m) {
    cat.validate();
    // checked here so the per-pixel learner cannot throw inside a worker
    if (!(minimal_ratio > 0.0)) throw DataError("train_thresholding: minimal_ratio must be > 0");
    const Raster& geom = cat.events.front().extent;

    PixelThresholdMap m;
    m.minimal_ratio = minimal_ratio;
    m.dilation_slope_px_per_m = dilation_slope_px_per_m;
    m.thresholds = Raster(geom.rows, geom.cols, 0.0, geom.cell_size);
    m.thresholds.origin_x = geom.origin_x;
    m.thresholds.origin_y = geom.origin_y;

    m.max_train_stage_m = cat.events.front().stage_m;
    for (const auto& e : cat.events) m.max_train_stage_m = std::max(m.max_train_stage_m, e.stage_m);

    std::size_t n = geom.size();
    parallel_for(static_cast<std::int64_t>(n), [&](std::int64_t i) {
        std::vector<PixelEvent> px;
        px.reserve(cat.events.size());
        bool nodata = false;
        for (const auto& e : cat.events) {
            double v = e.extent.values[static_cast<std::size_t>(i)];
            if (is_missing(v)) { nodata = true; break; }
            px.push_back({e.stage_m, v == 1.0});
        }
        m.thresholds.values[static_cast<std::size_t>(i)] =
            nodata ? kMissing : learn_pixel_threshold(px, minimal_ratio);
    });

    // Extrapolation starts from the model's own extent at the highest
    // training stage, which keeps predicted extents nested across the
    // training/extrapolation boundary.
    m.max_train_extent = Raster(geom.rows, geom.cols, 0.0, geom.cell_size);
    m.max_train_extent.origin_x = geom.origin_x;
    m.max_train_extent.origin_y = geom.origin_y;
    for (std::size_t i = 0; i < n; ++i) {
        double t = m.thresholds.values[i];
        m.max_train_extent.values[i] = is_missing(t) ? kMissing : (m.max_train_stage_m >= t ? 1.0 : 0.0);
    }
    return m;
}

Raster dilate_extent(const Raster& extent, int radius_px) {
    if (radius_px < 0) throw DataError("dilate_extent: negative radius");
    if (radius_px == 0) return extent;
    int rows = extent.rows, cols = extent.cols;

    // Square structuring element is separable: rows, then columns.
    std::vector<std::uint8_t> pass1(extent.size(), 0);
    for (int r = 0; r < rows; ++r) {
        const double* src = extent.values.data() + static_cast<std::size_t>(r) * cols;
        std::uint8_t* dst = pass1.data() + static_cast<std::size_t>(r) * cols;
        int cover = -1;
        for (int c = 0; c < cols; ++c) {
            if (src[c] == 1.0) cover = c + radius_px;
            if (c <= cover) dst[c] = 1;
        }
        cover = cols;
        for (int c = cols - 1; c >= 0; --c) {
            if (src[c] == 1.0) cover = c - radius_px;
            if (c >= cover) dst[c] = 1;
        }
    }
    Raster out = extent;
    for (int c = 0; c < cols; ++c) {
        int cover = -1;
        for (int r = 0; r < rows; ++r) {
            if (pass1[static_cast<std::size_t>(r) * cols + c]) cover = r + radius_px;
            if (r <= cover && !out.is_nodata(r, c)) out.at(r, c) = 1.0;
        }
        cover = rows;
        for (int r = rows - 1; r >= 0; --r) {
            if (pass1[static_cast<std::size_t>(r) * cols + c]) cover = r - radius_px;
            if (r >= cover && !out.is_nodata(r, c)) out.at(r, c) = 1.0;
        }
    }
    return out;
}

Raster predict_extent(const PixelThresholdMap& m, double stage_m) {
    if (stage_m <= m.max_train_stage_m) {
        Raster out = m.thresholds;
        for (double& v : out.values) {
            if (is_missing(v)) continue;
            v = stage_m >= v ? 1.0 : 0.0;
        }
        return out;
    }
    int radius = static_cast<int>(std::lround(m.dilation_slope_px_per_m * (stage_m - m.max_train_stage_m)));
    return dilate_extent(m.max_train_extent, radius);
}

namespace {

constexpr double kInfEncoding = 1e30;

}  // namespace

void save_threshold_model(const PixelThresholdMap& m, const std::string& dir, const std::string& gauge_id) {
    fs::create_directories(dir);
    Raster enc = m.thresholds;
    for (double& v : enc.values) {
        if (is_missing(v)) continue;
        if (v == kInf) v = kInfEncoding;
        else if (v == -kInf) v = -kInfEncoding;
    }
    std::string thr_name = gauge_id + "_thresholds.asc";
    std::string ext_name = gauge_id + "_max_extent.asc";
    write_asc(enc, (fs::path(dir) / thr_name).string());
    write_asc(m.max_train_extent, (fs::path(dir) / ext_name).string());
    json sidecar = {
        {"schema_version", 1},
        {"gauge_id", gauge_id},
        {"max_train_stage_m", m.max_train_stage_m},
        {"minimal_ratio", m.minimal_ratio},
        {"dilation_slope_px_per_m", m.dilation_slope_px_per_m},
        {"thresholds_file", thr_name},
        {"max_extent_file", ext_name},
    };
    std::ofstream f((fs::path(dir) / (gauge_id + "_threshold.json")).string(), std::ios::binary);
    if (!f) throw DataError("cannot write threshold sidecar in '" + dir + "'");
    f << sidecar.dump(2) << "\n";
}

PixelThresholdMap load_threshold_model(const std::string& dir, const std::string& gauge_id) {
    fs::path side = fs::path(dir) / (gauge_id + "_threshold.json");
    std::ifstream f(side, std::ios::binary);
    if (!f) throw DataError("cannot open '" + side.string() + "'");
    json doc;
    try {
        f >> doc;
    } catch (const json::exception& e) {
        throw DataError(side.string() + ": " + e.what());
    }
    PixelThresholdMap m;
    m.max_train_stage_m = doc.at("max_train_stage_m").get<double>();
    m.minimal_ratio = doc.at("minimal_ratio").get<double>();
    m.dilation_slope_px_per_m = doc.at("dilation_slope_px_per_m").get<double>();
    m.thresholds = read_asc((fs::path(dir) / doc.at("thresholds_file").get<std::string>()).string());
    m.max_train_extent = read_asc((fs::path(dir) / doc.at("max_extent_file").get<std::string>()).string());
    for (double& v : m.thresholds.values) {
        if (is_missing(v)) continue;
        if (v >= kInfEncoding) v = kInf;
        else if (v <= -kInfEncoding) v = -kInf;
    }
    return m;
}

void save_event_catalog(const EventCatalog& cat, const std::string& dir) {
    cat.validate();
    fs::create_directories(dir);
    json events = json::array();
    for (std::size_t i = 0; i < cat.events.size(); ++i) {
        std::string name = "extent_" + std::to_string(i) + ".asc";
        write_asc(cat.events[i].extent, (fs::path(dir) / name).string());
        events.push_back({
            {"stage_m", cat.events[i].stage_m},
            {"extent_path", name},
            {"timestamp", format_iso8601_utc(cat.events[i].timestamp)},
        });
    }
    json doc = {{"schema_version", 1}, {"gauge_id", cat.gauge_id}, {"events", events}};
    std::ofstream f((fs::path(dir) / "catalog.json").string(), std::ios::binary);
    if (!f) throw DataError("cannot write catalog manifest in '" + dir + "'");
    f << doc.dump(2) << "\n";
}

EventCatalog load_event_catalog(const std::string& manifest_path) {
    std::ifstream f(manifest_path, std::ios::binary);
    if (!f) throw DataError("cannot open '" + manifest_path + "'");
    json doc;
    try {
        f >> doc;
    } catch (const json::exception& e) {
        throw DataError(manifest_path + ": " + e.what());
    }
    EventCatalog cat;
    cat.gauge_id = doc.value("gauge_id", "");
    fs::path base = fs::path(manifest_path).parent_path();
    for (const auto& je : doc.at("events")) {
        FloodEvent e;
        e.stage_m = je.at("stage_m").get<double>();
        e.timestamp = parse_iso8601_utc(je.at("timestamp").get<std::string>());
        e.extent = read_asc((base / je.at("extent_path").get<std::string>()).string());
        cat.events.push_back(std::move(e));
    }
    cat.validate();
    return cat;
}

}  // namespace floodcast
