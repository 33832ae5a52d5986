#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "floodcast/evalkit.hpp"
#include "floodcast/synthdata.hpp"
#include "floodcast/thresholding.hpp"

using namespace floodcast;

namespace {

// Exhaustive oracle: replay the documented iteration over all candidate
// subsets by brute force. Mirrors the contract, not the implementation.
double exhaustive_threshold_oracle(std::vector<PixelEvent> remaining, double minimal_ratio) {
    bool all_wet = !remaining.empty();
    for (const auto& e : remaining) all_wet = all_wet && e.wet;
    if (all_wet) return -kInf;
    double accepted = kInf;
    while (!remaining.empty()) {
        double best_t = kMissing, best_ratio = -kInf;
        for (const auto& cand : remaining) {
            double t = cand.stage_m;
            double tp = 0, fp = 0;
            for (const auto& e : remaining) {
                if (e.stage_m >= t) (e.wet ? tp : fp) += 1;
            }
            double ratio = fp == 0 ? kInf : tp / fp;
            if (ratio > best_ratio || (ratio == best_ratio && t < best_t)) {
                best_ratio = ratio;
                best_t = t;
            }
        }
        if (best_ratio < minimal_ratio) break;
        accepted = best_t;
        std::vector<PixelEvent> next;
        for (const auto& e : remaining) {
            if (e.stage_m < best_t) next.push_back(e);
        }
        remaining = std::move(next);
    }
    return accepted;
}

EventCatalog bathtub_catalog(const Raster& dem, const std::vector<double>& stages) {
    EventCatalog cat;
    cat.gauge_id = "g";
    auto seed = lowest_pixel(dem);
    UtcTime t = 1600000000;
    for (double s : stages) {
        cat.events.push_back({s, flat_fill_extent(dem, s, seed), t});
        t += 86400;
    }
    return cat;
}

}  // namespace

TEST_CASE("pixel threshold: documented examples") {
    CHECK(learn_pixel_threshold({{1, false}, {2, true}, {3, true}}, 1.0) == 2.0);
    CHECK(learn_pixel_threshold({{1, false}, {2, false}, {3, false}}, 1.0) == kInf);
    CHECK(learn_pixel_threshold({{1, true}, {2, true}}, 1.0) == -kInf);
    // second iteration's 1/1 ratio loses to a minimal ratio of 3
    CHECK(learn_pixel_threshold({{1, true}, {2, false}, {3, true}}, 3.0) == 3.0);
    // with ratio 1 the same events accept the lower threshold too
    CHECK(learn_pixel_threshold({{1, true}, {2, false}, {3, true}}, 1.0) == 1.0);
}

TEST_CASE("pixel threshold matches the exhaustive oracle on random instances") {
    Rng rng(404);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<PixelEvent> events;
        int n = 1 + static_cast<int>(rng.uniform_index(8));
        for (int i = 0; i < n; ++i) {
            double stage = std::floor(rng.uniform(0.0, 6.0) * 2.0) / 2.0;  // ties likely
            events.push_back({stage, rng.uniform() < 0.5});
        }
        for (double ratio : {0.5, 1.0, 2.0, 5.0}) {
            CHECK(learn_pixel_threshold(events, ratio) == exhaustive_threshold_oracle(events, ratio));
        }
    }
}

TEST_CASE("pixel threshold is invariant to event order") {
    Rng rng(7);
    std::vector<PixelEvent> events{{1.0, true}, {2.5, false}, {2.5, true}, {4.0, true}, {0.5, false}};
    double ref = learn_pixel_threshold(events, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        rng.shuffle(events);
        CHECK(learn_pixel_threshold(events, 1.0) == ref);
    }
}

TEST_CASE("every accepted iteration satisfies the minimal ratio on training data") {
    // recall-cost structure: replay predictions against the training events
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<PixelEvent> events;
        for (int i = 0; i < 6; ++i) events.push_back({rng.uniform(0.0, 5.0), rng.uniform() < 0.6});
        double mr = 2.0;
        double thr = learn_pixel_threshold(events, mr);
        if (thr == kInf || thr == -kInf) continue;
        double tp = 0, fp = 0;
        for (const auto& e : events) {
            if (e.stage_m >= thr) (e.wet ? tp : fp) += 1;
        }
        if (fp > 0) CHECK(tp / fp >= mr);
    }
}

TEST_CASE("bathtub training recovers per-pixel fill stages") {
    Raster dem = make_valley_dem(40, 40, 1.0, 0.01, 0.0, 1);
    std::vector<double> stages;
    for (int i = 0; i < 10; ++i) stages.push_back(-0.8 + 0.3 * i);
    EventCatalog cat = bathtub_catalog(dem, stages);
    PixelThresholdMap m = train_thresholding(cat, 1.0);

    // threshold of each pixel equals the lowest event stage that wets it,
    // so it exceeds the pixel's fill level by at most one stage gap
    auto seed = lowest_pixel(dem);
    for (int r = 0; r < dem.rows; ++r) {
        for (int c = 0; c < dem.cols; ++c) {
            double t = m.thresholds.at(r, c);
            if (t == kInf || t == -kInf) continue;
            CHECK(flat_fill_extent(dem, t, seed).wet(r, c));
            // one stage step lower the pixel was observed dry, unless the
            // lowest event already wets it
            if (t > stages.front()) {
                CHECK_FALSE(flat_fill_extent(dem, t - 0.3, seed).wet(r, c));
            }
        }
    }
    CHECK(m.max_train_stage_m == stages.back());
}

TEST_CASE("all-dry and per-pixel independence") {
    Raster dem = make_valley_dem(16, 16, 1.0, 0.01, 0.0, 2);
    EventCatalog cat = bathtub_catalog(dem, {-5.0});  // below the channel floor
    PixelThresholdMap m = train_thresholding(cat, 1.0);
    for (double t : m.thresholds.values) CHECK(t == kInf);

    // identical results across worker counts
    EventCatalog cat2 = bathtub_catalog(dem, {-0.5, 0.0, 0.5});
    setenv("FLOODCAST_THREADS", "1", 1);
    PixelThresholdMap serial = train_thresholding(cat2, 1.0);
    setenv("FLOODCAST_THREADS", "4", 1);
    PixelThresholdMap parallel = train_thresholding(cat2, 1.0);
    unsetenv("FLOODCAST_THREADS");
    for (std::size_t i = 0; i < serial.thresholds.values.size(); ++i) {
        double a = serial.thresholds.values[i], b = parallel.thresholds.values[i];
        CHECK(((is_missing(a) && is_missing(b)) || a == b));
    }
}

TEST_CASE("dilation: identity, single pixel, superset, nodata") {
    Raster e(5, 5, 0.0, 16.0);
    e.at(2, 2) = 1.0;
    Raster same = dilate_extent(e, 0);
    CHECK(same.values == e.values);

    Raster d1 = dilate_extent(e, 1);
    int wet = 0;
    for (int r = 0; r < 5; ++r) {
        for (int c = 0; c < 5; ++c) {
            bool in_block = std::abs(r - 2) <= 1 && std::abs(c - 2) <= 1;
            CHECK(d1.wet(r, c) == in_block);
            if (d1.wet(r, c)) ++wet;
        }
    }
    CHECK(wet == 9);

    // clipping at the border and the superset property
    Raster corner(3, 3, 0.0, 16.0);
    corner.at(0, 0) = 1.0;
    corner.at(2, 2) = kMissing;
    Raster d2 = dilate_extent(corner, 5);
    CHECK(d2.wet(0, 0));
    CHECK(d2.wet(2, 1));
    CHECK(is_missing(d2.at(2, 2)));  // nodata never becomes wet
    for (std::size_t i = 0; i < corner.values.size(); ++i) {
        if (corner.values[i] == 1.0) CHECK(d2.values[i] == 1.0);
    }
}

TEST_CASE("dilation matches the set-definition oracle") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        Raster e(12, 12, 0.0, 16.0);
        for (double& v : e.values) v = rng.uniform() < 0.1 ? 1.0 : 0.0;
        int radius = static_cast<int>(rng.uniform_index(4));
        Raster got = dilate_extent(e, radius);
        for (int r = 0; r < e.rows; ++r) {
            for (int c = 0; c < e.cols; ++c) {
                bool expect = false;
                for (int rr = r - radius; rr <= r + radius && !expect; ++rr) {
                    for (int cc = c - radius; cc <= c + radius && !expect; ++cc) {
                        if (e.in_bounds(rr, cc) && e.wet(rr, cc)) expect = true;
                    }
                }
                CHECK(got.wet(r, c) == expect);
            }
        }
    }
}

TEST_CASE("predict_extent: threshold rule, boundary, extrapolation") {
    Raster dem = make_valley_dem(32, 32, 1.0, 0.01, 0.0, 3);
    // the lowest event is fully dry, so no pixel is wet in every event and
    // every threshold stays finite
    std::vector<double> stages{-2.0, 0.0, 0.5, 1.0};
    EventCatalog cat = bathtub_catalog(dem, stages);
    PixelThresholdMap m = train_thresholding(cat, 1.0, 2.0);

    // at the max training stage the prediction is exactly the wet set of
    // the threshold rule
    Raster at_max = predict_extent(m, 1.0);
    for (std::size_t i = 0; i < at_max.values.size(); ++i) {
        double t = m.thresholds.values[i];
        CHECK(at_max.values[i] == ((1.0 >= t) ? 1.0 : 0.0));
    }
    CHECK(at_max.values == m.max_train_extent.values);

    // far below every threshold nothing is wet
    Raster empty = predict_extent(m, -10.0);
    for (double v : empty.values) CHECK(v == 0.0);

    // above the range: dilation radius round(slope * excess)
    Raster extrap = predict_extent(m, 2.0);  // excess 1.0, slope 2 -> radius 2
    Raster manual = dilate_extent(m.max_train_extent, 2);
    CHECK(extrap.values == manual.values);
    for (std::size_t i = 0; i < extrap.values.size(); ++i) {
        if (m.max_train_extent.values[i] == 1.0) CHECK(extrap.values[i] == 1.0);
    }
}

TEST_CASE("predicted extents are monotone in stage across the extrapolation boundary") {
    Raster dem = make_valley_dem(32, 32, 1.0, 0.008, 0.05, 4);
    std::vector<double> stages{-0.6, -0.2, 0.2, 0.6, 1.0};
    EventCatalog cat = bathtub_catalog(dem, stages);
    PixelThresholdMap m = train_thresholding(cat, 1.0, 2.0);

    Raster prev = predict_extent(m, -1.0);
    for (double s = -0.9; s < 2.0; s += 0.1) {
        Raster cur = predict_extent(m, s);
        for (std::size_t i = 0; i < cur.values.size(); ++i) {
            if (prev.values[i] == 1.0) CHECK(cur.values[i] == 1.0);
        }
        prev = std::move(cur);
    }
}

TEST_CASE("threshold model artifact round trip keeps sentinels") {
    Raster dem = make_valley_dem(16, 16, 1.0, 0.01, 0.0, 5);
    EventCatalog cat = bathtub_catalog(dem, {0.0, 0.4});
    PixelThresholdMap m = train_thresholding(cat, 1.0, 3.5);

    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "floodcast_thr_test";
    fs::create_directories(dir);
    save_threshold_model(m, dir.string(), "g");
    PixelThresholdMap back = load_threshold_model(dir.string(), "g");
    CHECK(back.max_train_stage_m == m.max_train_stage_m);
    CHECK(back.dilation_slope_px_per_m == 3.5);
    bool saw_inf = false;
    for (std::size_t i = 0; i < m.thresholds.values.size(); ++i) {
        CHECK(back.thresholds.values[i] == m.thresholds.values[i]);
        if (m.thresholds.values[i] == kInf) saw_inf = true;
    }
    CHECK(saw_inf);  // the valley rim never floods in this catalog
    CHECK(back.max_train_extent.values == m.max_train_extent.values);
}

TEST_CASE("event catalog manifest round trip") {
    Raster dem = make_valley_dem(12, 12, 1.0, 0.01, 0.0, 6);
    EventCatalog cat = bathtub_catalog(dem, {0.0, 0.3, 0.3});
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "floodcast_cat_test";
    fs::remove_all(dir);
    save_event_catalog(cat, dir.string());
    EventCatalog back = load_event_catalog((dir / "catalog.json").string());
    REQUIRE(back.events.size() == 3);
    CHECK(back.gauge_id == "g");
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back.events[i].stage_m == cat.events[i].stage_m);
        CHECK(back.events[i].extent.values == cat.events[i].extent.values);
    }
    EventCatalog empty;
    CHECK_THROWS_AS(train_thresholding(empty, 1.0), DataError);
}

TEST_CASE("catalog validation rejects non-binary extents") {
    EventCatalog cat;
    cat.gauge_id = "g";
    FloodEvent e;
    e.stage_m = 1.0;
    e.extent = Raster(2, 2, 0.0, 16.0);
    e.extent.at(0, 0) = 0.5;
    cat.events.push_back(e);
    CHECK_THROWS_AS(cat.validate(), DataError);
}
