#include <doctest.h>

#include <cmath>

#include "floodcast/synthdata.hpp"

using namespace floodcast;

TEST_CASE("valley dem is deterministic and piecewise linear without noise") {
    Raster a = make_valley_dem(32, 48, 1.5, 0.01, 0.0, 7);
    Raster b = make_valley_dem(32, 48, 1.5, 0.01, 0.0, 7);
    CHECK(a.values == b.values);

    Raster noisy = make_valley_dem(32, 48, 1.5, 0.01, 0.2, 7);
    Raster noisy2 = make_valley_dem(32, 48, 1.5, 0.01, 0.2, 7);
    CHECK(noisy.values == noisy2.values);
    CHECK(noisy.values != a.values);

    // noise-free cross sections rise linearly away from the channel
    for (int r = 0; r < a.rows; ++r) {
        int ctr = valley_channel_col(a.rows, a.cols, r);
        for (int c = ctr + 2; c < a.cols - 1; ++c) {
            double step1 = a.at(r, c + 1) - a.at(r, c);
            CHECK(step1 == doctest::Approx(0.01 * 16.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("valley minimum lies on the channel centerline") {
    Raster dem = make_valley_dem(24, 40, 1.0, 0.01, 0.0, 9);
    for (int r = 0; r < dem.rows; ++r) {
        int argmin = 0;
        for (int c = 1; c < dem.cols; ++c) {
            if (dem.at(r, c) < dem.at(r, argmin)) argmin = c;
        }
        CHECK(argmin == valley_channel_col(dem.rows, dem.cols, r));
    }
}

TEST_CASE("flat fill: empty below min, full above max, monotone in stage") {
    Raster dem = make_valley_dem(32, 32, 1.0, 0.01, 0.05, 11);
    auto seed = lowest_pixel(dem);

    double lo = kInf, hi = -kInf;
    for (double v : dem.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    Raster none = flat_fill_extent(dem, lo - 0.1, seed);
    for (double v : none.values) CHECK(v == 0.0);

    Raster all = flat_fill_extent(dem, hi + 0.1, seed);
    for (double v : all.values) CHECK(v == 1.0);

    Raster prev = none;
    for (double s = lo; s <= hi + 0.2; s += (hi - lo) / 7.0) {
        Raster cur = flat_fill_extent(dem, s, seed);
        for (std::size_t i = 0; i < cur.values.size(); ++i) {
            if (prev.values[i] == 1.0) CHECK(cur.values[i] == 1.0);
            if (cur.values[i] == 1.0) CHECK(dem.values[i] < s);
        }
        prev = std::move(cur);
    }
}

TEST_CASE("flat fill respects connectivity") {
    // two basins separated by a wall: the fill stays in the seeded one
    Raster dem(5, 5, 0.0, 16.0);
    for (int r = 0; r < 5; ++r) {
        for (int c = 0; c < 5; ++c) dem.at(r, c) = (c == 2) ? 10.0 : 0.0;
    }
    Raster wet = flat_fill_extent(dem, 1.0, {2, 0});
    for (int r = 0; r < 5; ++r) {
        CHECK(wet.wet(r, 0));
        CHECK(wet.wet(r, 1));
        CHECK_FALSE(wet.wet(r, 3));
        CHECK_FALSE(wet.wet(r, 4));
    }
}

TEST_CASE("linear reservoir: constant at base without rain") {
    PrecipSeries dry;
    dry.t0 = 1600000000;
    dry.step_s = 3600;
    dry.values.assign(48, 0.0);
    StageSeries s = route_linear_reservoir(dry, 24.0, 0.1, 2.5);
    for (double v : s.values) CHECK(v == 2.5);
}

TEST_CASE("linear reservoir: step input follows the discrete closed form") {
    PrecipSeries step;
    step.t0 = 1600000000;
    step.step_s = 3600;
    step.values.assign(100, 4.0);
    double k = 12.0, gain = 0.05, base = 1.0;
    StageSeries s = route_linear_reservoir(step, k, gain, base);
    // s[t] - base = gain*p*k * (1 - (1 - dt/k)^t) for the discrete recursion
    for (std::size_t t = 0; t < s.size(); ++t) {
        double expect = base + gain * 4.0 * k * (1.0 - std::pow(1.0 - 1.0 / k, static_cast<double>(t)));
        CHECK(s.values[t] == doctest::Approx(expect).epsilon(1e-9));
    }
    // doubling the gain doubles the response above base
    StageSeries s2 = route_linear_reservoir(step, k, 2.0 * gain, base);
    for (std::size_t t = 0; t < s.size(); ++t) {
        CHECK(s2.values[t] - base == doctest::Approx(2.0 * (s.values[t] - base)).epsilon(1e-9));
    }
    // never dips below base on non-negative rain
    for (double v : s.values) CHECK(v >= base);
}

TEST_CASE("linear reservoir rejects sub-step time constants") {
    PrecipSeries p;
    p.t0 = 0;
    p.step_s = 3600;
    p.values.assign(10, 1.0);
    CHECK_THROWS_AS(route_linear_reservoir(p, 0.5, 0.1, 0.0), DataError);
}

TEST_CASE("event catalog: exact extents at zero flip rate, noisy at five percent") {
    Raster dem = make_valley_dem(48, 48, 1.0, 0.005, 0.0, 13);
    PrecipSeries precip = make_storm_precip(1600000000, 600, 5, 0.03, 8.0);
    StageSeries stages = route_linear_reservoir(precip, 24.0, 0.03, 0.0);

    EventCatalog clean = make_event_catalog(dem, stages, 8, 21, 0.0);
    CHECK(clean.events.size() == 8);
    auto seed = lowest_pixel(dem);
    for (const auto& e : clean.events) {
        Raster truth = flat_fill_extent(dem, e.stage_m, seed);
        CHECK(e.extent.values == truth.values);
    }

    EventCatalog single = make_event_catalog(dem, stages, 1, 21, 0.0);
    CHECK(single.events.size() == 1);

    EventCatalog noisy = make_event_catalog(dem, stages, 8, 21, 0.05);
    double flipped = 0.0, total = 0.0;
    for (std::size_t k = 0; k < noisy.events.size(); ++k) {
        Raster truth = flat_fill_extent(dem, noisy.events[k].stage_m, seed);
        for (std::size_t i = 0; i < truth.values.size(); ++i) {
            total += 1.0;
            if (noisy.events[k].extent.values[i] != truth.values[i]) flipped += 1.0;
        }
    }
    // binomial: 5% +- a few sigma over ~18k pixels
    CHECK(flipped / total == doctest::Approx(0.05).epsilon(0.15));
}

TEST_CASE("event sampling prefers peaks") {
    Raster dem = make_valley_dem(16, 16, 1.0, 0.01, 0.0, 14);
    PrecipSeries precip = make_storm_precip(1600000000, 2000, 6, 0.02, 8.0);
    StageSeries stages = route_linear_reservoir(precip, 24.0, 0.03, 0.0);
    EventCatalog cat = make_event_catalog(dem, stages, 10, 3, 0.0);

    std::vector<double> sorted = stages.values;
    std::sort(sorted.begin(), sorted.end());
    double q60 = sorted[static_cast<std::size_t>(0.6 * sorted.size())];
    int above = 0;
    for (const auto& e : cat.events) {
        if (e.stage_m > q60) ++above;
    }
    CHECK(above >= 6);  // heavily biased toward the upper tail
}
