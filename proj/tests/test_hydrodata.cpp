#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "floodcast/hydrodata.hpp"

using namespace floodcast;
namespace fs = std::filesystem;

namespace {

StageSeries make_series(std::vector<double> values, std::int64_t step_s = 3600) {
    StageSeries s;
    s.gauge_id = "t";
    s.t0 = 1600000000;
    s.step_s = step_s;
    s.values = std::move(values);
    return s;
}

// Direct rule oracle for the decimal test: median +- k*MAD over the time
// window, replacement by x/10 or x*10 when the candidate falls inside.
std::vector<double> decimal_rule_oracle(const std::vector<double>& v, int half, double k) {
    std::vector<double> out = v;
    auto median = [](std::vector<double> w) {
        std::sort(w.begin(), w.end());
        return w.size() % 2 ? w[w.size() / 2] : 0.5 * (w[w.size() / 2 - 1] + w[w.size() / 2]);
    };
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (is_missing(v[i])) continue;
        std::vector<double> window;
        for (std::size_t j = (i < static_cast<std::size_t>(half) ? 0 : i - half);
             j < v.size() && j <= i + static_cast<std::size_t>(half); ++j) {
            if (is_present(v[j])) window.push_back(v[j]);
        }
        if (window.size() < 3) continue;
        double med = median(window);
        std::vector<double> dev;
        for (double w : window) dev.push_back(std::fabs(w - med));
        double mad = median(dev);
        double lo = med - k * mad, hi = med + k * mad;
        if (v[i] >= lo && v[i] <= hi) continue;
        if (v[i] * 0.1 >= lo && v[i] * 0.1 <= hi) out[i] = v[i] * 0.1;
        else if (v[i] * 10.0 >= lo && v[i] * 10.0 <= hi) out[i] = v[i] * 10.0;
    }
    return out;
}

}  // namespace

TEST_CASE("decimal correction fixes a x10 entry error") {
    auto [fixed, rep] = correct_decimal_errors(make_series({5.1, 5.2, 52.0, 5.3}), 8.0, 6.0);
    CHECK(fixed.values[2] == doctest::Approx(5.2));
    CHECK(rep.tags[2].action == QcAction::kCorrected);
    CHECK(rep.tags[2].old_value == 52.0);
    CHECK(rep.count(QcAction::kCorrected) == 1);
    CHECK(rep.count(QcAction::kKept) == 3);
}

TEST_CASE("decimal correction leaves a clean series untouched") {
    auto [fixed, rep] = correct_decimal_errors(make_series({5.1, 5.2, 5.3}), 3.0, 6.0);
    CHECK(fixed.values == std::vector<double>{5.1, 5.2, 5.3});
    CHECK(rep.count(QcAction::kCorrected) == 0);
}

TEST_CASE("decimal correction matches the direct rule oracle") {
    // with k=6 the band around {0.4,0.5,0.6} still contains 0.05, so the
    // /10 slip survives; a tighter k catches it
    auto v = std::vector<double>{0.4, 0.5, 0.05, 0.6};
    auto [k6, rep6] = correct_decimal_errors(make_series(v), 8.0, 6.0);
    CHECK(k6.values == decimal_rule_oracle(v, 4, 6.0));
    CHECK(k6.values == v);

    auto [k2, rep2] = correct_decimal_errors(make_series(v), 8.0, 2.0);
    CHECK(k2.values == decimal_rule_oracle(v, 4, 2.0));
    CHECK(k2.values[2] == doctest::Approx(0.5));
    CHECK(rep2.tags[2].action == QcAction::kCorrected);

    // randomized corpus against the oracle
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> series;
        for (int i = 0; i < 24; ++i) series.push_back(4.0 + 0.3 * rng.normal());
        if (trial % 2 == 0) series[5 + rng.uniform_index(10)] *= 10.0;
        auto [got, rep] = correct_decimal_errors(make_series(series), 6.0, 6.0);
        CHECK(got.values == decimal_rule_oracle(series, 3, 6.0));
    }
}

TEST_CASE("decimal correction only ever scales by ten") {
    Rng rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> series;
        for (int i = 0; i < 30; ++i) series.push_back(2.0 + rng.uniform(0.0, 3.0));
        series[rng.uniform_index(30)] *= 10.0;
        StageSeries s = make_series(series);
        auto [fixed, rep] = correct_decimal_errors(s, 8.0, 6.0);
        for (std::size_t i = 0; i < series.size(); ++i) {
            if (fixed.values[i] != series[i]) {
                bool tenth = fixed.values[i] == doctest::Approx(series[i] * 0.1);
                bool tenfold = fixed.values[i] == doctest::Approx(series[i] * 10.0);
                CHECK((tenth || tenfold));
            }
        }
    }
}

TEST_CASE("decimal correction reports a too-short series") {
    StageSeries s = make_series({1.0, 20.0});
    auto [fixed, rep] = correct_decimal_errors(s, 12.0, 6.0);
    CHECK(fixed.values == s.values);
    REQUIRE(rep.notes.size() == 1);
    CHECK(rep.notes[0] == "too short");
}

TEST_CASE("outlier screen removes jumps and range violations") {
    GaugeStats hist;
    hist.min_stage = 1.0;
    hist.max_stage = 3.0;
    hist.max_jump_m_per_h = 0.2;
    hist.count = 100;

    // jump of 1.0 m/h with a 3x factor on 0.2 -> removed
    auto [got, rep] = detect_stage_outliers(make_series({2.0, 3.0, 2.1}), hist, 1.0, 3.0);
    CHECK(is_missing(got.values[1]));
    CHECK(rep.tags[1].action == QcAction::kRemoved);
    // the sample after a removed one has no previous value, so no jump test
    CHECK(is_present(got.values[2]));

    // all samples within bounds -> unchanged
    auto [ok, rep2] = detect_stage_outliers(make_series({2.0, 2.1, 2.15}), hist, 1.0, 3.0);
    CHECK(ok.values == std::vector<double>{2.0, 2.1, 2.15});

    // boundary: exactly at the historical max survives (closed interval)
    auto [edge, rep3] = detect_stage_outliers(make_series({3.0, 3.05}), hist, 1.0, 3.0);
    CHECK(edge.values[0] == 3.0);
    // above max + margin goes missing
    auto [high, rep4] = detect_stage_outliers(make_series({2.0, 4.5}), hist, 1.0, 100.0);
    CHECK(is_missing(high.values[1]));
}

TEST_CASE("outlier screen is a no-op without history") {
    auto [got, rep] = detect_stage_outliers(make_series({50.0, -10.0}), GaugeStats{}, 1.0, 3.0);
    CHECK(got.values == std::vector<double>{50.0, -10.0});
    CHECK(rep.notes.size() == 1);
}

TEST_CASE("gap filling: midpoint, long gaps, edges") {
    auto filled = fill_gaps_linear(make_series({1.0, kMissing, 3.0}), 1.0);
    CHECK(filled.values[1] == doctest::Approx(2.0));

    std::vector<double> long_gap{1.0, kMissing, kMissing, kMissing, kMissing, kMissing, kMissing, kMissing, 9.0};
    auto kept = fill_gaps_linear(make_series(long_gap), 6.0);
    for (std::size_t i = 1; i < 8; ++i) CHECK(is_missing(kept.values[i]));

    auto edge = fill_gaps_linear(make_series({kMissing, 2.0, 3.0}), 6.0);
    CHECK(is_missing(edge.values[0]));
}

TEST_CASE("gap filling is idempotent and never touches present samples") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> v;
        for (int i = 0; i < 50; ++i) {
            v.push_back(rng.uniform() < 0.25 ? kMissing : rng.uniform(0.0, 5.0));
        }
        StageSeries s = make_series(v);
        StageSeries once = fill_gaps_linear(s, 6.0);
        StageSeries twice = fill_gaps_linear(once, 6.0);
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (is_present(v[i])) CHECK(once.values[i] == v[i]);
            if (is_present(once.values[i])) CHECK(twice.values[i] == once.values[i]);
            else CHECK(is_missing(twice.values[i]));
        }
    }
}

TEST_CASE("qc report tag counts sum to the series length") {
    StageSeries s = make_series({1.0, kMissing, 3.0, 30.0, 3.2, 3.3});
    auto [fixed, rep] = correct_decimal_errors(s, 6.0, 6.0);
    CHECK(rep.tags.size() == s.size());
    std::size_t total = rep.count(QcAction::kKept) + rep.count(QcAction::kCorrected) +
                        rep.count(QcAction::kRemoved) + rep.count(QcAction::kInterpolated);
    CHECK(total == s.size());
}

TEST_CASE("precipitation clamping") {
    PrecipGridFrame f;
    f.intensities = Raster(1, 4, 0.0, 0.1);
    f.intensities.at(0, 0) = -0.5;
    f.intensities.at(0, 1) = 250.0;
    f.intensities.at(0, 2) = 50.0;
    f.intensities.at(0, 3) = kMissing;
    PrecipGridFrame c = clamp_precip(f, 200.0);
    CHECK(is_missing(c.intensities.at(0, 0)));
    CHECK(c.intensities.at(0, 1) == 200.0);
    CHECK(c.intensities.at(0, 2) == 50.0);
    CHECK(is_missing(c.intensities.at(0, 3)));
    for (double v : c.intensities.values) {
        if (is_present(v)) {
            CHECK(v >= 0.0);
            CHECK(v <= 200.0);
        }
    }
}

TEST_CASE("basin mean precipitation") {
    WatershedMask mask{Raster(2, 2, 0.0, 0.1)};
    mask.weights.at(0, 0) = 1.0;
    mask.weights.at(0, 1) = 1.0;

    auto frame_at = [&](UtcTime t, double a, double b) {
        PrecipGridFrame f;
        f.timestamp = t;
        f.intensities = Raster(2, 2, 0.0, 0.1);
        f.intensities.at(0, 0) = a;
        f.intensities.at(0, 1) = b;
        return f;
    };
    UtcTime h0 = parse_iso8601_utc("2021-06-01T00:00:00Z");

    SUBCASE("hand-weighted mean of {0,10} over equal weights is 5 mm") {
        auto p = basin_mean_precip({frame_at(h0, 0.0, 10.0), frame_at(h0 + 1800, 0.0, 10.0)}, mask);
        REQUIRE(p.values.size() == 1);
        CHECK(p.values[0] == doctest::Approx(5.0));
    }
    SUBCASE("uniform field yields the field value for any mask") {
        WatershedMask lopsided{Raster(2, 2, 0.0, 0.1)};
        lopsided.weights.at(0, 0) = 0.2;
        lopsided.weights.at(1, 1) = 0.9;
        PrecipGridFrame f;
        f.timestamp = h0;
        f.intensities = Raster(2, 2, 7.5, 0.1);
        auto q = basin_mean_precip({f, f}, lopsided);
        CHECK(q.values[0] == doctest::Approx(7.5));
    }
    SUBCASE("an hour with all cells missing is missing") {
        PrecipGridFrame f;
        f.timestamp = h0;
        f.intensities = Raster(2, 2, kMissing, 0.1);
        auto p = basin_mean_precip({f}, mask);
        CHECK(is_missing(p.values[0]));
    }
    SUBCASE("geometry mismatch raises") {
        PrecipGridFrame f;
        f.timestamp = h0;
        f.intensities = Raster(3, 3, 0.0, 0.1);
        CHECK_THROWS_AS(basin_mean_precip({f}, mask), DataError);
    }
}

TEST_CASE("ndwi") {
    CHECK(ndwi(0.3, 0.3) == 0.0);
    CHECK_FALSE(ndwi_wet(0.3, 0.3));  // strict positivity
    CHECK(ndwi(0.6, 0.2) == doctest::Approx(0.5));
    CHECK(ndwi_wet(0.6, 0.2));
    CHECK(ndwi(0.0, 0.3) == doctest::Approx(-1.0));
    CHECK_FALSE(ndwi_wet(0.0, 0.3));
    CHECK(is_missing(ndwi(0.0, 0.0)));
    CHECK_FALSE(ndwi_wet(0.0, 0.0));  // undefined classifies dry
}

TEST_CASE("gauge config json round trip and validation") {
    fs::path dir = fs::temp_directory_path() / "floodcast_hydro_test";
    fs::create_directories(dir);
    GaugeConfig g;
    g.gauge_id = "g1";
    g.warning_stage_m = 4.0;
    g.danger_stage_m = 5.0;
    g.max_lead_time_h = 24;
    g.upstream_ids = {"u1", "u2"};
    write_gauge_configs({g}, (dir / "gauges.json").string());
    auto back = read_gauge_configs((dir / "gauges.json").string());
    REQUIRE(back.size() == 1);
    CHECK(back[0].gauge_id == "g1");
    CHECK(back[0].danger_stage_m == 5.0);
    CHECK(back[0].upstream_ids == std::vector<std::string>{"u1", "u2"});

    GaugeConfig bad = g;
    bad.danger_stage_m = 3.0;  // below warning
    CHECK_THROWS_AS(bad.validate(), DataError);
    bad = g;
    bad.max_lead_time_h = 0;
    CHECK_THROWS_AS(bad.validate(), DataError);
}
