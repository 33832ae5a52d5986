#include "floodcast/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

namespace floodcast {

namespace {

constexpr double kPi = 3.14159265358979323846;

double meander_center(int rows, int cols, int row) {
    double amp = cols / 6.0;
    double period = std::max(rows / 1.5, 8.0);
    return cols / 2.0 + amp * std::sin(2.0 * kPi * row / period);
}

}  // namespace

int valley_channel_col(int rows, int cols, int row) {
    int c = static_cast<int>(std::lround(meander_center(rows, cols, row)));
    return std::clamp(c, 0, cols - 1);
}

Raster make_valley_dem(int rows, int cols, double channel_depth, double bank_slope,
                       double noise_amp, std::uint64_t seed, double cell_size_m) {
    if (rows < 1 || cols < 1) throw DataError("make_valley_dem: empty grid");
    Raster dem(rows, cols, 0.0, cell_size_m);

    // smooth noise = a few random low-frequency sinusoid products
    struct Wave {
        double ar, br, ac, bc, amp;
    };
    std::vector<Wave> waves;
    if (noise_amp > 0.0) {
        Rng rng(seed);
        for (int k = 0; k < 4; ++k) {
            waves.push_back({rng.uniform(0.5, 2.0) * 2.0 * kPi / rows, rng.uniform(0.0, 2.0 * kPi),
                             rng.uniform(0.5, 2.0) * 2.0 * kPi / cols, rng.uniform(0.0, 2.0 * kPi),
                             rng.uniform(0.4, 1.0)});
        }
    }
    for (int r = 0; r < rows; ++r) {
        double center = meander_center(rows, cols, r);
        for (int c = 0; c < cols; ++c) {
            double dist_m = std::fabs(c - center) * cell_size_m;
            double z = bank_slope * dist_m - channel_depth;
            for (const Wave& w : waves) {
                z += noise_amp * w.amp * std::sin(w.ar * r + w.br) * std::sin(w.ac * c + w.bc);
            }
            dem.at(r, c) = z;
        }
    }
    return dem;
}

std::pair<int, int> lowest_pixel(const Raster& dem) {
    std::pair<int, int> best{0, 0};
    double z = kInf;
    for (int r = 0; r < dem.rows; ++r) {
        for (int c = 0; c < dem.cols; ++c) {
            double v = dem.at(r, c);
            if (is_present(v) && v < z) {
                z = v;
                best = {r, c};
            }
        }
    }
    if (z == kInf) throw DataError("lowest_pixel: all-nodata DEM");
    return best;
}

Raster flat_fill_extent(const Raster& dem, double stage_m, std::pair<int, int> seed_pixel) {
    Raster out(dem.rows, dem.cols, 0.0, dem.cell_size);
    out.origin_x = dem.origin_x;
    out.origin_y = dem.origin_y;
    for (std::size_t i = 0; i < dem.values.size(); ++i) {
        if (is_missing(dem.values[i])) out.values[i] = kMissing;
    }
    auto [sr, sc] = seed_pixel;
    if (!dem.in_bounds(sr, sc)) throw DataError("flat_fill_extent: seed outside the raster");
    if (dem.is_nodata(sr, sc) || !(dem.at(sr, sc) < stage_m)) return out;

    std::deque<std::pair<int, int>> queue{{sr, sc}};
    out.at(sr, sc) = 1.0;
    static constexpr int dr[4] = {-1, 1, 0, 0};
    static constexpr int dc[4] = {0, 0, -1, 1};
    while (!queue.empty()) {
        auto [r, c] = queue.front();
        queue.pop_front();
        for (int k = 0; k < 4; ++k) {
            int rr = r + dr[k], cc = c + dc[k];
            if (!dem.in_bounds(rr, cc) || dem.is_nodata(rr, cc)) continue;
            if (out.at(rr, cc) == 1.0) continue;
            if (dem.at(rr, cc) < stage_m) {
                out.at(rr, cc) = 1.0;
                queue.emplace_back(rr, cc);
            }
        }
    }
    return out;
}

StageSeries route_linear_reservoir(const PrecipSeries& precip, double k_h, double gain,
                                   double base_stage_m, const std::string& gauge_id) {
    double dt = precip.step_hours();
    if (!(k_h >= dt)) throw DataError("route_linear_reservoir: k must be at least one step");
    if (precip.values.empty()) throw DataError("route_linear_reservoir: empty precipitation");
    StageSeries s;
    s.gauge_id = gauge_id;
    s.t0 = precip.t0;
    s.step_s = precip.step_s;
    s.values.resize(precip.values.size());
    double stage = base_stage_m;
    for (std::size_t i = 0; i < precip.values.size(); ++i) {
        s.values[i] = stage;
        double p = precip.values[i];
        if (is_missing(p) || p < 0.0) p = 0.0;
        stage += (gain * p - (stage - base_stage_m) / k_h) * dt;
    }
    return s;
}

EventCatalog make_event_catalog(const Raster& dem, const StageSeries& stages, int n_events,
                                std::uint64_t seed, double flip_rate) {
    if (n_events < 1) throw DataError("make_event_catalog: need at least one event");
    std::vector<std::size_t> present;
    for (std::size_t i = 0; i < stages.values.size(); ++i) {
        if (is_present(stages.values[i])) present.push_back(i);
    }
    if (present.empty()) throw DataError("make_event_catalog: stage series has no samples");

    // peak bias: sort by stage and draw indices from a cubed-uniform tail
    std::sort(present.begin(), present.end(),
              [&](std::size_t a, std::size_t b) { return stages.values[a] < stages.values[b]; });
    Rng rng(seed);
    std::vector<std::size_t> chosen;
    for (int k = 0; k < n_events; ++k) {
        double u = rng.uniform();
        double biased = 1.0 - u * u * u;  // denser near the top of the sorted order
        std::size_t idx = std::min(present.size() - 1,
                                   static_cast<std::size_t>(biased * static_cast<double>(present.size())));
        chosen.push_back(present[idx]);
    }
    std::sort(chosen.begin(), chosen.end());
    chosen.erase(std::unique(chosen.begin(), chosen.end()), chosen.end());
    // top up after dedup with the highest unused stages
    for (std::size_t k = present.size(); chosen.size() < static_cast<std::size_t>(n_events) && k-- > 0;) {
        if (std::find(chosen.begin(), chosen.end(), present[k]) == chosen.end()) {
            chosen.push_back(present[k]);
        }
    }
    std::sort(chosen.begin(), chosen.end());

    auto seed_px = lowest_pixel(dem);
    EventCatalog cat;
    cat.gauge_id = stages.gauge_id;
    for (std::size_t idx : chosen) {
        FloodEvent e;
        e.stage_m = stages.values[idx];
        e.timestamp = stages.time_at(idx);
        e.extent = flat_fill_extent(dem, e.stage_m, seed_px);
        if (flip_rate > 0.0) {
            for (double& v : e.extent.values) {
                if (is_missing(v)) continue;
                if (rng.uniform() < flip_rate) v = v == 1.0 ? 0.0 : 1.0;
            }
        }
        cat.events.push_back(std::move(e));
    }
    return cat;
}

PrecipSeries make_storm_precip(UtcTime t0, std::size_t hours, std::uint64_t seed,
                               double storm_prob, double mean_depth_mm, const std::string& basin_id) {
    PrecipSeries p;
    p.basin_id = basin_id;
    p.t0 = t0;
    p.step_s = 3600;
    p.values.assign(hours, 0.0);
    Rng rng(seed);
    std::size_t i = 0;
    while (i < hours) {
        if (rng.uniform() < storm_prob) {
            std::size_t len = 3 + rng.uniform_index(18);  // storms last 3..20 hours
            double peak = mean_depth_mm * (0.5 + 1.5 * rng.uniform());
            for (std::size_t t = 0; t < len && i + t < hours; ++t) {
                double shape = std::sin(kPi * static_cast<double>(t + 1) / static_cast<double>(len + 1));
                p.values[i + t] += peak * shape * (0.7 + 0.6 * rng.uniform());
            }
            i += len;
        } else {
            ++i;
        }
    }
    return p;
}

}  // namespace floodcast
