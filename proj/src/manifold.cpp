#include "floodcast/manifold.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace floodcast {

void HeightStack::validate() const {
    if (entries.empty()) throw DataError("height stack is empty");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (i > 0 && !(entries[i].first > entries[i - 1].first)) {
            throw DataError("height stack stages must strictly increase");
        }
        if (entries[i].second.rows != entries.front().second.rows ||
            entries[i].second.cols != entries.front().second.cols) {
            throw DataError("height stack maps differ in geometry");
        }
    }
}

std::vector<std::pair<int, int>> extract_boundaries(const Raster& extent, bool count_border) {
    std::vector<std::pair<int, int>> out;
    static constexpr int dr[4] = {-1, 1, 0, 0};
    static constexpr int dc[4] = {0, 0, -1, 1};
    for (int r = 0; r < extent.rows; ++r) {
        for (int c = 0; c < extent.cols; ++c) {
            if (!extent.wet(r, c)) continue;
            bool boundary = false;
            for (int k = 0; k < 4 && !boundary; ++k) {
                int rr = r + dr[k], cc = c + dc[k];
                if (!extent.in_bounds(rr, cc) || extent.is_nodata(rr, cc)) {
                    boundary = count_border;
                } else if (!extent.wet(rr, cc)) {
                    boundary = true;
                }
            }
            if (boundary) out.emplace_back(r, c);
        }
    }
    return out;
}

std::vector<double> solve_laplace(const std::vector<BoundaryCell>& dirichlet,
                                  const std::vector<std::uint8_t>& wet, int rows, int cols,
                                  const LaplaceConfig& cfg) {
    std::vector<double> h(static_cast<std::size_t>(rows) * cols, kMissing);
    if (dirichlet.empty()) throw DataError("laplace: no Dirichlet cells");
    std::vector<std::uint8_t> fixed(h.size(), 0);
    double mean_boundary = 0.0;
    for (const auto& b : dirichlet) {
        std::size_t i = static_cast<std::size_t>(b.r) * cols + b.c;
        h[i] = b.height;
        fixed[i] = 1;
        mean_boundary += b.height;
    }
    mean_boundary /= static_cast<double>(dirichlet.size());

    std::vector<std::size_t> unknowns;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            std::size_t i = static_cast<std::size_t>(r) * cols + c;
            if (wet[i] && !fixed[i]) {
                h[i] = mean_boundary;
                unknowns.push_back(i);
            }
        }
    }
    if (unknowns.empty()) return h;

    // The raw update size understates the remaining error by 1/(1 - rho)
    // when the iteration converges slowly, so the stop rule scales the
    // tolerance by a running estimate of the contraction rate.
    double prev_update = -1.0, rate = 0.0;
    for (int sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
        double max_update = 0.0;
        for (std::size_t i : unknowns) {
            int r = static_cast<int>(i) / cols, c = static_cast<int>(i) % cols;
            double acc = 0.0;
            int n = 0;
            auto tap = [&](int rr, int cc) {
                if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) return;
                std::size_t j = static_cast<std::size_t>(rr) * cols + cc;
                if (!wet[j] && !fixed[j]) return;
                acc += h[j];
                ++n;
            };
            tap(r - 1, c);
            tap(r + 1, c);
            tap(r, c - 1);
            tap(r, c + 1);
            if (n == 0) continue;  // isolated cell keeps the mean boundary height
            double gs = acc / n;
            double upd = cfg.omega * (gs - h[i]);
            h[i] += upd;
            max_update = std::max(max_update, std::fabs(upd));
        }
        if (max_update == 0.0) break;
        if (prev_update > 0.0) {
            double r = std::min(max_update / prev_update, 0.9999);
            rate = std::max(0.5 * rate + 0.5 * r, 0.0);
        }
        prev_update = max_update;
        if (max_update < cfg.tolerance_m * (1.0 - rate)) break;
    }
    return h;
}

namespace {

// Least-squares plane a*r + b*c + d through the cells; a slight ridge keeps
// degenerate layouts (collinear cells) solvable.
std::array<double, 3> fit_plane(const std::vector<BoundaryCell>& cells) {
    double s_rr = 0, s_rc = 0, s_cc = 0, s_r = 0, s_c = 0, s_1 = 0;
    double b_r = 0, b_c = 0, b_1 = 0;
    for (const auto& cell : cells) {
        double r = cell.r, c = cell.c, z = cell.height;
        s_rr += r * r;
        s_rc += r * c;
        s_cc += c * c;
        s_r += r;
        s_c += c;
        s_1 += 1;
        b_r += r * z;
        b_c += c * z;
        b_1 += z;
    }
    double m[9] = {s_rr + 1e-9, s_rc, s_r, s_rc, s_cc + 1e-9, s_c, s_r, s_c, s_1 + 1e-9};
    double rhs[3] = {b_r, b_c, b_1};
    // Gaussian elimination on the 3x3 system
    for (int i = 0; i < 3; ++i) {
        int piv = i;
        for (int j = i + 1; j < 3; ++j) {
            if (std::fabs(m[j * 3 + i]) > std::fabs(m[piv * 3 + i])) piv = j;
        }
        for (int k = 0; k < 3; ++k) std::swap(m[i * 3 + k], m[piv * 3 + k]);
        std::swap(rhs[i], rhs[piv]);
        for (int j = i + 1; j < 3; ++j) {
            double f = m[j * 3 + i] / m[i * 3 + i];
            for (int k = i; k < 3; ++k) m[j * 3 + k] -= f * m[i * 3 + k];
            rhs[j] -= f * rhs[i];
        }
    }
    std::array<double, 3> out{};
    for (int i = 2; i >= 0; --i) {
        double s = rhs[i];
        for (int k = i + 1; k < 3; ++k) s -= m[i * 3 + k] * out[static_cast<std::size_t>(k)];
        out[static_cast<std::size_t>(i)] = s / m[i * 3 + i];
    }
    return out;
}

}  // namespace

std::vector<BoundaryCell> remove_tension_outliers(const std::vector<BoundaryCell>& cells,
                                                  const std::vector<std::uint8_t>& wet, int rows, int cols,
                                                  const LaplaceConfig& cfg) {
    std::vector<BoundaryCell> kept = cells;
    for (int round = 0; round < cfg.outlier_rounds; ++round) {
        if (kept.size() <= 4) break;
        // Detrend with the best-fit plane before measuring tension: planes
        // are harmonic, so a sloped but consistent shoreline produces zero
        // discrepancy while a spike stands out undiluted.
        std::array<double, 3> plane = fit_plane(kept);
        std::vector<BoundaryCell> flat = kept;
        for (auto& cell : flat) {
            cell.height -= plane[0] * cell.r + plane[1] * cell.c + plane[2];
        }
        std::vector<double> h = solve_laplace(flat, wet, rows, cols, cfg);

        // discrepancy of each Dirichlet cell vs the harmonic value its
        // neighbors imply, in detrended coordinates
        std::vector<double> disc(kept.size(), 0.0);
        for (std::size_t k = 0; k < kept.size(); ++k) {
            const auto& b = flat[k];
            double acc = 0.0;
            int n = 0;
            auto tap = [&](int rr, int cc) {
                if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) return;
                std::size_t j = static_cast<std::size_t>(rr) * cols + cc;
                if (is_missing(h[j])) return;
                acc += h[j];
                ++n;
            };
            tap(b.r - 1, b.c);
            tap(b.r + 1, b.c);
            tap(b.r, b.c - 1);
            tap(b.r, b.c + 1);
            disc[k] = n > 0 ? b.height - acc / n : 0.0;
        }
        // Centered MAD screen. Edge cells of a sloped surface all carry a
        // baseline discrepancy (one-sided stencils see gradient/3), so the
        // test centers on the median before scaling.
        auto median_of = [](std::vector<double> v) {
            std::sort(v.begin(), v.end());
            return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
        };
        double med = median_of(disc);
        std::vector<double> dev(disc.size());
        for (std::size_t k = 0; k < disc.size(); ++k) dev[k] = std::fabs(disc[k] - med);
        double mad = median_of(dev);
        double cut = std::max(cfg.outlier_mad_factor * mad, cfg.outlier_floor_m);

        // one offender per round: an outlier contaminates its neighbors'
        // discrepancies, so batch removal would overshoot
        std::size_t worst = 0;
        for (std::size_t k = 1; k < dev.size(); ++k) {
            if (dev[k] > dev[worst]) worst = k;
        }
        if (dev[worst] <= cut) break;
        kept.erase(kept.begin() + static_cast<std::ptrdiff_t>(worst));
    }
    return kept;
}

CoarseHeightMap extent_to_height(const Raster& dem, const Raster& extent, int factor,
                                 const LaplaceConfig& cfg) {
    if (!dem.same_geometry(extent)) throw DataError("extent_to_height: DEM and extent geometry differ");
    if (factor < 1) throw DataError("extent_to_height: factor must be >= 1");

    CoarseHeightMap out;
    out.factor = factor;
    out.rows = (dem.rows + factor - 1) / factor;
    out.cols = (dem.cols + factor - 1) / factor;
    out.heights.assign(static_cast<std::size_t>(out.rows) * out.cols, kMissing);

    bool any_wet = false;
    std::vector<std::uint8_t> wet(out.heights.size(), 0);
    for (int r = 0; r < dem.rows; ++r) {
        for (int c = 0; c < dem.cols; ++c) {
            if (!extent.wet(r, c)) continue;
            any_wet = true;
            wet[static_cast<std::size_t>(r / factor) * out.cols + c / factor] = 1;
        }
    }
    if (!any_wet) return out;  // empty extent -> empty map

    // Shoreline heights come from wet pixels that touch dry land; pixels on
    // the raster edge carry no water-surface information.
    std::vector<std::pair<int, int>> shore = extract_boundaries(extent, /*count_border=*/false);
    std::vector<double> sum(out.heights.size(), 0.0);
    std::vector<int> cnt(out.heights.size(), 0);
    for (auto [r, c] : shore) {
        double z = dem.at(r, c);
        if (is_missing(z)) continue;
        std::size_t i = static_cast<std::size_t>(r / factor) * out.cols + c / factor;
        sum[i] += z;
        cnt[i] += 1;
    }
    std::vector<BoundaryCell> dirichlet;
    for (int r = 0; r < out.rows; ++r) {
        for (int c = 0; c < out.cols; ++c) {
            std::size_t i = static_cast<std::size_t>(r) * out.cols + c;
            if (cnt[i] > 0) dirichlet.push_back({r, c, sum[i] / cnt[i]});
        }
    }
    if (dirichlet.empty()) throw DataError("extent_to_height: unconstrained interior (no shoreline)");

    dirichlet = remove_tension_outliers(dirichlet, wet, out.rows, out.cols, cfg);
    out.heights = solve_laplace(dirichlet, wet, out.rows, out.cols, cfg);
    return out;
}

HeightStack build_height_stack(const EventCatalog& cat, const Raster& dem,
                               const PixelThresholdMap& thr, int factor, const LaplaceConfig& cfg) {
    cat.validate();
    std::vector<double> stages;
    for (const auto& e : cat.events) stages.push_back(e.stage_m);
    std::sort(stages.begin(), stages.end());
    stages.erase(std::unique(stages.begin(), stages.end()), stages.end());

    HeightStack stack;
    stack.gauge_id = cat.gauge_id;
    stack.factor = factor;
    stack.entries.resize(stages.size());
    std::vector<std::uint8_t> ok(stages.size(), 0);
    parallel_for(static_cast<std::int64_t>(stages.size()), [&](std::int64_t i) {
        double stage = stages[static_cast<std::size_t>(i)];
        Raster extent = predict_extent(thr, stage);
        try {
            CoarseHeightMap hm = extent_to_height(dem, extent, factor, cfg);
            bool any = false;
            for (double v : hm.heights) any = any || is_present(v);
            if (any) {
                stack.entries[static_cast<std::size_t>(i)] = {stage, std::move(hm)};
                ok[static_cast<std::size_t>(i)] = 1;
            }
        } catch (const DataError&) {
            // unsolvable entry (no shoreline); skipped
        }
    });
    std::vector<std::pair<double, CoarseHeightMap>> kept;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        if (ok[i]) kept.push_back(std::move(stack.entries[i]));
    }
    stack.entries = std::move(kept);
    if (stack.entries.empty()) throw DataError("height stack: no valid entries");
    stack.validate();
    return stack;
}

CoarseHeightMap interpolate_height(const HeightStack& stack, double stage_m) {
    stack.validate();
    const auto& entries = stack.entries;

    if (stage_m <= entries.front().first) return entries.front().second;  // no downward extrapolation
    if (stage_m >= entries.back().first) {
        CoarseHeightMap top = entries.back().second;
        double delta = stage_m - entries.back().first;
        if (delta > 0.0) {
            for (double& v : top.heights) {
                if (is_present(v)) v += delta;
            }
        }
        return top;
    }
    std::size_t hi = 1;
    while (entries[hi].first < stage_m) ++hi;
    if (entries[hi].first == stage_m) return entries[hi].second;
    const auto& [s0, m0] = entries[hi - 1];
    const auto& [s1, m1] = entries[hi];
    double f = (stage_m - s0) / (s1 - s0);
    CoarseHeightMap out = m0;
    for (std::size_t i = 0; i < out.heights.size(); ++i) {
        double a = m0.heights[i], b = m1.heights[i];
        out.heights[i] = (is_present(a) && is_present(b)) ? a + f * (b - a) : kMissing;
    }
    return out;
}

namespace {

// Bilinear interpolation of coarse-cell centers at a DEM pixel center.
// Invalid neighbors drop out with weight renormalization; all invalid
// yields NaN.
double upsample_at(const CoarseHeightMap& m, int factor, double pr, double pc) {
    double gr = (pr + 0.5) / factor - 0.5;
    double gc = (pc + 0.5) / factor - 0.5;
    int r0 = static_cast<int>(std::floor(gr));
    int c0 = static_cast<int>(std::floor(gc));
    double fr = gr - r0, fc = gc - c0;
    double acc = 0.0, wacc = 0.0;
    for (int dr = 0; dr <= 1; ++dr) {
        for (int dc = 0; dc <= 1; ++dc) {
            int r = std::clamp(r0 + dr, 0, m.rows - 1);
            int c = std::clamp(c0 + dc, 0, m.cols - 1);
            if (!m.valid(r, c)) continue;
            double w = (dr ? fr : 1.0 - fr) * (dc ? fc : 1.0 - fc);
            acc += w * m.at(r, c);
            wacc += w;
        }
    }
    return wacc > 1e-12 ? acc / wacc : kMissing;
}

}  // namespace

std::pair<Raster, Raster> stage_to_depth(const HeightStack& stack, const Raster& dem, double stage_m) {
    CoarseHeightMap hm = interpolate_height(stack, stage_m);
    Raster extent(dem.rows, dem.cols, 0.0, dem.cell_size);
    extent.origin_x = dem.origin_x;
    extent.origin_y = dem.origin_y;
    Raster depth = extent;
    for (int r = 0; r < dem.rows; ++r) {
        for (int c = 0; c < dem.cols; ++c) {
            double z = dem.at(r, c);
            if (is_missing(z)) {
                extent.at(r, c) = kMissing;
                depth.at(r, c) = kMissing;
                continue;
            }
            double h = upsample_at(hm, stack.factor, r, c);
            if (is_present(h) && h > z) {
                extent.at(r, c) = 1.0;
                depth.at(r, c) = h - z;
            }
        }
    }
    return {std::move(extent), std::move(depth)};
}

std::size_t count_height_inversions(const HeightStack& stack) {
    std::size_t bad = 0;
    for (std::size_t e = 1; e < stack.entries.size(); ++e) {
        const auto& lo = stack.entries[e - 1].second;
        const auto& hi = stack.entries[e].second;
        for (std::size_t i = 0; i < lo.heights.size(); ++i) {
            if (is_present(lo.heights[i]) && is_present(hi.heights[i]) &&
                hi.heights[i] < lo.heights[i]) {
                ++bad;
            }
        }
    }
    return bad;
}

void save_height_stack(const HeightStack& stack, const std::string& dir) {
    stack.validate();
    fs::create_directories(dir);
    json stages = json::array();
    for (const auto& [stage, hm] : stack.entries) {
        char name[64];
        std::snprintf(name, sizeof name, "h_%.6f.asc", stage);
        Raster g(hm.rows, hm.cols, 0.0, 1.0);
        g.values = hm.heights;
        write_asc(g, (fs::path(dir) / name).string());
        stages.push_back({{"stage_m", stage}, {"file", name}});
    }
    json doc = {
        {"schema_version", 1},
        {"gauge_id", stack.gauge_id},
        {"dem_ref", stack.dem_ref},
        {"factor", stack.factor},
        {"stages", stages},
    };
    std::ofstream f((fs::path(dir) / "manifest.json").string(), std::ios::binary);
    if (!f) throw DataError("cannot write height stack manifest in '" + dir + "'");
    f << doc.dump(2) << "\n";
}

HeightStack load_height_stack(const std::string& dir) {
    fs::path manifest = fs::path(dir) / "manifest.json";
    std::ifstream f(manifest, std::ios::binary);
    if (!f) throw DataError("cannot open '" + manifest.string() + "'");
    json doc;
    try {
        f >> doc;
    } catch (const json::exception& e) {
        throw DataError(manifest.string() + ": " + e.what());
    }
    HeightStack stack;
    stack.gauge_id = doc.value("gauge_id", "");
    stack.dem_ref = doc.value("dem_ref", "");
    stack.factor = doc.at("factor").get<int>();
    for (const auto& js : doc.at("stages")) {
        Raster g = read_asc((fs::path(dir) / js.at("file").get<std::string>()).string());
        CoarseHeightMap hm;
        hm.factor = stack.factor;
        hm.rows = g.rows;
        hm.cols = g.cols;
        hm.heights = std::move(g.values);
        stack.entries.emplace_back(js.at("stage_m").get<double>(), std::move(hm));
    }
    stack.validate();
    return stack;
}

}  // namespace floodcast
