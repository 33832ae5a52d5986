#include "floodcast/hydrodata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace floodcast {

std::size_t QcReport::count(QcAction a) const {
    std::size_t n = 0;
    for (const auto& t : tags)
        if (t.action == a) ++n;
    return n;
}

void QcReport::write_csv(const StageSeries& s, const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write '" + path + "'");
    f << "timestamp,action,old_value,new_value\n";
    for (std::size_t i = 0; i < tags.size(); ++i) {
        const char* name = "kept";
        switch (tags[i].action) {
            case QcAction::kKept: name = "kept"; break;
            case QcAction::kCorrected: name = "corrected"; break;
            case QcAction::kRemoved: name = "removed"; break;
            case QcAction::kInterpolated: name = "interpolated"; break;
        }
        f << format_iso8601_utc(s.time_at(i)) << "," << name << ",";
        if (is_present(tags[i].old_value)) f << format_double(tags[i].old_value);
        f << ",";
        if (is_present(tags[i].new_value)) f << format_double(tags[i].new_value);
        f << "\n";
    }
}

GaugeStats GaugeStats::from_series(const StageSeries& s) {
    GaugeStats g;
    double step_h = s.step_hours();
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        double v = s.values[i];
        if (is_missing(v)) continue;
        if (g.count == 0) {
            g.min_stage = g.max_stage = v;
        } else {
            g.min_stage = std::min(g.min_stage, v);
            g.max_stage = std::max(g.max_stage, v);
        }
        ++g.count;
        if (i > 0 && is_present(s.values[i - 1])) {
            g.max_jump_m_per_h = std::max(g.max_jump_m_per_h, std::fabs(v - s.values[i - 1]) / step_h);
        }
    }
    return g;
}

namespace {

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::pair<StageSeries, QcReport> correct_decimal_errors(const StageSeries& s, double window_h, double k) {
    StageSeries out = s;
    QcReport rep;
    rep.tags.assign(s.values.size(), QcTag{});

    double step_h = s.step_hours();
    if (window_h < 3.0 * step_h) throw DataError("decimal correction window must span at least 3 steps");
    std::int64_t half = static_cast<std::int64_t>(std::floor(window_h / (2.0 * step_h)));
    std::int64_t n = static_cast<std::int64_t>(s.values.size());
    if (n < 3) {  // no window can reach the 3 samples a median/MAD needs
        rep.notes.push_back("too short");
        return {out, rep};
    }

    std::vector<double> window;
    for (std::int64_t i = 0; i < n; ++i) {
        double x = s.values[i];
        if (is_missing(x)) continue;
        window.clear();
        for (std::int64_t j = std::max<std::int64_t>(0, i - half); j <= std::min(n - 1, i + half); ++j) {
            if (is_present(s.values[j])) window.push_back(s.values[j]);
        }
        if (window.size() < 3) continue;
        double med = median_of(window);
        std::vector<double> dev(window.size());
        for (std::size_t j = 0; j < window.size(); ++j) dev[j] = std::fabs(window[j] - med);
        double mad = median_of(std::move(dev));
        double lo = med - k * mad, hi = med + k * mad;
        if (x >= lo && x <= hi) continue;
        double cand = kMissing;
        if (x * 0.1 >= lo && x * 0.1 <= hi) cand = x * 0.1;
        else if (x * 10.0 >= lo && x * 10.0 <= hi) cand = x * 10.0;
        if (is_present(cand)) {
            out.values[i] = cand;
            rep.tags[i] = {QcAction::kCorrected, x, cand};
        }
    }
    return {out, rep};
}

std::pair<StageSeries, QcReport> detect_stage_outliers(const StageSeries& s, const GaugeStats& hist,
                                                       double margin_m, double jump_factor) {
    StageSeries out = s;
    QcReport rep;
    rep.tags.assign(s.values.size(), QcTag{});
    if (hist.count == 0) {
        rep.notes.push_back("no historical stats; outlier screen skipped");
        return {out, rep};
    }
    double lo = hist.min_stage - margin_m;
    double hi = hist.max_stage + margin_m;
    double step_h = s.step_hours();
    double jump_cap = jump_factor * hist.max_jump_m_per_h;

    // the jump test compares against the last retained sample, so one spike
    // does not take its neighbors down with it
    std::optional<std::size_t> last_kept;
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        double x = s.values[i];
        if (is_missing(x)) continue;
        bool bad = x < lo || x > hi;
        if (!bad && last_kept && hist.max_jump_m_per_h > 0.0) {
            double gap_h = static_cast<double>(i - *last_kept) * step_h;
            double jump = std::fabs(x - out.values[*last_kept]) / gap_h;
            if (jump > jump_cap) bad = true;
        }
        if (bad) {
            out.values[i] = kMissing;
            rep.tags[i] = {QcAction::kRemoved, x, kMissing};
        } else {
            last_kept = i;
        }
    }
    return {out, rep};
}

std::pair<StageSeries, QcReport> fill_gaps_linear_report(const StageSeries& s, double max_gap_h) {
    StageSeries out = s;
    QcReport rep;
    rep.tags.assign(s.values.size(), QcTag{});

    double step_h = s.step_hours();
    if (max_gap_h < step_h) throw DataError("max_gap must be at least one step");
    std::size_t max_run = static_cast<std::size_t>(std::floor(max_gap_h / step_h + 1e-9));

    std::size_t n = s.values.size();
    std::size_t i = 0;
    while (i < n) {
        if (is_present(s.values[i])) { ++i; continue; }
        std::size_t j = i;
        while (j < n && is_missing(s.values[j])) ++j;
        // run [i, j) is missing; fill only interior runs short enough
        if (i > 0 && j < n && j - i <= max_run) {
            double a = s.values[i - 1];
            double b = s.values[j];
            double span = static_cast<double>(j - (i - 1));
            for (std::size_t t = i; t < j; ++t) {
                double frac = static_cast<double>(t - (i - 1)) / span;
                out.values[t] = a + frac * (b - a);
                rep.tags[t] = {QcAction::kInterpolated, kMissing, out.values[t]};
            }
        }
        i = j;
    }
    return {out, rep};
}

StageSeries fill_gaps_linear(const StageSeries& s, double max_gap_h) {
    return fill_gaps_linear_report(s, max_gap_h).first;
}

void WatershedMask::validate() const {
    bool any = false;
    for (double w : weights.values) {
        if (is_missing(w)) continue;
        if (w < 0.0 || w > 1.0) throw DataError("watershed mask weight outside [0,1]");
        if (w > 0.0) any = true;
    }
    if (!any) throw DataError("watershed mask has no positive weight");
}

PrecipGridFrame clamp_precip(const PrecipGridFrame& f, double cap_mm_h) {
    if (cap_mm_h <= 0.0) throw DataError("precipitation cap must be > 0");
    PrecipGridFrame out = f;
    for (double& v : out.intensities.values) {
        if (is_missing(v)) continue;
        if (v < 0.0) v = kMissing;
        else if (v > cap_mm_h) v = cap_mm_h;
    }
    return out;
}

PrecipSeries basin_mean_precip(const std::vector<PrecipGridFrame>& frames, const WatershedMask& mask,
                               const std::string& basin_id) {
    mask.validate();
    if (frames.empty()) throw DataError("no precipitation frames");
    for (const auto& f : frames) {
        if (!f.intensities.same_geometry(mask.weights)) {
            throw DataError("precipitation frame geometry does not match the watershed mask");
        }
    }
    std::vector<const PrecipGridFrame*> sorted;
    sorted.reserve(frames.size());
    for (const auto& f : frames) sorted.push_back(&f);
    std::sort(sorted.begin(), sorted.end(),
              [](const PrecipGridFrame* a, const PrecipGridFrame* b) { return a->timestamp < b->timestamp; });

    UtcTime first_hour = sorted.front()->timestamp - ((sorted.front()->timestamp % 3600) + 3600) % 3600;
    UtcTime last_hour = sorted.back()->timestamp - ((sorted.back()->timestamp % 3600) + 3600) % 3600;
    std::size_t hours = static_cast<std::size_t>((last_hour - first_hour) / 3600) + 1;

    PrecipSeries out;
    out.basin_id = basin_id;
    out.t0 = first_hour;
    out.step_s = 3600;
    out.values.assign(hours, kMissing);

    std::vector<double> sums(hours, 0.0);
    std::vector<int> counts(hours, 0);
    for (const PrecipGridFrame* f : sorted) {
        double wsum = 0.0, acc = 0.0;
        const Raster& g = f->intensities;
        for (std::size_t i = 0; i < g.values.size(); ++i) {
            double w = mask.weights.values[i];
            if (is_missing(w) || w <= 0.0) continue;
            double v = g.values[i];
            if (is_missing(v)) continue;
            wsum += w;
            acc += w * v;
        }
        if (wsum <= 0.0) continue;  // frame fully missing over the mask
        std::size_t h = static_cast<std::size_t>((f->timestamp - first_hour) / 3600);
        sums[h] += acc / wsum;
        counts[h] += 1;
    }
    for (std::size_t h = 0; h < hours; ++h) {
        if (counts[h] > 0) out.values[h] = sums[h] / counts[h];  // mm/h * 1 h = mm
    }
    return out;
}

double ndwi(double green, double nir) {
    double s = green + nir;
    if (s == 0.0) return kMissing;
    return (green - nir) / s;
}

bool ndwi_wet(double green, double nir) {
    double idx = ndwi(green, nir);
    return is_present(idx) && idx > 0.0;
}

void GaugeConfig::validate() const {
    if (gauge_id.empty()) throw DataError("gauge_id must not be empty");
    if (danger_stage_m && !(warning_stage_m < *danger_stage_m)) {
        throw DataError("gauge '" + gauge_id + "': warning stage must be below danger stage");
    }
    if (max_lead_time_h < 1 || max_lead_time_h > 48) {
        throw DataError("gauge '" + gauge_id + "': max lead time must be in [1,48] hours");
    }
}

std::vector<GaugeConfig> read_gauge_configs(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open '" + path + "'");
    json doc;
    try {
        f >> doc;
    } catch (const json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
    if (!doc.contains("gauges") || !doc["gauges"].is_array()) {
        throw DataError(path + ": expected a top-level 'gauges' array");
    }
    std::vector<GaugeConfig> out;
    for (const auto& g : doc["gauges"]) {
        GaugeConfig c;
        c.gauge_id = g.at("gauge_id").get<std::string>();
        c.warning_stage_m = g.at("warning_stage_m").get<double>();
        if (g.contains("danger_stage_m") && !g["danger_stage_m"].is_null()) {
            c.danger_stage_m = g["danger_stage_m"].get<double>();
        }
        c.max_lead_time_h = g.at("max_lead_time_h").get<int>();
        if (g.contains("upstream_ids")) {
            for (const auto& u : g["upstream_ids"]) c.upstream_ids.push_back(u.get<std::string>());
        }
        c.validate();
        out.push_back(std::move(c));
    }
    return out;
}

void write_gauge_configs(const std::vector<GaugeConfig>& gauges, const std::string& path) {
    json arr = json::array();
    for (const auto& g : gauges) {
        json j = {
            {"gauge_id", g.gauge_id},
            {"warning_stage_m", g.warning_stage_m},
            {"max_lead_time_h", g.max_lead_time_h},
            {"upstream_ids", g.upstream_ids},
        };
        if (g.danger_stage_m) j["danger_stage_m"] = *g.danger_stage_m;
        arr.push_back(std::move(j));
    }
    json doc = {{"schema_version", 1}, {"gauges", std::move(arr)}};
    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw DataError("cannot write '" + tmp + "'");
        f << doc.dump(2) << "\n";
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw DataError("cannot rename '" + tmp + "' to '" + path + "'");
    }
}

std::string precip_frame_filename(const std::string& basin_id, UtcTime t) {
    return basin_id + "_" + format_iso8601_utc(t) + ".asc";
}

std::vector<PrecipGridFrame> read_precip_frames(const std::string& dir, const std::string& basin_id) {
    std::vector<PrecipGridFrame> out;
    std::string prefix = basin_id + "_";
    std::vector<fs::path> paths;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::string name = e.path().filename().string();
        if (name.size() > prefix.size() + 4 && name.rfind(prefix, 0) == 0 && name.ends_with(".asc")) {
            paths.push_back(e.path());
        }
    }
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) {
        std::string name = p.filename().string();
        std::string ts = name.substr(prefix.size(), name.size() - prefix.size() - 4);
        PrecipGridFrame f;
        f.timestamp = parse_iso8601_utc(ts);
        f.intensities = read_asc(p.string());
        out.push_back(std::move(f));
    }
    if (out.empty()) throw DataError("no precipitation frames for basin '" + basin_id + "' in '" + dir + "'");
    return out;
}

void write_precip_frame(const PrecipGridFrame& f, const std::string& dir, const std::string& basin_id) {
    write_asc(f.intensities, (fs::path(dir) / precip_frame_filename(basin_id, f.timestamp)).string());
}

}  // namespace floodcast
