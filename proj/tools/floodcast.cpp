// floodcast: synthetic-watershed flood forecasting pipeline driver.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
// 3 numeric failure.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "floodcast/alerting.hpp"
#include "floodcast/common.hpp"
#include "floodcast/configfile.hpp"
#include "floodcast/evalkit.hpp"
#include "floodcast/hydrodata.hpp"
#include "floodcast/linear.hpp"
#include "floodcast/lstm.hpp"
#include "floodcast/manifold.hpp"
#include "floodcast/raster.hpp"
#include "floodcast/series.hpp"
#include "floodcast/synthdata.hpp"
#include "floodcast/thresholding.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace floodcast;

namespace {

const std::map<std::string, std::vector<std::string>> kConfigSchema = {
    {"qc", {"decimal_window_h", "decimal_k", "outlier_margin_m", "jump_factor", "max_gap_h", "precip_cap_mm_h"}},
    {"linear", {"lookback_h", "l2_lambda", "use_precip"}},
    {"lstm",
     {"hidden_size", "target_lookback_h", "upstream_lookback_h", "max_lead_h", "n_components", "seed",
      "learning_rate", "batch_size", "epochs", "grad_clip_norm", "stride_steps", "validation_fraction"}},
    {"thresholding", {"minimal_ratio", "dilation_slope_px_per_m"}},
    {"manifold", {"factor", "omega", "tolerance_m", "max_sweeps"}},
    {"alerting", {"webhook_url", "strict_exceedance", "suppression_window_h", "suppression_rise_m"}},
    {"forecast", {"point_forecast"}},
    {"evaluate", {"models", "margin_m", "year_start_month"}},
};

ConfigFile load_config(const std::string& path) {
    if (path.empty()) return ConfigFile{};
    ConfigFile cfg = ConfigFile::parse_file(path);
    cfg.validate_against(kConfigSchema);
    return cfg;
}

QcConfig qc_config(const ConfigFile& cfg) {
    QcConfig q;
    q.decimal_window_h = cfg.get_double("qc", "decimal_window_h", q.decimal_window_h);
    q.decimal_k = cfg.get_double("qc", "decimal_k", q.decimal_k);
    q.outlier_margin_m = cfg.get_double("qc", "outlier_margin_m", q.outlier_margin_m);
    q.jump_factor = cfg.get_double("qc", "jump_factor", q.jump_factor);
    q.max_gap_h = cfg.get_double("qc", "max_gap_h", q.max_gap_h);
    q.precip_cap_mm_h = cfg.get_double("qc", "precip_cap_mm_h", q.precip_cap_mm_h);
    return q;
}

std::string stage_csv_name(const std::string& gauge) { return gauge + "_stage.csv"; }
std::string precip_csv_name(const std::string& gauge) { return gauge + "_precip.csv"; }

GaugeStats read_gauge_stats(const fs::path& dir, const std::string& gauge) {
    fs::path p = dir / (gauge + "_stats.json");
    GaugeStats st;
    if (!fs::exists(p)) return st;
    std::ifstream f(p, std::ios::binary);
    json doc;
    f >> doc;
    st.min_stage = doc.at("min_stage").get<double>();
    st.max_stage = doc.at("max_stage").get<double>();
    st.max_jump_m_per_h = doc.at("max_jump_m_per_h").get<double>();
    st.count = doc.at("count").get<std::size_t>();
    return st;
}

void write_gauge_stats(const GaugeStats& st, const fs::path& dir, const std::string& gauge) {
    json doc = {{"min_stage", st.min_stage},
                {"max_stage", st.max_stage},
                {"max_jump_m_per_h", st.max_jump_m_per_h},
                {"count", st.count}};
    std::ofstream f(dir / (gauge + "_stats.json"), std::ios::binary);
    f << doc.dump(2) << "\n";
}

// ---------------------------------------------------------------- qc

int cmd_qc(const std::string& config_path, const std::string& in_dir, const std::string& out_dir) {
    ConfigFile cfg = load_config(config_path);
    QcConfig q = qc_config(cfg);
    fs::create_directories(out_dir);
    auto gauges = read_gauge_configs((fs::path(in_dir) / "gauges.json").string());

    for (const auto& g : gauges) {
        fs::path in_csv = fs::path(in_dir) / stage_csv_name(g.gauge_id);
        if (!fs::exists(in_csv)) {
            std::cerr << "qc: no stage series for gauge " << g.gauge_id << "\n";
            continue;
        }
        StageSeries raw = read_stage_csv(in_csv.string(), g.gauge_id);
        auto [fixed, rep1] = correct_decimal_errors(raw, q.decimal_window_h, q.decimal_k);
        GaugeStats hist = read_gauge_stats(fs::path(in_dir), g.gauge_id);
        if (hist.count == 0) hist = GaugeStats::from_series(fixed);
        auto [screened, rep2] = detect_stage_outliers(fixed, hist, q.outlier_margin_m, q.jump_factor);
        auto [filled, rep3] = fill_gaps_linear_report(screened, q.max_gap_h);

        QcReport merged;
        merged.tags.resize(raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i) {
            merged.tags[i] = rep1.tags[i];
            if (rep2.tags[i].action != QcAction::kKept) merged.tags[i] = rep2.tags[i];
            if (rep3.tags[i].action != QcAction::kKept) merged.tags[i] = rep3.tags[i];
        }
        write_stage_csv(filled, (fs::path(out_dir) / stage_csv_name(g.gauge_id)).string());
        merged.write_csv(filled, (fs::path(out_dir) / (g.gauge_id + "_qc_report.csv")).string());
        write_gauge_stats(hist, fs::path(out_dir), g.gauge_id);

        // precipitation: recent gridded frames overlay the archived series
        fs::path frames_dir = fs::path(in_dir) / "frames";
        fs::path mask_path = fs::path(in_dir) / ("mask_" + g.gauge_id + ".asc");
        fs::path precip_csv = fs::path(in_dir) / precip_csv_name(g.gauge_id);
        std::optional<PrecipSeries> from_frames;
        if (fs::exists(frames_dir) && fs::exists(mask_path)) {
            try {
                WatershedMask mask{read_asc(mask_path.string())};
                auto frames = read_precip_frames(frames_dir.string(), g.gauge_id);
                for (auto& f : frames) f = clamp_precip(f, q.precip_cap_mm_h);
                from_frames = basin_mean_precip(frames, mask, g.gauge_id);
            } catch (const DataError&) {
                // no frames for this basin
            }
        }
        if (fs::exists(precip_csv)) {
            PrecipSeries archive = read_precip_csv(precip_csv.string(), g.gauge_id);
            if (from_frames) {
                for (std::size_t i = 0; i < from_frames->values.size(); ++i) {
                    UtcTime t = from_frames->time_at(i);
                    std::int64_t d = t - archive.t0;
                    if (d >= 0 && d % archive.step_s == 0 &&
                        d / archive.step_s < static_cast<std::int64_t>(archive.values.size())) {
                        archive.values[static_cast<std::size_t>(d / archive.step_s)] = from_frames->values[i];
                    }
                }
            }
            write_precip_csv(archive, (fs::path(out_dir) / precip_csv_name(g.gauge_id)).string());
        } else if (from_frames) {
            write_precip_csv(*from_frames, (fs::path(out_dir) / precip_csv_name(g.gauge_id)).string());
        }
    }
    fs::copy_file(fs::path(in_dir) / "gauges.json", fs::path(out_dir) / "gauges.json",
                  fs::copy_options::overwrite_existing);
    for (const char* extra : {"dem.asc", "external_forecasts.json", "scenario.json"}) {
        fs::path src = fs::path(in_dir) / extra;
        if (fs::exists(src)) fs::copy_file(src, fs::path(out_dir) / extra, fs::copy_options::overwrite_existing);
    }
    fs::path cat = fs::path(in_dir) / "catalog";
    if (fs::exists(cat)) {
        fs::copy(cat, fs::path(out_dir) / "catalog",
                 fs::copy_options::recursive | fs::copy_options::overwrite_existing);
    }
    return 0;
}

// ---------------------------------------------------------------- synth

struct ScenarioSpec {
    int rows = 128, cols = 128;
    std::size_t hours = 2880;  // 120 days
    int n_events = 12;
};

void inject_stage_errors(StageSeries& s, Rng& rng) {
    // a handful of decimal slips, spikes, and a short gap in the first half
    std::size_t half = s.size() / 2;
    for (int k = 0; k < 3; ++k) {
        std::size_t i = 24 + rng.uniform_index(half - 48);
        if (is_present(s.values[i])) s.values[i] *= 10.0;
    }
    for (int k = 0; k < 2; ++k) {
        std::size_t i = 24 + rng.uniform_index(half - 48);
        if (is_present(s.values[i])) s.values[i] += 8.0;
    }
    std::size_t gap = 24 + rng.uniform_index(half - 48);
    for (std::size_t i = gap; i < gap + 3 && i < s.size(); ++i) s.values[i] = kMissing;
}

int cmd_synth(const std::string& scenario, std::uint64_t seed, const std::string& out_dir) {
    if (scenario != "flood") throw DataError("unknown scenario '" + scenario + "' (available: flood)");
    ScenarioSpec sp;
    fs::path out(out_dir);
    fs::create_directories(out);
    fs::create_directories(out / "frames");

    UtcTime t0 = parse_iso8601_utc("2020-11-02T00:00:00Z");
    Rng rng(seed);

    // precipitation: seeded storms plus one engineered flood burst near the end
    PrecipSeries precip = make_storm_precip(t0, sp.hours, seed + 1, 0.012, 6.0, "g_dn");
    std::size_t burst = sp.hours - 96;
    for (std::size_t t = 0; t < 16; ++t) {
        double shape = std::sin(3.14159265 * static_cast<double>(t + 1) / 17.0);
        precip.values[burst + t] += 26.0 * shape;
    }

    // upstream gauge responds fast, downstream mixes the routed upstream
    // signal with slower local routing
    StageSeries up = route_linear_reservoir(precip, 30.0, 0.010, 2.0, "g_up");
    StageSeries slow = route_linear_reservoir(precip, 60.0, 0.006, 0.0, "g_dn");
    StageSeries dn = slow;
    int delay = 6;
    for (std::size_t i = 0; i < dn.size(); ++i) {
        double lagged = i >= static_cast<std::size_t>(delay) ? up.values[i - delay] : up.values[0];
        dn.values[i] = 0.15 + slow.values[i] + 0.55 * (lagged - 2.0) + 0.002 * rng.normal();
    }

    // thresholds sit between the seasonal peaks and the engineered flood
    double peak = *std::max_element(dn.values.begin(), dn.values.end());
    std::vector<double> sorted = dn.values;
    std::sort(sorted.begin(), sorted.end());
    double q95 = sorted[static_cast<std::size_t>(0.95 * (sorted.size() - 1))];
    GaugeConfig gdn;
    gdn.gauge_id = "g_dn";
    gdn.warning_stage_m = q95;
    gdn.danger_stage_m = q95 + 0.55 * (peak - q95);
    gdn.max_lead_time_h = 24;
    gdn.upstream_ids = {"g_up"};
    GaugeConfig gup;
    gup.gauge_id = "g_up";
    gup.warning_stage_m = *std::max_element(up.values.begin(), up.values.end()) + 1.0;  // never alerts
    gup.max_lead_time_h = 12;
    write_gauge_configs({gdn, gup}, (out / "gauges.json").string());

    // clean historical statistics, then corrupt the raw series for qc
    write_gauge_stats(GaugeStats::from_series(dn), out, "g_dn");
    write_gauge_stats(GaugeStats::from_series(up), out, "g_up");
    StageSeries dn_raw = dn, up_raw = up;
    inject_stage_errors(dn_raw, rng);
    inject_stage_errors(up_raw, rng);
    write_stage_csv(dn_raw, (out / stage_csv_name("g_dn")).string());
    write_stage_csv(up_raw, (out / stage_csv_name("g_up")).string());
    write_precip_csv(precip, (out / precip_csv_name("g_dn")).string());
    write_precip_csv(precip, (out / precip_csv_name("g_up")).string());

    // precipitation frames for the final 10 days exercise the gridded path;
    // a uniform field reproduces the archived hourly depths exactly
    Raster mask(8, 8, 0.0, 0.1);
    for (int r = 0; r < 8; ++r) {
        for (int c = 0; c < 8; ++c) mask.at(r, c) = (r >= 2 && r <= 5 && c >= 2 && c <= 5) ? 1.0 : 0.0;
    }
    write_asc(mask, (out / "mask_g_dn.asc").string());
    std::size_t frame_start = sp.hours > 240 ? sp.hours - 240 : 0;
    for (std::size_t h = frame_start; h < sp.hours; ++h) {
        double intensity = is_present(precip.values[h]) ? precip.values[h] : 0.0;
        for (int half = 0; half < 2; ++half) {
            PrecipGridFrame frame;
            frame.timestamp = t0 + static_cast<std::int64_t>(h) * 3600 + half * 1800;
            frame.intensities = Raster(8, 8, intensity, 0.1);
            write_precip_frame(frame, (out / "frames").string(), "g_dn");
        }
    }

    // valley DEM and the flood-event catalog for the downstream AOI
    Raster dem = make_valley_dem(sp.rows, sp.cols, 2.0, 0.004, 0.05, seed + 2);
    write_asc(dem, (out / "dem.asc").string());
    EventCatalog cat = make_event_catalog(dem, dn, sp.n_events, seed + 3);
    save_event_catalog(cat, (out / "catalog").string());

    // the forecast issue time sits on the rising limb of the engineered flood
    UtcTime suggested_now = t0 + static_cast<std::int64_t>(burst + 12) * 3600;
    json scenario_doc = {
        {"scenario", "flood"},
        {"seed", seed},
        {"suggested_now", format_iso8601_utc(suggested_now)},
        {"target_gauge", "g_dn"},
        {"danger_stage_m", *gdn.danger_stage_m},
        {"warning_stage_m", gdn.warning_stage_m},
    };
    {
        std::ofstream f(out / "scenario.json", std::ios::binary);
        f << scenario_doc.dump(2) << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------- train-stage

StageSeries load_series(const fs::path& data, const std::string& gauge) {
    return read_stage_csv((data / stage_csv_name(gauge)).string(), gauge);
}

int cmd_train_stage(const std::string& model, const std::string& config_path, const std::string& data_dir,
                    const std::string& out_path) {
    ConfigFile cfg = load_config(config_path);
    fs::path data(data_dir);
    auto gauges = read_gauge_configs((data / "gauges.json").string());

    if (model == "linear") {
        int lookback_h = cfg.get_int("linear", "lookback_h", 72);
        bool use_precip = cfg.get_bool("linear", "use_precip", false);
        fs::create_directories(out_path);
        for (const auto& g : gauges) {
            StageSeries target = load_series(data, g.gauge_id);
            std::vector<StageSeries> ups;
            for (const auto& uid : g.upstream_ids) ups.push_back(load_series(data, uid));
            PrecipSeries precip;
            bool have_precip = use_precip && fs::exists(data / precip_csv_name(g.gauge_id));
            if (have_precip) {
                precip = read_precip_csv((data / precip_csv_name(g.gauge_id)).string(), g.gauge_id);
            }
            for (int lead = 1; lead <= g.max_lead_time_h; ++lead) {
                auto rows = build_design_matrix(target, ups, lookback_h, lead,
                                                have_precip ? &precip : nullptr);
                double lambda;
                if (cfg.has("linear", "l2_lambda")) {
                    lambda = cfg.get_double("linear", "l2_lambda", 1e-3);
                } else {
                    std::size_t cut = rows.size() - rows.size() / 5;
                    if (cut == 0 || cut == rows.size()) {
                        lambda = 1e-3;
                    } else {
                        std::vector<DesignRow> tr(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(cut));
                        std::vector<DesignRow> va(rows.begin() + static_cast<std::ptrdiff_t>(cut), rows.end());
                        lambda = choose_lambda(tr, va);
                    }
                }
                LinearStageModel m = train_linear(rows, lambda);
                m.gauge_id = g.gauge_id;
                m.lead_h = lead;
                m.lookback_h = lookback_h;
                m.feature_ids.push_back(g.gauge_id);
                for (const auto& uid : g.upstream_ids) m.feature_ids.push_back(uid);
                m.uses_precip = have_precip;
                save_linear_model(m, (fs::path(out_path) /
                                      ("linear_" + g.gauge_id + "_lead" + std::to_string(lead) + ".json"))
                                         .string());
            }
            std::cout << "trained linear models for " << g.gauge_id << " (leads 1.."
                      << g.max_lead_time_h << ")\n";
        }
        return 0;
    }

    if (model == "lstm") {
        LstmConfig lc;
        lc.hidden_size = cfg.get_int("lstm", "hidden_size", lc.hidden_size);
        lc.target_lookback_h = cfg.get_int("lstm", "target_lookback_h", lc.target_lookback_h);
        lc.upstream_lookback_h = cfg.get_int("lstm", "upstream_lookback_h", lc.upstream_lookback_h);
        lc.max_lead_h = cfg.get_int("lstm", "max_lead_h", lc.max_lead_h);
        lc.n_components = cfg.get_int("lstm", "n_components", lc.n_components);
        lc.seed = static_cast<std::uint64_t>(cfg.get_int("lstm", "seed", 42));
        lc.learning_rate = cfg.get_double("lstm", "learning_rate", lc.learning_rate);
        lc.batch_size = cfg.get_int("lstm", "batch_size", lc.batch_size);
        lc.epochs = cfg.get_int("lstm", "epochs", lc.epochs);
        lc.grad_clip_norm = cfg.get_double("lstm", "grad_clip_norm", lc.grad_clip_norm);
        int stride = cfg.get_int("lstm", "stride_steps", 3);
        double val_frac = cfg.get_double("lstm", "validation_fraction", 0.1);

        std::vector<GaugeSeries> bundle;
        for (const auto& g : gauges) {
            GaugeSeries gs;
            gs.target = load_series(data, g.gauge_id);
            for (const auto& uid : g.upstream_ids) gs.upstreams.push_back(load_series(data, uid));
            if (fs::exists(data / precip_csv_name(g.gauge_id))) {
                gs.precip = read_precip_csv((data / precip_csv_name(g.gauge_id)).string(), g.gauge_id);
            }
            bundle.push_back(std::move(gs));
        }
        LstmDataset ds = build_lstm_dataset(bundle, lc, stride, val_frac);
        LstmModel m = train_lstm(ds, lc, [](int epoch, double tr, double va) {
            std::cout << "epoch " << epoch << " train " << tr << " val " << va << "\n";
        });
        save_lstm_model(m, out_path);
        return 0;
    }
    throw CLI::ValidationError("--model must be linear or lstm");
}

// ---------------------------------------------------------------- train-inundation

int cmd_train_inundation(const std::string& model, const std::string& catalog_path, const std::string& dem_path,
                         const std::string& config_path, const std::string& out_dir) {
    ConfigFile cfg = load_config(config_path);
    double minimal_ratio = cfg.get_double("thresholding", "minimal_ratio", 1.0);
    double slope = cfg.get_double("thresholding", "dilation_slope_px_per_m", 2.0);

    EventCatalog cat = load_event_catalog(catalog_path);
    PixelThresholdMap thr = train_thresholding(cat, minimal_ratio, slope);
    fs::create_directories(out_dir);
    save_threshold_model(thr, out_dir, cat.gauge_id);

    if (model == "manifold") {
        if (dem_path.empty()) throw DataError("--dem is required for the manifold model");
        Raster dem = read_asc(dem_path);
        LaplaceConfig lcfg;
        lcfg.omega = cfg.get_double("manifold", "omega", lcfg.omega);
        lcfg.tolerance_m = cfg.get_double("manifold", "tolerance_m", lcfg.tolerance_m);
        lcfg.max_sweeps = cfg.get_int("manifold", "max_sweeps", lcfg.max_sweeps);
        int factor = cfg.get_int("manifold", "factor", 32);
        HeightStack stack = build_height_stack(cat, dem, thr, factor, lcfg);
        stack.dem_ref = dem_path;
        save_height_stack(stack, (fs::path(out_dir) / (cat.gauge_id + "_heightstack")).string());
    } else if (model != "threshold") {
        throw CLI::ValidationError("--model must be threshold or manifold");
    }
    return 0;
}

// ---------------------------------------------------------------- forecast

std::vector<double> linear_forecast(const fs::path& artifacts, const GaugeConfig& g,
                                    const StageSeries& target, const std::vector<StageSeries>& ups,
                                    const PrecipSeries* precip, UtcTime now) {
    std::vector<double> out;
    for (int lead = 1; lead <= g.max_lead_time_h; ++lead) {
        fs::path mp = artifacts / ("linear_" + g.gauge_id + "_lead" + std::to_string(lead) + ".json");
        if (!fs::exists(mp)) break;
        LinearStageModel m = load_linear_model(mp.string());
        std::vector<double> feats;
        std::int64_t back = m.lookback_h;  // hourly series
        auto push_window = [&](const StageSeries& s) {
            for (std::int64_t k = back; k >= 0; --k) {
                auto idx = s.index_of(now - k * s.step_s);
                double v = idx ? s.values[*idx] : kMissing;
                if (is_missing(v)) throw DataError("forecast: missing stage near the issue time; run qc");
                feats.push_back(v);
            }
        };
        push_window(target);
        for (const auto& u : ups) push_window(u);
        if (m.uses_precip) {
            if (!precip) throw DataError("forecast: model expects precipitation input");
            for (std::int64_t k = back; k >= 0; --k) {
                std::int64_t d = now - k * precip->step_s - precip->t0;
                double v = (d >= 0 && d % precip->step_s == 0 &&
                            d / precip->step_s < static_cast<std::int64_t>(precip->values.size()))
                               ? precip->values[static_cast<std::size_t>(d / precip->step_s)]
                               : 0.0;
                feats.push_back(is_missing(v) ? 0.0 : v);
            }
        }
        out.push_back(predict_linear(m, feats));
    }
    return out;
}

int cmd_forecast(const std::string& artifacts_dir, const std::string& now_text, const std::string& data_dir,
                 const std::string& out_dir, const std::string& config_path) {
    ConfigFile cfg = load_config(config_path);
    UtcTime now = parse_iso8601_utc(now_text);
    fs::path artifacts(artifacts_dir), data(data_dir), out(out_dir);
    fs::create_directories(out);
    auto gauges = read_gauge_configs((data / "gauges.json").string());

    bool strict = cfg.get_bool("alerting", "strict_exceedance", false);
    AlertSinkConfig sink;
    sink.out_dir = out.string();
    sink.webhook_url = cfg.get_string("alerting", "webhook_url", "");
    sink.suppression_window_h = cfg.get_double("alerting", "suppression_window_h", 6.0);
    sink.suppression_rise_m = cfg.get_double("alerting", "suppression_rise_m", 0.1);
    AlertEmitter emitter(sink);

    std::string point_kind = cfg.get_string("forecast", "point_forecast", "median");

    std::optional<LstmModel> lstm;
    fs::path lstm_path = artifacts / "lstm_region.bin";
    if (fs::exists(lstm_path)) lstm = load_lstm_model(lstm_path.string());

    Raster dem;
    bool have_dem = fs::exists(data / "dem.asc");
    if (have_dem) dem = read_asc((data / "dem.asc").string());

    int emitted = 0;
    for (const auto& g : gauges) {
        StageSeries target = load_series(data, g.gauge_id);
        std::vector<StageSeries> ups;
        for (const auto& uid : g.upstream_ids) ups.push_back(load_series(data, uid));
        PrecipSeries precip;
        bool have_precip = fs::exists(data / precip_csv_name(g.gauge_id));
        if (have_precip) precip = read_precip_csv((data / precip_csv_name(g.gauge_id)).string(), g.gauge_id);

        auto now_idx = target.index_of(now);
        if (!now_idx || is_missing(target.values[*now_idx])) {
            throw DataError("forecast: no stage sample at " + now_text + " for " + g.gauge_id);
        }
        double current = target.values[*now_idx];

        std::vector<double> stages;
        bool used_lstm = false;
        if (lstm) {
            try {
                lstm->gauge_index(g.gauge_id);
                used_lstm = true;
            } catch (const DataError&) {
                used_lstm = false;
            }
        }
        if (used_lstm) {
            const LstmConfig& lc = lstm->config();
            int T = lc.target_lookback_h, full = lc.upstream_lookback_h;
            std::vector<double> hist(static_cast<std::size_t>(T));
            std::vector<double> pr(static_cast<std::size_t>(T), 0.0);
            for (int k = 0; k < T; ++k) {
                auto idx = target.index_of(now - static_cast<std::int64_t>(T - 1 - k) * target.step_s);
                hist[static_cast<std::size_t>(k)] = idx ? target.values[*idx] : kMissing;
                if (have_precip) {
                    std::int64_t d = now - static_cast<std::int64_t>(T - 1 - k) * 3600 - precip.t0;
                    if (d >= 0 && d % precip.step_s == 0 &&
                        d / precip.step_s < static_cast<std::int64_t>(precip.values.size())) {
                        double v = precip.values[static_cast<std::size_t>(d / precip.step_s)];
                        pr[static_cast<std::size_t>(k)] = is_missing(v) ? 0.0 : v;
                    }
                }
            }
            std::vector<std::vector<double>> uph;
            for (const auto& u : ups) {
                std::vector<double> h(static_cast<std::size_t>(full));
                for (int k = 0; k < full; ++k) {
                    auto idx = u.index_of(now - static_cast<std::int64_t>(full - 1 - k) * u.step_s);
                    h[static_cast<std::size_t>(k)] = idx ? u.values[*idx] : kMissing;
                }
                uph.push_back(std::move(h));
            }
            CmalForecast fc = lstm->forecast(g.gauge_id, hist, uph, pr,
                                             std::min(g.max_lead_time_h, lc.max_lead_h));
            for (const auto& step : fc.steps) {
                if (point_kind == "mean") stages.push_back(cmal_mean(step));
                else if (point_kind == "mode") stages.push_back(cmal_mode(step));
                else stages.push_back(cmal_median(step));
            }
        } else {
            stages = linear_forecast(artifacts, g, target, ups, have_precip ? &precip : nullptr, now);
        }
        if (stages.empty()) {
            std::cerr << "forecast: no stage model artifacts for " << g.gauge_id << "\n";
            continue;
        }

        // raw forecast output
        {
            std::ofstream f(out / ("forecast_" + g.gauge_id + ".csv"), std::ios::binary);
            f << "lead_h,stage_m\n";
            for (std::size_t i = 0; i < stages.size(); ++i) {
                f << (i + 1) << "," << format_double(stages[i]) << "\n";
            }
        }

        auto handle_alert = [&](std::optional<Alert> alert) {
            if (!alert) return;
            InundationModelRef model;
            PixelThresholdMap thr;
            HeightStack stack;
            fs::path stack_dir = artifacts / (g.gauge_id + "_heightstack");
            if (fs::exists(stack_dir / "manifest.json") && have_dem) {
                stack = load_height_stack(stack_dir.string());
                model.stack = &stack;
                model.dem = &dem;
            } else if (fs::exists(artifacts / (g.gauge_id + "_threshold.json"))) {
                thr = load_threshold_model(artifacts.string(), g.gauge_id);
                model.threshold = &thr;
            }
            Alert full = attach_inundation(*alert, model, out.string());
            DeliveryRecord rec = emitter.emit(full);
            if (!rec.suppressed) {
                ++emitted;
                std::cout << "alert: " << g.gauge_id << " " << severity_name(full.severity) << " max "
                          << full.max_forecast_stage_m << " m at " << format_iso8601_utc(full.valid_at)
                          << " -> " << rec.file_path << "\n";
            }
        };

        handle_alert(evaluate_trigger(stages, g, current, now, AlertSource::kInternal, strict));

        fs::path ext = data / "external_forecasts.json";
        if (fs::exists(ext)) {
            for (const auto& fc : read_external_forecasts(ext.string())) {
                if (fc.gauge_id != g.gauge_id) continue;
                handle_alert(evaluate_trigger_external(fc, g, current, strict));
            }
        }
    }
    std::cout << emitted << " alert(s) emitted\n";
    return 0;
}

// ---------------------------------------------------------------- evaluate

int cmd_evaluate(const std::string& scheme_name, const std::string& artifacts_dir, const std::string& data_dir,
                 const std::string& report_path, const std::string& config_path) {
    ConfigFile cfg = load_config(config_path);
    fs::path data(data_dir);
    (void)artifacts_dir;

    FoldSpec spec;
    if (scheme_name == "loyo") spec.scheme = FoldScheme::kLeaveOneYear;
    else if (scheme_name == "leo") spec.scheme = FoldScheme::kLeaveExtremeOut;
    else throw CLI::ValidationError("--scheme must be loyo or leo");
    spec.margin_m = cfg.get_double("evaluate", "margin_m", 0.30);
    spec.year_start_month = cfg.get_int("evaluate", "year_start_month", 1);

    EventCatalog cat = load_event_catalog((data / "catalog" / "catalog.json").string());
    double minimal_ratio = cfg.get_double("thresholding", "minimal_ratio", 1.0);
    double slope = cfg.get_double("thresholding", "dilation_slope_px_per_m", 2.0);
    int factor = cfg.get_int("manifold", "factor", 32);

    std::vector<std::string> models = cfg.get_list("evaluate", "models");
    bool have_dem = fs::exists(data / "dem.asc");
    if (models.empty()) {
        models = {"threshold"};
        if (have_dem) models.push_back("manifold");
    }
    Raster dem;
    if (have_dem) dem = read_asc((data / "dem.asc").string());

    std::vector<FoldItem> items;
    for (std::size_t i = 0; i < cat.events.size(); ++i) {
        items.push_back({cat.events[i].timestamp, cat.events[i].stage_m, i});
    }
    auto folds = split_folds(items, spec);
    if (folds.empty()) throw DataError("evaluate: no usable folds");

    std::vector<ReportRow> rows;
    for (const auto& fold : folds) {
        EventCatalog train;
        train.gauge_id = cat.gauge_id;
        for (std::size_t i : fold.train) train.events.push_back(cat.events[i]);
        for (const std::string& model : models) {
            PixelThresholdMap thr = train_thresholding(train, minimal_ratio, slope);
            std::optional<HeightStack> stack;
            if (model == "manifold") {
                if (!have_dem) throw DataError("evaluate: manifold model needs dem.asc");
                stack = build_height_stack(train, dem, thr, factor);
            }
            for (std::size_t i : fold.validation) {
                const FloodEvent& ev = cat.events[i];
                Raster pred = stack ? stage_to_depth(*stack, dem, ev.stage_m).first
                                    : predict_extent(thr, ev.stage_m);
                ExtentScores sc = extent_scores(pred, ev.extent);
                rows.push_back({cat.gauge_id, model, scheme_name, fold.label, "f1", sc.f1});
                rows.push_back({cat.gauge_id, model, scheme_name, fold.label, "precision", sc.precision});
                rows.push_back({cat.gauge_id, model, scheme_name, fold.label, "recall", sc.recall});
            }
        }
    }
    write_report_csv(rows, report_path);
    write_report_summary(rows, report_path + ".summary.json");
    std::cout << "wrote " << rows.size() << " rows to " << report_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"floodcast: river stage forecasting, inundation mapping, and alerting"};
    app.require_subcommand(1);
    app.footer(
        "Config file keys (INI sections, shown with defaults):\n"
        "  [qc]            decimal_window_h=12  decimal_k=6  outlier_margin_m=1\n"
        "                  jump_factor=3  max_gap_h=6  precip_cap_mm_h=200\n"
        "  [linear]        lookback_h=72  use_precip=false  l2_lambda=(validation grid)\n"
        "  [lstm]          hidden_size=128  target_lookback_h=168  upstream_lookback_h=240\n"
        "                  max_lead_h=48  n_components=3  seed=42  learning_rate=0.001\n"
        "                  batch_size=64  epochs=20  grad_clip_norm=1  stride_steps=3\n"
        "                  validation_fraction=0.1\n"
        "  [thresholding]  minimal_ratio=1  dilation_slope_px_per_m=2\n"
        "  [manifold]      factor=32  omega=1.7  tolerance_m=0.0001  max_sweeps=10000\n"
        "  [alerting]      webhook_url=  strict_exceedance=false\n"
        "                  suppression_window_h=6  suppression_rise_m=0.1\n"
        "  [forecast]      point_forecast=median\n"
        "  [evaluate]      models=threshold,manifold  margin_m=0.3  year_start_month=1\n"
        "\n"
        "FLOODCAST_THREADS caps worker threads for per-pixel training loops.");

    std::string config_path, in_dir, out_path, scenario = "flood", model, data_dir, catalog_path, dem_path;
    std::string now_text, scheme, report_path, grid_path;
    std::uint64_t seed = 1;

    auto* qc = app.add_subcommand("qc", "validate, correct, and gap-fill stage and precipitation data");
    qc->add_option("--config", config_path, "config file (key = value sections)");
    qc->add_option("--in", in_dir, "input data directory")->required();
    qc->add_option("--out", out_path, "output directory for cleaned data")->required();

    auto* synth = app.add_subcommand("synth", "generate a synthetic watershed scenario");
    synth->add_option("--scenario", scenario, "scenario name (flood)");
    synth->add_option("--seed", seed, "random seed");
    synth->add_option("--out", out_path, "output directory")->required();

    auto* ts = app.add_subcommand("train-stage", "train stage forecast models");
    ts->add_option("--model", model, "linear | lstm")->required();
    ts->add_option("--config", config_path, "config file");
    ts->add_option("--data", data_dir, "cleaned data directory")->required();
    ts->add_option("--out", out_path, "artifact path (directory for linear, file for lstm)")->required();

    auto* ti = app.add_subcommand("train-inundation", "train inundation models");
    ti->add_option("--model", model, "threshold | manifold")->required();
    ti->add_option("--catalog", catalog_path, "event catalog manifest (catalog.json)")->required();
    ti->add_option("--dem", dem_path, "DEM ascii grid (manifold)");
    ti->add_option("--config", config_path, "config file");
    ti->add_option("--out", out_path, "artifact directory")->required();

    auto* fc = app.add_subcommand("forecast", "forecast stages, trigger alerts, attach inundation");
    fc->add_option("--artifacts", in_dir, "model artifact directory")->required();
    fc->add_option("--now", now_text, "forecast issue time (ISO-8601 UTC)")->required();
    fc->add_option("--data", data_dir, "cleaned data directory")->required();
    fc->add_option("--out", out_path, "output directory for forecasts and alerts")->required();
    fc->add_option("--config", config_path, "config file");

    auto* ev = app.add_subcommand("evaluate", "cross-validate inundation models");
    ev->add_option("--scheme", scheme, "loyo | leo")->required();
    ev->add_option("--artifacts", in_dir, "artifact directory (reserved)");
    ev->add_option("--data", data_dir, "data directory with catalog/ and dem.asc")->required();
    ev->add_option("--report", report_path, "report CSV path")->required();
    ev->add_option("--config", config_path, "config file");

    auto* rd = app.add_subcommand("render", "render an ascii grid to an 8-bit PGM");
    rd->add_option("--grid", grid_path, "input ascii grid")->required();
    rd->add_option("--out", out_path, "output PGM path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);  // prints the message or the help text
        return rc == 0 ? 0 : 1;
    }

    try {
        if (qc->parsed()) return cmd_qc(config_path, in_dir, out_path);
        if (synth->parsed()) return cmd_synth(scenario, seed, out_path);
        if (ts->parsed()) return cmd_train_stage(model, config_path, data_dir, out_path);
        if (ti->parsed()) return cmd_train_inundation(model, catalog_path, dem_path, config_path, out_path);
        if (fc->parsed()) return cmd_forecast(in_dir, now_text, data_dir, out_path, config_path);
        if (ev->parsed()) return cmd_evaluate(scheme, in_dir, data_dir, report_path, config_path);
        if (rd->parsed()) {
            write_pgm(read_asc(grid_path), out_path);
            return 0;
        }
    } catch (const CLI::Error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
