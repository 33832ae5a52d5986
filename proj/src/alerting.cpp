#include "floodcast/alerting.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace floodcast {

const char* severity_name(Severity s) { return s == Severity::kDanger ? "danger" : "warning"; }
const char* source_name(AlertSource s) { return s == AlertSource::kExternal ? "external" : "internal"; }

void ExternalForecast::validate() const {
    if (gauge_id.empty()) throw DataError("external forecast: missing gauge id");
    if (points.empty()) throw DataError("external forecast: no horizon points");
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].first < 1) throw DataError("external forecast: lead must be >= 1 h");
        if (i > 0 && points[i].first <= points[i - 1].first) {
            throw DataError("external forecast: leads must strictly increase");
        }
        if (!std::isfinite(points[i].second)) throw DataError("external forecast: non-finite stage");
    }
}

std::vector<ExternalForecast> read_external_forecasts(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open '" + path + "'");
    json doc;
    try {
        f >> doc;
    } catch (const json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
    std::vector<ExternalForecast> out;
    for (const auto& jf : doc.at("forecasts")) {
        ExternalForecast fc;
        fc.gauge_id = jf.at("gauge_id").get<std::string>();
        fc.issued_at = parse_iso8601_utc(jf.at("issued_at").get<std::string>());
        for (const auto& jp : jf.at("points")) {
            fc.points.emplace_back(jp.at("lead_h").get<int>(), jp.at("stage_m").get<double>());
        }
        fc.validate();
        out.push_back(std::move(fc));
    }
    return out;
}

void write_external_forecasts(const std::vector<ExternalForecast>& fcs, const std::string& path) {
    json arr = json::array();
    for (const auto& fc : fcs) {
        json points = json::array();
        for (const auto& [lead, stage] : fc.points) {
            points.push_back({{"lead_h", lead}, {"stage_m", stage}});
        }
        arr.push_back({{"gauge_id", fc.gauge_id},
                       {"issued_at", format_iso8601_utc(fc.issued_at)},
                       {"points", points}});
    }
    json doc = {{"schema_version", 1}, {"forecasts", arr}};
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write '" + path + "'");
    f << doc.dump(2) << "\n";
}

namespace {

std::optional<Alert> trigger_from_points(const std::vector<std::pair<int, double>>& lead_stage,
                                         const GaugeConfig& cfg, double current_stage_m,
                                         UtcTime issue_time, AlertSource source, bool strict) {
    double max_stage = -kInf;
    int max_lead = 0;
    for (const auto& [lead, stage] : lead_stage) {
        if (lead < 1 || lead > cfg.max_lead_time_h) continue;
        if (stage > max_stage) {
            max_stage = stage;
            max_lead = lead;
        }
    }
    if (max_lead == 0) return std::nullopt;

    auto crossed = [&](double threshold) { return strict ? max_stage > threshold : max_stage >= threshold; };
    std::optional<Severity> sev;
    if (cfg.danger_stage_m && crossed(*cfg.danger_stage_m)) sev = Severity::kDanger;
    else if (crossed(cfg.warning_stage_m)) sev = Severity::kWarning;
    if (!sev) return std::nullopt;

    Alert a;
    a.gauge_id = cfg.gauge_id;
    a.issued_at = issue_time;
    a.valid_at = issue_time + static_cast<std::int64_t>(max_lead) * 3600;
    a.max_forecast_stage_m = max_stage;
    a.current_stage_m = current_stage_m;
    a.stage_change_m = max_stage - current_stage_m;
    a.severity = *sev;
    a.source = source;
    return a;
}

}  // namespace

std::optional<Alert> evaluate_trigger(const std::vector<double>& stage_per_lead_h,
                                      const GaugeConfig& cfg, double current_stage_m,
                                      UtcTime issue_time, AlertSource source, bool strict_exceedance) {
    std::vector<std::pair<int, double>> points;
    points.reserve(stage_per_lead_h.size());
    for (std::size_t i = 0; i < stage_per_lead_h.size(); ++i) {
        points.emplace_back(static_cast<int>(i) + 1, stage_per_lead_h[i]);
    }
    return trigger_from_points(points, cfg, current_stage_m, issue_time, source, strict_exceedance);
}

std::optional<Alert> evaluate_trigger_external(const ExternalForecast& fc, const GaugeConfig& cfg,
                                               double current_stage_m, bool strict_exceedance) {
    fc.validate();
    if (fc.gauge_id != cfg.gauge_id) throw DataError("external forecast gauge does not match config");
    return trigger_from_points(fc.points, cfg, current_stage_m, fc.issued_at, AlertSource::kExternal,
                               strict_exceedance);
}

Alert attach_inundation(Alert a, const InundationModelRef& model, const std::string& out_dir) {
    if (!model.threshold && !model.stack) return a;  // map-less gauge
    fs::create_directories(out_dir);
    // paths are stored relative to the alert document's directory so a
    // rerun into a fresh directory yields identical bytes
    std::string stem = a.gauge_id + "_" + std::to_string(a.valid_at);
    if (model.stack) {
        if (!model.dem) throw DataError("attach_inundation: height stack needs a DEM");
        auto [extent, depth] = stage_to_depth(*model.stack, *model.dem, a.max_forecast_stage_m);
        std::string ename = stem + "_extent.asc";
        std::string dname = stem + "_depth.asc";
        write_asc(extent, (fs::path(out_dir) / ename).string());
        write_asc(depth, (fs::path(out_dir) / dname).string());
        a.extent_path = ename;
        a.depth_path = dname;
    } else {
        Raster extent = predict_extent(*model.threshold, a.max_forecast_stage_m);
        std::string ename = stem + "_extent.asc";
        write_asc(extent, (fs::path(out_dir) / ename).string());
        a.extent_path = ename;
    }
    return a;
}

std::string alert_to_json(const Alert& a) {
    json doc = {
        {"schema_version", 1},
        {"gauge_id", a.gauge_id},
        {"issued_at", format_iso8601_utc(a.issued_at)},
        {"valid_at", format_iso8601_utc(a.valid_at)},
        {"max_forecast_stage_m", a.max_forecast_stage_m},
        {"stage_change_m", a.stage_change_m},
        {"severity", severity_name(a.severity)},
        {"source", source_name(a.source)},
    };
    if (a.extent_path) doc["extent_path"] = *a.extent_path;
    if (a.depth_path) doc["depth_path"] = *a.depth_path;
    return doc.dump(2) + "\n";
}

std::string AlertEmitter::alert_filename(const Alert& a) {
    std::string ts = format_iso8601_utc(a.valid_at);
    std::erase(ts, ':');
    std::erase(ts, '-');
    return "alert_" + a.gauge_id + "_" + ts + "_" + severity_name(a.severity) + ".json";
}

AlertEmitter::AlertEmitter(AlertSinkConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.out_dir.empty()) throw DataError("alert emitter: out_dir required");
    fs::create_directories(cfg_.out_dir);
    for (const auto& e : fs::directory_iterator(cfg_.out_dir)) {
        if (!e.is_regular_file()) continue;
        std::string name = e.path().filename().string();
        if (name.rfind("alert_", 0) != 0 || !name.ends_with(".json")) continue;
        std::ifstream f(e.path(), std::ios::binary);
        json doc;
        try {
            f >> doc;
        } catch (const json::exception&) {
            continue;
        }
        std::string key = doc.value("gauge_id", "") + "/" + doc.value("severity", "");
        Seen s{parse_iso8601_utc(doc.value("issued_at", "1970-01-01T00:00:00Z")),
               doc.value("max_forecast_stage_m", 0.0)};
        auto it = last_by_gauge_severity_.find(key);
        if (it == last_by_gauge_severity_.end() || it->second.issued_at < s.issued_at) {
            last_by_gauge_severity_[key] = s;
        }
    }
}

DeliveryRecord AlertEmitter::emit(const Alert& a) {
    DeliveryRecord rec;
    fs::path path = fs::path(cfg_.out_dir) / alert_filename(a);

    if (fs::exists(path)) {  // dedup key already emitted
        rec.suppressed = true;
        rec.file_path = path.string();
        return rec;
    }
    std::string key = a.gauge_id + "/" + severity_name(a.severity);
    auto it = last_by_gauge_severity_.find(key);
    if (it != last_by_gauge_severity_.end()) {
        double age_h = static_cast<double>(a.issued_at - it->second.issued_at) / 3600.0;
        if (age_h >= 0.0 && age_h < cfg_.suppression_window_h &&
            a.max_forecast_stage_m <= it->second.max_stage + cfg_.suppression_rise_m) {
            rec.suppressed = true;
            return rec;
        }
    }

    std::string body = alert_to_json(a);
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw DataError("cannot write '" + tmp.string() + "'");
        f << body;
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw DataError("cannot rename '" + tmp.string() + "'");
    }
    rec.file_path = path.string();
    last_by_gauge_severity_[key] = {a.issued_at, a.max_forecast_stage_m};

    if (!cfg_.webhook_url.empty()) {
        rec.webhook_attempted = true;
        // split http://host:port/path
        std::string url = cfg_.webhook_url;
        std::string origin = url, target = "/";
        auto scheme = url.find("://");
        auto slash = scheme == std::string::npos ? url.find('/') : url.find('/', scheme + 3);
        if (slash != std::string::npos) {
            origin = url.substr(0, slash);
            target = url.substr(slash);
        }
        int delay_ms = cfg_.backoff_initial_ms;
        for (int attempt = 0; attempt < cfg_.webhook_attempts; ++attempt) {
            ++rec.webhook_tries;
            httplib::Client client(origin);
            client.set_connection_timeout(5, 0);
            auto res = client.Post(target, body, "application/json");
            if (res && res->status >= 200 && res->status < 300) {
                rec.webhook_delivered = true;
                break;
            }
            if (attempt + 1 < cfg_.webhook_attempts) {
                std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
                delay_ms *= 2;
            }
        }
    }
    return rec;
}

}  // namespace floodcast
