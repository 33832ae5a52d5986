#include "floodcast/series.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace floodcast {

std::optional<std::size_t> StageSeries::index_of(UtcTime t) const {
    if (step_s <= 0 || t < t0) return std::nullopt;
    std::int64_t d = t - t0;
    if (d % step_s != 0) return std::nullopt;
    std::size_t i = static_cast<std::size_t>(d / step_s);
    if (i >= values.size()) return std::nullopt;
    return i;
}

void StageSeries::validate() const {
    if (step_s <= 0) throw DataError("series '" + gauge_id + "': step must be > 0");
    for (double v : values) {
        if (is_present(v) && !std::isfinite(v)) {
            throw DataError("series '" + gauge_id + "': non-finite stage value");
        }
    }
}

namespace {

struct TimedValues {
    UtcTime t0 = 0;
    std::int64_t step_s = 3600;
    std::vector<double> values;
};

TimedValues read_timed_csv(const std::string& path, const char* expected_header) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(f, line)) throw DataError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != expected_header) {
        throw DataError(path + ": expected header '" + std::string(expected_header) + "', got '" + line + "'");
    }
    TimedValues out;
    std::vector<UtcTime> times;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto comma = line.find(',');
        if (comma == std::string::npos) throw DataError(path + ": malformed row '" + line + "'");
        times.push_back(parse_iso8601_utc(line.substr(0, comma)));
        std::string field = line.substr(comma + 1);
        if (field.empty()) {
            out.values.push_back(kMissing);
        } else {
            double v;
            auto res = std::from_chars(field.data(), field.data() + field.size(), v);
            if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
                throw DataError(path + ": bad value '" + field + "'");
            }
            out.values.push_back(v);
        }
    }
    if (times.empty()) throw DataError(path + ": no samples");
    out.t0 = times.front();
    if (times.size() > 1) {
        out.step_s = times[1] - times[0];
        if (out.step_s <= 0) throw DataError(path + ": non-increasing timestamps");
        for (std::size_t i = 1; i < times.size(); ++i) {
            if (times[i] - times[i - 1] != out.step_s) {
                throw DataError(path + ": non-uniform time grid at row " + std::to_string(i + 1));
            }
        }
    }
    return out;
}

template <typename S>
void write_timed_csv(const S& s, const std::string& path, const char* header) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw DataError("cannot write '" + tmp + "'");
        f << header << "\n";
        for (std::size_t i = 0; i < s.values.size(); ++i) {
            f << format_iso8601_utc(s.time_at(i)) << ",";
            if (is_present(s.values[i])) f << format_double(s.values[i]);
            f << "\n";
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw DataError("cannot rename '" + tmp + "' to '" + path + "'");
    }
}

}  // namespace

StageSeries read_stage_csv(const std::string& path, const std::string& gauge_id) {
    TimedValues tv = read_timed_csv(path, "timestamp,stage_m");
    StageSeries s;
    s.gauge_id = gauge_id;
    s.t0 = tv.t0;
    s.step_s = tv.step_s;
    s.values = std::move(tv.values);
    s.validate();
    return s;
}

void write_stage_csv(const StageSeries& s, const std::string& path) {
    write_timed_csv(s, path, "timestamp,stage_m");
}

PrecipSeries read_precip_csv(const std::string& path, const std::string& basin_id) {
    TimedValues tv = read_timed_csv(path, "timestamp,depth_mm");
    PrecipSeries p;
    p.basin_id = basin_id;
    p.t0 = tv.t0;
    p.step_s = tv.step_s;
    p.values = std::move(tv.values);
    return p;
}

void write_precip_csv(const PrecipSeries& p, const std::string& path) {
    write_timed_csv(p, path, "timestamp,depth_mm");
}

}  // namespace floodcast
