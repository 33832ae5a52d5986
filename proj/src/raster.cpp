#include "floodcast/raster.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace floodcast {

namespace {

constexpr double kNodataValue = -9999.0;

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

}  // namespace

Raster parse_asc(const std::string& text) {
    std::istringstream in(text);
    Raster g;
    g.cell_size = 0.0;
    int ncols = -1, nrows = -1;
    double nodata = kNodataValue;

    // Header: key/value lines until the first purely numeric token.
    std::string key;
    while (in >> key) {
        std::string k = lower(key);
        if (k == "ncols" || k == "nrows" || k == "xllcorner" || k == "yllcorner" ||
            k == "cellsize" || k == "nodata_value") {
            double v;
            if (!(in >> v)) throw DataError("ascii grid: missing value for header key '" + key + "'");
            if (k == "ncols") ncols = static_cast<int>(v);
            else if (k == "nrows") nrows = static_cast<int>(v);
            else if (k == "xllcorner") g.origin_x = v;
            else if (k == "yllcorner") g.origin_y = v;
            else if (k == "cellsize") g.cell_size = v;
            else nodata = v;
        } else {
            break;
        }
    }
    if (ncols < 1 || nrows < 1 || g.cell_size <= 0.0) {
        throw DataError("ascii grid: incomplete header");
    }
    g.rows = nrows;
    g.cols = ncols;
    g.values.resize(static_cast<std::size_t>(nrows) * ncols);

    // `key` already holds the first data token.
    std::size_t n = g.values.size();
    std::size_t i = 0;
    std::string tok = key;
    while (true) {
        double v;
        auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
            throw DataError("ascii grid: bad data token '" + tok + "'");
        }
        if (i >= n) throw DataError("ascii grid: more data values than ncols*nrows");
        g.values[i++] = (std::fabs(v - nodata) < 0.5) ? kMissing : v;
        if (!(in >> tok)) break;
    }
    if (i != n) throw DataError("ascii grid: expected " + std::to_string(n) + " values, got " + std::to_string(i));
    return g;
}

Raster read_asc(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << f.rdbuf();
    try {
        return parse_asc(buf.str());
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

std::string to_asc(const Raster& g) {
    if (g.rows < 1 || g.cols < 1) throw DataError("ascii grid: empty raster");
    std::string out;
    out.reserve(g.size() * 8 + 128);
    out += "ncols " + std::to_string(g.cols) + "\n";
    out += "nrows " + std::to_string(g.rows) + "\n";
    out += "xllcorner " + format_double(g.origin_x) + "\n";
    out += "yllcorner " + format_double(g.origin_y) + "\n";
    out += "cellsize " + format_double(g.cell_size) + "\n";
    out += "NODATA_value -9999\n";
    for (int r = 0; r < g.rows; ++r) {
        for (int c = 0; c < g.cols; ++c) {
            if (c) out += ' ';
            double v = g.at(r, c);
            out += is_missing(v) ? "-9999" : format_double(v);
        }
        out += '\n';
    }
    return out;
}

void write_asc(const Raster& g, const std::string& path) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw DataError("cannot write '" + tmp + "'");
        f << to_asc(g);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw DataError("cannot rename '" + tmp + "' to '" + path + "'");
    }
}

void write_pgm(const Raster& g, const std::string& path) {
    double lo = kInf, hi = -kInf;
    for (double v : g.values) {
        if (is_missing(v)) continue;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (lo > hi) { lo = 0.0; hi = 0.0; }
    double scale = (hi > lo) ? 255.0 / (hi - lo) : 0.0;

    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw DataError("cannot write '" + tmp + "'");
        f << "P5\n" << g.cols << " " << g.rows << "\n255\n";
        for (double v : g.values) {
            unsigned char b = 0;
            if (is_present(v)) b = static_cast<unsigned char>(std::lround((v - lo) * scale));
            f.put(static_cast<char>(b));
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw DataError("cannot rename '" + tmp + "' to '" + path + "'");
    }

    nlohmann::json sidecar = {
        {"min", lo},
        {"max", hi},
        {"gray_per_unit", scale},
        {"nodata_gray", 0},
    };
    std::ofstream sf(path + ".json", std::ios::binary);
    sf << sidecar.dump(2) << "\n";
}

Raster majority_downsample(const Raster& extent, int factor) {
    if (factor < 1) throw DataError("downsample factor must be >= 1");
    Raster out((extent.rows + factor - 1) / factor, (extent.cols + factor - 1) / factor,
               0.0, extent.cell_size * factor);
    out.origin_x = extent.origin_x;
    out.origin_y = extent.origin_y;
    for (int R = 0; R < out.rows; ++R) {
        for (int C = 0; C < out.cols; ++C) {
            int wet = 0, valid = 0;
            for (int r = R * factor; r < std::min((R + 1) * factor, extent.rows); ++r) {
                for (int c = C * factor; c < std::min((C + 1) * factor, extent.cols); ++c) {
                    if (extent.is_nodata(r, c)) continue;
                    ++valid;
                    if (extent.wet(r, c)) ++wet;
                }
            }
            if (valid == 0) out.at(R, C) = kMissing;
            else out.at(R, C) = (2 * wet >= valid) ? 1.0 : 0.0;
        }
    }
    return out;
}

}  // namespace floodcast
