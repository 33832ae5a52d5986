#include "floodcast/configfile.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace floodcast {

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

}  // namespace

ConfigFile ConfigFile::parse_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open config '" + path + "'");
    std::ostringstream buf;
    buf << f.rdbuf();
    try {
        return parse_text(buf.str());
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

ConfigFile ConfigFile::parse_text(const std::string& text) {
    ConfigFile cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw DataError("line " + std::to_string(lineno) + ": unterminated section");
            section = trim(line.substr(1, line.size() - 2));
            cfg.sections_[section];
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) throw DataError("line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw DataError("line " + std::to_string(lineno) + ": empty key");
        cfg.sections_[section][key] = value;
    }
    return cfg;
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key) > 0;
}

std::string ConfigFile::get_string(const std::string& section, const std::string& key,
                                   const std::string& fallback) const {
    auto s = sections_.find(section);
    if (s == sections_.end()) return fallback;
    auto k = s->second.find(key);
    return k == s->second.end() ? fallback : k->second;
}

double ConfigFile::get_double(const std::string& section, const std::string& key, double fallback) const {
    if (!has(section, key)) return fallback;
    const std::string& v = sections_.at(section).at(key);
    double out;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        throw DataError("config [" + section + "] " + key + ": '" + v + "' is not a number");
    }
    return out;
}

int ConfigFile::get_int(const std::string& section, const std::string& key, int fallback) const {
    if (!has(section, key)) return fallback;
    const std::string& v = sections_.at(section).at(key);
    int out;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        throw DataError("config [" + section + "] " + key + ": '" + v + "' is not an integer");
    }
    return out;
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key, bool fallback) const {
    if (!has(section, key)) return fallback;
    std::string v = sections_.at(section).at(key);
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw DataError("config [" + section + "] " + key + ": '" + v + "' is not a boolean");
}

std::vector<std::string> ConfigFile::get_list(const std::string& section, const std::string& key) const {
    std::vector<std::string> out;
    if (!has(section, key)) return out;
    std::istringstream in(sections_.at(section).at(key));
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

void ConfigFile::validate_against(const std::map<std::string, std::vector<std::string>>& schema) const {
    std::string bad;
    for (const auto& [section, keys] : sections_) {
        auto s = schema.find(section);
        if (s == schema.end()) {
            bad += " [" + section + "]";
            continue;
        }
        for (const auto& [key, value] : keys) {
            if (std::find(s->second.begin(), s->second.end(), key) == s->second.end()) {
                bad += " [" + section + "]." + key;
            }
        }
    }
    if (!bad.empty()) throw DataError("unknown config entries:" + bad);
}

}  // namespace floodcast
