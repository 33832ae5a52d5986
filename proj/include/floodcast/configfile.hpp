#ifndef FLOODCAST_CONFIGFILE_HPP
#define FLOODCAST_CONFIGFILE_HPP

#include <map>
#include <string>
#include <vector>

#include "floodcast/common.hpp"

namespace floodcast {

/// INI-style configuration: [section] headers, key = value lines, comments
/// with '#'. Typed getters validate on access; unknown keys are rejected
/// against a schema before a subcommand starts work.
class ConfigFile {
public:
    ConfigFile() = default;
    static ConfigFile parse_file(const std::string& path);
    static ConfigFile parse_text(const std::string& text);

    bool has(const std::string& section, const std::string& key) const;
    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    int get_int(const std::string& section, const std::string& key, int fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    std::vector<std::string> get_list(const std::string& section, const std::string& key) const;

    /// Throws DataError listing every key not present in the schema
    /// (section -> allowed keys). Sections absent from the schema are
    /// rejected entirely.
    void validate_against(const std::map<std::string, std::vector<std::string>>& schema) const;

    const std::map<std::string, std::map<std::string, std::string>>& sections() const { return sections_; }

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace floodcast

#endif
