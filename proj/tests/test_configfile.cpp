#include <doctest.h>

#include "floodcast/configfile.hpp"

using namespace floodcast;

TEST_CASE("config parsing: sections, comments, types") {
    ConfigFile cfg = ConfigFile::parse_text(
        "# pipeline settings\n"
        "[qc]\n"
        "max_gap_h = 6\n"
        "decimal_k = 6.5   # band width\n"
        "\n"
        "[lstm]\n"
        "hidden_size = 128\n"
        "use_gpu = false\n"
        "[evaluate]\n"
        "models = threshold, manifold\n");
    CHECK(cfg.get_double("qc", "max_gap_h", 0.0) == 6.0);
    CHECK(cfg.get_double("qc", "decimal_k", 0.0) == 6.5);
    CHECK(cfg.get_int("lstm", "hidden_size", 0) == 128);
    CHECK(cfg.get_bool("lstm", "use_gpu", true) == false);
    CHECK(cfg.get_list("evaluate", "models") == std::vector<std::string>{"threshold", "manifold"});
    CHECK(cfg.get_string("qc", "nope", "fallback") == "fallback");
    CHECK(cfg.get_int("absent", "key", 42) == 42);
}

TEST_CASE("config parsing rejects malformed lines") {
    CHECK_THROWS_AS(ConfigFile::parse_text("[unterminated\n"), DataError);
    CHECK_THROWS_AS(ConfigFile::parse_text("[s]\nk v\n"), DataError);
    CHECK_THROWS_AS(ConfigFile::parse_text("[s]\n= 3\n"), DataError);
}

TEST_CASE("typed getters validate values") {
    ConfigFile cfg = ConfigFile::parse_text("[a]\nx = fast\n");
    CHECK_THROWS_AS(cfg.get_double("a", "x", 0.0), DataError);
    CHECK_THROWS_AS(cfg.get_int("a", "x", 0), DataError);
    CHECK_THROWS_AS(cfg.get_bool("a", "x", false), DataError);
}

TEST_CASE("schema validation lists unknown entries") {
    ConfigFile cfg = ConfigFile::parse_text("[qc]\nmax_gap_h = 6\ntypo_key = 1\n[mystery]\nx = 2\n");
    std::map<std::string, std::vector<std::string>> schema = {{"qc", {"max_gap_h"}}};
    try {
        cfg.validate_against(schema);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        std::string msg = e.what();
        CHECK(msg.find("typo_key") != std::string::npos);
        CHECK(msg.find("mystery") != std::string::npos);
    }
    ConfigFile ok = ConfigFile::parse_text("[qc]\nmax_gap_h = 6\n");
    CHECK_NOTHROW(ok.validate_against(schema));
}
