#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "floodcast/raster.hpp"

using namespace floodcast;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    fs::path p = fs::temp_directory_path() / "floodcast_raster_test";
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("asc round trip preserves values and nodata") {
    Raster g(3, 4, 0.0, 16.0);
    g.origin_x = 100.5;
    g.origin_y = -20.25;
    double v = 0.0;
    for (auto& x : g.values) x = (v += 0.73);
    g.at(1, 2) = kMissing;

    Raster back = parse_asc(to_asc(g));
    CHECK(back.same_geometry(g));
    for (std::size_t i = 0; i < g.values.size(); ++i) {
        if (is_missing(g.values[i])) CHECK(is_missing(back.values[i]));
        else CHECK(back.values[i] == g.values[i]);
    }
}

TEST_CASE("asc parser accepts header case variants and rejects junk") {
    Raster g = parse_asc("NCOLS 2\nNROWS 1\nXLLCORNER 0\nYLLCORNER 0\nCELLSIZE 1\nNODATA_VALUE -9999\n1 -9999\n");
    CHECK(g.cols == 2);
    CHECK(g.rows == 1);
    CHECK(g.at(0, 0) == 1.0);
    CHECK(g.is_nodata(0, 1));

    CHECK_THROWS_AS(parse_asc("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\n1 2 3 4"), DataError);  // no cellsize
    CHECK_THROWS_AS(parse_asc("ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\n1"), DataError);
    CHECK_THROWS_AS(parse_asc("ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2 3"), DataError);
}

TEST_CASE("asc file io") {
    fs::path p = temp_dir() / "grid.asc";
    Raster g(2, 2, 5.25, 16.0);
    write_asc(g, p.string());
    Raster back = read_asc(p.string());
    CHECK(back.at(1, 1) == 5.25);
    CHECK_THROWS_AS(read_asc((temp_dir() / "missing.asc").string()), DataError);
}

TEST_CASE("majority downsample") {
    // 4x4 binary raster, factor 2: blocks vote independently
    Raster g(4, 4, 0.0, 16.0);
    g.at(0, 0) = 1.0;
    g.at(0, 1) = 1.0;  // top-left block: 2 of 4 wet -> tie -> wet
    g.at(2, 2) = 1.0;  // bottom-right block: 1 of 4 -> dry
    g.at(0, 2) = kMissing;
    Raster d = majority_downsample(g, 2);
    CHECK(d.rows == 2);
    CHECK(d.cols == 2);
    CHECK(d.at(0, 0) == 1.0);
    CHECK(d.at(0, 1) == 0.0);
    CHECK(d.at(1, 0) == 0.0);
    CHECK(d.at(1, 1) == 0.0);

    Raster all_nodata(2, 2, kMissing, 16.0);
    Raster dn = majority_downsample(all_nodata, 2);
    CHECK(is_missing(dn.at(0, 0)));
}

TEST_CASE("pgm render of an all-zero grid is all black") {
    fs::path p = temp_dir() / "zero.pgm";
    Raster g(4, 5, 0.0, 16.0);
    write_pgm(g, p.string());
    std::ifstream f(p, std::ios::binary);
    std::string header;
    std::getline(f, header);
    CHECK(header == "P5");
    std::string dims, maxval;
    std::getline(f, dims);
    std::getline(f, maxval);
    CHECK(dims == "5 4");
    char byte;
    int nonzero = 0, count = 0;
    while (f.get(byte)) {
        ++count;
        if (byte != 0) ++nonzero;
    }
    CHECK(count == 20);
    CHECK(nonzero == 0);
}
