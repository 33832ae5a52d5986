#ifndef FLOODCAST_COMMON_HPP
#define FLOODCAST_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>

namespace floodcast {

// Bad or inconsistent input data (files, series, geometry). CLI exit code 2.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure (singular system, divergence, non-finite values). CLI exit code 3.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Missing samples are carried in-band as NaN; files use empty fields or -9999.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }
inline bool is_present(double v) { return !std::isnan(v); }

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Seconds since the Unix epoch, UTC.
using UtcTime = std::int64_t;

// Parses "YYYY-MM-DDTHH:MM:SS" with optional trailing 'Z'. A space instead of
// 'T' is accepted. Throws DataError on malformed input.
UtcTime parse_iso8601_utc(const std::string& text);

// Formats as "YYYY-MM-DDTHH:MM:SSZ".
std::string format_iso8601_utc(UtcTime t);

// Shortest decimal text that round-trips the double exactly.
std::string format_double(double v);

// Worker count for parallel sections: FLOODCAST_THREADS if set, else the
// hardware concurrency, at least 1.
int worker_count();

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks; results
// must not depend on scheduling (callers write to disjoint locations).
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn);

// Deterministic RNG with pinned distributions (std:: distribution algorithms
// are implementation-defined, these are not).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

    std::uint64_t next_u64();

    // Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi);
    // Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n);
    // Standard normal via Box-Muller.
    double normal();

    // Fisher-Yates shuffle.
    template <typename Vec>
    void shuffle(Vec& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace floodcast

#endif
