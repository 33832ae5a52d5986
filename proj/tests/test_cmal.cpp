#include <doctest.h>

#include <cmath>

#include "floodcast/cmal.hpp"
#include "floodcast/common.hpp"

using namespace floodcast;

namespace {

CmalDist random_mixture(Rng& rng, int max_components = 4) {
    CmalDist d;
    int n = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(max_components)));
    double wsum = 0.0;
    for (int i = 0; i < n; ++i) {
        CmalComponent c;
        c.weight = rng.uniform(0.05, 1.0);
        c.loc = rng.uniform(-5.0, 5.0);
        c.scale = rng.uniform(0.01, 2.0);
        c.tau = rng.uniform(0.02, 0.98);
        wsum += c.weight;
        d.components.push_back(c);
    }
    for (auto& c : d.components) c.weight /= wsum;
    return d;
}

}  // namespace

TEST_CASE("single symmetric component at its location has NLL log 4") {
    CmalDist d{{{1.0, 2.5, 1.0, 0.5}}};
    // density = tau*(1-tau)/b * exp(0) = 0.25
    CHECK(cmal_nll(d, 2.5) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("duplicating a component with halved weights leaves the NLL unchanged") {
    CmalDist one{{{1.0, 1.0, 0.7, 0.3}}};
    CmalDist two{{{0.5, 1.0, 0.7, 0.3}, {0.5, 1.0, 0.7, 0.3}}};
    for (double y : {-3.0, 0.0, 1.0, 2.5}) {
        CHECK(cmal_nll(one, y) == doctest::Approx(cmal_nll(two, y)).epsilon(1e-12));
    }
}

TEST_CASE("NLL grows without bound away from the locations") {
    CmalDist d{{{1.0, 0.0, 1.0, 0.5}}};
    double prev = cmal_nll(d, 0.0);
    for (double y : {5.0, 50.0, 500.0}) {
        double nll = cmal_nll(d, y);
        CHECK(nll > prev);
        prev = nll;
    }
    CHECK(prev > 100.0);
}

TEST_CASE("quantile at tau returns the location") {
    for (double tau : {0.1, 0.5, 0.9}) {
        CmalDist d{{{1.0, 3.0, 0.5, tau}}};
        CHECK(cmal_quantile(d, tau) == doctest::Approx(3.0).epsilon(1e-6));
    }
}

TEST_CASE("median of a symmetric single component is its location") {
    CmalDist d{{{1.0, -1.25, 2.0, 0.5}}};
    CHECK(cmal_median(d) == doctest::Approx(-1.25).epsilon(1e-6));
}

TEST_CASE("quantile inverts the CDF on random mixtures") {
    Rng rng(2024);
    for (int trial = 0; trial < 300; ++trial) {
        CmalDist d = random_mixture(rng);
        double q = rng.uniform(0.005, 0.995);
        double x = cmal_quantile(d, q);
        CHECK(std::fabs(cmal_cdf(d, x) - q) <= 1e-6);
    }
}

TEST_CASE("quantiles are monotone in q") {
    Rng rng(7);
    CmalDist d = random_mixture(rng);
    double prev = -kInf;
    for (double q : {0.05, 0.25, 0.5, 0.75, 0.95}) {
        double x = cmal_quantile(d, q);
        CHECK(x >= prev);
        prev = x;
    }
}

TEST_CASE("mixture mean matches numerical integration") {
    CmalDist d{{{0.4, -1.0, 0.5, 0.3}, {0.6, 2.0, 1.0, 0.7}}};
    // trapezoid integration of y * pdf as the oracle
    double lo = -60.0, hi = 60.0;
    int n = 400000;
    double acc = 0.0, h = (hi - lo) / n;
    for (int i = 0; i <= n; ++i) {
        double y = lo + i * h;
        double w = (i == 0 || i == n) ? 0.5 : 1.0;
        acc += w * y * cmal_pdf(d, y);
    }
    acc *= h;
    CHECK(cmal_mean(d) == doctest::Approx(acc).epsilon(1e-4));
}

TEST_CASE("mode is the highest-density component location") {
    CmalDist d{{{0.2, -2.0, 1.0, 0.5}, {0.8, 1.0, 0.2, 0.5}}};
    CHECK(cmal_mode(d) == 1.0);
}

TEST_CASE("validate rejects broken distributions") {
    CmalDist bad{{{1.0, 0.0, -1.0, 0.5}}};
    CHECK_THROWS_AS(bad.validate(), DataError);
    bad = CmalDist{{{1.0, 0.0, 1.0, 1.5}}};
    CHECK_THROWS_AS(bad.validate(), DataError);
    bad = CmalDist{{{0.7, 0.0, 1.0, 0.5}}};  // weights must sum to 1
    CHECK_THROWS_AS(bad.validate(), DataError);
    CmalDist ok{{{1.0, 0.0, 1.0, 0.5}}};
    CHECK_NOTHROW(ok.validate());
}
