#ifndef FLOODCAST_CMAL_HPP
#define FLOODCAST_CMAL_HPP

#include <vector>

#include "floodcast/common.hpp"

namespace floodcast {

/// One asymmetric Laplacian component: density
/// (tau*(1-tau)/scale) * exp(-rho_tau((y-loc)/scale)) with the check
/// function rho_tau(u) = u*(tau - [u<0]).
struct CmalComponent {
    double weight = 1.0;   // >= 0, components sum to 1
    double loc = 0.0;      // meters
    double scale = 1.0;    // > 0, meters
    double tau = 0.5;      // in (0,1)
};

/// Mixture of asymmetric Laplacians over stage at one lead time.
struct CmalDist {
    std::vector<CmalComponent> components;

    void validate() const;  // throws DataError on a violated invariant
};

/// Forecast distribution per lead step 1..L.
struct CmalForecast {
    std::vector<CmalDist> steps;
};

/// Negative log likelihood of an observation, evaluated in log space.
double cmal_nll(const CmalDist& d, double y);

double cmal_pdf(const CmalDist& d, double y);
double cmal_cdf(const CmalDist& d, double y);

/// Inverse CDF by bisection to 1e-6 m. The initial bracket spans
/// min(loc) - 50*max(scale) .. max(loc) + 50*max(scale) and is widened
/// geometrically when a heavy tail (extreme tau) pushes the quantile
/// outside it.
double cmal_quantile(const CmalDist& d, double q);

double cmal_median(const CmalDist& d);
double cmal_mean(const CmalDist& d);
/// Mixture mode. Each component density peaks at its location and the
/// mixture is convex between adjacent locations, so the mode is the
/// highest-density component location.
double cmal_mode(const CmalDist& d);

}  // namespace floodcast

#endif
