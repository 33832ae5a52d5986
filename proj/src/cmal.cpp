#include "floodcast/cmal.hpp"

#include <algorithm>
#include <cmath>

namespace floodcast {

void CmalDist::validate() const {
    if (components.empty()) throw DataError("cmal: no components");
    double wsum = 0.0;
    for (const auto& c : components) {
        if (!(c.weight >= 0.0)) throw DataError("cmal: negative weight");
        if (!(c.scale > 0.0)) throw DataError("cmal: scale must be > 0");
        if (!(c.tau > 0.0 && c.tau < 1.0)) throw DataError("cmal: tau must lie in (0,1)");
        if (!std::isfinite(c.loc)) throw DataError("cmal: non-finite location");
        wsum += c.weight;
    }
    if (std::fabs(wsum - 1.0) > 1e-9) throw DataError("cmal: weights must sum to 1");
}

namespace {

inline double check_loss(double u, double tau) { return u * (tau - (u < 0.0 ? 1.0 : 0.0)); }

inline double log_ald_pdf(const CmalComponent& c, double y) {
    double u = (y - c.loc) / c.scale;
    return std::log(c.tau) + std::log1p(-c.tau) - std::log(c.scale) - check_loss(u, c.tau);
}

inline double ald_cdf(const CmalComponent& c, double y) {
    double u = (y - c.loc) / c.scale;
    if (u < 0.0) return c.tau * std::exp((1.0 - c.tau) * u);
    return 1.0 - (1.0 - c.tau) * std::exp(-c.tau * u);
}

}  // namespace

double cmal_nll(const CmalDist& d, double y) {
    // -log sum_i w_i f_i(y), via log-sum-exp
    double best = -kInf;
    std::vector<double> terms;
    terms.reserve(d.components.size());
    for (const auto& c : d.components) {
        if (c.weight <= 0.0) {
            terms.push_back(-kInf);
            continue;
        }
        double t = std::log(c.weight) + log_ald_pdf(c, y);
        terms.push_back(t);
        best = std::max(best, t);
    }
    if (best == -kInf) return kInf;
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - best);
    return -(best + std::log(acc));
}

double cmal_pdf(const CmalDist& d, double y) { return std::exp(-cmal_nll(d, y)); }

double cmal_cdf(const CmalDist& d, double y) {
    double acc = 0.0;
    for (const auto& c : d.components) acc += c.weight * ald_cdf(c, y);
    return acc;
}

double cmal_quantile(const CmalDist& d, double q) {
    if (!(q > 0.0 && q < 1.0)) throw DataError("cmal_quantile: q must lie in (0,1)");
    if (d.components.empty()) throw DataError("cmal_quantile: no components");
    double lo_loc = kInf, hi_loc = -kInf, max_scale = 0.0;
    for (const auto& c : d.components) {
        lo_loc = std::min(lo_loc, c.loc);
        hi_loc = std::max(hi_loc, c.loc);
        max_scale = std::max(max_scale, c.scale);
    }
    double span = 50.0 * max_scale;
    double lo = lo_loc - span, hi = hi_loc + span;
    // Extreme tau makes one tail heavier than the default bracket; widen.
    for (int i = 0; i < 64 && cmal_cdf(d, lo) > q; ++i) lo -= span, span *= 2.0;
    span = 50.0 * max_scale;
    for (int i = 0; i < 64 && cmal_cdf(d, hi) < q; ++i) hi += span, span *= 2.0;

    // Stop on a tight bracket AND a tight CDF residual; a sharp density can
    // need the second condition after the first is met.
    double mid = 0.5 * (lo + hi);
    for (int iter = 0; iter < 200; ++iter) {
        double f = cmal_cdf(d, mid);
        if (hi - lo <= 1e-6 && std::fabs(f - q) <= 1e-6) break;
        if (f < q) lo = mid;
        else hi = mid;
        mid = 0.5 * (lo + hi);
    }
    return mid;
}

double cmal_median(const CmalDist& d) { return cmal_quantile(d, 0.5); }

double cmal_mean(const CmalDist& d) {
    // ALD mean = loc + scale*(1-2*tau)/(tau*(1-tau))
    double m = 0.0;
    for (const auto& c : d.components) {
        m += c.weight * (c.loc + c.scale * (1.0 - 2.0 * c.tau) / (c.tau * (1.0 - c.tau)));
    }
    return m;
}

double cmal_mode(const CmalDist& d) {
    double best_y = d.components.front().loc;
    double best_p = -kInf;
    for (const auto& c : d.components) {
        double p = cmal_pdf(d, c.loc);
        if (p > best_p) {
            best_p = p;
            best_y = c.loc;
        }
    }
    return best_y;
}

}  // namespace floodcast
