#include "floodcast/evalkit.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

using nlohmann::json;

namespace floodcast {

void PairedSeries::validate(bool need_persistence) const {
    if (observed.size() < 2) throw DataError("paired series needs at least 2 samples");
    if (computed.size() != observed.size()) throw DataError("observed/computed length mismatch");
    if (need_persistence && persistence.size() != observed.size()) {
        throw DataError("observed/persistence length mismatch");
    }
    auto check = [](const std::vector<double>& v) {
        for (double x : v)
            if (!std::isfinite(x)) throw DataError("paired series contains missing or non-finite values");
    };
    check(observed);
    check(computed);
    if (need_persistence) check(persistence);
}

double nse(const PairedSeries& p) {
    p.validate();
    double mean = std::accumulate(p.observed.begin(), p.observed.end(), 0.0) /
                  static_cast<double>(p.observed.size());
    double sse = 0.0, svar = 0.0;
    for (std::size_t i = 0; i < p.observed.size(); ++i) {
        double e = p.observed[i] - p.computed[i];
        double d = p.observed[i] - mean;
        sse += e * e;
        svar += d * d;
    }
    if (svar <= 0.0) throw NumericError("nse undefined: observations have zero variance");
    return 1.0 - sse / svar;
}

double persistent_nse(const PairedSeries& p) {
    p.validate(true);
    double sse = 0.0, spers = 0.0;
    for (std::size_t i = 0; i < p.observed.size(); ++i) {
        double e = p.observed[i] - p.computed[i];
        double d = p.observed[i] - p.persistence[i];
        sse += e * e;
        spers += d * d;
    }
    if (spers <= 0.0) throw NumericError("persistent nse undefined: persistence error sum is zero");
    return 1.0 - sse / spers;
}

double rmse(const PairedSeries& p) {
    p.validate();
    double sse = 0.0;
    for (std::size_t i = 0; i < p.observed.size(); ++i) {
        double e = p.observed[i] - p.computed[i];
        sse += e * e;
    }
    return std::sqrt(sse / static_cast<double>(p.observed.size()));
}

ExtentScores extent_scores(const Raster& pred, const Raster& truth) {
    if (pred.rows != truth.rows || pred.cols != truth.cols) {
        throw DataError("extent_scores: raster shapes differ");
    }
    ExtentScores s;
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        double pv = pred.values[i], tv = truth.values[i];
        if (is_missing(pv) || is_missing(tv)) continue;
        bool p = pv == 1.0, t = tv == 1.0;
        if (p && t) ++s.tp;
        else if (p && !t) ++s.fp;
        else if (!p && t) ++s.fn;
        else ++s.tn;
    }
    if (s.tp + s.fp > 0) s.precision = static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fp);
    else s.degenerate = true;
    if (s.tp + s.fn > 0) s.recall = static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fn);
    else s.degenerate = true;
    if (s.precision + s.recall > 0.0) s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
    return s;
}

namespace {

int utc_year(UtcTime t, int year_start_month) {
    std::string iso = format_iso8601_utc(t);
    int year = std::stoi(iso.substr(0, 4));
    int month = std::stoi(iso.substr(5, 2));
    if (month < year_start_month) --year;
    return year;
}

}  // namespace

std::vector<Fold> split_folds(const std::vector<FoldItem>& items, const FoldSpec& spec) {
    std::vector<Fold> folds;
    if (items.empty()) return folds;

    if (spec.scheme == FoldScheme::kLeaveOneYear) {
        std::map<int, std::vector<std::size_t>> by_year;
        for (const auto& it : items) by_year[utc_year(it.timestamp, spec.year_start_month)].push_back(it.index);
        for (const auto& [year, val] : by_year) {
            Fold f;
            f.label = std::to_string(year);
            f.validation = val;
            for (const auto& it : items) {
                if (utc_year(it.timestamp, spec.year_start_month) != year) f.train.push_back(it.index);
            }
            if (!f.train.empty() && !f.validation.empty()) folds.push_back(std::move(f));
        }
        return folds;
    }

    // leave-extreme-out
    if (spec.margin_m < 0.0) throw DataError("leave-extreme-out margin must be >= 0");
    std::size_t best = 0;
    for (std::size_t i = 1; i < items.size(); ++i) {
        if (items[i].stage_m > items[best].stage_m ||
            (items[i].stage_m == items[best].stage_m && items[i].timestamp < items[best].timestamp)) {
            best = i;
        }
    }
    Fold f;
    f.label = "extreme";
    f.validation.push_back(items[best].index);
    double cutoff = items[best].stage_m - spec.margin_m;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i == best) continue;
        if (items[i].stage_m <= cutoff) f.train.push_back(items[i].index);
    }
    if (!f.train.empty() && !f.validation.empty()) folds.push_back(std::move(f));
    return folds;
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw DataError("wilcoxon: paired samples differ in length");
    std::vector<double> diffs;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        if (!std::isfinite(d)) throw DataError("wilcoxon: non-finite difference");
        if (d != 0.0) diffs.push_back(d);
    }
    std::size_t n = diffs.size();
    if (n < 6) throw DataError("wilcoxon: insufficient pairs (need >= 6 non-zero differences)");

    // Average ranks of |d|, ties share the mean rank.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return std::fabs(diffs[x]) < std::fabs(diffs[y]); });
    std::vector<double> rank(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && std::fabs(diffs[order[j + 1]]) == std::fabs(diffs[order[i]])) ++j;
        double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // ranks are 1-based
        for (std::size_t t = i; t <= j; ++t) rank[order[t]] = avg;
        i = j + 1;
    }

    double w_plus = 0.0, rank_total = 0.0, rank_sq = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        rank_total += rank[t];
        rank_sq += rank[t] * rank[t];
        if (diffs[t] > 0.0) w_plus += rank[t];
    }
    double w_minus = rank_total - w_plus;

    WilcoxonResult res;
    res.n_used = n;
    res.statistic = std::min(w_plus, w_minus);

    if (n <= 20) {
        // Exact: enumerate all 2^n sign assignments of the fixed ranks.
        // P(min(W+, W-) <= observed) by symmetry of W+ about rank_total/2.
        std::uint64_t total = 1ULL << n;
        std::uint64_t hits = 0;
        double w_obs = res.statistic + 1e-9;  // tolerate float dust in rank sums
        for (std::uint64_t m = 0; m < total; ++m) {
            double w = 0.0;
            std::uint64_t bits = m;
            while (bits) {
                w += rank[static_cast<std::size_t>(std::countr_zero(bits))];
                bits &= bits - 1;
            }
            if (w <= w_obs || rank_total - w <= w_obs) ++hits;
        }
        res.p_two_sided = static_cast<double>(hits) / static_cast<double>(total);
        res.exact = true;
    } else {
        double mean = rank_total / 2.0;
        double sd = std::sqrt(rank_sq / 4.0);  // variance of W+ under sign flips, ties included
        double z = (res.statistic - mean) / sd;
        res.p_two_sided = std::min(1.0, 2.0 * 0.5 * std::erfc(-z / std::sqrt(2.0)));
        res.exact = false;
    }
    return res;
}

void write_report_csv(const std::vector<ReportRow>& rows, const std::string& path) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw DataError("cannot write '" + tmp + "'");
        f << "gauge_id,model,scheme,fold,metric,value\n";
        for (const auto& r : rows) {
            f << r.gauge_id << "," << r.model << "," << r.scheme << "," << r.fold << ","
              << r.metric << "," << format_double(r.value) << "\n";
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw DataError("cannot rename '" + tmp + "' to '" + path + "'");
    }
}

void write_report_summary(const std::vector<ReportRow>& rows, const std::string& path) {
    // gauge mean across folds, then median and range across gauges
    std::map<std::string, std::map<std::string, std::vector<double>>> per_key_gauge;
    for (const auto& r : rows) {
        per_key_gauge[r.model + "/" + r.scheme + "/" + r.metric][r.gauge_id].push_back(r.value);
    }
    json summary = json::object();
    for (const auto& [key, gauges] : per_key_gauge) {
        std::vector<double> means;
        json per_gauge = json::object();
        for (const auto& [gauge, vals] : gauges) {
            double m = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
            per_gauge[gauge] = m;
            means.push_back(m);
        }
        std::sort(means.begin(), means.end());
        double median = means.size() % 2 ? means[means.size() / 2]
                                         : 0.5 * (means[means.size() / 2 - 1] + means[means.size() / 2]);
        summary[key] = {
            {"per_gauge_mean", per_gauge},
            {"median", median},
            {"min", means.front()},
            {"max", means.back()},
            {"n_gauges", means.size()},
        };
    }
    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw DataError("cannot write '" + tmp + "'");
        f << summary.dump(2) << "\n";
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw DataError("cannot rename '" + tmp + "' to '" + path + "'");
    }
}

}  // namespace floodcast
