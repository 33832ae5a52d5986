#include "floodcast/linear.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

using nlohmann::json;

namespace floodcast {

std::vector<DesignRow> build_design_matrix(const StageSeries& target,
                                           const std::vector<StageSeries>& upstreams,
                                           double lookback_h, double lead_h,
                                           const PrecipSeries* precip) {
    double step_h = target.step_hours();
    if (step_h <= 0.0) throw DataError("design matrix: bad step");
    for (const auto& u : upstreams) {
        if (u.step_s != target.step_s) throw DataError("design matrix: series steps differ");
    }
    if (precip && precip->step_s != target.step_s) throw DataError("design matrix: precip step differs");

    auto to_steps = [&](double hours) {
        double s = hours / step_h;
        auto n = static_cast<std::int64_t>(std::llround(s));
        if (n < 0 || std::fabs(s - static_cast<double>(n)) > 1e-9) {
            throw DataError("design matrix: horizon is not a whole number of steps");
        }
        return n;
    };
    std::int64_t back = to_steps(lookback_h);   // window spans back..0 steps before issue, inclusive
    std::int64_t lead = to_steps(lead_h);
    if (lead < 1) throw DataError("design matrix: lead must be at least one step");

    std::vector<const StageSeries*> sources;
    sources.push_back(&target);
    for (const auto& u : upstreams) sources.push_back(&u);

    std::vector<DesignRow> rows;
    std::int64_t n = static_cast<std::int64_t>(target.values.size());
    for (std::int64_t t = back; t + lead < n; ++t) {
        UtcTime issue = target.time_at(static_cast<std::size_t>(t));
        DesignRow row;
        row.features.reserve(static_cast<std::size_t>(sources.size()) * (back + 1));
        bool ok = true;
        for (const StageSeries* s : sources) {
            for (std::int64_t k = back; k >= 0 && ok; --k) {
                auto idx = s->index_of(issue - k * s->step_s);
                double v = idx ? s->values[*idx] : kMissing;
                if (is_missing(v)) ok = false;
                else row.features.push_back(v);
            }
            if (!ok) break;
        }
        if (ok && precip) {
            for (std::int64_t k = back; k >= 0 && ok; --k) {
                std::int64_t d = issue - k * precip->step_s - precip->t0;
                double v = kMissing;
                if (d >= 0 && d % precip->step_s == 0 &&
                    d / precip->step_s < static_cast<std::int64_t>(precip->values.size())) {
                    v = precip->values[static_cast<std::size_t>(d / precip->step_s)];
                }
                if (is_missing(v)) ok = false;
                else row.features.push_back(v);
            }
        }
        if (!ok) continue;
        double y = target.values[static_cast<std::size_t>(t + lead)];
        if (is_missing(y)) continue;
        row.target = y;
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError("insufficient data: no complete design rows");
    return rows;
}

namespace {

// Solves A x = b for symmetric positive definite A (in place Cholesky).
// Throws NumericError if A is not positive definite.
std::vector<double> solve_spd(std::vector<double> a, std::vector<double> b, std::size_t n) {
    double scale = 0.0;
    for (std::size_t j = 0; j < n; ++j) scale = std::max(scale, a[j * n + j]);
    if (scale <= 0.0) throw NumericError("singular normal equations; increase lambda");
    for (std::size_t j = 0; j < n; ++j) {
        double d = a[j * n + j];
        for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
        if (!(d > scale * 1e-13) || !std::isfinite(d)) {
            throw NumericError("singular normal equations; increase lambda");
        }
        double dj = std::sqrt(d);
        a[j * n + j] = dj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
            a[i * n + j] = s / dj;
        }
    }
    // forward then backward substitution
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= a[i * n + k] * b[k];
        b[i] = s / a[i * n + i];
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double s = b[ii];
        for (std::size_t k = ii + 1; k < n; ++k) s -= a[k * n + ii] * b[k];
        b[ii] = s / a[ii * n + ii];
    }
    return b;
}

}  // namespace

LinearStageModel train_linear(const std::vector<DesignRow>& rows, double l2_lambda) {
    if (rows.empty()) throw DataError("train_linear: no rows");
    if (l2_lambda < 0.0) throw DataError("train_linear: lambda must be >= 0");
    std::size_t p = rows.front().features.size();
    for (const auto& r : rows) {
        if (r.features.size() != p) throw DataError("train_linear: ragged design matrix");
    }
    std::size_t n = p + 1;  // intercept is the last coordinate

    // Gram matrix of [X 1] plus lambda on the feature diagonal.
    std::vector<double> gram(n * n, 0.0);
    std::vector<double> rhs(n, 0.0);
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < p; ++i) {
            double xi = r.features[i];
            if (!std::isfinite(xi)) throw DataError("train_linear: missing feature value");
            for (std::size_t j = 0; j <= i; ++j) gram[i * n + j] += xi * r.features[j];
            gram[p * n + i] += xi;  // column of ones
            rhs[i] += xi * r.target;
        }
        gram[p * n + p] += 1.0;
        rhs[p] += r.target;
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) gram[i * n + j] = gram[j * n + i];
    }
    for (std::size_t i = 0; i < p; ++i) gram[i * n + i] += l2_lambda;

    std::vector<double> sol = solve_spd(std::move(gram), std::move(rhs), n);

    LinearStageModel m;
    m.l2_lambda = l2_lambda;
    m.weights.assign(sol.begin(), sol.begin() + static_cast<std::ptrdiff_t>(p));
    m.intercept = sol[p];
    return m;
}

double predict_linear(const LinearStageModel& m, const std::vector<double>& features) {
    if (features.size() != m.weights.size()) {
        throw DataError("predict_linear: feature length " + std::to_string(features.size()) +
                        " does not match model (" + std::to_string(m.weights.size()) + ")");
    }
    double y = m.intercept;
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (!std::isfinite(features[i])) throw DataError("predict_linear: missing feature value");
        y += m.weights[i] * features[i];
    }
    return y;
}

double mse_on(const LinearStageModel& m, const std::vector<DesignRow>& rows) {
    if (rows.empty()) throw DataError("mse_on: no rows");
    double s = 0.0;
    for (const auto& r : rows) {
        double e = r.target - predict_linear(m, r.features);
        s += e * e;
    }
    return s / static_cast<double>(rows.size());
}

double choose_lambda(const std::vector<DesignRow>& train, const std::vector<DesignRow>& val,
                     const std::vector<double>& grid) {
    if (grid.empty()) throw DataError("choose_lambda: empty grid");
    double best_lambda = grid.front();
    double best_mse = kInf;
    for (double lam : grid) {
        double m;
        try {
            m = mse_on(train_linear(train, lam), val);
        } catch (const NumericError&) {
            continue;
        }
        if (m < best_mse) {
            best_mse = m;
            best_lambda = lam;
        }
    }
    return best_lambda;
}

void save_linear_model(const LinearStageModel& m, const std::string& path) {
    json doc = {
        {"schema_version", 1},
        {"gauge_id", m.gauge_id},
        {"lead_h", m.lead_h},
        {"lookback_h", m.lookback_h},
        {"feature_ids", m.feature_ids},
        {"weights", m.weights},
        {"intercept", m.intercept},
        {"l2_lambda", m.l2_lambda},
        {"uses_precip", m.uses_precip},
    };
    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw DataError("cannot write '" + tmp + "'");
        f << doc.dump(2) << "\n";
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw DataError("cannot rename '" + tmp + "' to '" + path + "'");
    }
}

LinearStageModel load_linear_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open '" + path + "'");
    json doc;
    try {
        f >> doc;
    } catch (const json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
    LinearStageModel m;
    m.gauge_id = doc.at("gauge_id").get<std::string>();
    m.lead_h = doc.at("lead_h").get<int>();
    m.lookback_h = doc.at("lookback_h").get<int>();
    m.feature_ids = doc.at("feature_ids").get<std::vector<std::string>>();
    m.weights = doc.at("weights").get<std::vector<double>>();
    m.intercept = doc.at("intercept").get<double>();
    m.l2_lambda = doc.at("l2_lambda").get<double>();
    if (doc.contains("uses_precip")) m.uses_precip = doc["uses_precip"].get<bool>();
    return m;
}

}  // namespace floodcast
