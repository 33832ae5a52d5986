#ifndef FLOODCAST_LINEAR_HPP
#define FLOODCAST_LINEAR_HPP

#include <optional>
#include <string>
#include <vector>

#include "floodcast/series.hpp"

namespace floodcast {

/// One training example: the flattened past-stage vector and the stage
/// lead_h hours ahead. Rows never contain missing entries; candidate rows
/// with gaps are dropped when the matrix is built.
struct DesignRow {
    std::vector<double> features;
    double target = 0.0;
};

/// Ridge regression stage forecaster for one (gauge, lead time) pair.
struct LinearStageModel {
    std::string gauge_id;
    int lead_h = 1;
    int lookback_h = 72;
    std::vector<std::string> feature_ids;  // target gauge first, then upstreams
    std::vector<double> weights;
    double intercept = 0.0;
    double l2_lambda = 0.0;
    bool uses_precip = false;
};

/// Builds the design matrix from aligned series. For each forecast issue
/// time t, the features are the stages of every input gauge over
/// [t - lookback_h, t], oldest first, gauge by gauge (the target gauge
/// leads), optionally followed by the basin precipitation over the same
/// window. The target is the stage at t + lead_h. Rows with any missing
/// entry are dropped; zero surviving rows raise DataError.
std::vector<DesignRow> build_design_matrix(const StageSeries& target,
                                           const std::vector<StageSeries>& upstreams,
                                           double lookback_h, double lead_h,
                                           const PrecipSeries* precip = nullptr);

/// Closed-form ridge fit: minimizes sum (y - Xw - b)^2 + lambda * |w|^2 with
/// the intercept unpenalized, via the normal equations with lambda added to
/// the diagonal. Deterministic. Throws NumericError on a singular system.
LinearStageModel train_linear(const std::vector<DesignRow>& rows, double l2_lambda);

/// Dot product plus intercept. Throws on a length mismatch or missing input.
double predict_linear(const LinearStageModel& m, const std::vector<double>& features);

/// Validation-driven lambda selection over a fixed grid (default
/// 1e-4 .. 1e2, decades). Returns the lambda with the lowest validation MSE.
double choose_lambda(const std::vector<DesignRow>& train, const std::vector<DesignRow>& val,
                     const std::vector<double>& grid = {1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0});

double mse_on(const LinearStageModel& m, const std::vector<DesignRow>& rows);

// Model artifact: a JSON document with full-precision weights.
void save_linear_model(const LinearStageModel& m, const std::string& path);
LinearStageModel load_linear_model(const std::string& path);

}  // namespace floodcast

#endif
