#ifndef FLOODCAST_EVALKIT_HPP
#define FLOODCAST_EVALKIT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "floodcast/common.hpp"
#include "floodcast/raster.hpp"

namespace floodcast {

/// Aligned observed / computed / persistence triples. The persistence value
/// is the last observed stage at the forecast issue time.
struct PairedSeries {
    std::vector<double> observed;
    std::vector<double> computed;
    std::vector<double> persistence;

    void validate(bool need_persistence = false) const;
};

/// Nash-Sutcliffe efficiency: 1 - SSE(computed) / SSE(mean observation).
/// Throws NumericError when the observations have zero variance.
double nse(const PairedSeries& p);

/// Persistent Nash-Sutcliffe efficiency: 1 - SSE(computed) / SSE(persistence).
/// Throws NumericError when the persistence error sum is zero.
double persistent_nse(const PairedSeries& p);

double rmse(const PairedSeries& p);

/// Confusion-derived scores over valid pixels; pixels nodata in either raster
/// are excluded. `degenerate` flags a zero-denominator precision or recall,
/// which is reported as 0 so batch aggregation stays finite.
struct ExtentScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    bool degenerate = false;
};

ExtentScores extent_scores(const Raster& pred, const Raster& truth);

enum class FoldScheme { kLeaveOneYear, kLeaveExtremeOut };

struct FoldSpec {
    FoldScheme scheme = FoldScheme::kLeaveOneYear;
    double margin_m = 0.30;     // leave-extreme-out exclusion margin
    int year_start_month = 1;   // 1 = calendar years; other values shift the year boundary
};

/// An item that fold splitting can partition: anything with a timestamp and,
/// for the extreme-out scheme, a stage.
struct FoldItem {
    UtcTime timestamp = 0;
    double stage_m = 0.0;
    std::size_t index = 0;  // caller's index
};

struct Fold {
    std::string label;
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
};

/// Partitions items into cross-validation folds.
///   - leave-one-year: one fold per year present; validation = that year.
///   - leave-extreme-out: a single fold; validation = the highest-stage item,
///     train = items with stage <= max - margin. Items within the margin are
///     excluded from both sides.
/// Folds with an empty train or validation side are dropped.
std::vector<Fold> split_folds(const std::vector<FoldItem>& items, const FoldSpec& spec);

struct WilcoxonResult {
    double statistic = 0.0;   // min of the signed rank sums
    double p_two_sided = 1.0;
    std::size_t n_used = 0;   // pairs remaining after zero differences are dropped
    bool exact = true;
};

/// Paired Wilcoxon signed-rank test. Zero differences are discarded and tied
/// absolute differences share averaged ranks. The null distribution is
/// enumerated exactly for n <= 20 and approximated by a normal with the
/// rank-sum variance (which absorbs ties) above that. Requires at least 6
/// non-zero differences.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b);

/// One evaluation result row; serialized as CSV
/// (gauge_id,model,scheme,fold,metric,value).
struct ReportRow {
    std::string gauge_id;
    std::string model;
    std::string scheme;
    std::string fold;
    std::string metric;
    double value = 0.0;
};

void write_report_csv(const std::vector<ReportRow>& rows, const std::string& path);

/// JSON summary with per-gauge means and the across-gauge median/range per
/// (model, scheme, metric). Gauge aggregation is the mean across folds.
void write_report_summary(const std::vector<ReportRow>& rows, const std::string& path);

}  // namespace floodcast

#endif
