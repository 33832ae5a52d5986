#ifndef FLOODCAST_ALERTING_HPP
#define FLOODCAST_ALERTING_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "floodcast/hydrodata.hpp"
#include "floodcast/manifold.hpp"
#include "floodcast/thresholding.hpp"

namespace floodcast {

enum class Severity { kWarning, kDanger };
enum class AlertSource { kInternal, kExternal };

const char* severity_name(Severity s);
const char* source_name(AlertSource s);

struct Alert {
    std::string gauge_id;
    UtcTime issued_at = 0;
    UtcTime valid_at = 0;  // time of the forecast maximum
    double max_forecast_stage_m = 0.0;
    double current_stage_m = 0.0;
    double stage_change_m = 0.0;
    Severity severity = Severity::kWarning;
    AlertSource source = AlertSource::kInternal;
    std::optional<std::string> extent_path;
    std::optional<std::string> depth_path;
};

/// Stage forecast from an outside provider, as (lead hours, stage) points.
struct ExternalForecast {
    std::string gauge_id;
    UtcTime issued_at = 0;
    std::vector<std::pair<int, double>> points;  // strictly increasing leads

    void validate() const;
};

std::vector<ExternalForecast> read_external_forecasts(const std::string& path);
void write_external_forecasts(const std::vector<ExternalForecast>& fcs, const std::string& path);

/// Compares the forecast maximum against the gauge thresholds. Only leads up
/// to the gauge's max lead time count. Threshold comparisons are closed
/// (stage at the threshold triggers); set strict_exceedance for open ones.
/// Returns the highest severity crossed, or nothing below the warning stage.
/// valid_at is the earliest lead attaining the maximum.
std::optional<Alert> evaluate_trigger(const std::vector<double>& stage_per_lead_h,
                                      const GaugeConfig& cfg, double current_stage_m,
                                      UtcTime issue_time, AlertSource source = AlertSource::kInternal,
                                      bool strict_exceedance = false);

std::optional<Alert> evaluate_trigger_external(const ExternalForecast& fc, const GaugeConfig& cfg,
                                               double current_stage_m, bool strict_exceedance = false);

/// The inundation model configured for a gauge, if any.
struct InundationModelRef {
    const PixelThresholdMap* threshold = nullptr;  // extent only
    const HeightStack* stack = nullptr;            // extent + depth, needs dem
    const Raster* dem = nullptr;
};

/// Runs the configured model at the alert's maximal stage and attaches the
/// written grid paths. A gauge without a model returns the alert unchanged.
Alert attach_inundation(Alert a, const InundationModelRef& model, const std::string& out_dir);

struct AlertSinkConfig {
    std::string out_dir;
    std::string webhook_url;  // empty disables the webhook
    int webhook_attempts = 3;
    int backoff_initial_ms = 100;  // doubles per retry
    double suppression_window_h = 6.0;
    double suppression_rise_m = 0.1;
};

struct DeliveryRecord {
    std::string file_path;      // empty when suppressed
    bool suppressed = false;
    bool webhook_attempted = false;
    bool webhook_delivered = false;
    int webhook_tries = 0;
};

/// File-first alert emission with optional webhook POST (at-least-once,
/// webhook failure never loses the file). Emission is idempotent per
/// (gauge_id, valid_at, severity), and repeated alerts for a (gauge,
/// severity) inside the suppression window are dropped unless the forecast
/// maximum rose by more than suppression_rise_m. Existing alert documents in
/// out_dir seed the dedup state, so suppression survives process restarts.
class AlertEmitter {
public:
    explicit AlertEmitter(AlertSinkConfig cfg);

    DeliveryRecord emit(const Alert& a);

    static std::string alert_filename(const Alert& a);

private:
    AlertSinkConfig cfg_;
    struct Seen {
        UtcTime issued_at = 0;
        double max_stage = 0.0;
    };
    std::map<std::string, Seen> last_by_gauge_severity_;
};

/// Serializes an alert to its JSON document (sorted keys, stable layout).
std::string alert_to_json(const Alert& a);

}  // namespace floodcast

#endif
