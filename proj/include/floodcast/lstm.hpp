#ifndef FLOODCAST_LSTM_HPP
#define FLOODCAST_LSTM_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "floodcast/cmal.hpp"
#include "floodcast/common.hpp"
#include "floodcast/series.hpp"

namespace floodcast {

/// Hindcast/forecast LSTM configuration. Weights are shared across gauges;
/// only the upstream combiner and the normalization statistics are
/// gauge-specific.
struct LstmConfig {
    int hidden_size = 128;
    int target_lookback_h = 168;    // hindcast history
    int upstream_lookback_h = 240;  // upstream history; the extra span enters as a lag
    int max_lead_h = 48;
    int n_components = 3;           // CMAL mixture size
    std::uint64_t seed = 42;

    // optimization
    double learning_rate = 1e-3;
    int batch_size = 64;
    double grad_clip_norm = 1.0;
    int epochs = 20;
    double scale_epsilon = 1e-4;    // softplus floor for CMAL scales (normalized units)

    void validate() const;
    int combined_features() const { return 5; }
    int hindcast_input_dim() const { return 7; }  // precip + target stage + 5 combined
    int forecast_input_dim() const { return 2; }  // lead fraction + constant 1
    int head_outputs() const { return 4 * n_components; }
};

/// Named tensor inside the flat parameter vector.
struct TensorInfo {
    std::string name;
    std::vector<int> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
};

struct ParamStore {
    std::vector<double> data;
    std::vector<TensorInfo> tensors;

    std::size_t add(const std::string& name, std::vector<int> shape);
    std::span<double> view(const std::string& name);
    std::span<const double> view(const std::string& name) const;
    const TensorInfo& info(const std::string& name) const;

private:
    std::map<std::string, std::size_t> index_;
};

/// Per-gauge metadata: upstream count and normalization statistics.
/// Precipitation is transformed log(1+x) before standardization.
struct GaugeEntry {
    std::string gauge_id;
    int n_upstreams = 0;
    double stage_mean = 0.0;
    double stage_std = 1.0;
    double precip_mean = 0.0;
    double precip_std = 1.0;
    std::vector<double> upstream_mean;  // one per upstream gauge
    std::vector<double> upstream_std;
};

/// One training window: hindcast inputs over T steps plus the L future
/// target stages, all in normalized units. Upstream stages are stored
/// per step, already lagged by upstream_lookback - target_lookback.
struct LstmWindow {
    int gauge = 0;
    UtcTime issue = 0;
    std::vector<double> precip;    // T
    std::vector<double> stage;     // T
    std::vector<double> upstream;  // T * n_upstreams, step-major
    std::vector<double> targets;   // L
};

struct LstmDataset {
    std::vector<GaugeEntry> gauges;
    std::vector<LstmWindow> train;
    std::vector<LstmWindow> validation;
};

/// The full weight set. Tensor directory layout (H = hidden, K = mixture):
///   combiner/<gauge>/w [5,n_up], combiner/<gauge>/b [5]
///   hindcast/w_x [4H,7], hindcast/w_h [4H,H], hindcast/b [4H]
///   handoff/w [2H,2H], handoff/b [2H]
///   forecast/w_x [4H,2], forecast/w_h [4H,H], forecast/b [4H]
///   head/w [4K,H], head/b [4K]
/// Gate rows are stacked input, forget, candidate, output.
class LstmModel {
public:
    LstmModel() = default;
    LstmModel(const LstmConfig& cfg, std::vector<GaugeEntry> gauges);

    const LstmConfig& config() const { return cfg_; }
    const std::vector<GaugeEntry>& gauges() const { return gauges_; }
    const GaugeEntry& gauge(const std::string& id) const;
    int gauge_index(const std::string& id) const;
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    void init_weights(Rng& rng);

    /// Gauge-specific affine map of the upstream stage vector to 5 features.
    /// Gauges without upstreams produce zeros.
    std::vector<double> combine_upstream(int gauge, std::span<const double> upstream_stages) const;

    /// Runs the hindcast cell over per-step 7-vectors from a zero state and
    /// returns the final (cell, hidden) pair. Inputs must be finite.
    std::pair<std::vector<double>, std::vector<double>> run_hindcast(
        std::span<const double> inputs, int steps) const;

    /// Affine state handoff: concat(c, h) -> (c0, h0).
    std::pair<std::vector<double>, std::vector<double>> handoff(
        std::span<const double> c, std::span<const double> h) const;

    /// Rolls the forecast cell L steps and decodes the CMAL head per step.
    /// Outputs are in normalized units.
    CmalForecast run_forecast(std::span<const double> c0, std::span<const double> h0, int lead_steps) const;

    /// End-to-end forecast for one window's inputs, in normalized units.
    CmalForecast forecast_window(const LstmWindow& w, int lead_steps) const;

    /// End-to-end forecast in meters from raw histories ending at the issue
    /// time: target stage over target_lookback_h, per-upstream stages over
    /// upstream_lookback_h, precipitation depths over target_lookback_h.
    CmalForecast forecast(const std::string& gauge_id,
                          std::span<const double> target_stage_m,
                          const std::vector<std::vector<double>>& upstream_stage_m,
                          std::span<const double> precip_mm,
                          int lead_steps) const;

    /// Mean per-step CMAL NLL of one window; accumulates parameter gradients
    /// into `grads` (same layout as params().data) when non-null.
    double window_loss(const LstmWindow& w, std::vector<double>* grads) const;

private:
    LstmConfig cfg_;
    std::vector<GaugeEntry> gauges_;
    std::map<std::string, int> gauge_index_;
    ParamStore params_;
};

/// Series bundle for one gauge used to cut training windows.
struct GaugeSeries {
    StageSeries target;
    std::vector<StageSeries> upstreams;
    PrecipSeries precip;  // empty values -> treated as zero rainfall
};

/// Cuts windows on a fixed stride, computes train-split normalization
/// statistics, and splits chronologically (the trailing fraction of each
/// gauge's windows becomes validation). Windows with missing target stages
/// anywhere in the lookback or the lead horizon are dropped; missing
/// upstream samples are forward-filled.
LstmDataset build_lstm_dataset(const std::vector<GaugeSeries>& gauges, const LstmConfig& cfg,
                               int stride_steps = 1, double validation_fraction = 0.1);

using TrainLogger = std::function<void(int epoch, double train_nll, double val_nll)>;

/// Adam over mean per-step forecast NLL with gradient clipping and
/// truncated-through-window BPTT. Deterministic for a fixed seed. Restarts
/// with a halved learning rate (up to 3 times) if the loss goes non-finite,
/// then raises NumericError. Returns the weights with the best validation
/// NLL (training NLL when the validation split is empty).
LstmModel train_lstm(const LstmDataset& data, const LstmConfig& cfg, const TrainLogger& log = {});

// Weight artifact: JSON header (config, gauges, tensor directory) followed
// by little-endian float64 tensor data.
void save_lstm_model(const LstmModel& m, const std::string& path);
LstmModel load_lstm_model(const std::string& path);

}  // namespace floodcast

#endif
