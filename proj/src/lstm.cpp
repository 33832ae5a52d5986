#include "floodcast/lstm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

using nlohmann::json;

namespace floodcast {

void LstmConfig::validate() const {
    if (hidden_size < 1) throw DataError("lstm: hidden_size must be >= 1");
    if (n_components < 1) throw DataError("lstm: n_components must be >= 1");
    if (target_lookback_h < 1) throw DataError("lstm: target lookback must be >= 1 h");
    if (upstream_lookback_h < target_lookback_h) {
        throw DataError("lstm: upstream lookback must cover the target lookback");
    }
    if (max_lead_h < 1 || batch_size < 1 || epochs < 1) throw DataError("lstm: bad training config");
    if (!(learning_rate > 0.0)) throw DataError("lstm: learning rate must be > 0");
}

std::size_t ParamStore::add(const std::string& name, std::vector<int> shape) {
    std::size_t sz = 1;
    for (int d : shape) sz *= static_cast<std::size_t>(d);
    TensorInfo t{name, std::move(shape), data.size(), sz};
    index_[name] = tensors.size();
    tensors.push_back(std::move(t));
    data.resize(data.size() + sz, 0.0);
    return tensors.back().offset;
}

std::span<double> ParamStore::view(const std::string& name) {
    const TensorInfo& t = info(name);
    return {data.data() + t.offset, t.size};
}

std::span<const double> ParamStore::view(const std::string& name) const {
    const TensorInfo& t = info(name);
    return {data.data() + t.offset, t.size};
}

const TensorInfo& ParamStore::info(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw DataError("unknown tensor '" + name + "'");
    return tensors[it->second];
}

namespace {

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

inline double softplus(double z) {
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

// y = W x + b accumulated into out (out must be pre-filled with b or zeros)
inline void matvec_acc(const double* w, const double* x, int rows, int cols, double* out) {
    for (int r = 0; r < rows; ++r) {
        const double* row = w + static_cast<std::size_t>(r) * cols;
        double s = 0.0;
        for (int c = 0; c < cols; ++c) s += row[c] * x[c];
        out[r] += s;
    }
}

struct CellTensors {
    const double* w_x;
    const double* w_h;
    const double* b;
    int in_dim;
    int hidden;
};

struct CellGradTensors {
    double* w_x;
    double* w_h;
    double* b;
};

// Per-sequence activations; h/c carry T+1 states (index 0 = initial).
struct CellCache {
    int steps = 0, in_dim = 0, hidden = 0;
    std::vector<double> x, h, c, gi, gf, gg, go, tanh_c;

    void reset(int T, int D, int H) {
        steps = T; in_dim = D; hidden = H;
        x.assign(static_cast<std::size_t>(T) * D, 0.0);
        h.assign(static_cast<std::size_t>(T + 1) * H, 0.0);
        c.assign(static_cast<std::size_t>(T + 1) * H, 0.0);
        gi.assign(static_cast<std::size_t>(T) * H, 0.0);
        gf.assign(static_cast<std::size_t>(T) * H, 0.0);
        gg.assign(static_cast<std::size_t>(T) * H, 0.0);
        go.assign(static_cast<std::size_t>(T) * H, 0.0);
        tanh_c.assign(static_cast<std::size_t>(T) * H, 0.0);
    }
};

void cell_forward_step(const CellTensors& cell, CellCache& cache, int t) {
    int H = cell.hidden, D = cell.in_dim;
    const double* x = cache.x.data() + static_cast<std::size_t>(t) * D;
    const double* h_prev = cache.h.data() + static_cast<std::size_t>(t) * H;
    const double* c_prev = cache.c.data() + static_cast<std::size_t>(t) * H;
    double* h_out = cache.h.data() + static_cast<std::size_t>(t + 1) * H;
    double* c_out = cache.c.data() + static_cast<std::size_t>(t + 1) * H;

    std::vector<double> pre(cell.b, cell.b + 4 * H);
    matvec_acc(cell.w_x, x, 4 * H, D, pre.data());
    matvec_acc(cell.w_h, h_prev, 4 * H, H, pre.data());

    double* gi = cache.gi.data() + static_cast<std::size_t>(t) * H;
    double* gf = cache.gf.data() + static_cast<std::size_t>(t) * H;
    double* gg = cache.gg.data() + static_cast<std::size_t>(t) * H;
    double* go = cache.go.data() + static_cast<std::size_t>(t) * H;
    double* tc = cache.tanh_c.data() + static_cast<std::size_t>(t) * H;
    for (int k = 0; k < H; ++k) {
        gi[k] = sigmoid(pre[k]);
        gf[k] = sigmoid(pre[H + k]);
        gg[k] = std::tanh(pre[2 * H + k]);
        go[k] = sigmoid(pre[3 * H + k]);
        c_out[k] = gf[k] * c_prev[k] + gi[k] * gg[k];
        tc[k] = std::tanh(c_out[k]);
        h_out[k] = go[k] * tc[k];
    }
}

// Reverse sweep. dh_extra (steps x H) injects per-step gradients (the head);
// dh_last/dc_last inject gradients at the final state. dx (steps x in_dim)
// is filled when non-null. Returns gradients wrt the initial state through
// dh0/dc0.
void cell_backward(const CellTensors& cell, const CellCache& cache, const double* dh_extra,
                   const double* dh_last, const double* dc_last, CellGradTensors grad,
                   double* dx, double* dh0, double* dc0) {
    int H = cell.hidden, D = cell.in_dim, T = cache.steps;
    std::vector<double> dh(H, 0.0), dc(H, 0.0), dpre(4 * H, 0.0), dh_prev(H, 0.0);
    if (dh_last) for (int k = 0; k < H; ++k) dh[k] = dh_last[k];
    if (dc_last) for (int k = 0; k < H; ++k) dc[k] = dc_last[k];

    for (int t = T - 1; t >= 0; --t) {
        const double* x = cache.x.data() + static_cast<std::size_t>(t) * D;
        const double* h_prev = cache.h.data() + static_cast<std::size_t>(t) * H;
        const double* c_prev = cache.c.data() + static_cast<std::size_t>(t) * H;
        const double* gi = cache.gi.data() + static_cast<std::size_t>(t) * H;
        const double* gf = cache.gf.data() + static_cast<std::size_t>(t) * H;
        const double* gg = cache.gg.data() + static_cast<std::size_t>(t) * H;
        const double* go = cache.go.data() + static_cast<std::size_t>(t) * H;
        const double* tc = cache.tanh_c.data() + static_cast<std::size_t>(t) * H;

        if (dh_extra) {
            const double* e = dh_extra + static_cast<std::size_t>(t) * H;
            for (int k = 0; k < H; ++k) dh[k] += e[k];
        }
        for (int k = 0; k < H; ++k) {
            double do_ = dh[k] * tc[k];
            double dtc = dh[k] * go[k];
            double dct = dc[k] + dtc * (1.0 - tc[k] * tc[k]);
            double di = dct * gg[k];
            double dg = dct * gi[k];
            double df = dct * c_prev[k];
            dc[k] = dct * gf[k];  // becomes dc_{t-1}
            dpre[k] = di * gi[k] * (1.0 - gi[k]);
            dpre[H + k] = df * gf[k] * (1.0 - gf[k]);
            dpre[2 * H + k] = dg * (1.0 - gg[k] * gg[k]);
            dpre[3 * H + k] = do_ * go[k] * (1.0 - go[k]);
        }
        for (int j = 0; j < 4 * H; ++j) {
            double d = dpre[j];
            if (d == 0.0) continue;
            grad.b[j] += d;
            double* wx_row = grad.w_x + static_cast<std::size_t>(j) * D;
            for (int dd = 0; dd < D; ++dd) wx_row[dd] += d * x[dd];
            double* wh_row = grad.w_h + static_cast<std::size_t>(j) * H;
            for (int k = 0; k < H; ++k) wh_row[k] += d * h_prev[k];
        }
        if (dx) {
            double* dxt = dx + static_cast<std::size_t>(t) * D;
            for (int dd = 0; dd < D; ++dd) {
                double s = 0.0;
                for (int j = 0; j < 4 * H; ++j) s += cell.w_x[static_cast<std::size_t>(j) * D + dd] * dpre[j];
                dxt[dd] = s;
            }
        }
        std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
        for (int j = 0; j < 4 * H; ++j) {
            double d = dpre[j];
            if (d == 0.0) continue;
            const double* wh_row = cell.w_h + static_cast<std::size_t>(j) * H;
            for (int k = 0; k < H; ++k) dh_prev[k] += wh_row[k] * d;
        }
        std::swap(dh, dh_prev);
    }
    if (dh0) for (int k = 0; k < H; ++k) dh0[k] = dh[k];
    if (dc0) for (int k = 0; k < H; ++k) dc0[k] = dc[k];
}

inline double logsumexp(const double* v, int n) {
    double m = -kInf;
    for (int i = 0; i < n; ++i) m = std::max(m, v[i]);
    if (m == -kInf) return -kInf;
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::exp(v[i] - m);
    return m + std::log(s);
}

std::string comb_w_name(const std::string& id) { return "combiner/" + id + "/w"; }
std::string comb_b_name(const std::string& id) { return "combiner/" + id + "/b"; }

}  // namespace

LstmModel::LstmModel(const LstmConfig& cfg, std::vector<GaugeEntry> gauges)
    : cfg_(cfg), gauges_(std::move(gauges)) {
    cfg_.validate();
    // Gauge order is preserved: dataset windows address gauges by position.
    for (std::size_t i = 0; i < gauges_.size(); ++i) {
        if (!gauge_index_.emplace(gauges_[i].gauge_id, static_cast<int>(i)).second) {
            throw DataError("duplicate gauge id '" + gauges_[i].gauge_id + "'");
        }
    }
    int H = cfg_.hidden_size;
    for (const auto& g : gauges_) {
        params_.add(comb_w_name(g.gauge_id), {cfg_.combined_features(), std::max(g.n_upstreams, 0)});
        params_.add(comb_b_name(g.gauge_id), {cfg_.combined_features()});
    }
    params_.add("hindcast/w_x", {4 * H, cfg_.hindcast_input_dim()});
    params_.add("hindcast/w_h", {4 * H, H});
    params_.add("hindcast/b", {4 * H});
    params_.add("handoff/w", {2 * H, 2 * H});
    params_.add("handoff/b", {2 * H});
    params_.add("forecast/w_x", {4 * H, cfg_.forecast_input_dim()});
    params_.add("forecast/w_h", {4 * H, H});
    params_.add("forecast/b", {4 * H});
    params_.add("head/w", {cfg_.head_outputs(), H});
    params_.add("head/b", {cfg_.head_outputs()});
}

const GaugeEntry& LstmModel::gauge(const std::string& id) const {
    return gauges_[static_cast<std::size_t>(gauge_index(id))];
}

int LstmModel::gauge_index(const std::string& id) const {
    auto it = gauge_index_.find(id);
    if (it == gauge_index_.end()) throw DataError("unknown gauge '" + id + "'");
    return it->second;
}

void LstmModel::init_weights(Rng& rng) {
    int H = cfg_.hidden_size;
    double r = 1.0 / std::sqrt(static_cast<double>(H));
    auto fill = [&](std::span<double> v, double lim) {
        for (double& x : v) x = rng.uniform(-lim, lim);
    };
    for (const auto& g : gauges_) {
        if (g.n_upstreams > 0) fill(params_.view(comb_w_name(g.gauge_id)), 0.5);
        // combiner biases start at zero
    }
    fill(params_.view("hindcast/w_x"), r);
    fill(params_.view("hindcast/w_h"), r);
    fill(params_.view("forecast/w_x"), r);
    fill(params_.view("forecast/w_h"), r);
    fill(params_.view("head/w"), r);
    // forget-gate biases start at 1 so early training keeps state
    for (auto name : {"hindcast/b", "forecast/b"}) {
        auto b = params_.view(name);
        for (int k = 0; k < H; ++k) b[H + k] = 1.0;
    }
    // handoff starts as identity
    auto hw = params_.view("handoff/w");
    for (int k = 0; k < 2 * H; ++k) hw[static_cast<std::size_t>(k) * 2 * H + k] = 1.0;
    // head starts near a wide default distribution
    auto hb = params_.view("head/b");
    int K = cfg_.n_components;
    for (int k = 0; k < K; ++k) {
        hb[2 * K + k] = 0.5;  // raw scale -> softplus ~ 1
        hb[3 * K + k] = 0.0;  // tau ~ 0.5
    }
}

std::vector<double> LstmModel::combine_upstream(int gauge, std::span<const double> upstream_stages) const {
    const GaugeEntry& g = gauges_[static_cast<std::size_t>(gauge)];
    int n = g.n_upstreams;
    if (static_cast<int>(upstream_stages.size()) != n) {
        throw DataError("combine_upstream: expected " + std::to_string(n) + " upstream values");
    }
    std::vector<double> out(static_cast<std::size_t>(cfg_.combined_features()), 0.0);
    if (n == 0) return out;
    auto w = params_.view(comb_w_name(g.gauge_id));
    auto b = params_.view(comb_b_name(g.gauge_id));
    for (int r = 0; r < cfg_.combined_features(); ++r) {
        double s = b[r];
        for (int c = 0; c < n; ++c) s += w[static_cast<std::size_t>(r) * n + c] * upstream_stages[c];
        out[static_cast<std::size_t>(r)] = s;
    }
    return out;
}

std::pair<std::vector<double>, std::vector<double>> LstmModel::run_hindcast(
    std::span<const double> inputs, int steps) const {
    int D = cfg_.hindcast_input_dim(), H = cfg_.hidden_size;
    if (static_cast<int>(inputs.size()) != steps * D) throw DataError("run_hindcast: input size mismatch");
    for (double v : inputs)
        if (!std::isfinite(v)) throw DataError("run_hindcast: non-finite input");
    CellTensors cell{params_.view("hindcast/w_x").data(), params_.view("hindcast/w_h").data(),
                     params_.view("hindcast/b").data(), D, H};
    CellCache cache;
    cache.reset(steps, D, H);
    std::copy(inputs.begin(), inputs.end(), cache.x.begin());
    for (int t = 0; t < steps; ++t) cell_forward_step(cell, cache, t);
    std::vector<double> c(cache.c.end() - H, cache.c.end());
    std::vector<double> h(cache.h.end() - H, cache.h.end());
    return {std::move(c), std::move(h)};
}

std::pair<std::vector<double>, std::vector<double>> LstmModel::handoff(
    std::span<const double> c, std::span<const double> h) const {
    int H = cfg_.hidden_size;
    if (static_cast<int>(c.size()) != H || static_cast<int>(h.size()) != H) {
        throw DataError("handoff: state size mismatch");
    }
    std::vector<double> s(static_cast<std::size_t>(2 * H));
    std::copy(c.begin(), c.end(), s.begin());
    std::copy(h.begin(), h.end(), s.begin() + H);
    auto b = params_.view("handoff/b");
    std::vector<double> s0(b.begin(), b.end());
    matvec_acc(params_.view("handoff/w").data(), s.data(), 2 * H, 2 * H, s0.data());
    return {std::vector<double>(s0.begin(), s0.begin() + H), std::vector<double>(s0.begin() + H, s0.end())};
}

namespace {

// Decodes one step's raw head output into a distribution.
CmalDist decode_head(const double* raw, int K, double scale_eps) {
    CmalDist d;
    d.components.resize(static_cast<std::size_t>(K));
    double lse = logsumexp(raw, K);
    for (int k = 0; k < K; ++k) {
        auto& c = d.components[static_cast<std::size_t>(k)];
        c.weight = std::exp(raw[k] - lse);
        c.loc = raw[K + k];
        c.scale = softplus(raw[2 * K + k]) + scale_eps;
        c.tau = sigmoid(raw[3 * K + k]);
        // logistic output exactly 0 or 1 only at infinite logits; clamp anyway
        c.tau = std::min(std::max(c.tau, 1e-12), 1.0 - 1e-12);
    }
    return d;
}

}  // namespace

CmalForecast LstmModel::run_forecast(std::span<const double> c0, std::span<const double> h0,
                                     int lead_steps) const {
    int H = cfg_.hidden_size, D = cfg_.forecast_input_dim();
    if (lead_steps < 1) throw DataError("run_forecast: lead_steps must be >= 1");
    if (static_cast<int>(c0.size()) != H || static_cast<int>(h0.size()) != H) {
        throw DataError("run_forecast: state size mismatch");
    }
    CellTensors cell{params_.view("forecast/w_x").data(), params_.view("forecast/w_h").data(),
                     params_.view("forecast/b").data(), D, H};
    CellCache cache;
    cache.reset(lead_steps, D, H);
    std::copy(c0.begin(), c0.end(), cache.c.begin());
    std::copy(h0.begin(), h0.end(), cache.h.begin());
    for (int t = 0; t < lead_steps; ++t) {
        cache.x[static_cast<std::size_t>(t) * D] = static_cast<double>(t + 1) / lead_steps;
        cache.x[static_cast<std::size_t>(t) * D + 1] = 1.0;
        cell_forward_step(cell, cache, t);
    }
    const double* head_w = params_.view("head/w").data();
    const double* head_b = params_.view("head/b").data();
    int out = cfg_.head_outputs();
    CmalForecast fc;
    fc.steps.reserve(static_cast<std::size_t>(lead_steps));
    std::vector<double> raw(static_cast<std::size_t>(out));
    for (int t = 0; t < lead_steps; ++t) {
        std::copy(head_b, head_b + out, raw.begin());
        matvec_acc(head_w, cache.h.data() + static_cast<std::size_t>(t + 1) * H, out, H, raw.data());
        fc.steps.push_back(decode_head(raw.data(), cfg_.n_components, cfg_.scale_epsilon));
    }
    return fc;
}

CmalForecast LstmModel::forecast_window(const LstmWindow& w, int lead_steps) const {
    const GaugeEntry& g = gauges_[static_cast<std::size_t>(w.gauge)];
    int T = static_cast<int>(w.stage.size());
    int D = cfg_.hindcast_input_dim();
    std::vector<double> inputs(static_cast<std::size_t>(T) * D);
    for (int t = 0; t < T; ++t) {
        std::span<const double> u(w.upstream.data() + static_cast<std::size_t>(t) * g.n_upstreams,
                                  static_cast<std::size_t>(g.n_upstreams));
        std::vector<double> comb = combine_upstream(w.gauge, u);
        double* x = inputs.data() + static_cast<std::size_t>(t) * D;
        x[0] = w.precip[static_cast<std::size_t>(t)];
        x[1] = w.stage[static_cast<std::size_t>(t)];
        std::copy(comb.begin(), comb.end(), x + 2);
    }
    auto [c, h] = run_hindcast(inputs, T);
    auto [c0, h0] = handoff(c, h);
    return run_forecast(c0, h0, lead_steps);
}

CmalForecast LstmModel::forecast(const std::string& gauge_id,
                                 std::span<const double> target_stage_m,
                                 const std::vector<std::vector<double>>& upstream_stage_m,
                                 std::span<const double> precip_mm,
                                 int lead_steps) const {
    int gi = gauge_index(gauge_id);
    const GaugeEntry& g = gauges_[static_cast<std::size_t>(gi)];
    int T = cfg_.target_lookback_h;
    int full = cfg_.upstream_lookback_h;
    if (static_cast<int>(target_stage_m.size()) != T) {
        throw DataError("forecast: target history must cover " + std::to_string(T) + " steps");
    }
    if (static_cast<int>(precip_mm.size()) != T) {
        throw DataError("forecast: precipitation history must cover " + std::to_string(T) + " steps");
    }
    if (static_cast<int>(upstream_stage_m.size()) != g.n_upstreams) {
        throw DataError("forecast: gauge '" + gauge_id + "' expects " + std::to_string(g.n_upstreams) +
                        " upstream histories");
    }
    LstmWindow w;
    w.gauge = gi;
    w.stage.resize(static_cast<std::size_t>(T));
    w.precip.resize(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        double s = target_stage_m[static_cast<std::size_t>(t)];
        if (!std::isfinite(s)) throw DataError("forecast: missing target stage; run QC first");
        w.stage[static_cast<std::size_t>(t)] = (s - g.stage_mean) / g.stage_std;
        double p = precip_mm[static_cast<std::size_t>(t)];
        double lp = is_present(p) && p > 0.0 ? std::log1p(p) : 0.0;
        w.precip[static_cast<std::size_t>(t)] = (lp - g.precip_mean) / g.precip_std;
    }
    w.upstream.assign(static_cast<std::size_t>(T) * g.n_upstreams, 0.0);
    for (int u = 0; u < g.n_upstreams; ++u) {
        const auto& hist = upstream_stage_m[static_cast<std::size_t>(u)];
        if (static_cast<int>(hist.size()) != full) {
            throw DataError("forecast: upstream history must cover " + std::to_string(full) + " steps");
        }
        // combiner consumes the lagged slice: entries [0, T)
        double last = kMissing;
        for (int t = 0; t < T; ++t) {
            double v = hist[static_cast<std::size_t>(t)];
            if (is_present(v)) last = v;
            double filled = is_present(v) ? v : last;
            double norm = 0.0;
            if (is_present(filled)) {
                norm = (filled - g.upstream_mean[static_cast<std::size_t>(u)]) /
                       g.upstream_std[static_cast<std::size_t>(u)];
            }
            w.upstream[static_cast<std::size_t>(t) * g.n_upstreams + u] = norm;
        }
    }
    CmalForecast fc = forecast_window(w, lead_steps);
    for (auto& step : fc.steps) {
        for (auto& c : step.components) {
            c.loc = c.loc * g.stage_std + g.stage_mean;
            c.scale *= g.stage_std;
        }
    }
    return fc;
}

double LstmModel::window_loss(const LstmWindow& w, std::vector<double>* grads) const {
    const GaugeEntry& g = gauges_[static_cast<std::size_t>(w.gauge)];
    int H = cfg_.hidden_size;
    int Dh = cfg_.hindcast_input_dim();
    int Df = cfg_.forecast_input_dim();
    int K = cfg_.n_components;
    int T = static_cast<int>(w.stage.size());
    int L = static_cast<int>(w.targets.size());
    int nu = g.n_upstreams;
    if (T < 1 || L < 1) throw DataError("window_loss: empty window");

    const double* comb_w = nu > 0 ? params_.view(comb_w_name(g.gauge_id)).data() : nullptr;
    const double* comb_b = nu > 0 ? params_.view(comb_b_name(g.gauge_id)).data() : nullptr;

    // hindcast forward
    CellTensors hind{params_.view("hindcast/w_x").data(), params_.view("hindcast/w_h").data(),
                     params_.view("hindcast/b").data(), Dh, H};
    CellCache hc;
    hc.reset(T, Dh, H);
    for (int t = 0; t < T; ++t) {
        double* x = hc.x.data() + static_cast<std::size_t>(t) * Dh;
        x[0] = w.precip[static_cast<std::size_t>(t)];
        x[1] = w.stage[static_cast<std::size_t>(t)];
        if (nu > 0) {
            const double* u = w.upstream.data() + static_cast<std::size_t>(t) * nu;
            for (int r = 0; r < 5; ++r) {
                double s = comb_b[r];
                const double* row = comb_w + static_cast<std::size_t>(r) * nu;
                for (int c = 0; c < nu; ++c) s += row[c] * u[c];
                x[2 + r] = s;
            }
        }
        cell_forward_step(hind, hc, t);
    }

    // handoff forward
    const double* hand_w = params_.view("handoff/w").data();
    std::vector<double> s_in(static_cast<std::size_t>(2 * H));
    std::copy(hc.c.end() - H, hc.c.end(), s_in.begin());
    std::copy(hc.h.end() - H, hc.h.end(), s_in.begin() + H);
    auto hand_b = params_.view("handoff/b");
    std::vector<double> s_out(hand_b.begin(), hand_b.end());
    matvec_acc(hand_w, s_in.data(), 2 * H, 2 * H, s_out.data());

    // forecast forward
    CellTensors fore{params_.view("forecast/w_x").data(), params_.view("forecast/w_h").data(),
                     params_.view("forecast/b").data(), Df, H};
    CellCache fc;
    fc.reset(L, Df, H);
    std::copy(s_out.begin(), s_out.begin() + H, fc.c.begin());
    std::copy(s_out.begin() + H, s_out.end(), fc.h.begin());
    for (int t = 0; t < L; ++t) {
        fc.x[static_cast<std::size_t>(t) * Df] = static_cast<double>(t + 1) / L;
        fc.x[static_cast<std::size_t>(t) * Df + 1] = 1.0;
        cell_forward_step(fore, fc, t);
    }

    // head + loss per step
    const double* head_w = params_.view("head/w").data();
    const double* head_b = params_.view("head/b").data();
    int out = cfg_.head_outputs();
    std::vector<double> raw_all(static_cast<std::size_t>(L) * out);
    std::vector<double> dh_extra;
    std::vector<double> draw(static_cast<std::size_t>(out));
    double* dhead_w = nullptr;
    double* dhead_b = nullptr;
    if (grads) {
        grads->assign(params_.data.size(), 0.0);
        dh_extra.assign(static_cast<std::size_t>(L) * H, 0.0);
        dhead_w = grads->data() + params_.info("head/w").offset;
        dhead_b = grads->data() + params_.info("head/b").offset;
    }

    double loss = 0.0;
    std::vector<double> terms(static_cast<std::size_t>(K));
    std::vector<double> logw(static_cast<std::size_t>(K));
    for (int t = 0; t < L; ++t) {
        double* raw = raw_all.data() + static_cast<std::size_t>(t) * out;
        std::copy(head_b, head_b + out, raw);
        const double* ht = fc.h.data() + static_cast<std::size_t>(t + 1) * H;
        matvec_acc(head_w, ht, out, H, raw);

        double y = w.targets[static_cast<std::size_t>(t)];
        double lse_w = logsumexp(raw, K);
        double best = -kInf;
        for (int k = 0; k < K; ++k) {
            logw[static_cast<std::size_t>(k)] = raw[k] - lse_w;
            double b = softplus(raw[2 * K + k]) + cfg_.scale_epsilon;
            double tau = std::min(std::max(sigmoid(raw[3 * K + k]), 1e-12), 1.0 - 1e-12);
            double u = (y - raw[K + k]) / b;
            double rho = u * (tau - (u < 0.0 ? 1.0 : 0.0));
            terms[static_cast<std::size_t>(k)] =
                logw[static_cast<std::size_t>(k)] + std::log(tau) + std::log1p(-tau) - std::log(b) - rho;
            best = std::max(best, terms[static_cast<std::size_t>(k)]);
        }
        double acc = 0.0;
        for (int k = 0; k < K; ++k) acc += std::exp(terms[static_cast<std::size_t>(k)] - best);
        double nll = -(best + std::log(acc));
        loss += nll;

        if (grads) {
            double inv_l = 1.0 / static_cast<double>(L);
            // posterior responsibilities
            for (int k = 0; k < K; ++k) {
                double p = std::exp(terms[static_cast<std::size_t>(k)] - best) / acc;
                double wk = std::exp(logw[static_cast<std::size_t>(k)]);
                double b = softplus(raw[2 * K + k]) + cfg_.scale_epsilon;
                double tau = std::min(std::max(sigmoid(raw[3 * K + k]), 1e-12), 1.0 - 1e-12);
                double u = (y - raw[K + k]) / b;
                double psi = tau - (u < 0.0 ? 1.0 : 0.0);
                // weight logits: d nll / d a_k = w_k - p_k
                draw[static_cast<std::size_t>(k)] = (wk - p) * inv_l;
                // location
                draw[static_cast<std::size_t>(K + k)] = -p * (psi / b) * inv_l;
                // raw scale via softplus
                double dnll_db = -p * (psi * u - 1.0) / b;
                draw[static_cast<std::size_t>(2 * K + k)] = dnll_db * sigmoid(raw[2 * K + k]) * inv_l;
                // raw tau via logistic
                double dnll_dtau = -p * (1.0 / tau - 1.0 / (1.0 - tau) - u);
                draw[static_cast<std::size_t>(3 * K + k)] = dnll_dtau * tau * (1.0 - tau) * inv_l;
            }
            for (int j = 0; j < out; ++j) {
                double d = draw[static_cast<std::size_t>(j)];
                if (d == 0.0) continue;
                dhead_b[j] += d;
                double* row = dhead_w + static_cast<std::size_t>(j) * H;
                for (int k = 0; k < H; ++k) row[k] += d * ht[k];
            }
            double* dht = dh_extra.data() + static_cast<std::size_t>(t) * H;
            for (int k = 0; k < H; ++k) {
                double s = 0.0;
                for (int j = 0; j < out; ++j) {
                    s += head_w[static_cast<std::size_t>(j) * H + k] * draw[static_cast<std::size_t>(j)];
                }
                dht[k] += s;
            }
        }
    }
    loss /= static_cast<double>(L);
    if (!grads) return loss;

    // forecast cell backward
    CellGradTensors fgrad{grads->data() + params_.info("forecast/w_x").offset,
                          grads->data() + params_.info("forecast/w_h").offset,
                          grads->data() + params_.info("forecast/b").offset};
    std::vector<double> dc0(static_cast<std::size_t>(H)), dh0(static_cast<std::size_t>(H));
    cell_backward(fore, fc, dh_extra.data(), nullptr, nullptr, fgrad, nullptr, dh0.data(), dc0.data());

    // handoff backward
    std::vector<double> ds0(static_cast<std::size_t>(2 * H));
    std::copy(dc0.begin(), dc0.end(), ds0.begin());
    std::copy(dh0.begin(), dh0.end(), ds0.begin() + H);
    double* dhand_w = grads->data() + params_.info("handoff/w").offset;
    double* dhand_b = grads->data() + params_.info("handoff/b").offset;
    for (int j = 0; j < 2 * H; ++j) {
        double d = ds0[static_cast<std::size_t>(j)];
        if (d == 0.0) continue;
        dhand_b[j] += d;
        double* row = dhand_w + static_cast<std::size_t>(j) * 2 * H;
        for (int k = 0; k < 2 * H; ++k) row[k] += d * s_in[static_cast<std::size_t>(k)];
    }
    std::vector<double> ds(static_cast<std::size_t>(2 * H), 0.0);
    for (int k = 0; k < 2 * H; ++k) {
        double s = 0.0;
        for (int j = 0; j < 2 * H; ++j) s += hand_w[static_cast<std::size_t>(j) * 2 * H + k] * ds0[static_cast<std::size_t>(j)];
        ds[static_cast<std::size_t>(k)] = s;
    }

    // hindcast backward, collecting input gradients for the combiner
    CellGradTensors hgrad{grads->data() + params_.info("hindcast/w_x").offset,
                          grads->data() + params_.info("hindcast/w_h").offset,
                          grads->data() + params_.info("hindcast/b").offset};
    std::vector<double> dx(static_cast<std::size_t>(T) * Dh, 0.0);
    cell_backward(hind, hc, nullptr, ds.data() + H, ds.data(), hgrad, dx.data(), nullptr, nullptr);

    if (nu > 0) {
        double* dcomb_w = grads->data() + params_.info(comb_w_name(g.gauge_id)).offset;
        double* dcomb_b = grads->data() + params_.info(comb_b_name(g.gauge_id)).offset;
        for (int t = 0; t < T; ++t) {
            const double* dxt = dx.data() + static_cast<std::size_t>(t) * Dh;
            const double* u = w.upstream.data() + static_cast<std::size_t>(t) * nu;
            for (int r = 0; r < 5; ++r) {
                double d = dxt[2 + r];
                if (d == 0.0) continue;
                dcomb_b[r] += d;
                double* row = dcomb_w + static_cast<std::size_t>(r) * nu;
                for (int c = 0; c < nu; ++c) row[c] += d * u[c];
            }
        }
    }
    return loss;
}

LstmDataset build_lstm_dataset(const std::vector<GaugeSeries>& gauges, const LstmConfig& cfg,
                               int stride_steps, double validation_fraction) {
    cfg.validate();
    if (gauges.empty()) throw DataError("lstm dataset: no gauges");
    if (stride_steps < 1) throw DataError("lstm dataset: stride must be >= 1");

    LstmDataset ds;
    struct RawWindow {
        int gauge;
        std::size_t issue_idx;
        bool validation;
    };
    std::vector<RawWindow> raws;

    for (std::size_t gi = 0; gi < gauges.size(); ++gi) {
        const GaugeSeries& gs = gauges[gi];
        double step_h = gs.target.step_hours();
        int T = static_cast<int>(std::llround(cfg.target_lookback_h / step_h));
        int L = static_cast<int>(std::llround(cfg.max_lead_h / step_h));
        if (T < 1 || L < 1) throw DataError("lstm dataset: lookback/lead below one step");
        GaugeEntry e;
        e.gauge_id = gs.target.gauge_id;
        e.n_upstreams = static_cast<int>(gs.upstreams.size());
        e.upstream_mean.assign(gs.upstreams.size(), 0.0);
        e.upstream_std.assign(gs.upstreams.size(), 1.0);
        ds.gauges.push_back(e);

        std::vector<std::size_t> issues;
        std::int64_t n = static_cast<std::int64_t>(gs.target.values.size());
        for (std::int64_t i = T - 1; i + L < n; i += stride_steps) {
            bool ok = true;
            for (std::int64_t t = i - T + 1; t <= i + L && ok; ++t) {
                if (is_missing(gs.target.values[static_cast<std::size_t>(t)])) ok = false;
            }
            if (ok) issues.push_back(static_cast<std::size_t>(i));
        }
        if (issues.empty()) continue;
        std::size_t n_val = static_cast<std::size_t>(std::floor(validation_fraction * static_cast<double>(issues.size())));
        for (std::size_t k = 0; k < issues.size(); ++k) {
            raws.push_back({static_cast<int>(gi), issues[k], k >= issues.size() - n_val});
        }
    }
    if (raws.empty()) throw DataError("lstm dataset: no complete windows");

    // normalization statistics from training windows
    struct Acc {
        double sum = 0.0, sq = 0.0;
        std::size_t n = 0;
        void add(double v) { sum += v; sq += v * v; ++n; }
        double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
        double stddev() const {
            if (n < 2) return 1.0;
            double v = (sq - sum * sum / static_cast<double>(n)) / static_cast<double>(n - 1);
            return v > 1e-12 ? std::sqrt(v) : 1.0;
        }
    };
    std::vector<Acc> stage_acc(gauges.size()), precip_acc(gauges.size());
    std::vector<std::vector<Acc>> up_acc(gauges.size());
    for (std::size_t gi = 0; gi < gauges.size(); ++gi) up_acc[gi].resize(gauges[gi].upstreams.size());

    auto precip_at = [](const PrecipSeries& p, UtcTime t) {
        if (p.values.empty() || p.step_s <= 0) return 0.0;
        std::int64_t d = t - p.t0;
        if (d < 0 || d % p.step_s != 0) return 0.0;
        std::int64_t i = d / p.step_s;
        if (i >= static_cast<std::int64_t>(p.values.size())) return 0.0;
        double v = p.values[static_cast<std::size_t>(i)];
        return is_present(v) && v > 0.0 ? v : 0.0;
    };

    for (const RawWindow& rw : raws) {
        if (rw.validation) continue;
        const GaugeSeries& gs = gauges[static_cast<std::size_t>(rw.gauge)];
        double step_h = gs.target.step_hours();
        int T = static_cast<int>(std::llround(cfg.target_lookback_h / step_h));
        int L = static_cast<int>(std::llround(cfg.max_lead_h / step_h));
        int lag = static_cast<int>(std::llround((cfg.upstream_lookback_h - cfg.target_lookback_h) / step_h));
        std::int64_t i = static_cast<std::int64_t>(rw.issue_idx);
        for (std::int64_t t = i - T + 1; t <= i + L; ++t) {
            stage_acc[static_cast<std::size_t>(rw.gauge)].add(gs.target.values[static_cast<std::size_t>(t)]);
        }
        for (std::int64_t t = i - T + 1; t <= i; ++t) {
            UtcTime tt = gs.target.time_at(static_cast<std::size_t>(t));
            precip_acc[static_cast<std::size_t>(rw.gauge)].add(std::log1p(precip_at(gs.precip, tt)));
            for (std::size_t u = 0; u < gs.upstreams.size(); ++u) {
                auto idx = gs.upstreams[u].index_of(tt - static_cast<std::int64_t>(lag) * gs.target.step_s);
                if (idx && is_present(gs.upstreams[u].values[*idx])) {
                    up_acc[static_cast<std::size_t>(rw.gauge)][u].add(gs.upstreams[u].values[*idx]);
                }
            }
        }
    }
    for (std::size_t gi = 0; gi < gauges.size(); ++gi) {
        ds.gauges[gi].stage_mean = stage_acc[gi].mean();
        ds.gauges[gi].stage_std = stage_acc[gi].stddev();
        ds.gauges[gi].precip_mean = precip_acc[gi].mean();
        ds.gauges[gi].precip_std = precip_acc[gi].stddev();
        for (std::size_t u = 0; u < up_acc[gi].size(); ++u) {
            ds.gauges[gi].upstream_mean[u] = up_acc[gi][u].mean();
            ds.gauges[gi].upstream_std[u] = up_acc[gi][u].stddev();
        }
    }

    // materialize normalized windows
    for (const RawWindow& rw : raws) {
        const GaugeSeries& gs = gauges[static_cast<std::size_t>(rw.gauge)];
        const GaugeEntry& e = ds.gauges[static_cast<std::size_t>(rw.gauge)];
        double step_h = gs.target.step_hours();
        int T = static_cast<int>(std::llround(cfg.target_lookback_h / step_h));
        int L = static_cast<int>(std::llround(cfg.max_lead_h / step_h));
        int lag = static_cast<int>(std::llround((cfg.upstream_lookback_h - cfg.target_lookback_h) / step_h));
        std::int64_t i = static_cast<std::int64_t>(rw.issue_idx);

        LstmWindow w;
        w.gauge = rw.gauge;
        w.issue = gs.target.time_at(rw.issue_idx);
        w.stage.resize(static_cast<std::size_t>(T));
        w.precip.resize(static_cast<std::size_t>(T));
        w.targets.resize(static_cast<std::size_t>(L));
        w.upstream.assign(static_cast<std::size_t>(T) * e.n_upstreams, 0.0);
        for (int t = 0; t < T; ++t) {
            std::size_t src = static_cast<std::size_t>(i - T + 1 + t);
            w.stage[static_cast<std::size_t>(t)] = (gs.target.values[src] - e.stage_mean) / e.stage_std;
            UtcTime tt = gs.target.time_at(src);
            w.precip[static_cast<std::size_t>(t)] =
                (std::log1p(precip_at(gs.precip, tt)) - e.precip_mean) / e.precip_std;
        }
        for (int u = 0; u < e.n_upstreams; ++u) {
            double last = kMissing;
            for (int t = 0; t < T; ++t) {
                UtcTime tt = gs.target.time_at(static_cast<std::size_t>(i - T + 1 + t)) -
                             static_cast<std::int64_t>(lag) * gs.target.step_s;
                auto idx = gs.upstreams[static_cast<std::size_t>(u)].index_of(tt);
                double v = idx ? gs.upstreams[static_cast<std::size_t>(u)].values[*idx] : kMissing;
                if (is_present(v)) last = v;
                double filled = is_present(v) ? v : last;
                double norm = 0.0;
                if (is_present(filled)) {
                    norm = (filled - e.upstream_mean[static_cast<std::size_t>(u)]) /
                           e.upstream_std[static_cast<std::size_t>(u)];
                }
                w.upstream[static_cast<std::size_t>(t) * e.n_upstreams + u] = norm;
            }
        }
        for (int l = 0; l < L; ++l) {
            w.targets[static_cast<std::size_t>(l)] =
                (gs.target.values[static_cast<std::size_t>(i + 1 + l)] - e.stage_mean) / e.stage_std;
        }
        (rw.validation ? ds.validation : ds.train).push_back(std::move(w));
    }
    return ds;
}

namespace {

double dataset_nll(const LstmModel& m, const std::vector<LstmWindow>& windows) {
    if (windows.empty()) return kInf;
    double s = 0.0;
    for (const auto& w : windows) s += m.window_loss(w, nullptr);
    return s / static_cast<double>(windows.size());
}

}  // namespace

LstmModel train_lstm(const LstmDataset& data, const LstmConfig& cfg, const TrainLogger& log) {
    cfg.validate();
    if (data.train.empty()) throw DataError("train_lstm: no training windows");

    double lr = cfg.learning_rate;
    for (int attempt = 0; attempt <= 3; ++attempt, lr *= 0.5) {
        LstmModel model(cfg, data.gauges);
        Rng rng(cfg.seed);
        model.init_weights(rng);

        std::size_t np = model.params().data.size();
        std::vector<double> m1(np, 0.0), m2(np, 0.0), grads(np, 0.0), batch_grads;
        std::vector<double> best_params = model.params().data;
        double best_val = kInf;
        std::int64_t step = 0;
        bool diverged = false;

        std::vector<std::size_t> order(data.train.size());
        std::iota(order.begin(), order.end(), std::size_t{0});

        for (int epoch = 0; epoch < cfg.epochs && !diverged; ++epoch) {
            rng.shuffle(order);
            double epoch_loss = 0.0;
            std::size_t epoch_n = 0;
            for (std::size_t pos = 0; pos < order.size() && !diverged; pos += static_cast<std::size_t>(cfg.batch_size)) {
                std::size_t end = std::min(order.size(), pos + static_cast<std::size_t>(cfg.batch_size));
                std::fill(grads.begin(), grads.end(), 0.0);
                double loss = 0.0;
                for (std::size_t k = pos; k < end; ++k) {
                    loss += model.window_loss(data.train[order[k]], &batch_grads);
                    for (std::size_t j = 0; j < np; ++j) grads[j] += batch_grads[j];
                }
                double inv = 1.0 / static_cast<double>(end - pos);
                loss *= inv;
                if (!std::isfinite(loss)) { diverged = true; break; }
                epoch_loss += loss * static_cast<double>(end - pos);
                epoch_n += end - pos;

                double norm_sq = 0.0;
                for (std::size_t j = 0; j < np; ++j) {
                    grads[j] *= inv;
                    norm_sq += grads[j] * grads[j];
                }
                double norm = std::sqrt(norm_sq);
                double scale = (cfg.grad_clip_norm > 0.0 && norm > cfg.grad_clip_norm)
                                   ? cfg.grad_clip_norm / norm : 1.0;
                ++step;
                double bc1 = 1.0 - std::pow(0.9, static_cast<double>(step));
                double bc2 = 1.0 - std::pow(0.999, static_cast<double>(step));
                double* p = model.params().data.data();
                for (std::size_t j = 0; j < np; ++j) {
                    double gj = grads[j] * scale;
                    m1[j] = 0.9 * m1[j] + 0.1 * gj;
                    m2[j] = 0.999 * m2[j] + 0.001 * gj * gj;
                    p[j] -= lr * (m1[j] / bc1) / (std::sqrt(m2[j] / bc2) + 1e-8);
                }
            }
            if (diverged) break;

            double train_nll = epoch_n ? epoch_loss / static_cast<double>(epoch_n) : kInf;
            double val_nll = data.validation.empty() ? train_nll : dataset_nll(model, data.validation);
            if (!std::isfinite(val_nll)) { diverged = true; break; }
            if (val_nll < best_val) {
                best_val = val_nll;
                best_params = model.params().data;
            }
            if (log) log(epoch, train_nll, val_nll);
        }
        if (!diverged) {
            model.params().data = std::move(best_params);
            return model;
        }
    }
    throw NumericError("train_lstm: loss diverged after 3 learning-rate restarts");
}

void save_lstm_model(const LstmModel& m, const std::string& path) {
    const LstmConfig& c = m.config();
    json gauges = json::array();
    for (const auto& g : m.gauges()) {
        gauges.push_back({
            {"gauge_id", g.gauge_id},
            {"n_upstreams", g.n_upstreams},
            {"stage_mean", g.stage_mean},
            {"stage_std", g.stage_std},
            {"precip_mean", g.precip_mean},
            {"precip_std", g.precip_std},
            {"upstream_mean", g.upstream_mean},
            {"upstream_std", g.upstream_std},
        });
    }
    json tensors = json::array();
    for (const auto& t : m.params().tensors) {
        tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", t.offset}, {"size", t.size}});
    }
    json header = {
        {"schema_version", 1},
        {"config",
         {{"hidden_size", c.hidden_size},
          {"target_lookback_h", c.target_lookback_h},
          {"upstream_lookback_h", c.upstream_lookback_h},
          {"max_lead_h", c.max_lead_h},
          {"n_components", c.n_components},
          {"seed", c.seed},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"grad_clip_norm", c.grad_clip_norm},
          {"epochs", c.epochs},
          {"scale_epsilon", c.scale_epsilon}}},
        {"gauges", gauges},
        {"tensors", tensors},
    };
    std::string head = header.dump();

    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw DataError("cannot write '" + tmp + "'");
        f.write("FCLSTM1\n", 8);
        std::uint64_t n = head.size();
        f.write(reinterpret_cast<const char*>(&n), 8);
        f.write(head.data(), static_cast<std::streamsize>(head.size()));
        f.write(reinterpret_cast<const char*>(m.params().data.data()),
                static_cast<std::streamsize>(m.params().data.size() * sizeof(double)));
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw DataError("cannot rename '" + tmp + "' to '" + path + "'");
    }
}

LstmModel load_lstm_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open '" + path + "'");
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, "FCLSTM1\n", 8) != 0) throw DataError(path + ": not an LSTM weight file");
    std::uint64_t n = 0;
    f.read(reinterpret_cast<char*>(&n), 8);
    std::string head(n, '\0');
    f.read(head.data(), static_cast<std::streamsize>(n));
    if (!f) throw DataError(path + ": truncated header");
    json header;
    try {
        header = json::parse(head);
    } catch (const json::exception& e) {
        throw DataError(path + ": " + e.what());
    }

    LstmConfig c;
    const auto& jc = header.at("config");
    c.hidden_size = jc.at("hidden_size").get<int>();
    c.target_lookback_h = jc.at("target_lookback_h").get<int>();
    c.upstream_lookback_h = jc.at("upstream_lookback_h").get<int>();
    c.max_lead_h = jc.at("max_lead_h").get<int>();
    c.n_components = jc.at("n_components").get<int>();
    c.seed = jc.at("seed").get<std::uint64_t>();
    c.learning_rate = jc.at("learning_rate").get<double>();
    c.batch_size = jc.at("batch_size").get<int>();
    c.grad_clip_norm = jc.at("grad_clip_norm").get<double>();
    c.epochs = jc.at("epochs").get<int>();
    c.scale_epsilon = jc.at("scale_epsilon").get<double>();

    std::vector<GaugeEntry> gauges;
    for (const auto& jg : header.at("gauges")) {
        GaugeEntry g;
        g.gauge_id = jg.at("gauge_id").get<std::string>();
        g.n_upstreams = jg.at("n_upstreams").get<int>();
        g.stage_mean = jg.at("stage_mean").get<double>();
        g.stage_std = jg.at("stage_std").get<double>();
        g.precip_mean = jg.at("precip_mean").get<double>();
        g.precip_std = jg.at("precip_std").get<double>();
        g.upstream_mean = jg.at("upstream_mean").get<std::vector<double>>();
        g.upstream_std = jg.at("upstream_std").get<std::vector<double>>();
        gauges.push_back(std::move(g));
    }

    LstmModel m(c, std::move(gauges));
    const auto& jt = header.at("tensors");
    if (jt.size() != m.params().tensors.size()) throw DataError(path + ": tensor directory mismatch");
    for (std::size_t i = 0; i < m.params().tensors.size(); ++i) {
        const auto& t = m.params().tensors[i];
        if (jt[i].at("name").get<std::string>() != t.name ||
            jt[i].at("offset").get<std::size_t>() != t.offset ||
            jt[i].at("size").get<std::size_t>() != t.size) {
            throw DataError(path + ": tensor directory mismatch at '" + t.name + "'");
        }
    }
    f.read(reinterpret_cast<char*>(m.params().data.data()),
           static_cast<std::streamsize>(m.params().data.size() * sizeof(double)));
    if (!f) throw DataError(path + ": truncated tensor data");
    return m;
}

}  // namespace floodcast
