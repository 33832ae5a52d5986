// Python bindings for the main operations: QC, metrics, CMAL, the two
// inundation models, and the synthetic-watershed generators. Rasters cross
// the boundary as 2-D float64 numpy arrays with NaN as nodata.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "floodcast/cmal.hpp"
#include "floodcast/evalkit.hpp"
#include "floodcast/hydrodata.hpp"
#include "floodcast/linear.hpp"
#include "floodcast/manifold.hpp"
#include "floodcast/raster.hpp"
#include "floodcast/synthdata.hpp"
#include "floodcast/thresholding.hpp"

namespace py = pybind11;
using namespace floodcast;

namespace {

Raster raster_from_array(const py::array_t<double>& arr, double cell_size = 16.0) {
    auto buf = arr.request();
    if (buf.ndim != 2) throw DataError("expected a 2-D array");
    Raster g(static_cast<int>(buf.shape[0]), static_cast<int>(buf.shape[1]), 0.0, cell_size);
    auto view = arr.unchecked<2>();
    for (int r = 0; r < g.rows; ++r) {
        for (int c = 0; c < g.cols; ++c) g.at(r, c) = view(r, c);
    }
    return g;
}

py::array_t<double> array_from_raster(const Raster& g) {
    py::array_t<double> arr({g.rows, g.cols});
    auto view = arr.mutable_unchecked<2>();
    for (int r = 0; r < g.rows; ++r) {
        for (int c = 0; c < g.cols; ++c) view(r, c) = g.at(r, c);
    }
    return arr;
}

StageSeries series_from_vector(const std::vector<double>& values, double step_h) {
    StageSeries s;
    s.gauge_id = "py";
    s.t0 = 0;
    s.step_s = static_cast<std::int64_t>(step_h * 3600.0);
    s.values = values;
    return s;
}

CmalDist dist_from_components(const std::vector<std::array<double, 4>>& comps) {
    CmalDist d;
    for (const auto& c : comps) d.components.push_back({c[0], c[1], c[2], c[3]});
    d.validate();
    return d;
}

}  // namespace

PYBIND11_MODULE(_floodcast, m) {
    m.doc() = "flood forecasting core: QC, skill metrics, inundation models";

    py::register_exception<DataError>(m, "DataError");
    py::register_exception<NumericError>(m, "NumericError");

    // ---- QC ----
    m.def(
        "correct_decimal_errors",
        [](const std::vector<double>& values, double window_h, double k, double step_h) {
            auto [fixed, rep] = correct_decimal_errors(series_from_vector(values, step_h), window_h, k);
            return py::make_tuple(fixed.values, rep.count(QcAction::kCorrected));
        },
        py::arg("values"), py::arg("window_h") = 12.0, py::arg("k") = 6.0, py::arg("step_h") = 1.0,
        "Fix order-of-magnitude stage entry errors; returns (values, n_corrected).");
    m.def(
        "fill_gaps_linear",
        [](const std::vector<double>& values, double max_gap_h, double step_h) {
            return fill_gaps_linear(series_from_vector(values, step_h), max_gap_h).values;
        },
        py::arg("values"), py::arg("max_gap_h") = 6.0, py::arg("step_h") = 1.0,
        "Interpolate interior NaN runs up to max_gap_h.");
    m.def("ndwi", &ndwi, py::arg("green"), py::arg("nir"));
    m.def("ndwi_wet", &ndwi_wet, py::arg("green"), py::arg("nir"));

    // ---- metrics ----
    m.def(
        "nse",
        [](const std::vector<double>& obs, const std::vector<double>& sim) {
            return nse({obs, sim, {}});
        },
        py::arg("observed"), py::arg("computed"));
    m.def(
        "persistent_nse",
        [](const std::vector<double>& obs, const std::vector<double>& sim, const std::vector<double>& pers) {
            return persistent_nse({obs, sim, pers});
        },
        py::arg("observed"), py::arg("computed"), py::arg("persistence"));
    m.def(
        "rmse",
        [](const std::vector<double>& obs, const std::vector<double>& sim) {
            return rmse({obs, sim, {}});
        },
        py::arg("observed"), py::arg("computed"));
    m.def(
        "extent_scores",
        [](const py::array_t<double>& pred, const py::array_t<double>& truth) {
            ExtentScores s = extent_scores(raster_from_array(pred), raster_from_array(truth));
            return py::make_tuple(s.precision, s.recall, s.f1);
        },
        py::arg("pred"), py::arg("truth"), "Returns (precision, recall, f1) over valid pixels.");
    m.def(
        "wilcoxon_signed_rank",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            WilcoxonResult r = wilcoxon_signed_rank(a, b);
            return py::make_tuple(r.statistic, r.p_two_sided);
        },
        py::arg("a"), py::arg("b"), "Paired test; returns (W, two-sided p).");

    // ---- CMAL ----
    m.def(
        "cmal_nll",
        [](const std::vector<std::array<double, 4>>& comps, double y) {
            return cmal_nll(dist_from_components(comps), y);
        },
        py::arg("components"), py::arg("y"),
        "components: list of (weight, loc, scale, tau) tuples.");
    m.def(
        "cmal_quantile",
        [](const std::vector<std::array<double, 4>>& comps, double q) {
            return cmal_quantile(dist_from_components(comps), q);
        },
        py::arg("components"), py::arg("q"));

    // ---- linear stage model ----
    m.def(
        "train_ridge",
        [](const py::array_t<double>& x, const std::vector<double>& y, double l2_lambda) {
            auto view = x.unchecked<2>();
            if (static_cast<std::size_t>(view.shape(0)) != y.size()) {
                throw DataError("row count mismatch");
            }
            std::vector<DesignRow> rows(y.size());
            for (py::ssize_t i = 0; i < view.shape(0); ++i) {
                rows[static_cast<std::size_t>(i)].target = y[static_cast<std::size_t>(i)];
                for (py::ssize_t j = 0; j < view.shape(1); ++j) {
                    rows[static_cast<std::size_t>(i)].features.push_back(view(i, j));
                }
            }
            LinearStageModel model = train_linear(rows, l2_lambda);
            return py::make_tuple(model.weights, model.intercept);
        },
        py::arg("features"), py::arg("targets"), py::arg("l2_lambda"),
        "Closed-form ridge fit; returns (weights, intercept).");

    // ---- thresholding model ----
    m.def(
        "learn_pixel_threshold",
        [](const std::vector<std::pair<double, bool>>& events, double minimal_ratio) {
            std::vector<PixelEvent> px;
            for (auto [stage, wet] : events) px.push_back({stage, wet});
            return learn_pixel_threshold(px, minimal_ratio);
        },
        py::arg("events"), py::arg("minimal_ratio"),
        "events: list of (stage, wet) pairs; +inf/-inf sentinels come back as such.");

    py::class_<PixelThresholdMap>(m, "PixelThresholdMap")
        .def_property_readonly("thresholds",
                               [](const PixelThresholdMap& t) { return array_from_raster(t.thresholds); })
        .def_readonly("max_train_stage_m", &PixelThresholdMap::max_train_stage_m)
        .def_readonly("minimal_ratio", &PixelThresholdMap::minimal_ratio);

    m.def(
        "train_thresholding",
        [](const std::vector<std::pair<double, py::array_t<double>>>& events, double minimal_ratio,
           double dilation_slope) {
            EventCatalog cat;
            cat.gauge_id = "py";
            for (const auto& [stage, arr] : events) {
                cat.events.push_back({stage, raster_from_array(arr), 0});
            }
            return train_thresholding(cat, minimal_ratio, dilation_slope);
        },
        py::arg("events"), py::arg("minimal_ratio") = 1.0, py::arg("dilation_slope_px_per_m") = 2.0,
        "events: list of (stage, extent array) pairs.");
    m.def(
        "predict_extent",
        [](const PixelThresholdMap& model, double stage) {
            return array_from_raster(predict_extent(model, stage));
        },
        py::arg("model"), py::arg("stage_m"));
    m.def(
        "dilate_extent",
        [](const py::array_t<double>& extent, int radius_px) {
            return array_from_raster(dilate_extent(raster_from_array(extent), radius_px));
        },
        py::arg("extent"), py::arg("radius_px"));

    // ---- manifold model ----
    m.def(
        "extent_to_height",
        [](const py::array_t<double>& dem, const py::array_t<double>& extent, int factor) {
            CoarseHeightMap hm = extent_to_height(raster_from_array(dem), raster_from_array(extent), factor);
            py::array_t<double> out({hm.rows, hm.cols});
            auto view = out.mutable_unchecked<2>();
            for (int r = 0; r < hm.rows; ++r) {
                for (int c = 0; c < hm.cols; ++c) view(r, c) = hm.at(r, c);
            }
            return out;
        },
        py::arg("dem"), py::arg("extent"), py::arg("factor") = 32,
        "Water surface reconstruction on the coarse grid; NaN outside the wet region.");

    // ---- synthetic watershed ----
    m.def(
        "make_valley_dem",
        [](int rows, int cols, double channel_depth, double bank_slope, double noise_amp,
           std::uint64_t seed) {
            return array_from_raster(make_valley_dem(rows, cols, channel_depth, bank_slope, noise_amp, seed));
        },
        py::arg("rows"), py::arg("cols"), py::arg("channel_depth") = 2.0, py::arg("bank_slope") = 0.004,
        py::arg("noise_amp") = 0.0, py::arg("seed") = 1);
    m.def(
        "flat_fill_extent",
        [](const py::array_t<double>& dem, double stage, std::pair<int, int> seed_pixel) {
            return array_from_raster(flat_fill_extent(raster_from_array(dem), stage, seed_pixel));
        },
        py::arg("dem"), py::arg("stage_m"), py::arg("seed_pixel"));
    m.def(
        "route_linear_reservoir",
        [](const std::vector<double>& precip_mm, double k_h, double gain, double base_stage,
           double step_h) {
            PrecipSeries p;
            p.t0 = 0;
            p.step_s = static_cast<std::int64_t>(step_h * 3600.0);
            p.values = precip_mm;
            return route_linear_reservoir(p, k_h, gain, base_stage).values;
        },
        py::arg("precip_mm"), py::arg("k_h"), py::arg("gain"), py::arg("base_stage_m"),
        py::arg("step_h") = 1.0);
}
