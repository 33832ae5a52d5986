"""Flood forecasting toolkit: stage QC, skill metrics, and inundation models.

The heavy lifting lives in the compiled extension; this package re-exports
the public operations. The extension sits inside the package when installed
and next to it on the build tree's PYTHONPATH during development.
"""

import importlib

try:
    _core = importlib.import_module("._floodcast", __name__)
except ImportError:
    _core = importlib.import_module("_floodcast")

__all__ = [
    "DataError",
    "NumericError",
    "cmal_nll",
    "cmal_quantile",
    "correct_decimal_errors",
    "dilate_extent",
    "extent_scores",
    "extent_to_height",
    "fill_gaps_linear",
    "flat_fill_extent",
    "learn_pixel_threshold",
    "make_valley_dem",
    "ndwi",
    "ndwi_wet",
    "nse",
    "persistent_nse",
    "predict_extent",
    "rmse",
    "route_linear_reservoir",
    "train_ridge",
    "train_thresholding",
    "wilcoxon_signed_rank",
]

for _name in __all__:
    globals()[_name] = getattr(_core, _name)
del _name, _core, importlib
