"""Local statistical forecasters run with fixed default hyperparameters."""

from .arima import (
    ArimaError,
    ArimaModel,
    ArimaSpec,
    difference,
    fit_arima,
    forecast_arima,
    inverse_difference,
    make_invertible,
    pacf,
    psi_weights,
)
from .ets import EtsModel, fit_ets, fit_forecast_ets, forecast_ets
from .npts import NptsSpec, forecast_npts, kernel_density, npts_weights, sample_npts_paths
from .prophet import (
    ProphetError,
    ProphetModel,
    ProphetSpec,
    fit_forecast_prophet,
    fit_prophet,
    logistic_trend,
)

__all__ = [
    "ArimaError",
    "ArimaModel",
    "ArimaSpec",
    "difference",
    "fit_arima",
    "forecast_arima",
    "inverse_difference",
    "make_invertible",
    "pacf",
    "psi_weights",
    "EtsModel",
    "fit_ets",
    "fit_forecast_ets",
    "forecast_ets",
    "NptsSpec",
    "forecast_npts",
    "kernel_density",
    "npts_weights",
    "sample_npts_paths",
    "ProphetError",
    "ProphetModel",
    "ProphetSpec",
    "fit_forecast_prophet",
    "fit_prophet",
    "logistic_trend",
]
