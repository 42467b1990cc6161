"""Python bindings for the heywood simulation library."""

import json as _json

from ._core import (
    HeywoodError,
    bivariate_normal_cdf,
    delta_to_theta,
    fit_2pl,
    fit_one_factor,
    gauss_hermite,
    simulate,
    std_normal_cdf,
    std_normal_quantile,
    table1_covariance,
    tetrachoric,
    theta_to_delta,
)
from ._core import run_study_json as _run_study_json

__version__ = "0.1.0"


def run_study(replications=100, seed=20210101, n=200, tau=0.0, threads=0):
    """Run the simulation study and return the report as a dict."""
    return _json.loads(_run_study_json(replications, seed, n, tau, threads))


__all__ = [
    "HeywoodError",
    "bivariate_normal_cdf",
    "delta_to_theta",
    "fit_2pl",
    "fit_one_factor",
    "gauss_hermite",
    "run_study",
    "simulate",
    "std_normal_cdf",
    "std_normal_quantile",
    "table1_covariance",
    "tetrachoric",
    "theta_to_delta",
]
