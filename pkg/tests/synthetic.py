"""Synthetic panel generators shared across the test suite.

The space-time generator draws a latent Gaussian copula field whose
pairwise lag-0 Kendall's tau equals a prescribed tau(h) curve exactly
(elliptical tau identity), evolves it with an AR(1) in time, and pushes
the uniforms through skewed Gumbel marginals.  Covariate fields mix in the
dependent field so cross-variable dependence is present.
"""

import numpy as np
from scipy.special import ndtr

from stvine.marginals import MarginalSpec, marginal_quantile
from stvine.panel import PanelDataset, Station, pairwise_distances_km

TAU_SCALE = 0.6
TAU_RANGE_KM = 100.0


def tau_curve(h):
    """The generator's lag-0 Kendall's tau as a function of distance."""
    return TAU_SCALE * np.exp(-np.asarray(h, dtype=float) / TAU_RANGE_KM)


def station_grid(n_stations, rng, extent_deg=2.0):
    lon = rng.uniform(0.0, extent_deg, n_stations)
    lat = rng.uniform(36.0, 36.0 + extent_deg, n_stations)
    return [Station(f"s{i:03d}", float(lon[i]), float(lat[i]))
            for i in range(n_stations)]


def _nearest_correlation(mat):
    w, v = np.linalg.eigh(mat)
    fixed = (v * np.maximum(w, 1e-8)) @ v.T
    d = np.sqrt(np.diag(fixed))
    return fixed / np.outer(d, d)


def latent_field(stations, n_times, rng, phi=0.5):
    """AR(1)-in-time Gaussian field with exact tau_curve lag-0 dependence."""
    dists = pairwise_distances_km(stations)
    rho = np.sin(np.pi * tau_curve(dists) / 2.0)
    np.fill_diagonal(rho, 1.0)
    rho = _nearest_correlation(rho)
    chol = np.linalg.cholesky(rho)
    s = len(stations)
    g = np.empty((s, n_times))
    g[:, 0] = chol @ rng.standard_normal(s)
    for t in range(1, n_times):
        g[:, t] = phi * g[:, t - 1] + np.sqrt(1.0 - phi * phi) * (
            chol @ rng.standard_normal(s))
    return g


GUMBEL_PARAMS = {
    "pm10": MarginalSpec("gumbel", 35.0, 14.0),
    "pm25": MarginalSpec("gumbel", 20.0, 9.0),
    "co": MarginalSpec("gumbel", 0.42, 0.12),
}


def synthetic_panel(n_stations=12, n_times=24, seed=1, phi=0.5,
                    cov_mix=(0.8, 0.6)):
    """Complete skewed panel with spatially decaying dependence."""
    rng = np.random.default_rng(seed)
    stations = station_grid(n_stations, rng)
    g0 = latent_field(stations, n_times, rng, phi)
    gv = latent_field(stations, n_times, rng, phi)
    gw = latent_field(stations, n_times, rng, phi)
    a_v, a_w = cov_mix
    fields = {
        "pm10": ndtr(g0),
        "pm25": ndtr(a_v * g0 + np.sqrt(1 - a_v ** 2) * gv),
        "co": ndtr(a_w * g0 + np.sqrt(1 - a_w ** 2) * gw),
    }
    values = np.empty((3, n_stations, n_times))
    for vi, var in enumerate(("pm10", "pm25", "co")):
        u = np.clip(fields[var], 1e-12, 1 - 1e-12)
        values[vi] = np.maximum(marginal_quantile(GUMBEL_PARAMS[var], u), 0.0)
    return PanelDataset(stations=stations, times=np.arange(1, n_times + 1),
                        values=values)


def iid_uniform_panel(n_stations=10, n_times=30, seed=0):
    """Panel whose PIT values are independent uniforms (noise floor)."""
    rng = np.random.default_rng(seed)
    stations = station_grid(n_stations, rng)
    values = np.empty((3, n_stations, n_times))
    for vi, var in enumerate(("pm10", "pm25", "co")):
        u = rng.uniform(1e-6, 1 - 1e-6, size=(n_stations, n_times))
        values[vi] = np.maximum(marginal_quantile(GUMBEL_PARAMS[var], u), 0.0)
    return PanelDataset(stations=stations, times=np.arange(1, n_times + 1),
                        values=values)
