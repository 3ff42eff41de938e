"""Variogram fitting and ordinary/universal kriging.

Used twice: inside data ingestion (per-time-slice imputation with
spherical/exponential candidates) and as the comparison model in the
cross-validation harness (adding the gaussian model to the candidate set).

Variogram models use the effective-range convention: the exponential and
gaussian curves reach ~95% of their sill at h = range.
"""

import csv
import io
from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize

from .errors import DomainError, FitError, NumericError

VARIOGRAM_MODELS = ("spherical", "exponential", "gaussian")
IMPUTATION_MODELS = ("spherical", "exponential")
_RIDGE = 1e-8


@dataclass(frozen=True)
class VariogramSpec:
    model: str
    nugget: float
    sill: float
    range_km: float
    sse: float = np.nan

    def __post_init__(self):
        if self.model not in VARIOGRAM_MODELS:
            raise DomainError(f"unknown variogram model {self.model!r}")
        if self.nugget < 0.0 or self.sill < self.nugget or self.range_km <= 0.0:
            raise DomainError(
                f"invalid variogram parameters nugget={self.nugget} "
                f"sill={self.sill} range={self.range_km}")
        for name in ("nugget", "sill", "range_km", "sse"):
            object.__setattr__(self, name, float(getattr(self, name)))


def variogram_value(spec, h):
    """Semivariance gamma(h) of a fitted model."""
    h = np.asarray(h, dtype=np.float64)
    psill = spec.sill - spec.nugget
    a = spec.range_km
    if spec.model == "spherical":
        hr = np.minimum(h / a, 1.0)
        gamma = psill * (1.5 * hr - 0.5 * hr ** 3)
    elif spec.model == "exponential":
        gamma = psill * (1.0 - np.exp(-3.0 * h / a))
    else:
        gamma = psill * (1.0 - np.exp(-3.0 * (h / a) ** 2))
    out = np.where(h > 0.0, spec.nugget + gamma, 0.0)
    return out if out.ndim else float(out)


def empirical_semivariogram(dists, values, edges):
    """Per-bin mean distance, semivariance, and pair count.

    ``dists`` is the full pairwise distance matrix of the observed
    stations and ``values`` their (finite) observations.
    """
    values = np.asarray(values, dtype=np.float64)
    iu, ju = np.triu_indices(values.size, k=1)
    d = dists[iu, ju]
    sq = 0.5 * (values[iu] - values[ju]) ** 2
    idx = np.minimum(np.searchsorted(edges[1:], d, side="left"), len(edges) - 2)
    n_bins = len(edges) - 1
    h_mean = np.full(n_bins, np.nan)
    gamma = np.full(n_bins, np.nan)
    counts = np.zeros(n_bins, dtype=np.int64)
    for b in range(n_bins):
        sel = idx == b
        counts[b] = int(sel.sum())
        if counts[b]:
            h_mean[b] = d[sel].mean()
            gamma[b] = sq[sel].mean()
    return h_mean, gamma, counts


def _fit_one_model(model, h, gamma, seed):
    """Least-squares fit of (nugget, sill, range) for one model by
    multi-start simplex over log-parameters."""
    rng = np.random.default_rng(seed)
    h_scale = float(np.max(h))
    g_scale = float(np.max(gamma)) if np.max(gamma) > 0 else 1.0

    def unpack(x):
        # clamp log-parameters so wandering simplex steps stay finite
        xc = np.clip(x, -46.0, 46.0)
        nugget = np.exp(xc[0])
        psill = np.exp(xc[1])
        rng_km = np.exp(xc[2])
        return VariogramSpec(model, nugget, nugget + psill, rng_km)

    def sse(x):
        spec = unpack(x)
        val = float(np.sum((variogram_value(spec, h) - gamma) ** 2))
        return val if np.isfinite(val) else np.inf

    best = None
    base = np.log([max(g_scale * 1e-6, 1e-12), max(g_scale, 1e-12),
                   max(h_scale / 2.0, 1e-6)])
    starts = [base]
    for _ in range(4):
        starts.append(base + rng.normal(scale=[2.0, 0.7, 1.0]))
    for x0 in starts:
        res = optimize.minimize(sse, x0, method="Nelder-Mead",
                                options={"xatol": 1e-6, "fatol": 1e-10,
                                         "maxiter": 400})
        if best is None or res.fun < best.fun:
            best = res
    spec = unpack(best.x)
    return replace(spec, sse=float(best.fun))


def fit_variogram_on_bins(dists, values, edges, candidates=VARIOGRAM_MODELS,
                          seed=0, min_bins=5):
    """Fit each candidate to the empirical semivariogram; keep the min-SSE one."""
    h_mean, gamma, counts = empirical_semivariogram(dists, values, edges)
    sel = counts > 0
    if int(sel.sum()) < min_bins:
        raise FitError(f"only {int(sel.sum())} nonempty variogram bins, "
                       f"need {min_bins}")
    h, g = h_mean[sel], gamma[sel]
    best = None
    for model in candidates:
        try:
            spec = _fit_one_model(model, h, g, seed)
        except (FloatingPointError, ValueError):
            continue
        if best is None or spec.sse < best.sse:
            best = spec
    if best is None:
        raise FitError("every variogram candidate failed to fit")
    return best


def fit_variogram(dists, values, bins, candidates=VARIOGRAM_MODELS, seed=0):
    """Spec-surface wrapper taking a BinPartition from the spatial module."""
    return fit_variogram_on_bins(dists, values, bins.edges, candidates, seed)


def _solve_with_ridge(a, b):
    try:
        sol = np.linalg.solve(a, b)
        if np.all(np.isfinite(sol)):
            return sol
    except np.linalg.LinAlgError:
        pass
    ridge = a + _RIDGE * np.eye(a.shape[0])
    try:
        sol = np.linalg.solve(ridge, b)
    except np.linalg.LinAlgError:
        raise NumericError("kriging system singular even after ridge retry")
    if not np.all(np.isfinite(sol)):
        raise NumericError("kriging system produced non-finite weights")
    return sol


def krige_weights(dists_obs, dists_target, vg, drift_obs=None, drift_target=None):
    """Kriging weights and Lagrange multipliers for one target.

    ``drift_obs``/``drift_target`` switch to universal kriging with the
    given drift columns (without the intercept, which is always included).
    """
    n = dists_obs.shape[0]
    gamma_mat = variogram_value(vg, dists_obs)
    np.fill_diagonal(gamma_mat, 0.0)
    gamma_vec = np.atleast_1d(variogram_value(vg, dists_target))
    if drift_obs is None:
        f_obs = np.ones((n, 1))
        f_tgt = np.ones(1)
    else:
        drift_obs = np.asarray(drift_obs, dtype=np.float64)
        f_obs = np.column_stack([np.ones(n), drift_obs])
        f_tgt = np.concatenate([[1.0], np.asarray(drift_target, np.float64).ravel()])
    m = f_obs.shape[1]
    a = np.zeros((n + m, n + m))
    a[:n, :n] = gamma_mat
    a[:n, n:] = f_obs
    a[n:, :n] = f_obs.T
    b = np.concatenate([gamma_vec, f_tgt])
    sol = _solve_with_ridge(a, b)
    return sol[:n], sol[n:]


def krige_predict(dists_obs, dists_target, values, vg, mode="ordinary",
                  drift_obs=None, drift_target=None):
    """BLUP at one target from the slice observations.

    ``mode='ordinary'`` enforces the constant-mean constraint; ``'universal'``
    adds a linear drift in the covariates supplied via ``drift_obs`` (one
    row per observed station) and ``drift_target``.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size < 3:
        raise FitError(f"kriging needs at least 3 observations, got {values.size}")
    if mode == "ordinary":
        weights, _ = krige_weights(dists_obs, dists_target, vg)
    elif mode == "universal":
        if drift_obs is None or drift_target is None:
            raise DomainError("universal kriging requires drift values")
        weights, _ = krige_weights(dists_obs, dists_target, vg, drift_obs,
                                   drift_target)
    else:
        raise DomainError(f"unknown kriging mode {mode!r}")
    return float(weights @ values)


def variogram_csv_rows(specs_by_time):
    """CSV export `time,model,nugget,sill,range,sse`."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", "model", "nugget", "sill", "range", "sse"])
    for t, spec in specs_by_time:
        w.writerow([t, spec.model, repr(spec.nugget), repr(spec.sill),
                    repr(spec.range_km), repr(spec.sse)])
    return buf.getvalue()


def gaussian_vine_config(config):
    """Restrict a run configuration to Gaussian copulas at every tree level."""
    return replace(config, candidates=("gaussian",), model_kind="gaussian-vine")
