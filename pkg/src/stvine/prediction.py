"""Prediction at space-time targets and the cross-validation harness.

Predictive mean and quantiles follow the inverse-transform construction:
the conditional density of the center's uniform value given its neighbors
is normalized by Gauss-Legendre quadrature, the mean integrates the
marginal quantile function against it, and quantile estimates invert the
normalized conditional CDF by bisection before mapping through the
marginal quantile function.

All targets of one held-out station share their neighbor geometry, so the
expensive vine-density evaluation is batched per station.
"""

import csv
import io
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate

from . import kriging, marginals, vine
from .errors import (DegenerateDensityError, InsufficientDataError, SchemaError,
                     StvineError)
from .panel import DEPENDENT, VARIABLES
from .spatial import build_neighborhood
from .vine import gauss_legendre_01, log_density_matrix, neighbor_slots

_MEAN_CLIP = 1e-6
_CDF_GRID = 513
_BISECT_TOL = 1e-8


@dataclass
class Prediction:
    station: str
    time: int
    mean: float
    quantiles: dict
    interval_95: tuple


class StationLaws:
    """Normalized conditional laws for every requested time of one target
    station, evaluated in one batched vine-density pass."""

    def __init__(self, model, upanel, lon, lat, station_id, t_indices,
                 nodes=None):
        cfg = model.config
        n = nodes if nodes is not None else cfg.quad_nodes
        self.t_indices = list(t_indices)
        nbsets = [build_neighborhood(upanel, lon, lat, t, cfg.d_spatial,
                                     cfg.dc_spatial, cfg.covariates,
                                     exclude_station=station_id,
                                     center_station=station_id)
                  for t in self.t_indices]
        slots = neighbor_slots(nbsets[0])
        values = np.array([[nb.value for nb in s.neighbors] for s in nbsets])
        self.gl_x, self.gl_w = gauss_legendre_01(n)
        self.grid = np.linspace(1e-9, 1.0 - 1e-9, _CDF_GRID)
        pts = np.concatenate([self.gl_x, self.grid])
        logd = log_density_matrix(model, pts, values, slots)
        f = np.exp(logd)
        self.norms = f[:, :n] @ self.gl_w
        bad = ~np.isfinite(self.norms) | (self.norms < 1e-12)
        if np.any(bad):
            raise DegenerateDensityError(
                f"{int(bad.sum())} of {len(self.t_indices)} conditional "
                "densities degenerate")
        self.gl_f = f[:, :n] / self.norms[:, None]
        dens = f[:, n:] / self.norms[:, None]
        cdf = integrate.cumulative_simpson(dens, x=self.grid, axis=1, initial=0.0)
        self.cdfs = np.clip(cdf / cdf[:, -1:], 0.0, 1.0)

    def mean_of(self, row, quantile_fn):
        u = np.clip(self.gl_x, _MEAN_CLIP, 1.0 - _MEAN_CLIP)
        return float(self.gl_w @ (quantile_fn(u) * self.gl_f[row]))

    def cdf(self, row, u):
        return np.interp(u, self.grid, self.cdfs[row])

    def quantile_u(self, row, ps):
        """Invert the conditional CDF by bisection to 1e-8 in u."""
        ps = np.atleast_1d(np.asarray(ps, dtype=np.float64))
        lo = np.zeros_like(ps)
        hi = np.ones_like(ps)
        while np.max(hi - lo) > _BISECT_TOL:
            mid = 0.5 * (lo + hi)
            below = self.cdf(row, mid) < ps
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)


class ConditionalLaw(StationLaws):
    """Single-target convenience wrapper over the batched law."""

    def __init__(self, model, nbset, nodes=None):
        cfg = model.config
        n = nodes if nodes is not None else cfg.quad_nodes
        self.t_indices = [nbset.center_time_index]
        slots = neighbor_slots(nbset)
        values = np.array([[nb.value for nb in nbset.neighbors]])
        self.gl_x, self.gl_w = gauss_legendre_01(n)
        self.grid = np.linspace(1e-9, 1.0 - 1e-9, _CDF_GRID)
        pts = np.concatenate([self.gl_x, self.grid])
        f = np.exp(log_density_matrix(model, pts, values, slots))
        self.norms = f[:, :n] @ self.gl_w
        if not np.isfinite(self.norms[0]) or self.norms[0] < 1e-12:
            raise DegenerateDensityError(
                f"conditional density normalizer {self.norms[0]} below tolerance")
        self.gl_f = f[:, :n] / self.norms[:, None]
        dens = f[:, n:] / self.norms[:, None]
        cdf = integrate.cumulative_simpson(dens, x=self.grid, axis=1, initial=0.0)
        self.cdfs = np.clip(cdf / cdf[:, -1:], 0.0, 1.0)


def conditional_density(model, u0, nbset, nodes=None):
    """Spec surface: normalized conditional density values at u0."""
    return vine.conditional_density(model, u0, nbset, nodes)


def _predictions_from_laws(laws, spec, station_id, times, quantile_ps):
    ps = sorted(set(quantile_ps) | {0.025, 0.975})
    out = []
    for row, time in enumerate(times):
        mean = laws.mean_of(
            row, lambda u: np.asarray(marginals.marginal_quantile(spec, u)))
        us = laws.quantile_u(row, np.array(ps))
        qs = {p: float(marginals.marginal_quantile(
            spec, float(np.clip(u, 1e-9, 1.0 - 1e-9)))) for p, u in zip(ps, us)}
        out.append(Prediction(station=station_id, time=int(time), mean=mean,
                              quantiles=qs,
                              interval_95=(qs[0.025], qs[0.975])))
    return out


def predict_station(model, upanel, lon, lat, station_id, t_indices,
                    quantile_ps=(0.025, 0.5, 0.975), nodes=None):
    """Predictions at several times of one station in one batched pass."""
    spec = model.marginal_table.spec(station_id, DEPENDENT)
    laws = StationLaws(model, upanel, lon, lat, station_id, t_indices, nodes)
    times = [upanel.times[t] for t in laws.t_indices]
    return _predictions_from_laws(laws, spec, station_id, times, quantile_ps)


def predict(model, upanel, lon, lat, station_id, t_idx,
            quantile_ps=(0.025, 0.5, 0.975), nodes=None):
    """Mean, quantiles, and 95% interval at one (station, time) target.

    Neighbors are drawn from ``upanel`` (the training panel); the target's
    own station is excluded if present.  The target's marginal comes from
    the model's marginal table.
    """
    return predict_station(model, upanel, lon, lat, station_id, [t_idx],
                           quantile_ps, nodes)[0]


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def metrics(observed, predicted):
    """(MAE, RMSE) of aligned observation/prediction lists."""
    observed = np.asarray(observed, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    if observed.shape != predicted.shape:
        raise SchemaError(
            f"length mismatch: {observed.shape} vs {predicted.shape}")
    if observed.size == 0:
        raise SchemaError("metrics need at least one pair")
    err = observed - predicted
    return float(np.mean(np.abs(err))), float(np.sqrt(np.mean(err ** 2)))


def extreme_subset(observed, fraction=0.05):
    """Indices of the ceil(n * fraction) largest values; cutoff ties break
    by index order."""
    observed = np.asarray(observed, dtype=np.float64)
    if not (0.0 < fraction < 1.0):
        raise SchemaError("fraction must lie in (0, 1)")
    m = int(np.ceil(observed.size * fraction))
    order = np.argsort(-observed, kind="stable")
    return np.sort(order[:m])


def interval_coverage(predictions, observed):
    """How many observations fall inside their 95% prediction intervals."""
    observed = np.asarray(observed, dtype=np.float64)
    if len(predictions) != observed.size:
        raise SchemaError("predictions and observations must align")
    count = 0
    for pred, obs in zip(predictions, observed):
        lo, hi = pred.interval_95
        if lo <= obs <= hi:
            count += 1
    pct = 100.0 * count / observed.size if observed.size else 0.0
    return count, pct


# ---------------------------------------------------------------------------
# cross-validation
# ---------------------------------------------------------------------------

@dataclass
class FoldResult:
    model_kind: str
    marginal: str
    fold: int
    mae: float
    rmse: float
    mae_ext: float
    rmse_ext: float
    cov_n: int
    cov_pct: float
    n_targets: int


@dataclass
class EvalReport:
    rows: list
    targets: list  # (station, time, observed, mean, q025, q975)
    family_rows: list = None  # (model, fold, group, lag, bin, family, rotation)

    def families_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "fold", "group", "lag", "bin", "family", "rotation"])
        for row in self.family_rows or []:
            w.writerow(row)
        return buf.getvalue()

    def aggregate(self):
        """Across-fold means of every metric column."""
        out = {}
        for field in ("mae", "rmse", "mae_ext", "rmse_ext", "cov_pct"):
            out[field] = float(np.mean([getattr(r, field) for r in self.rows]))
        out["cov_n"] = int(np.sum([r.cov_n for r in self.rows]))
        out["n_targets"] = int(np.sum([r.n_targets for r in self.rows]))
        return out

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "marginal", "fold", "mae", "rmse", "mae_ext",
                    "rmse_ext", "cov_n", "cov_pct"])
        for r in self.rows:
            w.writerow([r.model_kind, r.marginal, r.fold, repr(r.mae),
                        repr(r.rmse), repr(r.mae_ext), repr(r.rmse_ext),
                        r.cov_n, repr(r.cov_pct)])
        return buf.getvalue()

    def targets_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["station", "time", "observed", "mean", "q025", "q975"])
        for row in self.targets:
            w.writerow([row[0], row[1]] + [repr(float(x)) for x in row[2:]])
        return buf.getvalue()

    def summary(self):
        """One table row per model: overall metrics with the extreme-value
        subset in parentheses, shaped like the usual benchmark tables."""
        agg = self.aggregate()
        kind = self.rows[0].model_kind if self.rows else "-"
        marg = self.rows[0].marginal if self.rows else "-"
        header = (f"{'model':<14} {'marginal':<8} {'MAE (extreme)':>18} "
                  f"{'RMSE (extreme)':>18} {'95% coverage':>18}")
        line = (f"{kind:<14} {marg:<8} "
                f"{agg['mae']:>9.2f} ({agg['mae_ext']:.2f}) "
                f"{agg['rmse']:>9.2f} ({agg['rmse_ext']:.2f}) "
                f"{agg['cov_n']:>7d} ({agg['cov_pct']:.2f}%)")
        return header + "\n" + line


def assign_folds(n_stations, n_folds, seed):
    """Seeded station shuffle split into nearly equal folds."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_stations)
    return [np.sort(chunk) for chunk in np.array_split(perm, n_folds)]


def ds_bin_edges(dists, n_bins):
    iu, ju = np.triu_indices(dists.shape[0], k=1)
    return np.linspace(0.0, float(dists[iu, ju].max()), n_bins + 1)


def _append_fold(preds, obs_list, kind, marginal, fold, rows, targets):
    obs = np.asarray(obs_list)
    means = np.array([p.mean for p in preds])
    mae, rmse = metrics(obs, means)
    ext = extreme_subset(obs, 0.05)
    mae_e, rmse_e = metrics(obs[ext], means[ext])
    cov_n, cov_pct = interval_coverage(preds, obs)
    rows.append(FoldResult(kind, marginal, fold, mae, rmse, mae_e, rmse_e,
                           cov_n, cov_pct, obs.size))
    for p, o in zip(preds, obs_list):
        targets.append((p.station, p.time, o, p.mean,
                        p.interval_95[0], p.interval_95[1]))


def _krige_fold(ds, train_idx, test_idx, config, fold, rows, targets):
    """Universal-kriging baseline on one fold; per-slice variogram selection."""
    dists = ds.distances_km()
    dep = VARIABLES.index(DEPENDENT)
    cov_idx = [VARIABLES.index(v) for v in VARIABLES[1:]]
    sub_d = dists[np.ix_(train_idx, train_idx)]
    edges = ds_bin_edges(sub_d, config.n_bins)
    preds, obs_list = [], []
    for t_idx in range(1, ds.n_times):
        vals = ds.values[dep, train_idx, t_idx]
        try:
            vg = kriging.fit_variogram_on_bins(sub_d, vals, edges,
                                               seed=config.seed,
                                               min_bins=min(5, config.n_bins))
        except StvineError:
            sill = max(float(np.var(vals)), 1e-12)
            vg = kriging.VariogramSpec("exponential", 0.0, sill,
                                       max(float(dists.max()) / 2.0, 1e-6))
        drift_obs = ds.values[cov_idx, :, t_idx][:, train_idx].T
        for si in test_idx:
            drift_t = ds.values[cov_idx, si, t_idx]
            w, lam = kriging.krige_weights(sub_d, dists[train_idx, si], vg,
                                           drift_obs, drift_t)
            pred = float(w @ vals)
            gamma_vec = kriging.variogram_value(vg, dists[train_idx, si])
            f_t = np.concatenate([[1.0], drift_t])
            var = max(float(w @ gamma_vec + lam @ f_t), 0.0)
            half = 1.96 * np.sqrt(var)
            p = Prediction(station=ds.stations[si].id, time=int(ds.times[t_idx]),
                           mean=pred, quantiles={},
                           interval_95=(pred - half, pred + half))
            preds.append(p)
            obs_list.append(float(ds.values[dep, si, t_idx]))
    _append_fold(preds, obs_list, "kriging", config.marginal, fold, rows, targets)


def cross_validate(ds, config, model_kind=None):
    """Station-partitioned k-fold CV of one model kind.

    Folds hold out whole stations; marginals are fitted once on the full
    panel (the transform layer), copula structure is refitted per fold on
    the training stations, and targets are the held-out station-times with
    a lag-1 history.
    """
    cfg = config if model_kind is None else replace(config, model_kind=model_kind)
    cfg = cfg.resolved()
    if ds.n_stations < cfg.cv_folds:
        raise InsufficientDataError(
            f"{ds.n_stations} stations cannot fill {cfg.cv_folds} folds")
    folds = assign_folds(ds.n_stations, cfg.cv_folds, cfg.seed)
    rows, targets, family_rows = [], [], []

    table = None
    upanel = None
    if cfg.model_kind != "kriging":
        table = marginals.fit_marginal_table(ds, cfg.marginal)
        upanel = marginals.pit_transform(ds, table)

    for fold, test_idx in enumerate(folds):
        if len(test_idx) == 0:
            warnings.warn(f"fold {fold} is empty; skipped", RuntimeWarning)
            continue
        test_set = set(int(i) for i in test_idx)
        train_idx = np.array([i for i in range(ds.n_stations)
                              if i not in test_set])
        if cfg.model_kind == "kriging":
            _krige_fold(ds, train_idx, test_idx, cfg, fold, rows, targets)
            continue
        train_u = upanel.subset_stations(train_idx)
        model = vine.fit_vine(train_u, table, cfg)
        for group in ["dep"] + sorted(model.st_cov):
            st_cop = model.tree1_copula(group)
            for li, lag in enumerate(st_cop.poly.lags):
                for b, choice in enumerate(st_cop.choices[li]):
                    family_rows.append((cfg.model_kind, fold, group, lag, b,
                                        choice.family, choice.rotation))
        preds, obs_list = [], []
        t_indices = list(range(1, ds.n_times))
        for si in test_idx:
            st = ds.stations[si]
            try:
                sp = predict_station(model, train_u, st.lon, st.lat, st.id,
                                     t_indices)
            except DegenerateDensityError:
                continue
            preds.extend(sp)
            obs_list.extend(float(ds.values[0, si, t]) for t in t_indices)
        if not preds:
            warnings.warn(f"fold {fold}: no predictable targets; skipped",
                          RuntimeWarning)
            continue
        _append_fold(preds, obs_list, cfg.model_kind, cfg.marginal, fold,
                     rows, targets)
    return EvalReport(rows=rows, targets=targets, family_rows=family_rows)
