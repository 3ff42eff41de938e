"""Spatial binning, Kendall's-tau correlograms, tau-vs-distance polynomials,
the distance-interpolated bivariate spatio-temporal copula, and
spatio-temporal neighborhood construction.

The spatio-temporal copula mixes the per-bin copula densities linearly in
distance: below the first bin mean it equals the first bin's copula, between
consecutive bin means it is a convex combination of the two flanking bins'
copulas, across the final segment it fades into the independence density,
and beyond the last bin mean it is exactly 1.
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import copulas, kernels
from .copulas import BivariateCopulaSpec, INDEPENDENCE
from .errors import (BoundaryError, DomainError, FitError, InsufficientDataError,
                     RebinError, TauRangeError)
from .panel import COVARIATE_V, COVARIATE_W, DEPENDENT, VARIABLES, haversine_km

LAGS = (0, 1)
MIN_CELL_PAIRS = 30
TAU_CLIP = 0.99


# ---------------------------------------------------------------------------
# spatial bins
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BinPartition:
    """Equal-width distance bins with their per-bin mean pair distances."""

    edges: np.ndarray  # length n_bins + 1, starting at 0
    mean_distances: np.ndarray  # l_b per bin

    @property
    def n_bins(self):
        return int(self.mean_distances.size)

    @property
    def h_max(self):
        return float(self.edges[-1])

    def assign(self, dist):
        """Bin index of each distance; bin b covers (edge_b, edge_{b+1}]."""
        dist = np.asarray(dist, dtype=np.float64)
        idx = np.searchsorted(self.edges[1:], dist, side="left")
        return np.minimum(idx, self.n_bins - 1)


def make_bins(stations, n_bins):
    """Equal-width partition of [0, max pairwise distance]."""
    if n_bins < 1:
        raise DomainError("n_bins must be at least 1")
    lon = np.array([s.lon for s in stations])
    lat = np.array([s.lat for s in stations])
    iu, ju = np.triu_indices(len(stations), k=1)
    dists = haversine_km(lon[iu], lat[iu], lon[ju], lat[ju])
    if np.unique(dists).size < n_bins:
        raise InsufficientDataError(
            f"need at least {n_bins} distinct pairwise distances, "
            f"got {np.unique(dists).size}")
    edges = np.linspace(0.0, float(dists.max()), n_bins + 1)
    idx = np.minimum(np.searchsorted(edges[1:], dists, side="left"), n_bins - 1)
    means = np.full(n_bins, np.nan)
    for b in range(n_bins):
        sel = idx == b
        if not np.any(sel):
            raise RebinError(
                f"spatial bin {b} is empty; retry with fewer than {n_bins} bins")
        means[b] = dists[sel].mean()
    return BinPartition(edges=edges, mean_distances=means)


# ---------------------------------------------------------------------------
# correlogram
# ---------------------------------------------------------------------------

@dataclass
class Correlogram:
    """Pooled Kendall's tau per (lag, bin) with pooled pair counts."""

    taus: np.ndarray  # (n_lags, n_bins)
    counts: np.ndarray  # (n_lags, n_bins) int
    lags: tuple
    min_pairs: int = MIN_CELL_PAIRS

    def usable(self):
        return (self.counts >= self.min_pairs) & np.isfinite(self.taus)

    def to_csv(self, bins):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lag", "bin", "l_b", "tau", "pairs"])
        for li, lag in enumerate(self.lags):
            for b in range(self.taus.shape[1]):
                w.writerow([lag, b, repr(float(bins.mean_distances[b])),
                            repr(float(self.taus[li, b])), int(self.counts[li, b])])
        return buf.getvalue()


def _pair_arrays(upanel, lag, var_center, var_neighbor):
    """Ordered (center, neighbor) station index pairs and their pooled series.

    Lag 0 with matching variables uses each unordered pair once; every other
    combination uses ordered pairs, including the self-pair when the
    variables differ or the lag is positive (a station paired with its own
    past is a legitimate distance-0 neighbor).
    """
    s = upanel.n_stations
    xc = upanel.values[var_center]
    xn = upanel.values[var_neighbor]
    if lag == 0 and var_center == var_neighbor:
        iu, ju = np.triu_indices(s, k=1)
        return iu, ju, xc[iu, :], xn[ju, :]
    ii, jj = np.meshgrid(np.arange(s), np.arange(s), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    if lag == 0:
        return ii, jj, xc[ii, :], xn[jj, :]
    return ii, jj, xc[ii, lag:], xn[jj, :-lag]


def empirical_correlogram(upanel, bins, lags=LAGS, var_center=None,
                          var_neighbor=None, min_pairs=MIN_CELL_PAIRS):
    """Kendall's tau pooled over all station pairs per (bin, lag)."""
    vi = VARIABLES.index(var_center) if var_center else 0
    vj = VARIABLES.index(var_neighbor) if var_neighbor else vi
    if max(lags) >= upanel.n_times:
        raise InsufficientDataError("time axis too short for the requested lags")
    dists = upanel.distances_km()
    n_bins = bins.n_bins
    taus = np.full((len(lags), n_bins), np.nan)
    counts = np.zeros((len(lags), n_bins), dtype=np.int64)
    for li, lag in enumerate(lags):
        ii, jj, xs, ys = _pair_arrays(upanel, lag, vi, vj)
        bidx = bins.assign(dists[ii, jj])
        for b in range(n_bins):
            sel = bidx == b
            if not np.any(sel):
                continue
            x = xs[sel].ravel()
            y = ys[sel].ravel()
            counts[li, b] = x.size
            if x.size >= 2:
                taus[li, b] = kernels.kendall_tau(x, y)
    return Correlogram(taus=taus, counts=counts, lags=tuple(lags), min_pairs=min_pairs)


# ---------------------------------------------------------------------------
# tau polynomial in distance
# ---------------------------------------------------------------------------

@dataclass
class TauPolynomial:
    """Per-lag polynomial tau(h), fitted by count-weighted least squares."""

    coeffs: np.ndarray  # (n_lags, degree + 1), ascending powers
    lags: tuple
    h_max: float
    residuals: list  # per lag, residuals at the usable bin means

    @property
    def degree(self):
        return self.coeffs.shape[1] - 1

    def tau(self, h, lag):
        li = self.lags.index(lag)
        val = np.polynomial.polynomial.polyval(h, self.coeffs[li])
        return float(np.clip(val, -TAU_CLIP, TAU_CLIP))

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lag"] + [f"c{i}" for i in range(self.coeffs.shape[1])])
        for li, lag in enumerate(self.lags):
            w.writerow([lag] + [repr(float(c)) for c in self.coeffs[li]])
        return buf.getvalue()


def fit_tau_polynomial(cg, bins, degree=3):
    """Weighted least squares of tau against bin mean distance, per lag."""
    usable = cg.usable()
    n_lags = cg.taus.shape[0]
    coeffs = np.zeros((n_lags, degree + 1))
    residuals = []
    for li in range(n_lags):
        sel = usable[li]
        x = bins.mean_distances[sel]
        y = cg.taus[li, sel]
        w = cg.counts[li, sel].astype(np.float64)
        if x.size < degree + 1:
            raise FitError(
                f"lag {cg.lags[li]}: {x.size} usable bins cannot support "
                f"a degree-{degree} polynomial")
        design = np.vander(x, degree + 1, increasing=True)
        sw = np.sqrt(w)
        coef, *_ = np.linalg.lstsq(design * sw[:, None], y * sw, rcond=None)
        coeffs[li] = coef
        residuals.append(y - design @ coef)
    return TauPolynomial(coeffs=coeffs, lags=cg.lags, h_max=bins.h_max,
                         residuals=residuals)


# ---------------------------------------------------------------------------
# bivariate spatio-temporal copula
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FamilyChoice:
    """Family, rotation, and df selected for one (lag, bin) cell."""

    family: str
    rotation: int = 0
    df: float = 5.0

    def __post_init__(self):
        object.__setattr__(self, "df", float(self.df))


@dataclass
class StCopula:
    """Distance/lag-driven bivariate copula built from per-bin families.

    The family (with rotation and df) is fixed per (lag, bin); the
    parameter comes from the tau polynomial evaluated at the actual pair
    distance, clipped into the family's attainable tau range.
    """

    bins: BinPartition
    poly: TauPolynomial
    choices: list  # [lag][bin] -> FamilyChoice
    correlogram: Correlogram = None
    _tau_ranges: dict = field(default_factory=dict, repr=False)

    def _spec_for(self, choice, tau):
        if choice.family == "independence":
            return INDEPENDENCE
        base_tau = -tau if choice.rotation in (90, 270) else tau
        if choice.family not in self._tau_ranges:
            self._tau_ranges[choice.family] = copulas.tau_range(choice.family)
        lo, hi = self._tau_ranges[choice.family]
        if lo == 0.0 and base_tau <= 1e-9:
            # positive-dependence family asked for nonpositive tau
            return INDEPENDENCE
        if choice.family == "frank" and abs(base_tau) < 1e-4:
            return INDEPENDENCE
        base_tau = float(np.clip(base_tau, max(lo, -TAU_CLIP), min(hi, TAU_CLIP)))
        try:
            theta = copulas.tau_to_param(choice.family, base_tau)
        except TauRangeError:
            return INDEPENDENCE
        return BivariateCopulaSpec(choice.family, choice.rotation, theta, choice.df)

    def spec_at(self, bin_idx, lag, h):
        """Spec of the bin's family with theta from tau(h, lag)."""
        li = self.poly.lags.index(lag)
        tau = self.poly.tau(h, lag)
        return self._spec_for(self.choices[li][bin_idx], tau)

    def components(self, h, lag):
        """(weight, spec) mixture of Eq-style convex combination at distance h."""
        l = self.bins.mean_distances
        n = l.size
        if h >= l[-1]:
            return [(1.0, INDEPENDENCE)]
        if h < l[0] or n == 1:
            return [(1.0, self.spec_at(0, lag, h))]
        j = int(np.searchsorted(l, h, side="right"))  # l[j-1] <= h < l[j]
        lam = (h - l[j - 1]) / (l[j] - l[j - 1])
        left = self.spec_at(j - 1, lag, h)
        right = INDEPENDENCE if j == n - 1 else self.spec_at(j, lag, h)
        return [(1.0 - lam, left), (lam, right)]

    def density(self, h, lag, u, v):
        comps = self.components(h, lag)
        out = 0.0
        for wgt, spec in comps:
            if wgt == 0.0:
                continue
            out = out + wgt * np.exp(copulas.copula_logpdf(spec, u, v))
        return out

    def log_density(self, h, lag, u, v):
        with np.errstate(divide="ignore"):
            return np.log(self.density(h, lag, u, v))

    def hfunc1(self, h, lag, u, given):
        """Conditional CDF of the neighbor value given the center value."""
        comps = self.components(h, lag)
        out = 0.0
        for wgt, spec in comps:
            if wgt == 0.0:
                continue
            out = out + wgt * np.asarray(copulas.h_function1(spec, u, given))
        return out

    def hinv1(self, h, lag, p, given):
        """Inverse of ``hfunc1`` in u, by monotone bisection."""
        p = np.asarray(p, dtype=np.float64)
        given = np.broadcast_to(np.asarray(given, dtype=np.float64), p.shape)
        lo = np.full(p.shape, 1e-12)
        hi = np.full(p.shape, 1.0 - 1e-12)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            below = self.hfunc1(h, lag, mid, given) < p
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)


def fit_st_copula(upanel, bins, lags=LAGS, var_center=None, var_neighbor=None,
                  candidates=copulas.DEFAULT_CANDIDATES, degree=3,
                  min_pairs=MIN_CELL_PAIRS):
    """Fit correlogram, tau polynomial, and per-(lag, bin) families."""
    cg = empirical_correlogram(upanel, bins, lags, var_center, var_neighbor,
                               min_pairs)
    poly = fit_tau_polynomial(cg, bins, degree)
    vi = VARIABLES.index(var_center) if var_center else 0
    vj = VARIABLES.index(var_neighbor) if var_neighbor else vi
    dists = upanel.distances_km()
    usable = cg.usable()
    choices = []
    for li, lag in enumerate(lags):
        ii, jj, xs, ys = _pair_arrays(upanel, lag, vi, vj)
        bidx = bins.assign(dists[ii, jj])
        row = []
        for b in range(bins.n_bins):
            if not usable[li, b]:
                row.append(FamilyChoice("independence"))
                continue
            sel = bidx == b
            x = xs[sel].ravel()
            y = ys[sel].ravel()
            tau_hint = poly.tau(bins.mean_distances[b], lag)
            spec = copulas.fit_family(x, y, candidates, tau_hint=tau_hint,
                                      min_pairs=min_pairs)
            row.append(FamilyChoice(spec.family, spec.rotation, spec.df))
        choices.append(row)
    return StCopula(bins=bins, poly=poly, choices=choices, correlogram=cg)


# ---------------------------------------------------------------------------
# spatio-temporal neighborhoods
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Neighbor:
    value: float
    distance_km: float
    lag: int
    group: str  # "v", "w", or "dep"
    station_id: str


@dataclass
class NeighborSet:
    """Ordered spatio-temporal neighbor values around one center point.

    Order is fixed as [v-covariate neighbors, w-covariate neighbors,
    dependent-variable neighbors by ascending distance then lag]; this is
    also the upper-tree variable order of the vine.
    """

    center_station: str
    center_time_index: int
    neighbors: list

    def __len__(self):
        return len(self.neighbors)

    def values(self):
        return np.array([nb.value for nb in self.neighbors])


def covariate_groups(covariates):
    """Normalize a covariate subset selector to the ('v','w') group tuple."""
    mapping = {
        "both": ("v", "w"),
        COVARIATE_V: ("v",),
        COVARIATE_W: ("w",),
        "none": (),
    }
    if covariates not in mapping:
        raise DomainError(f"covariates must be one of {sorted(mapping)}")
    return mapping[covariates]


def _nearest(order_ids, dists, k):
    """Indices of the k nearest stations; distance ties break by station id."""
    idx = np.lexsort((order_ids, dists))
    return idx[:k]


def build_neighborhood(upanel, lon, lat, t_idx, d_spatial=3, dc_spatial=1,
                       covariates="both", exclude_station=None,
                       center_station=""):
    """Assemble the neighbor values around a center (location, time index)."""
    if t_idx < 1:
        raise BoundaryError(
            "center at the first time step has no lag-1 neighbors")
    if t_idx >= upanel.n_times:
        raise DomainError(f"time index {t_idx} out of range")
    groups = covariate_groups(covariates)
    lons = np.array([s.lon for s in upanel.stations])
    lats = np.array([s.lat for s in upanel.stations])
    ids = np.array([s.id for s in upanel.stations])
    dists = haversine_km(lon, lat, lons, lats)
    mask = np.ones(len(ids), dtype=bool)
    if exclude_station is not None:
        mask &= ids != exclude_station
    cand = np.where(mask)[0]
    if cand.size < max(d_spatial, dc_spatial if groups else 0):
        raise InsufficientDataError(
            f"need at least {d_spatial} other stations, found {cand.size}")
    order = cand[_nearest(ids[cand], dists[cand], max(d_spatial, dc_spatial))]

    neighbors = []
    group_var = {"v": VARIABLES.index(COVARIATE_V), "w": VARIABLES.index(COVARIATE_W)}
    for g in groups:
        vi = group_var[g]
        for si in order[:dc_spatial]:
            for lag in LAGS:
                neighbors.append(Neighbor(
                    value=float(upanel.values[vi, si, t_idx - lag]),
                    distance_km=float(dists[si]), lag=lag, group=g,
                    station_id=str(ids[si])))
    vi = VARIABLES.index(DEPENDENT)
    for si in order[:d_spatial]:
        for lag in LAGS:
            neighbors.append(Neighbor(
                value=float(upanel.values[vi, si, t_idx - lag]),
                distance_km=float(dists[si]), lag=lag, group="dep",
                station_id=str(ids[si])))
    return NeighborSet(center_station=center_station, center_time_index=t_idx,
                       neighbors=neighbors)
