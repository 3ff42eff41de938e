"""Covariate-augmented C-vine around each prediction center.

Structure: the center value is the root; tree 1 links it to every
spatio-temporal neighbor through the distance/lag-driven bivariate copulas
fitted per variable pairing (dependent-dependent, dependent-covariate).
Upper trees condition on the center and earlier neighbors in a fixed
variable order (covariate neighbors first, then dependent-variable
neighbors by distance and lag) and carry one distance-free pair copula per
edge, estimated sequentially by maximum likelihood on the conditioned
samples.

Pair copulas are stored target-first: an edge density is evaluated as
``c(target, pivot)`` and the recursion's conditional transform is
``h_function(spec, target, given pivot)``.
"""

import io
import warnings
from dataclasses import dataclass

import numpy as np

from . import copulas, spatial
from .config import RunConfig
from .copulas import INDEPENDENCE, BivariateCopulaSpec
from .errors import DegenerateDensityError, FitError, SchemaError
from .marginals import MarginalTable
from .panel import DEPENDENT, COVARIATE_V, COVARIATE_W
from .spatial import (BinPartition, NeighborSet, StCopula, build_neighborhood,
                      covariate_groups, make_bins)

_CLIP = 1e-10

_GROUP_VARIABLE = {"v": COVARIATE_V, "w": COVARIATE_W}


def _clip01(x):
    return np.clip(x, _CLIP, 1.0 - _CLIP)


@dataclass
class VineModel:
    """Fitted model: marginals, tree-1 spatio-temporal copulas, upper trees."""

    config: RunConfig
    marginal_table: MarginalTable
    bins: BinPartition
    st_dep: StCopula
    st_cov: dict  # group ("v"/"w") -> StCopula
    upper: list  # upper[k-1][m-1] = spec of edge (k, k+m | center, 1..k-1)

    @property
    def n_neighbors(self):
        return self.config.n_neighbors

    def tree1_copula(self, group):
        if group == "dep":
            return self.st_dep
        return self.st_cov[group]

    def n_upper_edges(self):
        return sum(len(row) for row in self.upper)


def conditional_transform(spec, u_target, u_pivot):
    """Eq-3 step: conditional CDF of the target given the pivot, clipped."""
    return _clip01(np.asarray(copulas.h_function(spec, u_target, u_pivot)))


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

def fit_first_tree(upanel, neighborhoods, bins, config):
    """Fit the dependent-pair and covariate-pair spatio-temporal copulas."""
    if not neighborhoods:
        raise FitError("no training neighborhoods")
    cfg = config.resolved()
    st_dep = spatial.fit_st_copula(
        upanel, bins, spatial.LAGS, DEPENDENT, DEPENDENT,
        candidates=cfg.candidates, degree=cfg.poly_degree,
        min_pairs=cfg.min_pairs)
    st_cov = {}
    for g in covariate_groups(cfg.covariates):
        st_cov[g] = spatial.fit_st_copula(
            upanel, bins, spatial.LAGS, DEPENDENT, _GROUP_VARIABLE[g],
            candidates=cfg.candidates, degree=cfg.poly_degree,
            min_pairs=cfg.min_pairs)
    return st_dep, st_cov


def _tree1_columns(st_dep, st_cov, records):
    """Center values and per-slot conditioned columns for the upper trees.

    ``records`` is a list of (u0, NeighborSet); all records share the same
    slot layout, so each slot is transformed as one vectorized column.
    """
    n = len(records)
    d = len(records[0][1])
    u0 = np.array([r[0] for r in records])
    cols = []
    for j in range(d):
        vals = np.array([r[1].neighbors[j].value for r in records])
        dists = np.array([r[1].neighbors[j].distance_km for r in records])
        lag = records[0][1].neighbors[j].lag
        group = records[0][1].neighbors[j].group
        st = st_dep if group == "dep" else st_cov[group]
        out = np.empty(n)
        # group identical distances (fixed station geometry) into one call
        for h in np.unique(dists):
            sel = dists == h
            out[sel] = st.hfunc1(float(h), lag, vals[sel], u0[sel])
        cols.append(_clip01(out))
    return u0, cols


def fit_upper_trees(tree1_cols, config):
    """Sequential per-edge family selection on the conditioned samples."""
    cfg = config.resolved()
    z = [c.copy() for c in tree1_cols]
    d = len(z)
    upper = []
    for k in range(1, d):
        pivot = z[k - 1]
        row = []
        for m in range(1, d - k + 1):
            tgt = z[k + m - 1]
            if tgt.size < cfg.min_pairs:
                warnings.warn(
                    f"edge ({k},{k + m}): {tgt.size} records < {cfg.min_pairs}; "
                    "using the independence copula", RuntimeWarning)
                spec = INDEPENDENCE
            else:
                spec = copulas.fit_family(tgt, pivot, cfg.candidates,
                                          min_pairs=cfg.min_pairs)
            row.append(spec)
            z[k + m - 1] = conditional_transform(spec, tgt, pivot)
        upper.append(row)
    return upper


def training_records(upanel, config):
    """(u0, NeighborSet) for every center with a full lag-1 history.

    Centers at the first time step are excluded (their lag-1 neighbors do
    not exist).
    """
    cfg = config.resolved()
    records = []
    dep_idx = 0
    for si, st in enumerate(upanel.stations):
        for t_idx in range(1, upanel.n_times):
            nb = build_neighborhood(
                upanel, st.lon, st.lat, t_idx, cfg.d_spatial, cfg.dc_spatial,
                cfg.covariates, exclude_station=st.id, center_station=st.id)
            records.append((float(upanel.values[dep_idx, si, t_idx]), nb))
    return records


def fit_vine(upanel, marginal_table, config, bins=None):
    """Full fit: bins, first tree, tree-1 transform, upper trees."""
    cfg = config.resolved()
    if bins is None:
        bins = make_bins(upanel.stations, cfg.n_bins)
    records = training_records(upanel, cfg)
    st_dep, st_cov = fit_first_tree(upanel, records, bins, cfg)
    _, cols = _tree1_columns(st_dep, st_cov, records)
    upper = fit_upper_trees(cols, cfg)
    return VineModel(config=cfg, marginal_table=marginal_table, bins=bins,
                     st_dep=st_dep, st_cov=st_cov, upper=upper)


# ---------------------------------------------------------------------------
# density evaluation
# ---------------------------------------------------------------------------

def neighbor_slots(nbset):
    """(group, distance, lag) layout of a neighbor set."""
    return [(nb.group, nb.distance_km, nb.lag) for nb in nbset.neighbors]


def log_density_matrix(model, u0_grid, values, slots):
    """log joint density on a shared center grid for a batch of records.

    ``u0_grid`` (P,) holds the center evaluation points, ``values`` (R, d')
    one row of neighbor values per record, and ``slots`` the per-position
    (group, distance, lag) layout shared by all records (targets of one
    station share their geometry).  Returns an (R, P) array with
    non-finite totals collapsed to -inf.
    """
    u0_grid = _clip01(np.asarray(u0_grid, dtype=np.float64))
    values = np.asarray(values, dtype=np.float64)
    n_rec, d = values.shape
    n_pts = u0_grid.size
    u0f = np.tile(u0_grid, n_rec)
    total = np.zeros(n_rec * n_pts)
    z = []
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for j, (group, h, lag) in enumerate(slots):
            st = model.tree1_copula(group)
            val = np.repeat(_clip01(values[:, j]), n_pts)
            total = total + st.log_density(h, lag, u0f, val)
            z.append(_clip01(np.asarray(st.hfunc1(h, lag, val, u0f))))
        for k in range(1, d):
            pivot = z[k - 1]
            for m in range(1, d - k + 1):
                spec = model.upper[k - 1][m - 1]
                tgt = z[k + m - 1]
                total = total + copulas.copula_logpdf(spec, tgt, pivot)
                z[k + m - 1] = conditional_transform(spec, tgt, pivot)
    total = np.where(np.isfinite(total), total, -np.inf)
    return total.reshape(n_rec, n_pts)


def vine_log_density(model, u0, nbset):
    """log joint density of (center, neighbors) as a function of the center.

    ``u0`` may be a scalar or an array (the neighbors stay fixed), which is
    how the prediction quadrature batches its nodes.
    """
    arr = np.asarray(u0, dtype=np.float64)
    scalar = arr.ndim == 0
    vals = np.array([[nb.value for nb in nbset.neighbors]])
    out = log_density_matrix(model, np.atleast_1d(arr), vals,
                             neighbor_slots(nbset))[0]
    return float(out[0]) if scalar else out


def gauss_legendre_01(n):
    """Gauss-Legendre nodes and weights mapped to (0, 1)."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def conditional_density(model, u0, nbset, nodes=None):
    """Density of the center given its neighbors, normalized by quadrature."""
    n = nodes if nodes is not None else model.config.quad_nodes
    x, w = gauss_legendre_01(n)
    norm = float(w @ np.exp(vine_log_density(model, x, nbset)))
    if not np.isfinite(norm) or norm < 1e-12:
        raise DegenerateDensityError(
            f"conditional density normalizer {norm} below tolerance")
    return np.exp(vine_log_density(model, u0, nbset)) / norm


# ---------------------------------------------------------------------------
# joint simulation (sequential inverse-h sampling)
# ---------------------------------------------------------------------------

def simulate_joint(model, nbset, n, rng):
    """Draw (center, neighbors) vectors from the fitted vine at the given
    neighbor geometry (values in ``nbset`` are ignored, only distance/lag/
    group matter)."""
    d = len(nbset.neighbors)
    w = rng.uniform(size=(d + 1, n))
    x = np.empty((d + 1, n))
    x[0] = w[0]
    # cond[j] holds u_{j | center, 1..j-1} once variable j has been visited
    cond = [None] * (d + 1)
    cond[0] = x[0]
    for i in range(1, d + 1):
        nb = nbset.neighbors[i - 1]
        st = model.tree1_copula(nb.group)
        q = w[i]
        for k in range(i - 1, 0, -1):
            spec = model.upper[k - 1][i - k - 1]
            q = _clip01(np.asarray(copulas.h_inverse(spec, q, cond[k])))
        q = _clip01(np.asarray(st.hinv1(nb.distance_km, nb.lag, q, x[0])))
        x[i] = q
        if i < d:
            c = _clip01(np.asarray(st.hfunc1(nb.distance_km, nb.lag, q, x[0])))
            for k in range(1, i):
                spec = model.upper[k - 1][i - k - 1]
                c = conditional_transform(spec, c, cond[k])
            cond[i] = c
    return x[0], x[1:].T  # center (n,), neighbors (n, d)


# ---------------------------------------------------------------------------
# model file (versioned plain-text sections)
# ---------------------------------------------------------------------------

MODEL_MAGIC = "# stvine model v1"


def _write_spec(spec):
    return f"{spec.family},{spec.rotation},{spec.theta!r},{spec.df!r}"


def _read_spec(token):
    fam, rot, theta, df = token.split(",")
    if fam == "independence":
        return INDEPENDENCE
    return BivariateCopulaSpec(fam, int(rot), float(theta), float(df))


def _write_stcopula(lines, tag, st):
    lines.append(f"[stcopula:{tag}]")
    for li, lag in enumerate(st.poly.lags):
        coef = ",".join(repr(float(c)) for c in st.poly.coeffs[li])
        lines.append(f"poly,{lag},{coef}")
    lines.append(f"h_max,{st.poly.h_max!r}")
    for li, lag in enumerate(st.poly.lags):
        for b, ch in enumerate(st.choices[li]):
            lines.append(f"choice,{lag},{b},{ch.family},{ch.rotation},{ch.df!r}")
    if st.correlogram is not None:
        cg = st.correlogram
        for li, lag in enumerate(cg.lags):
            for b in range(cg.taus.shape[1]):
                lines.append(f"cg,{lag},{b},{float(cg.taus[li, b])!r},"
                             f"{int(cg.counts[li, b])}")


def _parse_stcopula(block, bins):
    polys = {}
    h_max = None
    choices = {}
    cg_taus = {}
    cg_counts = {}
    for ln in block:
        parts = ln.split(",")
        if parts[0] == "poly":
            polys[int(parts[1])] = [float(c) for c in parts[2:]]
        elif parts[0] == "h_max":
            h_max = float(parts[1])
        elif parts[0] == "choice":
            lag, b = int(parts[1]), int(parts[2])
            choices[(lag, b)] = spatial.FamilyChoice(parts[3], int(parts[4]),
                                                     float(parts[5]))
        elif parts[0] == "cg":
            lag, b = int(parts[1]), int(parts[2])
            cg_taus[(lag, b)] = float(parts[3])
            cg_counts[(lag, b)] = int(parts[4])
    lags = tuple(sorted(polys))
    coeffs = np.array([polys[lag] for lag in lags])
    poly = spatial.TauPolynomial(coeffs=coeffs, lags=lags, h_max=h_max,
                                 residuals=[np.array([]) for _ in lags])
    n_bins = bins.n_bins
    choice_rows = [[choices[(lag, b)] for b in range(n_bins)] for lag in lags]
    cg = None
    if cg_taus:
        taus = np.full((len(lags), n_bins), np.nan)
        counts = np.zeros((len(lags), n_bins), dtype=np.int64)
        for li, lag in enumerate(lags):
            for b in range(n_bins):
                taus[li, b] = cg_taus[(lag, b)]
                counts[li, b] = cg_counts[(lag, b)]
        cg = spatial.Correlogram(taus=taus, counts=counts, lags=lags)
    return StCopula(bins=bins, poly=poly, choices=choice_rows, correlogram=cg)


def model_text(model):
    cfg = model.config
    lines = [MODEL_MAGIC, "[config]"]
    for key in ("marginal", "n_bins", "poly_degree", "d_spatial", "dc_spatial",
                "covariates", "cv_folds", "seed", "quad_nodes", "model_kind",
                "min_pairs"):
        lines.append(f"{key}={getattr(cfg, key)}")
    lines.append(f"candidates={';'.join(cfg.candidates)}")
    lines.append("[bins]")
    lines.append("edges," + ",".join(repr(float(e)) for e in model.bins.edges))
    lines.append("means," + ",".join(repr(float(m))
                                     for m in model.bins.mean_distances))
    lines.append("[marginals]")
    lines.extend(model.marginal_table.to_csv().splitlines())
    _write_stcopula(lines, "dep", model.st_dep)
    for g in sorted(model.st_cov):
        _write_stcopula(lines, g, model.st_cov[g])
    lines.append("[upper]")
    for k, row in enumerate(model.upper, start=1):
        for m, spec in enumerate(row, start=1):
            lines.append(f"{k},{m},{_write_spec(spec)}")
    return "\n".join(lines) + "\n"


def save_model(model, path):
    with open(path, "w") as fh:
        fh.write(model_text(model))


def load_model(path):
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != MODEL_MAGIC:
        raise SchemaError(f"{path}: not a stvine model file")
    sections = {}
    current = None
    for ln in lines[1:]:
        if ln.startswith("["):
            current = ln.strip("[]")
            sections[current] = []
        elif current is not None and ln.strip():
            sections[current].append(ln)

    cfg_kv = {}
    for ln in sections["config"]:
        key, val = ln.split("=", 1)
        cfg_kv[key] = val
    candidates = tuple(cfg_kv.pop("candidates").split(";"))
    ints = {k: int(cfg_kv[k]) for k in ("n_bins", "poly_degree", "d_spatial",
                                        "dc_spatial", "cv_folds", "seed",
                                        "quad_nodes", "min_pairs")}
    cfg = RunConfig(marginal=cfg_kv["marginal"], covariates=cfg_kv["covariates"],
                    model_kind=cfg_kv["model_kind"], candidates=candidates, **ints)

    edges = np.array([float(x) for x in sections["bins"][0].split(",")[1:]])
    means = np.array([float(x) for x in sections["bins"][1].split(",")[1:]])
    bins = BinPartition(edges=edges, mean_distances=means)

    table = MarginalTable.from_csv("\n".join(sections["marginals"]) + "\n")

    st_dep = _parse_stcopula(sections["stcopula:dep"], bins)
    st_cov = {}
    for g in ("v", "w"):
        key = f"stcopula:{g}"
        if key in sections:
            st_cov[g] = _parse_stcopula(sections[key], bins)

    d = cfg.n_neighbors
    upper = [[INDEPENDENCE] * (d - k) for k in range(1, d)]
    for ln in sections["upper"]:
        k, m, rest = ln.split(",", 2)
        upper[int(k) - 1][int(m) - 1] = _read_spec(rest)
    return VineModel(config=cfg, marginal_table=table, bins=bins,
                     st_dep=st_dep, st_cov=st_cov, upper=upper)
