"""Per-station skewed marginal distributions.

Gumbel and generalized extreme value (GEV) families fitted by maximum
likelihood (Nelder-Mead over location, log-scale and, for GEV, shape),
Kolmogorov-Smirnov validation, and the probability integral transform
between concentration space and the unit interval.

The GEV formulas are written with log1p/expm1 so the family degrades
continuously into Gumbel as the shape tends to zero.
"""

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .errors import DomainError, FitError, SchemaError
from .panel import VARIABLES, UniformPanel

#: PIT outputs are clipped into this closed interval to keep copula
#: densities finite downstream
PIT_EPS = 1e-10

GEV_SHAPE_BOUND = 0.5


@dataclass(frozen=True)
class MarginalSpec:
    """Location/scale(/shape) parameters of one fitted marginal."""

    family: str  # "gumbel" or "gev"
    a: float  # location
    b: float  # scale > 0
    s: float = 0.0  # shape, GEV only

    def __post_init__(self):
        if self.family not in ("gumbel", "gev"):
            raise DomainError(f"unknown marginal family {self.family!r}")
        if not (self.b > 0.0):
            raise DomainError(f"scale must be positive, got {self.b}")
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "s", float(self.s))


def marginal_cdf(spec, x):
    """F(x) in (0, 1); GEV values outside support collapse to 0 or 1."""
    x = np.asarray(x, dtype=np.float64)
    z = (x - spec.a) / spec.b
    if spec.family == "gumbel" or spec.s == 0.0:
        out = np.exp(-np.exp(-z))
    else:
        w = 1.0 + spec.s * z
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.exp(-np.log1p(spec.s * z) / spec.s)
            out = np.where(w > 0.0, np.exp(-t), 0.0 if spec.s > 0 else 1.0)
    return out if out.ndim else float(out)


def marginal_logpdf(spec, x):
    x = np.asarray(x, dtype=np.float64)
    z = (x - spec.a) / spec.b
    if spec.family == "gumbel" or spec.s == 0.0:
        out = -np.log(spec.b) - z - np.exp(-z)
    else:
        w = 1.0 + spec.s * z
        with np.errstate(divide="ignore", invalid="ignore"):
            lw = np.log1p(spec.s * z)
            out = np.where(w > 0.0,
                           -np.log(spec.b) - (1.0 + 1.0 / spec.s) * lw
                           - np.exp(-lw / spec.s),
                           -np.inf)
    return out if out.ndim else float(out)


def marginal_pdf(spec, x):
    return np.exp(marginal_logpdf(spec, x))


def marginal_quantile(spec, p):
    """Inverse CDF; p must lie strictly inside (0, 1)."""
    p = np.asarray(p, dtype=np.float64)
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise DomainError("quantile probability must lie in (0, 1)")
    if spec.family == "gumbel" or spec.s == 0.0:
        out = spec.a - spec.b * np.log(-np.log(p))
    else:
        out = spec.a + spec.b * np.expm1(-spec.s * np.log(-np.log(p))) / spec.s
    return out if out.ndim else float(out)


def _moment_init(samples):
    b0 = np.std(samples) * np.sqrt(6.0) / np.pi
    a0 = np.mean(samples) - np.euler_gamma * b0
    return a0, b0


def fit_marginal(samples, family, history=None):
    """Maximum-likelihood fit starting from method-of-moments estimates.

    A derivative-free simplex runs over (a, log b) for Gumbel and
    (a, log b, s) for GEV with the shape kept inside
    (-GEV_SHAPE_BOUND, GEV_SHAPE_BOUND).  When ``history`` is a list the
    best log-likelihood after each simplex iteration is appended to it.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size < 20:
        raise FitError(f"need at least 20 samples, got {samples.size}")
    if not np.all(np.isfinite(samples)):
        raise FitError("samples must be finite")
    if np.std(samples) <= 1e-12 * max(1.0, abs(float(np.mean(samples)))):
        raise FitError("degenerate samples: zero variance")

    a0, b0 = _moment_init(samples)
    is_gev = family == "gev"

    def unpack(theta):
        if is_gev:
            return MarginalSpec("gev", theta[0], np.exp(theta[1]), theta[2])
        return MarginalSpec("gumbel", theta[0], np.exp(theta[1]))

    def neg_ll(theta):
        if is_gev and abs(theta[2]) >= GEV_SHAPE_BOUND:
            return np.inf
        ll = np.sum(marginal_logpdf(unpack(theta), samples))
        return np.inf if not np.isfinite(ll) else -ll

    x0 = np.array([a0, np.log(b0), 0.0]) if is_gev else np.array([a0, np.log(b0)])

    callback = None
    if history is not None:
        callback = lambda xk: history.append(-neg_ll(xk))  # noqa: E731

    def run(start, xatol):
        return optimize.minimize(
            neg_ll, start, method="Nelder-Mead", callback=callback,
            options={"xatol": xatol, "fatol": 1e-10, "maxiter": 2000})

    res = run(x0, 1e-6)
    spec = unpack(res.x)
    if is_gev:
        support = 1.0 + spec.s * (samples - spec.a) / spec.b
        if np.any(support <= 0.0):
            # constrained retry with a tighter shape box
            res = run(np.array([a0, np.log(b0), 0.0]), 1e-8)
            spec = unpack(res.x)
            support = 1.0 + spec.s * (samples - spec.a) / spec.b
            if np.any(support <= 0.0):
                raise FitError("GEV support violated at the optimum")
    if not np.isfinite(res.fun):
        raise FitError(f"{family} fit failed to produce a finite likelihood")
    init_ll = -neg_ll(x0)
    if np.isfinite(init_ll) and -res.fun < init_ll - 1e-9:
        raise FitError("optimizer returned a worse likelihood than its start")
    return spec


def ks_test(samples, spec):
    """One-sample KS statistic and its asymptotic p-value."""
    samples = np.sort(np.asarray(samples, dtype=np.float64))
    n = samples.size
    if n < 5:
        raise FitError(f"need at least 5 samples, got {n}")
    f = np.atleast_1d(marginal_cdf(spec, samples))
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - f)
    d_minus = np.max(f - (i - 1) / n)
    stat = max(d_plus, d_minus)
    p_value = float(special.kolmogorov(np.sqrt(n) * stat))
    return float(stat), p_value


@dataclass(frozen=True)
class MarginalEntry:
    spec: MarginalSpec
    ks_stat: float
    ks_p: float


class MarginalTable:
    """Immutable map (station_id, variable) -> fitted marginal + KS result."""

    def __init__(self, entries):
        self._entries = dict(entries)

    def __len__(self):
        return len(self._entries)

    def __contains__(self, key):
        return key in self._entries

    def keys(self):
        return self._entries.keys()

    def spec(self, station_id, variable):
        try:
            return self._entries[(station_id, variable)].spec
        except KeyError:
            raise KeyError(f"no marginal for station {station_id!r} variable {variable!r}")

    def entry(self, station_id, variable):
        return self._entries[(station_id, variable)]

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["station_id", "variable", "family", "a", "b", "s",
                         "ks_stat", "ks_p"])
        for (sid, var), e in sorted(self._entries.items()):
            s_field = "" if e.spec.family == "gumbel" else repr(e.spec.s)
            writer.writerow([sid, var, e.spec.family, repr(e.spec.a),
                             repr(e.spec.b), s_field, repr(e.ks_stat), repr(e.ks_p)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if header[:3] != ["station_id", "variable", "family"]:
            raise SchemaError("bad marginal table header")
        entries = {}
        for row in reader:
            if not row:
                continue
            sid, var, family, a, b, s, ks_stat, ks_p = row
            spec = MarginalSpec(family, float(a), float(b),
                                float(s) if s else 0.0)
            entries[(sid, var)] = MarginalEntry(spec, float(ks_stat), float(ks_p))
        return cls(entries)


def fit_marginal_table(ds, family):
    """Fit one marginal per station and variable of a complete panel."""
    entries = {}
    for vi, var in enumerate(VARIABLES):
        for si, st in enumerate(ds.stations):
            samples = ds.values[vi, si, :]
            if np.any(np.isnan(samples)):
                raise FitError(
                    f"missing values for station {st.id} variable {var}; impute first")
            spec = fit_marginal(samples, family)
            stat, p = ks_test(samples, spec)
            entries[(st.id, var)] = MarginalEntry(spec, stat, p)
    return MarginalTable(entries)


def pit_transform(ds, table):
    """Map a complete panel through its fitted marginal CDFs."""
    out = np.empty_like(ds.values)
    for vi, var in enumerate(VARIABLES):
        for si, st in enumerate(ds.stations):
            if (st.id, var) not in table:
                raise KeyError(f"marginal table lacks ({st.id!r}, {var!r})")
            spec = table.spec(st.id, var)
            out[vi, si, :] = marginal_cdf(spec, ds.values[vi, si, :])
    out = np.clip(out, PIT_EPS, 1.0 - PIT_EPS)
    return UniformPanel(stations=list(ds.stations), times=ds.times.copy(), values=out)


def pit_inverse(upanel, table):
    """Invert the probability integral transform back to concentrations."""
    from .panel import PanelDataset

    out = np.empty_like(upanel.values)
    for vi, var in enumerate(VARIABLES):
        for si, st in enumerate(upanel.stations):
            spec = table.spec(st.id, var)
            out[vi, si, :] = marginal_quantile(spec, upanel.values[vi, si, :])
    out = np.maximum(out, 0.0)
    return PanelDataset(stations=list(upanel.stations), times=upanel.times.copy(),
                        values=out)
