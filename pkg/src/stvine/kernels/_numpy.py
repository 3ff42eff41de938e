"""Pure numpy/scipy implementations of the hot copula kernels.

This backend is the reference: formulas are written with scipy's special
functions and vectorized numpy throughout.  The numba backend in
``_numba.py`` mirrors these signatures exactly and is checked against this
module in the test suite.

All kernels operate on 1-D float64 arrays of equal length and assume their
inputs have already been clipped to the open unit interval by the caller.
Rotations are handled one layer up (``stvine.copulas``).
"""

import numpy as np
from scipy import special, stats

BACKEND = "numpy"

# family codes shared by both backends
INDEP = 0
GAUSSIAN = 1
STUDENT_T = 2
CLAYTON = 3
FRANK = 4
GUMBEL = 5
JOE = 6

_TINY_LOG = -745.0


def _log1mexp(x):
    """log(1 - exp(x)) for x <= 0, stable near both ends."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    small = x < -0.6931471805599453
    out[small] = np.log1p(-np.exp(x[small]))
    out[~small] = np.log(-np.expm1(x[~small]))
    return out


# ---------------------------------------------------------------------------
# log density
# ---------------------------------------------------------------------------

def _gaussian_logpdf(rho, u, v):
    x = special.ndtri(u)
    y = special.ndtri(v)
    r2 = 1.0 - rho * rho
    return -0.5 * np.log(r2) - (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * r2)


def _t_logpdf(rho, df, u, v):
    x = special.stdtrit(df, u)
    y = special.stdtrit(df, v)
    r2 = 1.0 - rho * rho
    q = x * x - 2.0 * rho * x * y + y * y
    const = (special.gammaln((df + 2.0) / 2.0) + special.gammaln(df / 2.0)
             - 2.0 * special.gammaln((df + 1.0) / 2.0))
    return (const - 0.5 * np.log(r2)
            - (df + 2.0) / 2.0 * np.log1p(q / (df * r2))
            + (df + 1.0) / 2.0 * (np.log1p(x * x / df) + np.log1p(y * y / df)))


def _clayton_logw(theta, u, v):
    # log(u^-theta + v^-theta - 1), overflow-safe
    a = -theta * np.log(u)
    b = -theta * np.log(v)
    m = np.maximum(a, b)
    return m + np.log(np.exp(a - m) + np.exp(b - m) - np.exp(-m))


def _clayton_logpdf(theta, u, v):
    lw = _clayton_logw(theta, u, v)
    return (np.log1p(theta) - (1.0 + theta) * (np.log(u) + np.log(v))
            - (2.0 + 1.0 / theta) * lw)


def _frank_logpdf(theta, u, v):
    gu = np.expm1(-theta * u)
    gv = np.expm1(-theta * v)
    d = np.expm1(-theta)
    denom = d + gu * gv
    return (np.log(abs(theta)) + np.log(abs(d)) - theta * (u + v)
            - 2.0 * np.log(np.abs(denom)))


def _gumbel_logpdf(theta, u, v):
    lx = np.log(-np.log(u))
    ly = np.log(-np.log(v))
    ls = np.logaddexp(theta * lx, theta * ly)
    la = ls / theta
    a = np.exp(la)
    return (-a - np.log(u) - np.log(v) + (theta - 1.0) * (lx + ly)
            + (1.0 / theta - 2.0) * ls + np.log(a + theta - 1.0))


def _joe_logt(theta, lu_bar, lv_bar):
    # log(ubar^th + vbar^th - ubar^th * vbar^th)
    x = theta * lu_bar
    y = theta * lv_bar
    m = np.maximum(x, y)
    return m + np.log(np.exp(x - m) + np.exp(y - m) - np.exp(x + y - m))


def _joe_logpdf(theta, u, v):
    lu_bar = np.log1p(-u)
    lv_bar = np.log1p(-v)
    x = theta * lu_bar
    y = theta * lv_bar
    lt = _joe_logt(theta, lu_bar, lv_bar)
    # log(theta*T + (theta-1)*(1-ubar^th)*(1-vbar^th))
    term1 = np.log(theta) + lt
    if theta > 1.0:
        term2 = np.log(theta - 1.0) + _log1mexp(x) + _log1mexp(y)
        bracket = np.logaddexp(term1, term2)
    else:
        bracket = term1
    return (1.0 / theta - 2.0) * lt + (theta - 1.0) * (lu_bar + lv_bar) + bracket


def logpdf(fam, theta, df, u, v):
    """Elementwise log copula density c(u, v)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if fam == INDEP:
        return np.zeros_like(u)
    if fam == GAUSSIAN:
        return _gaussian_logpdf(theta, u, v)
    if fam == STUDENT_T:
        return _t_logpdf(theta, df, u, v)
    if fam == CLAYTON:
        return _clayton_logpdf(theta, u, v)
    if fam == FRANK:
        return _frank_logpdf(theta, u, v)
    if fam == GUMBEL:
        return _gumbel_logpdf(theta, u, v)
    if fam == JOE:
        return _joe_logpdf(theta, u, v)
    raise ValueError(f"unknown family code {fam}")


# ---------------------------------------------------------------------------
# h-function: h(u | v) = dC(u, v)/dv
# ---------------------------------------------------------------------------

def _gaussian_hfunc(rho, u, v):
    x = special.ndtri(u)
    y = special.ndtri(v)
    return special.ndtr((x - rho * y) / np.sqrt(1.0 - rho * rho))


def _t_hfunc(rho, df, u, v):
    x = special.stdtrit(df, u)
    y = special.stdtrit(df, v)
    s = np.sqrt((df + y * y) * (1.0 - rho * rho) / (df + 1.0))
    return special.stdtr(df + 1.0, (x - rho * y) / s)


def _clayton_hfunc(theta, u, v):
    lw = _clayton_logw(theta, u, v)
    return np.exp(-(theta + 1.0) * np.log(v) - (1.0 + 1.0 / theta) * lw)


def _frank_hfunc(theta, u, v):
    gu = np.expm1(-theta * u)
    gv = np.expm1(-theta * v)
    d = np.expm1(-theta)
    return np.exp(-theta * v) * gu / (d + gu * gv)


def _gumbel_hfunc(theta, u, v):
    lx = np.log(-np.log(u))
    ly = np.log(-np.log(v))
    ls = np.logaddexp(theta * lx, theta * ly)
    a = np.exp(ls / theta)
    return np.exp(-a + (theta - 1.0) * ly + (1.0 / theta - 1.0) * ls - np.log(v))


def _joe_hfunc(theta, u, v):
    lu_bar = np.log1p(-u)
    lv_bar = np.log1p(-v)
    lt = _joe_logt(theta, lu_bar, lv_bar)
    return np.exp((1.0 / theta - 1.0) * lt + (theta - 1.0) * lv_bar
                  + _log1mexp(theta * lu_bar))


def hfunc(fam, theta, df, u, v):
    """Elementwise conditional CDF h(u | v) = dC(u, v)/dv."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if fam == INDEP:
        return u.copy()
    interior = (u > 0.0) & (u < 1.0)
    out = np.where(u <= 0.0, 0.0, 1.0)
    if not interior.any():
        return out
    ui = u[interior]
    vi = v[interior]
    if fam == GAUSSIAN:
        hi = _gaussian_hfunc(theta, ui, vi)
    elif fam == STUDENT_T:
        hi = _t_hfunc(theta, df, ui, vi)
    elif fam == CLAYTON:
        hi = _clayton_hfunc(theta, ui, vi)
    elif fam == FRANK:
        hi = _frank_hfunc(theta, ui, vi)
    elif fam == GUMBEL:
        hi = _gumbel_hfunc(theta, ui, vi)
    elif fam == JOE:
        hi = _joe_hfunc(theta, ui, vi)
    else:
        raise ValueError(f"unknown family code {fam}")
    out[interior] = np.clip(hi, 0.0, 1.0)
    return out


# ---------------------------------------------------------------------------
# inverse h-function
# ---------------------------------------------------------------------------

def _gaussian_hinv(rho, p, v):
    y = special.ndtri(v)
    return special.ndtr(special.ndtri(p) * np.sqrt(1.0 - rho * rho) + rho * y)


def _t_hinv(rho, df, p, v):
    y = special.stdtrit(df, v)
    s = np.sqrt((df + y * y) * (1.0 - rho * rho) / (df + 1.0))
    return special.stdtr(df, special.stdtrit(df + 1.0, p) * s + rho * y)


def _clayton_hinv(theta, p, v):
    # u = (1 + v^-theta * (p^(-theta/(1+theta)) - 1))^(-1/theta)
    t = -theta / (1.0 + theta) * np.log(p)
    log_q = np.where(t > 0.0, np.log(np.expm1(np.maximum(t, 1e-300))), -np.inf)
    arg = -theta * np.log(v) + log_q
    ln_term = np.logaddexp(0.0, arg)
    return np.exp(-ln_term / theta)


def _frank_hinv(theta, p, v):
    a = np.exp(-theta * v)
    e = np.exp(-theta)
    x = (a * (1.0 - p) + p * e) / (a * (1.0 - p) + p)
    return -np.log(x) / theta


def _bisect_hinv(hfun, p, v, tol=1e-12, max_iter=80):
    lo = np.full_like(p, 1e-14)
    hi = np.full_like(p, 1.0 - 1e-14)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        below = hfun(mid, v) < p
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.max(hi - lo) < tol:
            break
    return 0.5 * (lo + hi)


def hinv(fam, theta, df, p, v):
    """Elementwise inverse of ``hfunc`` in its first argument."""
    p = np.asarray(p, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if fam == INDEP:
        return p.copy()
    if fam == GAUSSIAN:
        out = _gaussian_hinv(theta, p, v)
    elif fam == STUDENT_T:
        out = _t_hinv(theta, df, p, v)
    elif fam == CLAYTON:
        out = _clayton_hinv(theta, p, v)
    elif fam == FRANK:
        out = _frank_hinv(theta, p, v)
    elif fam == GUMBEL:
        out = _bisect_hinv(lambda m, w: _gumbel_hfunc(theta, m, w), p, v)
    elif fam == JOE:
        out = _bisect_hinv(lambda m, w: _joe_hfunc(theta, m, w), p, v)
    else:
        raise ValueError(f"unknown family code {fam}")
    return np.clip(out, 1e-15, 1.0 - 1e-15)


# ---------------------------------------------------------------------------
# Kendall's tau (tau-b convention)
# ---------------------------------------------------------------------------

def kendall_tau(x, y):
    """Tie-adjusted Kendall's tau-b of two equal-length samples."""
    res = stats.kendalltau(x, y)
    return float(res.statistic)
