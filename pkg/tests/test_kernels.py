"""Backend agreement and special-function checks for the hot kernels."""

import numpy as np
import pytest
from scipy import special, stats

from stvine.kernels import _numpy as npk

try:
    from stvine.kernels import _numba as nbk
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

FAMILY_CASES = [
    (npk.GAUSSIAN, 0.7, 5.0),
    (npk.GAUSSIAN, -0.95, 5.0),
    (npk.STUDENT_T, 0.5, 2.5),
    (npk.STUDENT_T, -0.8, 10.0),
    (npk.CLAYTON, 0.5, 5.0),
    (npk.CLAYTON, 8.0, 5.0),
    (npk.FRANK, 5.0, 5.0),
    (npk.FRANK, -20.0, 5.0),
    (npk.GUMBEL, 1.5, 5.0),
    (npk.GUMBEL, 6.0, 5.0),
    (npk.JOE, 2.0, 5.0),
    (npk.JOE, 12.0, 5.0),
]


@pytest.fixture(scope="module")
def uv():
    rng = np.random.default_rng(7)
    return (rng.uniform(1e-6, 1 - 1e-6, 4000),
            rng.uniform(1e-6, 1 - 1e-6, 4000),
            rng.uniform(1e-6, 1 - 1e-6, 4000))


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba unavailable")
@pytest.mark.parametrize("fam,theta,df", FAMILY_CASES)
def test_backends_agree(fam, theta, df, uv):
    u, v, p = uv
    assert np.allclose(nbk.logpdf(fam, theta, df, u, v),
                       npk.logpdf(fam, theta, df, u, v), atol=5e-10)
    assert np.allclose(nbk.hfunc(fam, theta, df, u, v),
                       npk.hfunc(fam, theta, df, u, v), atol=5e-10)
    assert np.allclose(nbk.hinv(fam, theta, df, p, v),
                       npk.hinv(fam, theta, df, p, v), atol=5e-10)


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba unavailable")
def test_norm_functions_match_scipy():
    x = np.linspace(-8, 8, 200)
    got = np.array([nbk._norm_cdf(xi) for xi in x])
    assert np.allclose(got, special.ndtr(x), atol=1e-15)
    p = np.linspace(1e-12, 1 - 1e-12, 500)
    got = np.array([nbk._norm_ppf(pi) for pi in p])
    assert np.allclose(got, special.ndtri(p), atol=1e-10)


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba unavailable")
@pytest.mark.parametrize("df", [2.1, 2.5, 4.0, 10.0, 30.0])
def test_t_functions_match_scipy(df):
    x = np.linspace(-40, 40, 101)
    got = np.array([nbk._t_cdf(xi, df) for xi in x])
    assert np.allclose(got, special.stdtr(df, x), atol=1e-12)
    p = np.concatenate([[1e-10, 1e-6], np.linspace(0.01, 0.99, 25),
                        [1 - 1e-6, 1 - 1e-10]])
    got = np.array([nbk._t_ppf(pi, df) for pi in p])
    want = special.stdtrit(df, p)
    assert np.allclose(got, want, rtol=1e-9, atol=1e-10)


def _brute_force_tau(x, y):
    """O(n^2) concordance count with tau-b tie handling."""
    n = len(x)
    num = 0
    tx = ty = 0
    for i in range(n):
        for j in range(i + 1, n):
            a = np.sign(x[i] - x[j])
            b = np.sign(y[i] - y[j])
            num += a * b
            if a == 0:
                tx += 1
            if b == 0:
                ty += 1
    n0 = n * (n - 1) // 2
    return num / np.sqrt((n0 - tx) * (n0 - ty))


@pytest.mark.parametrize("n,tie_levels", [(120, None), (200, 8), (57, 3)])
def test_kendall_tau_matches_brute_force(n, tie_levels):
    rng = np.random.default_rng(n)
    x = rng.normal(size=n)
    y = 0.6 * x + rng.normal(size=n)
    if tie_levels:
        x = np.round(x * tie_levels) / tie_levels
        y = np.round(y * tie_levels) / tie_levels
    want = _brute_force_tau(x, y)
    assert npk.kendall_tau(x, y) == pytest.approx(want, abs=1e-12)
    if HAVE_NUMBA:
        assert nbk.kendall_tau(x, y) == pytest.approx(want, abs=1e-12)


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba unavailable")
def test_kendall_tau_matches_scipy_large():
    rng = np.random.default_rng(3)
    x = rng.integers(0, 50, 20000).astype(float)
    y = x + rng.integers(0, 30, 20000)
    want = stats.kendalltau(x, y).statistic
    assert nbk.kendall_tau(x, y) == pytest.approx(want, abs=1e-13)
