"""Variogram selection and kriging solver contracts."""

import numpy as np
import pytest

from stvine import kriging
from stvine.config import RunConfig
from stvine.errors import DomainError, FitError
from stvine.kriging import VariogramSpec, variogram_value


def _scatter(rng, n, extent=120.0):
    pts = rng.uniform(0.0, extent, (n, 2))
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    return pts, d


def test_variogram_models_shape():
    vg = VariogramSpec("spherical", 0.5, 3.0, 50.0)
    assert variogram_value(vg, 0.0) == 0.0
    assert variogram_value(vg, 50.0) == pytest.approx(3.0)
    assert variogram_value(vg, 80.0) == pytest.approx(3.0)
    ve = VariogramSpec("exponential", 0.0, 2.0, 60.0)
    assert variogram_value(ve, 60.0) == pytest.approx(2.0 * (1 - np.exp(-3)))
    vgauss = VariogramSpec("gaussian", 0.0, 2.0, 60.0)
    assert variogram_value(vgauss, 60.0) == pytest.approx(2.0 * (1 - np.exp(-3)))


def test_variogram_validation():
    with pytest.raises(DomainError):
        VariogramSpec("spherical", 2.0, 1.0, 50.0)  # nugget > sill
    with pytest.raises(DomainError):
        VariogramSpec("cubic", 0.0, 1.0, 50.0)


def test_constant_field_degenerate_flat_fit():
    rng = np.random.default_rng(0)
    _, d = _scatter(rng, 15)
    edges = np.linspace(0.0, float(d.max()), 8)
    vg = kriging.fit_variogram_on_bins(d, np.full(15, 4.2), edges)
    assert vg.sill < 1e-6
    assert vg.sse == pytest.approx(0.0, abs=1e-12)


def test_winner_has_minimal_sse():
    rng = np.random.default_rng(3)
    _, d = _scatter(rng, 25)
    vals = rng.uniform(5.0, 30.0, 25)
    edges = np.linspace(0.0, float(d.max()), 9)
    h, g, counts = kriging.empirical_semivariogram(d, vals, edges)
    sel = counts > 0
    winner = kriging.fit_variogram_on_bins(d, vals, edges)
    for model in kriging.VARIOGRAM_MODELS:
        spec = kriging._fit_one_model(model, h[sel], g[sel], seed=0)
        assert winner.sse <= spec.sse + 1e-9


def test_exponential_field_recovers_exponential():
    hits = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        _, d = _scatter(rng, 40, extent=150.0)
        cov = 4.0 * np.exp(-3.0 * d / 50.0)
        chol = np.linalg.cholesky(cov + 1e-10 * np.eye(40))
        vals = 20.0 + chol @ rng.standard_normal(40)
        edges = np.linspace(0.0, float(d.max()), 11)
        vg = kriging.fit_variogram_on_bins(
            d, vals, edges, candidates=("spherical", "exponential"), seed=seed)
        hits += vg.model == "exponential"
    assert hits >= 40  # 80% of 50 replicates


def test_kriging_exactness_at_observation():
    rng = np.random.default_rng(1)
    _, d = _scatter(rng, 8)
    vals = rng.uniform(0.0, 10.0, 8)
    vg = VariogramSpec("exponential", 0.0, 2.0, 60.0)
    pred = kriging.krige_predict(d[:7, :7], d[:7, 7], vals[:7], vg)
    # target at the same location as observation 7? use obs 0 as the target
    pred0 = kriging.krige_predict(d[1:, 1:], d[1:, 0], vals[1:], vg)
    assert np.isfinite(pred) and np.isfinite(pred0)
    # exactness: target coincides with an observation
    pred_same = kriging.krige_predict(d[:7, :7], d[:7, 3], vals[:7], vg)
    assert pred_same == pytest.approx(vals[3], abs=1e-8)


def test_kriging_weights_sum_to_one():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = rng.integers(4, 12)
        _, d = _scatter(rng, n + 1)
        model = ("spherical", "exponential", "gaussian")[int(rng.integers(3))]
        vg = VariogramSpec(model, float(rng.uniform(0, 0.5)),
                           float(rng.uniform(1.0, 5.0)),
                           float(rng.uniform(20.0, 200.0)))
        w, _ = kriging.krige_weights(d[:n, :n], d[:n, n], vg)
        assert np.sum(w) == pytest.approx(1.0, abs=1e-10)


def test_kriging_translation_equivariance():
    rng = np.random.default_rng(11)
    _, d = _scatter(rng, 9)
    vals = rng.uniform(0.0, 10.0, 8)
    vg = VariogramSpec("spherical", 0.1, 2.0, 70.0)
    p1 = kriging.krige_predict(d[:8, :8], d[:8, 8], vals, vg)
    p2 = kriging.krige_predict(d[:8, :8], d[:8, 8], vals + 100.0, vg)
    assert p2 == pytest.approx(p1 + 100.0, abs=1e-8)


def test_kriging_matches_dense_solve():
    rng = np.random.default_rng(23)
    _, d = _scatter(rng, 5)
    vals = rng.uniform(0.0, 10.0, 4)
    vg = VariogramSpec("gaussian", 0.05, 1.5, 90.0)
    pred = kriging.krige_predict(d[:4, :4], d[:4, 4], vals, vg)
    gamma = variogram_value(vg, d[:4, :4])
    np.fill_diagonal(gamma, 0.0)
    a = np.zeros((5, 5))
    a[:4, :4] = gamma
    a[:4, 4] = 1.0
    a[4, :4] = 1.0
    b = np.concatenate([variogram_value(vg, d[:4, 4]), [1.0]])
    w = np.linalg.solve(a, b)[:4]
    assert pred == pytest.approx(float(w @ vals), abs=1e-10)


def test_universal_kriging_drift():
    rng = np.random.default_rng(5)
    pts, d = _scatter(rng, 12)
    drift = rng.uniform(0.0, 1.0, (11, 2))
    drift_t = rng.uniform(0.0, 1.0, 2)
    # exactly linear field: universal kriging should reproduce it
    beta = np.array([2.0, -3.0])
    vals = 5.0 + drift @ beta
    target_val = 5.0 + drift_t @ beta
    vg = VariogramSpec("exponential", 0.0, 1.0, 50.0)
    pred = kriging.krige_predict(d[:11, :11], d[:11, 11], vals, vg,
                                 mode="universal", drift_obs=drift,
                                 drift_target=drift_t)
    assert pred == pytest.approx(target_val, abs=1e-6)


def test_universal_requires_drift():
    rng = np.random.default_rng(2)
    _, d = _scatter(rng, 5)
    vg = VariogramSpec("exponential", 0.0, 1.0, 50.0)
    with pytest.raises(DomainError):
        kriging.krige_predict(d[:4, :4], d[:4, 4], np.ones(4), vg,
                              mode="universal")


def test_krige_needs_three_observations():
    vg = VariogramSpec("exponential", 0.0, 1.0, 50.0)
    with pytest.raises(FitError):
        kriging.krige_predict(np.zeros((2, 2)), np.zeros(2), np.ones(2), vg)


def test_gaussian_vine_config():
    cfg = RunConfig()
    out = kriging.gaussian_vine_config(cfg)
    assert out.candidates == ("gaussian",)
    assert out.model_kind == "gaussian-vine"
