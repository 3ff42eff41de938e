"""Bins, correlograms, tau polynomials, the distance-mixed copula, and
neighborhood construction."""

import numpy as np
import pytest

from stvine import spatial
from stvine.copulas import BivariateCopulaSpec, copula_pdf
from stvine.errors import (BoundaryError, FitError, InsufficientDataError,
                           RebinError)
from stvine.marginals import fit_marginal_table, pit_transform
from stvine.panel import Station
from stvine.spatial import (BinPartition, Correlogram, FamilyChoice, StCopula,
                            TauPolynomial, build_neighborhood,
                            empirical_correlogram, fit_tau_polynomial,
                            make_bins)

KM_PER_DEG_LAT = 111.19492664455873


def _line_stations(dists_km):
    """Stations along a meridian at the requested distances from a base."""
    out = [Station("s000", 0.0, 0.0)]
    for i, d in enumerate(dists_km, start=1):
        out.append(Station(f"s{i:03d}", 0.0, d / KM_PER_DEG_LAT))
    return out


def test_make_bins_one_pair_per_bin():
    stations = _line_stations([10.0, 30.0])  # mutual distances 10, 20, 30
    bins = make_bins(stations, 3)
    assert np.allclose(bins.mean_distances, [10.0, 20.0, 30.0], atol=1e-3)


def test_make_bins_single_bin():
    stations = _line_stations([10.0, 30.0])
    bins = make_bins(stations, 1)
    assert bins.n_bins == 1
    assert bins.mean_distances[0] == pytest.approx(20.0, abs=1e-3)


def test_make_bins_empty_bin_errors():
    # distances 10, 20, 30 leave (30/4, 2*30/4] empty with 4 bins
    stations = _line_stations([10.0, 30.0])
    with pytest.raises(RebinError):
        make_bins(stations, 4)


def test_make_bins_needs_enough_distances():
    stations = _line_stations([10.0])
    with pytest.raises(InsufficientDataError):
        make_bins(stations, 3)


def test_bin_assignment_right_closed():
    bins = BinPartition(edges=np.array([0.0, 10.0, 20.0, 30.0]),
                        mean_distances=np.array([5.0, 15.0, 25.0]))
    assert list(bins.assign([0.0, 10.0, 10.5, 20.0, 29.0, 30.0])) == \
        [0, 0, 1, 1, 2, 2]


def _uniform_panel_from(values, stations):
    from stvine.panel import UniformPanel
    return UniformPanel(stations=stations,
                        times=np.arange(1, values.shape[2] + 1), values=values)


def test_correlogram_identical_series_gives_tau_one():
    rng = np.random.default_rng(0)
    stations = [Station(f"s{i}", 0.01 * i, 0.02 * ((i * 7) % 5)) for i in range(6)]
    series = rng.uniform(0.05, 0.95, 30)
    values = np.tile(series, (3, 6, 1))
    up = _uniform_panel_from(values, stations)
    bins = make_bins(stations, 2)
    cg = empirical_correlogram(up, bins, lags=(0,), min_pairs=5)
    assert np.allclose(cg.taus[0], 1.0, atol=1e-12)


def test_correlogram_independent_noise_near_zero():
    rng = np.random.default_rng(99)
    stations = [Station(f"s{i:02d}", 0.05 * (i % 5), 0.06 * (i // 5))
                for i in range(20)]
    values = rng.uniform(1e-6, 1 - 1e-6, (3, 20, 40))
    up = _uniform_panel_from(values, stations)
    bins = make_bins(stations, 3)
    cg = empirical_correlogram(up, bins, lags=(0, 1))
    big = cg.counts >= 500
    assert big.any()
    assert np.all(np.abs(cg.taus[big]) < 0.05)


def test_fit_tau_polynomial_constant():
    bins = BinPartition(edges=np.array([0.0, 20.0, 40.0, 60.0, 80.0]),
                        mean_distances=np.array([10.0, 30.0, 50.0, 70.0]))
    cg = Correlogram(taus=np.full((1, 4), 0.4), counts=np.full((1, 4), 100),
                     lags=(0,))
    poly = fit_tau_polynomial(cg, bins, degree=3)
    for h in (0.0, 12.0, 55.0, 80.0):
        assert poly.tau(h, 0) == pytest.approx(0.4, abs=1e-8)


def test_fit_tau_polynomial_linear_interpolation():
    bins = BinPartition(edges=np.array([0.0, 20.0, 40.0]),
                        mean_distances=np.array([10.0, 30.0]))
    cg = Correlogram(taus=np.array([[0.6, 0.2]]), counts=np.full((1, 2), 50),
                     lags=(0,))
    poly = fit_tau_polynomial(cg, bins, degree=1)
    assert poly.tau(20.0, 0) == pytest.approx(0.4, abs=1e-10)


def test_fit_tau_polynomial_matches_normal_equations():
    rng = np.random.default_rng(5)
    l_b = np.linspace(5.0, 95.0, 10)
    taus = 0.7 * np.exp(-l_b / 60.0) + rng.normal(0, 0.02, 10)
    counts = rng.integers(50, 500, 10)
    bins = BinPartition(edges=np.linspace(0, 100, 11), mean_distances=l_b)
    cg = Correlogram(taus=taus[None, :], counts=counts[None, :], lags=(0,))
    poly = fit_tau_polynomial(cg, bins, degree=2)
    # dense weighted normal equations as the oracle
    v = np.vander(l_b, 3, increasing=True)
    w = np.diag(counts.astype(float))
    coef = np.linalg.solve(v.T @ w @ v, v.T @ w @ taus)
    assert np.allclose(poly.coeffs[0], coef, atol=1e-8)


def test_fit_tau_polynomial_underdetermined():
    bins = BinPartition(edges=np.array([0.0, 20.0, 40.0]),
                        mean_distances=np.array([10.0, 30.0]))
    cg = Correlogram(taus=np.array([[0.6, 0.2]]), counts=np.full((1, 2), 50),
                     lags=(0,))
    with pytest.raises(FitError):
        fit_tau_polynomial(cg, bins, degree=3)


def _constant_st_copula(families, taus, l_b):
    """StCopula with constant per-lag tau polynomials for direct testing."""
    n = len(l_b)
    bins = BinPartition(edges=np.linspace(0.0, l_b[-1] + 10.0, n + 1),
                        mean_distances=np.asarray(l_b, dtype=float))
    coeffs = np.array([[taus[0]], [taus[1]]])
    poly = TauPolynomial(coeffs=coeffs, lags=(0, 1), h_max=l_b[-1] + 10.0,
                         residuals=[np.zeros(n), np.zeros(n)])
    choices = [[FamilyChoice(f) for f in families] for _ in range(2)]
    return StCopula(bins=bins, poly=poly, choices=choices)


def test_st_density_beyond_last_bin_is_one():
    st = _constant_st_copula(["gumbel", "gumbel", "gumbel"], (0.5, 0.3),
                             [10.0, 20.0, 30.0])
    u = np.linspace(0.1, 0.9, 9)
    assert np.allclose(st.density(30.0, 0, u, u[::-1]), 1.0)
    assert np.allclose(st.density(55.0, 0, u, u[::-1]), 1.0)


def test_st_density_midpoint_mixture():
    st = _constant_st_copula(["gumbel", "clayton", "frank"], (0.5, 0.3),
                             [10.0, 20.0, 30.0])
    u, v = 0.3, 0.7
    mid = st.density(15.0, 0, u, v)
    c1 = st.spec_at(0, 0, 15.0)
    c2 = st.spec_at(1, 0, 15.0)
    want = 0.5 * copula_pdf(c1, u, v) + 0.5 * copula_pdf(c2, u, v)
    assert mid == pytest.approx(want, abs=1e-12)


def test_st_density_continuous_at_boundaries():
    st = _constant_st_copula(["gumbel", "clayton", "frank", "gaussian"],
                             (0.45, 0.2), [10.0, 20.0, 30.0, 40.0])
    u = np.array([0.25, 0.5, 0.75])
    v = np.array([0.6, 0.4, 0.9])
    for boundary in (10.0, 20.0, 30.0, 40.0):
        left = st.density(boundary - 1e-7, 0, u, v)
        right = st.density(boundary + 1e-7, 0, u, v)
        assert np.allclose(left, right, atol=1e-5)
        # limits themselves agree to 1e-9 via the lambda construction
        lo = st.density(np.nextafter(boundary, 0.0), 0, u, v)
        hi = st.density(boundary, 0, u, v)
        assert np.allclose(lo, hi, atol=1e-9)


def test_st_density_unit_mass():
    st = _constant_st_copula(["gumbel", "clayton", "frank"], (0.5, 0.3),
                             [10.0, 20.0, 30.0])
    x, w = np.polynomial.legendre.leggauss(200)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    uu, vv = np.meshgrid(x, x)
    ww = np.outer(w, w).ravel()
    for h in np.linspace(1.0, 45.0, 10):
        mass = float(ww @ st.density(float(h), 0, uu.ravel(), vv.ravel()))
        assert mass == pytest.approx(1.0, abs=1e-3)


def test_st_hfunc_hinv_roundtrip():
    st = _constant_st_copula(["gumbel", "clayton", "frank"], (0.5, 0.3),
                             [10.0, 20.0, 30.0])
    rng = np.random.default_rng(2)
    u = rng.uniform(0.05, 0.95, 50)
    given = rng.uniform(0.05, 0.95, 50)
    for h in (5.0, 15.0, 25.0, 50.0):
        z = st.hfunc1(h, 0, u, given)
        back = st.hinv1(h, 0, z, given)
        assert np.allclose(back, u, atol=1e-7)


def test_fit_st_copula_on_dependent_panel(small_fit):
    _, upanel = small_fit
    bins = make_bins(upanel.stations, 3)
    st = spatial.fit_st_copula(upanel, bins, min_pairs=20)
    assert len(st.choices) == 2
    assert len(st.choices[0]) == 3
    # lag-0 taus decay with distance on the synthetic field
    taus = st.correlogram.taus[0]
    assert taus[0] > taus[-1]


def test_neighborhood_counts(small_fit):
    _, upanel = small_fit
    st0 = upanel.stations[0]
    nb = build_neighborhood(upanel, st0.lon, st0.lat, 3, covariates="both",
                            exclude_station=st0.id)
    assert len(nb) == 10
    groups = [n.group for n in nb.neighbors]
    assert groups == ["v", "v", "w", "w"] + ["dep"] * 6
    nb8 = build_neighborhood(upanel, st0.lon, st0.lat, 3, covariates="pm25",
                             exclude_station=st0.id)
    assert len(nb8) == 8
    nb6 = build_neighborhood(upanel, st0.lon, st0.lat, 3, covariates="none",
                             exclude_station=st0.id)
    assert len(nb6) == 6


def test_neighborhood_nearest_selection():
    stations = _line_stations([1.0, 5.0, 9.0])
    rng = np.random.default_rng(0)
    values = rng.uniform(0.1, 0.9, (3, 4, 6))
    up = _uniform_panel_from(values, stations)
    nb = build_neighborhood(up, 0.0, 0.0, 2, d_spatial=1, dc_spatial=1,
                            covariates="none", exclude_station="s000")
    assert all(n.station_id == "s001" for n in nb.neighbors)
    assert nb.neighbors[0].distance_km == pytest.approx(1.0, abs=1e-6)


def test_neighborhood_lag_values():
    stations = _line_stations([1.0, 5.0, 9.0])
    values = np.tile(np.arange(1, 7, dtype=float)[None, None, :] / 10.0,
                     (3, 4, 1))
    up = _uniform_panel_from(values, stations)
    nb = build_neighborhood(up, 0.0, 0.0, 3, d_spatial=1, dc_spatial=1,
                            covariates="none", exclude_station="s000")
    lag0, lag1 = nb.neighbors
    assert lag0.lag == 0 and lag0.value == pytest.approx(0.4)
    assert lag1.lag == 1 and lag1.value == pytest.approx(0.3)


def test_neighborhood_boundary_error(small_fit):
    _, upanel = small_fit
    st0 = upanel.stations[0]
    with pytest.raises(BoundaryError):
        build_neighborhood(upanel, st0.lon, st0.lat, 0,
                           exclude_station=st0.id)


def test_neighborhood_deterministic(small_fit):
    _, upanel = small_fit
    st0 = upanel.stations[0]
    a = build_neighborhood(upanel, st0.lon, st0.lat, 4, exclude_station=st0.id)
    b = build_neighborhood(upanel, st0.lon, st0.lat, 4, exclude_station=st0.id)
    assert [n.station_id for n in a.neighbors] == \
        [n.station_id for n in b.neighbors]
    assert np.array_equal(a.values(), b.values())


def test_neighborhood_insufficient_stations():
    stations = _line_stations([1.0])
    rng = np.random.default_rng(0)
    values = rng.uniform(0.1, 0.9, (3, 2, 6))
    up = _uniform_panel_from(values, stations)
    with pytest.raises(InsufficientDataError):
        build_neighborhood(up, 0.0, 0.0, 2, d_spatial=3, covariates="none",
                           exclude_station="s000")
