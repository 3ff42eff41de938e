"""CSV loading, station filtering, kriging imputation, weekly aggregation."""

import numpy as np
import pytest

from stvine import ingest, kriging
from stvine.errors import (ImputationError, InsufficientDataError, SchemaError,
                           UnknownStationError)
from stvine.panel import PanelDataset, Station, pairwise_distances_km


def _write_inputs(tmp_path, station_rows, obs_rows):
    st = tmp_path / "stations.csv"
    st.write_text("station_id,lon,lat\n" + "\n".join(station_rows) + "\n")
    ob = tmp_path / "observations.csv"
    ob.write_text("station_id,time,pm10,pm25,co\n" + "\n".join(obs_rows) + "\n")
    return st, ob


def test_load_small_panel(tmp_path):
    st, ob = _write_inputs(
        tmp_path,
        ["a,127.0,37.0", "b,127.5,37.2"],
        [f"{s},{t},{10 + t},{5 + t},0.4" for s in ("a", "b") for t in (1, 2, 3)])
    ds = ingest.load_panel(st, ob)
    assert ds.n_stations == 2
    assert ds.n_times == 3
    assert not np.isnan(ds.values).any()


def test_load_unknown_station(tmp_path):
    st, ob = _write_inputs(tmp_path, ["a,127.0,37.0", "b,127.5,37.2"],
                           ["a,1,10,5,0.4", "X99,1,11,6,0.5"])
    with pytest.raises(UnknownStationError, match="X99"):
        ingest.load_panel(st, ob)


def test_load_duplicate_rows_names_both_lines(tmp_path):
    st, ob = _write_inputs(tmp_path, ["a,127.0,37.0", "b,127.5,37.2"],
                           ["a,1,10,5,0.4", "a,2,11,6,0.5", "a,2,12,7,0.6"])
    with pytest.raises(SchemaError) as err:
        ingest.load_panel(st, ob)
    assert "3" in str(err.value) and "4" in str(err.value)


def test_load_non_monotone_time(tmp_path):
    st, ob = _write_inputs(tmp_path, ["a,127.0,37.0"],
                           ["a,2,10,5,0.4", "a,1,11,6,0.5"])
    with pytest.raises(SchemaError, match="non-monotone"):
        ingest.load_panel(st, ob)


def test_load_missing_cells_preserved(tmp_path):
    st, ob = _write_inputs(tmp_path, ["a,127.0,37.0", "b,127.5,37.2"],
                           ["a,1,,5,0.4", "b,1,11,6,0.5"])
    ds = ingest.load_panel(st, ob)
    assert np.isnan(ds.values[0, 0, 0])
    assert ds.values[0, 1, 0] == 11


def test_load_negative_value_rejected(tmp_path):
    st, ob = _write_inputs(tmp_path, ["a,127.0,37.0"], ["a,1,-3,5,0.4"])
    with pytest.raises(SchemaError):
        ingest.load_panel(st, ob)


def _panel_with_missing(rates, n_times=40):
    rng = np.random.default_rng(0)
    stations = [Station(f"s{i}", 127.0 + 0.1 * i, 37.0) for i in range(len(rates))]
    values = rng.uniform(10, 60, (3, len(rates), n_times))
    for i, rate in enumerate(rates):
        k = int(round(rate * n_times))
        values[0, i, :k] = np.nan
    return PanelDataset(stations=stations, times=np.arange(1, n_times + 1),
                        values=values)


def test_filter_threshold_strict():
    # 11/52 missing = 0.2115 must be dropped at threshold 0.20
    ds = _panel_with_missing([11 / 52, 0.0, 0.0], n_times=52)
    kept = ingest.filter_stations(ds, 0.20)
    assert kept.n_stations == 2
    assert all(s.id != "s0" for s in kept.stations)


def test_filter_keep_all_at_one():
    ds = _panel_with_missing([0.5, 0.9, 0.0])
    assert ingest.filter_stations(ds, 1.0).n_stations == 3


def test_filter_rates_mixture():
    ds = _panel_with_missing([0.0, 0.10, 0.25])
    assert ingest.filter_stations(ds, 0.20).n_stations == 2


def test_filter_idempotent():
    ds = _panel_with_missing([0.0, 0.05, 0.25, 0.10])
    once = ingest.filter_stations(ds, 0.20)
    twice = ingest.filter_stations(once, 0.20)
    assert [s.id for s in once.stations] == [s.id for s in twice.stations]
    assert np.array_equal(once.values, twice.values, equal_nan=True)


def test_filter_insufficient():
    ds = _panel_with_missing([0.5, 0.6, 0.7])
    with pytest.raises(InsufficientDataError):
        ingest.filter_stations(ds, 0.20)


def test_impute_identity_when_complete(small_panel):
    out = ingest.impute_missing(small_panel)
    assert out is small_panel


def test_impute_constant_field_exact():
    stations = [Station("a", 127.0, 37.0), Station("b", 127.0, 37.1),
                Station("c", 127.0, 37.2), Station("d", 127.0, 37.3)]
    values = np.full((3, 4, 5), 7.5)
    values[0, 2, 3] = np.nan
    ds = PanelDataset(stations=stations, times=np.arange(1, 6), values=values)
    out = ingest.impute_missing(ds)
    assert out.values[0, 2, 3] == pytest.approx(7.5, abs=1e-8)


def test_impute_observed_cells_bitwise_unchanged():
    rng = np.random.default_rng(4)
    stations = [Station(f"s{i}", 127.0 + 0.07 * i, 37.0 + 0.05 * (i % 3))
                for i in range(6)]
    values = rng.uniform(5, 50, (3, 6, 8))
    values[0, 1, 2] = np.nan
    values[2, 4, 6] = np.nan
    ds = PanelDataset(stations=stations, times=np.arange(1, 9), values=values)
    out = ingest.impute_missing(ds)
    mask = ~np.isnan(ds.values)
    assert np.array_equal(out.values[mask], ds.values[mask])
    assert not np.isnan(out.values).any()
    assert np.all(out.values >= 0.0)


def test_impute_matches_dense_kriging_solve():
    # 5 stations, 1 missing; long-range spherical: verify against a direct
    # linear solve of the ordinary-kriging system
    stations = [Station("a", 127.0, 37.0), Station("b", 127.1, 37.05),
                Station("c", 127.2, 36.95), Station("d", 127.05, 37.15),
                Station("e", 127.15, 37.1)]
    dists = pairwise_distances_km(stations)
    vg = kriging.VariogramSpec("spherical", 0.0, 4.0, 10 * float(dists.max()))
    obs = np.array([12.0, 15.0, 9.0, 20.0])
    pred = kriging.krige_predict(dists[:4, :4], dists[:4, 4], obs, vg)
    n = 4
    a = np.zeros((n + 1, n + 1))
    a[:n, :n] = kriging.variogram_value(vg, dists[:4, :4])
    np.fill_diagonal(a[:n, :n], 0.0)
    a[:n, n] = 1.0
    a[n, :n] = 1.0
    b = np.concatenate([kriging.variogram_value(vg, dists[:4, 4]), [1.0]])
    w = np.linalg.solve(a, b)[:n]
    assert pred == pytest.approx(float(w @ obs), abs=1e-10)


def test_impute_too_few_observed():
    stations = [Station(f"s{i}", 127.0 + 0.1 * i, 37.0) for i in range(4)]
    values = np.full((3, 4, 2), 5.0)
    values[0, :2, 0] = np.nan  # slice 0 has only 2 observed pm10 stations
    ds = PanelDataset(stations=stations, times=np.array([1, 2]), values=values)
    with pytest.raises(ImputationError, match="time 1"):
        ingest.impute_missing(ds)


def test_aggregate_constant_week():
    stations = [Station("a", 127.0, 37.0), Station("b", 127.1, 37.0)]
    values = np.full((3, 2, 14), 3.0)
    ds = PanelDataset(stations=stations, times=np.arange(1, 15), values=values)
    out = ingest.aggregate_to_weekly(ds)
    assert out.n_times == 2
    assert np.allclose(out.values, 3.0)


def test_aggregate_mean():
    stations = [Station("a", 127.0, 37.0), Station("b", 127.1, 37.0)]
    values = np.ones((3, 2, 7))
    values[0, 0, :] = np.arange(1.0, 8.0)
    ds = PanelDataset(stations=stations, times=np.arange(1, 8), values=values)
    out = ingest.aggregate_to_weekly(ds)
    assert out.values[0, 0, 0] == pytest.approx(4.0)


def test_aggregate_364_days_gives_52_weeks():
    stations = [Station("a", 127.0, 37.0), Station("b", 127.1, 37.0)]
    rng = np.random.default_rng(1)
    values = rng.uniform(1, 9, (3, 2, 364))
    ds = PanelDataset(stations=stations, times=np.arange(1, 365), values=values)
    out = ingest.aggregate_to_weekly(ds)
    assert out.n_times == 52
    assert np.mean(out.values) == pytest.approx(np.mean(values), abs=1e-12)


def test_aggregate_missing_day_voids_week():
    stations = [Station("a", 127.0, 37.0), Station("b", 127.1, 37.0)]
    values = np.full((3, 2, 7), 2.0)
    values[0, 0, 3] = np.nan
    ds = PanelDataset(stations=stations, times=np.arange(1, 8), values=values)
    out = ingest.aggregate_to_weekly(ds)
    assert np.isnan(out.values[0, 0, 0])
    assert out.values[0, 1, 0] == pytest.approx(2.0)


def test_aggregate_shape_error():
    stations = [Station("a", 127.0, 37.0), Station("b", 127.1, 37.0)]
    values = np.ones((3, 2, 10))
    ds = PanelDataset(stations=stations, times=np.arange(1, 11), values=values)
    with pytest.raises(SchemaError):
        ingest.aggregate_to_weekly(ds)


def test_missingness_report():
    ds = _panel_with_missing([0.25, 0.0], n_times=40)
    rep = ingest.missingness_report(ds)
    assert rep.rate("s0", "pm10") == pytest.approx(0.25)
    assert rep.rate("s1", "pm10") == 0.0
    lines = rep.to_csv().splitlines()
    assert lines[0] == "station_id,variable,missing_count,missing_rate"


def test_dataset_file_roundtrip(tmp_path, small_panel):
    path = tmp_path / "panel.txt"
    ingest.save_dataset(small_panel, path)
    back = ingest.load_dataset(path)
    assert [s.id for s in back.stations] == [s.id for s in small_panel.stations]
    assert np.array_equal(back.values, small_panel.values)
