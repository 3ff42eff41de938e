"""Loading, validation, filtering, imputation, and weekly aggregation of
station-panel CSV data.

Input formats:

* ``stations.csv`` with header ``station_id,lon,lat``
* ``observations.csv`` with header ``station_id,time,pm10,pm25,co`` where an
  empty field marks a missing cell and ``time`` is a 1-based integer index

Missing cells are imputed per time slice by ordinary kriging, choosing
between spherical and exponential covariance models by the smaller sum of
squared errors on a fixed-width distance binning.
"""

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import kriging
from .errors import (ImputationError, InsufficientDataError, ParseError,
                     SchemaError, UnknownStationError)
from .panel import VARIABLES, PanelDataset, Station

IMPUTE_BIN_WIDTH_KM = 50.0
WEEK_LENGTH = 7


@dataclass
class MissingnessReport:
    """Missing counts and rates per station and variable."""

    station_ids: list
    counts: np.ndarray  # (V, S) int
    n_times: int

    def rate(self, station_id, variable):
        si = self.station_ids.index(station_id)
        vi = VARIABLES.index(variable)
        return self.counts[vi, si] / self.n_times

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["station_id", "variable", "missing_count", "missing_rate"])
        for si, sid in enumerate(self.station_ids):
            for vi, var in enumerate(VARIABLES):
                w.writerow([sid, var, int(self.counts[vi, si]),
                            repr(self.counts[vi, si] / self.n_times)])
        return buf.getvalue()


def missingness_report(ds):
    counts = np.isnan(ds.values).sum(axis=2)
    return MissingnessReport(station_ids=[s.id for s in ds.stations],
                             counts=counts, n_times=ds.n_times)


def _parse_float(token, line_no, what):
    token = token.strip()
    if token == "":
        return np.nan
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"line {line_no}: cannot parse {what} value {token!r}")


def load_stations(path):
    stations = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["station_id", "lon", "lat"]:
            raise SchemaError(f"{path}: expected header station_id,lon,lat")
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise ParseError(f"line {line_no}: expected 3 fields, got {len(row)}")
            sid = row[0].strip()
            lon = _parse_float(row[1], line_no, "lon")
            lat = _parse_float(row[2], line_no, "lat")
            if np.isnan(lon) or np.isnan(lat):
                raise ParseError(f"line {line_no}: station {sid} has empty coordinates")
            stations.append(Station(sid, lon, lat))
    ids = [s.id for s in stations]
    if len(set(ids)) != len(ids):
        raise SchemaError(f"{path}: duplicate station ids")
    if not stations:
        raise SchemaError(f"{path}: no stations")
    return stations


def load_panel(stations_file, observations_file):
    """Load the two CSVs into a PanelDataset, preserving missing cells."""
    stations = load_stations(stations_file)
    index = {s.id: i for i, s in enumerate(stations)}

    rows = []
    seen = {}
    max_time = 0
    with open(observations_file, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["station_id", "time"] + list(VARIABLES)
        if header is None or [h.strip() for h in header] != expected:
            raise SchemaError(
                f"{observations_file}: expected header {','.join(expected)}")
        prev_time_by_station = {}
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 5:
                raise ParseError(f"line {line_no}: expected 5 fields, got {len(row)}")
            sid = row[0].strip()
            if sid not in index:
                raise UnknownStationError(
                    f"line {line_no}: unknown station id {sid!r}")
            try:
                t = int(row[1])
            except ValueError:
                raise ParseError(f"line {line_no}: bad time index {row[1]!r}")
            if t < 1:
                raise SchemaError(f"line {line_no}: time index must be >= 1")
            key = (sid, t)
            if key in seen:
                raise SchemaError(
                    f"duplicate observation for station {sid} time {t} "
                    f"on lines {seen[key]} and {line_no}")
            seen[key] = line_no
            prev = prev_time_by_station.get(sid)
            if prev is not None and t <= prev:
                raise SchemaError(
                    f"line {line_no}: non-monotone time column for station {sid} "
                    f"({t} after {prev})")
            prev_time_by_station[sid] = t
            vals = [_parse_float(row[2 + k], line_no, VARIABLES[k]) for k in range(3)]
            for k, val in enumerate(vals):
                if not np.isnan(val) and val < 0.0:
                    raise ParseError(
                        f"line {line_no}: negative {VARIABLES[k]} value {val}")
            rows.append((index[sid], t, vals))
            max_time = max(max_time, t)

    if max_time == 0:
        raise SchemaError(f"{observations_file}: no observations")
    values = np.full((len(VARIABLES), len(stations), max_time), np.nan)
    for si, t, vals in rows:
        values[:, si, t - 1] = vals
    return PanelDataset(stations=stations, times=np.arange(1, max_time + 1),
                        values=values)


def filter_stations(ds, max_missing_rate):
    """Keep stations whose missing rate is strictly below the threshold for
    every variable."""
    if not (0.0 <= max_missing_rate <= 1.0):
        raise SchemaError("max_missing_rate must lie in [0, 1]")
    rates = np.isnan(ds.values).sum(axis=2) / ds.n_times  # (V, S)
    if max_missing_rate == 1.0:
        keep = np.ones(ds.n_stations, dtype=bool)
    else:
        keep = np.all(rates < max_missing_rate, axis=0)
    kept = np.where(keep)[0]
    if kept.size < 2:
        raise InsufficientDataError(
            f"filtering at {max_missing_rate} keeps {kept.size} station(s); "
            "need at least 2")
    return ds.subset_stations(kept)


def impute_missing(ds, bin_width_km=IMPUTE_BIN_WIDTH_KM, seed=0):
    """Fill missing cells by per-slice ordinary kriging.

    Covariance per slice is chosen between spherical and exponential by the
    smaller fitting SSE; imputed concentrations are clamped at 0 from
    below; observed cells pass through bitwise-unchanged.
    """
    mask = np.isnan(ds.values)
    if not mask.any():
        return ds
    dists = ds.distances_km()
    max_d = float(dists.max())
    n_edges = max(int(np.ceil(max_d / bin_width_km)) + 1, 2)
    edges = np.arange(n_edges, dtype=np.float64) * bin_width_km
    if edges[-1] < max_d:
        edges = np.append(edges, max_d)

    out = ds.values.copy()
    for vi in range(len(VARIABLES)):
        for ti in range(ds.n_times):
            miss = mask[vi, :, ti]
            if not miss.any():
                continue
            obs = ~miss
            n_obs = int(obs.sum())
            if n_obs < 3:
                raise ImputationError(
                    f"variable {VARIABLES[vi]} time {ds.times[ti]}: only "
                    f"{n_obs} observed stations, need 3")
            obs_idx = np.where(obs)[0]
            vals = ds.values[vi, obs_idx, ti]
            sub_d = dists[np.ix_(obs_idx, obs_idx)]
            try:
                vg = kriging.fit_variogram_on_bins(
                    sub_d, vals, edges, candidates=kriging.IMPUTATION_MODELS,
                    seed=seed, min_bins=2)
            except Exception:
                # tiny or degenerate slice: fall back to a generic model
                sill = max(float(np.var(vals)), 1e-12)
                vg = kriging.VariogramSpec("exponential", 0.0, sill,
                                           max(max_d / 2.0, 1e-6))
            for mi in np.where(miss)[0]:
                pred = kriging.krige_predict(
                    sub_d, dists[obs_idx, mi], vals, vg, mode="ordinary")
                out[vi, mi, ti] = max(pred, 0.0)
    return PanelDataset(stations=list(ds.stations), times=ds.times.copy(),
                        values=out)


def aggregate_to_weekly(ds, week_length=WEEK_LENGTH):
    """Mean of consecutive 7-step blocks; a week is missing if any
    constituent step is missing."""
    if ds.n_times % week_length != 0:
        raise SchemaError(
            f"time axis length {ds.n_times} not divisible by {week_length}")
    n_weeks = ds.n_times // week_length
    blocks = ds.values.reshape(ds.values.shape[0], ds.values.shape[1],
                               n_weeks, week_length)
    weekly = blocks.mean(axis=3)  # NaN propagates: any missing day voids the week
    return PanelDataset(stations=list(ds.stations),
                        times=np.arange(1, n_weeks + 1), values=weekly)


# ---------------------------------------------------------------------------
# processed-dataset file (sectioned plain text)
# ---------------------------------------------------------------------------

DATASET_MAGIC = "# stvine dataset v1"


def dataset_text(ds):
    lines = [DATASET_MAGIC, "[stations]", "station_id,lon,lat"]
    for s in ds.stations:
        lines.append(f"{s.id},{float(s.lon)!r},{float(s.lat)!r}")
    lines.append("[panel]")
    lines.append("station_id,time," + ",".join(VARIABLES))
    for si, s in enumerate(ds.stations):
        for ti, t in enumerate(ds.times):
            cell = ds.values[:, si, ti]
            fields = ["" if np.isnan(x) else repr(float(x)) for x in cell]
            lines.append(f"{s.id},{int(t)}," + ",".join(fields))
    return "\n".join(lines) + "\n"


def save_dataset(ds, path):
    with open(path, "w") as fh:
        fh.write(dataset_text(ds))


def load_dataset(path):
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != DATASET_MAGIC:
        raise SchemaError(f"{path}: not a stvine dataset file")
    try:
        s_at = lines.index("[stations]")
        p_at = lines.index("[panel]")
    except ValueError:
        raise SchemaError(f"{path}: missing [stations] or [panel] section")
    stations = []
    for ln in lines[s_at + 2:p_at]:
        if not ln.strip():
            continue
        sid, lon, lat = ln.split(",")
        stations.append(Station(sid, float(lon), float(lat)))
    index = {s.id: i for i, s in enumerate(stations)}
    records = []
    max_t = 0
    for ln in lines[p_at + 2:]:
        if not ln.strip():
            continue
        parts = ln.split(",")
        sid, t = parts[0], int(parts[1])
        vals = [np.nan if f == "" else float(f) for f in parts[2:]]
        records.append((index[sid], t, vals))
        max_t = max(max_t, t)
    values = np.full((len(VARIABLES), len(stations), max_t), np.nan)
    for si, t, vals in records:
        values[:, si, t - 1] = vals
    return PanelDataset(stations=stations, times=np.arange(1, max_t + 1),
                        values=values)
