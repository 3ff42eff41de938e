"""Station-panel data structures shared across the package.

A panel holds three variables (the dependent concentration plus two
covariates) observed at fixed stations over an equally spaced time axis.
Values are stored as a (variable, station, time) array with NaN marking
missing cells.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import SchemaError

#: fixed variable order: dependent first, then the two covariates
VARIABLES = ("pm10", "pm25", "co")
DEPENDENT = "pm10"
COVARIATE_V = "pm25"
COVARIATE_W = "co"

EARTH_RADIUS_KM = 6371.0088


@dataclass(frozen=True)
class Station:
    """A monitoring site with geographic coordinates in degrees."""

    id: str
    lon: float
    lat: float

    def __post_init__(self):
        if not (-180.0 <= self.lon <= 180.0):
            raise SchemaError(f"station {self.id}: lon {self.lon} outside [-180, 180]")
        if not (-90.0 <= self.lat <= 90.0):
            raise SchemaError(f"station {self.id}: lat {self.lat} outside [-90, 90]")


def haversine_km(lon1, lat1, lon2, lat2):
    """Great-circle distance in km between points given in degrees."""
    lon1, lat1, lon2, lat2 = map(np.radians, (lon1, lat1, lon2, lat2))
    dlon = lon2 - lon1
    dlat = lat2 - lat1
    a = np.sin(dlat / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def pairwise_distances_km(stations):
    """Symmetric (S, S) matrix of great-circle distances."""
    lon = np.array([s.lon for s in stations])
    lat = np.array([s.lat for s in stations])
    return haversine_km(lon[:, None], lat[:, None], lon[None, :], lat[None, :])


def _check_axes(stations, times, values):
    ids = [s.id for s in stations]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise SchemaError(f"duplicate station ids: {dupes}")
    times = np.asarray(times, dtype=np.int64)
    if times.size == 0:
        raise SchemaError("empty time axis")
    steps = np.diff(times)
    if times.size > 1 and (np.any(steps <= 0) or np.any(steps != steps[0])):
        raise SchemaError("time axis must be strictly increasing and equally spaced")
    values = np.asarray(values, dtype=np.float64)
    expected = (len(VARIABLES), len(stations), times.size)
    if values.shape != expected:
        raise SchemaError(f"values shape {values.shape} != {expected}")
    return times, values


@dataclass
class PanelDataset:
    """Raw or processed panel with NaN-coded missing cells."""

    stations: list
    times: np.ndarray
    values: np.ndarray  # (V, S, T), NaN = missing
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.times, self.values = _check_axes(self.stations, self.times, self.values)
        with np.errstate(invalid="ignore"):
            if np.any(self.values[np.isfinite(self.values)] < 0.0):
                raise SchemaError("concentrations must be nonnegative")
        object.__setattr__(self, "_index", {s.id: i for i, s in enumerate(self.stations)})

    @property
    def n_stations(self):
        return len(self.stations)

    @property
    def n_times(self):
        return int(self.times.size)

    def station_index(self, station_id):
        return self._index[station_id]

    def var_index(self, variable):
        return VARIABLES.index(variable)

    def missing_mask(self):
        return np.isnan(self.values)

    def subset_stations(self, keep_indices):
        keep_indices = list(keep_indices)
        return PanelDataset(
            stations=[self.stations[i] for i in keep_indices],
            times=self.times.copy(),
            values=self.values[:, keep_indices, :].copy(),
        )

    def distances_km(self):
        return pairwise_distances_km(self.stations)


@dataclass
class UniformPanel:
    """Panel after the probability integral transform; values in (0, 1)."""

    stations: list
    times: np.ndarray
    values: np.ndarray  # (V, S, T)
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.times, self.values = _check_axes(self.stations, self.times, self.values)
        if np.any((self.values <= 0.0) | (self.values >= 1.0)):
            raise SchemaError("uniform panel values must lie strictly inside (0, 1)")
        object.__setattr__(self, "_index", {s.id: i for i, s in enumerate(self.stations)})

    @property
    def n_stations(self):
        return len(self.stations)

    @property
    def n_times(self):
        return int(self.times.size)

    def station_index(self, station_id):
        return self._index[station_id]

    def subset_stations(self, keep_indices):
        keep_indices = list(keep_indices)
        return UniformPanel(
            stations=[self.stations[i] for i in keep_indices],
            times=self.times.copy(),
            values=self.values[:, keep_indices, :].copy(),
        )

    def distances_km(self):
        return pairwise_distances_km(self.stations)
