"""Dataset ingestion, cleaning, windowing, and normalization.

The interchange format is four CSVs (stations, poi, aqi, weather) on a
strict hourly timeline. Ingestion aligns everything onto one frame, projects
lat/lon onto a local km plane, and derives city locations as the mean of
their member stations. Missing values are linearly interpolated per series
(categorical wind labels are forward-filled), capped at 20% missing.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import DataError, ValidationError

WEATHER_FIELDS = ("temperature", "humidity", "rainfall", "wind_speed", "pressure")

KM_PER_DEG_LAT = 110.57
KM_PER_DEG_LON_EQ = 111.32


def parse_timestamp(text: str) -> int:
    """ISO-8601 hour timestamp -> integer hours since the epoch (UTC)."""
    try:
        dt = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    except ValueError as exc:
        raise DataError(f"bad timestamp {text!r}: {exc}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    seconds = dt.timestamp()
    if seconds % 3600 != 0:
        raise DataError(f"non-hourly timestamp {text!r} (minutes/seconds must be zero)")
    return int(seconds // 3600)


def format_timestamp(hour: int) -> str:
    dt = datetime.fromtimestamp(hour * 3600, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:00:00Z")


def project_latlon(lat: np.ndarray, lon: np.ndarray, ref_lat: float, ref_lon: float) -> np.ndarray:
    """Equirectangular degrees -> km about a dataset-wide reference point."""
    x = (np.asarray(lon) - ref_lon) * np.cos(np.deg2rad(ref_lat)) * KM_PER_DEG_LON_EQ
    y = (np.asarray(lat) - ref_lat) * KM_PER_DEG_LAT
    return np.stack([x, y], axis=-1)


def unproject_km(points: np.ndarray, ref_lat: float, ref_lon: float) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    lat = ref_lat + pts[..., 1] / KM_PER_DEG_LAT
    lon = ref_lon + pts[..., 0] / (KM_PER_DEG_LON_EQ * np.cos(np.deg2rad(ref_lat)))
    return np.stack([lat, lon], axis=-1)


@dataclass
class StationRecord:
    station_id: str
    city_id: str
    latitude: float
    longitude: float
    poi: np.ndarray = field(default=None)  # (5,) counts

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise DataError(f"station {self.station_id}: latitude {self.latitude} out of range")
        if not -180.0 <= self.longitude <= 180.0:
            raise DataError(f"station {self.station_id}: longitude {self.longitude} out of range")
        if self.poi is not None:
            self.poi = np.asarray(self.poi, dtype=np.float64)
            if self.poi.shape != (5,) or (self.poi < 0).any():
                raise DataError(f"station {self.station_id}: poi must be 5 non-negative counts")


@dataclass
class TimeSeriesFrame:
    """Aligned hourly frame: per-station AQI plus per-city weather."""

    t0: int  # hours since epoch of row 0
    cities: list[str]
    stations: list[StationRecord]
    station_city: np.ndarray  # (n_st,) index into cities
    aqi: np.ndarray  # (T, n_st), NaN = missing
    weather: np.ndarray  # (T, n_c, 5), NaN = missing
    wind_label: np.ndarray  # (T, n_c) str, "" = missing
    station_points: np.ndarray  # (n_st, 2) km
    city_points: np.ndarray  # (n_c, 2) km
    city_latlon: np.ndarray  # (n_c, 2) degrees
    ref_latlon: tuple[float, float]

    @property
    def hours(self) -> int:
        return self.aqi.shape[0]

    @property
    def n_stations(self) -> int:
        return len(self.stations)

    @property
    def n_cities(self) -> int:
        return len(self.cities)

    def timestamp(self, row: int) -> str:
        return format_timestamp(self.t0 + row)

    def row_of(self, timestamp: str) -> int:
        row = parse_timestamp(timestamp) - self.t0
        if not 0 <= row < self.hours:
            raise DataError(f"timestamp {timestamp} outside the frame range")
        return row

    def stations_of_city(self, city_idx: int) -> np.ndarray:
        return np.nonzero(self.station_city == city_idx)[0]


def _read_csv(path, required: tuple[str, ...]) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing input file: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        missing = [c for c in required if c not in cols]
        if missing:
            raise DataError(f"{path.name}: missing columns {missing}")
        return list(reader)


def ingest(stations_csv, aqi_csv, weather_csv, poi_csv) -> TimeSeriesFrame:
    """Align the four CSVs onto one hourly frame; row order never matters."""
    station_rows = _read_csv(stations_csv, ("station_id", "city_id", "lat", "lon"))
    if not station_rows:
        raise DataError("stations.csv is empty")
    by_id: dict[str, StationRecord] = {}
    for row in station_rows:
        sid = row["station_id"].strip()
        if sid in by_id:
            raise DataError(f"duplicate station_id {sid!r} in stations.csv")
        by_id[sid] = StationRecord(sid, row["city_id"].strip(), float(row["lat"]), float(row["lon"]))

    poi_rows = _read_csv(poi_csv, ("station_id", "residential", "park", "mountain", "water", "industrial"))
    for row in poi_rows:
        sid = row["station_id"].strip()
        if sid not in by_id:
            raise DataError(f"poi.csv references unknown station_id {sid!r}")
        by_id[sid].poi = [float(row[k]) for k in ("residential", "park", "mountain", "water", "industrial")]
    lacking = [sid for sid, rec in by_id.items() if rec.poi is None]
    if lacking:
        raise DataError(f"poi.csv has no rows for stations {sorted(lacking)}")

    stations = [by_id[sid] for sid in sorted(by_id)]
    cities = sorted({rec.city_id for rec in stations})
    city_index = {cid: i for i, cid in enumerate(cities)}
    station_index = {rec.station_id: i for i, rec in enumerate(stations)}
    station_city = np.array([city_index[rec.city_id] for rec in stations], dtype=np.int64)

    aqi_rows = _read_csv(aqi_csv, ("station_id", "timestamp", "aqi"))
    weather_rows = _read_csv(weather_csv, ("city_id", "timestamp") + WEATHER_FIELDS + ("wind_direction",))

    hours = set()
    parsed_aqi = []
    for row in aqi_rows:
        sid = row["station_id"].strip()
        if sid not in station_index:
            raise DataError(f"aqi.csv references unknown station_id {sid!r}")
        h = parse_timestamp(row["timestamp"])
        hours.add(h)
        parsed_aqi.append((h, station_index[sid], row["aqi"].strip()))
    parsed_weather = []
    for row in weather_rows:
        cid = row["city_id"].strip()
        if cid not in city_index:
            raise DataError(f"weather.csv references unknown city_id {cid!r}")
        h = parse_timestamp(row["timestamp"])
        hours.add(h)
        parsed_weather.append((h, city_index[cid], row))
    if not hours:
        raise DataError("no timestamped rows in aqi.csv/weather.csv")

    t0, t_last = min(hours), max(hours)
    n_hours = t_last - t0 + 1
    n_st, n_c = len(stations), len(cities)

    aqi = np.full((n_hours, n_st), np.nan)
    seen = set()
    for h, s, text in parsed_aqi:
        key = (h, s)
        if key in seen:
            raise DataError(
                f"duplicate aqi row for station {stations[s].station_id!r} at {format_timestamp(h)}"
            )
        seen.add(key)
        if text != "":
            aqi[h - t0, s] = float(text)

    weather = np.full((n_hours, n_c, len(WEATHER_FIELDS)), np.nan)
    wind_label = np.full((n_hours, n_c), "", dtype=object)
    seen_w = set()
    for h, c, row in parsed_weather:
        key = (h, c)
        if key in seen_w:
            raise DataError(f"duplicate weather row for city {cities[c]!r} at {format_timestamp(h)}")
        seen_w.add(key)
        for j, name in enumerate(WEATHER_FIELDS):
            text = row[name].strip()
            if text != "":
                weather[h - t0, c, j] = float(text)
        wind_label[h - t0, c] = row["wind_direction"].strip()

    lats = np.array([rec.latitude for rec in stations])
    lons = np.array([rec.longitude for rec in stations])
    ref_lat, ref_lon = float(lats.mean()), float(lons.mean())
    station_points = project_latlon(lats, lons, ref_lat, ref_lon)
    city_latlon = np.zeros((n_c, 2))
    for ci in range(n_c):
        member = station_city == ci
        city_latlon[ci] = [lats[member].mean(), lons[member].mean()]
    city_points = project_latlon(city_latlon[:, 0], city_latlon[:, 1], ref_lat, ref_lon)

    return TimeSeriesFrame(
        t0=t0,
        cities=cities,
        stations=stations,
        station_city=station_city,
        aqi=aqi,
        weather=weather,
        wind_label=wind_label,
        station_points=station_points,
        city_points=city_points,
        city_latlon=city_latlon,
        ref_latlon=(ref_lat, ref_lon),
    )


def load_corpus(data_dir) -> TimeSeriesFrame:
    d = Path(data_dir)
    return ingest(d / "stations.csv", d / "aqi.csv", d / "weather.csv", d / "poi.csv")


# ---------------------------------------------------------------------------
# missing values

MAX_MISSING_FRACTION = 0.2


def _interp_series(values: np.ndarray, label: str) -> np.ndarray:
    miss = np.isnan(values)
    if not miss.any():
        return values
    if miss.all():
        raise DataError(f"series {label}: all values missing")
    if miss.mean() > MAX_MISSING_FRACTION:
        raise DataError(
            f"series {label}: {miss.mean():.0%} missing exceeds the "
            f"{MAX_MISSING_FRACTION:.0%} interpolation cap"
        )
    idx = np.arange(len(values), dtype=np.float64)
    # np.interp clamps to the nearest valid value outside the observed range
    return np.interp(idx, idx[~miss], values[~miss])


def _fill_labels(labels: np.ndarray, label: str) -> np.ndarray:
    out = labels.copy()
    valid = [i for i, v in enumerate(out) if v != ""]
    if not valid:
        raise DataError(f"series {label}: all wind labels missing")
    if 1 - len(valid) / len(out) > MAX_MISSING_FRACTION:
        raise DataError(f"series {label}: too many missing wind labels")
    last = out[valid[0]]
    for i in range(len(out)):
        if out[i] == "":
            out[i] = last
        else:
            last = out[i]
    return out


def interpolate_missing(frame: TimeSeriesFrame) -> TimeSeriesFrame:
    """Linear interpolation per series; edges nearest-filled, labels carried forward."""
    aqi = frame.aqi.copy()
    for s in range(frame.n_stations):
        aqi[:, s] = _interp_series(aqi[:, s], f"aqi[{frame.stations[s].station_id}]")
    weather = frame.weather.copy()
    for c in range(frame.n_cities):
        for j, name in enumerate(WEATHER_FIELDS):
            weather[:, c, j] = _interp_series(weather[:, c, j], f"{name}[{frame.cities[c]}]")
    wind = frame.wind_label.copy()
    for c in range(frame.n_cities):
        wind[:, c] = _fill_labels(wind[:, c], f"wind_direction[{frame.cities[c]}]")
    return TimeSeriesFrame(
        t0=frame.t0,
        cities=frame.cities,
        stations=frame.stations,
        station_city=frame.station_city,
        aqi=aqi,
        weather=weather,
        wind_label=wind,
        station_points=frame.station_points,
        city_points=frame.city_points,
        city_latlon=frame.city_latlon,
        ref_latlon=frame.ref_latlon,
    )


# ---------------------------------------------------------------------------
# windows and splits


@dataclass
class SampleWindow:
    """One sample: tau_in input hours ending at row t, tau_out target hours."""

    frame: TimeSeriesFrame
    t: int  # row index of the last input slot
    tau_in: int
    tau_out: int

    @property
    def input_rows(self) -> np.ndarray:
        return np.arange(self.t - self.tau_in + 1, self.t + 1)

    @property
    def target_rows(self) -> np.ndarray:
        return np.arange(self.t + 1, self.t + 1 + self.tau_out)

    @property
    def input_aqi(self) -> np.ndarray:
        return self.frame.aqi[self.t - self.tau_in + 1 : self.t + 1]

    @property
    def target_aqi(self) -> np.ndarray:
        return self.frame.aqi[self.t + 1 : self.t + 1 + self.tau_out]

    @property
    def weather_window(self) -> np.ndarray:
        """Weather for input plus future slots, shape (tau_in + tau_out, n_c, 5)."""
        return self.frame.weather[self.t - self.tau_in + 1 : self.t + 1 + self.tau_out]

    @property
    def target_end_row(self) -> int:
        return self.t + self.tau_out


def make_windows(frame: TimeSeriesFrame, tau_in: int, tau_out: int) -> list[SampleWindow]:
    if tau_in <= 0 or tau_out <= 0:
        raise ValidationError("tau_in and tau_out must be positive")
    total = tau_in + tau_out
    if frame.hours < total:
        raise DataError(f"frame has {frame.hours} hours; need at least {total}")
    return [SampleWindow(frame, t, tau_in, tau_out) for t in range(tau_in - 1, frame.hours - tau_out)]


def split_chronological(
    windows: list[SampleWindow], fractions=(0.7, 0.1, 0.2)
) -> tuple[list[SampleWindow], list[SampleWindow], list[SampleWindow]]:
    """Sequential split by window order (equivalently by target-end time)."""
    if abs(sum(fractions) - 1.0) > 1e-9 or len(fractions) != 3:
        raise ValidationError(f"split fractions must be 3 values summing to 1, got {fractions}")
    ordered = sorted(windows, key=lambda w: w.target_end_row)
    n = len(ordered)
    n_train = int(n * fractions[0])
    n_val = int(n * fractions[1])
    return ordered[:n_train], ordered[n_train : n_train + n_val], ordered[n_train + n_val :]


# ---------------------------------------------------------------------------
# normalization


@dataclass
class NormStats:
    """Z-score statistics fit on the training region only."""

    aqi_mean: float
    aqi_std: float
    weather_mean: np.ndarray  # (5,)
    weather_std: np.ndarray  # (5,)

    def norm_aqi(self, x):
        return (np.asarray(x, dtype=np.float64) - self.aqi_mean) / self.aqi_std

    def denorm_aqi(self, x):
        return np.asarray(x, dtype=np.float64) * self.aqi_std + self.aqi_mean

    def norm_weather(self, w):
        return (np.asarray(w, dtype=np.float64) - self.weather_mean) / self.weather_std

    def to_dict(self) -> dict:
        return {
            "aqi_mean": self.aqi_mean,
            "aqi_std": self.aqi_std,
            "weather_mean": list(self.weather_mean),
            "weather_std": list(self.weather_std),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(
            aqi_mean=float(d["aqi_mean"]),
            aqi_std=float(d["aqi_std"]),
            weather_mean=np.asarray(d["weather_mean"], dtype=np.float64),
            weather_std=np.asarray(d["weather_std"], dtype=np.float64),
        )


def _floored_std(values: np.ndarray, label: str) -> float:
    std = float(values.std())
    if std < 1e-8:
        warnings.warn(f"feature {label} is (near-)constant; std floored at 1e-8", stacklevel=3)
        return 1e-8
    return std


def fit_norm(train_windows: list[SampleWindow]) -> NormStats:
    """Statistics over the rows covered by the training windows (inputs + targets)."""
    if not train_windows:
        raise ValidationError("fit_norm: empty training split")
    frame = train_windows[0].frame
    lo = min(w.t - w.tau_in + 1 for w in train_windows)
    hi = max(w.target_end_row for w in train_windows) + 1
    aqi = frame.aqi[lo:hi]
    weather = frame.weather[lo:hi]
    if np.isnan(aqi).any() or np.isnan(weather).any():
        raise DataError("fit_norm: frame still holds missing values; interpolate first")
    w_flat = weather.reshape(-1, weather.shape[-1])
    return NormStats(
        aqi_mean=float(aqi.mean()),
        aqi_std=_floored_std(aqi, "aqi"),
        weather_mean=w_flat.mean(axis=0),
        weather_std=np.array(
            [_floored_std(w_flat[:, j], WEATHER_FIELDS[j]) for j in range(w_flat.shape[1])]
        ),
    )
