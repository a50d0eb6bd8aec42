"""Seedable synthetic corpus generator.

A latent pollution field evolves per station as

    a_s(t+1) = decay * a_s(t) + sum_{s'} adv(s' -> s, wind(t)) * a_{s'}(t)
               + emission_s(t) + gaussian noise

with adv proportional to max(0, cos(wind, displacement s' -> s)) / distance,
i.e. pollutants drift downwind and dilute with distance. The generator emits
stations.csv / poi.csv / aqi.csv / weather.csv in the ingestion schema plus
a JSON manifest holding the spec, seed, and per-station ground truth.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .data import WEATHER_FIELDS, format_timestamp, unproject_km
from .errors import ValidationError
from .graphs import WIND_CODEBOOK, encode_wind

COMPASS = ["N", "NE", "E", "SE", "S", "SW", "W", "NW"]

REF_LAT, REF_LON = 31.0, 120.0
T0_HOUR = 420768  # 2018-01-01T00:00:00Z


@dataclass
class SynthSpec:
    """Generator configuration; JSON round-trips field for field."""

    n_cities: int = 4
    stations_per_city: int = 3
    hours: int = 2000
    wind_regime: str = "rotating"  # none | steady-<DIR> | rotating | random
    wind_hold_hours: int = 9
    layout: str = "random"  # random | line
    city_spacing_km: float = 45.0
    station_spread_km: float = 8.0
    base_level: float = 80.0
    decay: float = 0.88
    advection: float = 0.9
    emission_jitter: float = 0.35
    noise_std: float = 2.0
    pulse_city: int | None = None
    pulse_period: int = 96
    pulse_width: int = 10
    pulse_magnitude: float = 0.0

    def validate(self) -> None:
        if self.n_cities < 1 or self.stations_per_city < 1:
            raise ValidationError("synth: need at least one city and one station per city")
        if self.hours < 2:
            raise ValidationError("synth: hours must be >= 2")
        if self.layout not in ("random", "line"):
            raise ValidationError(f"synth: unknown layout {self.layout!r}")
        if not (0.0 <= self.decay <= 1.0):
            raise ValidationError("synth: decay must lie in [0, 1]")
        regime = self.wind_regime
        if regime.startswith("steady-"):
            if regime[len("steady-") :] not in COMPASS:
                raise ValidationError(f"synth: unknown steady wind direction in {regime!r}")
        elif regime not in ("none", "rotating", "random"):
            raise ValidationError(f"synth: unknown wind regime {regime!r}")
        if self.wind_hold_hours < 1:
            raise ValidationError("synth: wind_hold_hours must be >= 1")
        if self.pulse_city is not None and not (0 <= self.pulse_city < self.n_cities):
            raise ValidationError("synth: pulse_city out of range")

    @classmethod
    def from_json(cls, path) -> "SynthSpec":
        with open(path) as fh:
            raw = json.load(fh)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ValidationError(f"synth spec: unknown fields {sorted(unknown)}")
        spec = cls(**raw)
        spec.validate()
        return spec


@dataclass
class SynthCorpus:
    spec: SynthSpec
    seed: int
    station_ids: list[str]
    city_ids: list[str]
    station_city: np.ndarray
    station_km: np.ndarray  # (n_st, 2)
    poi: np.ndarray  # (n_st, 5) int counts
    emission: np.ndarray  # (T, n_st)
    wind_labels: list[str]  # (T,) shared across cities
    aqi: np.ndarray  # (T, n_st)
    weather: np.ndarray  # (T, n_c, 5) continuous fields
    manifest: dict = field(default_factory=dict)


def _wind_sequence(spec: SynthSpec, rng: np.random.Generator) -> list[str]:
    n_holds = -(-spec.hours // spec.wind_hold_hours)
    if spec.wind_regime == "none":
        states = ["NONE"] * n_holds
    elif spec.wind_regime.startswith("steady-"):
        states = [spec.wind_regime[len("steady-") :]] * n_holds
    elif spec.wind_regime == "rotating":
        states = [COMPASS[i % len(COMPASS)] for i in range(n_holds)]
    else:  # random
        states = [COMPASS[rng.integers(len(COMPASS))] for _ in range(n_holds)]
    labels = []
    for s in states:
        labels.extend([s] * spec.wind_hold_hours)
    return labels[: spec.hours]


def _transport_matrices(points: np.ndarray, advection: float) -> dict[str, np.ndarray]:
    """One (n, n) transfer matrix per wind label; entry [s, s'] moves s' -> s."""
    n = points.shape[0]
    diff = points[None, :, :] - points[:, None, :]  # diff[s, s'] = p_s - p_s'
    dist = np.sqrt((diff**2).sum(axis=2))
    np.fill_diagonal(dist, np.inf)
    out = {}
    for label in list(WIND_CODEBOOK) :
        wind = encode_wind(label)
        wn = np.sqrt((wind**2).sum())
        if wn == 0.0:
            out[label] = np.zeros((n, n))
            continue
        cos = (diff @ wind) / (dist * wn)
        mat = advection * np.maximum(cos, 0.0) / dist
        np.fill_diagonal(mat, 0.0)
        out[label] = mat
    return out


def synth_generate(spec: SynthSpec, seed: int) -> SynthCorpus:
    spec.validate()
    rng = np.random.default_rng(seed)
    n_c, per_city = spec.n_cities, spec.stations_per_city
    n_st = n_c * per_city

    if spec.layout == "line":
        city_km = np.stack(
            [np.arange(n_c) * spec.city_spacing_km, rng.normal(0, 2.0, size=n_c)], axis=1
        )
    else:
        span = spec.city_spacing_km * max(n_c - 1, 1)
        city_km = rng.uniform(0, span, size=(n_c, 2))
    station_km = np.concatenate(
        [city_km[c] + rng.normal(0, spec.station_spread_km, size=(per_city, 2)) for c in range(n_c)]
    )
    station_city = np.repeat(np.arange(n_c), per_city)
    city_ids = [f"C{c:02d}" for c in range(n_c)]
    station_ids = [f"C{c:02d}S{i}" for c in range(n_c) for i in range(per_city)]

    poi = rng.integers(0, 5, size=(n_st, 5)).astype(np.float64)
    # industrial land raises emissions, parks damp them: POI carries real signal
    poi_factor = 1.0 + 0.10 * poi[:, 4] - 0.03 * poi[:, 1]
    jitter = 1.0 + spec.emission_jitter * rng.uniform(-1.0, 1.0, size=n_st)
    base_emission = (1.0 - spec.decay) * spec.base_level * jitter * poi_factor

    emission = np.tile(base_emission, (spec.hours, 1))
    if spec.pulse_city is not None and spec.pulse_magnitude > 0:
        members = station_city == spec.pulse_city
        phase = np.arange(spec.hours) % spec.pulse_period
        rows = phase < spec.pulse_width
        emission[np.ix_(rows, members)] += spec.pulse_magnitude

    wind_labels = _wind_sequence(spec, rng)
    mats = _transport_matrices(station_km, spec.advection)
    labels_order = sorted(set(wind_labels))
    transport = np.stack([mats["No sustained direction" if l == "NONE" else _full(l)] for l in labels_order])
    state_at = np.array([labels_order.index(l) for l in wind_labels], dtype=np.int64)

    noise = (
        rng.normal(0.0, spec.noise_std, size=(spec.hours, n_st))
        if spec.noise_std > 0
        else np.zeros((spec.hours, n_st))
    )
    a0 = np.full(n_st, spec.base_level, dtype=np.float64)
    traj = _kernels.simulate_field(a0, spec.decay, transport, state_at, emission, noise)
    aqi = traj[1:]  # (T, n_st)

    hours = np.arange(spec.hours)
    weather = np.zeros((spec.hours, n_c, len(WEATHER_FIELDS)))
    weather[:, :, 0] = (15 + 8 * np.sin(2 * np.pi * hours / 24)[:, None]) + rng.normal(0, 1.0, (spec.hours, n_c))
    weather[:, :, 1] = 55 + rng.normal(0, 8.0, (spec.hours, n_c))
    rain = rng.random((spec.hours, n_c))
    weather[:, :, 2] = np.where(rain > 0.95, rng.uniform(0.2, 5.0, (spec.hours, n_c)), 0.0)
    weather[:, :, 3] = 3.0 + rng.normal(0, 0.8, (spec.hours, n_c))
    weather[:, :, 4] = 1013 + rng.normal(0, 3.0, (spec.hours, n_c))

    manifest = {
        "spec": asdict(spec),
        "seed": seed,
        "ref_latlon": [REF_LAT, REF_LON],
        "stations": [
            {
                "station_id": station_ids[s],
                "city_id": city_ids[station_city[s]],
                "km": [float(station_km[s, 0]), float(station_km[s, 1])],
                "base_emission": float(base_emission[s]),
                "poi": [int(v) for v in poi[s]],
            }
            for s in range(n_st)
        ],
        "wind_labels": wind_labels,
    }
    return SynthCorpus(
        spec=spec,
        seed=seed,
        station_ids=station_ids,
        city_ids=city_ids,
        station_city=station_city,
        station_km=station_km,
        poi=poi,
        emission=emission,
        wind_labels=wind_labels,
        aqi=aqi,
        weather=weather,
        manifest=manifest,
    )


def _full(short_label: str) -> str:
    from .graphs import _WIND_ALIASES

    return _WIND_ALIASES[short_label]


def write_corpus(corpus: SynthCorpus, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    latlon = unproject_km(corpus.station_km, REF_LAT, REF_LON)

    with open(out / "stations.csv", "w") as fh:
        fh.write("station_id,city_id,lat,lon\n")
        for s, sid in enumerate(corpus.station_ids):
            cid = corpus.city_ids[corpus.station_city[s]]
            fh.write(f"{sid},{cid},{float(latlon[s, 0])!r},{float(latlon[s, 1])!r}\n")

    with open(out / "poi.csv", "w") as fh:
        fh.write("station_id,residential,park,mountain,water,industrial\n")
        for s, sid in enumerate(corpus.station_ids):
            fh.write(sid + "," + ",".join(str(int(v)) for v in corpus.poi[s]) + "\n")

    with open(out / "aqi.csv", "w") as fh:
        fh.write("station_id,timestamp,aqi\n")
        for s, sid in enumerate(corpus.station_ids):
            for t in range(corpus.spec.hours):
                fh.write(f"{sid},{format_timestamp(T0_HOUR + t)},{float(corpus.aqi[t, s])!r}\n")

    with open(out / "weather.csv", "w") as fh:
        fh.write("city_id,timestamp," + ",".join(WEATHER_FIELDS) + ",wind_direction\n")
        for c, cid in enumerate(corpus.city_ids):
            for t in range(corpus.spec.hours):
                vals = ",".join(repr(float(v)) for v in corpus.weather[t, c])
                fh.write(f"{cid},{format_timestamp(T0_HOUR + t)},{vals},{corpus.wind_labels[t]}\n")

    with open(out / "manifest.json", "w") as fh:
        json.dump(corpus.manifest, fh, indent=1)
