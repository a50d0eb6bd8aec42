"""City- and station-level graph construction.

Nodes live in a local km plane (projection happens at ingestion). Edges join
every pair closer than an adaptive radius: lambda times the largest
nearest-neighbor distance in the node set, which keeps every node connected
for lambda > 1. Each directed edge carries a static geographic weight
(1/distance) and a dynamic wind weight (cosine between the source node's
wind vector and the displacement to the destination), refreshed per time
slot.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

WIND_CODEBOOK: dict[str, tuple[int, int]] = {
    "North": (0, 1),
    "Northeast": (1, 1),
    "East": (1, 0),
    "Southeast": (1, -1),
    "South": (0, -1),
    "Southwest": (-1, -1),
    "West": (-1, 0),
    "Northwest": (-1, 1),
    "No sustained direction": (0, 0),
}

# short labels used by the CSV schema
_WIND_ALIASES = {
    "N": "North",
    "NE": "Northeast",
    "E": "East",
    "SE": "Southeast",
    "S": "South",
    "SW": "Southwest",
    "W": "West",
    "NW": "Northwest",
    "NONE": "No sustained direction",
}


def encode_wind(label: str) -> np.ndarray:
    """Code-book lookup; accepts full labels or the CSV short forms."""
    name = _WIND_ALIASES.get(label, label)
    if name not in WIND_CODEBOOK:
        raise ValidationError(f"unknown wind direction label: {label!r}")
    return np.array(WIND_CODEBOOK[name], dtype=np.float64)


def euclid_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.sqrt(((a - b) ** 2).sum()))


def adaptive_radius(points, lam: float) -> float:
    """lambda times the largest nearest-neighbor distance over the node set."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValidationError("adaptive_radius: need at least 2 points")
    if lam < 1.0:
        raise ValidationError(f"adaptive_radius: lambda must be >= 1, got {lam}")
    if lam == 1.0:
        warnings.warn(
            "lambda == 1 cannot guarantee every node keeps an edge (strict radius cut)",
            stacklevel=2,
        )
    diff = pts[:, None, :] - pts[None, :, :]
    dists = np.sqrt((diff**2).sum(axis=2))
    np.fill_diagonal(dists, np.inf)
    nearest = dists.min(axis=1)
    return float(lam * nearest.max())


def geographic_similarity(a, b, radius: float) -> float:
    """1/distance inside the open interval (0, radius); zero otherwise."""
    if radius <= 0:
        raise ValidationError(f"geographic_similarity: radius must be > 0, got {radius}")
    d = euclid_distance(a, b)
    if 0.0 < d < radius:
        return 1.0 / d
    return 0.0


def wind_similarity(l_a, l_b, wind_a) -> float:
    """Cosine between a's wind vector and the displacement a -> b.

    Zero wind ([0, 0], no sustained direction) yields 0 by convention.
    """
    l_a = np.asarray(l_a, dtype=np.float64)
    l_b = np.asarray(l_b, dtype=np.float64)
    zeta = l_b - l_a
    zeta_norm = np.sqrt((zeta**2).sum())
    if zeta_norm == 0.0:
        raise ValidationError("wind_similarity: direction undefined for co-located nodes")
    wind = np.asarray(wind_a, dtype=np.float64)
    wind_norm = np.sqrt((wind**2).sum())
    if wind_norm == 0.0:
        return 0.0
    return float(np.dot(wind, zeta) / (wind_norm * zeta_norm))


@dataclass
class GraphTopology:
    """Directed edge list with static gs and per-slot dynamic ws weights."""

    node_ids: list[str]
    points: np.ndarray  # (n, 2) km
    src: np.ndarray  # (E,) int64
    dst: np.ndarray  # (E,) int64
    gs: np.ndarray  # (E,)
    level: str
    radius: float
    ws: np.ndarray = field(default=None)  # (E,), loaded per time slot

    def __post_init__(self):
        if self.ws is None:
            self.ws = np.zeros(len(self.src), dtype=np.float64)

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def n_edges(self) -> int:
        return len(self.src)

    def edge_features(self) -> np.ndarray:
        """Per-edge weight vector [gs, ws] for the currently loaded slot."""
        return np.stack([self.gs, self.ws], axis=1)

    def out_degrees(self) -> np.ndarray:
        return np.bincount(self.src, minlength=self.n_nodes)


def build_topology(points, lam: float, node_ids=None, level: str = "station") -> GraphTopology:
    """Directed edges both ways for every pair with 0 < d < adaptive radius."""
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64))
    radius = adaptive_radius(pts, lam)
    if node_ids is None:
        node_ids = [str(i) for i in range(pts.shape[0])]
    src, dst, gs = [], [], []
    n = pts.shape[0]
    for a in range(n):
        for b in range(a + 1, n):
            d = euclid_distance(pts[a], pts[b])
            if 0.0 < d < radius:
                src.extend((a, b))
                dst.extend((b, a))
                gs.extend((1.0 / d, 1.0 / d))
    return GraphTopology(
        node_ids=list(node_ids),
        points=pts,
        src=np.array(src, dtype=np.int64),
        dst=np.array(dst, dtype=np.int64),
        gs=np.array(gs, dtype=np.float64),
        level=level,
        radius=radius,
    )


def singleton_topology(node_id: str, point, level: str = "station") -> GraphTopology:
    """Degenerate one-node graph (a city with a single station has no edges)."""
    return GraphTopology(
        node_ids=[node_id],
        points=np.asarray([point], dtype=np.float64),
        src=np.array([], dtype=np.int64),
        dst=np.array([], dtype=np.int64),
        gs=np.array([], dtype=np.float64),
        level=level,
        radius=0.0,
    )


def refresh_edge_weights(topo: GraphTopology, winds) -> None:
    """Load slot-t wind weights: ws[e] = cos(wind[src], displacement src -> dst).

    ``winds`` is an (n, 2) array or a mapping node_id -> 2-vector covering
    every node.
    """
    if isinstance(winds, dict):
        missing = [nid for nid in topo.node_ids if nid not in winds]
        if missing:
            raise ValidationError(f"refresh_edge_weights: missing wind for nodes {missing}")
        wind_arr = np.asarray([winds[nid] for nid in topo.node_ids], dtype=np.float64)
    else:
        wind_arr = np.asarray(winds, dtype=np.float64)
        if wind_arr.shape != (topo.n_nodes, 2):
            raise ValidationError(
                f"refresh_edge_weights: wind array {wind_arr.shape} does not cover "
                f"{topo.n_nodes} nodes"
            )
    for e in range(topo.n_edges):
        topo.ws[e] = wind_similarity(
            topo.points[topo.src[e]], topo.points[topo.dst[e]], wind_arr[topo.src[e]]
        )


def wind_weights_over_time(topo: GraphTopology, winds: np.ndarray) -> np.ndarray:
    """Vectorized ws for all slots at once; winds has shape (T, n, 2).

    Matches refresh_edge_weights slot by slot: cos(x, y) = unit(x) . unit(y)
    with unit(0) = 0.
    """
    winds = np.asarray(winds, dtype=np.float64)
    if winds.ndim != 3 or winds.shape[1:] != (topo.n_nodes, 2):
        raise ValidationError(
            f"wind_weights_over_time: winds {winds.shape} does not match "
            f"(T, {topo.n_nodes}, 2)"
        )
    if topo.n_edges == 0:
        return np.zeros((winds.shape[0], 0), dtype=np.float64)
    zeta = topo.points[topo.dst] - topo.points[topo.src]  # (E, 2)
    zeta_unit = zeta / np.linalg.norm(zeta, axis=1, keepdims=True)
    norms = np.linalg.norm(winds, axis=2, keepdims=True)
    wind_unit = np.divide(winds, norms, out=np.zeros_like(winds), where=norms > 0)
    per_edge_wind = wind_unit[:, topo.src, :]  # (T, E, 2)
    return np.einsum("tek,ek->te", per_edge_wind, zeta_unit)
