"""Per-time-slot hierarchical state computation.

One round per level per slot: a shared LSTM summarizes each city's mean-AQI
history (upper delivery) and its hidden state becomes the city node
attribute; message passing runs on the city graph; the updated city
representation maps through a shared FNN into the global attribute u of that
city's station graph (lower updating); station-level message passing then
consumes u.

All functions take row-stacked tensors so a whole minibatch of windows can
share one call: row index = window * n_nodes + node. Aggregation is a mean
over in-edges; isolated nodes aggregate the zero vector.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatch
from .graphs import GraphTopology
from .nn import Fnn, Lstm
from .tensor import Tensor, concat, gather_rows, segment_mean


def city_mean_aqi(aqi: np.ndarray, station_city: np.ndarray, n_cities: int) -> np.ndarray:
    """Per-city mean of station AQIs; aqi is (..., n_stations)."""
    counts = np.bincount(station_city, minlength=n_cities)
    if (counts == 0).any():
        raise ShapeMismatch("city_mean_aqi: every city needs at least one station")
    return np.stack(
        [aqi[..., station_city == c].mean(axis=-1) for c in range(n_cities)], axis=-1
    )


def upper_delivery_step(
    city_lstm: Lstm, mean_aqi_t: Tensor, h_prev: Tensor, c_prev: Tensor
) -> tuple[Tensor, Tensor]:
    """Advance the shared city LSTM one slot; its hidden state is the node attribute."""
    return city_lstm.step(mean_aqi_t, h_prev, c_prev)


def message_pass(
    states: Tensor,
    edge_feat: Tensor,
    src: np.ndarray,
    dst: np.ndarray,
    msg_fnn: Fnn,
    update_fnn: Fnn,
    u: Tensor | None = None,
) -> Tensor:
    """One aggregation/update round.

    Per in-edge (s -> a): message = msg_fnn([x_s | x_a | e]); per node:
    r_a = mean of incoming messages (zero if none); update input is
    [r_a | x_a] at city level or [r_a | x_a | u_a] at station level.
    """
    n = states.shape[0]
    if len(src) != len(dst) or (len(src) and edge_feat.shape[0] != len(src)):
        raise ShapeMismatch(
            f"message_pass: {len(src)} edges but edge features {edge_feat.shape}"
        )
    if len(src) == 0:
        agg = Tensor(np.zeros((n, msg_fnn.out_size)))
    else:
        x_s = gather_rows(states, src)
        x_a = gather_rows(states, dst)
        messages = msg_fnn.forward(concat([x_s, x_a, edge_feat], axis=1))
        agg = segment_mean(messages, dst, n)
    parts = [agg, states] if u is None else [agg, states, u]
    return update_fnn.forward(concat(parts, axis=1))


def edge_feature_tensor(topo: GraphTopology, include_ws: bool = True) -> Tensor:
    feats = topo.edge_features() if include_ws else topo.gs[:, None]
    return Tensor(feats)


def message_pass_city(states: Tensor, topo: GraphTopology, msg_fnn: Fnn, update_fnn: Fnn,
                      include_ws: bool = True) -> Tensor:
    """Single-graph surface over a topology whose ws is loaded for the slot."""
    return message_pass(states, edge_feature_tensor(topo, include_ws), topo.src, topo.dst, msg_fnn, update_fnn)


def message_pass_station(
    states: Tensor,
    topo: GraphTopology,
    u: Tensor,
    msg_fnn: Fnn,
    update_fnn: Fnn,
    include_ws: bool = True,
) -> Tensor:
    """Station-level round; u is one global-attribute row shared by the graph."""
    if u.data.ndim != 2 or u.shape[0] not in (1, states.shape[0]):
        raise ShapeMismatch(f"message_pass_station: u has shape {u.shape}")
    if u.shape[0] == 1 and states.shape[0] > 1:
        u = gather_rows(u, np.zeros(states.shape[0], dtype=np.int64))
    return message_pass(
        states, edge_feature_tensor(topo, include_ws), topo.src, topo.dst, msg_fnn, update_fnn, u=u
    )


def lower_update(city_x: Tensor, weather_t: Tensor, lu_fnn: Fnn) -> Tensor:
    """Global attribute u = [weather | lu_fnn(city representation)]."""
    if weather_t.shape[0] != city_x.shape[0]:
        raise ShapeMismatch(
            f"lower_update: weather rows {weather_t.shape} vs city rows {city_x.shape}"
        )
    return concat([weather_t, lu_fnn.forward(city_x)], axis=1)
