"""Encoder-decoder forecaster over the hierarchical graph features.

The forward pass runs row-stacked: a batch of windows shares every tensor op,
with row index = window * n_nodes + node. Per input slot it refreshes edge
weights from that slot's winds, advances the shared city LSTM, message-passes
both levels, and feeds the station features to an encoder LSTM; the decoder
then rolls out autoregressively on [previous forecast | future weather].

Ablations are configuration-driven: they change which parameter groups exist
and which inputs are zeroed, never the outward interfaces.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .config import ABLATIONS, TrainConfig
from .data import NormStats, SampleWindow, TimeSeriesFrame, fit_norm, make_windows, split_chronological
from .errors import NumericalError, ShapeMismatch, ValidationError
from .graphs import GraphTopology, build_topology, encode_wind, singleton_topology, wind_weights_over_time
from .hier import city_mean_aqi, message_pass, upper_delivery_step
from .nn import Adam, Fnn, Lstm, init_fnn, init_lstm, load_checkpoint, save_checkpoint, config_hash
from .tensor import Tape, Tensor, concat, gather_rows, mul, scale, sub, sum_

WEATHER_DIM = 5
POI_DIM = 5
HORIZONS = (1, 3, 6, 12)


class ModelParams:
    """All learnable tensors under stable names, grouped by module."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.station_attr_dim = 1 + POI_DIM
        self.edge_dim = 1 if cfg.without("dynamic") else 2
        self.u_dim = WEATHER_DIM + cfg.lu_dim + (2 if cfg.without("dynamic") else 0)
        self.city_node_dim = cfg.lstm_hidden
        self.modules: dict[str, Fnn | Lstm] = {}

    def _specs(self) -> dict[str, tuple]:
        cfg = self.cfg
        specs: dict[str, tuple] = {}
        if not cfg.without("hierarchy"):
            if cfg.without("city_lstm"):
                specs["city_attr_proj"] = ("fnn", [1, self.city_node_dim], ["linear"])
            else:
                specs["city_lstm"] = ("lstm", 1, cfg.lstm_hidden)
            specs["city_msg_fnn"] = (
                "fnn", [2 * self.city_node_dim + self.edge_dim, cfg.gnn_hidden], ["tanh"])
            specs["city_update_fnn"] = (
                "fnn", [cfg.gnn_hidden + self.city_node_dim, cfg.gnn_hidden], ["tanh"])
            specs["lu_fnn"] = ("fnn", [cfg.gnn_hidden, cfg.lu_dim], ["tanh"])
        specs["station_msg_fnn"] = (
            "fnn", [2 * self.station_attr_dim + self.edge_dim, cfg.gnn_hidden], ["tanh"])
        specs["station_update_fnn"] = (
            "fnn", [cfg.gnn_hidden + self.station_attr_dim + self.u_dim, cfg.gnn_hidden], ["tanh"])
        specs["encoder_lstm"] = ("lstm", cfg.gnn_hidden, cfg.lstm_hidden)
        specs["decoder_lstm"] = ("lstm", 1 + WEATHER_DIM, cfg.lstm_hidden)
        specs["output_head"] = ("fnn", [cfg.lstm_hidden, cfg.gnn_hidden, 1], ["tanh", "linear"])
        return specs

    @classmethod
    def init(cls, cfg: TrainConfig, seed: int) -> "ModelParams":
        mp = cls(cfg)
        rng = np.random.default_rng(seed)
        for name, spec in mp._specs().items():
            if spec[0] == "fnn":
                mp.modules[name] = init_fnn(rng, spec[1], spec[2])
            else:
                mp.modules[name] = init_lstm(rng, spec[1], spec[2])
        return mp

    @classmethod
    def from_named_arrays(cls, cfg: TrainConfig, arrays: dict[str, np.ndarray]) -> "ModelParams":
        mp = cls.init(cfg, seed=0)
        named = mp.named()
        if set(named) != set(arrays):
            missing = sorted(set(named) ^ set(arrays))
            raise ValidationError(f"parameter names do not match the configuration: {missing}")
        for key, tensor in named.items():
            arr = np.asarray(arrays[key], dtype=np.float64)
            if arr.shape != tensor.shape:
                raise ValidationError(
                    f"parameter {key!r}: stored shape {arr.shape} != expected {tensor.shape}"
                )
            tensor.data[...] = arr
        return mp

    def named(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, module in self.modules.items():
            out.update(module.named_params(name))
        return out

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named().items()}

    def __getattr__(self, name):
        modules = self.__dict__.get("modules", {})
        if name in modules:
            return modules[name]
        raise AttributeError(name)


def apply_ablation(cfg: TrainConfig, flags: list[str]) -> TrainConfig:
    """New config with the given components removed; contradictions error."""
    for flag in flags:
        if flag.replace("-", "_") not in ABLATIONS:
            raise ValidationError(f"unknown ablation {flag!r}")
    merged = sorted(set(cfg.ablate) | {f.replace("-", "_") for f in flags})
    return TrainConfig.from_dict({**cfg.to_dict(), "ablate": merged})


# ---------------------------------------------------------------------------
# prepared dataset: normalized arrays, topologies, per-slot edge weights


@dataclass
class PreparedData:
    frame: TimeSeriesFrame
    cfg: TrainConfig
    norm: NormStats
    aqi_n: np.ndarray  # (T, n_st)
    city_aqi_n: np.ndarray  # (T, n_c)
    weather_n: np.ndarray  # (T, n_c, 5)
    windvec: np.ndarray  # (T, n_c, 2)
    poi: np.ndarray  # (n_st, 5)
    topo_city: GraphTopology
    city_ws: np.ndarray  # (T, E_c)
    station_topos: list[GraphTopology]
    sta_src: np.ndarray  # (E_s,) global station index
    sta_dst: np.ndarray
    sta_gs: np.ndarray
    sta_ws: np.ndarray  # (T, E_s)
    train_w: list[SampleWindow]
    val_w: list[SampleWindow]
    test_w: list[SampleWindow]
    eval_stations: np.ndarray  # (n_st,) bool
    loss_stations: np.ndarray  # (n_st,) bool
    _plans: dict = field(default_factory=dict, repr=False)

    @property
    def n_stations(self) -> int:
        return self.frame.n_stations

    @property
    def n_cities(self) -> int:
        return self.frame.n_cities

    def plan(self, batch: int) -> "BatchPlan":
        if batch not in self._plans:
            self._plans[batch] = BatchPlan.build(self, batch)
        return self._plans[batch]


@dataclass
class BatchPlan:
    """Row-stacked index arrays for a batch of identical topologies."""

    batch: int
    city_src: np.ndarray
    city_dst: np.ndarray
    sta_src: np.ndarray
    sta_dst: np.ndarray
    sta2city: np.ndarray  # (B*n_st,) row into the city block
    scope_rows: np.ndarray  # loss-scope rows into the station block

    @staticmethod
    def build(prep: PreparedData, batch: int) -> "BatchPlan":
        n_c, n_st = prep.n_cities, prep.n_stations

        def stack(idx: np.ndarray, block: int) -> np.ndarray:
            """Tile per-graph indices across the batch, offsetting by block size."""
            return (np.tile(idx, batch) + np.repeat(np.arange(batch) * block, len(idx))).astype(np.int64)

        scope = np.nonzero(prep.loss_stations)[0]
        return BatchPlan(
            batch=batch,
            city_src=stack(prep.topo_city.src, n_c),
            city_dst=stack(prep.topo_city.dst, n_c),
            sta_src=stack(prep.sta_src, n_st),
            sta_dst=stack(prep.sta_dst, n_st),
            sta2city=np.tile(prep.frame.station_city, batch)
            + np.repeat(np.arange(batch) * n_c, n_st),
            scope_rows=stack(scope, n_st),
        )


def _station_mask(frame: TimeSeriesFrame, cities: list[str] | None) -> np.ndarray:
    if cities is None:
        return np.ones(frame.n_stations, dtype=bool)
    if not cities:
        raise ValidationError("eval_cities must name at least one city (or be null for all)")
    unknown = [c for c in cities if c not in frame.cities]
    if unknown:
        raise ValidationError(f"eval_cities not in dataset: {unknown}")
    wanted = {frame.cities.index(c) for c in cities}
    return np.isin(frame.station_city, list(wanted))


def prepare(frame: TimeSeriesFrame, cfg: TrainConfig, norm: NormStats | None = None) -> PreparedData:
    if np.isnan(frame.aqi).any() or np.isnan(frame.weather).any():
        raise ValidationError("prepare: frame has missing values; run interpolate_missing first")
    windows = make_windows(frame, cfg.tau_in, cfg.tau_out)
    train_w, val_w, test_w = split_chronological(windows, cfg.split)
    if norm is None:
        norm = fit_norm(train_w)

    aqi_n = norm.norm_aqi(frame.aqi)
    city_aqi_n = city_mean_aqi(aqi_n, frame.station_city, frame.n_cities)
    weather_n = norm.norm_weather(frame.weather)
    codes = {lab: encode_wind(lab) for lab in np.unique(frame.wind_label)}
    windvec = np.zeros((frame.hours, frame.n_cities, 2))
    for lab, vec in codes.items():
        windvec[frame.wind_label == lab] = vec

    if frame.n_cities >= 2:
        topo_city = build_topology(frame.city_points, cfg.lam, node_ids=frame.cities, level="city")
    else:
        topo_city = singleton_topology(frame.cities[0], frame.city_points[0], level="city")
    city_ws = wind_weights_over_time(topo_city, windvec)

    station_topos: list[GraphTopology] = []
    src_blocks, dst_blocks, gs_blocks, ws_blocks = [], [], [], []
    for c in range(frame.n_cities):
        members = frame.stations_of_city(c)
        ids = [frame.stations[s].station_id for s in members]
        pts = frame.station_points[members]
        if len(members) >= 2:
            topo = build_topology(pts, cfg.lam, node_ids=ids, level="station")
        else:
            topo = singleton_topology(ids[0], pts[0], level="station")
        station_topos.append(topo)
        winds = np.broadcast_to(windvec[:, c : c + 1, :], (frame.hours, len(members), 2))
        ws_blocks.append(wind_weights_over_time(topo, winds))
        src_blocks.append(members[topo.src])
        dst_blocks.append(members[topo.dst])
        gs_blocks.append(topo.gs)

    eval_mask = _station_mask(frame, cfg.eval_cities)
    loss_mask = eval_mask if cfg.loss_scope == "eval" else np.ones(frame.n_stations, dtype=bool)
    return PreparedData(
        frame=frame,
        cfg=cfg,
        norm=norm,
        aqi_n=aqi_n,
        city_aqi_n=city_aqi_n,
        weather_n=weather_n,
        windvec=windvec,
        poi=np.stack([rec.poi for rec in frame.stations]),
        topo_city=topo_city,
        city_ws=city_ws,
        station_topos=station_topos,
        sta_src=np.concatenate(src_blocks).astype(np.int64),
        sta_dst=np.concatenate(dst_blocks).astype(np.int64),
        sta_gs=np.concatenate(gs_blocks),
        sta_ws=np.concatenate(ws_blocks, axis=1),
        train_w=train_w,
        val_w=val_w,
        test_w=test_w,
        eval_stations=eval_mask,
        loss_stations=loss_mask,
    )


# ---------------------------------------------------------------------------
# forward pass


def _edge_features(gs: np.ndarray, ws_rows: np.ndarray, batch: int, with_ws: bool) -> Tensor:
    """(B*E, edge_dim) constant: gs tiled per window, ws per window slot."""
    gs_tiled = np.tile(gs, batch)
    if with_ws:
        return Tensor(np.stack([gs_tiled, ws_rows.ravel()], axis=1))
    return Tensor(gs_tiled[:, None])


def encode_window_features(mp: ModelParams, prep: PreparedData, t_idx: np.ndarray) -> list[Tensor]:
    """Per-slot station features X: one (B*n_st, gnn_hidden) tensor per input slot."""
    cfg = mp.cfg
    t_idx = np.asarray(t_idx, dtype=np.int64)
    batch = len(t_idx)
    plan = prep.plan(batch)
    n_c, n_st = prep.n_cities, prep.n_stations
    with_ws = not cfg.without("dynamic")

    wo_hier = cfg.without("hierarchy")
    h = c = None
    if not wo_hier and not cfg.without("city_lstm"):
        h = Tensor(np.zeros((batch * n_c, cfg.lstm_hidden)))
        c = Tensor(np.zeros((batch * n_c, cfg.lstm_hidden)))
    zero_lu = Tensor(np.zeros((batch * n_c, cfg.lu_dim))) if wo_hier else None

    poi_block = np.tile(np.zeros_like(prep.poi) if cfg.without("poi") else prep.poi, (batch, 1))
    features: list[Tensor] = []
    for k in range(cfg.tau_in):
        rows = t_idx - cfg.tau_in + 1 + k  # absolute frame rows, one per window

        if wo_hier:
            lu_k = zero_lu
        else:
            mean_aqi = Tensor(prep.city_aqi_n[rows].reshape(-1, 1))
            if cfg.without("city_lstm"):
                city_attr = mp.city_attr_proj.forward(mean_aqi)
            else:
                h, c = upper_delivery_step(mp.city_lstm, mean_aqi, h, c)
                city_attr = h
            ef_city = _edge_features(prep.topo_city.gs, prep.city_ws[rows], batch, with_ws)
            city_x = message_pass(
                city_attr, ef_city, plan.city_src, plan.city_dst,
                mp.city_msg_fnn, mp.city_update_fnn,
            )
            lu_k = mp.lu_fnn.forward(city_x)

        weather_city = prep.weather_n[rows].reshape(batch * n_c, WEATHER_DIM)
        if cfg.without("weather"):
            weather_city = np.zeros_like(weather_city)
        u_parts = [Tensor(weather_city), lu_k]
        if not with_ws:
            u_parts.append(Tensor(prep.windvec[rows].reshape(batch * n_c, 2)))
        u_city = concat(u_parts, axis=1)
        u_station = gather_rows(u_city, plan.sta2city)

        attr = np.concatenate([prep.aqi_n[rows].reshape(-1, 1), poi_block], axis=1)
        ef_sta = _edge_features(prep.sta_gs, prep.sta_ws[rows], batch, with_ws)
        features.append(
            message_pass(
                Tensor(attr), ef_sta, plan.sta_src, plan.sta_dst,
                mp.station_msg_fnn, mp.station_update_fnn, u=u_station,
            )
        )
    return features


def forward_batch(mp: ModelParams, prep: PreparedData, t_idx: np.ndarray) -> Tensor:
    """Normalized forecasts for a batch of windows, shape (B*n_st, tau_out)."""
    cfg = mp.cfg
    t_idx = np.asarray(t_idx, dtype=np.int64)
    batch = len(t_idx)
    n_st = prep.n_stations
    station_city = prep.frame.station_city

    features = encode_window_features(mp, prep, t_idx)
    h = Tensor(np.zeros((batch * n_st, cfg.lstm_hidden)))
    c = Tensor(np.zeros((batch * n_st, cfg.lstm_hidden)))
    for x_k in features:
        h, c = mp.encoder_lstm.step(x_k, h, c)

    prev = Tensor(prep.aqi_n[t_idx].reshape(-1, 1))  # last observed AQI seeds step 1
    outputs: list[Tensor] = []
    for k in range(1, cfg.tau_out + 1):
        weather = prep.weather_n[t_idx + k][:, station_city, :].reshape(batch * n_st, WEATHER_DIM)
        if cfg.without("weather"):
            weather = np.zeros_like(weather)
        step_in = concat([prev, Tensor(weather)], axis=1)
        h, c = mp.decoder_lstm.step(step_in, h, c)
        y = mp.output_head.forward(h)
        outputs.append(y)
        prev = y
    return concat(outputs, axis=1)


def mse_loss(preds: Tensor, targets: Tensor, station_counts) -> Tensor:
    """Sum of squared errors over (stations x horizons) / (tau_out * total stations)."""
    if preds.shape != targets.shape:
        raise ShapeMismatch(f"loss: preds {preds.shape} vs targets {targets.shape}")
    total = int(np.sum(station_counts))
    if total != preds.shape[0]:
        raise ShapeMismatch(
            f"loss: station_counts sum {total} does not match {preds.shape[0]} rows"
        )
    diff = sub(preds, targets)
    return scale(sum_(mul(diff, diff)), 1.0 / (preds.shape[1] * total))


def _targets_norm(prep: PreparedData, t_idx: np.ndarray) -> np.ndarray:
    """(B*n_st, tau_out) normalized target block for the windows at t_idx."""
    cols = [prep.aqi_n[t_idx + k] for k in range(1, prep.cfg.tau_out + 1)]
    return np.stack(cols, axis=2).reshape(-1, prep.cfg.tau_out)


# ---------------------------------------------------------------------------
# inference


@dataclass
class ForecastResult:
    window_t: int
    station_ids: list[str]
    timestamps: list[str]
    values: np.ndarray  # (n_st, tau_out), denormalized AQI

    def __post_init__(self):
        if not np.isfinite(self.values).all():
            raise NumericalError("forecast produced non-finite values")


def predict_windows(
    mp: ModelParams, prep: PreparedData, windows: list[SampleWindow], batch_size: int | None = None
) -> np.ndarray:
    """Denormalized forecasts, shape (n_windows, n_st, tau_out); no gradients."""
    bs = batch_size or prep.cfg.batch_size
    t_all = np.array([w.t for w in windows], dtype=np.int64)
    chunks = []
    for i in range(0, len(t_all), bs):
        t_idx = t_all[i : i + bs]
        preds = forward_batch(mp, prep, t_idx)
        chunks.append(preds.data.reshape(len(t_idx), prep.n_stations, prep.cfg.tau_out))
    stacked = np.concatenate(chunks) if chunks else np.zeros((0, prep.n_stations, prep.cfg.tau_out))
    return prep.norm.denorm_aqi(stacked)


def forecast(mp: ModelParams, prep: PreparedData, sample: SampleWindow) -> ForecastResult:
    if sample.t - sample.tau_in + 1 < 0:
        raise ValidationError("window starts before the frame: not enough history")
    if sample.target_end_row >= prep.frame.hours:
        raise ValidationError("missing future weather: window targets extend past the frame")
    values = predict_windows(mp, prep, [sample])[0]
    frame = prep.frame
    return ForecastResult(
        window_t=sample.t,
        station_ids=[rec.station_id for rec in frame.stations],
        timestamps=[frame.timestamp(sample.t + k) for k in range(1, prep.cfg.tau_out + 1)],
        values=values,
    )


def eval_mae(
    preds: np.ndarray, prep: PreparedData, windows: list[SampleWindow], horizon: int
) -> float:
    """MAE over eval-city stations at one horizon, raw AQI units."""
    t_all = np.array([w.t for w in windows])
    truth = prep.frame.aqi[t_all + horizon][:, prep.eval_stations]
    return float(np.abs(preds[:, prep.eval_stations, horizon - 1] - truth).mean())


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    params: ModelParams  # best-validation weights
    prep: PreparedData
    log: list[dict]
    best_epoch: int


def train(cfg: TrainConfig, frame: TimeSeriesFrame, quiet: bool = True) -> TrainResult:
    prep = prepare(frame, cfg)
    mp = ModelParams.init(cfg, cfg.seed)
    named = mp.named()
    adam = Adam(lr=cfg.learning_rate)
    shuffle_rng = np.random.default_rng([cfg.seed, 0xA1C])
    train_t = np.array([w.t for w in prep.train_w], dtype=np.int64)
    horizons = [k for k in HORIZONS if k <= cfg.tau_out]

    best = (np.inf, -1, mp.snapshot())
    log: list[dict] = []
    t_start = time.perf_counter()
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(len(train_t))
        batch_losses = []
        for bi, lo in enumerate(range(0, len(train_t), cfg.batch_size)):
            t_idx = train_t[order[lo : lo + cfg.batch_size]]
            plan = prep.plan(len(t_idx))
            with Tape() as tape:
                preds = forward_batch(mp, prep, t_idx)
                target_arr = _targets_norm(prep, t_idx)
                if len(plan.scope_rows) != preds.shape[0]:
                    preds = gather_rows(preds, plan.scope_rows)
                    target_arr = target_arr[plan.scope_rows]
                loss = mse_loss(preds, Tensor(target_arr), [preds.shape[0]])
            value = loss.item()
            if not np.isfinite(value):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch} batch {bi} (window rows {t_idx[:4].tolist()}...)"
                )
            tape.backward(loss)
            adam.step(named)
            batch_losses.append(value)

        val_preds = predict_windows(mp, prep, prep.val_w)
        maes = {k: eval_mae(val_preds, prep, prep.val_w, k) for k in horizons}
        score = float(np.mean(list(maes.values())))
        row = {"epoch": epoch, "train_loss": float(np.mean(batch_losses))}
        for k in HORIZONS:
            row[f"val_mae_{k}h"] = maes.get(k)
        row["wall_seconds"] = time.perf_counter() - t_start
        log.append(row)
        if not quiet:
            print(f"epoch {epoch}: loss {row['train_loss']:.5f} val {score:.3f}")
        if score < best[0]:
            best = (score, epoch, mp.snapshot())

    best_params = ModelParams.from_named_arrays(cfg, best[2])
    return TrainResult(params=best_params, prep=prep, log=log, best_epoch=best[1])


TRAIN_LOG_COLUMNS = (
    "epoch", "train_loss", "val_mae_1h", "val_mae_3h", "val_mae_6h", "val_mae_12h", "wall_seconds",
)


def write_train_log(path, log: list[dict]) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(TRAIN_LOG_COLUMNS) + "\n")
        for row in log:
            cells = []
            for col in TRAIN_LOG_COLUMNS:
                v = row.get(col)
                cells.append("" if v is None else repr(v) if isinstance(v, float) else str(v))
            fh.write(",".join(cells) + "\n")


# ---------------------------------------------------------------------------
# model checkpoints


def save_model(path, mp: ModelParams, norm: NormStats, extra: dict | None = None) -> None:
    manifest = {
        "config": mp.cfg.to_dict(),
        "config_hash": config_hash(mp.cfg.to_dict()),
        "seed": mp.cfg.seed,
        "norm": norm.to_dict(),
    }
    if extra:
        manifest.update(extra)
    save_checkpoint(path, mp.named(), manifest)


def load_model(path) -> tuple[ModelParams, NormStats, dict]:
    tensors, manifest = load_checkpoint(path)
    cfg = TrainConfig.from_dict(manifest["config"])
    arrays = {k: v.data for k, v in tensors.items()}
    mp = ModelParams.from_named_arrays(cfg, arrays)
    return mp, NormStats.from_dict(manifest["norm"]), manifest
