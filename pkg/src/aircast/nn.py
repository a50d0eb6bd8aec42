"""FNN and LSTM cells, Xavier initialization, Adam, and checkpoint I/O.

Parameter containers hold plain Tensors; sharing a container between call
sites is how parameter sharing across cities/stations is realized.
"""

from __future__ import annotations

import hashlib
import io
import json
import zipfile

import numpy as np

from .errors import ShapeMismatch, ValidationError
from .tensor import (
    Tensor,
    active_tape,
    broadcast_add_row,
    concat,
    lstm_cell,
    matmul,
    relu,
    tanh,
)

_ACTIVATIONS = ("tanh", "relu", "linear")


class Fnn:
    """Stack of affine layers with per-layer activation tags."""

    def __init__(self, weights: list[Tensor], biases: list[Tensor], activations: list[str]):
        if not (len(weights) == len(biases) == len(activations)):
            raise ValidationError("Fnn: layer lists must align")
        for act in activations:
            if act not in _ACTIVATIONS:
                raise ValidationError(f"Fnn: unknown activation {act!r}")
        for w, b in zip(weights, biases):
            if w.shape[1] != b.shape[0]:
                raise ShapeMismatch(f"Fnn: weight {w.shape} and bias {b.shape} do not chain")
        for w_prev, w_next in zip(weights, weights[1:]):
            if w_prev.shape[1] != w_next.shape[0]:
                raise ShapeMismatch(
                    f"Fnn: consecutive layers {w_prev.shape} -> {w_next.shape} do not chain"
                )
        self.weights = weights
        self.biases = biases
        self.activations = activations

    @property
    def in_size(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_size(self) -> int:
        return self.weights[-1].shape[1]

    def forward(self, x: Tensor) -> Tensor:
        if x.data.ndim != 2 or x.shape[1] != self.in_size:
            raise ShapeMismatch(
                f"fnn_forward: input {x.shape} does not match first layer ({self.in_size}, ...)"
            )
        h = x
        for w, b, act in zip(self.weights, self.biases, self.activations):
            h = broadcast_add_row(matmul(h, w), b)
            if act == "tanh":
                h = tanh(h)
            elif act == "relu":
                h = relu(h)
        return h

    def named_params(self, prefix: str) -> dict[str, Tensor]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}.w{i}"] = w
            out[f"{prefix}.b{i}"] = b
        return out


class Lstm:
    """Single-layer LSTM cell with separate gate matrices."""

    GATES = ("i", "f", "o", "g")

    def __init__(self, input_size: int, hidden_size: int, params: dict[str, Tensor]):
        self.input_size = input_size
        self.hidden_size = hidden_size
        for gate in self.GATES:
            wx, wh, b = params[f"wx_{gate}"], params[f"wh_{gate}"], params[f"b_{gate}"]
            if wx.shape != (input_size, hidden_size):
                raise ShapeMismatch(f"Lstm: wx_{gate} has shape {wx.shape}")
            if wh.shape != (hidden_size, hidden_size):
                raise ShapeMismatch(f"Lstm: wh_{gate} has shape {wh.shape}")
            if b.shape != (hidden_size,):
                raise ShapeMismatch(f"Lstm: b_{gate} has shape {b.shape}")
        self.params = params

    def _fused_weights(self) -> tuple[Tensor, Tensor]:
        """Gate matrices stacked into one (in+hidden, 4*hidden) weight.

        Cached on the active tape so the concat runs once per forward pass;
        gradients still flow back into the individual gate tensors.
        """
        tape = active_tape()
        key = ("lstm_fused", id(self))
        if tape is not None and key in tape.cache:
            return tape.cache[key]
        p = self.params
        wx = concat([p["wx_i"], p["wx_f"], p["wx_o"], p["wx_g"]], axis=1)
        wh = concat([p["wh_i"], p["wh_f"], p["wh_o"], p["wh_g"]], axis=1)
        fused = (
            concat([wx, wh], axis=0),
            concat([p["b_i"], p["b_f"], p["b_o"], p["b_g"]], axis=0),
        )
        if tape is not None:
            tape.cache[key] = fused
        return fused

    def step(self, x_t: Tensor, h_prev: Tensor, c_prev: Tensor) -> tuple[Tensor, Tensor]:
        if x_t.data.ndim != 2 or x_t.shape[1] != self.input_size:
            raise ShapeMismatch(
                f"lstm_step: input {x_t.shape} does not match input_size {self.input_size}"
            )
        if h_prev.shape != (x_t.shape[0], self.hidden_size):
            raise ShapeMismatch(
                f"lstm_step: hidden {h_prev.shape} does not match ({x_t.shape[0]}, {self.hidden_size})"
            )
        w, b = self._fused_weights()
        pre = broadcast_add_row(matmul(concat([x_t, h_prev], axis=1), w), b)
        return lstm_cell(pre, c_prev, self.hidden_size)

    def run(self, xs: list[Tensor], h0: Tensor, c0: Tensor) -> tuple[list[Tensor], Tensor, Tensor]:
        """Unroll over a sequence of inputs; returns all hidden states plus final (h, c)."""
        h, c = h0, c0
        hs = []
        for x_t in xs:
            h, c = self.step(x_t, h, c)
            hs.append(h)
        return hs, h, c

    def named_params(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.{k}": v for k, v in self.params.items()}


# ---------------------------------------------------------------------------
# initialization


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_fnn(rng: np.random.Generator, sizes: list[int], activations: list[str]) -> Fnn:
    """Xavier-uniform weights, zero biases; ``sizes`` chains layer dimensions."""
    if len(sizes) < 2 or len(activations) != len(sizes) - 1:
        raise ValidationError("init_fnn: sizes must chain and match activations")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        weights.append(Tensor(xavier_uniform(rng, fan_in, fan_out), requires_grad=True))
        biases.append(Tensor(np.zeros(fan_out), requires_grad=True))
    return Fnn(weights, biases, list(activations))


def init_lstm(rng: np.random.Generator, input_size: int, hidden_size: int) -> Lstm:
    """Xavier-uniform gate matrices, zero biases except forget-gate bias 1.0."""
    params: dict[str, Tensor] = {}
    for gate in Lstm.GATES:
        params[f"wx_{gate}"] = Tensor(xavier_uniform(rng, input_size, hidden_size), requires_grad=True)
        params[f"wh_{gate}"] = Tensor(xavier_uniform(rng, hidden_size, hidden_size), requires_grad=True)
        bias = np.ones(hidden_size) if gate == "f" else np.zeros(hidden_size)
        params[f"b_{gate}"] = Tensor(bias, requires_grad=True)
    return Lstm(input_size, hidden_size, params)


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    """Adam with bias correction; updates in place and zeroes grads afterward."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, Tensor]) -> None:
        for name, p in params.items():
            if p.grad is None:
                raise ValidationError(f"adam_step: parameter {name!r} has no gradient")
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, p in params.items():
            g = p.grad
            m = self._m.setdefault(name, np.zeros_like(p.data))
            v = self._v.setdefault(name, np.zeros_like(p.data))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.zero_grad()


# ---------------------------------------------------------------------------
# checkpoints: zip of manifest.json + params.bin (little-endian float64)


def config_hash(config_dict: dict) -> str:
    blob = json.dumps(config_dict, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def save_checkpoint(path, params: dict[str, Tensor], manifest: dict) -> None:
    entries = []
    payload = io.BytesIO()
    offset = 0
    for name in sorted(params):
        raw = np.ascontiguousarray(params[name].data, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(params[name].shape), "offset": offset, "nbytes": len(raw)})
        payload.write(raw)
        offset += len(raw)
    doc = dict(manifest)
    doc["params"] = entries
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        zf.writestr("manifest.json", json.dumps(doc, indent=1, sort_keys=True))
        zf.writestr("params.bin", payload.getvalue())


def load_checkpoint(path) -> tuple[dict[str, Tensor], dict]:
    with zipfile.ZipFile(path) as zf:
        doc = json.loads(zf.read("manifest.json"))
        blob = zf.read("params.bin")
    params = {}
    for ent in doc.pop("params"):
        raw = blob[ent["offset"] : ent["offset"] + ent["nbytes"]]
        arr = np.frombuffer(raw, dtype="<f8").reshape(ent["shape"]).copy()
        params[ent["name"]] = Tensor(arr, requires_grad=True)
    return params, doc
