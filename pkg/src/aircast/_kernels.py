"""Hot array kernels with numba-jitted and pure-numpy implementations.

The jitted path is used when numba imports cleanly; set ``AIRCAST_NO_NUMBA=1``
to force the numpy fallbacks (``benchmarks/bench_kernels.py`` compares both).
Matrix products stay on BLAS either way; what lives here is the scatter /
gather / segment glue that numpy only offers through slow ufunc.at calls,
plus the synthetic-corpus recurrence.

Both paths accumulate in identical (row) order, so gather/scatter results are
bit-identical across them; the simulation step uses the same dot-product
formulation in both.
"""

from __future__ import annotations

import os

import numpy as np


def _numba_disabled() -> bool:
    return os.environ.get("AIRCAST_NO_NUMBA", "").strip() not in ("", "0")


try:
    if _numba_disabled():
        raise ImportError("disabled via AIRCAST_NO_NUMBA")
    from numba import njit

    USE_NUMBA = True
except ImportError:
    njit = None
    USE_NUMBA = False


# ---------------------------------------------------------------------------
# numpy reference implementations


def gather_rows_np(x: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return x[idx]


def scatter_add_rows_np(grad: np.ndarray, idx: np.ndarray, n_rows: int) -> np.ndarray:
    out = np.zeros((n_rows, grad.shape[1]), dtype=np.float64)
    np.add.at(out, idx, grad)
    return out


def segment_sum_np(x: np.ndarray, seg: np.ndarray, n_segments: int) -> np.ndarray:
    out = np.zeros((n_segments, x.shape[1]), dtype=np.float64)
    np.add.at(out, seg, x)
    return out


def simulate_field_np(
    a0: np.ndarray,
    decay: float,
    transport: np.ndarray,
    state_at: np.ndarray,
    emission: np.ndarray,
    noise: np.ndarray,
) -> np.ndarray:
    """Advance ``a(t+1) = decay*a(t) + transport[state_at[t]] @ a(t) + emission[t] + noise[t]``.

    Returns the full trajectory, shape (T+1, n), row 0 = a0.
    """
    steps = emission.shape[0]
    out = np.empty((steps + 1, a0.shape[0]), dtype=np.float64)
    out[0] = a0
    a = a0.copy()
    for t in range(steps):
        a = decay * a + transport[state_at[t]] @ a + emission[t] + noise[t]
        out[t + 1] = a
    return out


def lstm_cell_fwd_np(z: np.ndarray, c_prev: np.ndarray, hidden: int):
    """Gate activations + state update; returns (gates, g, c, tc, h).

    gates stacks the sigmoid outputs [i | f | o]; g is the tanh candidate,
    c the new cell state, tc = tanh(c), h the hidden state.
    """
    gates = np.tanh(0.5 * z[:, : 3 * hidden])
    gates += 1.0
    gates *= 0.5
    i = gates[:, :hidden]
    f = gates[:, hidden : 2 * hidden]
    o = gates[:, 2 * hidden :]
    g = np.tanh(z[:, 3 * hidden :])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    return gates, g, c, tc, o * tc


def lstm_cell_bwd_np(gh, gc, gates, g, tc, c_prev, hidden: int):
    i = gates[:, :hidden]
    f = gates[:, hidden : 2 * hidden]
    o = gates[:, 2 * hidden :]
    dc = gc + gh * o * (1.0 - tc * tc)
    dpre = np.empty((gh.shape[0], 4 * hidden))
    dpre[:, :hidden] = dc * g * i * (1.0 - i)
    dpre[:, hidden : 2 * hidden] = dc * c_prev * f * (1.0 - f)
    dpre[:, 2 * hidden : 3 * hidden] = gh * tc * o * (1.0 - o)
    dpre[:, 3 * hidden :] = dc * i * (1.0 - g * g)
    return dpre, dc * f


# ---------------------------------------------------------------------------
# numba implementations (same accumulation order as the numpy ones)

if USE_NUMBA:
    import math

    @njit(cache=True)
    def _gather_rows_nb(x, idx):
        out = np.empty((idx.shape[0], x.shape[1]), dtype=np.float64)
        for i in range(idx.shape[0]):
            out[i] = x[idx[i]]
        return out

    @njit(cache=True)
    def _scatter_add_rows_nb(grad, idx, n_rows):
        out = np.zeros((n_rows, grad.shape[1]), dtype=np.float64)
        for i in range(idx.shape[0]):
            row = idx[i]
            for j in range(grad.shape[1]):
                out[row, j] += grad[i, j]
        return out

    @njit(cache=True)
    def _segment_sum_nb(x, seg, n_segments):
        out = np.zeros((n_segments, x.shape[1]), dtype=np.float64)
        for i in range(seg.shape[0]):
            row = seg[i]
            for j in range(x.shape[1]):
                out[row, j] += x[i, j]
        return out

    @njit(cache=True)
    def _lstm_cell_fwd_nb(z, c_prev, hidden):
        rows = z.shape[0]
        gates = np.empty((rows, 3 * hidden))
        g = np.empty((rows, hidden))
        c = np.empty((rows, hidden))
        tc = np.empty((rows, hidden))
        h = np.empty((rows, hidden))
        for r in range(rows):
            for j in range(hidden):
                iv = 0.5 * math.tanh(0.5 * z[r, j]) + 0.5
                fv = 0.5 * math.tanh(0.5 * z[r, hidden + j]) + 0.5
                ov = 0.5 * math.tanh(0.5 * z[r, 2 * hidden + j]) + 0.5
                gv = math.tanh(z[r, 3 * hidden + j])
                cv = fv * c_prev[r, j] + iv * gv
                tcv = math.tanh(cv)
                gates[r, j] = iv
                gates[r, hidden + j] = fv
                gates[r, 2 * hidden + j] = ov
                g[r, j] = gv
                c[r, j] = cv
                tc[r, j] = tcv
                h[r, j] = ov * tcv
        return gates, g, c, tc, h

    @njit(cache=True)
    def _lstm_cell_bwd_nb(gh, gc, gates, g, tc, c_prev, hidden):
        rows = gh.shape[0]
        dpre = np.empty((rows, 4 * hidden))
        dc_prev = np.empty((rows, hidden))
        for r in range(rows):
            for j in range(hidden):
                iv = gates[r, j]
                fv = gates[r, hidden + j]
                ov = gates[r, 2 * hidden + j]
                tcv = tc[r, j]
                dc = gc[r, j] + gh[r, j] * ov * (1.0 - tcv * tcv)
                dpre[r, j] = dc * g[r, j] * iv * (1.0 - iv)
                dpre[r, hidden + j] = dc * c_prev[r, j] * fv * (1.0 - fv)
                dpre[r, 2 * hidden + j] = gh[r, j] * tcv * ov * (1.0 - ov)
                dpre[r, 3 * hidden + j] = dc * iv * (1.0 - g[r, j] * g[r, j])
                dc_prev[r, j] = dc * fv
        return dpre, dc_prev

    def lstm_cell_fwd_nb(z, c_prev, hidden):
        return _lstm_cell_fwd_nb(np.ascontiguousarray(z), np.ascontiguousarray(c_prev), hidden)

    def lstm_cell_bwd_nb(gh, gc, gates, g, tc, c_prev, hidden):
        return _lstm_cell_bwd_nb(
            np.ascontiguousarray(gh),
            np.ascontiguousarray(gc),
            gates,
            g,
            tc,
            np.ascontiguousarray(c_prev),
            hidden,
        )

    @njit(cache=True)
    def _simulate_field_nb(a0, decay, transport, state_at, emission, noise):
        steps = emission.shape[0]
        out = np.empty((steps + 1, a0.shape[0]), dtype=np.float64)
        out[0] = a0
        a = a0.copy()
        for t in range(steps):
            a = decay * a + np.dot(transport[state_at[t]], a) + emission[t] + noise[t]
            out[t + 1] = a
        return out

    def gather_rows_nb(x, idx):
        return _gather_rows_nb(np.ascontiguousarray(x), idx)

    def scatter_add_rows_nb(grad, idx, n_rows):
        return _scatter_add_rows_nb(np.ascontiguousarray(grad), idx, n_rows)

    def segment_sum_nb(x, seg, n_segments):
        return _segment_sum_nb(np.ascontiguousarray(x), seg, n_segments)

    def simulate_field_nb(a0, decay, transport, state_at, emission, noise):
        return _simulate_field_nb(
            np.ascontiguousarray(a0),
            decay,
            np.ascontiguousarray(transport),
            state_at,
            np.ascontiguousarray(emission),
            np.ascontiguousarray(noise),
        )

    gather_rows = gather_rows_nb
    scatter_add_rows = scatter_add_rows_nb
    segment_sum = segment_sum_nb
    simulate_field = simulate_field_nb
    # forward is tanh-bound: vectorized libm beats the scalar jit loop, so the
    # numpy path stays the default (bench_kernels.py shows the comparison);
    # the arithmetic-only backward is where the jit fusion pays off.
    lstm_cell_fwd = lstm_cell_fwd_np
    lstm_cell_bwd = lstm_cell_bwd_nb
else:
    gather_rows = gather_rows_np
    scatter_add_rows = scatter_add_rows_np
    segment_sum = segment_sum_np
    simulate_field = simulate_field_np
    lstm_cell_fwd = lstm_cell_fwd_np
    lstm_cell_bwd = lstm_cell_bwd_np
