"""Shared pytest fixtures, finite-difference helpers and scalar-loop oracles."""
import math

import numpy as np
import pytest

from dbrnn.services.numeric_core import SeededRng
from dbrnn.services.rnn_cells import PARAM_TYPES


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run long end-to-end experiments")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running end-to-end experiment (needs --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


# ---------------------------------------------------------------- finite differences


def central_difference(loss, array: np.ndarray, index, eps: float = 1e-5) -> float:
    """d loss / d array[index], perturbing the array in place and restoring it."""
    original = array[index]
    array[index] = original + eps
    plus = loss()
    array[index] = original - eps
    minus = loss()
    array[index] = original
    return (plus - minus) / (2.0 * eps)


def relative_error(analytic: float, numeric: float, floor: float = 1e-3) -> float:
    """|a - n| relative to the larger magnitude, floored so vanishing gradients compare absolutely."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def max_gradient_error(loss, arrays: dict, grads: dict, eps: float = 1e-5) -> float:
    worst = 0.0
    for name, array in arrays.items():
        for index in np.ndindex(array.shape):
            numeric = central_difference(loss, array, index, eps)
            worst = max(worst, relative_error(float(grads[name][index]), numeric))
    return worst


def random_cell(kind: str, input_size: int, hidden_size: int, seed: int, scale: float = 1.0):
    """Cell with every weight and bias uniform in [-scale, scale)."""
    rng = SeededRng(seed)
    param_type = PARAM_TYPES[kind]
    arrays = {}
    for name in param_type.names():
        cols = 1 if name.startswith("b_") else input_size if name.startswith("W_x") else hidden_size
        arrays[name] = rng.uniform(hidden_size * cols, -scale, scale).reshape(hidden_size, cols)
    return param_type.from_arrays(arrays)


@pytest.fixture
def rng():
    return SeededRng(12345)


# ---------------------------------------------------------------- scalar-loop oracles


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _affine(W, x, U, h, b, i):
    total = b[i][0]
    for j in range(len(x)):
        total += W[i][j] * x[j]
    for j in range(len(h)):
        total += U[i][j] * h[j]
    return total


def oracle_simple(p, x, h):
    """simple RNN step on plain lists."""
    W, U, b = p.W_xh.tolist(), p.W_hh.tolist(), p.b_h.tolist()
    return [math.tanh(_affine(W, x, U, h, b, i)) for i in range(len(b))]


def oracle_lstm(p, x, h, c):
    a = {name: value.tolist() for name, value in p.arrays().items()}
    h_new, c_new = [], []
    for i in range(len(h)):
        gi = _sigmoid(_affine(a["W_xi"], x, a["W_hi"], h, a["b_i"], i))
        gf = _sigmoid(_affine(a["W_xf"], x, a["W_hf"], h, a["b_f"], i))
        go = _sigmoid(_affine(a["W_xo"], x, a["W_ho"], h, a["b_o"], i))
        gg = math.tanh(_affine(a["W_xg"], x, a["W_hg"], h, a["b_g"], i))
        ci = gf * c[i] + gi * gg
        c_new.append(ci)
        h_new.append(go * math.tanh(ci))
    return h_new, c_new


def oracle_gru(p, x, h):
    a = {name: value.tolist() for name, value in p.arrays().items()}
    size = len(h)
    z = [_sigmoid(_affine(a["W_xz"], x, a["W_hz"], h, a["b_z"], i)) for i in range(size)]
    r = [_sigmoid(_affine(a["W_xr"], x, a["W_hr"], h, a["b_r"], i)) for i in range(size)]
    reset = [r[i] * h[i] for i in range(size)]
    n = [math.tanh(_affine(a["W_xn"], x, a["W_hn"], reset, a["b_n"], i)) for i in range(size)]
    return [(1.0 - z[i]) * h[i] + z[i] * n[i] for i in range(size)]


def oracle_run(cell, frames, reverse=False):
    """Hidden states of a cell over a list of frames, indexed by time."""
    size = cell.hidden_size
    h, c = [0.0] * size, [0.0] * size
    out = [None] * len(frames)
    order = range(len(frames) - 1, -1, -1) if reverse else range(len(frames))
    for t in order:
        if cell.kind == "lstm":
            h, c = oracle_lstm(cell, frames[t], h, c)
        elif cell.kind == "gru":
            h = oracle_gru(cell, frames[t], h)
        else:
            h = oracle_simple(cell, frames[t], h)
        out[t] = h
    return out


def oracle_model(model, window):
    """Class probabilities of a full model for one (T, F) window, in scalar arithmetic."""
    sequence = [list(row) for row in np.asarray(window).tolist()]
    for layer in model.layers:
        forward = oracle_run(layer.forward, sequence)
        if layer.backward is not None:
            backward = oracle_run(layer.backward, sequence, reverse=True)
            sequence = [f + b for f, b in zip(forward, backward)]
        else:
            sequence = forward
    last = sequence[-1]
    W, b = model.W_hy.tolist(), model.b_y.tolist()
    logits = [b[k][0] + sum(W[k][j] * last[j] for j in range(len(last))) for k in range(len(b))]
    top = max(logits)
    exps = [math.exp(v - top) for v in logits]
    total = sum(exps)
    return [e / total for e in exps]
