"""Single-timestep simple RNN, LSTM and GRU cells with hand-derived gradients.

Cells operate on column batches: x is (input, B), hidden states are (hidden, B).
Parameter gradients are summed over the batch columns.

Gate equations (no peepholes):

    simple:  h' = tanh(W_xh x + W_hh h + b_h)
    LSTM:    i, f, o = sigmoid(W_x* x + W_h* h + b_*);  g = tanh(W_xg x + W_hg h + b_g)
             c' = f * c + i * g;  h' = o * tanh(c')
    GRU:     z, r = sigmoid(W_x* x + W_h* h + b_*)
             n = tanh(W_xn x + W_hn (r * h) + b_n);  h' = (1 - z) * h + z * n
"""
from dataclasses import dataclass, field, fields
from typing import ClassVar, Dict, Literal, Optional, Tuple, Type

import numpy as np

from dbrnn.services.numeric_core import (
    SeededRng,
    ShapeError,
    init_weights,
    matmul,
    sigmoid,
    tanh,
)

CellKind = Literal["simple", "lstm", "gru"]


@dataclass(frozen=True, eq=False)
class CellParams:
    """Common behaviour of the per-kind parameter containers.

    Fields named W_x* are (hidden x input), W_h* are (hidden x hidden) and
    b_* are (hidden x 1).
    """

    kind: ClassVar[str] = ""

    def __post_init__(self):
        hidden, inputs = self.W_x_shape()
        for name, value in self.arrays().items():
            if name.startswith("W_x"):
                expected = (hidden, inputs)
            elif name.startswith("W_h"):
                expected = (hidden, hidden)
            else:
                expected = (hidden, 1)
            if value.shape != expected:
                raise ShapeError(f"{self.kind} parameter {name} has shape {value.shape}, expected {expected}")

    def W_x_shape(self) -> Tuple[int, int]:
        first = getattr(self, fields(self)[0].name)
        return first.shape

    @property
    def hidden_size(self) -> int:
        return self.W_x_shape()[0]

    @property
    def input_size(self) -> int:
        return self.W_x_shape()[1]

    @classmethod
    def names(cls) -> Tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.names()}

    @classmethod
    def from_arrays(cls, arrays: Dict[str, np.ndarray]) -> "CellParams":
        return cls(**{name: np.asarray(arrays[name], dtype=np.float64) for name in cls.names()})

    @classmethod
    def initialize(cls, input_size: int, hidden_size: int, rng: SeededRng, scheme: str = "uniform_scaled") -> "CellParams":
        """Weights from `scheme` in field order, biases at zero."""
        arrays = {}
        for name in cls.names():
            if name.startswith("b_"):
                arrays[name] = init_weights(hidden_size, 1, "zeros", rng)
            else:
                cols = input_size if name.startswith("W_x") else hidden_size
                arrays[name] = init_weights(hidden_size, cols, scheme, rng)
        return cls(**arrays)

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int) -> "CellParams":
        return cls.initialize(input_size, hidden_size, SeededRng(0), scheme="zeros")

    def zeros_like(self) -> "CellParams":
        return type(self)(**{name: np.zeros_like(value) for name, value in self.arrays().items()})


@dataclass(frozen=True, eq=False)
class SimpleRnnParams(CellParams):
    kind: ClassVar[str] = "simple"
    W_xh: np.ndarray
    W_hh: np.ndarray
    b_h: np.ndarray


@dataclass(frozen=True, eq=False)
class LstmParams(CellParams):
    kind: ClassVar[str] = "lstm"
    W_xi: np.ndarray
    W_hi: np.ndarray
    b_i: np.ndarray
    W_xf: np.ndarray
    W_hf: np.ndarray
    b_f: np.ndarray
    W_xo: np.ndarray
    W_ho: np.ndarray
    b_o: np.ndarray
    W_xg: np.ndarray
    W_hg: np.ndarray
    b_g: np.ndarray


@dataclass(frozen=True, eq=False)
class GruParams(CellParams):
    kind: ClassVar[str] = "gru"
    W_xz: np.ndarray
    W_hz: np.ndarray
    b_z: np.ndarray
    W_xr: np.ndarray
    W_hr: np.ndarray
    b_r: np.ndarray
    W_xn: np.ndarray
    W_hn: np.ndarray
    b_n: np.ndarray


PARAM_TYPES: Dict[str, Type[CellParams]] = {
    "simple": SimpleRnnParams,
    "lstm": LstmParams,
    "gru": GruParams,
}


@dataclass(frozen=True, eq=False)
class CellState:
    """Hidden state h and, for LSTM only, memory cell c."""
    h: np.ndarray
    c: Optional[np.ndarray] = None


@dataclass
class CellTape:
    """Values cached by a forward step for its backward step."""
    kind: str
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: Optional[np.ndarray] = None
    values: Dict[str, np.ndarray] = field(default_factory=dict)


def zero_state(params: CellParams, batch: int = 1) -> CellState:
    h = np.zeros((params.hidden_size, batch))
    c = np.zeros((params.hidden_size, batch)) if params.kind == "lstm" else None
    return CellState(h=h, c=c)


def _check_step_inputs(p: CellParams, x: np.ndarray, h_prev: np.ndarray):
    if x.ndim != 2 or x.shape[0] != p.input_size:
        raise ShapeError(f"{p.kind} cell expects input with {p.input_size} rows, got shape {x.shape}")
    if h_prev.shape != (p.hidden_size, x.shape[1]):
        raise ShapeError(
            f"{p.kind} cell expects previous hidden state of shape {(p.hidden_size, x.shape[1])}, got {h_prev.shape}"
        )


def _pre(W_x: np.ndarray, x: np.ndarray, W_h: np.ndarray, h: np.ndarray, b: np.ndarray) -> np.ndarray:
    return matmul(W_x, x) + matmul(W_h, h) + b


def simple_rnn_step(p: SimpleRnnParams, x: np.ndarray, h_prev: np.ndarray) -> Tuple[np.ndarray, CellTape]:
    """h = tanh(W_xh x + W_hh h_prev + b_h)."""
    _check_step_inputs(p, x, h_prev)
    h = tanh(_pre(p.W_xh, x, p.W_hh, h_prev, p.b_h))
    return h, CellTape(kind="simple", x=x, h_prev=h_prev, values={"h": h})


def lstm_step(p: LstmParams, x: np.ndarray, state: CellState) -> Tuple[CellState, CellTape]:
    """One LSTM step from (h, c) to (h', c')."""
    h_prev, c_prev = state.h, state.c
    _check_step_inputs(p, x, h_prev)
    if c_prev is None or c_prev.shape != h_prev.shape:
        raise ShapeError("LSTM state needs a memory cell with the hidden state's shape")
    i = sigmoid(_pre(p.W_xi, x, p.W_hi, h_prev, p.b_i))
    f = sigmoid(_pre(p.W_xf, x, p.W_hf, h_prev, p.b_f))
    o = sigmoid(_pre(p.W_xo, x, p.W_ho, h_prev, p.b_o))
    g = tanh(_pre(p.W_xg, x, p.W_hg, h_prev, p.b_g))
    c = f * c_prev + i * g
    tanh_c = tanh(c)
    h = o * tanh_c
    tape = CellTape(
        kind="lstm",
        x=x,
        h_prev=h_prev,
        c_prev=c_prev,
        values={"i": i, "f": f, "o": o, "g": g, "tanh_c": tanh_c},
    )
    return CellState(h=h, c=c), tape


def gru_step(p: GruParams, x: np.ndarray, h_prev: np.ndarray) -> Tuple[np.ndarray, CellTape]:
    """One GRU step; the reset gate scales h_prev before the recurrent product."""
    _check_step_inputs(p, x, h_prev)
    z = sigmoid(_pre(p.W_xz, x, p.W_hz, h_prev, p.b_z))
    r = sigmoid(_pre(p.W_xr, x, p.W_hr, h_prev, p.b_r))
    reset_h = r * h_prev
    n = tanh(_pre(p.W_xn, x, p.W_hn, reset_h, p.b_n))
    h = (1.0 - z) * h_prev + z * n
    tape = CellTape(kind="gru", x=x, h_prev=h_prev, values={"z": z, "r": r, "n": n, "reset_h": reset_h})
    return h, tape


def cell_step(p: CellParams, x: np.ndarray, state: CellState) -> Tuple[CellState, CellTape]:
    """Dispatch one step for any cell kind using the uniform CellState interface."""
    if p.kind == "lstm":
        return lstm_step(p, x, state)
    if p.kind == "gru":
        h, tape = gru_step(p, x, state.h)
    else:
        h, tape = simple_rnn_step(p, x, state.h)
    return CellState(h=h), tape


def _outer(delta: np.ndarray, activation: np.ndarray) -> np.ndarray:
    return matmul(delta, activation.T)


def _bias(delta: np.ndarray) -> np.ndarray:
    return delta.sum(axis=1, keepdims=True)


def cell_backward(
    kind: str,
    p: CellParams,
    tape: CellTape,
    grad_out: CellState,
) -> Tuple[CellParams, np.ndarray, CellState]:
    """Gradients of one step.

    grad_out holds dL/dh' (and dL/dc' for LSTM, None meaning zero). Returns
    (parameter gradients, dL/dx, gradient w.r.t. the previous state).
    """
    if tape.kind != kind or p.kind != kind:
        raise ShapeError(f"Tape from a {tape.kind} step cannot be used with {p.kind} parameters as {kind}")
    dh = grad_out.h
    if dh.shape != tape.h_prev.shape:
        raise ShapeError(f"Upstream gradient shape {dh.shape} does not match hidden shape {tape.h_prev.shape}")
    x, h_prev, v = tape.x, tape.h_prev, tape.values

    if kind == "simple":
        da = dh * (1.0 - v["h"] ** 2)
        grads = SimpleRnnParams(W_xh=_outer(da, x), W_hh=_outer(da, h_prev), b_h=_bias(da))
        dx = matmul(p.W_xh.T, da)
        dh_prev = matmul(p.W_hh.T, da)
        return grads, dx, CellState(h=dh_prev)

    if kind == "lstm":
        i, f, o, g, tanh_c = v["i"], v["f"], v["o"], v["g"], v["tanh_c"]
        dc_next = grad_out.c if grad_out.c is not None else np.zeros_like(dh)
        do = dh * tanh_c
        dc = dc_next + dh * o * (1.0 - tanh_c ** 2)
        da_i = dc * g * i * (1.0 - i)
        da_f = dc * tape.c_prev * f * (1.0 - f)
        da_o = do * o * (1.0 - o)
        da_g = dc * i * (1.0 - g ** 2)
        grads = LstmParams(
            W_xi=_outer(da_i, x), W_hi=_outer(da_i, h_prev), b_i=_bias(da_i),
            W_xf=_outer(da_f, x), W_hf=_outer(da_f, h_prev), b_f=_bias(da_f),
            W_xo=_outer(da_o, x), W_ho=_outer(da_o, h_prev), b_o=_bias(da_o),
            W_xg=_outer(da_g, x), W_hg=_outer(da_g, h_prev), b_g=_bias(da_g),
        )
        dx = (matmul(p.W_xi.T, da_i) + matmul(p.W_xf.T, da_f)
              + matmul(p.W_xo.T, da_o) + matmul(p.W_xg.T, da_g))
        dh_prev = (matmul(p.W_hi.T, da_i) + matmul(p.W_hf.T, da_f)
                   + matmul(p.W_ho.T, da_o) + matmul(p.W_hg.T, da_g))
        return grads, dx, CellState(h=dh_prev, c=dc * f)

    if kind == "gru":
        z, r, n, reset_h = v["z"], v["r"], v["n"], v["reset_h"]
        da_n = dh * z * (1.0 - n ** 2)
        da_z = dh * (n - h_prev) * z * (1.0 - z)
        d_reset_h = matmul(p.W_hn.T, da_n)
        da_r = d_reset_h * h_prev * r * (1.0 - r)
        grads = GruParams(
            W_xz=_outer(da_z, x), W_hz=_outer(da_z, h_prev), b_z=_bias(da_z),
            W_xr=_outer(da_r, x), W_hr=_outer(da_r, h_prev), b_r=_bias(da_r),
            W_xn=_outer(da_n, x), W_hn=_outer(da_n, reset_h), b_n=_bias(da_n),
        )
        dx = matmul(p.W_xz.T, da_z) + matmul(p.W_xr.T, da_r) + matmul(p.W_xn.T, da_n)
        dh_prev = (dh * (1.0 - z) + d_reset_h * r
                   + matmul(p.W_hz.T, da_z) + matmul(p.W_hr.T, da_r))
        return grads, dx, CellState(h=dh_prev)

    raise ShapeError(f"Unknown cell kind: {kind}")
