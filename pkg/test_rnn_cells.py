"""Tests for the simple RNN, LSTM and GRU cells."""
import numpy as np
import pytest

from conftest import max_gradient_error, oracle_gru, oracle_lstm, oracle_simple, random_cell
from dbrnn.services.numeric_core import SeededRng, ShapeError
from dbrnn.services.rnn_cells import (
    CellState,
    GruParams,
    LstmParams,
    PARAM_TYPES,
    SimpleRnnParams,
    cell_backward,
    cell_step,
    gru_step,
    lstm_step,
    simple_rnn_step,
    zero_state,
)


def _column(values):
    return np.array(values, dtype=np.float64).reshape(-1, 1)


def _random_state(cell, batch, seed):
    rng = SeededRng(seed)
    h = rng.uniform(cell.hidden_size * batch, -0.8, 0.8).reshape(cell.hidden_size, batch)
    c = rng.uniform(cell.hidden_size * batch, -1.5, 1.5).reshape(cell.hidden_size, batch) if cell.kind == "lstm" else None
    return CellState(h=h, c=c)


@pytest.mark.parametrize("kind", ["simple", "lstm", "gru"])
def test_zero_parameters_give_zero_state(kind):
    cell = PARAM_TYPES[kind].zeros(3, 4)
    state, _ = cell_step(cell, _column([0.5, -1.0, 2.0]), zero_state(cell))
    np.testing.assert_array_equal(state.h, np.zeros((4, 1)))
    if kind == "lstm":
        np.testing.assert_array_equal(state.c, np.zeros((4, 1)))


def test_simple_cell_identity_input():
    cell = SimpleRnnParams(W_xh=np.eye(2), W_hh=np.zeros((2, 2)), b_h=np.zeros((2, 1)))
    h, _ = simple_rnn_step(cell, _column([1.0, 0.0]), np.zeros((2, 1)))
    np.testing.assert_allclose(h, _column([np.tanh(1.0), 0.0]), rtol=1e-15)


def test_lstm_saturated_forget_gate_keeps_memory():
    cell = LstmParams.zeros(2, 3)
    cell.b_f[:] = 1e3
    cell.b_i[:] = -1e3
    c_prev = _column([0.25, -0.5, 0.75])
    state, _ = lstm_step(cell, _column([0.3, -0.7]), CellState(h=np.zeros((3, 1)), c=c_prev))
    np.testing.assert_array_equal(state.c, c_prev)


def test_gru_closed_update_gate_copies_state():
    cell = GruParams.zeros(2, 3)
    cell.b_z[:] = -1e3
    h_prev = _column([0.1, -0.2, 0.3])
    h, _ = gru_step(cell, _column([5.0, -5.0]), h_prev)
    np.testing.assert_array_equal(h, h_prev)


@pytest.mark.parametrize("kind", ["simple", "lstm", "gru"])
def test_hidden_state_is_bounded(kind):
    cell = random_cell(kind, 4, 5, seed=3, scale=20.0)
    state = zero_state(cell, batch=6)
    rng = SeededRng(8)
    for _ in range(30):
        x = rng.uniform(24, -50.0, 50.0).reshape(4, 6)
        state, _ = cell_step(cell, x, state)
        assert np.abs(state.h).max() <= 1.0


@pytest.mark.parametrize("kind", ["simple", "lstm", "gru"])
def test_step_matches_scalar_loop(kind):
    cell = random_cell(kind, 3, 4, seed=21)
    x = [0.4, -1.2, 0.7]
    start = _random_state(cell, 1, seed=5)
    h_list = start.h[:, 0].tolist()
    state, _ = cell_step(cell, _column(x), start)
    if kind == "lstm":
        h_ref, c_ref = oracle_lstm(cell, x, h_list, start.c[:, 0].tolist())
        np.testing.assert_allclose(state.c[:, 0], c_ref, rtol=0, atol=1e-12)
    elif kind == "gru":
        h_ref = oracle_gru(cell, x, h_list)
    else:
        h_ref = oracle_simple(cell, x, h_list)
    np.testing.assert_allclose(state.h[:, 0], h_ref, rtol=0, atol=1e-12)


@pytest.mark.parametrize("kind", ["simple", "lstm", "gru"])
def test_backward_matches_finite_differences(kind):
    cell = random_cell(kind, 2, 3, seed=11)
    rng = SeededRng(17)
    x = rng.uniform(4, -1.0, 1.0).reshape(2, 2)
    start = _random_state(cell, 2, seed=29)
    weight_h = rng.uniform(6, -1.0, 1.0).reshape(3, 2)
    weight_c = rng.uniform(6, -1.0, 1.0).reshape(3, 2)

    def loss():
        state, _ = cell_step(cell, x, start)
        total = float((weight_h * state.h).sum())
        if state.c is not None:
            total += float((weight_c * state.c).sum())
        return total

    _, tape = cell_step(cell, x, start)
    grad_out = CellState(h=weight_h, c=weight_c if kind == "lstm" else None)
    grads, dx, d_prev = cell_backward(kind, cell, tape, grad_out)

    assert max_gradient_error(loss, cell.arrays(), grads.arrays()) < 1e-6
    inputs = {"x": x, "h": start.h}
    analytic = {"x": dx, "h": d_prev.h}
    if kind == "lstm":
        inputs["c"] = start.c
        analytic["c"] = d_prev.c
    assert max_gradient_error(loss, inputs, analytic) < 1e-6


@pytest.mark.parametrize("kind", ["simple", "lstm", "gru"])
def test_zero_upstream_gives_zero_gradients(kind):
    cell = random_cell(kind, 2, 3, seed=4)
    start = _random_state(cell, 2, seed=9)
    _, tape = cell_step(cell, np.ones((2, 2)), start)
    zeros = np.zeros((3, 2))
    grads, dx, d_prev = cell_backward(kind, cell, tape, CellState(h=zeros, c=zeros if kind == "lstm" else None))
    for value in grads.arrays().values():
        np.testing.assert_array_equal(value, np.zeros_like(value))
    np.testing.assert_array_equal(dx, np.zeros((2, 2)))
    np.testing.assert_array_equal(d_prev.h, zeros)


@pytest.mark.parametrize("kind", ["simple", "lstm", "gru"])
def test_shape_contract(kind):
    cell = PARAM_TYPES[kind].zeros(5, 7)
    state, _ = cell_step(cell, np.zeros((5, 3)), zero_state(cell, batch=3))
    assert state.h.shape == (7, 3)
    with pytest.raises(ShapeError):
        cell_step(cell, np.zeros((4, 3)), zero_state(cell, batch=3))
    with pytest.raises(ShapeError):
        cell_step(cell, np.zeros((5, 3)), zero_state(cell, batch=2))


def test_parameter_shapes_are_validated():
    with pytest.raises(ShapeError):
        SimpleRnnParams(W_xh=np.zeros((2, 3)), W_hh=np.zeros((3, 3)), b_h=np.zeros((2, 1)))


def test_backward_rejects_mismatched_tape():
    lstm = LstmParams.zeros(2, 3)
    gru = GruParams.zeros(2, 3)
    _, tape = cell_step(lstm, np.zeros((2, 1)), zero_state(lstm))
    with pytest.raises(ShapeError):
        cell_backward("gru", gru, tape, CellState(h=np.zeros((3, 1))))


def test_initialize_is_deterministic():
    a = LstmParams.initialize(4, 6, SeededRng(1))
    b = LstmParams.initialize(4, 6, SeededRng(1))
    for name in a.names():
        assert a.arrays()[name].tobytes() == b.arrays()[name].tobytes()
    np.testing.assert_array_equal(a.b_f, np.zeros((6, 1)))
