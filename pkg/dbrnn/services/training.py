"""Loss, backpropagation through time, Adam with step decay and the epoch loop."""
from dataclasses import dataclass
from decimal import Decimal
from typing import Callable, Dict, List, Optional, Sequence, Tuple
import logging
import math

import numpy as np

from dbrnn.models.schemas import EpochReport, TrainingConfig
from dbrnn.services.datapipe import Example, stack_examples
from dbrnn.services.network import ModelParameters, forward_trace
from dbrnn.services.numeric_core import DbrnnError, NonFiniteError, SeededRng, ShapeError, matmul
from dbrnn.services.rnn_cells import CellState, cell_backward

logger = logging.getLogger("dbrnn")

PROBABILITY_FLOOR = 1e-12

Gradients = Dict[str, np.ndarray]


class LabelError(DbrnnError, ValueError):
    """A class label outside [0, num_classes)."""
    pass


class TrainingDivergedError(DbrnnError):
    """The loss or a gradient became non-finite."""
    pass


class EmptyDatasetError(DbrnnError):
    """Training was asked to fit an empty set."""
    pass


def cross_entropy_loss(probs: np.ndarray, label: int) -> float:
    """-log p[label] with the probability floored at 1e-12."""
    probs = np.asarray(probs, dtype=np.float64).reshape(-1)
    if not 0 <= int(label) < probs.size or int(label) != label:
        raise LabelError(f"Label {label} is out of range for {probs.size} classes")
    return float(-math.log(max(probs[int(label)], PROBABILITY_FLOOR)))


def _labels_of(examples: Sequence[Example], num_classes: int) -> np.ndarray:
    labels = np.array([example.label for example in examples], dtype=np.int64)
    bad = labels[(labels < 0) | (labels >= num_classes)]
    if bad.size:
        raise LabelError(f"Label {int(bad[0])} is out of range for {num_classes} classes")
    return labels


def _batch_loss(probs: np.ndarray, labels: np.ndarray) -> float:
    picked = probs[labels, np.arange(labels.size)]
    return float(np.mean(-np.log(np.maximum(picked, PROBABILITY_FLOOR))))


def bptt_gradients(m: ModelParameters, examples: Sequence[Example]) -> Tuple[Gradients, float]:
    """Mean cross-entropy over the batch and its gradient for every parameter.

    Each recurrent direction is unrolled in its own time order: the forward
    cell is walked back from the last timestep, the backward cell from the
    first. Gradients are keyed like ModelParameters.named_arrays().
    """
    if not examples:
        raise EmptyDatasetError("Cannot compute gradients of an empty batch")
    X, _ = stack_examples(examples)
    labels = _labels_of(examples, m.config.num_classes)
    trace = forward_trace(m, X)
    batch = labels.size
    loss = _batch_loss(trace.probs, labels)

    onehot = np.zeros_like(trace.probs)
    onehot[labels, np.arange(batch)] = 1.0
    dlogits = (trace.probs - onehot) / batch

    grads: Gradients = {}
    readout = trace.layers[-1].outputs[-1]
    grads["output.W_hy"] = matmul(dlogits, readout.T)
    grads["output.b_y"] = dlogits.sum(axis=1, keepdims=True)

    steps = len(trace)
    d_outputs = [np.zeros_like(output) for output in trace.layers[-1].outputs]
    d_outputs[-1] = matmul(m.W_hy.T, dlogits)

    for index in range(len(m.layers) - 1, -1, -1):
        layer, layer_trace = m.layers[index], trace.layers[index]
        hidden = layer.hidden_size
        d_inputs = [np.zeros((layer.input_size, batch)) for _ in range(steps)]
        directions = [("forward", layer.forward, layer_trace.forward_tapes, range(steps - 1, -1, -1), slice(0, hidden))]
        if layer.bidirectional:
            directions.append(
                ("backward", layer.backward, layer_trace.backward_tapes, range(steps), slice(hidden, 2 * hidden))
            )
        for direction, cell, tapes, order, rows in directions:
            totals = {name: np.zeros_like(value) for name, value in cell.arrays().items()}
            carry = CellState(h=np.zeros((hidden, batch)))
            for t in order:
                upstream = CellState(h=d_outputs[t][rows] + carry.h, c=carry.c)
                step_grads, dx, carry = cell_backward(cell.kind, cell, tapes[t], upstream)
                for name, value in step_grads.arrays().items():
                    totals[name] += value
                d_inputs[t] += dx
            for name, value in totals.items():
                grads[f"layers.{index}.{direction}.{name}"] = value
        d_outputs = d_inputs

    return grads, loss


def clip_gradients(grads: Gradients, clip_value: float) -> Gradients:
    """Element-wise clamp to [-clip_value, clip_value]."""
    if clip_value <= 0:
        raise ValueError(f"clip_value must be positive, got {clip_value}")
    return {name: np.clip(value, -clip_value, clip_value) for name, value in grads.items()}


@dataclass
class AdamState:
    """First and second moment accumulators, one pair per parameter matrix."""
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, params: Dict[str, np.ndarray], **constants) -> "AdamState":
        return cls(
            m={name: np.zeros_like(value) for name, value in params.items()},
            v={name: np.zeros_like(value) for name, value in params.items()},
            **constants,
        )


def adam_step(
    params: Dict[str, np.ndarray],
    grads: Gradients,
    state: AdamState,
    lr: float,
) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; neither input is modified."""
    step = state.step + 1
    correction1 = 1.0 - state.beta1 ** step
    correction2 = 1.0 - state.beta2 ** step
    new_params, new_m, new_v = {}, {}, {}
    for name, value in params.items():
        grad = grads[name]
        if grad.shape != value.shape:
            raise ShapeError(f"Gradient for {name} has shape {grad.shape}, parameter has {value.shape}")
        new_m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * grad
        new_v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * grad * grad
        m_hat = new_m[name] / correction1
        v_hat = new_v[name] / correction2
        new_params[name] = value - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = AdamState(m=new_m, v=new_v, step=step, beta1=state.beta1, beta2=state.beta2, eps=state.eps)
    return new_params, new_state


def lr_schedule(config: TrainingConfig, epoch: int) -> float:
    """learning_rate * decay_factor ** (epoch // decay_every), in decimal arithmetic."""
    if epoch < 0:
        raise ValueError(f"epoch must be non-negative, got {epoch}")
    decays = epoch // config.decay_every
    rate = Decimal(str(config.learning_rate)) * Decimal(str(config.decay_factor)) ** decays
    return float(rate)


def evaluate_loss(m: ModelParameters, examples: Sequence[Example], batch_size: int = 256) -> Tuple[float, float]:
    """Mean loss and argmax accuracy of a model over a set of examples."""
    if not examples:
        raise EmptyDatasetError("Cannot evaluate on an empty set")
    total_loss = 0.0
    correct = 0
    for start in range(0, len(examples), batch_size):
        chunk = examples[start:start + batch_size]
        X, _ = stack_examples(chunk)
        labels = _labels_of(chunk, m.config.num_classes)
        probs = forward_trace(m, X).probs
        total_loss += _batch_loss(probs, labels) * labels.size
        correct += int(np.sum(np.argmax(probs, axis=0) == labels))
    return total_loss / len(examples), correct / len(examples)


def train(
    m: ModelParameters,
    train_set: Sequence[Example],
    val_set: Optional[Sequence[Example]],
    config: TrainingConfig,
    on_epoch: Optional[Callable[[EpochReport], None]] = None,
) -> Tuple[ModelParameters, List[EpochReport]]:
    """Fit a model with shuffled minibatches, clipping and Adam.

    Args:
        m: Starting parameters; never modified.
        train_set: Examples to fit.
        val_set: Examples for model selection. Without one, the model with the
            lowest post-epoch training loss is kept.
        config: Optimizer, schedule and loop settings.
        on_epoch: Called with every EpochReport as soon as it is ready.

    Returns:
        Tuple of (best model, one report per epoch)

    Raises:
        EmptyDatasetError: If train_set is empty
        TrainingDivergedError: If the loss or a gradient becomes non-finite
    """
    if not train_set:
        raise EmptyDatasetError("Training set is empty")
    if config.max_epochs == 0:
        return m, []

    rng = SeededRng(config.seed)
    params = m.named_arrays()
    state = AdamState.fresh(params)
    current = m
    best_model, best_score = m, math.inf
    reports: List[EpochReport] = []
    count = len(train_set)

    logger.info(
        f"[Train] {count} training examples, {len(val_set) if val_set else 0} validation examples, "
        f"{m.parameter_count()} parameters, up to {config.max_epochs} epochs"
    )
    for epoch in range(config.max_epochs):
        lr = lr_schedule(config, epoch)
        order = rng.permutation(count) if config.shuffle else np.arange(count)
        loss_sum = 0.0
        for start in range(0, count, config.batch_size):
            batch = [train_set[i] for i in order[start:start + config.batch_size]]
            try:
                grads, loss = bptt_gradients(current, batch)
            except NonFiniteError as e:
                raise TrainingDivergedError(f"Epoch {epoch}: non-finite values during backpropagation ({e})")
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"Epoch {epoch}: loss became {loss}")
            params, state = adam_step(params, clip_gradients(grads, config.clip_value), state, lr)
            if not all(np.isfinite(value).all() for value in params.values()):
                raise TrainingDivergedError(f"Epoch {epoch}: parameters became non-finite")
            current = current.with_arrays(params)
            loss_sum += loss * len(batch)

        val_loss, val_accuracy = evaluate_loss(current, val_set) if val_set else (None, None)
        report = EpochReport(
            epoch=epoch,
            train_loss=loss_sum / count,
            val_loss=val_loss,
            val_accuracy=val_accuracy,
            learning_rate=lr,
        )
        reports.append(report)
        if on_epoch is not None:
            on_epoch(report)

        score = val_loss if val_set else evaluate_loss(current, train_set)[0]
        if score < best_score:
            best_model, best_score = current, score

        message = f"[Train] epoch {epoch}: train {report.train_loss:.6f}"
        if val_loss is not None:
            message += f", val {val_loss:.6f} (acc {val_accuracy:.3f})"
        message += f", lr {lr:g}"
        logger.info(message)

    logger.info(f"[Train] Finished; best selection loss {best_score:.6f}")
    return best_model, reports
