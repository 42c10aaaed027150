"""Bidirectional layers, deep stacks and the Bi-LSTM -> GRU -> softmax predictor.

A model is a stack of layers (each a forward cell plus an optional backward
cell) followed by a softmax readout of the last layer's output at the final
timestep of the window. Every window starts from zero states.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple
import json
import logging
import os

import numpy as np
from pydantic import ValidationError

from dbrnn.models.schemas import (
    LayerSpec,
    MatrixRecord,
    ModelFile,
    NetworkConfig,
)
from dbrnn.services.numeric_core import (
    DbrnnError,
    SeededRng,
    ShapeError,
    check_finite,
    init_weights,
    matmul,
    softmax,
)
from dbrnn.services.rnn_cells import (
    PARAM_TYPES,
    CellParams,
    CellTape,
    cell_step,
    zero_state,
)

logger = logging.getLogger("dbrnn")

MODEL_FORMAT_VERSION = 1


class ModelFileError(DbrnnError):
    """Base class for model file problems."""
    pass


class ModelVersionError(ModelFileError):
    """The file was written by an unsupported format version."""
    pass


class ModelShapeError(ModelFileError, ShapeError):
    """Parameter shapes are inconsistent with the configuration."""
    pass


class CorruptModelError(ModelFileError):
    """The file cannot be parsed as a model."""
    pass


@dataclass(frozen=True, eq=False)
class LayerParams:
    """Forward-direction cell and, for bidirectional layers, a backward cell."""
    forward: CellParams
    backward: Optional[CellParams] = None

    @property
    def bidirectional(self) -> bool:
        return self.backward is not None

    @property
    def input_size(self) -> int:
        return self.forward.input_size

    @property
    def hidden_size(self) -> int:
        return self.forward.hidden_size

    @property
    def output_size(self) -> int:
        return self.hidden_size * (2 if self.bidirectional else 1)


@dataclass(frozen=True, eq=False)
class ModelParameters:
    """All weights of a network together with its configuration and seed."""
    config: NetworkConfig
    layers: Tuple[LayerParams, ...]
    W_hy: np.ndarray
    b_y: np.ndarray
    seed: int = 0

    def __post_init__(self):
        validate_model(self)

    # Named views of the default three-unit system
    @property
    def forward_lstm(self) -> CellParams:
        return self.layers[0].forward

    @property
    def backward_lstm(self) -> Optional[CellParams]:
        return self.layers[0].backward

    @property
    def gru(self) -> CellParams:
        return self.layers[-1].forward

    def named_arrays(self) -> Dict[str, np.ndarray]:
        """Every parameter matrix under a stable dotted name."""
        arrays: Dict[str, np.ndarray] = {}
        for index, layer in enumerate(self.layers):
            for direction in ("forward", "backward"):
                cell = getattr(layer, direction)
                if cell is None:
                    continue
                for name, value in cell.arrays().items():
                    arrays[f"layers.{index}.{direction}.{name}"] = value
        arrays["output.W_hy"] = self.W_hy
        arrays["output.b_y"] = self.b_y
        return arrays

    def with_arrays(self, arrays: Dict[str, np.ndarray]) -> "ModelParameters":
        """Same architecture with the given parameter values."""
        layers = []
        for index, (spec, layer) in enumerate(zip(self.config.architecture, self.layers)):
            cells = {}
            for direction in ("forward", "backward"):
                if getattr(layer, direction) is None:
                    cells[direction] = None
                    continue
                prefix = f"layers.{index}.{direction}."
                cells[direction] = PARAM_TYPES[spec.cell].from_arrays(
                    {key[len(prefix):]: value for key, value in arrays.items() if key.startswith(prefix)}
                )
            layers.append(LayerParams(**cells))
        return ModelParameters(
            config=self.config,
            layers=tuple(layers),
            W_hy=np.asarray(arrays["output.W_hy"], dtype=np.float64),
            b_y=np.asarray(arrays["output.b_y"], dtype=np.float64),
            seed=self.seed,
        )

    def parameter_count(self) -> int:
        return int(sum(value.size for value in self.named_arrays().values()))


def validate_model(m: ModelParameters):
    """Raise ModelShapeError unless every shape agrees with the configuration."""
    config = m.config
    if len(m.layers) != len(config.architecture):
        raise ModelShapeError(f"Configuration declares {len(config.architecture)} layers, parameters have {len(m.layers)}")
    expected_input = config.input_size
    for index, (spec, layer) in enumerate(zip(config.architecture, m.layers)):
        where = f"layer {index} ({'bidirectional ' if spec.bidirectional else ''}{spec.cell})"
        if layer.forward.kind != spec.cell or (layer.backward is not None and layer.backward.kind != spec.cell):
            raise ModelShapeError(f"{where}: cell kind does not match the architecture")
        if layer.bidirectional != spec.bidirectional:
            raise ModelShapeError(f"{where}: backward cell presence does not match the architecture")
        for cell in (layer.forward, layer.backward):
            if cell is None:
                continue
            if cell.hidden_size != config.hidden_size:
                raise ModelShapeError(f"{where}: hidden size {cell.hidden_size} != {config.hidden_size}")
            if cell.input_size != expected_input:
                raise ModelShapeError(f"{where}: input dimension {cell.input_size} != expected {expected_input}")
        expected_input = layer.output_size
    if m.W_hy.shape != (config.num_classes, expected_input):
        raise ModelShapeError(f"output weights have shape {m.W_hy.shape}, expected {(config.num_classes, expected_input)}")
    if m.b_y.shape != (config.num_classes, 1):
        raise ModelShapeError(f"output bias has shape {m.b_y.shape}, expected {(config.num_classes, 1)}")


def initialize_model(config: NetworkConfig, seed: int, scheme: str = "uniform_scaled") -> ModelParameters:
    """Fresh model; weights drawn in layer order (forward before backward), biases zero."""
    rng = SeededRng(seed)
    layers = []
    input_size = config.input_size
    for spec in config.architecture:
        param_type = PARAM_TYPES[spec.cell]
        forward = param_type.initialize(input_size, config.hidden_size, rng, scheme)
        backward = param_type.initialize(input_size, config.hidden_size, rng, scheme) if spec.bidirectional else None
        layer = LayerParams(forward=forward, backward=backward)
        layers.append(layer)
        input_size = layer.output_size
    W_hy = init_weights(config.num_classes, input_size, scheme, rng)
    b_y = init_weights(config.num_classes, 1, "zeros", rng)
    return ModelParameters(config=config, layers=tuple(layers), W_hy=W_hy, b_y=b_y, seed=seed)


# ---------------------------------------------------------------- forward


@dataclass
class LayerTrace:
    """Per-timestep hidden states and tapes of one layer, indexed by time."""
    outputs: List[np.ndarray]
    forward_hidden: List[np.ndarray]
    forward_tapes: List[CellTape]
    backward_hidden: Optional[List[np.ndarray]] = None
    backward_tapes: Optional[List[CellTape]] = None


@dataclass
class ForwardTrace:
    """Everything backpropagation through time needs from a forward pass."""
    inputs: List[np.ndarray]
    layers: List[LayerTrace] = field(default_factory=list)
    logits: Optional[np.ndarray] = None
    probs: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.inputs)

    @property
    def concatenated_hidden(self) -> List[np.ndarray]:
        """Output sequence of the first (bidirectional) layer."""
        return self.layers[0].outputs


def run_cell(params: CellParams, inputs: Sequence[np.ndarray], reverse: bool = False):
    """Run one cell over a sequence from a zero state.

    Returns (hidden states, tapes), both indexed by timestep whatever the
    direction of iteration.
    """
    if not inputs:
        raise ShapeError("Cannot run a recurrent cell over an empty sequence")
    state = zero_state(params, inputs[0].shape[1])
    hidden: List[Optional[np.ndarray]] = [None] * len(inputs)
    tapes: List[Optional[CellTape]] = [None] * len(inputs)
    steps = range(len(inputs) - 1, -1, -1) if reverse else range(len(inputs))
    for t in steps:
        state, tape = cell_step(params, inputs[t], state)
        hidden[t] = state.h
        tapes[t] = tape
    return hidden, tapes


def run_layer(layer: LayerParams, inputs: Sequence[np.ndarray]) -> LayerTrace:
    forward_hidden, forward_tapes = run_cell(layer.forward, inputs)
    if layer.backward is None:
        return LayerTrace(outputs=list(forward_hidden), forward_hidden=forward_hidden, forward_tapes=forward_tapes)
    backward_hidden, backward_tapes = run_cell(layer.backward, inputs, reverse=True)
    outputs = [np.concatenate([h_f, h_b], axis=0) for h_f, h_b in zip(forward_hidden, backward_hidden)]
    return LayerTrace(
        outputs=outputs,
        forward_hidden=forward_hidden,
        forward_tapes=forward_tapes,
        backward_hidden=backward_hidden,
        backward_tapes=backward_tapes,
    )


def _as_sequence(X) -> List[np.ndarray]:
    """Accept a list of (features, B) matrices, a (T, F) window or a (B, T, F) batch."""
    if isinstance(X, (list, tuple)):
        return [np.asarray(x, dtype=np.float64) if np.ndim(x) == 2 else np.asarray(x, dtype=np.float64).reshape(-1, 1) for x in X]
    array = np.asarray(X, dtype=np.float64)
    if array.ndim == 2:
        array = array[np.newaxis]
    if array.ndim != 3:
        raise ShapeError(f"Expected a (T, F) window or (B, T, F) batch, got shape {array.shape}")
    return list(np.ascontiguousarray(array.transpose(1, 2, 0)))


def brnn_layer_forward(fwd_cell: CellParams, bwd_cell: CellParams, X) -> List[np.ndarray]:
    """Outputs [h_fwd_t ; h_bwd_t] of a bidirectional layer over X."""
    inputs = _as_sequence(X)
    if not inputs:
        raise ShapeError("Cannot run a bidirectional layer over an empty sequence")
    if len({x.shape[0] for x in inputs}) != 1:
        raise ShapeError("All frames of a sequence must share one input size")
    return run_layer(LayerParams(forward=fwd_cell, backward=bwd_cell), inputs).outputs


def _stack_forward(layers: Sequence[LayerParams], inputs: List[np.ndarray]) -> List[LayerTrace]:
    traces = []
    sequence = inputs
    for index, layer in enumerate(layers):
        if sequence[0].shape[0] != layer.input_size:
            raise ShapeError(
                f"Layer {index} expects inputs of size {layer.input_size}, previous layer produces {sequence[0].shape[0]}"
            )
        trace = run_layer(layer, sequence)
        traces.append(trace)
        sequence = trace.outputs
    return traces


def deep_stack_forward(layers: Sequence[LayerParams], X) -> List[np.ndarray]:
    """Output sequence of the top layer of a stack; layer n feeds layer n + 1."""
    inputs = _as_sequence(X)
    if not inputs:
        raise ShapeError("Cannot run a stack over an empty sequence")
    return _stack_forward(layers, inputs)[-1].outputs


def forward_trace(m: ModelParameters, X) -> ForwardTrace:
    """Forward pass keeping every tape; probabilities have one column per window."""
    inputs = _as_sequence(X)
    if len(inputs) != m.config.window_length:
        raise ShapeError(f"Model expects windows of {m.config.window_length} frames, got {len(inputs)}")
    if inputs[0].shape[0] != m.config.input_size:
        raise ShapeError(f"Model expects {m.config.input_size} features per frame, got {inputs[0].shape[0]}")
    for x in inputs:
        check_finite(x, "input window")
    trace = ForwardTrace(inputs=inputs)
    trace.layers = _stack_forward(m.layers, inputs)
    readout = trace.layers[-1].outputs[-1]
    trace.logits = matmul(m.W_hy, readout) + m.b_y
    trace.probs = softmax(trace.logits)
    return trace


def dbrnn_forward(m: ModelParameters, X) -> Tuple[np.ndarray, ForwardTrace]:
    """Class probabilities for a window (C x 1) or a batch of windows (C x B)."""
    trace = forward_trace(m, X)
    return trace.probs, trace


def excise_backward(m: ModelParameters) -> ModelParameters:
    """Unidirectional model obtained by removing the backward cell of the first layer.

    The layer above keeps only the input columns that read the forward half.
    """
    first = m.layers[0]
    if not first.bidirectional:
        return m
    hidden = m.config.hidden_size
    spec = m.config.architecture[0]
    architecture = (LayerSpec(bidirectional=False, cell=spec.cell),) + tuple(m.config.architecture[1:])
    config = m.config.model_copy(update={"architecture": architecture})
    layers = [LayerParams(forward=first.forward)]
    if len(m.layers) > 1:
        above = m.layers[1]
        cells = {}
        for direction in ("forward", "backward"):
            cell = getattr(above, direction)
            if cell is None:
                cells[direction] = None
                continue
            arrays = {
                name: value[:, :hidden] if name.startswith("W_x") else value
                for name, value in cell.arrays().items()
            }
            cells[direction] = type(cell).from_arrays(arrays)
        layers.append(LayerParams(**cells))
        layers.extend(m.layers[2:])
        W_hy = m.W_hy
    else:
        W_hy = m.W_hy[:, :hidden]
    return ModelParameters(config=config, layers=tuple(layers), W_hy=W_hy, b_y=m.b_y, seed=m.seed)


def dbrnn_forward_unidirectional(m: ModelParameters, X) -> Tuple[np.ndarray, ForwardTrace]:
    """The same pipeline without the backward LSTM.

    A bidirectional model is first reduced with `excise_backward`; a model
    already built with the unidirectional architecture runs as is.
    """
    return dbrnn_forward(excise_backward(m), X)


# ---------------------------------------------------------------- persistence


def save_model(m: ModelParameters, path: str):
    """Write a self-describing JSON model file; floats round-trip exactly."""
    matrices = [
        MatrixRecord(name=name, rows=value.shape[0], cols=value.shape[1], values=value.ravel().tolist())
        for name, value in m.named_arrays().items()
    ]
    document = ModelFile(
        format_version=MODEL_FORMAT_VERSION,
        config=m.config,
        seed=m.seed,
        feature_schema=m.config.feature_schema,
        matrices=matrices,
    )
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(document.model_dump(mode="json"), handle, indent=1)
        handle.write("\n")
    logger.info(f"[Model] Saved {m.config.arch_name} model ({m.parameter_count()} parameters) to {path}")


def load_model(path: str) -> ModelParameters:
    """Read and validate a model file written by save_model."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
    except json.JSONDecodeError as e:
        raise CorruptModelError(f"Model file {path} is not valid JSON: {e}")
    except UnicodeDecodeError as e:
        raise CorruptModelError(f"Model file {path} is not text: {e}")
    if not isinstance(raw, dict) or raw.get("format") != "dbrnn-model":
        raise CorruptModelError(f"{path} is not a dbrnn model file")
    if raw.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelVersionError(
            f"Model file {path} has format version {raw.get('format_version')}, expected {MODEL_FORMAT_VERSION}"
        )
    try:
        document = ModelFile.model_validate(raw)
    except ValidationError as e:
        raise CorruptModelError(f"Model file {path} is malformed: {e}")

    arrays = {}
    for record in document.matrices:
        if record.name in arrays:
            raise ModelShapeError(f"Matrix {record.name} appears more than once")
        if len(record.values) != record.rows * record.cols:
            raise ModelShapeError(
                f"Matrix {record.name} declares {record.rows}x{record.cols} but holds {len(record.values)} values"
            )
        arrays[record.name] = np.array(record.values, dtype=np.float64).reshape(record.rows, record.cols)
        if not np.isfinite(arrays[record.name]).all():
            raise CorruptModelError(f"Matrix {record.name} contains non-finite values")

    try:
        model = _assemble(document.config, arrays, document.seed)
    except ShapeError as e:
        raise ModelShapeError(f"Model file {path}: {e}")
    logger.info(f"[Model] Loaded {document.config.arch_name} model from {path}")
    return model


def _assemble(config: NetworkConfig, arrays: Dict[str, np.ndarray], seed: int) -> ModelParameters:
    layers = []
    expected = {"output.W_hy", "output.b_y"}
    for index, spec in enumerate(config.architecture):
        directions = ("forward", "backward") if spec.bidirectional else ("forward",)
        cells = {}
        for direction in directions:
            prefix = f"layers.{index}.{direction}."
            param_type = PARAM_TYPES[spec.cell]
            expected.update(prefix + name for name in param_type.names())
            missing = [name for name in param_type.names() if prefix + name not in arrays]
            if missing:
                raise ModelShapeError(f"layer {index} {direction} cell is missing {', '.join(missing)}")
            cells[direction] = param_type.from_arrays({name: arrays[prefix + name] for name in param_type.names()})
        layers.append(LayerParams(**cells))
    for name in ("output.W_hy", "output.b_y"):
        if name not in arrays:
            raise ModelShapeError(f"missing {name}")
    unknown = sorted(set(arrays) - expected)
    if unknown:
        raise ModelShapeError(f"unknown matrices {', '.join(unknown)}")
    return ModelParameters(
        config=config,
        layers=tuple(layers),
        W_hy=arrays["output.W_hy"],
        b_y=arrays["output.b_y"],
        seed=seed,
    )

