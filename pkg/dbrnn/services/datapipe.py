"""Session ingestion, 10 Hz resampling, onset recognition, windowed labelling,
class balancing and session-level splitting.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple
import json
import logging
import math
import os

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import ValidationError

from dbrnn.models.schemas import (
    ActionClass,
    ActionEvent,
    ExampleSetHeader,
    NetworkConfig,
    RecognitionRules,
    TaskSpec,
)
from dbrnn.services.feature_schema import DEFAULT_SCHEMA, FeatureSchema
from dbrnn.services.numeric_core import DbrnnError, SeededRng, ShapeError

logger = logging.getLogger("dbrnn")

GRID_HZ = 10.0
GRID_STEP_S = 1.0 / GRID_HZ
SESSION_FORMAT = "dbrnn-session"
_EPS = 1e-9


class DatasetError(DbrnnError):
    """Invalid or insufficient data."""
    pass


class MissingChannelError(DatasetError):
    """A channel required by the schema or the rules has no samples."""

    def __init__(self, channel: str, session_id: str = ""):
        where = f" in session {session_id}" if session_id else ""
        super().__init__(f"Channel '{channel}' has no samples{where}")
        self.channel = channel


class SchemaMismatchError(DatasetError):
    """Data and model (or file) disagree on the feature schema."""
    pass


@dataclass
class SensorLog:
    """Per-channel (times, values) samples of one session at native rates."""
    session_id: str
    channels: Dict[str, Tuple[np.ndarray, np.ndarray]]
    duration_s: float

    def __post_init__(self):
        for name, (times, values) in self.channels.items():
            if len(times) != len(values):
                raise DatasetError(f"Channel '{name}' has {len(times)} timestamps but {len(values)} values")
            if len(times) > 1 and not np.all(np.diff(times) > 0):
                raise DatasetError(f"Timestamps of channel '{name}' are not strictly increasing")


@dataclass
class FrameSeries:
    """Uniform 10 Hz frames (N x features) of one session."""
    session_id: str
    frames: np.ndarray

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.num_frames) / GRID_HZ

    @property
    def duration_s(self) -> float:
        return self.num_frames / GRID_HZ


@dataclass
class Example:
    """A T x F window ending at end_time, its class and, for positives, the time to the event."""
    window: np.ndarray
    label: int
    time_to_event: Optional[float] = None
    session_id: str = ""
    end_time: float = 0.0

    @property
    def is_positive(self) -> bool:
        return self.label != 0


def stack_examples(examples: Sequence[Example]) -> Tuple[np.ndarray, np.ndarray]:
    """(B, T, F) window batch and (B,) labels."""
    shapes = {example.window.shape for example in examples}
    if len(shapes) != 1:
        raise ShapeError(f"Examples have differing window shapes: {sorted(shapes)}")
    X = np.stack([example.window for example in examples]).astype(np.float64, copy=False)
    labels = np.array([example.label for example in examples], dtype=np.int64)
    return X, labels


# ---------------------------------------------------------------- resampling


def _linear_with_extrapolation(times: np.ndarray, values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    if times.size == 1:
        return np.full(grid.shape, values[0], dtype=np.float64)
    out = np.interp(grid, times, values)
    before = grid < times[0]
    if before.any():
        slope = (values[1] - values[0]) / (times[1] - times[0])
        out[before] = values[0] + slope * (grid[before] - times[0])
    after = grid > times[-1]
    if after.any():
        slope = (values[-1] - values[-2]) / (times[-1] - times[-2])
        out[after] = values[-1] + slope * (grid[after] - times[-1])
    return out


def _nearest_past(times: np.ndarray, values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    # Grid points before the first sample take the first value
    index = np.searchsorted(times, grid + _EPS, side="right") - 1
    return values[np.maximum(index, 0)].astype(np.float64)


def resample(log: SensorLog, schema: FeatureSchema = DEFAULT_SCHEMA) -> FrameSeries:
    """Put every schema channel on the 10 Hz grid 0.0, 0.1, ... of the session.

    Float channels are linearly interpolated and linearly extrapolated past
    their first and last samples; factor channels repeat the nearest past
    value.

    Raises:
        DatasetError: If the session is shorter than one grid step
        MissingChannelError: If a schema channel has no samples
    """
    count = int(math.floor(log.duration_s * GRID_HZ + _EPS))
    if count < 1:
        raise DatasetError(f"Session {log.session_id} is too short to resample ({log.duration_s} s)")
    grid = np.arange(count) / GRID_HZ
    frames = np.empty((count, schema.size))
    for column, channel in enumerate(schema.channels):
        times, values = log.channels.get(channel.name, (np.empty(0), np.empty(0)))
        if len(times) == 0:
            raise MissingChannelError(channel.name, log.session_id)
        times = np.asarray(times, dtype=np.float64)
        values = np.asarray(values, dtype=np.float64)
        if channel.kind == "float":
            frames[:, column] = _linear_with_extrapolation(times, values, grid)
        else:
            frames[:, column] = _nearest_past(times, values, grid)
    if not np.isfinite(frames).all():
        raise DatasetError(f"Session {log.session_id} has non-finite samples")
    frames.setflags(write=False)
    return FrameSeries(session_id=log.session_id, frames=frames)


# ---------------------------------------------------------------- recognition


def _onset_frames(predicate: np.ndarray, refractory: int) -> np.ndarray:
    """Frames where the predicate turns true after `refractory` false frames.

    The session start counts as falsehood, but a predicate already true at
    frame 0 has no observed onset.
    """
    refractory = max(refractory, 1)
    predicate = predicate.astype(bool)
    true_before = np.concatenate([[0], np.cumsum(predicate)])
    frames = np.arange(1, predicate.size)
    lower = np.maximum(frames - refractory, 0)
    quiet = (true_before[frames] - true_before[lower]) == 0
    return frames[predicate[1:] & quiet]


def _sustained(predicate: np.ndarray, frames: int) -> np.ndarray:
    """True at t when the predicate holds on t .. t + frames - 1."""
    if frames <= 1:
        return predicate
    padded = np.concatenate([predicate, np.zeros(frames - 1, dtype=bool)])
    return sliding_window_view(padded, frames).all(axis=1)


def recognize_actions(
    series: FrameSeries,
    rules: RecognitionRules = RecognitionRules(),
    schema: FeatureSchema = DEFAULT_SCHEMA,
) -> List[ActionEvent]:
    """Rule-based onsets of every action class, ordered by time."""
    def column(name: str) -> np.ndarray:
        try:
            return series.frames[:, schema.index(name)]
        except KeyError:
            raise MissingChannelError(name, series.session_id)

    refractory = int(round(rules.refractory_s * GRID_HZ))
    sustain = int(round(rules.steering_sustain_s * GRID_HZ))
    steering = column(rules.steering_channel)
    predicates = {
        ActionClass.BRAKING: column(rules.brake_channel) > rules.brake_threshold,
        ActionClass.LANE_CHANGE_LEFT: column(rules.left_offset_channel) <= 0.0,
        ActionClass.LANE_CHANGE_RIGHT: column(rules.right_offset_channel) >= 0.0,
        ActionClass.TURN_LEFT: _sustained(steering > rules.steering_threshold, sustain),
        ActionClass.TURN_RIGHT: _sustained(steering < -rules.steering_threshold, sustain),
    }
    events = []
    for action, predicate in predicates.items():
        for frame in _onset_frames(predicate, refractory):
            events.append(ActionEvent(action=action, onset_s=frame / GRID_HZ, source="recognizer"))
    events.sort(key=lambda event: event.onset_s)
    logger.debug(f"[Datapipe] {series.session_id}: recognized {len(events)} onsets")
    return events


# ---------------------------------------------------------------- labelling


def assign_label(
    t: float,
    events: Sequence[ActionEvent],
    task: TaskSpec,
    horizon_s: float,
    exec_len_s: float,
) -> Optional[Tuple[int, Optional[float]]]:
    """(label, time_to_event) of a window ending at t, or None when excluded.

    Windows ending inside [t_a, t_a + exec_len] of a task event are excluded.
    Otherwise the nearest upcoming task event with t_a - d <= t < t_a makes the
    window positive; anything else is negative.
    """
    nearest = None
    for event in events:
        label = task.label_of(event.action)
        if label is None:
            continue
        if event.onset_s - _EPS <= t <= event.onset_s + exec_len_s + _EPS:
            return None
        if event.onset_s - horizon_s - _EPS <= t < event.onset_s - _EPS:
            if nearest is None or event.onset_s < nearest[1]:
                nearest = (label, event.onset_s)
    if nearest is None:
        return 0, None
    label, onset = nearest
    return label, round(onset - t, 6)


def window_ends(num_frames: int, window: int, stride: int) -> np.ndarray:
    """Last-frame indices of every full window at the given stride."""
    if window < 1 or stride < 1:
        raise ValueError(f"window and stride must be >= 1, got {window} and {stride}")
    return np.arange(window - 1, num_frames, stride)


def build_examples(
    series: FrameSeries,
    events: Sequence[ActionEvent],
    task: TaskSpec,
    horizon_s: float = 5.0,
    window: int = 50,
    stride: int = 5,
    exec_len_s: float = 2.0,
) -> List[Example]:
    """Labelled sliding windows of one session.

    Windows share memory with the (read-only) series frames.
    """
    if horizon_s <= 0:
        raise ValueError(f"horizon must be positive, got {horizon_s}")
    if window > series.num_frames:
        logger.warning(
            f"[Datapipe] {series.session_id}: window of {window} frames exceeds the session's "
            f"{series.num_frames} frames, no examples built"
        )
        return []
    examples = []
    for end in window_ends(series.num_frames, window, stride):
        t = end / GRID_HZ
        assigned = assign_label(t, events, task, horizon_s, exec_len_s)
        if assigned is None:
            continue
        label, time_to_event = assigned
        examples.append(Example(
            window=series.frames[end - window + 1:end + 1],
            label=label,
            time_to_event=time_to_event,
            session_id=series.session_id,
            end_time=t,
        ))
    return examples


def balance_classes(examples: Sequence[Example], task: TaskSpec, rng: SeededRng) -> List[Example]:
    """Subsample negatives to ceil(ratio x positives), keeping input order.

    Raises:
        DatasetError: If there are no positives
    """
    positives = [i for i, example in enumerate(examples) if example.is_positive]
    negatives = [i for i, example in enumerate(examples) if not example.is_positive]
    if not positives:
        raise DatasetError(f"No positive examples for task '{task.name}'")
    wanted = math.ceil(task.balance_ratio * len(positives) - _EPS)
    if wanted >= len(negatives):
        if wanted > len(negatives):
            logger.warning(
                f"[Datapipe] {task.name}: {wanted} negatives requested but only {len(negatives)} available, keeping all"
            )
        keep = set(negatives)
    else:
        keep = {negatives[i] for i in rng.choice(len(negatives), wanted)}
    keep.update(positives)
    logger.info(f"[Datapipe] {task.name}: {len(positives)} positives, {len(keep) - len(positives)} negatives after balancing")
    return [example for i, example in enumerate(examples) if i in keep]


def split_dataset(
    examples: Sequence[Example],
    fractions: Tuple[float, float, float],
    rng: SeededRng,
) -> Tuple[List[Example], List[Example], List[Example]]:
    """Partition by session into (train, val, test).

    Sessions are shuffled and each goes to the split whose cumulative
    fraction range contains the midpoint of its examples.

    Raises:
        DatasetError: If fewer than 3 sessions are present
        ValueError: If the fractions are negative or do not sum to 1
    """
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"Split fractions must be three non-negative values summing to 1, got {fractions}")
    counts: Dict[str, int] = {}
    for example in examples:
        counts[example.session_id] = counts.get(example.session_id, 0) + 1
    sessions = list(counts)
    if len(sessions) < 3:
        raise DatasetError(f"Need at least 3 sessions to split, got {len(sessions)}")

    total = sum(counts.values())
    bounds = (fractions[0] * total, (fractions[0] + fractions[1]) * total)
    assignment: List[List[str]] = [[], [], []]
    cumulative = 0
    for position in rng.permutation(len(sessions)):
        session = sessions[position]
        midpoint = cumulative + counts[session] / 2.0
        split = 0 if midpoint < bounds[0] else 1 if midpoint < bounds[1] else 2
        assignment[split].append(session)
        cumulative += counts[session]

    for split in range(3):
        if fractions[split] > 0 and not assignment[split]:
            donor = max(range(3), key=lambda s: len(assignment[s]))
            assignment[split].append(assignment[donor].pop())

    lookup = {session: split for split in range(3) for session in assignment[split]}
    parts: Tuple[List[Example], List[Example], List[Example]] = ([], [], [])
    for example in examples:
        parts[lookup[example.session_id]].append(example)
    logger.info(
        f"[Datapipe] Split {len(sessions)} sessions into "
        f"{'/'.join(str(len(a)) for a in assignment)} sessions, "
        f"{'/'.join(str(len(p)) for p in parts)} examples"
    )
    return parts


# ---------------------------------------------------------------- files


def write_session_log(log: SensorLog, path: str, schema: FeatureSchema = DEFAULT_SCHEMA):
    """One header line, then (channel, timestamp, value) records; factor values as integers."""
    header = {
        "format": SESSION_FORMAT,
        "schema_version": schema.version,
        "schema_id": schema.schema_id,
        "session_id": log.session_id,
        "duration_s": log.duration_s,
    }
    names, stamps, values = [], [], []
    for channel in schema.channels:
        if channel.name not in log.channels:
            continue
        times, samples = log.channels[channel.name]
        names.extend([channel.name] * len(times))
        stamps.extend(float(t) for t in times)
        if channel.kind == "factor":
            values.extend(int(round(v)) for v in samples)
        else:
            values.extend(float(v) for v in samples)
    frame = pd.DataFrame({"channel": names, "timestamp": stamps, "value": pd.Series(values, dtype=object)})
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write("#" + json.dumps(header, sort_keys=True) + "\n")
        frame.to_csv(handle, index=False, lineterminator="\n")


def read_session_log(path: str, schema: FeatureSchema = DEFAULT_SCHEMA) -> SensorLog:
    """Parse a session file, checking it was written for `schema`."""
    with open(path, "r", encoding="utf-8") as handle:
        first = handle.readline()
        if not first.startswith("#"):
            raise DatasetError(f"{path} has no session header")
        try:
            header = json.loads(first[1:])
        except json.JSONDecodeError as e:
            raise DatasetError(f"{path} has a malformed session header: {e}")
        if header.get("format") != SESSION_FORMAT:
            raise DatasetError(f"{path} is not a session file")
        if header.get("schema_id") != schema.schema_id:
            raise SchemaMismatchError(
                f"{path} was written for feature schema {header.get('schema_id')}, expected {schema.schema_id}"
            )
        frame = pd.read_csv(
            handle,
            dtype={"channel": str, "timestamp": np.float64, "value": np.float64},
            float_precision="round_trip",
        )

    unknown = sorted(set(frame["channel"]) - set(schema.names))
    if unknown:
        raise SchemaMismatchError(f"{path} contains channels outside the schema: {', '.join(unknown)}")
    channels = {
        str(name): (group["timestamp"].to_numpy(), group["value"].to_numpy())
        for name, group in frame.groupby("channel", sort=False)
    }
    return SensorLog(session_id=str(header["session_id"]), channels=channels, duration_s=float(header["duration_s"]))


def list_session_files(directory: str) -> List[str]:
    """Session files of a data directory in name order."""
    names = sorted(name for name in os.listdir(directory) if name.startswith("session_") and name.endswith(".csv"))
    return [os.path.join(directory, name) for name in names]


def save_example_set(examples: Sequence[Example], header: ExampleSetHeader, path: str):
    """JSON lines: the header record, then one record per example (window row-major)."""
    header = header.model_copy(update={"count": len(examples)})
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(json.dumps(header.model_dump()) + "\n")
        for example in examples:
            record = {
                "session_id": example.session_id,
                "end_time": example.end_time,
                "label": int(example.label),
                "time_to_event": example.time_to_event,
                "window": np.asarray(example.window, dtype=np.float64).ravel().tolist(),
            }
            handle.write(json.dumps(record) + "\n")
    logger.info(f"[Datapipe] Wrote {len(examples)} examples to {path}")


def load_example_set(path: str) -> Tuple[ExampleSetHeader, List[Example]]:
    """Read a file written by save_example_set."""
    with open(path, "r", encoding="utf-8") as handle:
        lines = [line for line in handle if line.strip()]
    if not lines:
        raise DatasetError(f"{path} is empty")
    try:
        header = ExampleSetHeader.model_validate_json(lines[0])
    except ValidationError as e:
        raise DatasetError(f"{path} has an invalid header: {e}")
    size = header.window * header.num_features
    examples = []
    for number, line in enumerate(lines[1:], start=2):
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise DatasetError(f"{path}:{number}: malformed record: {e}")
        values = record["window"]
        if len(values) != size:
            raise DatasetError(f"{path}:{number}: window has {len(values)} values, expected {size}")
        examples.append(Example(
            window=np.array(values, dtype=np.float64).reshape(header.window, header.num_features),
            label=int(record["label"]),
            time_to_event=record.get("time_to_event"),
            session_id=str(record.get("session_id", "")),
            end_time=float(record.get("end_time", 0.0)),
        ))
    if len(examples) != header.count:
        raise DatasetError(f"{path} declares {header.count} examples but holds {len(examples)}")
    return header, examples


def check_model_matches(header: ExampleSetHeader, config: NetworkConfig):
    """Raise SchemaMismatchError when a model cannot read an example set."""
    if header.num_features != config.input_size:
        raise SchemaMismatchError(
            f"Model expects {config.input_size} features per frame, example set has {header.num_features}"
        )
    if config.feature_schema and config.feature_schema != header.schema_id:
        raise SchemaMismatchError(
            f"Model was trained on feature schema {config.feature_schema}, example set uses {header.schema_id}"
        )
    if header.window != config.window_length:
        raise SchemaMismatchError(f"Model expects {config.window_length}-frame windows, example set has {header.window}")
    if len(header.class_names) != config.num_classes:
        raise SchemaMismatchError(
            f"Model predicts {config.num_classes} classes, example set has {len(header.class_names)}"
        )
