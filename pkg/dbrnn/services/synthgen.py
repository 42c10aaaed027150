"""Synthetic multi-session driving logs with planted actions and precursors.

Every session is generated on the 10 Hz grid: autocorrelated noise around
per-channel baselines, then for each scheduled event a precursor signature
over the lead before the onset and an action signature from the onset
through the execution. Sessions draw from their own seed, derived from the
master seed and the session index.
"""
from typing import Dict, List, Sequence, Tuple
import logging
import math
import os

import numpy as np
import pandas as pd

from dbrnn.models.schemas import (
    ActionClass,
    ActionSignature,
    GroundTruth,
    PrecursorSignature,
    ScenarioConfig,
    TruthEvent,
)
from dbrnn.services.datapipe import GRID_HZ, SensorLog, write_session_log
from dbrnn.services.feature_schema import DEFAULT_SCHEMA, NATIVE_RATES_HZ, FeatureSchema
from dbrnn.services.numeric_core import DbrnnError, SeededRng, derive_seed

logger = logging.getLogger("dbrnn")

TRUTH_FILE = "truth.csv"
# Margin kept free at both ends of a session, s
EDGE_MARGIN_S = 1.0
DRIVER_LEAD_SCALES = (0.8, 0.9, 1.0, 1.1, 1.2)
# Distance past zero a lane-offset crossing reaches at its onset
MIN_CROSSING_DEPTH = 0.1
_DRIVER_STREAM = 0x5EED


class ScheduleError(DbrnnError):
    """The requested events cannot fit into a session with the minimum gap."""
    pass


BASELINES: Dict[str, float] = {
    "left_lane_offset": 1.0,
    "right_lane_offset": -1.0,
    "left_lane_available": 1.0,
    "right_lane_available": 1.0,
    "intersection_state": 2.0,
}


def baseline_frame(schema: FeatureSchema = DEFAULT_SCHEMA) -> np.ndarray:
    return np.array([BASELINES.get(name, 0.0) for name in schema.names])


def smooth_noise(rng: SeededRng, frames: int, channels: int, std: float, smoothing: float) -> np.ndarray:
    """First-order autoregressive noise with stationary standard deviation `std`."""
    if std == 0.0:
        return np.zeros((frames, channels))
    white = rng.normal(frames * channels).reshape(frames, channels)
    innovation = std * math.sqrt(1.0 - smoothing ** 2)
    noise = np.empty((frames, channels))
    noise[0] = std * white[0]
    for t in range(1, frames):
        noise[t] = smoothing * noise[t - 1] + innovation * white[t]
    return noise


def schedule_events(config: ScenarioConfig, rng: SeededRng, frames: int) -> List[Tuple[int, ActionClass]]:
    """(onset frame, class) pairs by jittered uniform spacing.

    Consecutive onsets are at least min_gap apart; the class order is a
    random permutation of the per-class counts.
    """
    minutes = config.session_length_s / 60.0
    classes: List[ActionClass] = []
    for action in ActionClass:
        classes.extend([action] * int(round(config.event_rates.get(action, 0.0) * minutes)))
    if not classes:
        return []

    lead_frames = int(math.ceil((config.precursor_lead_s + config.lead_jitter_s) * GRID_HZ))
    margin = int(round(EDGE_MARGIN_S * GRID_HZ))
    first = lead_frames + margin
    last = frames - int(math.ceil(config.exec_len_s * GRID_HZ)) - margin
    gap = int(math.ceil(config.min_gap_s * GRID_HZ - 1e-9))
    spacing = (last - first) // len(classes) if last > first else 0
    if spacing < gap:
        raise ScheduleError(
            f"{len(classes)} events with a {config.min_gap_s} s minimum gap do not fit "
            f"into a {config.session_length_s} s session"
        )
    jitter = rng.integers(len(classes), spacing - gap + 1)
    order = rng.permutation(len(classes))
    return [(first + k * spacing + int(jitter[k]), classes[order[k]]) for k in range(len(classes))]


def _apply_precursor(
    frames: np.ndarray,
    column: int,
    is_float: bool,
    signature: PrecursorSignature,
    amplitude: float,
    start: int,
    onset: int,
    end: int,
):
    if not is_float:
        frames[start:end, column] = signature.code if signature.code is not None else 1
        return
    level = signature.sign * amplitude
    if signature.shape == "boxcar":
        frames[start:end, column] += level
        return
    lead = onset - start
    frames[start:onset, column] += level * np.arange(1, lead + 1) / lead
    frames[onset:end, column] += level


def _apply_action(frames: np.ndarray, column: int, signature: ActionSignature, baseline: float, onset: int, end: int):
    length = end - onset
    if length <= 0:
        return
    frac = np.arange(length) / length
    if signature.shape == "step":
        frames[onset:end, column] += signature.amplitude
    elif signature.shape == "ramp":
        frames[onset:end, column] += signature.amplitude * (0.8 + 0.2 * frac)
    else:
        # Lands past zero at the onset whatever the noise, then recovers linearly to the noisy track
        direction = 1.0 if baseline >= 0 else -1.0
        depth = max(abs(signature.amplitude) - abs(baseline), MIN_CROSSING_DEPTH)
        track = frames[onset:end, column].copy()
        frames[onset:end, column] = (1.0 - frac) * (-direction * depth) + frac * track


def _to_native_rates(session_id: str, frames: np.ndarray, duration_s: float, schema: FeatureSchema) -> SensorLog:
    grid = np.arange(frames.shape[0]) / GRID_HZ
    channels = {}
    for column, channel in enumerate(schema.channels):
        rate = NATIVE_RATES_HZ[channel.group]
        times = np.arange(int(math.floor(duration_s * rate + 1e-9))) / rate
        if channel.kind == "float":
            values = np.interp(times, grid, frames[:, column])
        else:
            index = np.maximum(np.searchsorted(grid, times + 1e-9, side="right") - 1, 0)
            values = frames[index, column]
        channels[channel.name] = (times, values)
    return SensorLog(session_id=session_id, channels=channels, duration_s=duration_s)


def generate_session(
    config: ScenarioConfig,
    index: int,
    schema: FeatureSchema = DEFAULT_SCHEMA,
    prefix: str = "",
) -> Tuple[SensorLog, List[TruthEvent]]:
    """One session and its planted events."""
    session_id = f"{prefix}s{index:03d}"
    rng = SeededRng(derive_seed(config.seed, index))
    count = int(math.floor(config.session_length_s * GRID_HZ + 1e-9))
    base = baseline_frame(schema)
    float_mask = schema.float_mask()

    frames = np.tile(base, (count, 1))
    noise = smooth_noise(rng, count, int(float_mask.sum()), config.noise_std, config.noise_smoothing)
    frames[:, float_mask] += noise

    exec_frames = int(math.ceil(config.exec_len_s * GRID_HZ))
    truth = []
    for onset, action in schedule_events(config, rng, count):
        lead_s = config.precursor_lead_s
        if config.lead_jitter_s > 0:
            lead_s += float(rng.uniform(1, -config.lead_jitter_s, config.lead_jitter_s)[0])
        lead = max(int(round(lead_s * GRID_HZ)), 1)
        start = onset - lead
        end = min(onset + exec_frames, count)
        for signature in config.precursors.get(action, []):
            column = schema.index(signature.channel)
            _apply_precursor(
                frames, column, bool(float_mask[column]), signature, config.precursor_amplitude, start, onset, end
            )
        action_signature = config.actions[action]
        column = schema.index(action_signature.channel)
        _apply_action(frames, column, action_signature, base[column], onset, end)
        truth.append(TruthEvent(
            session_id=session_id,
            action=action,
            onset_s=onset / GRID_HZ,
            precursor_onset_s=start / GRID_HZ,
        ))

    duration_s = count / GRID_HZ
    if config.native_rates:
        log = _to_native_rates(session_id, frames, duration_s, schema)
    else:
        times = np.arange(count) / GRID_HZ
        log = SensorLog(
            session_id=session_id,
            channels={name: (times, frames[:, column].copy()) for column, name in enumerate(schema.names)},
            duration_s=duration_s,
        )
    return log, truth


def generate(
    config: ScenarioConfig,
    schema: FeatureSchema = DEFAULT_SCHEMA,
    prefix: str = "",
) -> Tuple[List[SensorLog], GroundTruth]:
    """All sessions of a scenario plus the planted ground truth.

    Raises:
        ScheduleError: If the event rates cannot respect the minimum gap
    """
    logs, events = [], []
    for index in range(config.num_sessions):
        log, truth = generate_session(config, index, schema, prefix)
        logs.append(log)
        events.extend(truth)
    logger.info(f"[Synth] Generated {len(logs)} sessions with {len(events)} planted events")
    return logs, GroundTruth(events=events)


def driver_variant_config(config: ScenarioConfig, driver_id: int) -> ScenarioConfig:
    """Scenario of one emulated driver: scaled lead, perturbed amplitude and noise."""
    if driver_id < 0:
        raise ValueError(f"driver_id must be non-negative, got {driver_id}")
    rng = SeededRng(derive_seed(config.seed, _DRIVER_STREAM, driver_id))
    amplitude_scale, noise_scale = rng.uniform(2, 0.8, 1.2)
    lead_scale = DRIVER_LEAD_SCALES[driver_id % len(DRIVER_LEAD_SCALES)] * float(rng.uniform(1, 0.95, 1.05)[0])
    return config.model_copy(update={
        "precursor_lead_s": config.precursor_lead_s * lead_scale,
        "precursor_amplitude": config.precursor_amplitude * float(amplitude_scale),
        "noise_std": config.noise_std * float(noise_scale),
        "seed": derive_seed(config.seed, driver_id),
    })


def generate_driver_variant(
    config: ScenarioConfig,
    driver_id: int,
    schema: FeatureSchema = DEFAULT_SCHEMA,
) -> Tuple[List[SensorLog], GroundTruth]:
    """Sessions of one emulated driver; deterministic in (seed, driver_id)."""
    variant = driver_variant_config(config, driver_id)
    logger.info(
        f"[Synth] Driver {driver_id}: lead {variant.precursor_lead_s:.1f} s, "
        f"amplitude {variant.precursor_amplitude:.3f}, noise {variant.noise_std:.3f}"
    )
    return generate(variant, schema, prefix=f"d{driver_id}")


def pool_drivers(
    config: ScenarioConfig,
    driver_ids: Sequence[int],
    schema: FeatureSchema = DEFAULT_SCHEMA,
) -> Tuple[List[SensorLog], GroundTruth]:
    """Combined dataset of several drivers."""
    logs, events = [], []
    for driver_id in driver_ids:
        driver_logs, truth = generate_driver_variant(config, driver_id, schema)
        logs.extend(driver_logs)
        events.extend(truth.events)
    return logs, GroundTruth(events=events)


def write_dataset(
    logs: Sequence[SensorLog],
    truth: GroundTruth,
    out_dir: str,
    schema: FeatureSchema = DEFAULT_SCHEMA,
) -> List[str]:
    """Session files plus the truth table; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for log in logs:
        path = os.path.join(out_dir, f"session_{log.session_id}.csv")
        write_session_log(log, path, schema)
        paths.append(path)
    truth_path = os.path.join(out_dir, TRUTH_FILE)
    write_truth(truth, truth_path)
    paths.append(truth_path)
    logger.info(f"[Synth] Wrote {len(logs)} session files and {TRUTH_FILE} to {out_dir}")
    return paths


def write_truth(truth: GroundTruth, path: str):
    table = pd.DataFrame(
        [(e.session_id, e.action.value, e.onset_s, e.precursor_onset_s) for e in truth.events],
        columns=["session", "class", "t_a", "precursor_onset"],
    )
    table.to_csv(path, index=False, lineterminator="\n")


def read_truth(path: str) -> GroundTruth:
    table = pd.read_csv(path, dtype={"session": str, "class": str}, float_precision="round_trip")
    return GroundTruth(events=[
        TruthEvent(
            session_id=row["session"],
            action=row["class"],
            onset_s=float(row["t_a"]),
            precursor_onset_s=float(row["precursor_onset"]),
        )
        for _, row in table.iterrows()
    ])
