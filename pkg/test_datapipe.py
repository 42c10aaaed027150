"""Tests for resampling, onset recognition, labelling, balancing, splitting and file I/O."""
import logging

import numpy as np
import pytest

from dbrnn.models.schemas import (
    ActionClass,
    ActionEvent,
    ExampleSetHeader,
    NetworkConfig,
    RecognitionRules,
    get_task,
)
from dbrnn.services.datapipe import (
    DatasetError,
    Example,
    FrameSeries,
    MissingChannelError,
    SchemaMismatchError,
    SensorLog,
    assign_label,
    balance_classes,
    build_examples,
    check_model_matches,
    list_session_files,
    load_example_set,
    read_session_log,
    recognize_actions,
    resample,
    save_example_set,
    split_dataset,
    write_session_log,
)
from dbrnn.services.feature_schema import DEFAULT_SCHEMA, FeatureSchema
from dbrnn.services.numeric_core import SeededRng

BRAKING = get_task("braking")


def _log(duration_s, rate_hz=10.0, overrides=None, session_id="s000"):
    """Every schema channel sampled at one rate with value 0, except `overrides`."""
    times = np.arange(0.0, duration_s, 1.0 / rate_hz)
    channels = {name: (times, np.zeros(times.size)) for name in DEFAULT_SCHEMA.names}
    channels.update(overrides or {})
    return SensorLog(session_id=session_id, channels=channels, duration_s=duration_s)


def _series(seconds):
    """Quiet 10 Hz frames: lanes at their resting offsets, everything else zero."""
    frames = np.zeros((int(seconds * 10), DEFAULT_SCHEMA.size))
    frames[:, DEFAULT_SCHEMA.index("left_lane_offset")] = 1.0
    frames[:, DEFAULT_SCHEMA.index("right_lane_offset")] = -1.0
    return frames


def _column(name):
    return DEFAULT_SCHEMA.index(name)


# ---------------------------------------------------------------- resampling


def test_resample_80hz_ten_seconds():
    series = resample(_log(10.0, rate_hz=80.0))
    assert series.frames.shape == (100, 50)
    np.testing.assert_allclose(series.times[:3], [0.0, 0.1, 0.2])


def test_factor_channels_take_nearest_past_value():
    log = _log(1.0, overrides={"gear_position": (np.array([0.0, 0.25, 0.55]), np.array([0.0, 1.0, 2.0]))})
    gear = resample(log).frames[:, _column("gear_position")]
    np.testing.assert_array_equal(gear, [0, 0, 0, 1, 1, 1, 2, 2, 2, 2])


def test_float_channels_interpolate_and_extrapolate():
    times = np.arange(0.5, 10.0, 1.0)
    log = _log(10.0, overrides={"intersection_distance": (times, 2.0 * times)})
    values = resample(log).frames[:, _column("intersection_distance")]
    np.testing.assert_allclose(values, 2.0 * np.arange(100) / 10.0, rtol=0, atol=1e-12)


def test_single_sample_channel_is_constant():
    log = _log(2.0, overrides={"elevation": (np.array([0.7]), np.array([3.5]))})
    np.testing.assert_array_equal(resample(log).frames[:, _column("elevation")], np.full(20, 3.5))


def test_missing_channel_is_named():
    log = _log(2.0)
    del log.channels["velocity"]
    with pytest.raises(MissingChannelError) as info:
        resample(log)
    assert info.value.channel == "velocity"


def test_resampling_a_10hz_log_is_idempotent():
    rng = SeededRng(1)
    overrides = {
        name: (np.arange(0.0, 8.0, 1 / 80.0), rng.uniform(640, -1, 1))
        for name in DEFAULT_SCHEMA.names if DEFAULT_SCHEMA.channel(name).kind == "float"
    }
    first = resample(_log(8.0, overrides=overrides))
    again = SensorLog(
        session_id="again",
        channels={name: (first.times, first.frames[:, i]) for i, name in enumerate(DEFAULT_SCHEMA.names)},
        duration_s=8.0,
    )
    np.testing.assert_allclose(resample(again).frames, first.frames, rtol=0, atol=1e-12)


def test_resampled_frames_are_read_only():
    series = resample(_log(1.0))
    with pytest.raises(ValueError):
        series.frames[0, 0] = 1.0


def test_timestamps_must_increase():
    with pytest.raises(DatasetError):
        SensorLog(session_id="x", channels={"velocity": (np.array([0.0, 0.2, 0.1]), np.zeros(3))}, duration_s=1.0)


def test_too_short_session_is_rejected():
    with pytest.raises(DatasetError):
        resample(_log(0.05))


# ---------------------------------------------------------------- recognition


def test_brake_onset_is_recognized():
    frames = _series(30)
    frames[123:140, _column("brake_pressure")] = 2.0
    events = recognize_actions(FrameSeries("s", frames))
    assert [(e.action, e.onset_s) for e in events] == [(ActionClass.BRAKING, pytest.approx(12.3))]


def test_quiet_session_has_no_onsets():
    assert recognize_actions(FrameSeries("s", _series(30))) == []


def test_steering_must_be_sustained():
    frames = _series(30)
    frames[50:53, _column("steering_angle")] = 2.0
    frames[150:160, _column("steering_angle")] = -2.0
    events = recognize_actions(FrameSeries("s", frames))
    assert [(e.action, e.onset_s) for e in events] == [(ActionClass.TURN_RIGHT, pytest.approx(15.0))]


def test_lane_crossings_are_recognized():
    frames = _series(40)
    frames[200:230, _column("left_lane_offset")] = -0.5
    frames[300:320, _column("right_lane_offset")] = 0.2
    events = recognize_actions(FrameSeries("s", frames))
    assert [(e.action, e.onset_s) for e in events] == [
        (ActionClass.LANE_CHANGE_LEFT, pytest.approx(20.0)),
        (ActionClass.LANE_CHANGE_RIGHT, pytest.approx(30.0)),
    ]


def test_refractory_period_merges_close_presses():
    frames = _series(30)
    brake = _column("brake_pressure")
    for start in (100, 110, 140):
        frames[start:start + 5, brake] = 2.0
    events = recognize_actions(FrameSeries("s", frames), RecognitionRules(refractory_s=2.0))
    assert [e.onset_s for e in events] == [pytest.approx(10.0), pytest.approx(14.0)]


def test_predicate_true_from_the_start_is_not_an_onset():
    frames = _series(10)
    frames[:30, _column("brake_pressure")] = 2.0
    assert recognize_actions(FrameSeries("s", frames)) == []


# ---------------------------------------------------------------- labelling


def _braking_at(onset):
    return [ActionEvent(action=ActionClass.BRAKING, onset_s=onset)]


def test_assign_label_boundaries():
    events = _braking_at(100.0)
    assert assign_label(96.0, events, BRAKING, 5.0, 2.0) == (1, 4.0)
    assert assign_label(95.0, events, BRAKING, 5.0, 2.0) == (1, 5.0)
    assert assign_label(94.9, events, BRAKING, 5.0, 2.0) == (0, None)
    assert assign_label(100.0, events, BRAKING, 5.0, 2.0) is None
    assert assign_label(102.0, events, BRAKING, 5.0, 2.0) is None
    assert assign_label(102.1, events, BRAKING, 5.0, 2.0) == (0, None)


def test_events_of_other_tasks_are_ignored():
    events = [ActionEvent(action=ActionClass.TURN_LEFT, onset_s=100.0)]
    assert assign_label(101.0, events, BRAKING, 5.0, 2.0) == (0, None)
    assert assign_label(101.0, events, get_task("turns"), 5.0, 2.0) is None


def test_nearest_upcoming_event_wins():
    events = [
        ActionEvent(action=ActionClass.TURN_RIGHT, onset_s=103.0),
        ActionEvent(action=ActionClass.TURN_LEFT, onset_s=101.0),
    ]
    assert assign_label(99.0, events, get_task("turns"), 5.0, 0.0) == (1, 2.0)


def test_build_examples_labels_windows():
    series = FrameSeries("s007", _series(120))
    examples = build_examples(series, _braking_at(100.0), BRAKING, horizon_s=5.0, window=50, stride=1, exec_len_s=2.0)
    by_end = {round(e.end_time, 1): e for e in examples}
    assert by_end[96.0].label == 1 and by_end[96.0].time_to_event == 4.0
    assert by_end[94.9].label == 0 and by_end[94.9].time_to_event is None
    assert 100.5 not in by_end
    assert all(e.session_id == "s007" for e in examples)
    assert sum(e.label for e in examples) == 50
    window = by_end[96.0].window
    assert window.shape == (50, 50)
    assert np.shares_memory(window, series.frames)


def test_build_examples_stride():
    series = FrameSeries("s", _series(20))
    examples = build_examples(series, [], BRAKING, window=50, stride=5)
    assert [e.end_time for e in examples[:3]] == [pytest.approx(4.9), pytest.approx(5.4), pytest.approx(5.9)]
    assert len(examples) == 31


def test_window_longer_than_session_builds_nothing(caplog):
    series = FrameSeries("short", _series(3))
    with caplog.at_level(logging.WARNING, logger="dbrnn"):
        assert build_examples(series, [], BRAKING, window=50) == []
    assert "exceeds" in caplog.text


# ---------------------------------------------------------------- balancing and splitting


def _examples(labels, session_id="s"):
    return [
        Example(window=np.zeros((1, 1)), label=label, session_id=session_id, end_time=float(i))
        for i, label in enumerate(labels)
    ]


def test_balance_keeps_ratio_of_negatives():
    examples = _examples([1] * 1033 + [0] * 3000)
    balanced = balance_classes(examples, BRAKING, SeededRng(0))
    assert sum(e.is_positive for e in balanced) == 1033
    assert sum(not e.is_positive for e in balanced) == 1550
    times = [e.end_time for e in balanced]
    assert times == sorted(times)


def test_balance_keeps_everything_when_negatives_run_out(caplog):
    examples = _examples([1] * 10 + [0] * 5)
    with caplog.at_level(logging.WARNING, logger="dbrnn"):
        balanced = balance_classes(examples, BRAKING, SeededRng(0))
    assert balanced == examples
    assert "only 5 available" in caplog.text


def test_balance_is_deterministic():
    examples = _examples([1, 0, 0, 0, 0, 0] * 20)
    a = balance_classes(examples, BRAKING, SeededRng(5))
    b = balance_classes(examples, BRAKING, SeededRng(5))
    assert [e.end_time for e in a] == [e.end_time for e in b]


def test_balance_without_positives_fails():
    with pytest.raises(DatasetError):
        balance_classes(_examples([0] * 10), BRAKING, SeededRng(0))


def _sessions(count, per_session=10):
    examples = []
    for index in range(count):
        examples += _examples([index % 2] * per_session, session_id=f"s{index:03d}")
    return examples


def test_split_by_session():
    examples = _sessions(20)
    train, val, test = split_dataset(examples, (0.7, 0.15, 0.15), SeededRng(3))
    sessions = [{e.session_id for e in part} for part in (train, val, test)]
    assert [len(s) for s in sessions] == [14, 3, 3]
    assert not (sessions[0] & sessions[1] or sessions[0] & sessions[2] or sessions[1] & sessions[2])
    assert len(train) + len(val) + len(test) == len(examples)


def test_split_needs_three_sessions():
    with pytest.raises(DatasetError):
        split_dataset(_sessions(2), (0.7, 0.15, 0.15), SeededRng(0))


def test_split_fills_every_requested_part():
    train, val, test = split_dataset(_sessions(3), (0.8, 0.1, 0.1), SeededRng(0))
    assert train and val and test


@pytest.mark.parametrize("fractions", [(0.5, 0.5, 0.5), (1.2, -0.1, -0.1), (0.5, 0.5)])
def test_split_rejects_bad_fractions(fractions):
    with pytest.raises(ValueError):
        split_dataset(_sessions(5), fractions, SeededRng(0))


# ---------------------------------------------------------------- files


def test_session_file_round_trip(tmp_path):
    rng = SeededRng(2)
    times = np.arange(0.0, 5.0, 1 / 30.0)
    overrides = {
        "head_mean_motion": (times, rng.uniform(times.size, -3, 3)),
        "gear_position": (np.array([0.0, 2.5]), np.array([3.0, 4.0])),
    }
    log = _log(5.0, overrides=overrides, session_id="s042")
    path = tmp_path / "session_s042.csv"
    write_session_log(log, str(path))

    text = path.read_text().splitlines()
    assert text[0].startswith("#") and text[1] == "channel,timestamp,value"
    assert "gear_position,2.5,4" in text

    loaded = read_session_log(str(path))
    assert loaded.session_id == "s042" and loaded.duration_s == 5.0
    for name, (t, v) in log.channels.items():
        np.testing.assert_array_equal(loaded.channels[name][0], t)
        np.testing.assert_array_equal(loaded.channels[name][1], v)
    assert list_session_files(str(tmp_path)) == [str(path)]


def test_session_file_from_other_schema_is_rejected(tmp_path):
    path = tmp_path / "session_s000.csv"
    write_session_log(_log(1.0), str(path))
    other = FeatureSchema(version=2, channels=DEFAULT_SCHEMA.channels)
    with pytest.raises(SchemaMismatchError):
        read_session_log(str(path), other)


def test_unknown_channel_is_rejected(tmp_path):
    path = tmp_path / "session_s000.csv"
    write_session_log(_log(1.0), str(path))
    with open(path, "a", encoding="utf-8") as handle:
        handle.write("bogus_channel,0.0,1.0\n")
    with pytest.raises(SchemaMismatchError):
        read_session_log(str(path))


def _header(**overrides):
    fields = dict(
        task="braking", split="train", horizon_s=5.0, window=3, stride=5, exec_len_s=2.0, seed=0,
        schema_id=DEFAULT_SCHEMA.schema_id, num_features=2, class_names=["negative", "braking"],
    )
    fields.update(overrides)
    return ExampleSetHeader(**fields)


def test_example_set_round_trip(tmp_path):
    rng = SeededRng(4)
    examples = [
        Example(window=rng.uniform(6, -1, 1).reshape(3, 2), label=1, time_to_event=1.5, session_id="s001", end_time=9.9),
        Example(window=rng.uniform(6, -1, 1).reshape(3, 2), label=0, session_id="s002", end_time=4.9),
    ]
    path = tmp_path / "braking_train.jsonl"
    save_example_set(examples, _header(), str(path))
    header, loaded = load_example_set(str(path))
    assert header.count == 2
    for original, copy in zip(examples, loaded):
        assert copy.window.tobytes() == original.window.tobytes()
        assert (copy.label, copy.time_to_event, copy.session_id, copy.end_time) == (
            original.label, original.time_to_event, original.session_id, original.end_time,
        )


def test_example_set_count_is_checked(tmp_path):
    path = tmp_path / "set.jsonl"
    save_example_set(_examples([0, 1]), _header(window=1, num_features=1), str(path))
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(DatasetError):
        load_example_set(str(path))


def test_model_and_example_set_must_agree():
    header = _header(window=50, num_features=49)
    with pytest.raises(SchemaMismatchError):
        check_model_matches(header, NetworkConfig())
    check_model_matches(_header(window=50, num_features=50), NetworkConfig(feature_schema=DEFAULT_SCHEMA.schema_id))
    with pytest.raises(SchemaMismatchError):
        check_model_matches(_header(window=50, num_features=50), NetworkConfig(feature_schema="0000"))
