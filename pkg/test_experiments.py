"""Synthetic learning experiments. Slow: run with --runslow."""
import numpy as np
import pandas as pd
import pytest

from dbrnn.models.schemas import UNI_ARCHITECTURE, ActionClass, NetworkConfig, ScenarioConfig, TrainingConfig, get_task
from dbrnn.services.datapipe import balance_classes, build_examples, recognize_actions, resample, split_dataset
from dbrnn.services.evaluation import mean_accuracy_from, piecewise_eval, predict_classes
from dbrnn.services.network import initialize_model
from dbrnn.services.numeric_core import SeededRng
from dbrnn.services.plotting import plot_accuracy_overlay
from dbrnn.services.synthgen import generate, generate_driver_variant, pool_drivers
from dbrnn.services.training import train

BRAKING = get_task("braking")


def _braking_splits(config, seed):
    logs, _ = generate(config)
    return _split_logs(logs, seed)


def _split_logs(logs, seed):
    examples = []
    for log in logs:
        series = resample(log)
        examples += build_examples(series, recognize_actions(series), BRAKING)
    master = SeededRng(seed)
    balanced = balance_classes(examples, BRAKING, master.spawn(0))
    return split_dataset(balanced, (0.7, 0.15, 0.15), master.spawn(1))


@pytest.mark.slow
def test_bi_model_learns_planted_braking_precursors():
    config = ScenarioConfig(
        num_sessions=12,
        session_length_s=600.0,
        event_rates={ActionClass.BRAKING: 0.5},
        precursor_lead_s=4.0,
        precursor_amplitude=0.3,
        noise_std=0.1,
        seed=1,
    )
    train_set, val_set, test_set = _braking_splits(config, seed=1)
    assert len(train_set) + len(val_set) + len(test_set) <= 2000

    model = initialize_model(NetworkConfig(), seed=1)
    settings = TrainingConfig(max_epochs=60, batch_size=32, seed=1)
    best, _ = train(model, train_set, val_set, settings)

    # Positives further than the lead from the onset carry no precursor yet
    informative = [e for e in test_set if not e.is_positive or e.time_to_event <= config.precursor_lead_s]
    preds = predict_classes(best, informative)
    labels = np.array([e.label for e in informative])
    assert np.mean(preds == labels) >= 0.95

    metrics = piecewise_eval(best, test_set)
    late_bin = next(b for b in metrics.bins if b.start_s == 2.5)
    assert late_bin.n_pos > 0
    assert late_bin.tpr >= 0.9


@pytest.mark.slow
def test_bidirectional_model_is_not_worse_than_unidirectional():
    gaps = []
    for seed in (1, 2, 3):
        config = ScenarioConfig(
            num_sessions=8,
            session_length_s=600.0,
            event_rates={ActionClass.BRAKING: 0.5},
            lead_jitter_s=1.0,
            noise_std=0.15,
            seed=seed,
        )
        train_set, val_set, test_set = _braking_splits(config, seed)
        settings = TrainingConfig(max_epochs=40, batch_size=32, seed=seed)
        scores = {}
        for name, architecture in (("bi", None), ("uni", UNI_ARCHITECTURE)):
            network = NetworkConfig(hidden_size=16)
            if architecture is not None:
                network = network.model_copy(update={"architecture": architecture})
            best, _ = train(initialize_model(network, seed), train_set, val_set, settings)
            scores[name] = mean_accuracy_from(piecewise_eval(best, test_set), 3.0)
        gaps.append(scores["bi"] - scores["uni"])
    assert np.mean(gaps) >= -0.02


@pytest.mark.slow
def test_individual_and_pooled_driver_models(tmp_path):
    config = ScenarioConfig(
        num_sessions=2,
        session_length_s=600.0,
        event_rates={ActionClass.BRAKING: 0.5},
        noise_std=0.1,
        seed=4,
    )
    conditions = {
        "driver 2": generate_driver_variant(config.model_copy(update={"num_sessions": 10}), 2)[0],
        "5 drivers": pool_drivers(config, range(5))[0],
    }
    settings = TrainingConfig(max_epochs=40, batch_size=32, seed=4)
    curves, rows = {}, []
    for condition, logs in conditions.items():
        assert len(logs) == 10
        train_set, val_set, test_set = _split_logs(logs, seed=4)
        # Every driver's lead exceeds 2.5 s, so these positives all carry a precursor
        informative = [e for e in test_set if not e.is_positive or e.time_to_event <= 2.5]
        labels = np.array([e.label for e in informative])
        for name, architecture in (("bi", None), ("uni", UNI_ARCHITECTURE)):
            network = NetworkConfig(hidden_size=16)
            if architecture is not None:
                network = network.model_copy(update={"architecture": architecture})
            best, _ = train(initialize_model(network, 4), train_set, val_set, settings)
            metrics = piecewise_eval(best, test_set)
            curves[f"{name}, {condition}"] = metrics
            accuracy = float(np.mean(predict_classes(best, informative) == labels))
            rows.append((condition, name, metrics.accuracy, mean_accuracy_from(metrics, 3.0), accuracy))
            assert accuracy >= 0.8

    report = pd.DataFrame(rows, columns=["condition", "model", "accuracy", "accuracy_from_3s", "informative_accuracy"])
    report.to_csv(tmp_path / "drivers.csv", index=False)
    print(report.to_string(index=False))
    assert len(report) == 4

    overlay = tmp_path / "braking_drivers_accuracy.png"
    plot_accuracy_overlay(curves, str(overlay), title="braking: individual vs pooled drivers")
    assert overlay.stat().st_size > 0
