"""Slide a model over one session and write per-window predictions."""
import argparse
import logging
import os

import numpy as np
import pandas as pd

from config import Config
from cli.commands.base import Command, positive_int
from cli.utils.manifest import ManifestRecorder
from dbrnn.services.datapipe import (
    GRID_HZ,
    DatasetError,
    SchemaMismatchError,
    read_session_log,
    resample,
    window_ends,
)
from dbrnn.services.evaluation import classify
from dbrnn.services.feature_schema import DEFAULT_SCHEMA
from dbrnn.services.network import dbrnn_forward, load_model

logger = logging.getLogger("dbrnn")

BATCH = 256


class PredictCommand(Command):
    name = "predict"
    description = "Write (t, class, probabilities) rows for every window of a session"

    def add_arguments(self, parser: argparse.ArgumentParser):
        parser.add_argument("--model", required=True)
        parser.add_argument("--session", required=True, help="Session file")
        parser.add_argument("--stride", type=positive_int, default=Config.STRIDE, help="Frames between windows")
        parser.add_argument("--out", default="predictions.csv", help="Output CSV")

    def run(self, args: argparse.Namespace) -> int:
        recorder = ManifestRecorder(self.name, args)
        recorder.inputs = [args.model, args.session]
        model = load_model(args.model)
        config = model.config
        if config.input_size != DEFAULT_SCHEMA.size or (
            config.feature_schema and config.feature_schema != DEFAULT_SCHEMA.schema_id
        ):
            raise SchemaMismatchError(f"{args.model} was not trained on feature schema {DEFAULT_SCHEMA.schema_id}")

        series = resample(read_session_log(args.session))
        window = config.window_length
        if series.num_frames < window:
            raise DatasetError(
                f"Session {series.session_id} has {series.num_frames} frames, shorter than the {window}-frame window"
            )
        ends = window_ends(series.num_frames, window, args.stride)
        rows = []
        for start in range(0, len(ends), BATCH):
            chunk = ends[start:start + BATCH]
            X = np.stack([series.frames[end - window + 1:end + 1] for end in chunk])
            probs, _ = dbrnn_forward(model, X)
            for column, end in enumerate(chunk):
                p = probs[:, column]
                rows.append([end / GRID_HZ, classify(p), *p.tolist()])

        columns = ["t", "class"] + [f"p{c}" for c in range(config.num_classes)]
        pd.DataFrame(rows, columns=columns).to_csv(args.out, index=False, lineterminator="\n")
        recorder.outputs = [args.out]
        recorder.summary = {"rows": len(rows)}
        path = recorder.write(os.path.dirname(os.path.abspath(args.out)))
        logger.info(f"[CLI] predict wrote {len(rows)} rows to {args.out}; manifest {path}")
        return 0
