"""Train a Bi or Uni model on a prepared task."""
import argparse
import logging
import os

import pandas as pd

from config import Config
from cli.commands.base import Command, non_negative_int, positive_float, positive_int, seed_value
from cli.commands.prepare import example_set_path
from cli.utils.manifest import ManifestRecorder
from dbrnn.models.schemas import ARCHITECTURES, TASKS, EpochReport, NetworkConfig, TrainingConfig
from dbrnn.services.datapipe import DatasetError, SchemaMismatchError, load_example_set
from dbrnn.services.network import initialize_model, save_model
from dbrnn.services.training import train

logger = logging.getLogger("dbrnn")


def epoch_log_path(model_path: str) -> str:
    stem, _ = os.path.splitext(model_path)
    return f"{stem}_epochs.csv"


class TrainCommand(Command):
    name = "train"
    description = "Train a model and write it with its epoch log"

    def add_arguments(self, parser: argparse.ArgumentParser):
        parser.add_argument("--data", default=Config.DATA_DIR, help="Directory of prepared example sets")
        parser.add_argument("--task", choices=list(TASKS), default="braking")
        parser.add_argument("--arch", choices=list(ARCHITECTURES), default="bi",
                            help="bi: Bi-LSTM under a GRU; uni: the same without the backward LSTM")
        parser.add_argument("--seed", type=seed_value, default=Config.SEED)
        parser.add_argument("--hidden", type=positive_int, default=Config.HIDDEN_SIZE)
        parser.add_argument("--epochs", type=non_negative_int, default=Config.MAX_EPOCHS)
        parser.add_argument("--lr", type=positive_float, default=Config.LEARNING_RATE)
        parser.add_argument("--decay", type=positive_float, default=Config.DECAY_FACTOR)
        parser.add_argument("--decay-every", type=positive_int, default=Config.DECAY_EVERY)
        parser.add_argument("--clip", type=positive_float, default=Config.CLIP_VALUE)
        parser.add_argument("--batch-size", type=positive_int, default=Config.BATCH_SIZE)
        parser.add_argument("--out", help="Model file (default: <data>/models/<task>_<arch>.json)")

    def run(self, args: argparse.Namespace) -> int:
        recorder = ManifestRecorder(self.name, args)
        train_path = example_set_path(args.data, args.task, "train")
        header, train_set = load_example_set(train_path)
        recorder.inputs.append(train_path)
        if not train_set:
            raise DatasetError(f"{train_path} holds no examples")

        val_set = None
        val_path = example_set_path(args.data, args.task, "val")
        if os.path.exists(val_path):
            val_header, val_set = load_example_set(val_path)
            if (val_header.schema_id, val_header.window, val_header.class_names) != (
                header.schema_id, header.window, header.class_names
            ):
                raise SchemaMismatchError(f"{val_path} does not match {train_path}")
            recorder.inputs.append(val_path)

        network = NetworkConfig(
            input_size=header.num_features,
            hidden_size=args.hidden,
            num_classes=len(header.class_names),
            architecture=ARCHITECTURES[args.arch],
            window_length=header.window,
            feature_schema=header.schema_id,
        )
        training = TrainingConfig(
            learning_rate=args.lr,
            decay_factor=args.decay,
            decay_every=args.decay_every,
            max_epochs=args.epochs,
            clip_value=args.clip,
            batch_size=args.batch_size,
            seed=args.seed,
        )
        model = initialize_model(network, args.seed)
        logger.info(f"[CLI] Training {args.arch} model for {args.task} ({', '.join(header.class_names)})")
        best, reports = train(model, train_set, val_set or None, training)

        out_path = args.out or os.path.join(args.data, "models", f"{args.task}_{args.arch}.json")
        save_model(best, out_path)
        log_path = epoch_log_path(out_path)
        pd.DataFrame(
            [report.model_dump() for report in reports],
            columns=list(EpochReport.model_fields),
        ).to_csv(log_path, index=False, lineterminator="\n")
        recorder.outputs = [out_path, log_path]
        if reports:
            recorder.summary = {"epochs": len(reports), "final_train_loss": reports[-1].train_loss}

        path = recorder.write(os.path.dirname(os.path.abspath(out_path)))
        logger.info(f"[CLI] train wrote {out_path}; manifest {path}")
        return 0
