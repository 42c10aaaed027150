"""Turn session files into balanced, split example sets."""
import argparse
import logging
import os

from config import Config
from cli.commands.base import (
    Command,
    fractions,
    non_negative_float,
    positive_float,
    positive_int,
    seed_value,
)
from cli.utils.manifest import ManifestRecorder
from dbrnn.models.schemas import ExampleSetHeader, RecognitionRules, TASKS, get_task
from dbrnn.services.datapipe import (
    DatasetError,
    balance_classes,
    build_examples,
    list_session_files,
    read_session_log,
    recognize_actions,
    resample,
    save_example_set,
    split_dataset,
)
from dbrnn.services.feature_schema import DEFAULT_SCHEMA
from dbrnn.services.numeric_core import SeededRng
from dbrnn.services.synthgen import TRUTH_FILE, read_truth

logger = logging.getLogger("dbrnn")

SPLITS = ("train", "val", "test")


def example_set_path(directory: str, task: str, split: str) -> str:
    return os.path.join(directory, f"{task}_{split}.jsonl")


class PrepareCommand(Command):
    name = "prepare"
    description = "Resample, recognize, label, balance and split"

    def add_arguments(self, parser: argparse.ArgumentParser):
        parser.add_argument("--data", default=Config.DATA_DIR, help="Directory of session files")
        parser.add_argument("--out", help="Directory for example sets (default: --data)")
        parser.add_argument("--task", choices=[*TASKS, "all"], default="all")
        parser.add_argument("--ratio", type=positive_float, default=Config.BALANCE_RATIO, help="Negatives per positive")
        parser.add_argument("--split", type=fractions, default=(0.7, 0.15, 0.15), help="train,val,test fractions")
        parser.add_argument("--horizon", type=positive_float, default=Config.HORIZON_S, help="Prediction horizon d (s)")
        parser.add_argument("--window", type=positive_int, default=Config.WINDOW, help="Window length T (frames)")
        parser.add_argument("--stride", type=positive_int, default=Config.STRIDE, help="Frames between windows")
        parser.add_argument("--exec-len", type=non_negative_float, default=Config.EXEC_LEN_S, help="Excluded execution span (s)")
        parser.add_argument("--seed", type=seed_value, default=Config.SEED)
        parser.add_argument("--labels", choices=["recognized", "truth"], default="recognized",
                            help="Label from recognized onsets or from the generator's truth file")

    def run(self, args: argparse.Namespace) -> int:
        recorder = ManifestRecorder(self.name, args)
        out_dir = args.out or args.data
        os.makedirs(out_dir, exist_ok=True)

        files = list_session_files(args.data)
        if not files:
            raise DatasetError(f"No session files in {args.data}")
        recorder.inputs = list(files)
        series = [resample(read_session_log(path)) for path in files]
        logger.info(f"[CLI] Resampled {len(series)} sessions")

        if args.labels == "truth":
            truth_path = os.path.join(args.data, TRUTH_FILE)
            recorder.inputs.append(truth_path)
            truth = read_truth(truth_path)
            events = {s.session_id: truth.action_events(s.session_id) for s in series}
        else:
            rules = RecognitionRules()
            events = {s.session_id: recognize_actions(s, rules) for s in series}
        recorder.summary["events"] = sum(len(e) for e in events.values())

        task_names = list(TASKS) if args.task == "all" else [args.task]
        master = SeededRng(args.seed)
        for index, task_name in enumerate(task_names):
            task = get_task(task_name, args.ratio)
            examples = []
            for s in series:
                examples.extend(build_examples(s, events[s.session_id], task, args.horizon, args.window, args.stride, args.exec_len))
            balanced = balance_classes(examples, task, master.spawn(2 * index))
            parts = split_dataset(balanced, args.split, master.spawn(2 * index + 1))

            counts = {}
            for split, part in zip(SPLITS, parts):
                header = ExampleSetHeader(
                    task=task.name,
                    split=split,
                    horizon_s=args.horizon,
                    window=args.window,
                    stride=args.stride,
                    exec_len_s=args.exec_len,
                    seed=args.seed,
                    schema_id=DEFAULT_SCHEMA.schema_id,
                    num_features=DEFAULT_SCHEMA.size,
                    class_names=task.class_names,
                )
                path = example_set_path(out_dir, task.name, split)
                save_example_set(part, header, path)
                recorder.outputs.append(path)
                positives = sum(1 for example in part if example.is_positive)
                counts[split] = {"positives": positives, "negatives": len(part) - positives}
            recorder.summary[task.name] = counts

        path = recorder.write(out_dir)
        logger.info(f"[CLI] prepare wrote {len(recorder.outputs)} example sets; manifest {path}")
        return 0
