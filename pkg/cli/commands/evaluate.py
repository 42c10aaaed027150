"""Piecewise evaluation of one model, or a comparison of two."""
import argparse
import logging
import os

from config import Config
from cli.commands.base import Command, positive_float
from cli.commands.prepare import example_set_path
from cli.utils.manifest import ManifestRecorder
from dbrnn.models.schemas import TASKS
from dbrnn.services.datapipe import check_model_matches, load_example_set
from dbrnn.services.evaluation import compare_curves, piecewise_eval, write_comparison_csv, write_metrics_csv
from dbrnn.services.network import load_model
from dbrnn.services.plotting import plot_accuracy_overlay, plot_piecewise

logger = logging.getLogger("dbrnn")


def model_label(path: str) -> str:
    return os.path.splitext(os.path.basename(path))[0]


class EvalCommand(Command):
    name = "eval"
    description = "Write piecewise metrics vs time-to-event"

    def add_arguments(self, parser: argparse.ArgumentParser):
        parser.add_argument("--model", action="append", required=True, help="Model file; give twice to compare")
        parser.add_argument("--data", default=Config.DATA_DIR, help="Directory of prepared example sets")
        parser.add_argument("--task", choices=list(TASKS), default="braking")
        parser.add_argument("--test", help="Example set to evaluate (default: <data>/<task>_test.jsonl)")
        parser.add_argument("--bin-width", type=positive_float, default=Config.BIN_WIDTH_S, help="Bin width (s)")
        parser.add_argument("--margin", type=float, default=0.0, help="Accuracy lead counted as an advantage")
        parser.add_argument("--out", help="Results directory (default: <data>/results)")
        parser.add_argument("--plot", action="store_true", help="Also write a PNG of the curves")

    def run(self, args: argparse.Namespace) -> int:
        if len(args.model) > 2:
            logger.error("[CLI] eval accepts at most two --model flags")
            return 2
        recorder = ManifestRecorder(self.name, args)
        test_path = args.test or example_set_path(args.data, args.task, "test")
        header, examples = load_example_set(test_path)
        recorder.inputs = [test_path, *args.model]
        out_dir = args.out or os.path.join(args.data, "results")
        os.makedirs(out_dir, exist_ok=True)

        curves = {}
        for path in args.model:
            model = load_model(path)
            check_model_matches(header, model.config)
            metrics = piecewise_eval(model, examples, args.bin_width, header.horizon_s, header.class_names)
            label = model_label(path)
            if label in curves:
                label = f"{label}_{len(curves)}"
            curves[label] = metrics
            csv_path = os.path.join(out_dir, f"{header.task}_{label}_metrics.csv")
            write_metrics_csv(metrics, csv_path)
            recorder.outputs.append(csv_path)
            recorder.summary[label] = {"accuracy": metrics.accuracy, "tpr": metrics.tpr, "fpr": metrics.fpr}

        if len(curves) == 2:
            (label_a, a), (label_b, b) = curves.items()
            comparison = compare_curves(a, b, args.margin, label_a, label_b)
            csv_path = os.path.join(out_dir, f"{header.task}_{label_a}_vs_{label_b}.csv")
            write_comparison_csv(comparison, csv_path)
            recorder.outputs.append(csv_path)
            recorder.summary["comparison"] = {
                "mean_accuracy_delta": comparison.mean_accuracy_delta,
                "earliest_advantage_s": comparison.earliest_advantage_s,
            }
            logger.info(
                f"[CLI] {label_a} vs {label_b}: mean accuracy delta {comparison.mean_accuracy_delta}, "
                f"earliest advantage at {comparison.earliest_advantage_s} s"
            )

        if args.plot:
            png_path = os.path.join(out_dir, f"{header.task}_{'_vs_'.join(curves)}.png")
            plot_piecewise(curves, png_path, title=f"{header.task}: piecewise performance vs time-to-event")
            recorder.outputs.append(png_path)
            if len(curves) == 2:
                overlay_path = os.path.join(out_dir, f"{header.task}_{'_vs_'.join(curves)}_accuracy.png")
                plot_accuracy_overlay(curves, overlay_path, title=f"{header.task}: accuracy vs time-to-event")
                recorder.outputs.append(overlay_path)

        path = recorder.write(out_dir)
        logger.info(f"[CLI] eval wrote {len(recorder.outputs)} files; manifest {path}")
        return 0
