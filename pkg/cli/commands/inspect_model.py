"""Print a JSON summary of a model file."""
import argparse
import json
import logging
import os
import sys

from cli.commands.base import Command
from cli.utils.manifest import ManifestRecorder
from dbrnn.services.network import MODEL_FORMAT_VERSION, load_model

logger = logging.getLogger("dbrnn")


class InspectCommand(Command):
    name = "inspect"
    description = "Summarize a model file"

    def add_arguments(self, parser: argparse.ArgumentParser):
        parser.add_argument("--model", required=True)
        parser.add_argument("--out", help="Also write the summary to this JSON file")

    def run(self, args: argparse.Namespace) -> int:
        model = load_model(args.model)
        config = model.config
        summary = {
            "format_version": MODEL_FORMAT_VERSION,
            "architecture": config.arch_name,
            "layers": [layer.model_dump() for layer in config.architecture],
            "input_size": config.input_size,
            "hidden_size": config.hidden_size,
            "num_classes": config.num_classes,
            "window_length": config.window_length,
            "matrices": {name: list(value.shape) for name, value in model.named_arrays().items()},
            "parameter_count": model.parameter_count(),
            "seed": model.seed,
            "feature_schema": config.feature_schema,
        }
        text = json.dumps(summary, indent=2)
        sys.stdout.write(text + "\n")
        if args.out:
            recorder = ManifestRecorder(self.name, args)
            recorder.inputs = [args.model]
            with open(args.out, "w", encoding="utf-8") as handle:
                handle.write(text + "\n")
            recorder.outputs = [args.out]
            recorder.write(os.path.dirname(os.path.abspath(args.out)))
        return 0
