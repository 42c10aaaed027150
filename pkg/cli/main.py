"""Command-line entry point: python -m cli.main <subcommand> [flags]."""
import argparse
import logging
import os
import sys
from typing import List, Optional

# Add project root to Python path
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if project_root not in sys.path:
    sys.path.insert(0, project_root)

from pydantic import ValidationError

from config import Config
from dbrnn import __version__
from dbrnn.services.numeric_core import DbrnnError

# Import commands
from cli.commands import evaluate, inspect_model, predict, prepare, synth, train
from cli.commands.base import Command

logger = logging.getLogger("dbrnn")

LOG_FORMAT = "%(asctime)s - %(message)s"


def setup_logging(level: str = Config.LOG_LEVEL, log_file: Optional[str] = Config.LOG_FILE):
    """Progress goes to standard error and, if configured, to a log file."""
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file, encoding="utf-8"))
    logging.basicConfig(level=level.upper(), format=LOG_FORMAT, handlers=handlers, force=True)


class DbrnnCli:
    """Main command-line application."""

    def __init__(self):
        self.parser = argparse.ArgumentParser(
            prog="dbrnn",
            description="Deep bidirectional RNN toolkit for driver action prediction",
        )
        self.parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
        self.parser.add_argument("--log-level", default=Config.LOG_LEVEL, choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                                 type=str.upper)
        self.subparsers = self.parser.add_subparsers(dest="command", required=True, metavar="command")
        self.commands = {}

    def add_command(self, command: Command):
        parser = self.subparsers.add_parser(command.name, help=command.description, description=command.description)
        command.add_arguments(parser)
        self.commands[command.name] = command

    def setup(self):
        """Register all subcommands."""
        self.add_command(synth.SynthCommand())
        self.add_command(prepare.PrepareCommand())
        self.add_command(train.TrainCommand())
        self.add_command(evaluate.EvalCommand())
        self.add_command(predict.PredictCommand())
        self.add_command(inspect_model.InspectCommand())

    def run(self, argv: Optional[List[str]] = None) -> int:
        """Parse, dispatch and map failures to exit codes (2 usage, 1 runtime)."""
        try:
            args = self.parser.parse_args(argv)
        except SystemExit as e:
            return e.code if isinstance(e.code, int) else 2
        setup_logging(args.log_level)
        logger.debug(f"[CLI] Running {args.command} with {vars(args)}")
        try:
            return self.commands[args.command].run(args)
        except (DbrnnError, ValidationError, OSError, ValueError) as e:
            logger.error(f"[CLI] {args.command} failed: {type(e).__name__}: {e}")
            return 1


def main(argv: Optional[List[str]] = None) -> int:
    try:
        Config.validate()
    except ValueError as e:
        sys.stderr.write(f"Configuration error: {e}\n")
        return 2
    cli = DbrnnCli()
    cli.setup()
    return cli.run(argv)


if __name__ == "__main__":
    sys.exit(main())
