"""Generate a synthetic dataset with planted actions."""
import argparse
import logging
from collections import Counter

from config import Config
from cli.commands.base import (
    Command,
    non_negative_float,
    non_negative_int,
    positive_float,
    positive_int,
    seed_value,
)
from cli.utils.manifest import ManifestRecorder
from dbrnn.models.schemas import ScenarioConfig
from dbrnn.services.synthgen import generate, generate_driver_variant, pool_drivers, write_dataset

logger = logging.getLogger("dbrnn")


class SynthCommand(Command):
    name = "synth"
    description = "Generate session files and a truth table"

    def add_arguments(self, parser: argparse.ArgumentParser):
        parser.add_argument("--sessions", type=positive_int, default=10, help="Sessions per driver")
        parser.add_argument("--minutes", type=positive_float, default=10.0, help="Session length in minutes")
        parser.add_argument("--seed", type=seed_value, default=Config.SEED)
        parser.add_argument("--out", default=Config.DATA_DIR, help="Output directory")
        drivers = parser.add_mutually_exclusive_group()
        drivers.add_argument("--driver", type=non_negative_int, help="Emulate a single driver")
        drivers.add_argument("--drivers", type=positive_int, help="Pool this many drivers into one dataset")
        parser.add_argument("--native-rates", action="store_true", help="Write channels at sensor rates, not 10 Hz")
        parser.add_argument("--lead", type=positive_float, default=4.0, help="Precursor lead in seconds")
        parser.add_argument("--lead-jitter", type=non_negative_float, default=0.0, help="Per-event lead jitter (s)")
        parser.add_argument("--amplitude", type=non_negative_float, default=0.3, help="Precursor amplitude")
        parser.add_argument("--noise-std", type=non_negative_float, default=0.1)

    def run(self, args: argparse.Namespace) -> int:
        recorder = ManifestRecorder(self.name, args)
        config = ScenarioConfig(
            num_sessions=args.sessions,
            session_length_s=args.minutes * 60.0,
            precursor_lead_s=args.lead,
            lead_jitter_s=args.lead_jitter,
            precursor_amplitude=args.amplitude,
            noise_std=args.noise_std,
            native_rates=args.native_rates,
            seed=args.seed,
        )
        if args.driver is not None:
            logs, truth = generate_driver_variant(config, args.driver)
        elif args.drivers is not None:
            logs, truth = pool_drivers(config, range(args.drivers))
        else:
            logs, truth = generate(config)

        recorder.outputs = write_dataset(logs, truth, args.out)
        recorder.summary = {
            "sessions": len(logs),
            "events": dict(sorted(Counter(event.action.value for event in truth.events).items())),
        }
        path = recorder.write(args.out)
        logger.info(f"[CLI] synth wrote {len(logs)} sessions and {len(truth.events)} events; manifest {path}")
        return 0
