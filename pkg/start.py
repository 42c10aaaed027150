#!/usr/bin/env python3
"""
Run the whole pipeline once: synth -> prepare -> train (bi and uni) -> eval.
Each step is a child process of the CLI; any failure stops the run with its exit code.
"""
import subprocess
import sys
import os
import signal

from config import Config


def signal_handler(sig, frame):
    """Handle shutdown signals."""
    print("\nStopping pipeline...")
    sys.exit(130)

signal.signal(signal.SIGINT, signal_handler)
signal.signal(signal.SIGTERM, signal_handler)


def pipeline(data_dir: str, task: str, seed: int):
    models_dir = os.path.join(data_dir, "models")
    bi_model = os.path.join(models_dir, f"{task}_bi.json")
    uni_model = os.path.join(models_dir, f"{task}_uni.json")
    return [
        ("Generating synthetic sessions", ["synth", "--out", data_dir, "--seed", str(seed)]),
        ("Preparing example sets", ["prepare", "--data", data_dir, "--task", task, "--seed", str(seed)]),
        ("Training Bi model", ["train", "--data", data_dir, "--task", task, "--arch", "bi",
                               "--seed", str(seed), "--out", bi_model]),
        ("Training Uni model", ["train", "--data", data_dir, "--task", task, "--arch", "uni",
                                "--seed", str(seed), "--out", uni_model]),
        ("Evaluating", ["eval", "--data", data_dir, "--task", task,
                        "--model", bi_model, "--model", uni_model, "--plot"]),
    ]


def main():
    """Run every step in order."""
    data_dir = sys.argv[1] if len(sys.argv) > 1 else Config.DATA_DIR
    task = sys.argv[2] if len(sys.argv) > 2 else "braking"

    print("=" * 60)
    print(f"Driver action prediction pipeline ({task}, data in {data_dir})")
    print("=" * 60)

    steps = pipeline(data_dir, task, Config.SEED)
    for number, (title, args) in enumerate(steps, start=1):
        print(f"\n[{number}/{len(steps)}] {title}...", flush=True)
        result = subprocess.run([sys.executable, "-m", "cli.main", *args], stdout=sys.stdout, stderr=sys.stderr)
        if result.returncode != 0:
            print(f"\n❌ Step '{title}' failed with exit code {result.returncode}")
            sys.exit(result.returncode)

    print(f"\n✅ Pipeline finished. Results are in {os.path.join(data_dir, 'results')}")


if __name__ == "__main__":
    main()
