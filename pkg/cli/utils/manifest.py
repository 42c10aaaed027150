"""Run manifests written next to every subcommand's outputs."""
from typing import Any, Dict, List, Optional
import argparse
import json
import os
import time

from pydantic import BaseModel, Field

from dbrnn import __version__


class RunManifest(BaseModel):
    """Everything needed to re-run a subcommand identically."""
    subcommand: str
    tool_version: str = __version__
    config: Dict[str, Any]
    inputs: List[str] = Field(default_factory=list)
    outputs: List[str] = Field(default_factory=list)
    seed: Optional[int] = None
    duration_s: float = 0.0
    summary: Dict[str, Any] = Field(default_factory=dict)


class ManifestRecorder:
    """Collects inputs, outputs and counts while a subcommand runs."""

    def __init__(self, subcommand: str, args: argparse.Namespace):
        self.subcommand = subcommand
        self.config = {key: value for key, value in vars(args).items() if key != "command"}
        self.inputs: List[str] = []
        self.outputs: List[str] = []
        self.summary: Dict[str, Any] = {}
        self._started = time.perf_counter()

    def write(self, directory: str) -> str:
        """Write manifest_<subcommand>.json into directory and return its path."""
        manifest = RunManifest(
            subcommand=self.subcommand,
            config=self.config,
            inputs=self.inputs,
            outputs=self.outputs,
            seed=self.config.get("seed"),
            duration_s=round(time.perf_counter() - self._started, 3),
            summary=self.summary,
        )
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, f"manifest_{self.subcommand}.json")
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(manifest.model_dump(mode="json"), handle, indent=2, sort_keys=True)
            handle.write("\n")
        return path
