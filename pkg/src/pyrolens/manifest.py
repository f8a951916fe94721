"""Run manifests: resolved arguments plus timing, written next to outputs.

A manifest captures everything needed to reproduce a run: the subcommand,
every argument with defaults materialized, input/output paths, and
per-stage wall-clock timing.  ``pyrolens rerun <manifest>`` feeds the
stored arguments back through the same command.
"""

from __future__ import annotations

import json
import time
from pathlib import Path
from typing import Optional

from . import __version__

MANIFEST_NAME = "manifest.json"


class StageTimer:
    def __init__(self):
        self.timing: dict[str, float] = {}
        self._t0 = time.perf_counter()

    def mark(self, stage: str) -> None:
        now = time.perf_counter()
        self.timing[stage] = round(now - self._t0, 6)
        self._t0 = now


def write_manifest(
    path: str | Path,
    command: str,
    args: dict,
    inputs: list[str],
    outputs: list[str],
    timing: Optional[dict] = None,
) -> Path:
    path = Path(path)
    obj = {
        "command": command,
        "version": __version__,
        "args": args,
        "inputs": sorted(inputs),
        "outputs": sorted(outputs),
        "timing_s": timing or {},
    }
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def load_manifest(path: str | Path) -> dict:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    for key in ("command", "args"):
        if key not in obj:
            raise ValueError(f"manifest {path} lacks {key!r}")
    return obj
