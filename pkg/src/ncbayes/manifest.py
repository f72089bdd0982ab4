"""Run manifests: what a command did, on which inputs, and how long it took.

Every CLI entry point emits one JSON manifest next to its outputs so a run
can be reconstructed from the manifest plus the referenced input files.
Timings are wall-clock and therefore not byte-stable; everything else is.
"""
from __future__ import annotations

import csv
import hashlib
import json
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .gibbs import PosteriorDraws

__all__ = ["RunManifest", "file_digest", "write_draws_csv", "read_draws_csv"]


def file_digest(path) -> str:
    """sha256 hex digest of a file's bytes."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"not JSON-serializable: {type(x)!r}")


@dataclass
class RunManifest:
    """Config echo, seed, stage timings, input digests, outputs, diagnostics."""

    command: str
    config: dict = field(default_factory=dict)
    seed: int | None = None
    stages: dict = field(default_factory=dict)   # stage name -> seconds
    inputs: dict = field(default_factory=dict)   # path -> sha256
    outputs: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.stages[name] = round(
                self.stages.get(name, 0.0) + time.perf_counter() - t0, 6
            )

    def add_input(self, path) -> str:
        digest = file_digest(path)
        self.inputs[str(path)] = digest
        return digest

    def add_output(self, path) -> None:
        p = str(path)
        if p not in self.outputs:
            self.outputs.append(p)

    def note(self, **kv) -> None:
        self.diagnostics.update(kv)

    def note_draws(self, draws) -> None:
        """Fold a draws object's diagnostics in (PosteriorDraws or TVDraws)."""
        self.diagnostics["jitter_retries"] = self.diagnostics.get(
            "jitter_retries", 0
        ) + int(getattr(draws, "jitter_retries", 0))
        self.diagnostics["ess_warnings"] = self.diagnostics.get(
            "ess_warnings", 0
        ) + int(getattr(draws, "ess_warnings", 0))
        events = getattr(draws, "ess_events", None)
        if events is not None and len(events):
            self.diagnostics.setdefault("ess_trajectory", []).extend(
                np.asarray(events).tolist()
            )

    def write(self, path) -> None:
        payload = {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "stages_seconds": self.stages,
            "input_digests": self.inputs,
            "outputs": self.outputs,
            "diagnostics": self.diagnostics,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")


def write_draws_csv(path, draws: PosteriorDraws) -> None:
    """One kept draw per row, columns theta_1..theta_p then beta if present."""
    A = np.asarray(draws.draws, float)
    p = A.shape[1] - (1 if draws.has_intercept else 0)
    names = [f"theta_{j}" for j in range(1, p + 1)]
    if draws.has_intercept:
        names.append("beta")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        writer.writerows(A.tolist())


def read_draws_csv(path) -> tuple[np.ndarray, list[str]]:
    """Matrix of draws plus the header names (inverse of write_draws_csv)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        names = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    return np.asarray(rows, float), names
