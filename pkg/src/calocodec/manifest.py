"""Run manifests: every CLI command records what it did and on what bytes."""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    argv: list
    parameters: dict
    master_seed: int | None
    inputs: dict = field(default_factory=dict)  # path -> sha256
    outputs: dict = field(default_factory=dict)  # path -> sha256
    tool_version: str = ""
    wall_time_s: float = 0.0

    def save_to(self, path) -> None:
        with open(path, "w") as f:
            json.dump(asdict(self), f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def load_from(cls, path) -> "RunManifest":
        with open(path) as f:
            data = json.load(f)
        return cls(**data)


class ManifestWriter:
    """Collects hashes while a command runs, then writes the manifest."""

    def __init__(self, command: str, argv: list, parameters: dict, master_seed: int | None, version: str) -> None:
        self._t0 = time.perf_counter()
        self.manifest = RunManifest(
            command=command,
            argv=list(argv),
            parameters=parameters,
            master_seed=master_seed,
            tool_version=version,
        )

    def add_input(self, path) -> None:
        self.manifest.inputs[str(path)] = sha256_file(path)

    def add_output(self, path) -> None:
        self.manifest.outputs[str(path)] = sha256_file(path)

    def write(self, path=None) -> Path:
        self.manifest.wall_time_s = round(time.perf_counter() - self._t0, 3)
        if path is None:
            first_out = next(iter(self.manifest.outputs), None)
            if first_out is None:
                raise ValueError("no outputs recorded and no manifest path given")
            path = Path(str(first_out) + ".manifest.json")
        self.manifest.save_to(path)
        return Path(path)
