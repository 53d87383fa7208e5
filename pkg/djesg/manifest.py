import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

from djesg import __version__
from djesg.artifacts import PathLike, file_digest, write_json

logger = logging.getLogger(__name__)


# RunManifest records what a command read, produced and excluded; it is written once per invocation.
@dataclass
class RunManifest:
    command: str
    config_hash: str
    seed: int
    version: str = __version__
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    counts: Dict[str, Dict[str, int]] = field(default_factory=dict)
    wall_clock: Dict[str, float] = field(default_factory=dict)
    errors: List[Dict[str, Any]] = field(default_factory=list)
    path: Optional[Path] = field(default=None, repr=False)

    @property
    def written(self) -> bool:
        return self.path is not None

    def record_input(self, name: str, path: PathLike) -> None:
        self.inputs[name] = file_digest(path)

    def record_output(self, name: str, path: PathLike) -> None:
        self.outputs[name] = file_digest(path)

    def record_counts(self, stage: str, counts: Mapping[str, Any]) -> None:
        merged = Counter(self.counts.get(stage, {}))
        merged.update({key: int(value) for key, value in counts.items()})
        self.counts[stage] = dict(sorted(merged.items()))

    def record_wall_clock(self, stage: str, seconds: float) -> None:
        self.wall_clock[stage] = seconds

    def record_error(self, *, code: str, message: str, exit_code: int) -> None:
        self.errors.append({"code": code, "message": message, "exit_code": exit_code})

    def as_json(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "version": self.version,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": dict(sorted(self.outputs.items())),
            "counts": dict(sorted(self.counts.items())),
            "wall_clock": dict(self.wall_clock),
            "errors": list(self.errors),
        }

    def write(self, output_dir: PathLike) -> Path:
        if self.written:
            raise RuntimeError(f"manifest for {self.command} was already written to {self.path}")

        self.path = write_json(self.as_json(), Path(output_dir) / f"manifest-{self.command}.json")
        logger.info("manifest written to %s", self.path)
        return self.path
