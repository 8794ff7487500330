"""Pipeline configuration: every tunable constant, with published defaults.

The defaults are the empirical values the method was calibrated with
(1.5 reach coefficient, 0.05 bifurcation ratio, 1.5 box scale, the
12.5 / 25 / 100 scribble-score constants, and the canvas-distance
thresholds). A config round-trips through JSON unchanged.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ConfigError

THREADS_ENV_VAR = "SKETCHRECON_THREADS"


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV_VAR, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV_VAR} must be an integer, got {raw!r}")


@dataclass
class PipelineConfig:
    # geometric matching
    match_coeff: float = 1.5
    bifurcation_ratio: float = 0.05
    box_scale: float = 1.5
    # scribble similarity
    overlap_gain: float = 12.5
    separator_penalty: float = 25.0
    canvas_far_coeff: float = 100.0
    plane_inv_threshold: float = 0.375
    sphere_inv_threshold: float = 1.75
    separator_aggregate: str = "max"   # "min" follows the formula literally
    # clustering
    shape_epsilon: float | None = None      # override; None = automatic
    scribble_epsilon: float | None = None
    min_pts: int = 2
    # surfacing
    coverage_threshold: float = 0.6
    verify_fraction: float = 0.5
    projection_widths: float = 2.0
    area_coeff: float = 1.0
    dihedral_coeff: float = 0.1
    max_cycle_edges: int = 12
    unguided: bool = False
    # classifier
    grid_n_trees: list[int] = field(default_factory=lambda: [50, 100, 200])
    grid_max_depth: list[int | None] = field(default_factory=lambda: [4, 8, None])
    grid_min_samples_leaf: list[int] = field(default_factory=lambda: [1, 5])
    cv_folds: int = 5
    # execution
    seed: int = 0
    threads: int | None = None    # None: use the environment default

    def resolved_threads(self) -> int:
        return self.threads if self.threads else default_threads()

    def grid(self) -> dict:
        return {
            "n_trees": list(self.grid_n_trees),
            "max_depth": list(self.grid_max_depth),
            "min_samples_leaf": list(self.grid_min_samples_leaf),
        }

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1),
                              encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(
                encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid config JSON in {path}: {exc}") from None
