"""Run configuration shared by the pipeline and the CLI."""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields

from .raytrace import MtsSpec


@dataclass(frozen=True)
class RunConfig:
    """Knobs for a planning run. Defaults follow the reference setup:
    1 m cells, -78 dBm blind-spot threshold, clusters of at most 6 blind
    spots, 21 x 14 atoms at 6 cm spacing, 1000 phase samples."""

    cell_size: float = 1.0
    delta: float = -78.0
    capacity: int = 6
    mts_rows: int = 21
    mts_cols: int = 14
    mts_spacing: float = 0.06
    samples: int = 1000          # T, phase samples per optimization
    seed: int = 0
    users: tuple = field(default=())  # ((x, y), ...) evaluation positions
    kappa: float | None = None   # per-atom coupling; None -> atom spacing
    associate_nearest: bool = False  # vote per panel over its nearest users
    patience: int = 3            # below-threshold epochs before the operator alert
    threads: int = 0             # 0 -> available parallelism
    benchmark: bool = False
    figures: bool = True

    def __post_init__(self):
        object.__setattr__(
            self, "users", tuple(tuple(float(c) for c in u) for u in self.users)
        )

    @property
    def mts_spec(self) -> MtsSpec:
        return MtsSpec(rows=self.mts_rows, cols=self.mts_cols, spacing=self.mts_spacing)

    @property
    def effective_kappa(self) -> float:
        return self.mts_spacing if self.kappa is None else self.kappa

    @property
    def effective_threads(self) -> int:
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = [list(u) for u in v] if f.name == "users" else v
        return out
