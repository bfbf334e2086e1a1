"""World model: walls, materials, access point, mounting constraints, grid.

A scene is loaded from a JSON file (see ``load_scene``) and is immutable
after construction; it can be shared freely across workers. All distances
are meters, powers are dBm at API boundaries.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import as_point, point_segment_distance, project_to_segment

# Built-in material table. Magnitudes are representative defaults, not
# ground truth; scene files may override or extend via their "materials"
# section.
BUILTIN_MATERIALS = {
    "concrete": (0.50, math.pi),
    "metal": (0.95, math.pi),
    "wood": (0.30, math.pi),
}


class SceneError(ValueError):
    """Raised for malformed or physically invalid scene descriptions."""


@dataclass(frozen=True)
class Material:
    """A wall surface type with a complex reflection coefficient."""

    name: str
    reflection_coefficient: complex

    def __post_init__(self):
        if not (0.0 <= abs(self.reflection_coefficient) <= 1.0 + 1e-12):
            raise SceneError(
                f"material {self.name!r}: |reflection coefficient| must be in [0, 1]"
            )


@dataclass(frozen=True)
class Wall:
    """A straight wall segment from a to b carrying one material."""

    a: np.ndarray
    b: np.ndarray
    material: Material

    def __post_init__(self):
        object.__setattr__(self, "a", as_point(self.a))
        object.__setattr__(self, "b", as_point(self.b))
        if np.allclose(self.a, self.b):
            raise SceneError(f"wall endpoints coincide at {self.a.tolist()}")

    @property
    def length(self) -> float:
        return float(np.hypot(*(self.b - self.a)))

    @property
    def tangent(self) -> np.ndarray:
        return (self.b - self.a) / self.length

    def point_at(self, t: float) -> np.ndarray:
        return self.a + t * (self.b - self.a)


@dataclass(frozen=True)
class FeasibleSegment:
    """Sub-interval [t0, t1] of a wall where a panel may be mounted."""

    wall: int
    t0: float
    t1: float


@dataclass(frozen=True)
class Scene:
    walls: tuple
    ap_position: np.ndarray
    tx_power_dbm: float
    carrier_frequency_hz: float
    feasible_segments: tuple = field(default=())

    # Derived arrays for the vectorized tracer (set in __post_init__).
    wall_a: np.ndarray = field(init=False, repr=False, compare=False)
    wall_b: np.ndarray = field(init=False, repr=False, compare=False)
    gammas: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "walls", tuple(self.walls))
        object.__setattr__(self, "ap_position", as_point(self.ap_position))
        object.__setattr__(
            self, "feasible_segments", tuple(self.feasible_segments)
        )
        if self.carrier_frequency_hz <= 0:
            raise SceneError("carrier frequency must be positive")
        for w in self.walls:
            if point_segment_distance(self.ap_position, w.a, w.b) < 1e-9:
                raise SceneError("AP position lies on a wall segment")
        for seg in self.feasible_segments:
            if not 0 <= seg.wall < len(self.walls):
                raise SceneError(f"feasible segment references wall {seg.wall}")
            if not (0.0 <= seg.t0 < seg.t1 <= 1.0):
                raise SceneError(
                    f"feasible interval [{seg.t0}, {seg.t1}] outside [0, 1]"
                )
        if self.walls:
            object.__setattr__(
                self, "wall_a", np.array([w.a for w in self.walls], dtype=float)
            )
            object.__setattr__(
                self, "wall_b", np.array([w.b for w in self.walls], dtype=float)
            )
            object.__setattr__(
                self,
                "gammas",
                np.array(
                    [w.material.reflection_coefficient for w in self.walls],
                    dtype=complex,
                ),
            )
        else:
            object.__setattr__(self, "wall_a", np.zeros((0, 2)))
            object.__setattr__(self, "wall_b", np.zeros((0, 2)))
            object.__setattr__(self, "gammas", np.zeros(0, dtype=complex))

    @property
    def wavelength(self) -> float:
        return 299792458.0 / self.carrier_frequency_hz

    def bounding_box(self):
        """(min_xy, max_xy) over all wall endpoints (AP included if no walls)."""
        if not self.walls:
            p = self.ap_position
            return p.copy(), p.copy()
        pts = np.vstack([self.wall_a, self.wall_b])
        return pts.min(axis=0), pts.max(axis=0)


@dataclass(frozen=True)
class GridMap:
    """Cell lattice covering the scene. Cell (i, j) is column i, row j;
    its center is origin + ((i + 0.5) * cell_size, (j + 0.5) * cell_size).
    Row-major order means j outer, i inner (linear index j * nx + i).
    """

    origin: np.ndarray
    cell_size: float
    nx: int
    ny: int

    def __post_init__(self):
        object.__setattr__(self, "origin", as_point(self.origin))
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid must have at least one cell")

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    def center(self, i: int, j: int) -> np.ndarray:
        return self.origin + (np.array([i, j], dtype=float) + 0.5) * self.cell_size

    def cell_centers(self) -> np.ndarray:
        """All centers, row-major, shape (nx * ny, 2)."""
        ii, jj = np.meshgrid(np.arange(self.nx), np.arange(self.ny))
        centers = np.stack(
            [
                self.origin[0] + (ii + 0.5) * self.cell_size,
                self.origin[1] + (jj + 0.5) * self.cell_size,
            ],
            axis=-1,
        )
        return centers.reshape(-1, 2)

    def indices(self):
        """(i, j) pairs in row-major order."""
        for j in range(self.ny):
            for i in range(self.nx):
                yield i, j


def _material_table(extra: dict | None) -> dict:
    table = {
        name: Material(name, mag * complex(math.cos(ph), math.sin(ph)))
        for name, (mag, ph) in BUILTIN_MATERIALS.items()
    }
    for name, spec in (extra or {}).items():
        try:
            mag = float(spec["gamma_mag"])
            ph = float(spec["gamma_phase_rad"])
        except (KeyError, TypeError) as exc:
            raise SceneError(f"material {name!r}: expected gamma_mag/gamma_phase_rad") from exc
        table[name] = Material(name, mag * complex(math.cos(ph), math.sin(ph)))
    return table


def scene_from_dict(doc: dict) -> Scene:
    """Build and validate a Scene from the JSON document structure."""
    try:
        materials = _material_table(doc.get("materials"))
        walls = []
        for idx, w in enumerate(doc["walls"]):
            name = w.get("material", "concrete")
            if name not in materials:
                raise SceneError(f"wall {idx}: unknown material {name!r}")
            walls.append(Wall(w["a"], w["b"], materials[name]))
        ap = doc["ap"]
        feasible = tuple(
            FeasibleSegment(int(f["wall"]), float(f["t0"]), float(f["t1"]))
            for f in doc.get("feasible", [])
        )
        return Scene(
            walls=tuple(walls),
            ap_position=ap["position"],
            tx_power_dbm=float(ap["tx_power_dbm"]),
            carrier_frequency_hz=float(doc["frequency_hz"]),
            feasible_segments=feasible,
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise SceneError(f"malformed scene document: {exc}") from exc


def scene_to_dict(scene: Scene) -> dict:
    """Inverse of scene_from_dict (materials are always written out)."""
    mats = {}
    for w in scene.walls:
        g = w.material.reflection_coefficient
        mats[w.material.name] = {
            "gamma_mag": abs(g),
            "gamma_phase_rad": math.atan2(g.imag, g.real),
        }
    return {
        "walls": [
            {
                "a": w.a.tolist(),
                "b": w.b.tolist(),
                "material": w.material.name,
            }
            for w in scene.walls
        ],
        "ap": {
            "position": scene.ap_position.tolist(),
            "tx_power_dbm": scene.tx_power_dbm,
        },
        "frequency_hz": scene.carrier_frequency_hz,
        "feasible": [
            {"wall": s.wall, "t0": s.t0, "t1": s.t1}
            for s in scene.feasible_segments
        ],
        "materials": mats,
    }


def load_scene(path) -> Scene:
    """Load a scene JSON file.

    The file must provide walls (a, b, material), ap (position,
    tx_power_dbm), frequency_hz, and may provide feasible mounting
    sub-intervals and a materials override table.

    Raises SceneError on parse or validation failure.
    """
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as exc:
        raise SceneError(f"{path}: not valid JSON: {exc}") from exc
    return scene_from_dict(doc)


def make_grid(scene: Scene, cell_size: float) -> GridMap:
    """Grid covering the axis-aligned bounding box of all walls.

    nx = ceil(width / cell_size), ny = ceil(height / cell_size); the grid
    origin is the bounding-box minimum corner.
    """
    if cell_size <= 0:
        raise ValueError("cell_size must be positive")
    lo, hi = scene.bounding_box()
    width, height = hi - lo
    nx = max(1, math.ceil(width / cell_size - 1e-9))
    ny = max(1, math.ceil(height / cell_size - 1e-9))
    return GridMap(origin=lo, cell_size=cell_size, nx=nx, ny=ny)


def project_to_feasible(scene: Scene, p):
    """Nearest point on the feasible mounting region to p.

    Returns (point, wall_index). Ties are broken by lowest wall index,
    then lowest parameter along the wall.
    """
    if not scene.feasible_segments:
        raise SceneError("scene has no feasible segments")
    p = as_point(p)
    best = None
    for seg in scene.feasible_segments:
        wall = scene.walls[seg.wall]
        a = wall.point_at(seg.t0)
        b = wall.point_at(seg.t1)
        t_sub, point, dist = project_to_segment(p, a, b)
        t = seg.t0 + t_sub * (seg.t1 - seg.t0)
        key = (dist, seg.wall, t)
        if best is None or _tie_less(key, best[0]):
            best = (key, point, seg.wall)
    return best[1], best[2]


def _tie_less(key, other, tol=1e-12):
    """Lexicographic compare with tolerance on the leading distance."""
    if key[0] < other[0] - tol:
        return True
    if key[0] > other[0] + tol:
        return False
    return key[1:] < other[1:]
