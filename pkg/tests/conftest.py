import math
from pathlib import Path

import numpy as np
import pytest

from mtsplan.scene import FeasibleSegment, Material, Scene, Wall

REPO_ROOT = Path(__file__).resolve().parents[1]
SCENES_DIR = REPO_ROOT / "scenes"
ROOM_A = SCENES_DIR / "room_a.json"


def material(name="concrete"):
    from mtsplan.scene import BUILTIN_MATERIALS

    mag, ph = BUILTIN_MATERIALS[name]
    return Material(name, mag * complex(math.cos(ph), math.sin(ph)))


def make_scene(wall_specs, ap=(2.0, 5.0), tx=0.0, freq=2.6e9, feasible=()):
    """wall_specs: (a, b) pairs or (a, b, material_name) triples."""
    walls = []
    for spec in wall_specs:
        if len(spec) == 3:
            a, b, name = spec
        else:
            a, b = spec
            name = "concrete"
        walls.append(Wall(a, b, material(name)))
    return Scene(
        walls=tuple(walls),
        ap_position=ap,
        tx_power_dbm=tx,
        carrier_frequency_hz=freq,
        feasible_segments=tuple(FeasibleSegment(*f) for f in feasible),
    )


def rect_room(w=10.0, h=10.0, ap=(2.0, 5.0), tx=0.0, material_name="concrete",
              feasible=()):
    walls = [
        ((0, 0), (w, 0), material_name),
        ((w, 0), (w, h), material_name),
        ((0, h), (w, h), material_name),
        ((0, 0), (0, h), material_name),
    ]
    return make_scene(walls, ap=ap, tx=tx, feasible=feasible)


def random_scene(rng, max_interior=2):
    """A rectangle with a few random interior walls; AP kept off all walls."""
    w = rng.uniform(6, 16)
    h = rng.uniform(5, 12)
    names = ["concrete", "metal", "wood"]
    walls = [
        ((0, 0), (w, 0), names[rng.integers(3)]),
        ((w, 0), (w, h), names[rng.integers(3)]),
        ((0, h), (w, h), names[rng.integers(3)]),
        ((0, 0), (0, h), names[rng.integers(3)]),
    ]
    for _ in range(rng.integers(0, max_interior + 1)):
        x0, y0 = rng.uniform(1, w - 1), rng.uniform(1, h - 1)
        ang = rng.uniform(0, math.pi)
        L = rng.uniform(1, min(w, h) / 2)
        x1 = min(max(x0 + L * math.cos(ang), 0.2), w - 0.2)
        y1 = min(max(y0 + L * math.sin(ang), 0.2), h - 0.2)
        if math.hypot(x1 - x0, y1 - y0) > 0.2:
            walls.append(((x0, y0), (x1, y1), names[rng.integers(3)]))
    while True:
        ap = (rng.uniform(0.5, w - 0.5), rng.uniform(0.5, h - 0.5))
        try:
            return make_scene(walls, ap=ap)
        except Exception:
            continue


def random_point(rng, scene, margin=0.3):
    lo, hi = scene.bounding_box()
    from mtsplan.geometry import point_segment_distance

    while True:
        p = np.array(
            [rng.uniform(lo[0] + margin, hi[0] - margin),
             rng.uniform(lo[1] + margin, hi[1] - margin)]
        )
        if all(point_segment_distance(p, w.a, w.b) > 1e-3 for w in scene.walls):
            return p


@pytest.fixture
def room_a_path():
    assert ROOM_A.exists(), "room_a fixture scene missing"
    return str(ROOM_A)
