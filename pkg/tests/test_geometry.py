import numpy as np

from mtsplan.geometry import (
    blocked_by_walls,
    project_to_segment,
    reflect_across_line,
    segment_intersection,
    side_of_line,
)


def test_segment_intersection_basic():
    t, u = segment_intersection((0, 0), (2, 2), (0, 2), (2, 0))
    assert abs(t - 0.5) < 1e-12 and abs(u - 0.5) < 1e-12


def test_segment_intersection_parallel_is_none():
    assert segment_intersection((0, 0), (1, 0), (0, 1), (1, 1)) is None
    # colinear overlap also counts as no crossing
    assert segment_intersection((0, 0), (2, 0), (1, 0), (3, 0)) is None


def test_blocked_proper_crossing():
    wa = np.array([[1.0, -1.0]])
    wb = np.array([[1.0, 1.0]])
    assert blocked_by_walls([[0.0, 0.0]], [[2.0, 0.0]], wa, wb)[0]


def test_blocked_miss():
    wa = np.array([[1.0, 1.0]])
    wb = np.array([[1.0, 2.0]])
    assert not blocked_by_walls([[0.0, 0.0]], [[2.0, 0.0]], wa, wb)[0]


def test_grazing_wall_tip_blocks():
    # wall tip exactly on the sightline: conservative rule says occluded
    wa = np.array([[1.0, 0.0]])
    wb = np.array([[1.0, 5.0]])
    assert blocked_by_walls([[0.0, 0.0]], [[2.0, 0.0]], wa, wb)[0]


def test_ray_endpoint_on_wall_does_not_block():
    # a ray terminating on the wall itself is not occluded by that wall
    wa = np.array([[0.0, 0.0]])
    wb = np.array([[2.0, 0.0]])
    assert not blocked_by_walls([[1.0, 3.0]], [[1.0, 0.0]], wa, wb)[0]
    assert not blocked_by_walls([[1.0, 0.0]], [[1.0, 3.0]], wa, wb)[0]


def test_blocked_vectorized_matches_scalar():
    rng = np.random.default_rng(7)
    wa = rng.uniform(0, 10, size=(4, 2))
    wb = wa + rng.uniform(-3, 3, size=(4, 2))
    p = rng.uniform(0, 10, size=(50, 2))
    q = rng.uniform(0, 10, size=(50, 2))
    batch = blocked_by_walls(p, q, wa, wb)
    single = [blocked_by_walls(p[k : k + 1], q[k : k + 1], wa, wb)[0] for k in range(50)]
    assert batch.tolist() == single


def test_project_to_segment():
    t, point, dist = project_to_segment((5, 5), (0, 0), (10, 0))
    assert abs(t - 0.5) < 1e-12
    assert np.allclose(point, [5, 0])
    assert abs(dist - 5) < 1e-12
    # beyond the end clips to the endpoint
    t, point, dist = project_to_segment((12, 1), (0, 0), (10, 0))
    assert t == 1.0 and np.allclose(point, [10, 0])


def test_reflect_across_line_involution():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a, b = rng.uniform(-5, 5, 2), rng.uniform(-5, 5, 2)
        if np.allclose(a, b):
            continue
        p = rng.uniform(-5, 5, 2)
        q = reflect_across_line(p, a, b)
        assert np.allclose(reflect_across_line(q, a, b), p, atol=1e-9)
        # mirror preserves distance to the line
        assert abs(side_of_line(p, a, b) + side_of_line(q, a, b)) < 1e-9


def test_reflect_across_line_batch():
    pts = np.array([[0.0, 1.0], [2.0, 3.0]])
    out = reflect_across_line(pts, (0, 0), (1, 0))
    assert np.allclose(out, [[0, -1], [2, -3]])
