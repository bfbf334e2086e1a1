"""2D segment primitives shared by the ray tracer and the panel placement code.

All coordinates are meters in plan view. Points are length-2 float arrays;
the vectorized routines take (K, 2) stacks and broadcast against the wall
arrays of a scene.
"""
from __future__ import annotations

import numpy as np

# Geometric tolerance. Used both in meters and in parametric units; room
# dimensions are O(10 m), so the two scales stay within a decade.
EPS = 1e-9


def as_point(p) -> np.ndarray:
    return np.asarray(p, dtype=float).reshape(2)


def cross(u, v):
    """z-component of the 2D cross product, broadcasting over leading axes."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def segment_intersection(p, q, a, b):
    """Intersection parameters of segment p->q with segment a->b.

    Returns (t, u) with p + t*(q-p) == a + u*(b-a), or None when the two
    segments are parallel (colinear overlap counts as no crossing).
    The parameters are not range-checked; callers apply their own rules.
    """
    p, q, a, b = as_point(p), as_point(q), as_point(a), as_point(b)
    d = q - p
    e = b - a
    den = cross(d, e)
    if abs(den) < EPS * EPS:
        return None
    f = a - p
    t = cross(f, e) / den
    u = cross(f, d) / den
    return float(t), float(u)


def blocked_by_walls(p, q, wall_a, wall_b):
    """True where the open segment p[k]->q[k] is occluded by some wall.

    A wall blocks when the crossing lies strictly inside the query segment
    (t in (EPS, 1-EPS)) and on the wall including its endpoints
    (u in [-EPS, 1+EPS]); grazing a wall tip therefore counts as occlusion.

    p, q: (K, 2) arrays (a single point broadcasts); wall_a, wall_b: (W, 2).
    Returns a boolean (K,) array. W == 0 yields all-False.
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    q = np.atleast_2d(np.asarray(q, dtype=float))
    wall_a = np.asarray(wall_a, dtype=float).reshape(-1, 2)
    wall_b = np.asarray(wall_b, dtype=float).reshape(-1, 2)
    if wall_a.shape[0] == 0:
        return np.zeros(max(p.shape[0], q.shape[0]), dtype=bool)

    d = q - p                                   # (K, 2)
    e = wall_b - wall_a                         # (W, 2)
    f = wall_a[None, :, :] - p[:, None, :]      # (K, W, 2)
    den = cross(d[:, None, :], e[None, :, :])   # (K, W)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = cross(f, e[None, :, :]) / den
        u = cross(f, d[:, None, :]) / den
    hit = (
        (np.abs(den) > EPS * EPS)
        & (t > EPS)
        & (t < 1.0 - EPS)
        & (u >= -EPS)
        & (u <= 1.0 + EPS)
    )
    return hit.any(axis=1)


def project_to_segment(p, a, b):
    """Closest point on segment a->b to p.

    Returns (t, point, distance) with t clipped to [0, 1].
    """
    p, a, b = as_point(p), as_point(a), as_point(b)
    e = b - a
    L2 = float(e @ e)
    if L2 <= 0.0:
        raise ValueError("degenerate segment")
    t = float(np.clip((p - a) @ e / L2, 0.0, 1.0))
    point = a + t * e
    return t, point, float(np.hypot(*(p - point)))


def reflect_across_line(p, a, b):
    """Mirror image of p across the infinite line through a and b.

    p may be a (K, 2) stack; the result has the same shape.
    """
    p = np.asarray(p, dtype=float)
    a, b = as_point(a), as_point(b)
    e = b - a
    L2 = float(e @ e)
    if L2 <= 0.0:
        raise ValueError("degenerate line")
    rel = p - a
    coeff = np.einsum("...i,i->...", rel, e)
    proj = np.asarray(coeff)[..., None] * e / L2
    return p - 2.0 * (rel - proj)


def side_of_line(p, a, b):
    """Signed side of p relative to the directed line a->b (0 means on it)."""
    p = np.asarray(p, dtype=float)
    a, b = as_point(a), as_point(b)
    return cross(b - a, p - a)


def point_segment_distance(p, a, b) -> float:
    return project_to_segment(p, a, b)[2]
