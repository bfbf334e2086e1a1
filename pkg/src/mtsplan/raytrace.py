"""Deterministic image-method ray tracer (direct + single bounce).

Produces the direct RSS heatmap and the per-atom cascaded panel channels;
every downstream optimizer treats these outputs as a black-box RSS oracle.
Propagation model: free-space amplitude lambda/(4*pi*d) with phase
e^{-j 2 pi d / lambda}, one reflection coefficient per bounce, reflection
order capped at 1. Path lengths are clamped below at MIN_DISTANCE before
amplitude evaluation to avoid the near-field singularity.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .geometry import EPS, as_point, blocked_by_walls, cross, reflect_across_line
from .scene import GridMap, Scene

MIN_DISTANCE = 0.1
# Value standing in for -inf dBm in emitted files.
NO_COVERAGE_DBM = -999.0


@dataclass(frozen=True)
class MtsSpec:
    """Panel geometry: rows x cols atoms, spacing between atom centers.

    In plan view only the column direction (along the host wall) carries
    geometry; atoms in the same column share a 2D position but remain
    independent phase bits.
    """

    rows: int = 21
    cols: int = 14
    spacing: float = 0.06
    phase_options: tuple = (0.0, math.pi)

    def __post_init__(self):
        if self.rows * self.cols < 1:
            raise ValueError("panel needs at least one atom")
        if self.spacing <= 0:
            raise ValueError("atom spacing must be positive")

    @property
    def n_atoms(self) -> int:
        return self.rows * self.cols

    @property
    def extent(self) -> float:
        """Length occupied along the host wall."""
        return self.cols * self.spacing


@dataclass(frozen=True)
class Path:
    """A propagation path tx -> (bounce) -> rx with its complex gain."""

    vertices: tuple
    gain: complex
    length: float


@dataclass(frozen=True)
class ChannelSet:
    """Direct amplitude plus per-atom (AP->atom, atom->rx) amplitudes."""

    direct: complex
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=complex))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=complex))
        if self.a.shape != self.b.shape:
            raise ValueError("cascaded legs a and b must have equal length")

    @property
    def n_atoms(self) -> int:
        return self.a.shape[0]


@dataclass
class Heatmap:
    """Per-cell predicted RSS in dBm; unreachable cells hold -inf."""

    grid: GridMap
    values: np.ndarray  # (ny, nx)

    def value(self, i: int, j: int) -> float:
        return float(self.values[j, i])

    def flat(self) -> np.ndarray:
        """Row-major (j outer) flat view of the values."""
        return self.values.reshape(-1)

    def write_csv(self, path) -> None:
        """Emit `i,j,x,y,rss_dbm` rows, row-major, 6 decimal places."""
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write("i,j,x,y,rss_dbm\n")
            for i, j in self.grid.indices():
                x, y = self.grid.center(i, j)
                v = self.values[j, i]
                if not np.isfinite(v):
                    v = NO_COVERAGE_DBM
                f.write(f"{i},{j},{x:.6f},{y:.6f},{v:.6f}\n")


def phase_factors(bits) -> np.ndarray:
    """Unit factors e^{j theta} for binary bits under the {0, pi} convention."""
    bits = np.asarray(bits)
    return 1.0 - 2.0 * bits.astype(float)


def _vertex(p) -> tuple:
    return (float(p[0]), float(p[1]))


def _friis_amplitude(length, wavelength):
    """Complex free-space gain for a (possibly clamped) path length."""
    L = np.maximum(length, MIN_DISTANCE)
    return (wavelength / (4.0 * math.pi * L)) * np.exp(-2j * math.pi * L / wavelength)


def los_clear(scene: Scene, p, q) -> bool:
    """True iff the open segment (p, q) intersects no wall."""
    p, q = as_point(p), as_point(q)
    if np.allclose(p, q):
        raise ValueError("los_clear requires distinct endpoints")
    return not bool(
        blocked_by_walls(p[None, :], q[None, :], scene.wall_a, scene.wall_b)[0]
    )


def _bounce_point(scene: Scene, wall_idx: int, tx, rx):
    """Reflection point of the single-bounce path tx -> wall -> rx.

    Returns (point, u) or None when the image ray misses the wall segment,
    the endpoints straddle the wall line, or the geometry is degenerate.
    """
    wall = scene.walls[wall_idx]
    a, b = wall.a, wall.b
    e = b - a
    tx, rx = as_point(tx), as_point(rx)
    img = reflect_across_line(tx, a, b)
    d = rx - img
    den = cross(d, e)
    if abs(den) < EPS * EPS:
        return None
    f = a - img
    t = cross(f, e) / den
    u = cross(f, d) / den
    if not (EPS < t < 1.0 - EPS and EPS < u < 1.0 - EPS):
        return None
    return a + u * e, float(u)


def trace_paths(scene: Scene, tx, rx, max_order: int = 1):
    """All propagation paths tx -> rx up to the given reflection order.

    Order 0 yields the line-of-sight path when unoccluded; order 1 adds
    every valid single-bounce specular path found by the image method.
    """
    if max_order not in (0, 1):
        raise ValueError("only reflection orders 0 and 1 are supported")
    tx, rx = as_point(tx), as_point(rx)
    lam = scene.wavelength
    paths = []
    d = float(np.hypot(*(rx - tx)))
    if d > EPS and los_clear(scene, tx, rx):
        paths.append(
            Path(vertices=(_vertex(tx), _vertex(rx)), gain=complex(_friis_amplitude(d, lam)), length=d)
        )
    if max_order == 0:
        return paths
    for w in range(len(scene.walls)):
        hit = _bounce_point(scene, w, tx, rx)
        if hit is None:
            continue
        r_point, _ = hit
        if blocked_by_walls(tx[None, :], r_point[None, :], scene.wall_a, scene.wall_b)[0]:
            continue
        if blocked_by_walls(r_point[None, :], rx[None, :], scene.wall_a, scene.wall_b)[0]:
            continue
        length = float(np.hypot(*(r_point - tx)) + np.hypot(*(rx - r_point)))
        gamma = scene.walls[w].material.reflection_coefficient
        paths.append(
            Path(
                vertices=(_vertex(tx), _vertex(r_point), _vertex(rx)),
                gain=complex(gamma * _friis_amplitude(length, lam)),
                length=length,
            )
        )
    return paths


def field_matrix(scene: Scene, sources, targets, excluded_spans=()):
    """Total complex gain between every source and target, order <= 1.

    excluded_spans is a list of (wall_index, t0, t1): single-bounce paths
    whose reflection point falls inside such a span are dropped (used to
    carve deployed panels out of the passive walls they replace).

    Returns a complex (S, T) matrix.
    """
    sources = np.atleast_2d(np.asarray(sources, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    S, T = sources.shape[0], targets.shape[0]
    lam = scene.wavelength
    wall_a, wall_b = scene.wall_a, scene.wall_b

    src = np.repeat(sources, T, axis=0)        # (S*T, 2)
    tgt = np.tile(targets, (S, 1))             # (S*T, 2)
    diff = tgt - src
    dist = np.hypot(diff[:, 0], diff[:, 1])
    visible = (dist > EPS) & ~blocked_by_walls(src, tgt, wall_a, wall_b)
    total = np.where(visible, _friis_amplitude(dist, lam), 0.0 + 0.0j)

    for w in range(len(scene.walls)):
        a, b = wall_a[w], wall_b[w]
        e = b - a
        img = reflect_across_line(sources, a, b)      # (S, 2)
        img_rep = np.repeat(img, T, axis=0)           # (S*T, 2)
        d = tgt - img_rep
        den = cross(d, e)
        f = a[None, :] - img_rep
        with np.errstate(divide="ignore", invalid="ignore"):
            t = cross(f, e) / den
            u = cross(f, d) / den
        valid = (
            (np.abs(den) > EPS * EPS)
            & (t > EPS)
            & (t < 1.0 - EPS)
            & (u > EPS)
            & (u < 1.0 - EPS)
        )
        for span_wall, t0, t1 in excluded_spans:
            if span_wall == w:
                valid &= ~((u >= t0 - EPS) & (u <= t1 + EPS))
        idx = np.nonzero(valid)[0]
        if idx.size == 0:
            continue
        r_point = a[None, :] + u[idx, None] * e[None, :]
        ok1 = ~blocked_by_walls(src[idx], r_point, wall_a, wall_b)
        sub, r_sub = idx[ok1], r_point[ok1]
        if sub.size == 0:
            continue
        ok2 = ~blocked_by_walls(r_sub, tgt[sub], wall_a, wall_b)
        sub, r_sub = sub[ok2], r_sub[ok2]
        if sub.size == 0:
            continue
        leg1 = np.hypot(*(r_sub - src[sub]).T)
        leg2 = np.hypot(*(tgt[sub] - r_sub).T)
        gamma = scene.gammas[w]
        total[sub] += gamma * _friis_amplitude(leg1 + leg2, lam)

    return total.reshape(S, T)


def _field_to_targets(scene, source, targets, excluded_spans=(), threads=1):
    """field_matrix for a single source, optionally chunked across threads."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    n = targets.shape[0]
    if threads <= 1 or n < 256:
        return field_matrix(scene, source, targets, excluded_spans)[0]
    chunks = np.array_split(np.arange(n), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = pool.map(
            lambda ix: field_matrix(scene, source, targets[ix], excluded_spans)[0],
            [c for c in chunks if c.size],
        )
    return np.concatenate(list(parts))


def rss_dbm(field, tx_power_dbm):
    """tx_power + 20*log10(|field|); zero field maps to -inf."""
    mag = np.abs(np.asarray(field))
    with np.errstate(divide="ignore"):
        return tx_power_dbm + 20.0 * np.log10(mag)


def direct_rss_map(scene: Scene, grid: GridMap, threads: int = 1) -> Heatmap:
    """Predicted RSS from the AP alone at every cell center."""
    centers = grid.cell_centers()
    fld = _field_to_targets(scene, scene.ap_position[None, :], centers, threads=threads)
    values = rss_dbm(fld, scene.tx_power_dbm).reshape(grid.ny, grid.nx)
    return Heatmap(grid=grid, values=values)


def channel_matrix(scene: Scene, plan, rx_points, kappa=None, threads: int = 1):
    """Cascaded channels for a deployment plan at a batch of receivers.

    Returns (direct, a, b): direct (R,) complex AP->rx amplitudes, a (N,)
    AP->atom amplitudes (receiver-independent), b (N, R) atom->rx
    amplitudes. Each leg is scaled by the per-atom coupling factor kappa
    (defaults to the atom spacing). Bounce paths whose reflection point
    falls inside any deployed panel span are excluded throughout, since
    those wall pieces are replaced by the panels themselves.
    """
    rx_points = np.atleast_2d(np.asarray(rx_points, dtype=float))
    spec = plan.spec
    if kappa is None:
        kappa = spec.spacing
    spans = [pose.span() for pose in plan.poses]
    ap = scene.ap_position[None, :]

    direct = field_matrix(scene, ap, rx_points, spans)[0]
    if plan.M == 0:
        return direct, np.zeros(0, dtype=complex), np.zeros((0, rx_points.shape[0]), dtype=complex)

    cols_pos = plan.column_positions()
    a_cols = kappa * field_matrix(scene, ap, cols_pos, spans)[0]
    b_cols = kappa * field_matrix(scene, cols_pos, rx_points, spans)
    a = plan.expand_columns(a_cols)
    b = plan.expand_columns(b_cols)
    return direct, a, b


def cascaded_channels(scene: Scene, plan, rx, kappa=None) -> ChannelSet:
    """ChannelSet for a single receiver point (see channel_matrix)."""
    for pose in plan.poses:
        if not pose.inside_feasible(scene):
            raise ValueError("pose lies outside the feasible mounting region")
    direct, a, b = channel_matrix(scene, plan, as_point(rx)[None, :], kappa=kappa)
    return ChannelSet(direct=complex(direct[0]), a=a, b=b[:, 0])


def combined_rss(channels: ChannelSet, bits, tx_power_dbm: float) -> float:
    """RSS with the panel atoms set to the given binary phases.

    bits: one {0, 1} entry per atom; 0 maps to phase 0 and 1 to phase pi.
    """
    bits = np.asarray(bits)
    if bits.shape[0] != channels.n_atoms:
        raise ValueError(
            f"phase vector length {bits.shape[0]} != atom count {channels.n_atoms}"
        )
    fld = channels.direct + np.sum(channels.a * phase_factors(bits) * channels.b)
    return float(rss_dbm(fld, tx_power_dbm))


def combined_rss_values(direct, a, b, bits, tx_power_dbm):
    """Vectorized combined_rss over receivers: direct (R,), b (N, R)."""
    factors = phase_factors(np.asarray(bits))
    fld = direct + (a * factors) @ b
    return rss_dbm(fld, tx_power_dbm)
