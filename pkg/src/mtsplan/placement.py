"""Panel count and placement: specular geometry plus the greedy loop.

Each blind-spot cluster gets one wall-mounted panel, ideally at the point
where the angle of arrival from the AP equals the angle of departure
toward the cluster centroid. Infeasible specular points fall back to the
nearest feasible mounting position. The greedy driver starts from the
pigeonhole minimum panel count and keeps adding panels until a virtual
redeployment clears every blind spot (or a hard cap is reached).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .blindspot import capacity_kmeans, sense
from .geometry import as_point, project_to_segment, reflect_across_line, side_of_line
from .raytrace import (
    Heatmap,
    MtsSpec,
    channel_matrix,
    combined_rss_values,
    direct_rss_map,
    los_clear,
)
from .scene import GridMap, Scene, project_to_feasible

log = logging.getLogger(__name__)

# Cheap insurance against float dust when comparing wall parameters.
_T_EPS = 1e-9


class PlacementError(ValueError):
    """Raised when no feasible mounting room remains for a panel."""


@dataclass(frozen=True)
class MtsPose:
    """A mounted panel: wall, parametric center, and occupied extent."""

    wall_index: int
    t_center: float
    center: np.ndarray
    tangent: np.ndarray
    extent: float
    t_half: float  # extent / (2 * wall length)

    def span(self):
        """(wall_index, t0, t1) interval occupied on the host wall."""
        return (self.wall_index, self.t_center - self.t_half, self.t_center + self.t_half)

    def inside_feasible(self, scene: Scene) -> bool:
        _, t0, t1 = self.span()
        return any(
            seg.wall == self.wall_index
            and seg.t0 - _T_EPS <= t0
            and t1 <= seg.t1 + _T_EPS
            for seg in scene.feasible_segments
        )

    def overlaps(self, other: "MtsPose") -> bool:
        if self.wall_index != other.wall_index:
            return False
        _, a0, a1 = self.span()
        _, b0, b1 = other.span()
        return a0 < b1 - _T_EPS and b0 < a1 - _T_EPS


def pose_on_wall(scene: Scene, wall_index: int, t_center: float, extent: float) -> MtsPose:
    wall = scene.walls[wall_index]
    return MtsPose(
        wall_index=wall_index,
        t_center=float(t_center),
        center=wall.point_at(t_center),
        tangent=wall.tangent,
        extent=float(extent),
        t_half=extent / (2.0 * wall.length),
    )


@dataclass(frozen=True)
class DeploymentPlan:
    """Panel poses, their cluster association, and the shared panel spec."""

    poses: tuple
    cluster_of: tuple      # cluster id served by each pose
    beam_targets: np.ndarray  # (M, 2) cluster centroids, one per pose
    spec: MtsSpec
    n_clusters: int = 0    # size of the clustering the ids refer to

    def __post_init__(self):
        if self.n_clusters == 0 and self.poses:
            object.__setattr__(self, "n_clusters", max(self.cluster_of) + 1)
        object.__setattr__(self, "poses", tuple(self.poses))
        object.__setattr__(self, "cluster_of", tuple(self.cluster_of))
        object.__setattr__(
            self,
            "beam_targets",
            np.asarray(self.beam_targets, dtype=float).reshape(-1, 2),
        )
        if len(self.poses) != len(self.cluster_of) or len(self.poses) != self.beam_targets.shape[0]:
            raise ValueError("poses, cluster_of and beam_targets must align")
        for i, p in enumerate(self.poses):
            for q in self.poses[i + 1 :]:
                if p.overlaps(q):
                    raise ValueError("panel poses overlap on a shared wall")

    @property
    def M(self) -> int:
        return len(self.poses)

    @property
    def n_atoms(self) -> int:
        return self.M * self.spec.n_atoms

    def column_positions(self) -> np.ndarray:
        """World position of every atom column, (M * cols, 2).

        Rows stack out of plane, so atoms in one column share a position.
        """
        cols = self.spec.cols
        offsets = (np.arange(cols) - (cols - 1) / 2.0) * self.spec.spacing
        out = np.empty((self.M * cols, 2))
        for k, pose in enumerate(self.poses):
            out[k * cols : (k + 1) * cols] = (
                pose.center[None, :] + offsets[:, None] * pose.tangent[None, :]
            )
        return out

    def expand_columns(self, col_values: np.ndarray) -> np.ndarray:
        """Tile per-column values to per-atom values (row-major per panel)."""
        cols, rows = self.spec.cols, self.spec.rows
        parts = []
        for k in range(self.M):
            block = col_values[k * cols : (k + 1) * cols]
            reps = (rows,) + (1,) * (col_values.ndim - 1)
            parts.append(np.tile(block, reps))
        if not parts:
            shape = (0,) + col_values.shape[1:]
            return np.zeros(shape, dtype=col_values.dtype)
        return np.concatenate(parts, axis=0)

    def atom_slice(self, k: int) -> slice:
        """Index range of pose k's atoms in the full phase vector."""
        n = self.spec.n_atoms
        return slice(k * n, (k + 1) * n)

    def to_dict(self) -> dict:
        return {
            "spec": {
                "rows": self.spec.rows,
                "cols": self.spec.cols,
                "spacing": self.spec.spacing,
            },
            "n_clusters": self.n_clusters,
            "mts": [
                {
                    "wall": pose.wall_index,
                    "t_center": pose.t_center,
                    "center": pose.center.tolist(),
                    "extent": pose.extent,
                    "cluster": self.cluster_of[k],
                    "beam_target": self.beam_targets[k].tolist(),
                }
                for k, pose in enumerate(self.poses)
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict, scene: Scene) -> "DeploymentPlan":
        spec = MtsSpec(
            rows=int(doc["spec"]["rows"]),
            cols=int(doc["spec"]["cols"]),
            spacing=float(doc["spec"]["spacing"]),
        )
        poses, cluster_of, targets = [], [], []
        for m in doc["mts"]:
            poses.append(pose_on_wall(scene, int(m["wall"]), float(m["t_center"]), spec.extent))
            cluster_of.append(int(m["cluster"]))
            targets.append(m["beam_target"])
        return cls(
            poses=tuple(poses),
            cluster_of=tuple(cluster_of),
            beam_targets=np.array(targets, dtype=float).reshape(-1, 2),
            spec=spec,
            n_clusters=int(doc.get("n_clusters", 0)),
        )


def empty_plan(spec: MtsSpec) -> DeploymentPlan:
    return DeploymentPlan(poses=(), cluster_of=(), beam_targets=np.zeros((0, 2)), spec=spec)


def specular_point(scene: Scene, wall_index: int, ap, target):
    """Wall point where angle of arrival from ap equals angle of departure
    toward target, or None when the mirror ray misses the wall segment.

    ap and target must lie strictly on the same side of the wall line.
    """
    wall = scene.walls[wall_index]
    ap, target = as_point(ap), as_point(target)
    side_ap = side_of_line(ap, wall.a, wall.b)
    side_t = side_of_line(target, wall.a, wall.b)
    if abs(side_ap) < 1e-12 or abs(side_t) < 1e-12:
        raise ValueError("ap/target lies on the wall line")
    if side_ap * side_t < 0:
        raise ValueError("ap and target are on opposite sides of the wall")
    img = reflect_across_line(ap, wall.a, wall.b)
    d = target - img
    e = wall.b - wall.a
    den = d[0] * e[1] - d[1] * e[0]
    if abs(den) < 1e-18:
        return None
    f = wall.a - img
    t = (f[0] * e[1] - f[1] * e[0]) / den
    u = (f[0] * d[1] - f[1] * d[0]) / den
    # the reflection point must fall strictly inside the wall segment;
    # meeting it exactly at an endpoint resolves to "no specular point"
    if not (0.0 < t < 1.0 and _T_EPS < u < 1.0 - _T_EPS):
        return None
    return wall.point_at(u)


def _subtract_intervals(lo, hi, blocks):
    """Open intervals of [lo, hi] remaining after removing blocks."""
    pieces = [(lo, hi)]
    for b0, b1 in blocks:
        nxt = []
        for p0, p1 in pieces:
            if b1 <= p0 + _T_EPS or b0 >= p1 - _T_EPS:
                nxt.append((p0, p1))
                continue
            if b0 > p0 + _T_EPS:
                nxt.append((p0, min(b0, p1)))
            if b1 < p1 - _T_EPS:
                nxt.append((max(b1, p0), p1))
        pieces = nxt
    return [(p0, p1) for p0, p1 in pieces if p1 - p0 > _T_EPS]


def _allowed_center_intervals(scene: Scene, spec: MtsSpec, occupied):
    """Per feasible segment: intervals of t where a new panel center fits."""
    out = []
    for seg in scene.feasible_segments:
        wall = scene.walls[seg.wall]
        half = spec.extent / (2.0 * wall.length)
        lo, hi = seg.t0 + half, seg.t1 - half
        if lo > hi + _T_EPS:
            continue
        blocks = []
        for pose in occupied:
            if pose.wall_index != seg.wall:
                continue
            blocks.append((pose.t_center - pose.t_half - half, pose.t_center + pose.t_half + half))
        for piece in _subtract_intervals(lo, hi, blocks):
            out.append((seg.wall, piece[0], piece[1]))
    return out


def _nearest_allowed_pose(scene, spec, occupied, anchor):
    """Feasible, non-overlapping pose whose center is closest to anchor."""
    anchor = as_point(anchor)
    best = None
    for wall_idx, lo, hi in _allowed_center_intervals(scene, spec, occupied):
        wall = scene.walls[wall_idx]
        a, b = wall.point_at(lo), wall.point_at(hi)
        t_sub, point, dist = project_to_segment(anchor, a, b)
        t = lo + t_sub * (hi - lo)
        key = (dist, wall_idx, t)
        if best is None or key < best[0]:
            best = (key, wall_idx, t)
    if best is None:
        raise PlacementError("no feasible room left for the panel")
    return pose_on_wall(scene, best[1], best[2], spec.extent)


def place_for_cluster(scene: Scene, ap, centroid, spec: MtsSpec, occupied=()) -> MtsPose:
    """Pose serving one cluster: specular point if mountable, otherwise the
    nearest feasible position (sliding along walls to clear occupancy)."""
    ap, centroid = as_point(ap), as_point(centroid)
    candidates = []
    for wall_idx in sorted({seg.wall for seg in scene.feasible_segments}):
        try:
            p = specular_point(scene, wall_idx, ap, centroid)
        except ValueError:
            continue
        if p is None:
            continue
        if not los_clear(scene, ap, p):
            continue  # panel cannot see the AP from here
        sees_cluster = los_clear(scene, p, centroid)
        path_len = float(np.hypot(*(p - ap)) + np.hypot(*(centroid - p)))
        candidates.append(((0 if sees_cluster else 1, path_len, wall_idx), p))
    if candidates:
        candidates.sort(key=lambda c: c[0])
        anchor = candidates[0][1]
    else:
        anchor, _ = project_to_feasible(scene, centroid)
    return _nearest_allowed_pose(scene, spec, occupied, anchor)


def virtual_phases(scene: Scene, plan: DeploymentPlan, kappa=None) -> np.ndarray:
    """Quantized conjugate beam per panel toward its own cluster centroid.

    Atom n gets the {0, pi} phase closer to -arg(a_n * b_n) with the
    centroid as receiver, i.e. bit 1 exactly when Re(a_n b_n) < 0.
    """
    if plan.M == 0:
        return np.zeros(0, dtype=np.uint8)
    _, a, b = channel_matrix(scene, plan, plan.beam_targets, kappa=kappa)
    bits = np.zeros(plan.n_atoms, dtype=np.uint8)
    for k in range(plan.M):
        sl = plan.atom_slice(k)
        bits[sl] = (np.real(a[sl] * b[sl, k]) < 0).astype(np.uint8)
    return bits


def virtual_heatmap(scene: Scene, plan: DeploymentPlan, grid: GridMap, kappa=None,
                    threads: int = 1) -> Heatmap:
    """Heatmap with the plan virtually deployed under conjugate phases."""
    if plan.M == 0:
        return direct_rss_map(scene, grid, threads=threads)
    bits = virtual_phases(scene, plan, kappa=kappa)
    centers = grid.cell_centers()
    direct, a, b = channel_matrix(scene, plan, centers, kappa=kappa, threads=threads)
    values = combined_rss_values(direct, a, b, bits, scene.tx_power_dbm)
    return Heatmap(grid=grid, values=values.reshape(grid.ny, grid.nx))


def build_plan(scene: Scene, clustering, spec: MtsSpec) -> DeploymentPlan:
    """One pose per non-empty cluster, large clusters placed first."""
    sizes = clustering.sizes()
    order = sorted(range(clustering.M), key=lambda k: (-sizes[k], k))
    poses, cluster_of, targets = [], [], []
    for k in order:
        if sizes[k] == 0:
            continue
        pose = place_for_cluster(
            scene, scene.ap_position, clustering.centroids[k], spec, occupied=poses
        )
        poses.append(pose)
        cluster_of.append(k)
        targets.append(clustering.centroids[k])
    return DeploymentPlan(
        poses=tuple(poses),
        cluster_of=tuple(cluster_of),
        beam_targets=np.array(targets, dtype=float).reshape(-1, 2),
        spec=spec,
        n_clusters=clustering.M,
    )


def initial_panel_count(n_blind: int, capacity: int) -> int:
    """Pigeonhole minimum: the blind-spot count over the cluster capacity."""
    if capacity < 1:
        raise ValueError("capacity must be at least 1")
    return math.ceil(n_blind / capacity)


def greedy_deploy(scene: Scene, grid: GridMap, delta: float, spec: MtsSpec,
                  C: int, seed: int = 0, kappa=None, m_max=None,
                  threads: int = 1) -> DeploymentPlan:
    """Smallest panel deployment (found greedily) that clears all blind
    spots in the virtual heatmap.

    Starts at M0 = ceil(B / C) and re-clusters the sensed blind spots into
    M clusters after every increment. Returns the last plan when the cap
    m_max (default 4 * M0 + 4) is reached with blind spots remaining; that
    condition is reported, not fatal, and shows up as a non-empty blind
    set when the caller re-senses.
    """
    before = direct_rss_map(scene, grid, threads=threads)
    blind = sense(before, delta)
    if len(blind) == 0:
        return empty_plan(spec)
    B = len(blind)
    M0 = initial_panel_count(B, C)
    if m_max is None:
        m_max = 4 * M0 + 4
    plan = empty_plan(spec)
    remaining = blind
    for M in range(M0, m_max + 1):
        clustering = capacity_kmeans(blind.positions, M, C, seed=seed)
        try:
            plan = build_plan(scene, clustering, spec)
        except PlacementError:
            if M == M0:
                raise  # not even the minimum deployment fits
            log.warning(
                "mounting room exhausted at M=%d with %d blind spot(s) remaining",
                M, len(remaining),
            )
            return plan
        vmap = virtual_heatmap(scene, plan, grid, kappa=kappa, threads=threads)
        remaining = sense(vmap, delta)
        if len(remaining) == 0:
            return plan
    log.warning(
        "panel cap M=%d reached with %d blind spot(s) remaining", m_max, len(remaining)
    )
    return plan
