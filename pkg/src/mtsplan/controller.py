"""Pipeline orchestration and the two-level fallback state machine.

The long-timescale path (heatmap -> sensing -> clustering -> placement)
runs once per deployment; the short-timescale path (sample, conditional
mean, vote) re-runs whenever monitoring sees a user fall below the
blind-spot threshold. A persistent shortfall escalates from phase
re-optimization to an operator alert for re-modeling.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .blindspot import Clustering, capacity_kmeans, sense
from .config import RunConfig
from .csm import SampleLog, SimulationOracle, decide_from_log, draw_samples, majority_vote
from .placement import DeploymentPlan, empty_plan, greedy_deploy, virtual_heatmap
from .raytrace import Heatmap, channel_matrix, combined_rss_values, direct_rss_map, field_matrix, rss_dbm
from .scene import Material, Scene, Wall, load_scene, make_grid

MODE_NORMAL = "normal"
MODE_PHASE_REOPT = "phase_reopt"
MODE_RECAPTURE_ALERT = "recapture_alert"

ACTION_NONE = "none"
ACTION_TRIGGER_CSM = "trigger-csm"
ACTION_ALERT_OPERATOR = "alert-operator"


@dataclass(frozen=True)
class FallbackState:
    mode: str = MODE_NORMAL
    consecutive_below: int = 0


class PipelineError(RuntimeError):
    """A pipeline stage failed; carries the stage tag."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def monitor_step(state: FallbackState, per_user_rss, delta: float, patience: int):
    """One monitoring epoch. Returns (new_state, action).

    Healthy epochs reset to normal operation; the first below-threshold
    epoch triggers a phase re-optimization; after `patience` consecutive
    below-threshold epochs the machine escalates to the operator alert,
    which is absorbing until an external reset.
    """
    rss = [float(v) for v in per_user_rss]
    if not rss:
        raise ValueError("monitor_step needs at least one user")
    if state.mode == MODE_RECAPTURE_ALERT:
        return state, ACTION_NONE
    if min(rss) >= delta:
        return FallbackState(MODE_NORMAL, 0), ACTION_NONE
    if state.mode == MODE_NORMAL:
        return FallbackState(MODE_PHASE_REOPT, 1), ACTION_TRIGGER_CSM
    below = state.consecutive_below + 1
    if below >= patience:
        return FallbackState(MODE_RECAPTURE_ALERT, below), ACTION_ALERT_OPERATOR
    return FallbackState(MODE_PHASE_REOPT, below), ACTION_TRIGGER_CSM


def reset_fallback() -> FallbackState:
    """External reset after the operator re-captures the environment."""
    return FallbackState(MODE_NORMAL, 0)


@dataclass(frozen=True)
class MonitorEpochReport:
    epoch: int
    per_user_rss_dbm: tuple
    min_rss_dbm: float
    mode: str
    action: str


@dataclass
class DeploymentReport:
    scene_file: str
    config: RunConfig
    scene: Scene
    grid: object
    before: Heatmap
    after: Heatmap
    blind_before: tuple
    blind_after: tuple
    clustering: Clustering | None
    plan: DeploymentPlan
    bits: np.ndarray
    bits_source: str
    users: np.ndarray
    user_rss_before: np.ndarray
    user_rss_after: np.ndarray
    sample_log: SampleLog | None
    monitor_epochs: tuple = ()

    @property
    def exhausted(self) -> bool:
        """Panel cap reached while blind spots remain."""
        return self.plan.M > 0 and len(self.blind_after) > 0


def build_oracle(scene: Scene, plan: DeploymentPlan, users, kappa=None) -> SimulationOracle:
    users = np.asarray(users, dtype=float).reshape(-1, 2)
    direct, a, b = channel_matrix(scene, plan, users, kappa=kappa)
    return SimulationOracle(direct=direct, a=a, b=b, tx_power_dbm=scene.tx_power_dbm)


def _associate_users(plan: DeploymentPlan, users: np.ndarray) -> list:
    """users[u] -> nearest pose index (ties to the lowest index)."""
    centers = np.array([pose.center for pose in plan.poses])
    d = np.hypot(
        users[:, None, 0] - centers[None, :, 0],
        users[:, None, 1] - centers[None, :, 1],
    )
    return [int(k) for k in d.argmin(axis=1)]


def optimize_phases(scene: Scene, plan: DeploymentPlan, users, config: RunConfig,
                    seed: int | None = None):
    """Sample, solve per user, vote, and apply the zero-vector safety net.

    Returns (bits, source, log) where source records whether the voted
    vector or the all-zero fallback won on minimum per-user RSS.
    """
    if plan.M == 0:
        return np.zeros(0, dtype=np.uint8), "empty-plan", None
    users = np.asarray(users, dtype=float).reshape(-1, 2)
    if users.shape[0] == 0:
        raise ValueError("phase optimization needs at least one user")
    seed = config.seed if seed is None else seed
    oracle = build_oracle(scene, plan, users, kappa=config.effective_kappa)
    samples = draw_samples(plan.n_atoms, config.samples, seed)
    log = SampleLog(bits=samples, rss=oracle.evaluate_batch(samples))
    votes = np.stack([decide_from_log(log, user=u) for u in range(users.shape[0])])

    if config.associate_nearest:
        owner = _associate_users(plan, users)
        voted = np.zeros(plan.n_atoms, dtype=np.uint8)
        for k in range(plan.M):
            group = [u for u in range(users.shape[0]) if owner[u] == k]
            if group:
                sl = plan.atom_slice(k)
                voted[sl] = majority_vote(votes[group][:, sl])
    else:
        voted = majority_vote(votes)

    zero = np.zeros(plan.n_atoms, dtype=np.uint8)
    score_voted = float(oracle.evaluate(voted).min())
    score_zero = float(oracle.evaluate(zero).min())
    if score_voted >= score_zero:
        return voted, "csm-vote", log
    return zero, "zero-fallback", log


def _user_rss(scene, plan, users, bits, kappa):
    direct, a, b = channel_matrix(scene, plan, users, kappa=kappa)
    return combined_rss_values(direct, a, b, bits, scene.tx_power_dbm)


def run_pipeline(scene_path, config: RunConfig) -> DeploymentReport:
    """Full planning run: model, sense, deploy, optimize, re-evaluate."""

    def stage(name, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (PipelineError, KeyboardInterrupt):
            raise
        except Exception as exc:
            raise PipelineError(name, str(exc)) from exc

    scene = stage("scene", load_scene, scene_path)
    grid = stage("grid", make_grid, scene, config.cell_size)
    threads = config.effective_threads
    before = stage("raytrace", direct_rss_map, scene, grid, threads=threads)
    blind_before = stage("sense", sense, before, config.delta)

    spec = config.mts_spec
    kappa = config.effective_kappa
    if len(blind_before) == 0:
        plan = empty_plan(spec)
        clustering = None
    else:
        plan = stage(
            "deploy",
            greedy_deploy,
            scene,
            grid,
            config.delta,
            spec,
            config.capacity,
            seed=config.seed,
            kappa=kappa,
            threads=threads,
        )
        clustering = None
        if plan.M > 0:
            clustering = capacity_kmeans(
                blind_before.positions,
                plan.n_clusters,
                config.capacity,
                seed=config.seed,
            )

    if config.users:
        users = np.asarray(config.users, dtype=float).reshape(-1, 2)
    elif plan.M > 0:
        users = plan.beam_targets.copy()  # default: one user per beam target
    else:
        users = np.zeros((0, 2))

    if plan.M > 0:
        bits, source, log = stage(
            "optimize", optimize_phases, scene, plan, users, config
        )
        after_values = stage(
            "evaluate",
            lambda: _combined_map(scene, plan, grid, bits, kappa, threads),
        )
        # second safety net, at cell level: the report must never show the
        # former blind cells doing worse than unoptimized (all-zero) phases
        if np.any(bits) and len(blind_before):
            zero_bits = np.zeros_like(bits)
            zero_values = stage(
                "evaluate",
                lambda: _combined_map(scene, plan, grid, zero_bits, kappa, threads),
            )
            jj = [c[1] for c in blind_before.cells]
            ii = [c[0] for c in blind_before.cells]
            if zero_values[jj, ii].min() > after_values[jj, ii].min():
                bits, source, after_values = zero_bits, "zero-fallback", zero_values
        after = Heatmap(grid=grid, values=after_values)
    else:
        bits, source, log = np.zeros(0, dtype=np.uint8), "empty-plan", None
        after = Heatmap(grid=grid, values=before.values.copy())

    blind_after = stage("sense", sense, after, config.delta)

    if users.shape[0] > 0:
        rss_before = rss_dbm(
            field_matrix(scene, scene.ap_position[None, :], users)[0],
            scene.tx_power_dbm,
        )
        rss_after = (
            _user_rss(scene, plan, users, bits, kappa) if plan.M > 0 else rss_before.copy()
        )
    else:
        rss_before = np.zeros(0)
        rss_after = np.zeros(0)

    return DeploymentReport(
        scene_file=os.path.basename(str(scene_path)),
        config=config,
        scene=scene,
        grid=grid,
        before=before,
        after=after,
        blind_before=blind_before.cells,
        blind_after=blind_after.cells,
        clustering=clustering,
        plan=plan,
        bits=bits,
        bits_source=source,
        users=users,
        user_rss_before=np.asarray(rss_before, dtype=float),
        user_rss_after=np.asarray(rss_after, dtype=float),
        sample_log=log,
    )


def _combined_map(scene, plan, grid, bits, kappa, threads):
    centers = grid.cell_centers()
    direct, a, b = channel_matrix(scene, plan, centers, kappa=kappa, threads=threads)
    values = combined_rss_values(direct, a, b, bits, scene.tx_power_dbm)
    return values.reshape(grid.ny, grid.nx)


def perturbation_wall(scene: Scene, user, length: float = 3.0, offset: float = 0.5) -> tuple:
    """An occluding segment between a user and the AP, for monitor drills:
    perpendicular to the AP-user sightline, `offset` meters from the user."""
    user = np.asarray(user, dtype=float)
    to_ap = scene.ap_position - user
    norm = np.hypot(*to_ap)
    if norm < 1e-9:
        raise ValueError("user coincides with the AP")
    u = to_ap / norm
    perp = np.array([-u[1], u[0]])
    center = user + offset * u
    return (center - 0.5 * length * perp, center + 0.5 * length * perp)


def with_extra_wall(scene: Scene, a, b, material_name: str = "metal") -> Scene:
    """Copy of the scene with one additional occluding wall."""
    mat = None
    for w in scene.walls:
        if w.material.name == material_name:
            mat = w.material
            break
    if mat is None:
        from .scene import BUILTIN_MATERIALS
        import math as _math

        mag, ph = BUILTIN_MATERIALS[material_name]
        mat = Material(material_name, mag * complex(_math.cos(ph), _math.sin(ph)))
    return Scene(
        walls=scene.walls + (Wall(a, b, mat),),
        ap_position=scene.ap_position,
        tx_power_dbm=scene.tx_power_dbm,
        carrier_frequency_hz=scene.carrier_frequency_hz,
        feasible_segments=scene.feasible_segments,
    )


def simulate_monitoring(scene: Scene, plan: DeploymentPlan, bits, users,
                        config: RunConfig, epochs: int, perturb_epoch: int | None = None,
                        perturb_wall=None):
    """Drive the fallback machine for a number of epochs.

    From perturb_epoch onward the scene gains an extra occluding wall
    (auto-placed in front of the worst user unless given explicitly).
    Every trigger-csm action re-optimizes the phases on the current scene;
    the new phases take effect at the next epoch.

    Returns (epoch_reports, final_bits).
    """
    users = np.asarray(users, dtype=float).reshape(-1, 2)
    if users.shape[0] == 0:
        raise ValueError("monitoring needs at least one user")
    kappa = config.effective_kappa
    cur_bits = np.asarray(bits, dtype=np.uint8).copy()
    state = FallbackState()
    reports = []

    perturbed = None
    if perturb_epoch is not None:
        if perturb_wall is None:
            base_rss = _user_rss(scene, plan, users, cur_bits, kappa)
            worst = users[int(np.argmin(base_rss))]
            perturb_wall = perturbation_wall(scene, worst)
        perturbed = with_extra_wall(scene, perturb_wall[0], perturb_wall[1])

    for epoch in range(epochs):
        cur_scene = perturbed if (perturb_epoch is not None and epoch >= perturb_epoch) else scene
        rss = _user_rss(cur_scene, plan, users, cur_bits, kappa)
        state, action = monitor_step(state, rss, config.delta, config.patience)
        reports.append(
            MonitorEpochReport(
                epoch=epoch,
                per_user_rss_dbm=tuple(float(v) for v in rss),
                min_rss_dbm=float(np.min(rss)),
                mode=state.mode,
                action=action,
            )
        )
        if action == ACTION_TRIGGER_CSM and plan.M > 0:
            cur_bits, _, _ = optimize_phases(
                cur_scene, plan, users, config, seed=config.seed + 1009 * (epoch + 1)
            )
    return tuple(reports), cur_bits
