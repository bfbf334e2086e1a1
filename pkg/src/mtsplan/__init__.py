"""mtsplan: CSI-free metasurface deployment planning for indoor coverage.

Pipeline: predict a gridded RSS heatmap by image-method ray tracing,
sense and cluster blind spots under a capacity constraint, place one
wall-mounted panel per cluster at (or near) the specular point, then
optimize the binary meta-atom phases against the RSS oracle by
conditional sample mean with per-user majority voting.
"""

from .blindspot import BlindSpotSet, Clustering, capacity_kmeans, sense, within_cluster_ssd
from .config import RunConfig
from .controller import (
    FallbackState,
    MonitorEpochReport,
    PipelineError,
    monitor_step,
    optimize_phases,
    run_pipeline,
    simulate_monitoring,
)
from .csm import (
    RssOracle,
    SampleLog,
    SimulationOracle,
    conditional_sample_mean,
    csm_solve,
    decide_from_log,
    draw_samples,
    exhaustive_solve,
    greedy_baseline,
    majority_vote,
)
from .placement import (
    DeploymentPlan,
    MtsPose,
    PlacementError,
    greedy_deploy,
    place_for_cluster,
    specular_point,
    virtual_heatmap,
)
from .raytrace import (
    ChannelSet,
    Heatmap,
    MtsSpec,
    Path,
    cascaded_channels,
    combined_rss,
    direct_rss_map,
    los_clear,
    trace_paths,
)
from .scene import (
    GridMap,
    Material,
    Scene,
    SceneError,
    Wall,
    load_scene,
    make_grid,
    project_to_feasible,
)

__version__ = "0.1.0"

__all__ = [
    "BlindSpotSet",
    "ChannelSet",
    "Clustering",
    "DeploymentPlan",
    "FallbackState",
    "GridMap",
    "Heatmap",
    "Material",
    "MonitorEpochReport",
    "MtsPose",
    "MtsSpec",
    "Path",
    "PipelineError",
    "PlacementError",
    "RssOracle",
    "RunConfig",
    "SampleLog",
    "Scene",
    "SceneError",
    "SimulationOracle",
    "Wall",
    "capacity_kmeans",
    "cascaded_channels",
    "combined_rss",
    "conditional_sample_mean",
    "csm_solve",
    "decide_from_log",
    "direct_rss_map",
    "draw_samples",
    "exhaustive_solve",
    "greedy_baseline",
    "greedy_deploy",
    "load_scene",
    "los_clear",
    "majority_vote",
    "make_grid",
    "monitor_step",
    "optimize_phases",
    "place_for_cluster",
    "project_to_feasible",
    "run_pipeline",
    "sense",
    "simulate_monitoring",
    "specular_point",
    "trace_paths",
    "virtual_heatmap",
    "within_cluster_ssd",
]
