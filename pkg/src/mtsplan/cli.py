"""Command-line front end.

Subcommands: heatmap, sense, plan, optimize, run. Every flag can also be
set via an MTSPLAN_* environment variable (flags win). Exit codes:
0 success, 2 validation error, 3 pipeline failure, 4 panel cap reached
with blind spots remaining.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .blindspot import sense
from .config import RunConfig
from .controller import (
    DeploymentReport,
    PipelineError,
    build_oracle,
    optimize_phases,
    run_pipeline,
    simulate_monitoring,
)
from .csm import bits_to_hex, draw_samples, exhaustive_solve, greedy_baseline
from .placement import DeploymentPlan, PlacementError, empty_plan, greedy_deploy, virtual_heatmap
from .raytrace import direct_rss_map, rss_dbm
from .report import write_benchmark_csv, write_json, write_report_files
from .scene import SceneError, load_scene, make_grid

ENV_PREFIX = "MTSPLAN_"

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_PIPELINE = 3
EXIT_EXHAUSTED = 4


def _env(name: str):
    return os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"))


def _resolve(args, name: str, default, cast):
    """Flag value if given, else environment, else default."""
    cli_value = getattr(args, name.replace("-", "_"))
    if cli_value is not None:
        return cli_value
    raw = _env(name)
    if raw is not None:
        return cast(raw)
    return default


def _parse_users(text: str) -> tuple:
    users = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        x, y = part.split(",")
        users.append((float(x), float(y)))
    return tuple(users)


def _parse_bool(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "yes", "on")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("scene", help="scene JSON file")
    p.add_argument("-o", "--outdir", default=None, help="output directory (default: .)")
    p.add_argument("--cell-size", type=float, default=None, help="grid cell size, meters")
    p.add_argument("--delta", type=float, default=None, help="blind-spot threshold, dBm")
    p.add_argument("--capacity", type=int, default=None, help="max blind spots per cluster")
    p.add_argument("--mts-rows", type=int, default=None, help="atom rows per panel")
    p.add_argument("--mts-cols", type=int, default=None, help="atom columns per panel")
    p.add_argument("--mts-spacing", type=float, default=None, help="atom spacing, meters")
    p.add_argument("--samples", type=int, default=None, help="phase samples T")
    p.add_argument("--seed", type=int, default=None, help="master random seed")
    p.add_argument("--users", type=str, default=None, help='evaluation positions "x,y;x,y"')
    p.add_argument("--kappa", type=float, default=None, help="per-atom coupling factor")
    p.add_argument("--associate-nearest", action=argparse.BooleanOptionalAction,
                   default=None, help="vote per panel over its nearest users only")
    p.add_argument("--patience", type=int, default=None,
                   help="below-threshold epochs before the operator alert")
    p.add_argument("--threads", type=int, default=None, help="heatmap worker threads")
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=None,
                   help="render PNG figures next to the CSV outputs")


def _config_from_args(args) -> RunConfig:
    users = _resolve(args, "users", (), _parse_users)
    if isinstance(users, str):
        users = _parse_users(users)
    return RunConfig(
        cell_size=_resolve(args, "cell-size", 1.0, float),
        delta=_resolve(args, "delta", -78.0, float),
        capacity=_resolve(args, "capacity", 6, int),
        mts_rows=_resolve(args, "mts-rows", 21, int),
        mts_cols=_resolve(args, "mts-cols", 14, int),
        mts_spacing=_resolve(args, "mts-spacing", 0.06, float),
        samples=_resolve(args, "samples", 1000, int),
        seed=_resolve(args, "seed", 0, int),
        users=users,
        kappa=_resolve(args, "kappa", None, float),
        associate_nearest=_resolve(args, "associate-nearest", False, _parse_bool),
        patience=_resolve(args, "patience", 3, int),
        threads=_resolve(args, "threads", 0, int),
        benchmark=bool(getattr(args, "benchmark", False)),
        figures=_resolve(args, "figures", True, _parse_bool),
    )


def _outdir(args) -> str:
    out = _resolve(args, "outdir", ".", str)
    os.makedirs(out, exist_ok=True)
    return out


def _stem(args) -> str:
    return os.path.splitext(os.path.basename(args.scene))[0]


def cmd_heatmap(args) -> int:
    config = _config_from_args(args)
    scene = load_scene(args.scene)
    grid = make_grid(scene, config.cell_size)
    hm = direct_rss_map(scene, grid, threads=config.effective_threads)
    outdir, stem = _outdir(args), _stem(args)
    csv_path = os.path.join(outdir, f"{stem}.heatmap.csv")
    hm.write_csv(csv_path)
    print(f"wrote {csv_path} ({grid.nx}x{grid.ny} cells)")
    if config.figures:
        from . import figures as figmod

        png_path = os.path.join(outdir, f"{stem}.heatmap.png")
        figmod.render_heatmap(hm, scene, png_path, delta=config.delta)
        print(f"wrote {png_path}")
    return EXIT_OK


def cmd_sense(args) -> int:
    config = _config_from_args(args)
    scene = load_scene(args.scene)
    grid = make_grid(scene, config.cell_size)
    hm = direct_rss_map(scene, grid, threads=config.effective_threads)
    blind = sense(hm, config.delta)
    outdir, stem = _outdir(args), _stem(args)
    csv_path = os.path.join(outdir, f"{stem}.blindspots.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as f:
        f.write("i,j,x,y,rss_dbm\n")
        for (i, j), pos in zip(blind.cells, blind.positions):
            v = hm.value(i, j)
            v = v if np.isfinite(v) else -999.0
            f.write(f"{i},{j},{pos[0]:.6f},{pos[1]:.6f},{v:.6f}\n")
    print(f"{len(blind)} blind spot(s) below {config.delta:g} dBm; wrote {csv_path}")
    return EXIT_OK


def cmd_plan(args) -> int:
    config = _config_from_args(args)
    scene = load_scene(args.scene)
    grid = make_grid(scene, config.cell_size)
    plan = greedy_deploy(
        scene, grid, config.delta, config.mts_spec, config.capacity,
        seed=config.seed, kappa=config.effective_kappa,
        threads=config.effective_threads,
    )
    vmap = virtual_heatmap(scene, plan, grid, kappa=config.effective_kappa,
                           threads=config.effective_threads)
    remaining = sense(vmap, config.delta)

    outdir, stem = _outdir(args), _stem(args)
    plan_path = os.path.join(outdir, f"{stem}.plan.json")
    write_json(plan.to_dict(), plan_path)
    vmap_path = os.path.join(outdir, f"{stem}.virtual.heatmap.csv")
    vmap.write_csv(vmap_path)
    print(f"{plan.M} panel(s) planned; wrote {plan_path} and {vmap_path}")
    if config.figures:
        from . import figures as figmod

        png_path = os.path.join(outdir, f"{stem}.virtual.heatmap.png")
        figmod.render_heatmap(vmap, scene, png_path, plan=plan, delta=config.delta,
                              title="Predicted RSS (virtual deployment)")
        print(f"wrote {png_path}")
    if len(remaining) > 0 and plan.M > 0:
        print(f"warning: {len(remaining)} blind spot(s) remain at the panel cap",
              file=sys.stderr)
        return EXIT_EXHAUSTED
    return EXIT_OK


def _benchmark_rows(oracle, config, n_atoms):
    rows = []

    def add(method, bits):
        rss_mw = oracle.evaluate(bits)
        with np.errstate(divide="ignore"):
            vals = 10.0 * np.log10(rss_mw)
        rows.append((method, float(vals.min()), float(vals.mean())))

    add("zero", np.zeros(n_atoms, dtype=np.uint8))
    rng = np.random.default_rng(config.seed + 7919)
    add("random", rng.integers(0, 2, size=n_atoms, dtype=np.uint8))
    return rows, add


def cmd_optimize(args) -> int:
    config = _config_from_args(args)
    scene = load_scene(args.scene)
    grid = make_grid(scene, config.cell_size)
    if args.plan:
        import json

        with open(args.plan, encoding="utf-8") as f:
            plan = DeploymentPlan.from_dict(json.load(f), scene)
    else:
        plan = greedy_deploy(
            scene, grid, config.delta, config.mts_spec, config.capacity,
            seed=config.seed, kappa=config.effective_kappa,
            threads=config.effective_threads,
        )
    if plan.M == 0:
        print("no panels to optimize (empty plan)")
        return EXIT_OK

    users = np.asarray(config.users or plan.beam_targets, dtype=float).reshape(-1, 2)
    bits, source, log = optimize_phases(scene, plan, users, config)
    oracle = build_oracle(scene, plan, users, kappa=config.effective_kappa)
    with np.errstate(divide="ignore"):
        user_rss = 10.0 * np.log10(oracle.evaluate(bits))

    outdir, stem = _outdir(args), _stem(args)
    doc = {
        "plan": plan.to_dict(),
        "phases": {"n_atoms": plan.n_atoms, "bits_hex": bits_to_hex(bits), "source": source},
        "users": {
            "positions": users.tolist(),
            "rss_dbm": [float(v) for v in user_rss],
            "min_rss_dbm": float(user_rss.min()),
        },
    }
    out_path = os.path.join(outdir, f"{stem}.optimize.json")
    write_json(doc, out_path)
    print(f"optimized {plan.n_atoms} atoms for {users.shape[0]} user(s); wrote {out_path}")

    if args.samples_csv and log is not None:
        log.write_csv(os.path.join(outdir, args.samples_csv))
        print(f"wrote {os.path.join(outdir, args.samples_csv)}")

    if config.benchmark:
        rows, add = _benchmark_rows(oracle, config, plan.n_atoms)
        gbits, _ = greedy_baseline(oracle, plan.n_atoms, config.samples, config.seed)
        add("greedy", gbits)
        add("csm", bits)
        if plan.n_atoms <= 20:
            add("exhaustive", exhaustive_solve(oracle, plan.n_atoms))
        bench_path = os.path.join(outdir, f"{stem}.benchmark.csv")
        write_benchmark_csv(rows, bench_path)
        print(f"wrote {bench_path}")
        if config.figures:
            from . import figures as figmod

            png_path = os.path.join(outdir, f"{stem}.benchmark.png")
            figmod.render_benchmark(rows, png_path)
            print(f"wrote {png_path}")
    return EXIT_OK


def cmd_run(args) -> int:
    config = _config_from_args(args)
    report = run_pipeline(args.scene, config)

    if args.monitor:
        perturb_wall = None
        if args.perturb_wall:
            vals = [float(v) for v in args.perturb_wall.split(",")]
            if len(vals) != 4:
                raise SceneError("--perturb-wall expects x1,y1,x2,y2")
            perturb_wall = (np.array(vals[:2]), np.array(vals[2:]))
        epochs, _ = simulate_monitoring(
            report.scene, report.plan, report.bits, report.users, config,
            epochs=args.monitor, perturb_epoch=args.perturb_epoch,
            perturb_wall=perturb_wall,
        )
        report.monitor_epochs = epochs

    outdir, stem = _outdir(args), _stem(args)
    files = write_report_files(report, outdir, stem)
    if args.samples_csv and report.sample_log is not None:
        report.sample_log.write_csv(os.path.join(outdir, args.samples_csv))
        print(f"wrote {os.path.join(outdir, args.samples_csv)}")
    print(
        f"blind spots: {len(report.blind_before)} before, {len(report.blind_after)} after; "
        f"{report.plan.M} panel(s); wrote {os.path.join(outdir, files['report_json'])}"
    )
    if report.exhausted:
        print("warning: blind spots remain at the panel cap", file=sys.stderr)
        return EXIT_EXHAUSTED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mtsplan",
        description="CSI-free metasurface deployment planner",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("heatmap", help="emit the direct RSS heatmap")
    _add_common(p)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("sense", help="list blind spots below the threshold")
    _add_common(p)
    p.set_defaults(func=cmd_sense)

    p = sub.add_parser("plan", help="decide panel count and placement")
    _add_common(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("optimize", help="optimize panel phases against the RSS oracle")
    _add_common(p)
    p.add_argument("--plan", default=None, help="plan JSON from the plan subcommand")
    p.add_argument("--benchmark", action="store_true",
                   help="also run greedy/zero/random/exhaustive baselines")
    p.add_argument("--samples-csv", default=None, help="emit the sample log CSV")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("run", help="full pipeline: sense, deploy, optimize, report")
    _add_common(p)
    p.add_argument("--monitor", type=int, default=0, metavar="N",
                   help="simulate N monitoring epochs after deployment")
    p.add_argument("--perturb-epoch", type=int, default=None, metavar="K",
                   help="insert an occluding wall from epoch K onward")
    p.add_argument("--perturb-wall", default=None, metavar="X1,Y1,X2,Y2",
                   help="explicit perturbation wall endpoints")
    p.add_argument("--samples-csv", default=None, help="emit the sample log CSV")
    p.set_defaults(func=cmd_run)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SceneError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except PipelineError as exc:
        if isinstance(exc.__cause__, SceneError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    except (PlacementError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
