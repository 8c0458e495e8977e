"""Command-line entry points.

Every command loads the layered configuration, echoes the effective
document plus a provenance sidecar into its output directory, and exits
with a stable code: 0 success, 2 configuration error, 3 generation
failure, 4 non-finite training loss, 5 port already in use.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, config_dict, config_hash, load_config
from .elastic import CorridorBreakError, OptimizationError, generate_human_trajectory
from .evaluate import evaluate_table1, trigger_density_summary
from .nets import PolicyBundle
from .ppo import NonFiniteLossError, train
from .replan import PlanningError
from .rl_env import CROP_WIDTH
from .simulate import Trace, compute_metrics, dump_trace, load_trace, trigger_heatmap
from .voronoi import RouteError, build_graph, extract_dvd
from .worldmap import (
    WorldGenerationError,
    distance_field,
    generate_random_world,
    grid_from_dict,
    grid_to_dict,
)

EXIT_CONFIG = 2
EXIT_GENERATION = 3
EXIT_NONFINITE = 4
EXIT_PORT = 5

GENERATION_ERRORS = (
    WorldGenerationError,
    RouteError,
    CorridorBreakError,
    OptimizationError,
    PlanningError,
)


class PortInUseError(RuntimeError):
    pass


def _digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path: Path, data) -> None:
    with open(path, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")


def _jsonable(value):
    if isinstance(value, float) and not np.isfinite(value):
        return None
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _emit_run_context(out: Path, args, cfg: RunConfig, inputs: dict | None = None) -> str:
    """Echo the effective config and a provenance sidecar; returns the hash."""
    out.mkdir(parents=True, exist_ok=True)
    h = config_hash(cfg)
    _write_json(out / "config.json", config_dict(cfg))
    prov = {
        "command": args.command,
        "config_hash": h,
        "seed": args.seed,
        "inputs": {
            name: {"path": str(p), "sha256": _digest(p)}
            for name, p in (inputs or {}).items()
        },
    }
    _write_json(out / "provenance.json", prov)
    return h


def _load_world(path_str: str):
    path = Path(path_str)
    if not path.exists():
        raise ConfigError(f"world file not found: {path}")
    try:
        with open(path) as f:
            doc = json.load(f)
        grid = grid_from_dict(doc["grid"])
        start = tuple(doc["start"])
        goal = tuple(doc["goal"])
    except (json.JSONDecodeError, KeyError, ValueError) as e:
        raise ConfigError(f"cannot read world file {path}: {e}") from None
    return grid, start, goal


def _load_checkpoint(path_str: str) -> tuple[PolicyBundle, dict]:
    path = Path(path_str)
    if not path.exists():
        raise ConfigError(f"checkpoint not found: {path}")
    try:
        return PolicyBundle.load(path), PolicyBundle.read_meta(path)
    except ValueError as e:
        raise ConfigError(f"cannot read checkpoint {path}: {e}") from None


def _check_checkpoint_geometry(meta: dict, cfg: RunConfig, grid) -> None:
    """Refuse checkpoints whose observation recipe mismatches this world."""
    checks = [
        ("grid resolution", meta.get("world", {}).get("resolution"), grid.resolution),
        ("crop width", meta.get("obs", {}).get("crop_width"), CROP_WIDTH),
        ("observation horizon", meta.get("reward", {}).get("horizon"), cfg.reward.horizon),
    ]
    for name, recorded, current in checks:
        if recorded is None:
            continue
        if abs(float(recorded) - float(current)) > 1e-9:
            raise ConfigError(
                f"checkpoint {name} {recorded} does not match world/config {current}"
            )


def cmd_gen_world(args, cfg: RunConfig) -> int:
    from . import report

    out = Path(args.out)
    _emit_run_context(out, args, cfg)
    w = cfg.world
    grid = generate_random_world(
        args.seed,
        side=w.side,
        n_obstacles=w.n_obstacles,
        radius_range=w.radius_range,
        start=w.start,
        goal=w.goal,
        resolution=w.resolution,
        robot_radius=w.robot_radius,
        border_walls=w.border_walls,
    )
    doc = {
        "grid": grid_to_dict(grid),
        "start": list(w.start),
        "goal": list(w.goal),
        "seed": args.seed,
        "config_hash": config_hash(cfg),
    }
    _write_json(out / "world.json", doc)
    report.save_world_figure(
        grid, out / "world.png", start=w.start, goal=w.goal, dvd=extract_dvd(grid)
    )
    print(f"wrote {out / 'world.json'}")
    return 0


def cmd_gen_traj(args, cfg: RunConfig) -> int:
    from . import report

    out = Path(args.out)
    grid, start, goal = _load_world(args.world)
    _emit_run_context(out, args, cfg, inputs={"world": Path(args.world)})
    dfield = distance_field(grid)
    kin = cfg.world.kinematics()
    written = []
    trajs = []
    for i in range(args.count):
        seed_i = int(np.random.SeedSequence([args.seed, i]).generate_state(1)[0])
        traj = generate_human_trajectory(
            grid,
            start,
            goal,
            cfg.world.sample_dt,
            seed_i,
            robot_radius=cfg.world.robot_radius,
            kinematics=kin,
        )
        clear = dfield.at_many(traj.points)
        if float(np.min(clear)) < cfg.world.robot_radius:
            raise OptimizationError(
                f"trajectory {i} violates clearance: {float(np.min(clear)):.3f} m"
            )
        path = out / f"traj_{i:03d}.csv"
        np.savetxt(path, traj.points, delimiter=",", header="x,y", comments="")
        written.append(path)
        trajs.append(traj.points)
    report.save_trajectory_figure(
        grid, trajs, out / "trajectories.png", start=start, goal=goal
    )
    print(f"wrote {len(written)} trajectories to {out}")
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    from . import report

    out = Path(args.out)
    inputs = {}
    resume = {}
    if args.resume:
        policy, meta = _load_checkpoint(args.resume)
        resume = {
            "resume_policy": policy,
            "resume_steps": int(meta.get("env_steps", 0)),
            "resume_update": int(meta.get("update", 0)),
        }
        inputs["resume"] = Path(args.resume)
    _emit_run_context(out, args, cfg, inputs=inputs)
    steps = args.steps if args.steps is not None else cfg.train_steps
    _, log_rows = train(
        cfg.world,
        cfg.reward,
        cfg.hyper,
        steps,
        seed=args.seed,
        out_dir=out,
        **resume,
    )
    if log_rows:
        report.save_learning_curve(log_rows, out / "learning_curve.png")
    print(f"trained {steps} steps; checkpoint at {out / 'policy_final.ckpt'}")
    return 0


def _metric_dicts(metrics_list):
    out = []
    for m in metrics_list:
        d = asdict(m)
        d.pop("trigger_positions")
        out.append(_jsonable(d))
    return out


def cmd_eval(args, cfg: RunConfig) -> int:
    from . import report

    out = Path(args.out)
    worlds = [_load_world(p) for p in args.world]
    inputs = {f"world_{i}": Path(p) for i, p in enumerate(args.world)}

    model_specs: list[tuple[str, PolicyBundle | None]] = []
    for ckpt in args.checkpoint or []:
        policy, meta = _load_checkpoint(ckpt)
        for grid, _, _ in worlds:
            _check_checkpoint_geometry(meta, cfg, grid)
        name = Path(ckpt).stem
        model_specs.append((name, policy))
        inputs[f"checkpoint_{name}"] = Path(ckpt)
    if args.baseline_only or not model_specs:
        model_specs = [("baseline-only", None)]
    _emit_run_context(out, args, cfg, inputs=inputs)

    seeds = tuple(range(args.eval_seeds))
    rows: dict[str, object] = {}
    episode_dicts: dict[str, list] = {}
    all_traces: list[Trace] = []
    for name, policy in model_specs:
        res = evaluate_table1(
            policy,
            worlds,
            enumerate_all_simple_paths=not args.no_enumerate,
            seeds=seeds,
            dt=cfg.episode.delta,
            decision_period=cfg.episode.decision_period,
            robot_radius=cfg.world.robot_radius,
            controller=cfg.controller,
            keep_traces=True,
        )
        for model, row in res.rows.items():
            label = name if model == "policy" else "baseline"
            if label not in rows:
                rows[label] = row
                episode_dicts[label] = _metric_dicts(res.episode_metrics[model])
        pol_traces = res.traces.get("policy") or res.traces.get("baseline") or []
        all_traces.extend(pol_traces)
        if args.save_traces:
            tdir = out / "traces"
            tdir.mkdir(parents=True, exist_ok=True)
            for model, traces in res.traces.items():
                label = name if model == "policy" else "baseline"
                for i, trace in enumerate(traces):
                    dump_trace(trace, tdir / f"{label}_{i:03d}.ndjson")

    doc = {
        "config_hash": config_hash(cfg),
        "rows": {k: _jsonable(asdict(v)) for k, v in rows.items()},
        "episodes": episode_dicts,
    }
    _write_json(out / "metrics.json", doc)
    report.save_eval_figure(rows, out / "eval_metrics.png")

    grid = worlds[0][0]
    hist = trigger_heatmap(all_traces, grid, args.bin_size)
    np.savetxt(out / "heatmap.csv", hist, delimiter=",", fmt="%d")
    report.save_heatmap_figure(
        hist, grid, args.bin_size, out / "trigger_heatmap.png", dvd=extract_dvd(grid)
    )
    print(f"wrote {out / 'metrics.json'}")
    return 0


def cmd_heatmap(args, cfg: RunConfig) -> int:
    from . import report

    out = Path(args.out)
    grid, start, goal = _load_world(args.world)
    trace_paths = sorted(Path(p) for p in args.traces)
    if not trace_paths:
        raise ConfigError("no trace files given")
    for p in trace_paths:
        if not p.exists():
            raise ConfigError(f"trace file not found: {p}")
    inputs = {"world": Path(args.world)}
    inputs.update({f"trace_{i}": p for i, p in enumerate(trace_paths)})
    _emit_run_context(out, args, cfg, inputs=inputs)

    traces = [load_trace(p) for p in trace_paths]
    hist = trigger_heatmap(traces, grid, args.bin_size)
    np.savetxt(out / "heatmap.csv", hist, delimiter=",", fmt="%d")
    dvd = extract_dvd(grid)
    report.save_heatmap_figure(hist, grid, args.bin_size, out / "heatmap.png", dvd=dvd)

    graph = build_graph(dvd, grid, start, goal, cfg.world.robot_radius)
    positions = np.vstack(
        [compute_metrics(t).trigger_positions for t in traces]
    ) if traces else np.zeros((0, 2))
    summary = trigger_density_summary(positions, graph)
    summary["config_hash"] = config_hash(cfg)
    _write_json(out / "density.json", summary)
    print(f"wrote {out / 'heatmap.csv'} ({int(hist.sum())} triggers)")
    return 0


def cmd_replay(args, cfg: RunConfig) -> int:
    from . import report

    out = Path(args.out)
    trace_path = Path(args.trace)
    if not trace_path.exists():
        raise ConfigError(f"trace file not found: {trace_path}")
    inputs = {"trace": trace_path}
    grid = None
    if args.world:
        grid, _, _ = _load_world(args.world)
        inputs["world"] = Path(args.world)
    _emit_run_context(out, args, cfg, inputs=inputs)

    trace = load_trace(trace_path)
    metrics = compute_metrics(trace)
    d = asdict(metrics)
    d["trigger_positions"] = metrics.trigger_positions.tolist()
    doc = {"config_hash": config_hash(cfg), "metrics": _jsonable(d)}
    _write_json(out / "metrics.json", doc)
    report.save_replay_figure(trace, out / "replay.png", grid=grid)
    print(
        f"replayed {trace_path}: success={metrics.success} "
        f"t_total={metrics.t_total:.1f}s e_med={metrics.e_med:.3f}"
    )
    return 0


def cmd_serve(args, cfg: RunConfig) -> int:
    from . import server

    out = Path(args.out)
    grid, start, goal = _load_world(args.world)
    policy = None
    inputs = {"world": Path(args.world)}
    if args.checkpoint:
        policy, meta = _load_checkpoint(args.checkpoint)
        _check_checkpoint_geometry(meta, cfg, grid)
        inputs["checkpoint"] = Path(args.checkpoint)
    _emit_run_context(out, args, cfg, inputs=inputs)
    if args.pace < 0.0:
        raise ConfigError("pace must be non-negative")
    server.serve(
        grid,
        start,
        goal,
        cfg,
        policy=policy,
        host=args.host,
        port=args.port,
        trace_dir=out,
        pace=args.pace,
    )
    return 0


def _add_common(p: argparse.ArgumentParser, default_out: str) -> None:
    p.add_argument("--config", help="JSON or TOML config file")
    p.add_argument("--profile", default="desk", help="config profile (desk, paper)")
    p.add_argument("--seed", type=int, default=0, help="run seed")
    p.add_argument("--out", default=default_out, help="output directory")
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="dotted config override, e.g. reward.beta=0.5",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coneplan",
        description="Shared-control planning: worlds, trajectories, training, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-world", help="generate a random occupancy world")
    _add_common(p, "out/gen-world")
    p.set_defaults(fn=cmd_gen_world)

    p = sub.add_parser("gen-traj", help="sample operator trajectories on a world")
    _add_common(p, "out/gen-traj")
    p.add_argument("--world", required=True, help="world.json from gen-world")
    p.add_argument("--count", type=int, default=1, help="number of trajectories")
    p.set_defaults(fn=cmd_gen_traj)

    p = sub.add_parser("train", help="train the replanning policy")
    _add_common(p, "out/train")
    p.add_argument("--steps", type=int, help="environment steps (default from config)")
    p.add_argument("--beta", type=float, help="cone-opening regularization weight")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="benchmark checkpoints against the baseline")
    _add_common(p, "out/eval")
    p.add_argument("--world", action="append", required=True, help="world.json (repeatable)")
    p.add_argument("--checkpoint", action="append", help="policy checkpoint (repeatable)")
    p.add_argument("--baseline-only", action="store_true", help="skip policy rows")
    p.add_argument(
        "--no-enumerate",
        action="store_true",
        help="sample one route per seed instead of enumerating all simple paths",
    )
    p.add_argument("--eval-seeds", type=int, default=3, help="number of via-point seeds")
    p.add_argument("--bin-size", type=float, default=0.25, help="heatmap bin size [m]")
    p.add_argument("--save-traces", action="store_true", help="write episode traces")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("heatmap", help="trigger-location histogram from traces")
    _add_common(p, "out/heatmap")
    p.add_argument("--world", required=True, help="world.json the traces ran on")
    p.add_argument("--traces", nargs="+", required=True, help="trace NDJSON files")
    p.add_argument("--bin-size", type=float, default=0.25, help="bin size [m]")
    p.set_defaults(fn=cmd_heatmap)

    p = sub.add_parser("replay", help="recompute metrics and render a trace")
    _add_common(p, "out/replay")
    p.add_argument("trace", help="episode trace NDJSON")
    p.add_argument("--world", help="world.json for the map background")
    p.set_defaults(fn=cmd_replay)

    p = sub.add_parser("serve", help="serve live teleoperation sessions")
    _add_common(p, "out/serve")
    p.add_argument("--world", required=True, help="world.json to drive in")
    p.add_argument("--checkpoint", help="replanning policy checkpoint")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument(
        "--pace",
        type=float,
        default=1.0,
        help="real seconds per simulated second (0 = free-run)",
    )
    p.set_defaults(fn=cmd_serve)

    return parser


def _parse_overrides(args) -> dict:
    overrides: dict[str, object] = {}
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if getattr(args, "beta", None) is not None:
        overrides["reward.beta"] = args.beta
    return overrides


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, _parse_overrides(args), profile=args.profile)
        return args.fn(args, cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except GENERATION_ERRORS as e:
        print(f"generation failed: {e}", file=sys.stderr)
        return EXIT_GENERATION
    except NonFiniteLossError as e:
        print(f"training diverged: {e}", file=sys.stderr)
        return EXIT_NONFINITE
    except PortInUseError as e:
        print(f"port in use: {e}", file=sys.stderr)
        return EXIT_PORT


if __name__ == "__main__":
    sys.exit(main())
