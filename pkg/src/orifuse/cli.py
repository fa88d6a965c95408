"""Command-line front end.

Subcommands cover the desk-scale experiment protocols: demonstration
generation, learning, via-point adaptation, multi-via fusion, and comparison
sweeps.  Identical configuration and seed produce bitwise-identical output
files.  Flags can also be supplied through ORIFUSE_* environment variables
(see _env_default); explicit flags win over both environment and config.

Exit codes: 0 success, 2 configuration, 3 input parsing, 4 numeric failure,
5 via-domain overlap, 6 output I/O, 1 anything else.
"""

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import demo_gen, fusion, io, kmp, so3
from .errors import (
    ChartBoundaryError,
    ConfigError,
    DegenerateData,
    DomainOverlap,
    FactorizationFailure,
    InconsistentTiming,
    IoError,
    NotARotation,
    OrifuseError,
    ParseError,
    SeriesTooShort,
)
from .pipeline import reproduce_with_via_points

_EXIT_CODES = (
    (ConfigError, 2),
    (ParseError, 3),
    (InconsistentTiming, 3),
    (DomainOverlap, 5),
    (IoError, 6),
    (ChartBoundaryError, 4),
    (NotARotation, 4),
    (DegenerateData, 4),
    (FactorizationFailure, 4),
    (SeriesTooShort, 4),
)


def _env_default(name, cast, fallback=None):
    raw = os.environ.get(f"ORIFUSE_{name}")
    if raw is None or raw == "":
        return fallback
    try:
        return cast(raw)
    except ValueError:
        raise ConfigError(f"environment variable ORIFUSE_{name}={raw!r} is invalid") from None


def _flag_env(name):
    raw = os.environ.get(f"ORIFUSE_{name}", "")
    return raw.strip().lower() in ("1", "true", "yes")


def _add_common(sub):
    sub.add_argument("--config", required=True, help="JSON run configuration")
    sub.add_argument("--out", default=None, help="output directory (env ORIFUSE_OUT)")
    sub.add_argument("--seed", type=int, default=None, help="override the config seed")
    sub.add_argument("--grid", type=int, default=None, help="override the output grid size")


def _out_dir(args):
    out = args.out or _env_default("OUT", str)
    if out is None:
        raise ConfigError("an output directory is required (--out or ORIFUSE_OUT)")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _effective(args, cfg):
    seed = args.seed if args.seed is not None else _env_default("SEED", int, cfg.seed)
    grid = args.grid if args.grid is not None else _env_default("GRID", int, cfg.grid)
    return seed, grid


def _kernel_config(cfg):
    if cfg.lambda_a is None:
        return kmp.KernelConfig(l=cfg.l, lam=cfg.lam)
    return kmp.KernelConfig(l=cfg.l, lam=cfg.lam, lambda_a=cfg.lambda_a, order="pva")


def _aux_frame(cfg, demos):
    if cfg.aux_policy == "first-demo-start":
        return demos[0].rotations[0]
    if cfg.aux_policy == "explicit":
        return cfg.aux_rotation
    if cfg.aux_policy == "via":
        via = cfg.via_points[cfg.aux_via_index or 0]
        return via.target_rotation()
    raise ConfigError(f"aux policy '{cfg.aux_policy}' is not valid for this command")


def _via_specs(cfg, R_aux, lambda_a):
    specs = []
    for via in cfg.via_points:
        variances = np.concatenate([via.orientation_variances(), via.velocity_var])
        if lambda_a is not None:
            acc = via.acceleration_var
            if acc is None:
                acc = np.full(3, 1.0 / lambda_a)
            variances = np.concatenate([variances, acc])
        specs.append(
            kmp.ViaPointSpec(via.t, via.target_rotation(R_aux), via.omega, np.diag(variances))
        )
    return specs


def _grid_times(demos, grid):
    t0 = min(float(d.times[0]) for d in demos)
    t1 = max(float(d.times[-1]) for d in demos)
    return np.linspace(t0, t1, grid)


def _iovps_from_config(cfg, lambda_a=None, strict=False, target_override=None):
    """(baseline, iovps) from a per-iovp config; via 0 is the baseline."""
    if not cfg.via_points:
        return None, []
    entries = []
    for idx, via in enumerate(cfg.via_points):
        rotation = via.target_rotation()
        if target_override is not None and idx == target_override[0]:
            rotation = target_override[1]
        entries.append(
            fusion.IovpSpec(
                via.t,
                rotation,
                via.omega,
                relaxed_axis=None if strict else via.relaxed_axis,
                eps_strict=via.eps_strict,
                eps_loose=via.eps_loose,
                delta_t=via.weight_half_width,
                velocity_var=via.velocity_var,
                orientation_var=None if (via.orientation_var is None or strict) else via.orientation_var,
            )
        )
    return entries[0], entries[1:]


def _cmd_gen_demos(args):
    seed = args.seed if args.seed is not None else _env_default("SEED", int, 0)
    out = Path(args.out or _env_default("OUT", str) or ".")
    out.mkdir(parents=True, exist_ok=True)
    demos = demo_gen.generate_demos(
        args.profile, args.count, seed, duration=args.duration, samples=args.samples
    )
    for i, demo in enumerate(demos):
        io.save_demo(out / f"demo_{i:02d}.csv", demo)
    print(f"wrote {len(demos)} '{args.profile}' demonstrations to {out}")
    return 0


def _cmd_learn(args):
    cfg = io.load_config(args.config)
    seed, grid = _effective(args, cfg)
    out = _out_dir(args)
    demos = io.load_demos(cfg.demo_paths)
    R_aux = _aux_frame(cfg, demos)
    result = reproduce_with_via_points(
        demos, R_aux, [], _kernel_config(cfg), _grid_times(demos, grid),
        n_components=cfg.components, seed=seed, delta_t_via=cfg.delta_t_via,
    )
    io.save_mixture(out / "mixture.json", result.mixture)
    traj = result.trajectory
    io.save_trajectory(out / "trajectory.csv", traj.times, traj.rotations, traj.omega_world)
    io.save_metrics(out / "metrics.csv", {
        "em_iterations": len(result.mixture.log_likelihoods),
        "log_likelihood": float(result.mixture.log_likelihoods[-1]),
        "acceleration_cost": fusion.trajectory_acceleration_cost(traj),
    })
    print(f"learned mixture and reproduction written to {out}")
    return 0


def _cmd_adapt(args):
    cfg = io.load_config(args.config)
    seed, grid = _effective(args, cfg)
    out = _out_dir(args)
    demos = io.load_demos(cfg.demo_paths)
    R_aux = _aux_frame(cfg, demos)
    vias = _via_specs(cfg, R_aux, cfg.lambda_a)
    result = reproduce_with_via_points(
        demos, R_aux, vias, _kernel_config(cfg), _grid_times(demos, grid),
        n_components=cfg.components, seed=seed, delta_t_via=cfg.delta_t_via,
    )
    traj = result.trajectory
    io.save_trajectory(out / "trajectory.csv", traj.times, traj.rotations, traj.omega_world)
    metrics = {"acceleration_cost": fusion.trajectory_acceleration_cost(traj)}
    for idx, (via, spec) in enumerate(zip(cfg.via_points, vias)):
        i = int(np.argmin(np.abs(traj.times - via.t)))
        metrics[f"via{idx}_geodesic_err"] = so3.geodesic_distance(
            traj.rotations[i], spec.rotation
        )
        metrics[f"via{idx}_omega_err"] = float(
            np.linalg.norm(traj.omega_world[i] - spec.omega)
        )
    io.save_metrics(out / "metrics.csv", metrics)
    print(f"adaptation written to {out}")
    return 0


def _fusion_run(cfg, demos, seed, grid, memory, strict=False, target_override=None,
                gmm_cache=None):
    baseline, iovps = _iovps_from_config(cfg, strict=strict, target_override=target_override)
    grid_times = _grid_times(demos, grid)
    components, frames = fusion.build_component_trajectories(
        demos, baseline, iovps, _kernel_config(cfg), grid_times,
        n_components=cfg.components, seed=seed, delta_t_via=cfg.delta_t_via,
        gmm_cache=gmm_cache,
    )
    curves = fusion.weight_curves_for(iovps)
    fused = fusion.fuse(components, curves, memory=memory)
    return fused, components, iovps


def _fusion_metrics(fused, iovps):
    metrics = {"acceleration_cost": fusion.trajectory_acceleration_cost(fused)}
    max_step, median_step = fusion.continuity_stats(fused.rotations)
    metrics["continuity_max_step"] = max_step
    metrics["continuity_median_step"] = median_step
    metrics["continuity_ratio"] = max_step / median_step if median_step > 0 else np.inf
    for k, iovp in enumerate(iovps, start=1):
        i = int(np.argmin(np.abs(fused.times - iovp.t)))
        axis = iovp.relaxed_axis
        if axis is None:
            err = so3.geodesic_distance(fused.rotations[i], iovp.rotation)
        else:
            err = fusion.axis_alignment_error(fused.rotations[i], iovp.rotation, axis)
        metrics[f"iovp{k}_axis_err"] = err
    return metrics


def _cmd_fuse(args):
    cfg = io.load_config(args.config)
    if cfg.aux_policy != "per-iovp":
        raise ConfigError("fuse requires aux_frame policy 'per-iovp'")
    seed, grid = _effective(args, cfg)
    memory = cfg.memory and not (args.no_memory or _flag_env("NO_MEMORY"))
    out = _out_dir(args)
    demos = io.load_demos(cfg.demo_paths)
    fused, components, iovps = _fusion_run(cfg, demos, seed, grid, memory, gmm_cache={})
    for k, comp in enumerate(components):
        io.save_trajectory(
            out / f"component_{k}.csv", comp.times, comp.rotations, comp.omega_world
        )
    io.save_trajectory(
        out / "trajectory.csv", fused.times, fused.rotations, fused.omega_world, fused.weights
    )
    metrics = _fusion_metrics(fused, iovps)
    metrics["memory"] = memory
    io.save_metrics(out / "metrics.csv", metrics)
    print(f"fused trajectory ({len(components)} components) written to {out}")
    return 0


def _cmd_eval(args):
    cfg = io.load_config(args.config)
    if cfg.aux_policy != "per-iovp":
        raise ConfigError("eval compares fusion runs; aux_frame policy must be 'per-iovp'")
    seed, grid = _effective(args, cfg)
    out = _out_dir(args)
    demos = io.load_demos(cfg.demo_paths)
    cache = {}
    fused_i, _, iovps = _fusion_run(cfg, demos, seed, grid, cfg.memory, gmm_cache=cache)
    fused_s, _, _ = _fusion_run(cfg, demos, seed, grid, cfg.memory, strict=True, gmm_cache=cache)
    m_i = _fusion_metrics(fused_i, iovps)
    m_s = _fusion_metrics(fused_s, [])
    io.save_trajectory(
        out / "trajectory_iovp.csv", fused_i.times, fused_i.rotations,
        fused_i.omega_world, fused_i.weights,
    )
    io.save_trajectory(
        out / "trajectory_strict.csv", fused_s.times, fused_s.rotations,
        fused_s.omega_world, fused_s.weights,
    )
    axis_errs = [m_i[k] for k in m_i if k.endswith("_axis_err")]
    io.save_table(
        out / "table.csv",
        ["cost_iovp", "cost_strict", "max_axis_err", "continuity_ratio_iovp",
         "continuity_ratio_strict"],
        [[m_i["acceleration_cost"], m_s["acceleration_cost"],
          max(axis_errs) if axis_errs else 0.0,
          m_i["continuity_ratio"], m_s["continuity_ratio"]]],
    )
    print(f"comparison written to {out}")
    return 0


def _cmd_sweep(args):
    cfg = io.load_config(args.config)
    seed, grid = _effective(args, cfg)
    out = _out_dir(args)
    demos = io.load_demos(cfg.demo_paths)
    values = cfg.sweep_values
    jobs = args.jobs or _env_default("JOBS", int, min(4, os.cpu_count() or 1))
    if cfg.sweep_axis == "lambda_a":
        R_aux = _aux_frame(cfg, demos)
        grid_times = _grid_times(demos, grid)
        cache = {}

        def trial(lam_a):
            run_cfg = kmp.KernelConfig(l=cfg.l, lam=cfg.lam, lambda_a=lam_a, order="pva")
            vias = _via_specs(cfg, R_aux, lam_a)
            result = reproduce_with_via_points(
                demos, R_aux, vias, run_cfg, grid_times,
                n_components=cfg.components, seed=seed, delta_t_via=cfg.delta_t_via,
                gmm_cache=cache,
            )
            traj = result.trajectory
            errs = [
                so3.geodesic_distance(
                    traj.rotations[int(np.argmin(np.abs(traj.times - v.t)))], v.rotation
                )
                for v in vias
            ]
            return [lam_a, fusion.trajectory_acceleration_cost(traj), max(errs) if errs else 0.0]

        if values:
            trial(values[0])  # warm the mixture cache before going parallel
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(trial, [float(v) for v in values]))
        io.save_table(out / "table.csv", ["lambda_a", "acceleration_cost", "max_via_err"], rows)
    elif cfg.sweep_axis == "target-rotation":
        if cfg.aux_policy != "per-iovp":
            raise ConfigError("target-rotation sweeps need aux_frame policy 'per-iovp'")
        via_index = cfg.sweep_via_index
        if via_index is None:
            via_index = len(cfg.via_points) - 1
        base_rot = cfg.via_points[via_index].target_rotation()
        cache = {}

        def trial(i):
            target = base_rot @ so3.exp_map([0.0, (int(i) - 6) * np.pi / 6.0, 0.0])
            override = (via_index, target)
            fused_i, _, iovps = _fusion_run(
                cfg, demos, seed, grid, cfg.memory, target_override=override, gmm_cache=cache
            )
            fused_s, _, _ = _fusion_run(
                cfg, demos, seed, grid, cfg.memory, strict=True, target_override=override,
                gmm_cache=cache,
            )
            m_i = _fusion_metrics(fused_i, iovps)
            m_s = _fusion_metrics(fused_s, [])
            axis_errs = [m_i[k] for k in m_i if k.endswith("_axis_err")]
            return [
                int(i),
                m_i["acceleration_cost"],
                m_s["acceleration_cost"],
                max(axis_errs) if axis_errs else 0.0,
                m_i["continuity_ratio"],
                m_s["continuity_ratio"],
            ]

        if values:
            trial(values[0])  # warm the shared-frame mixtures sequentially
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(trial, values))
        io.save_table(
            out / "table.csv",
            ["i", "cost_iovp", "cost_strict", "max_axis_err",
             "continuity_ratio_iovp", "continuity_ratio_strict"],
            rows,
        )
    else:
        raise ConfigError("config has no sweep axis; set sweep.axis to "
                          "'lambda_a' or 'target-rotation'")
    print(f"sweep table ({len(values)} trials) written to {out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="orifuse",
        description="Orientation trajectory learning, adaptation and fusion on SO(3).",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    gen = subs.add_parser("gen-demos", help="generate seeded synthetic demonstrations")
    gen.add_argument("--profile", default="s61-like",
                     choices=["s61-like", "single-axis", "random-geodesic"])
    gen.add_argument("--count", type=int, default=5)
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--out", default=None)
    gen.add_argument("--duration", type=float, default=demo_gen.DURATION)
    gen.add_argument("--samples", type=int, default=demo_gen.SAMPLES)
    gen.set_defaults(func=_cmd_gen_demos)

    learn = subs.add_parser("learn", help="fit the mixture and reproduce without via-points")
    _add_common(learn)
    learn.set_defaults(func=_cmd_learn)

    adapt = subs.add_parser("adapt", help="adapt the learned trajectory towards via-points")
    _add_common(adapt)
    adapt.set_defaults(func=_cmd_adapt)

    fuse = subs.add_parser("fuse", help="fuse per-via-point component trajectories")
    _add_common(fuse)
    fuse.add_argument("--no-memory", action="store_true",
                      help="diagnostic: disable the memory-based average")
    fuse.set_defaults(func=_cmd_fuse)

    ev = subs.add_parser("eval", help="compare relaxed against strict via handling")
    _add_common(ev)
    ev.set_defaults(func=_cmd_eval)

    sweep = subs.add_parser("sweep", help="run the configured parameter sweep")
    _add_common(sweep)
    sweep.add_argument("--jobs", type=int, default=None, help="concurrent trials")
    sweep.set_defaults(func=_cmd_sweep)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except OrifuseError as exc:
        for klass, code in _EXIT_CODES:
            if isinstance(exc, klass):
                print(f"error: {exc}", file=sys.stderr)
                return code
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
