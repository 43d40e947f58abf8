"""Command line interface: reduce, invert, benchmark."""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import bench, report, serialize
from .inversion import DataSet, map_full, map_reduced
from .lti import TimeGrid, impulse_input
from .models import generic_prior
from .optimize import MemoryBudgetError
from .reduction import ConfigurationError, ReductionConfig, combined_reduce, project_system

REDUCE_METHODS = ("original", "data_driven", "data_only", "trust", "trust_data", "trust_data_only")
_REDUCE_VARIANTS = dict(bench.METHOD_VARIANTS, data_only=("data_only", False))


def _parse_p(text: str) -> float:
    return math.inf if text.lower() in ("inf", "infinity") else float(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="morinv",
        description="Combined state and parameter reduction with MAP inversion.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    reduce_p = sub.add_parser("reduce", help="run the offline greedy reduction")
    reduce_p.add_argument("--model", choices=("generic", "fmri"), default="generic")
    reduce_p.add_argument("--size", type=int, default=9, help="state dim (generic) or regions (fmri)")
    reduce_p.add_argument("--method", choices=REDUCE_METHODS, default="original")
    reduce_p.add_argument("--iters", type=int, default=None, help="greedy iterations (default: suite rule)")
    reduce_p.add_argument("--alpha", type=float, default=None)
    reduce_p.add_argument("--beta", type=float, default=None)
    reduce_p.add_argument("--gamma", type=float, default=None)
    reduce_p.add_argument("--p", type=_parse_p, default=2.0, help="misfit norm order, 1..inf")
    reduce_p.add_argument("--selection", choices=("mean", "pod", "pod_greedy"), default="pod_greedy")
    reduce_p.add_argument("--pod-rank", type=int, default=1)
    reduce_p.add_argument("--trust", action="store_true", help="force trust-region mode")
    reduce_p.add_argument("--data", default=None, help="output time series CSV (t,y_1..y_O)")
    reduce_p.add_argument("--impulse-magnitude", type=float, default=1.0,
                          help="impulse strength used to generate/drive the data")
    reduce_p.add_argument("--seed", type=int, default=0)
    reduce_p.add_argument("--out", default=".", help="output directory")

    invert_p = sub.add_parser("invert", help="MAP estimation against measured data")
    invert_p.add_argument("--model", choices=("generic", "fmri"), default=None)
    invert_p.add_argument("--size", type=int, default=None)
    invert_p.add_argument("--system", default=None, help="system definition JSON file")
    invert_p.add_argument("--proj", default=None, help="projection-pair file (reduced inversion)")
    invert_p.add_argument("--data", required=True, help="output time series CSV")
    invert_p.add_argument("--impulse-magnitude", type=float, default=1.0,
                          help="impulse strength used to generate/drive the data")
    invert_p.add_argument("--seed", type=int, default=0)
    invert_p.add_argument("--out", default="inversion.json")

    bench_p = sub.add_parser("benchmark", help="run an experiment suite")
    bench_p.add_argument("--suite", choices=bench.SUITES, required=True)
    bench_p.add_argument("--sizes", default=None, help="comma-separated sizes")
    bench_p.add_argument("--methods", default=None, help="comma-separated method names")
    bench_p.add_argument("--seeds", default=None, help="comma-separated seeds")
    bench_p.add_argument("--config", default=None, help="key = value config file")
    bench_p.add_argument("--out-dir", default=None)
    return parser


def _grid_from_times(times: np.ndarray, parser) -> TimeGrid:
    if times.size < 2:
        parser.error("data file must contain at least two time nodes")
    dt = float(times[1] - times[0])
    grid = TimeGrid(float(times[0]), dt, float(times[-1]))
    if grid.steps != times.size - 1 or not np.allclose(np.diff(times), dt, rtol=1e-8):
        parser.error("data file must use a uniform time grid")
    return grid


def _problem(model: str, size: int, seed: int):
    suite = "generic" if model == "generic" else "fmri"
    return bench.make_problem(suite, size, seed)


def _cmd_reduce(args, parser) -> int:
    objective, trust = _REDUCE_VARIANTS[args.method]
    trust = trust or args.trust
    problem = _problem(args.model, args.size, args.seed)
    system = problem.system

    data = None
    if args.data is not None:
        times, data = serialize.read_outputs_csv(args.data)
        grid = _grid_from_times(times, parser)
        if data.shape[1] != system.O:
            parser.error(f"data has {data.shape[1]} channels, system has {system.O} outputs")
    else:
        grid = problem.grid
        if objective != "original":
            parser.error(f"method {args.method!r} requires --data")

    config = ReductionConfig(
        iterations=problem.iterations if args.iters is None else args.iters,
        objective=objective,
        trust_region=trust,
        selection=args.selection,
        pod_rank=args.pod_rank,
        alpha=args.alpha,
        beta=args.beta,
        gamma=args.gamma,
        p=args.p,
    )
    prior = generic_prior(int(round(math.sqrt(system.parametrization.param_dim))))
    u = impulse_input(grid, system.J, args.impulse_magnitude)
    try:
        config.validate()
        pair, trace = combined_reduce(system, prior, grid, u, config, data=data)
    except (ConfigurationError, ValueError) as exc:
        parser.error(str(exc))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    serialize.save_projection_pair(pair, out / "projection.dat")
    serialize.export_projection_csv(pair, out / "V.csv", out / "P.csv")
    serialize.write_trace_csv(trace, out / "trace.csv")
    print(
        f"reduced {problem.model}: dim_V={pair.m} dim_P={pair.k} "
        f"offline_ms={trace.offline_ms:.1f} -> {out / 'projection.dat'}"
    )
    return 0


def _cmd_invert(args, parser) -> int:
    if args.system is not None:
        system = serialize.load_system(args.system)
        label = args.system
    elif args.model is not None and args.size is not None:
        problem = _problem(args.model, args.size, args.seed)
        system = problem.system
        label = problem.model
    else:
        parser.error("provide either --system or --model with --size")

    times, outputs = serialize.read_outputs_csv(args.data)
    grid = _grid_from_times(times, parser)
    if outputs.shape[1] != system.O:
        parser.error(f"data has {outputs.shape[1]} channels, system has {system.O} outputs")
    data = DataSet(
        grid=grid, input=impulse_input(grid, system.J, args.impulse_magnitude), outputs=outputs
    )
    prior = generic_prior(int(round(math.sqrt(system.parametrization.param_dim))))

    try:
        if args.proj is not None:
            pair = serialize.load_projection_pair(args.proj)
            reduced = project_system(system, pair.V, pair.P)
            result = map_reduced(reduced, prior, data, bench.online_options(pair.k))
        else:
            result = map_full(system, prior, data, bench.online_options(system.parametrization.param_dim))
    except MemoryBudgetError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 3

    serialize.save_inversion_result(result, args.out)
    print(
        f"inverted {label}: objective={result.objective_value:.6g} "
        f"rel_err={result.relative_output_error:.3e} online_ms={result.online_time * 1e3:.1f} "
        f"-> {args.out}"
    )
    return 0


def _cmd_benchmark(args, parser) -> int:
    if args.config is not None:
        config = bench.RunConfig.from_file(args.config)
        config.suite = args.suite
    else:
        config = bench.RunConfig(suite=args.suite)
    if args.sizes is not None:
        config.sizes = tuple(int(s) for s in args.sizes.split(","))
    if args.methods is not None:
        config.methods = tuple(m.strip() for m in args.methods.split(","))
    if args.seeds is not None:
        config.seeds = tuple(int(s) for s in args.seeds.split(","))
    if args.out_dir is not None:
        config.out_dir = args.out_dir
    try:
        config.__post_init__()
    except ValueError as exc:
        parser.error(str(exc))

    def progress(record):
        print(
            f"[{record.model} {record.method} seed={record.seed}] "
            f"offline_ms={record.offline_ms:.1f} online_ms={record.online_ms:.1f} "
            f"rel_err={record.rel_err:.3e} status={record.status}"
        )

    records = bench.run_benchmark(config, progress=progress)
    report.write_all(records, config.out_dir)
    print(f"wrote results, speed-up table, plot data and figures to {config.out_dir}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "reduce":
        return _cmd_reduce(args, parser)
    if args.command == "invert":
        return _cmd_invert(args, parser)
    return _cmd_benchmark(args, parser)


if __name__ == "__main__":
    sys.exit(main())
