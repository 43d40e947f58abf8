"""Benchmark harness: synthesize a truth system, reduce, invert, record.

Each (size, method, seed) cell generates a random stable truth system, noisy
impulse-response data, runs the offline reduction (for reduced methods) and
the online MAP fit, and records timings plus the relative output error of the
fitted model against the noiseless truth outputs.  Memory-budget refusals are
recorded as rows with status "infeasible" and the run continues.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .inversion import DataSet, map_full, map_reduced
from .lti import TimeGrid, add_noise, impulse_input, simulate
from .models import connectivity_prior, generic_prior, random_fmri_problem, random_stable_system
from .optimize import MemoryBudgetError, OptimizeOptions
from .reduction import ReductionConfig, combined_reduce, project_system

SUITES = ("generic", "fmri", "extreme")
METHODS = ("full_order", "original", "data_driven", "trust", "trust_data", "trust_data_only")

# method name -> (objective, trust_region)
METHOD_VARIANTS = {
    "original": ("original", False),
    "data_driven": ("data_driven", False),
    "trust": ("original", True),
    "trust_data": ("data_driven", True),
    "trust_data_only": ("data_only", True),
}

_NOISE_SEED_OFFSET = 1_000_003

_SUITE_SIZES = {
    "generic": (9, 16, 25, 36),
    "fmri": (9, 16, 25, 36),
    "extreme": (64,),
}
_SUITE_GRIDS = {
    "generic": TimeGrid(0.0, 0.01, 1.0),
    "fmri": TimeGrid(0.0, 0.01, 2.0),
    "extreme": TimeGrid(0.0, 0.01, 1.0),
}


@dataclass
class RunConfig:
    """Fully specified benchmark run (after defaulting)."""

    suite: str = "generic"
    sizes: tuple[int, ...] = ()
    methods: tuple[str, ...] = METHODS
    seeds: tuple[int, ...] = (0, 1, 2)
    noise_variance_rel: float = 1e-4
    selection: str = "pod_greedy"
    pod_rank: int = 2
    p: float = 2.0
    impulse_magnitude: float = 10.0
    offline_max_evals: int | None = None
    online_max_evals: int | None = None
    out_dir: str = "benchmark_out"

    def __post_init__(self):
        if self.suite not in SUITES:
            raise ValueError(f"unknown suite {self.suite!r}")
        if not self.sizes:
            self.sizes = _SUITE_SIZES[self.suite]
        self.sizes = tuple(int(s) for s in self.sizes)
        self.methods = tuple(self.methods)
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")
        self.seeds = tuple(int(s) for s in self.seeds)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        """Parse a key = value config file (one pair per line, # comments)."""
        values: dict = {}
        for raw in Path(path).read_text().splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"malformed config line {raw!r}")
            key, val = (part.strip() for part in line.split("=", 1))
            if key in ("sizes", "seeds"):
                values[key] = tuple(int(v) for v in val.split(","))
            elif key == "methods":
                values[key] = tuple(v.strip() for v in val.split(","))
            elif key in ("noise_variance_rel", "p", "impulse_magnitude"):
                values[key] = float(val)
            elif key in ("pod_rank", "offline_max_evals", "online_max_evals"):
                values[key] = int(val)
            elif key in ("suite", "selection", "out_dir"):
                values[key] = val
            else:
                raise ValueError(f"unknown config key {key!r}")
        return cls(**values)


@dataclass
class ExperimentRecord:
    suite: str
    model: str
    method: str
    size: int
    N: int
    P_dim: int
    R: int
    seed: int
    offline_ms: float
    online_ms: float
    rel_err: float
    status: str = "ok"


@dataclass
class Problem:
    system: object
    theta_true: np.ndarray
    grid: TimeGrid
    iterations: int
    model: str


def make_problem(suite: str, size: int, seed: int) -> Problem:
    """Suite rules: generic/extreme use J = O = round(sqrt(N)) and R = O;
    fmri uses n regions, N = 5n, J = O = n and R = n."""
    if suite in ("generic", "extreme"):
        n_io = max(1, round(math.sqrt(size)))
        system, theta_true = random_stable_system(size, n_io, n_io, seed)
        return Problem(system, theta_true, _SUITE_GRIDS[suite], n_io, f"generic-N{size}")
    model, theta_true = random_fmri_problem(size, seed)
    return Problem(model.system, theta_true, _SUITE_GRIDS["fmri"], size, f"fmri-n{size}")


def _offline_options(config: RunConfig, trust: bool, param_dim: int, iterations: int) -> OptimizeOptions:
    if config.offline_max_evals is not None:
        return OptimizeOptions(max_evals=config.offline_max_evals)
    if trust:
        # search dimensions stay at or below the iteration count
        return OptimizeOptions(max_evals=60 * iterations + 40)
    return OptimizeOptions(max_evals=min(4000, 30 * param_dim + 150))


def online_options(dim: int, max_evals: int | None = None) -> OptimizeOptions:
    """Optimizer settings for the online MAP fits.

    The online landscapes have narrow curved valleys where the simplex
    stagnates; the quasi-Newton path is both faster and more reliable here.
    """
    if max_evals is None:
        max_evals = min(30000, max(6000, 200 * dim))
    return OptimizeOptions(max_evals=max_evals, method="quasi_newton_fd")


def _online_options(config: RunConfig, dim: int) -> OptimizeOptions:
    return online_options(dim, config.online_max_evals)


def run_cell(config: RunConfig, size: int, method: str, seed: int) -> ExperimentRecord:
    problem = make_problem(config.suite, size, seed)
    system = problem.system
    grid = problem.grid
    record = ExperimentRecord(
        suite=config.suite,
        model=problem.model,
        method=method,
        size=size,
        N=system.N,
        P_dim=system.parametrization.param_dim,
        R=0 if method == "full_order" else problem.iterations,
        seed=seed,
        offline_ms=0.0,
        online_ms=float("nan"),
        rel_err=float("nan"),
    )

    u = impulse_input(grid, system.J, config.impulse_magnitude)
    truth = simulate(system, problem.theta_true, u, grid)
    variance = config.noise_variance_rel * float(np.max(np.abs(truth.outputs))) ** 2
    noisy = add_noise(truth.outputs, variance, seed + _NOISE_SEED_OFFSET)
    data = DataSet(grid=grid, input=u, outputs=noisy, noise_variance=variance)
    prior = (
        generic_prior(system.N)
        if config.suite in ("generic", "extreme")
        else connectivity_prior(problem.iterations)
    )

    try:
        if method == "full_order":
            result = map_full(system, prior, data, _online_options(config, record.P_dim))
            fitted = simulate(system, result.theta_map, u, grid).outputs
        else:
            objective, trust = METHOD_VARIANTS[method]
            reduction = ReductionConfig(
                iterations=problem.iterations,
                objective=objective,
                trust_region=trust,
                selection=config.selection,
                pod_rank=config.pod_rank,
                p=config.p,
                optimizer=_offline_options(config, trust, record.P_dim, problem.iterations),
            )
            pair, trace = combined_reduce(
                system, prior, grid, u, reduction, data=noisy if objective != "original" else None
            )
            record.offline_ms = trace.offline_ms
            reduced = project_system(system, pair.V, pair.P)
            result = map_reduced(reduced, prior, data, _online_options(config, pair.k))
            fitted = simulate(
                reduced.system, reduced.restrict_params(result.theta_map), u, grid
            ).outputs
        record.online_ms = result.online_time * 1e3
        record.rel_err = float(np.linalg.norm(fitted - truth.outputs) / np.linalg.norm(truth.outputs))
    except MemoryBudgetError:
        record.status = "infeasible"
        record.offline_ms = float("nan")
    except Exception as exc:  # noqa: BLE001 - partial failures become rows
        record.status = f"error:{type(exc).__name__}"
        record.offline_ms = float("nan")
    return record


def run_benchmark(config: RunConfig, progress=None) -> list[ExperimentRecord]:
    records = []
    for size in config.sizes:
        for method in config.methods:
            for seed in config.seeds:
                record = run_cell(config, size, method, seed)
                records.append(record)
                if progress is not None:
                    progress(record)
    return records


@dataclass
class SpeedupRow:
    suite: str
    size: int
    method: str
    total_ms: float
    vs_full_order: float
    vs_original: float


def mean_metric(records, size: int, method: str, metric: str) -> float:
    """Mean of a record field over seeds for one (size, method); nan when no
    cell completed."""
    values = [
        getattr(r, metric)
        for r in records
        if r.size == size and r.method == method and r.status == "ok"
    ]
    return float(np.mean(values)) if values else float("nan")


def summarize_speedup(records) -> list[SpeedupRow]:
    """Total-time ratios against the full-order and original baselines."""
    rows = []
    sizes = sorted({r.size for r in records})
    methods = list(dict.fromkeys(r.method for r in records))
    for size in sizes:
        totals = {
            m: mean_metric(records, size, m, "offline_ms") + mean_metric(records, size, m, "online_ms")
            for m in methods
        }
        for method in methods:
            rows.append(
                SpeedupRow(
                    suite=records[0].suite,
                    size=size,
                    method=method,
                    total_ms=totals[method],
                    vs_full_order=totals.get("full_order", float("nan")) / totals[method],
                    vs_original=totals.get("original", float("nan")) / totals[method],
                )
            )
    return rows
