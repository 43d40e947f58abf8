"""Deterministic unconstrained minimization.

Two methods are provided behind one entry point:

* ``simplex``: derivative-free Nelder-Mead with the standard coefficients
  (reflection 1, expansion 2, contraction 0.5, shrink 0.5).
* ``quasi_newton_fd``: BFGS-style rank-2 secant updates on central
  finite-difference gradients with a backtracking line search.

Both respect a strict evaluation budget, treat non-finite objective values
mid-run as +inf (the point is rejected, the run continues), and are
bit-deterministic for identical inputs.  ``quasi_newton_fd`` stores one dense
d-by-d matrix and refuses to start when that matrix would exceed the memory
budget; at very large parameter counts this reproduces the infeasibility of
full-order gradient-free optimization.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

MEMORY_BUDGET_ENV = "MORINV_MEMORY_BUDGET_MB"
DEFAULT_MEMORY_BUDGET_MB = 64.0

# auto method rule: derivative-free below, gradient-based above
SIMPLEX_MAX_DIM = 40

_ARMIJO = 1e-4


class NonFiniteStartError(ValueError):
    """The objective is not finite at the requested starting point."""


class MemoryBudgetError(RuntimeError):
    """Pre-run refusal: the method's dense workspace exceeds the budget."""

    def __init__(self, method: str, dim: int, needed_mb: float, budget_mb: float):
        super().__init__(
            f"{method} over {dim} variables needs about {needed_mb:.1f} MiB "
            f"(budget {budget_mb:.1f} MiB, override via {MEMORY_BUDGET_ENV})"
        )
        self.dim = dim
        self.needed_mb = needed_mb
        self.budget_mb = budget_mb


@dataclass
class OptimizeOptions:
    """Settings for :func:`minimize`.

    ``max_evals=None`` defaults to 200 evaluations per variable.  ``method``
    "auto" picks simplex up to 40 variables and quasi_newton_fd above.
    ``memory_budget_mb=None`` reads the MORINV_MEMORY_BUDGET_MB environment
    variable, falling back to 64 MiB.
    """

    max_evals: int | None = None
    x_tol: float = 1e-9
    f_tol: float = 1e-12
    method: str = "auto"
    fd_step: float = 1e-6
    memory_budget_mb: float | None = None

    def __post_init__(self):
        if self.max_evals is not None and self.max_evals < 1:
            raise ValueError("max_evals must be at least 1")
        if self.x_tol <= 0 or self.f_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.method not in ("auto", "simplex", "quasi_newton_fd"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.fd_step <= 0:
            raise ValueError("fd_step must be positive")


@dataclass
class OptimizeResult:
    x_best: np.ndarray
    f_best: float
    evals: int
    converged: bool
    reason: str


def memory_budget_mb(override: float | None = None) -> float:
    if override is not None:
        return float(override)
    return float(os.environ.get(MEMORY_BUDGET_ENV, DEFAULT_MEMORY_BUDGET_MB))


def workspace_mb(method: str, dim: int) -> float:
    """Size of the dominant dense workspace in MiB."""
    if method == "quasi_newton_fd":
        return 8.0 * dim * dim / 2**20
    return 8.0 * (dim + 1) * dim / 2**20


def fd_gradient(f, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient.

    The per-coordinate step is ``step * max(1, |x_i|)``; each component is
    (f(x + s e_i) - f(x - s e_i)) / (2 s).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        s = step * max(1.0, abs(x[i]))
        probe = x.copy()
        probe[i] = x[i] + s
        f_plus = float(f(probe))
        probe[i] = x[i] - s
        f_minus = float(f(probe))
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise ValueError(f"non-finite objective sample in coordinate {i}")
        grad[i] = (f_plus - f_minus) / (2.0 * s)
    return grad


class _BudgetExhausted(Exception):
    pass


class _CountingObjective:
    """Wraps the raw objective: counts evaluations, maps non-finite values to
    +inf, tracks the best point seen, and raises once the budget is spent."""

    def __init__(self, f, max_evals: int):
        self._f = f
        self.max_evals = max_evals
        self.evals = 0
        self.x_best = None
        self.f_best = np.inf

    def __call__(self, x: np.ndarray) -> float:
        if self.evals >= self.max_evals:
            raise _BudgetExhausted
        self.evals += 1
        value = float(self._f(x))
        if not np.isfinite(value):
            return np.inf
        if value < self.f_best:
            self.f_best = value
            self.x_best = np.array(x, dtype=float, copy=True)
        return value


def minimize(f, x0, opts: OptimizeOptions | None = None) -> OptimizeResult:
    """Minimize ``f`` from ``x0``.

    Guarantees on return: ``f_best <= f(x0)``, ``evals <= max_evals``, and the
    result is identical for identical inputs.  ``f_best`` is re-checked by one
    extra evaluation when budget remains; a mismatch means the objective is
    not deterministic and raises.

    Raises
    ------
    ValueError
        If the objective is non-finite at the starting point.
    MemoryBudgetError
        If the method's dense workspace would exceed the memory budget.
    """
    opts = opts or OptimizeOptions()
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    dim = x0.size
    method = opts.method
    if method == "auto":
        method = "simplex" if dim <= SIMPLEX_MAX_DIM else "quasi_newton_fd"
    budget_mb = memory_budget_mb(opts.memory_budget_mb)
    needed = workspace_mb(method, dim)
    if needed > budget_mb:
        raise MemoryBudgetError(method, dim, needed, budget_mb)
    max_evals = opts.max_evals if opts.max_evals is not None else 200 * dim

    fw = _CountingObjective(f, max_evals)
    f0 = fw(x0)
    if not np.isfinite(f0):
        raise NonFiniteStartError("objective is non-finite at the starting point")

    try:
        if method == "simplex":
            converged, reason = _nelder_mead(fw, x0, f0, opts)
        else:
            converged, reason = _quasi_newton_fd(fw, x0, f0, opts)
    except _BudgetExhausted:
        converged, reason = False, "budget"

    x_best = fw.x_best
    f_best = fw.f_best
    if fw.evals < max_evals:
        fw.evals += 1
        f_check = float(f(x_best))
        if not np.isfinite(f_check):
            f_check = np.inf
        if f_check != f_best:
            raise RuntimeError(
                "objective is not deterministic: re-evaluation at the best point "
                f"gave {f_check!r}, expected {f_best!r}"
            )
    return OptimizeResult(
        x_best=x_best, f_best=f_best, evals=fw.evals, converged=converged, reason=reason
    )


def _nelder_mead(fw, x0, f0, opts):
    dim = x0.size
    reflect, expand, contract, shrink = 1.0, 2.0, 0.5, 0.5

    # one vertex per coordinate at 5% of the starting point's overall scale;
    # a relative per-coordinate step would degenerate on (near-)zero entries
    step = 0.05 * max(1.0, float(np.max(np.abs(x0))))
    sim = np.repeat(x0[None, :], dim + 1, axis=0)
    fs = np.empty(dim + 1)
    fs[0] = f0
    for i in range(dim):
        vertex = x0.copy()
        vertex[i] += step
        sim[i + 1] = vertex
        fs[i + 1] = fw(vertex)

    while True:
        order = np.argsort(fs, kind="stable")
        sim = sim[order]
        fs = fs[order]
        if (
            np.max(np.abs(sim[1:] - sim[0])) <= opts.x_tol
            and np.max(np.abs(fs[1:] - fs[0])) <= opts.f_tol
        ):
            return True, "tolerance"

        with np.errstate(over="ignore", invalid="ignore"):
            centroid = sim[:-1].mean(axis=0)
            xr = centroid + reflect * (centroid - sim[-1])
        fr = fw(xr)
        if fr < fs[0]:
            xe = centroid + expand * (xr - centroid)
            fe = fw(xe)
            if fe < fr:
                sim[-1], fs[-1] = xe, fe
            else:
                sim[-1], fs[-1] = xr, fr
        elif fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
        else:
            if fr < fs[-1]:
                xc = centroid + contract * (xr - centroid)
                fc = fw(xc)
                if fc <= fr:
                    sim[-1], fs[-1] = xc, fc
                else:
                    _shrink_simplex(fw, sim, fs, shrink)
            else:
                xc = centroid - contract * (centroid - sim[-1])
                fc = fw(xc)
                if fc < fs[-1]:
                    sim[-1], fs[-1] = xc, fc
                else:
                    _shrink_simplex(fw, sim, fs, shrink)


def _shrink_simplex(fw, sim, fs, shrink):
    for i in range(1, sim.shape[0]):
        sim[i] = sim[0] + shrink * (sim[i] - sim[0])
        fs[i] = fw(sim[i])


def _fd_gradient_tolerant(fw, x, fx, step):
    """Central differences through the counting wrapper; falls back to a
    one-sided difference when a sample lands on a rejected (+inf) point."""
    grad = np.empty_like(x)
    for i in range(x.size):
        s = step * max(1.0, abs(x[i]))
        probe = x.copy()
        probe[i] = x[i] + s
        f_plus = fw(probe)
        probe[i] = x[i] - s
        f_minus = fw(probe)
        if np.isfinite(f_plus) and np.isfinite(f_minus):
            grad[i] = (f_plus - f_minus) / (2.0 * s)
        elif np.isfinite(f_plus):
            grad[i] = (f_plus - fx) / s
        elif np.isfinite(f_minus):
            grad[i] = (fx - f_minus) / s
        else:
            grad[i] = 0.0
    return grad


def _quasi_newton_fd(fw, x0, f0, opts):
    dim = x0.size
    h_inv = np.eye(dim)
    x, fx = x0.copy(), f0
    grad = _fd_gradient_tolerant(fw, x, fx, opts.fd_step)

    while True:
        if not np.all(np.isfinite(grad)):
            return False, "nonfinite_gradient"
        with np.errstate(over="ignore", invalid="ignore"):
            direction = -(h_inv @ grad)
            slope = float(grad @ direction)
        if not np.isfinite(slope):
            return False, "nonfinite_gradient"
        if slope >= 0.0:
            h_inv = np.eye(dim)
            direction = -grad
            slope = float(grad @ direction)
            if slope >= 0.0:
                return True, "stationary"

        step = 1.0
        while True:
            with np.errstate(over="ignore", invalid="ignore"):
                x_new = x + step * direction
            f_new = fw(x_new)
            if f_new <= fx + _ARMIJO * step * slope:
                break
            step *= 0.5
            if step < 1e-14:
                return False, "line_search_stalled"

        f_drop = abs(fx - f_new)
        x_move = float(np.linalg.norm(x_new - x))
        if f_drop <= opts.f_tol * (1.0 + abs(fx)) and x_move <= opts.x_tol * (
            1.0 + float(np.linalg.norm(x))
        ):
            return True, "tolerance"

        grad_new = _fd_gradient_tolerant(fw, x_new, f_new, opts.fd_step)
        with np.errstate(over="ignore", invalid="ignore"):
            s_vec = x_new - x
            y_vec = grad_new - grad
            sy = float(s_vec @ y_vec)
            if np.isfinite(sy) and sy > 1e-12 * float(
                np.linalg.norm(s_vec) * np.linalg.norm(y_vec) + 1e-300
            ):
                rho = 1.0 / sy
                hy = h_inv @ y_vec
                yhy = float(y_vec @ hy)
                # BFGS update of the inverse Hessian approximation
                h_inv += (sy + yhy) * rho * rho * np.outer(s_vec, s_vec)
                h_inv -= rho * (np.outer(hy, s_vec) + np.outer(s_vec, hy))
        x, fx, grad = x_new, f_new, grad_new
