"""Online MAP estimation against measured outputs, full order and reduced.

Both phases minimize a squared output misfit plus the prior-centered
precision-weighted penalty

    J(theta) = ||y(theta) - y_d||_2^2 + ||theta - kappa||^2_{K^-1},

summed over time nodes and channels, starting from the prior mean (restricted
to the reduced space for the reduced phase).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .lti import ControlSystem, SimulationUnstableError, TimeGrid, simulate
from .optimize import OptimizeOptions, minimize
from .priors import GaussianPrior, prior_seminorm
from .reduction import ReducedSystem


@dataclass(frozen=True)
class DataSet:
    """Measured outputs with the grid and input that produced them."""

    grid: TimeGrid
    input: np.ndarray
    outputs: np.ndarray
    noise_variance: float = 0.0

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.input, dtype=float))
        y = np.atleast_2d(np.asarray(self.outputs, dtype=float))
        nodes = self.grid.steps + 1
        if u.shape[0] != nodes:
            raise ValueError(f"input has {u.shape[0]} rows, grid has {nodes} nodes")
        if y.shape[0] != nodes:
            raise ValueError(f"outputs have {y.shape[0]} rows, grid has {nodes} nodes")
        object.__setattr__(self, "input", u)
        object.__setattr__(self, "outputs", y)


@dataclass
class InversionResult:
    theta_map: np.ndarray
    objective_value: float
    online_time: float
    relative_output_error: float
    evals: int
    converged: bool


def relative_output_error(y_model: np.ndarray, y_ref: np.ndarray) -> float:
    """Frobenius-norm relative error over the full time-by-channel array."""
    y_model = np.asarray(y_model, dtype=float)
    y_ref = np.asarray(y_ref, dtype=float)
    if y_model.shape != y_ref.shape:
        raise ValueError(f"shape mismatch: {y_model.shape} vs {y_ref.shape}")
    with np.errstate(over="ignore"):
        ref_norm = np.linalg.norm(y_ref)
        if ref_norm == 0.0:
            raise ValueError("reference output is identically zero")
        return float(np.linalg.norm(y_model - y_ref) / ref_norm)


def reconstruct(theta_r: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Lift reduced parameters back to the full space: theta = P theta_r."""
    return np.asarray(P, dtype=float) @ np.asarray(theta_r, dtype=float)


def reduce_prior(prior: GaussianPrior, P: np.ndarray) -> GaussianPrior:
    """Restrict a parameter prior to span(P): mean P^T kappa, covariance P^T K P."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    mean_r = P.T @ prior.mean
    if prior.is_diagonal:
        cov_r = P.T @ (prior.covariance[:, None] * P)
    else:
        cov_r = P.T @ prior.covariance @ P
    cov_r = 0.5 * (cov_r + cov_r.T)
    return GaussianPrior(mean=mean_r, covariance=cov_r)


def reduce_state_covariance(S: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Restrict a state-space covariance to span(V): V^T S V."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    return V.T @ np.asarray(S, dtype=float) @ V


def _misfit(outputs, data):
    # overflow to inf is fine: the optimizer rejects the point
    with np.errstate(over="ignore"):
        return float(np.sum((outputs - data.outputs) ** 2))


def map_full(
    system: ControlSystem,
    prior: GaussianPrior,
    data: DataSet,
    opts: OptimizeOptions | None = None,
) -> InversionResult:
    """MAP estimate over the full parameter space, started at the prior mean.

    Raises :class:`morinv.optimize.MemoryBudgetError` when the optimizer's
    pre-run estimate refuses the parameter count, which reproduces the
    infeasibility of gradient-free full-order estimation at extreme scale.
    """

    def objective(theta):
        try:
            traj = simulate(system, theta, data.input, data.grid)
        except SimulationUnstableError:
            return np.inf
        return _misfit(traj.outputs, data) + prior_seminorm(theta - prior.mean, prior)

    t0 = time.perf_counter()
    result = minimize(objective, prior.mean, opts)
    elapsed = time.perf_counter() - t0
    fitted = simulate(system, result.x_best, data.input, data.grid)
    return InversionResult(
        theta_map=result.x_best,
        objective_value=result.f_best,
        online_time=elapsed,
        relative_output_error=relative_output_error(fitted.outputs, data.outputs),
        evals=result.evals,
        converged=result.converged,
    )


def map_reduced(
    reduced: ReducedSystem,
    prior: GaussianPrior,
    data: DataSet,
    opts: OptimizeOptions | None = None,
) -> InversionResult:
    """MAP estimate over the reduced parameter space.

    Minimizes ||y_r(theta_r) - y_d||_2^2 + ||P theta_r - kappa||^2_{K^-1}
    from P^T kappa and reconstructs theta_map = P theta_r.
    """
    P = reduced.P

    def objective(theta_r):
        try:
            traj = simulate(reduced.system, theta_r, data.input, data.grid)
        except SimulationUnstableError:
            return np.inf
        return _misfit(traj.outputs, data) + prior_seminorm(P @ theta_r - prior.mean, prior)

    t0 = time.perf_counter()
    result = minimize(objective, P.T @ prior.mean, opts)
    elapsed = time.perf_counter() - t0
    fitted = simulate(reduced.system, result.x_best, data.input, data.grid)
    return InversionResult(
        theta_map=reconstruct(result.x_best, P),
        objective_value=result.f_best,
        online_time=elapsed,
        relative_output_error=relative_output_error(fitted.outputs, data.outputs),
        evals=result.evals,
        converged=result.converged,
    )
