"""Parametrized linear time-invariant control systems and their simulation.

Systems have the form

    x'(t) = A(theta) x(t) + B u(t) + F,
    y(t)  = C x(t) + D u(t),

where the state matrix A is produced from a parameter vector by a
``Parametrization``.  Time integration is explicit first order; the
``block_solve`` path assembles the equivalent lower block-bidiagonal
linear system and solves it, so both paths encode the same recursion.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse
import scipy.sparse.linalg


class SimulationUnstableError(RuntimeError):
    """State trajectory left the representable range during integration."""

    def __init__(self, step: int):
        super().__init__(f"non-finite state first encountered at time step {step}")
        self.step = step


def vec_inverse(theta: np.ndarray, n: int) -> np.ndarray:
    """Reshape a flat parameter vector of length n**2 into an n-by-n matrix.

    Row-major layout: entry (r, c) of the result is ``theta[r * n + c]``, so
    flattening the result recovers ``theta`` exactly.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (n * n,):
        raise ValueError(
            f"expected {n * n} parameters for an {n}x{n} matrix, got shape {theta.shape}"
        )
    return theta.reshape(n, n)


@dataclass(frozen=True)
class Parametrization:
    """Map from a parameter vector to the N-by-N state matrix.

    ``tag``/``meta`` identify constructions that can be rebuilt from a system
    file ("full", "fmri"); ad-hoc callables carry the default "custom" tag and
    are not serializable.  ``adjoint_map``, when present, is the transpose of
    the (linear part of the) parameter map: it folds a gradient with respect
    to the state matrix back into a gradient with respect to theta, enabling
    adjoint parameter gradients without finite differences.
    """

    state_dim: int
    param_dim: int
    map: Callable[[np.ndarray], np.ndarray]
    tag: str = "custom"
    meta: tuple = ()
    adjoint_map: Callable[[np.ndarray], np.ndarray] | None = None

    def matrix(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.param_dim,):
            raise ValueError(
                f"parameter vector has shape {theta.shape}, expected ({self.param_dim},)"
            )
        if not np.all(np.isfinite(theta)):
            raise ValueError("parameter vector contains non-finite entries")
        a = np.asarray(self.map(theta), dtype=float)
        if a.shape != (self.state_dim, self.state_dim):
            raise ValueError(
                f"parametrization produced shape {a.shape}, expected "
                f"({self.state_dim}, {self.state_dim})"
            )
        return a


def full_parametrization(n: int) -> Parametrization:
    """Every entry of A is an individual parameter; theta has length n**2."""
    return Parametrization(
        state_dim=n,
        param_dim=n * n,
        map=lambda th: vec_inverse(th, n),
        tag="full",
        adjoint_map=lambda grad: np.asarray(grad, dtype=float).reshape(-1),
    )


@dataclass(frozen=True)
class ControlSystem:
    """Full-order parametrized LTI system (A(theta), B, C, D, F) with x0."""

    parametrization: Parametrization
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    F: np.ndarray
    x0: np.ndarray

    def __post_init__(self):
        n = self.parametrization.state_dim
        b = np.atleast_2d(np.asarray(self.B, dtype=float))
        c = np.atleast_2d(np.asarray(self.C, dtype=float))
        d = np.atleast_2d(np.asarray(self.D, dtype=float))
        f = np.asarray(self.F, dtype=float).reshape(-1)
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if b.shape[0] != n:
            raise ValueError(f"B has {b.shape[0]} rows, state dimension is {n}")
        if c.shape[1] != n:
            raise ValueError(f"C has {c.shape[1]} columns, state dimension is {n}")
        if d.shape != (c.shape[0], b.shape[1]):
            raise ValueError(f"D has shape {d.shape}, expected {(c.shape[0], b.shape[1])}")
        if f.shape != (n,):
            raise ValueError(f"F has shape {f.shape}, expected ({n},)")
        if x0.shape != (n,):
            raise ValueError(f"x0 has shape {x0.shape}, expected ({n},)")
        for name, val in (("B", b), ("C", c), ("D", d), ("F", f), ("x0", x0)):
            object.__setattr__(self, name, val)

    @property
    def N(self) -> int:
        return self.parametrization.state_dim

    @property
    def J(self) -> int:
        return self.B.shape[1]

    @property
    def O(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [t_start, t_end] with step dt and K = (t_end-t_start)/dt."""

    t_start: float
    dt: float
    t_end: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end > self.t_start:
            raise ValueError("t_end must exceed t_start")
        if self.steps < 1:
            raise ValueError("grid must contain at least one step")

    @property
    def steps(self) -> int:
        return int(round((self.t_end - self.t_start) / self.dt))

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.steps + 1)


@dataclass(frozen=True)
class Trajectory:
    """Simulated time series: times (K+1,), states (K+1, N), outputs (K+1, O)."""

    times: np.ndarray
    states: np.ndarray
    outputs: np.ndarray


def impulse_input(grid: TimeGrid, n_inputs: int, magnitude: float = 1.0) -> np.ndarray:
    """Discrete delta impulse: magnitude/dt at the first node, zero after.

    The discrete time integral dt * sum_k u_k equals ``magnitude`` in every
    channel regardless of the grid.
    """
    if not np.isfinite(magnitude):
        raise ValueError("impulse magnitude must be finite")
    u = np.zeros((grid.steps + 1, n_inputs))
    u[0, :] = magnitude / grid.dt
    return u


def add_noise(outputs: np.ndarray, variance: float, seed: int) -> np.ndarray:
    """Add i.i.d. zero-mean Gaussian noise of the given variance.

    All randomness in this package flows through ``numpy.random.default_rng``
    (PCG64) seeded explicitly, so results are bit-reproducible per seed.
    """
    if variance < 0:
        raise ValueError("noise variance must be non-negative")
    outputs = np.asarray(outputs, dtype=float)
    rng = np.random.default_rng(seed)
    return outputs + rng.normal(0.0, np.sqrt(variance), size=outputs.shape)


def simulate(
    system: ControlSystem,
    theta,
    input: np.ndarray,
    grid: TimeGrid,
    method: str = "step",
) -> Trajectory:
    """Integrate the system at parameters ``theta`` over ``grid``.

    Parameters
    ----------
    input : (K+1, J) array
        Control values at the grid nodes; the node K value only enters the
        output equation.
    method : {"step", "block_solve"}
        "step" advances x_{k+1} = x_k + dt (A x_k + B u_k + F) explicitly;
        "block_solve" assembles the lower block-bidiagonal system with
        identity diagonal blocks and -(I + dt A) sub-diagonal blocks and
        solves it.  Both encode the same recursion and agree to rounding.

    Raises
    ------
    SimulationUnstableError
        If a state entry becomes non-finite; the message names the first
        offending time step.
    """
    u = np.asarray(input, dtype=float)
    k_steps = grid.steps
    if u.ndim != 2 or u.shape != (k_steps + 1, system.J):
        raise ValueError(f"input has shape {u.shape}, expected ({k_steps + 1}, {system.J})")
    a = system.parametrization.matrix(theta)
    if method == "step":
        states = _simulate_step(system, a, u, grid)
    elif method == "block_solve":
        states = _simulate_block_solve(system, a, u, grid)
    else:
        raise ValueError(f"unknown simulation method {method!r}")
    _check_finite(states)
    with np.errstate(over="ignore", invalid="ignore"):
        outputs = states @ system.C.T + u @ system.D.T
    return Trajectory(times=grid.times, states=states, outputs=outputs)


def _check_finite(states: np.ndarray) -> None:
    finite_rows = np.all(np.isfinite(states), axis=1)
    if not finite_rows.all():
        raise SimulationUnstableError(int(np.argmin(finite_rows)))


def _simulate_step(system, a, u, grid):
    n = system.N
    k_steps = grid.steps
    stepper = np.eye(n) + grid.dt * a
    forcing = grid.dt * (u[:-1] @ system.B.T + system.F)
    states = np.empty((k_steps + 1, n))
    states[0] = system.x0
    x = system.x0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(k_steps):
            x = stepper @ x + forcing[k]
            states[k + 1] = x
    return states


def _simulate_block_solve(system, a, u, grid):
    n = system.N
    k_steps = grid.steps
    sub = -(np.eye(n) + grid.dt * a)
    shift = scipy.sparse.diags([np.ones(k_steps)], [-1], shape=(k_steps + 1, k_steps + 1))
    mat = scipy.sparse.eye((k_steps + 1) * n, format="csr") + scipy.sparse.kron(
        shift, sub, format="csr"
    )
    rhs = np.empty((k_steps + 1, n))
    rhs[0] = system.x0
    rhs[1:] = grid.dt * (u[:-1] @ system.B.T + system.F)
    with np.errstate(over="ignore", invalid="ignore"):
        sol = scipy.sparse.linalg.spsolve_triangular(mat, rhs.reshape(-1), lower=True)
    return sol.reshape(k_steps + 1, n)
