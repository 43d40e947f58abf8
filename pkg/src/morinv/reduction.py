"""Greedy combined reduction of state and parameter spaces.

The offline loop builds an orthonormal state basis V (N x m) and an
orthonormal parameter basis P (N^2 x k).  Restriction is multiplication by
the transpose, lifting is plain multiplication.  Each iteration projects the
system onto the current bases, maximizes a configurable objective over the
parameters, inserts the maximizer into P, simulates the full system there,
and inserts a selection of the resulting snapshots into V.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .lti import ControlSystem, Parametrization, SimulationUnstableError, TimeGrid, simulate
from .optimize import NonFiniteStartError, OptimizeOptions, OptimizeResult, minimize
from .priors import GaussianPrior, prior_seminorm

ORTH_TOL = 1e-10
POD_TRUNCATION = 1e-12

OBJECTIVES = ("original", "data_driven", "data_only")
SELECTIONS = ("mean", "pod", "pod_greedy")

# weight defaults per objective: (alpha, beta, gamma)
_DEFAULT_WEIGHTS = {
    "original": (0.5, 0.5, 0.0),
    "data_driven": (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0),
    "data_only": (0.0, 0.5, 0.5),
}


class ConfigurationError(ValueError):
    """Invalid combination of reduction settings."""


@dataclass(frozen=True)
class ProjectionPair:
    """Orthonormal state basis V (N x m) and parameter basis P (P_dim x k)."""

    V: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "V", np.atleast_2d(np.asarray(self.V, dtype=float)))
        object.__setattr__(self, "P", np.atleast_2d(np.asarray(self.P, dtype=float)))

    @property
    def m(self) -> int:
        return self.V.shape[1]

    @property
    def k(self) -> int:
        return self.P.shape[1]


def orthonormality_defect(basis: np.ndarray) -> float:
    """max |basis^T basis - I|; zero for empty bases."""
    basis = np.atleast_2d(basis)
    if basis.shape[1] == 0:
        return 0.0
    gram = basis.T @ basis
    return float(np.max(np.abs(gram - np.eye(basis.shape[1]))))


@dataclass(frozen=True)
class ReducedSystem:
    """Projected surrogate; ``system`` is itself a ControlSystem whose
    parametrization assembles A_r(theta_r) = V^T A(P theta_r) V."""

    system: ControlSystem
    V: np.ndarray
    P: np.ndarray

    @property
    def m(self) -> int:
        return self.V.shape[1]

    @property
    def k(self) -> int:
        return self.P.shape[1]

    def lift_params(self, theta_r) -> np.ndarray:
        return self.P @ np.asarray(theta_r, dtype=float)

    def restrict_params(self, theta) -> np.ndarray:
        return self.P.T @ np.asarray(theta, dtype=float)

    def lift_state(self, x_r) -> np.ndarray:
        return self.V @ np.asarray(x_r, dtype=float)

    def restrict_state(self, x) -> np.ndarray:
        return self.V.T @ np.asarray(x, dtype=float)


def project_system(system: ControlSystem, V: np.ndarray, P: np.ndarray) -> ReducedSystem:
    """Galerkin-project ``system`` onto orthonormal bases V and P."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    P = np.atleast_2d(np.asarray(P, dtype=float))
    n = system.N
    p_dim = system.parametrization.param_dim
    if V.shape[0] != n:
        raise ValueError(f"V has {V.shape[0]} rows, state dimension is {n}")
    if P.shape[0] != p_dim:
        raise ValueError(f"P has {P.shape[0]} rows, parameter dimension is {p_dim}")
    for name, basis in (("V", V), ("P", P)):
        defect = orthonormality_defect(basis)
        if defect > 1e-8:
            raise ValueError(f"{name} is not orthonormal (defect {defect:.2e})")

    full_map = system.parametrization.matrix

    def assemble(theta_r):
        return V.T @ full_map(P @ theta_r) @ V

    reduced_param = Parametrization(
        state_dim=V.shape[1], param_dim=P.shape[1], map=assemble, tag="reduced"
    )
    reduced = ControlSystem(
        parametrization=reduced_param,
        B=V.T @ system.B,
        C=system.C @ V,
        D=system.D,
        F=V.T @ system.F,
        x0=V.T @ system.x0,
    )
    return ReducedSystem(system=reduced, V=V, P=P)


def select_mean(traj) -> np.ndarray:
    """Discrete time average of the states, (dt/T) sum_{k=1..K} x_k.

    The sum runs over the K post-initial nodes so a constant state is
    returned unchanged.
    """
    times = traj.times
    if times.size < 2:
        raise ValueError("trajectory must contain at least one step")
    dt = times[1] - times[0]
    horizon = times[-1] - times[0]
    with np.errstate(over="ignore"):
        return (dt / horizon) * traj.states[1:].sum(axis=0)


def select_pod(traj, rank: int) -> np.ndarray:
    """Leading left singular vectors of the state snapshot matrix.

    Directions with singular value below 1e-12 of the largest are dropped;
    at most ``rank`` columns are returned.
    """
    if rank < 1:
        raise ValueError("rank must be at least 1")
    return _pod_modes(traj.states.T, rank)


def select_pod_greedy(traj, V: np.ndarray, rank: int) -> np.ndarray:
    """POD of the orthogonal projection error of the snapshots onto span(V).

    Returns an empty selection when every error snapshot has norm below
    1e-12 (the trajectory already lives in the current basis).
    """
    if rank < 1:
        raise ValueError("rank must be at least 1")
    V = np.atleast_2d(np.asarray(V, dtype=float))
    snapshots = traj.states.T
    with np.errstate(over="ignore"):
        errors = snapshots - V @ (V.T @ snapshots)
        if np.max(np.linalg.norm(errors, axis=0), initial=0.0) < POD_TRUNCATION:
            return np.empty((snapshots.shape[0], 0))
    return _pod_modes(errors, rank)


def _pod_modes(snapshots, rank):
    u, s, _ = np.linalg.svd(snapshots, full_matrices=False)
    if s.size == 0 or s[0] <= 0.0:
        return np.empty((snapshots.shape[0], 0))
    keep = min(rank, int(np.sum(s > POD_TRUNCATION * s[0])))
    return u[:, :keep]


def orthogonalize_insert(basis: np.ndarray, candidates: np.ndarray, tol: float = ORTH_TOL) -> np.ndarray:
    """Append candidate columns to an orthonormal basis by twice-applied
    Gram-Schmidt, discarding candidates whose residual norm is at most tol.

    Candidates are normalized to unit max-magnitude first, which makes the
    discard tolerance scale-invariant and keeps the arithmetic finite for
    near-overflow snapshot vectors; non-finite candidates are discarded.
    """
    basis = np.atleast_2d(np.asarray(basis, dtype=float))
    candidates = np.asarray(candidates, dtype=float)
    if candidates.ndim == 1:
        candidates = candidates[:, None]
    out = basis
    for j in range(candidates.shape[1]):
        vec = candidates[:, j]
        peak = np.max(np.abs(vec), initial=0.0)
        if peak == 0.0 or not np.isfinite(peak):
            continue
        vec = vec / peak
        residual = vec - out @ (out.T @ vec)
        residual = residual - out @ (out.T @ residual)
        norm = np.linalg.norm(residual)
        if norm > tol:
            out = np.column_stack([out, residual / norm])
    return out


def trust_lift(theta_tr: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Zero-pad a trust-region coordinate vector to the width of P, then lift.

    With orthonormal P this is an isometry from the trust-region coordinates
    into the full parameter space.
    """
    theta_tr = np.atleast_1d(np.asarray(theta_tr, dtype=float))
    k = P.shape[1]
    if theta_tr.size > k:
        raise ValueError(f"trust-region vector has {theta_tr.size} entries, P has {k} columns")
    padded = np.zeros(k)
    padded[: theta_tr.size] = theta_tr
    return P @ padded


@dataclass
class ReductionConfig:
    """Settings for :func:`combined_reduce`.

    Unset weights resolve to the objective defaults: alpha=beta=1/2 for
    "original", alpha=beta=gamma=1/3 for "data_driven" and beta=gamma=1/2
    for "data_only" (which forces alpha=0).  ``p`` is the output-misfit norm
    order in [1, inf]; misfits are summed over time nodes and channels with
    no quadrature weights.  When a dependent parameter maximizer would be
    discarded, ``complete_on_discard`` keeps the basis growing by inserting
    an inexact Gauss-Newton direction of the misfit at the chosen point
    (``completion_cg_iters`` matrix-free CG iterations; 0 gives the plain
    adjoint gradient), or the first canonical direction outside span(P) when
    no such direction is available.  Trust-region lifts always land in
    span(P), so completion is their growth mechanism.
    """

    iterations: int
    objective: str = "original"
    selection: str = "pod_greedy"
    trust_region: bool = False
    pod_rank: int = 1
    alpha: float | None = None
    beta: float | None = None
    gamma: float | None = None
    p: float = 2.0
    optimizer: OptimizeOptions | None = None
    orth_tol: float = ORTH_TOL
    complete_on_discard: bool = True
    completion_cg_iters: int = 10
    completion_lm_steps: int = 5
    simulate_method: str = "step"

    def validate(self) -> None:
        if self.iterations < 0:
            raise ConfigurationError("iterations must be non-negative")
        if self.objective not in OBJECTIVES:
            raise ConfigurationError(f"unknown objective {self.objective!r}")
        if self.selection not in SELECTIONS:
            raise ConfigurationError(f"unknown selection {self.selection!r}")
        if self.pod_rank < 1:
            raise ConfigurationError("pod_rank must be at least 1")
        if self.p < 1:
            raise ConfigurationError("norm order p must be at least 1")
        for name, value in (("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)):
            if value is not None and not 0.0 <= value <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1]")
        if self.objective == "original" and self.gamma not in (None, 0.0):
            raise ConfigurationError("objective 'original' does not use data (gamma must be 0)")
        if self.objective == "data_only" and self.alpha not in (None, 0.0):
            raise ConfigurationError("objective 'data_only' forbids the output-error term (alpha must be 0)")

    def resolved_weights(self) -> tuple[float, float, float]:
        base = _DEFAULT_WEIGHTS[self.objective]
        alpha = base[0] if self.alpha is None else self.alpha
        beta = base[1] if self.beta is None else self.beta
        gamma = base[2] if self.gamma is None else self.gamma
        if self.objective == "original":
            gamma = 0.0
        if self.objective == "data_only":
            alpha = 0.0
        return alpha, beta, gamma


@dataclass
class IterationRecord:
    iteration: int
    objective_value: float
    theta: np.ndarray
    dim_P: int
    dim_V: int
    opt_dim: int
    objective_full_sims: int
    snapshot_sims: int
    adjoint_solves: int
    completion_full_sims: int
    wall_ms: float
    optimizer_converged: bool
    candidate_discarded: bool
    completion_kind: str


@dataclass
class ReductionTrace:
    records: list[IterationRecord] = field(default_factory=list)
    offline_ms: float = 0.0

    @property
    def objective_full_sims(self) -> int:
        """Full-order simulations triggered by objective evaluations."""
        return sum(r.objective_full_sims for r in self.records)

    @property
    def snapshot_sims(self) -> int:
        return sum(r.snapshot_sims for r in self.records)

    @property
    def adjoint_solves(self) -> int:
        return sum(r.adjoint_solves for r in self.records)


def output_misfit(diff: np.ndarray, p: float) -> float:
    """p-norm misfit of a time-by-channel residual: sum |.|^p over all nodes
    and channels for finite p, the maximum for p = inf.

    Overflow to inf is deliberate: the optimizer rejects such points."""
    magnitude = np.abs(diff)
    if np.isinf(p):
        return float(magnitude.max(initial=0.0))
    with np.errstate(over="ignore"):
        return float(np.sum(magnitude**p))


@dataclass
class ObjectiveContext:
    """Inputs for one greedy iteration's objective evaluations.

    ``full_sims`` counts the full-order solves triggered by objective
    evaluations; snapshot solves performed between iterations are accounted
    separately in the trace.
    """

    reduced: ReducedSystem
    prior: GaussianPrior
    grid: TimeGrid
    input: np.ndarray
    alpha: float
    beta: float
    gamma: float
    p: float
    full_system: ControlSystem | None = None
    data: np.ndarray | None = None
    trust_region: bool = False
    simulate_method: str = "step"
    full_sims: int = 0

    def split(self, theta) -> tuple[np.ndarray, np.ndarray]:
        """Derive (theta_r, theta_full) from the optimization variable."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if self.trust_region:
            padded = np.zeros(self.reduced.k)
            padded[: theta.size] = theta
            return padded, self.reduced.P @ padded
        return self.reduced.P.T @ theta, theta


def objective(theta, context: ObjectiveContext) -> float:
    """Greedy objective J(theta), to be maximized.

    original:     alpha ||y_r - y||_p^p - beta ||P theta_r||^2_{K^-1}
    data_driven:  the above minus gamma ||y_r - y_d||_p^p
    data_only:    -beta ||P theta_r||^2_{K^-1} - gamma ||y_r - y_d||_p^p

    In trust-region mode ``theta`` is the trust-region coordinate vector and
    theta_r is its zero-padding; otherwise theta_r = P^T theta.  Unstable
    simulations yield -inf (the optimizer rejects the point).
    """
    ctx = context
    if ctx.alpha > 0.0 and ctx.full_system is None:
        raise ConfigurationError("objective with alpha > 0 requires the full system")
    if ctx.gamma > 0.0 and ctx.data is None:
        raise ConfigurationError("objective with gamma > 0 requires output data")
    theta_r, theta_full = ctx.split(theta)

    try:
        outputs_reduced = None
        if ctx.alpha > 0.0 or ctx.gamma > 0.0:
            outputs_reduced = simulate(
                ctx.reduced.system, theta_r, ctx.input, ctx.grid, ctx.simulate_method
            ).outputs
        value = 0.0
        if ctx.alpha > 0.0:
            ctx.full_sims += 1
            outputs_full = simulate(
                ctx.full_system, theta_full, ctx.input, ctx.grid, ctx.simulate_method
            ).outputs
            value += ctx.alpha * output_misfit(outputs_reduced - outputs_full, ctx.p)
        value -= ctx.beta * prior_seminorm(ctx.reduced.P @ theta_r, ctx.prior)
        if ctx.gamma > 0.0:
            value -= ctx.gamma * output_misfit(outputs_reduced - ctx.data, ctx.p)
        return value
    except SimulationUnstableError:
        return -np.inf


class _MisfitLinearization:
    """Tangent and adjoint passes of the output map theta -> y around a
    stored trajectory, for parametrizations with an ``adjoint_map``.

    Everything is matrix-free in the parameter space: a tangent pass costs
    one forward recursion, an adjoint pass one backward recursion, and only
    vectors of the parameter length are formed.
    """

    def __init__(self, system: ControlSystem, theta, traj, grid: TimeGrid):
        self.system = system
        self.grid = grid
        self.states = traj.states
        self.stepper = np.eye(system.N) + grid.dt * system.parametrization.matrix(theta)
        self.a_base = system.parametrization.matrix(np.zeros(system.parametrization.param_dim))
        self.passes = 0

    def tangent(self, direction: np.ndarray) -> np.ndarray:
        """J v: first-order output change along a parameter direction."""
        self.passes += 1
        a_dir = self.system.parametrization.matrix(direction) - self.a_base
        k_steps = self.grid.steps
        delta = np.zeros(self.system.N)
        out = np.empty((k_steps + 1, self.system.O))
        out[0] = self.system.C @ delta
        source = self.grid.dt * (self.states[:-1] @ a_dir.T)
        for k in range(k_steps):
            delta = self.stepper @ delta + source[k]
            out[k + 1] = self.system.C @ delta
        return out

    def adjoint(self, weights: np.ndarray) -> np.ndarray:
        """J^T w folded into the parameter space."""
        self.passes += 1
        source = np.asarray(weights, dtype=float) @ self.system.C
        k_steps = self.grid.steps
        lam = np.empty((k_steps + 1, self.system.N))
        lam[k_steps] = source[k_steps]
        for k in range(k_steps - 1, 0, -1):
            lam[k] = source[k] + self.stepper.T @ lam[k + 1]
        grad_matrix = self.grid.dt * (lam[1:].T @ self.states[:-1])
        return self.system.parametrization.adjoint_map(grad_matrix)


def _gauss_newton_candidates(lin, residual, cg_iters):
    """Partial CG solutions of J^T J d = J^T r at a few truncation depths.

    Early truncation acts as Levenberg-style damping; returning several
    depths lets the caller validate against the true misfit.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        b = lin.adjoint(residual)
        if not np.all(np.isfinite(b)) or not np.any(b):
            return []
        checkpoints = sorted({1, max(2, cg_iters // 3), cg_iters} & set(range(1, cg_iters + 1)))
        candidates = []
        direction = np.zeros_like(b)
        g = b.copy()
        p = g.copy()
        gg = float(g @ g)
        for it in range(1, cg_iters + 1):
            q = lin.adjoint(lin.tangent(p))
            pq = float(p @ q)
            if not np.isfinite(pq) or pq <= 0.0:
                break
            alpha = gg / pq
            direction = direction + alpha * p
            g = g - alpha * q
            gg_new = float(g @ g)
            if it in checkpoints and np.all(np.isfinite(direction)) and np.any(direction):
                # the Gauss-Newton step is the negative of the normal-equation
                # solution for the residual r = y - ref
                candidates.append(-direction)
            if not np.isfinite(gg_new) or gg_new <= 1e-24 * gg:
                break
            p = g + (gg_new / gg) * p
            gg = gg_new
    if not candidates and np.all(np.isfinite(b)):
        candidates.append(-b)
    return candidates


def misfit_descent_direction(
    system: ControlSystem,
    theta,
    traj,
    reference_outputs: np.ndarray,
    grid: TimeGrid,
    cg_iters: int = 10,
) -> tuple[np.ndarray | None, int]:
    """Inexact Gauss-Newton direction of sum_k ||y_k - ref_k||_2^2 at theta.

    Solves J^T J d = J^T r matrix-free by conjugate gradients on the normal
    equations, truncated after ``cg_iters`` iterations (0 returns the plain
    adjoint gradient direction).  Uses the already-computed trajectory; each
    CG iteration costs one tangent and one adjoint pass of the recursion and
    nothing of size P x P, so the construction stays feasible at extreme
    parameter counts.  Returns (direction, passes); direction is None when
    the parametrization has no ``adjoint_map`` or the arithmetic left the
    finite range.
    """
    if system.parametrization.adjoint_map is None:
        return None, 0
    lin = _MisfitLinearization(system, theta, traj, grid)
    residual = traj.outputs - np.asarray(reference_outputs, dtype=float)
    if cg_iters < 1:
        with np.errstate(over="ignore", invalid="ignore"):
            b = lin.adjoint(residual)
        if not np.all(np.isfinite(b)) or not np.any(b):
            return None, lin.passes
        return -b, lin.passes
    candidates = _gauss_newton_candidates(lin, residual, cg_iters)
    if not candidates:
        return None, lin.passes
    return candidates[-1], lin.passes


def _map_advance_direction(
    system, theta_fit, traj_fit, reference, prior, grid, input, config
) -> tuple[np.ndarray | None, int, int]:
    """Direction from the current fit toward the regularized MAP point.

    Runs a few Levenberg-Marquardt steps on the full MAP functional
    ||y(theta) - ref||_2^2 + ||theta - kappa||^2_{K^-1}, with the damped
    normal operator J^T J + K^-1 + lambda applied matrix-free (one tangent
    plus one adjoint pass per inner CG iteration).  Including the prior keeps
    the path inside the plausible region, so the inserted direction points at
    the solution the online phase will look for.  Returns (direction, passes,
    full solves); direction is None when no step was accepted.
    """
    if system.parametrization.adjoint_map is None:
        return None, 0, 0
    reference = np.asarray(reference, dtype=float)
    kappa = prior.mean

    def functional(residual, theta):
        return float(np.sum(residual**2)) + float(
            (theta - kappa) @ prior.apply_precision(theta - kappa)
        )

    theta, traj = theta_fit, traj_fit
    value = functional(traj.outputs - reference, theta)
    passes = 0
    full_sims = 0
    lam = None
    moved = False
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(config.completion_lm_steps):
            lin = _MisfitLinearization(system, theta, traj, grid)
            residual = traj.outputs - reference
            grad_half = lin.adjoint(residual) + prior.apply_precision(theta - kappa)
            if not np.all(np.isfinite(grad_half)) or not np.any(grad_half):
                break
            if lam is None:
                unit = grad_half / np.linalg.norm(grad_half)
                lam = 1e-3 * float(np.sum(lin.tangent(unit) ** 2))

            def damped_apply(vec, lam=lam, lin=lin):
                return lin.adjoint(lin.tangent(vec)) + prior.apply_precision(vec) + lam * vec

            accepted = False
            for _ in range(5):
                step = -_conjugate_gradient(damped_apply, grad_half, config.completion_cg_iters)
                candidate = theta + step
                full_sims += 1
                try:
                    traj_c = simulate(system, candidate, input, grid, config.simulate_method)
                    value_c = functional(traj_c.outputs - reference, candidate)
                except (SimulationUnstableError, ValueError):
                    value_c = np.inf
                if np.isfinite(value_c) and value_c < value:
                    theta, traj, value = candidate, traj_c, value_c
                    lam = max(lam * 0.3, 1e-14)
                    accepted = True
                    moved = True
                    break
                lam *= 10.0
            passes += lin.passes
            if not accepted:
                break
    if not moved:
        return None, passes, full_sims
    return theta - theta_fit, passes, full_sims


def _conjugate_gradient(apply, rhs, iters):
    """Plain CG for a symmetric positive definite matrix-free operator."""
    solution = np.zeros_like(rhs)
    residual = rhs.copy()
    direction = residual.copy()
    rr = float(residual @ residual)
    for _ in range(iters):
        op_dir = apply(direction)
        curvature = float(direction @ op_dir)
        if not np.isfinite(curvature) or curvature <= 0.0:
            break
        alpha = rr / curvature
        solution += alpha * direction
        residual -= alpha * op_dir
        rr_new = float(residual @ residual)
        if not np.isfinite(rr_new) or rr_new <= 1e-20 * rr:
            break
        direction = residual + (rr_new / rr) * direction
        rr = rr_new
    return solution


def _first_completion_direction(P: np.ndarray, tol: float) -> np.ndarray | None:
    """First canonical basis vector with a component outside span(P)."""
    row_energy = np.sum(P**2, axis=1)
    outside = np.flatnonzero(row_energy < 1.0 - tol)
    if outside.size == 0:
        return None
    direction = np.zeros(P.shape[0])
    direction[outside[0]] = 1.0
    return direction


def _state_selection(traj, V, config):
    if config.selection == "mean":
        return select_mean(traj)[:, None]
    if config.selection == "pod":
        return select_pod(traj, config.pod_rank)
    return select_pod_greedy(traj, V, config.pod_rank)


def _span_fit_point(system, reduced, prior, grid, input, data, config, warm=None):
    """Regularized best data fit within the current spans (same functional as
    the online phase), warm-started from the previous iteration's fit; spans
    are nested, so warm-starting makes the fit values non-increasing over the
    loop.  Returns (theta_fit, trajectory, coordinates) or None."""
    P = reduced.P

    def fit_objective(theta_r):
        try:
            outputs = simulate(
                reduced.system, theta_r, input, grid, config.simulate_method
            ).outputs
        except SimulationUnstableError:
            return np.inf
        with np.errstate(over="ignore"):
            return float(np.sum((outputs - data) ** 2)) + prior_seminorm(
                P @ theta_r - prior.mean, prior
            )

    start = P.T @ prior.mean
    if warm is not None:
        start = np.zeros(P.shape[1])
        start[: warm.size] = warm[: P.shape[1]]
    opts = OptimizeOptions(max_evals=max(2000, 400 * P.shape[1]), method="quasi_newton_fd")
    try:
        result = minimize(fit_objective, start, opts)
    except NonFiniteStartError:
        return None
    theta_fit = P @ result.x_best
    try:
        traj_fit = simulate(system, theta_fit, input, grid, config.simulate_method)
    except SimulationUnstableError:
        return None
    return theta_fit, traj_fit, result.x_best


def _maximize(ctx: ObjectiveContext, start: np.ndarray, opts) -> OptimizeResult:
    """Minimize the negated objective; if the warm start itself is unstable
    (non-finite), retry once from the zero point of the current search space
    so one bad iterate cannot kill the loop."""
    negated = lambda th: -objective(th, ctx)  # noqa: E731
    try:
        return minimize(negated, start, opts)
    except NonFiniteStartError:
        pass
    safe = np.zeros_like(start)
    try:
        return minimize(negated, safe, opts)
    except NonFiniteStartError:
        return OptimizeResult(
            x_best=safe, f_best=np.inf, evals=0, converged=False, reason="nonfinite_start"
        )


def combined_reduce(
    system: ControlSystem,
    prior: GaussianPrior,
    grid: TimeGrid,
    input: np.ndarray,
    config: ReductionConfig,
    data: np.ndarray | None = None,
) -> tuple[ProjectionPair, ReductionTrace]:
    """Run the greedy combined reduction for ``config.iterations`` iterations.

    P starts as the normalized prior mean; V starts from the configured
    selection applied to the trajectory at the prior mean.  Trust-region mode
    optimizes a coordinate vector that starts at the scalar 1 and gains one
    dimension per iteration (dimension min(I, k) at iteration I); otherwise a
    full-dimension parameter vector is optimized, warm-started from the
    previous iterate.

    Returns the projection pair and a per-iteration trace (iteration 0 is the
    initialization).
    """
    config.validate()
    alpha, beta, gamma = config.resolved_weights()
    if gamma > 0.0 and data is None:
        raise ConfigurationError(f"objective {config.objective!r} requires output data")
    if data is not None:
        data = np.asarray(data, dtype=float)
    param_dim = system.parametrization.param_dim
    if prior.dim != param_dim:
        raise ValueError(f"prior dimension {prior.dim} does not match parameter dimension {param_dim}")
    mean_norm = np.linalg.norm(prior.mean)
    if mean_norm == 0.0:
        raise ValueError("prior mean must be nonzero (it seeds the parameter basis)")

    t_total = time.perf_counter()
    trace = ReductionTrace()

    t_iter = time.perf_counter()
    P = (prior.mean / mean_norm)[:, None]
    traj = simulate(system, prior.mean, input, grid, config.simulate_method)
    V = orthogonalize_insert(
        np.empty((system.N, 0)), _state_selection(traj, np.empty((system.N, 0)), config), config.orth_tol
    )
    trace.records.append(
        IterationRecord(
            iteration=0,
            objective_value=np.nan,
            theta=np.array(prior.mean, copy=True),
            dim_P=P.shape[1],
            dim_V=V.shape[1],
            opt_dim=0,
            objective_full_sims=0,
            snapshot_sims=1,
            adjoint_solves=0,
            completion_full_sims=0,
            wall_ms=(time.perf_counter() - t_iter) * 1e3,
            optimizer_converged=True,
            candidate_discarded=False,
            completion_kind="",
        )
    )

    theta_warm = np.array(prior.mean, copy=True)
    trust_warm = np.array([1.0])
    fit_warm = None

    for iteration in range(1, config.iterations + 1):
        t_iter = time.perf_counter()
        reduced = project_system(system, V, P)
        ctx = ObjectiveContext(
            reduced=reduced,
            prior=prior,
            grid=grid,
            input=input,
            alpha=alpha,
            beta=beta,
            gamma=gamma,
            p=config.p,
            full_system=system if alpha > 0.0 else None,
            data=data,
            trust_region=config.trust_region,
            simulate_method=config.simulate_method,
        )

        if config.trust_region:
            opt_dim = min(iteration, P.shape[1])
            start = np.zeros(opt_dim)
            start[: min(trust_warm.size, opt_dim)] = trust_warm[:opt_dim]
        else:
            opt_dim = param_dim
            start = theta_warm

        result = _maximize(ctx, start, config.optimizer)

        if config.trust_region:
            trust_warm = result.x_best
            theta_r_chosen = np.zeros(P.shape[1])
            theta_r_chosen[: result.x_best.size] = result.x_best
            theta_chosen = P @ theta_r_chosen
        else:
            theta_chosen = result.x_best
            theta_warm = theta_chosen
            theta_r_chosen = P.T @ theta_chosen

        try:
            traj = simulate(system, theta_chosen, input, grid, config.simulate_method)
        except SimulationUnstableError:
            # maximizer sits past the stability cliff: no usable snapshots,
            # the loop continues on the parameter side only
            traj = None

        P_new = orthogonalize_insert(P, theta_chosen, config.orth_tol)
        discarded = P_new.shape[1] == P.shape[1]
        completion_kind = ""
        adjoint_solves = 0
        completion_full_sims = 0
        if discarded and config.complete_on_discard and P_new.shape[1] < param_dim:
            # The lifted trust-region maximizer always lies in span(P); extend
            # the span along an inexact Gauss-Newton direction of the misfit
            # (matrix-free tangent/adjoint passes), with the first canonical
            # direction outside the span as fallback.  With data present the
            # direction is taken at the in-span regularized fit (the point
            # the online phase will care about); without data it is taken at
            # the chosen maximizer against the surrogate outputs.
            descent = None
            if data is not None:
                point = _span_fit_point(
                    system, reduced, prior, grid, input, data, config, warm=fit_warm
                )
                if point is not None:
                    theta_fit, traj_fit, fit_warm = point
                    descent, adjoint_solves, lm_sims = _map_advance_direction(
                        system, theta_fit, traj_fit, data, prior, grid, input, config
                    )
                    if descent is None:
                        descent, extra = misfit_descent_direction(
                            system, theta_fit, traj_fit, data, grid, 0
                        )
                        adjoint_solves += extra
                    completion_full_sims = 1 + lm_sims
                    # the fit point is the estimate the online phase refines;
                    # its snapshots are the informative ones for V here
                    traj = traj_fit
            elif traj is not None:
                try:
                    reference = simulate(
                        reduced.system, theta_r_chosen, input, grid, config.simulate_method
                    ).outputs
                except SimulationUnstableError:
                    reference = None
                if reference is not None:
                    descent, adjoint_solves = misfit_descent_direction(
                        system, theta_chosen, traj, reference, grid, config.completion_cg_iters
                    )
            if descent is not None:
                P_try = orthogonalize_insert(P_new, descent, config.orth_tol)
                if P_try.shape[1] > P_new.shape[1]:
                    P_new = P_try
                    completion_kind = "gauss_newton"
            if not completion_kind:
                direction = _first_completion_direction(P_new, config.orth_tol)
                if direction is not None:
                    P_new = orthogonalize_insert(P_new, direction, config.orth_tol)
                    completion_kind = "canonical"
        P = P_new

        if traj is not None:
            V = orthogonalize_insert(V, _state_selection(traj, V, config), config.orth_tol)

        trace.records.append(
            IterationRecord(
                iteration=iteration,
                objective_value=-result.f_best,
                theta=theta_chosen,
                dim_P=P.shape[1],
                dim_V=V.shape[1],
                opt_dim=opt_dim,
                objective_full_sims=ctx.full_sims,
                snapshot_sims=1,
                adjoint_solves=adjoint_solves,
                completion_full_sims=completion_full_sims,
                wall_ms=(time.perf_counter() - t_iter) * 1e3,
                optimizer_converged=result.converged,
                candidate_discarded=discarded,
                completion_kind=completion_kind,
            )
        )

    trace.offline_ms = (time.perf_counter() - t_total) * 1e3
    return ProjectionPair(V=V, P=P), trace
