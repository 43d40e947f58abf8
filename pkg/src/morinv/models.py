"""Experiment model families: random stable generic systems and the
linearized fMRI effective-connectivity block model."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lti import ControlSystem, Parametrization, full_parametrization, vec_inverse
from .priors import GaussianPrior

STABILITY_MARGIN = 0.1

HEMODYNAMIC_PARAMETER_NAMES = ("tau_s", "tau_f", "tau_0", "e_0", "alpha", "v_0", "a_1", "a_2")


@dataclass(frozen=True)
class HemodynamicParams:
    """Parameters of the per-region hemodynamic forward chain.

    Defaults are the prior means; see :func:`hemodynamic_prior`.
    """

    tau_s: float = 0.65
    tau_f: float = 0.41
    tau_0: float = 0.98
    e_0: float = 0.34
    alpha: float = 0.32
    v_0: float = 1.0
    a_1: float = 1.0
    a_2: float = 1.0

    def __post_init__(self):
        if not (self.tau_s > 0 and self.tau_f > 0 and self.tau_0 > 0):
            raise ValueError("time constants tau_s, tau_f, tau_0 must be positive")
        if not 0.0 < self.e_0 < 1.0:
            raise ValueError("e_0 must lie in (0, 1)")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")


def hemodynamic_prior() -> dict[str, tuple[float, float]]:
    """Prior (mean, covariance) per hemodynamic parameter.

    v_0, a_1 and a_2 carry zero covariance: they are fixed at their prior
    value and excluded from estimation.
    """
    return {
        "tau_s": (0.65, 0.001),
        "tau_f": (0.41, 0.001),
        "tau_0": (0.98, 0.001),
        "e_0": (0.34, 0.001),
        "alpha": (0.32, 0.001),
        "v_0": (1.00, 0.0),
        "a_1": (1.00, 0.0),
        "a_2": (1.00, 0.0),
    }


def hemodynamic_forward(params: HemodynamicParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Linearized 4-state forward chain (A_for, B_for, C_for) for one region.

    The region's dynamic state drives the chain through B_for's first
    component; the chain's output is the BOLD-like measurement C_for y.
    """
    ts, tf, t0 = params.tau_s, params.tau_f, params.tau_0
    e0, al = params.e_0, params.alpha
    a_for = np.array(
        [
            [-1.0 / ts, 1.0 / tf, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
            [
                0.0,
                (1.0 / (t0 * e0)) * (1.0 - (1.0 - e0) * (1.0 - math.log(1.0 - e0))),
                -1.0 / t0,
                (1.0 - al) / (t0 * al),
            ],
            [0.0, 1.0 / t0, 0.0, -1.0 / (t0 * al)],
        ]
    )
    b_for = np.array([[1.0], [0.0], [0.0], [0.0]])
    c_for = np.array([[0.0, 0.0, -params.a_1 * params.v_0, params.a_2 * params.v_0]])
    return a_for, b_for, c_for


@dataclass(frozen=True)
class FmriModel:
    """Block-assembled connectivity model: n dynamic states plus one 4-state
    hemodynamic chain per region (N = 5n), parametrized by the n^2
    connectivity weights only."""

    n_regions: int
    hemodynamics: HemodynamicParams
    system: ControlSystem

    @property
    def state_dim(self) -> int:
        return self.system.N


def fmri_assemble(n: int, hemo: HemodynamicParams | None = None) -> FmriModel:
    """Assemble the n-region connectivity model.

    State layout is (x, y_1, ..., y_n) with x the n dynamic states and y_i
    the 4 forward states of region i.  theta in R^{n^2} fills the dynamic
    block only; the hemodynamic blocks stay at the supplied parameter values.
    Each region receives its own input channel and contributes one output.
    """
    if n < 1:
        raise ValueError("number of regions must be at least 1")
    hemo = hemo or HemodynamicParams()
    a_for, b_for, c_for = hemodynamic_forward(hemo)
    state_dim = 5 * n

    a_fixed = np.zeros((state_dim, state_dim))
    c = np.zeros((n, state_dim))
    for i in range(n):
        row = n + 4 * i
        a_fixed[row : row + 4, row : row + 4] = a_for
        a_fixed[row : row + 4, i] = b_for[:, 0]
        c[i, row : row + 4] = c_for[0]

    def amap(theta):
        a = a_fixed.copy()
        a[:n, :n] = vec_inverse(theta, n)
        return a

    parametrization = Parametrization(
        state_dim=state_dim,
        param_dim=n * n,
        map=amap,
        tag="fmri",
        meta=(n,) + tuple(getattr(hemo, name) for name in HEMODYNAMIC_PARAMETER_NAMES),
        adjoint_map=lambda grad: np.asarray(grad, dtype=float)[:n, :n].reshape(-1),
    )
    b = np.vstack([np.eye(n), np.zeros((4 * n, n))])
    system = ControlSystem(
        parametrization=parametrization,
        B=b,
        C=c,
        D=np.zeros((n, n)),
        F=np.zeros(state_dim),
        x0=np.zeros(state_dim),
    )
    return FmriModel(n_regions=n, hemodynamics=hemo, system=system)


def random_stable_matrix(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform [-1, 1] matrix shifted so max Re(eigenvalue) = -0.1."""
    a = rng.uniform(-1.0, 1.0, size=(n, n))
    shift = np.max(np.linalg.eigvals(a).real) + STABILITY_MARGIN
    return a - shift * np.eye(n)


def random_stable_system(
    n: int, n_inputs: int, n_outputs: int, seed: int
) -> tuple[ControlSystem, np.ndarray]:
    """Random fully parametrized stable system; returns it with the flattened
    (true) system matrix.  Deterministic per seed."""
    if min(n, n_inputs, n_outputs) < 1:
        raise ValueError("dimensions must be at least 1")
    rng = np.random.default_rng(seed)
    a = random_stable_matrix(n, rng)
    b = rng.uniform(-1.0, 1.0, size=(n, n_inputs))
    c = rng.uniform(-1.0, 1.0, size=(n_outputs, n))
    system = ControlSystem(
        parametrization=full_parametrization(n),
        B=b,
        C=c,
        D=np.zeros((n_outputs, n_inputs)),
        F=np.zeros(n),
        x0=np.zeros(n),
    )
    return system, a.reshape(-1)


def random_fmri_problem(
    n: int, seed: int, hemo: HemodynamicParams | None = None
) -> tuple[FmriModel, np.ndarray]:
    """n-region connectivity model with a random stable true connectivity."""
    model = fmri_assemble(n, hemo)
    rng = np.random.default_rng(seed)
    return model, random_stable_matrix(n, rng).reshape(-1)


def generic_prior(n: int) -> GaussianPrior:
    """Uninformative stability-suggesting prior: mean vec(-I), covariance I
    (stored diagonally)."""
    if n < 1:
        raise ValueError("state dimension must be at least 1")
    return GaussianPrior(mean=(-np.eye(n)).reshape(-1), covariance=np.ones(n * n))


def connectivity_prior(n_regions: int) -> GaussianPrior:
    """Prior over the n^2 connectivity weights of the fMRI model."""
    return generic_prior(n_regions)
