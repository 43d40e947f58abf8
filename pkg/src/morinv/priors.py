"""Gaussian parameter priors and the precision-weighted seminorm."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GaussianPrior:
    """Gaussian distribution N(mean, covariance) over the parameter space.

    ``covariance`` may be a 1-D array (interpreted as the diagonal, enabling
    the fast precision path and avoiding dense storage at large dimension) or
    a dense symmetric positive semi-definite matrix.
    """

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.covariance, dtype=float)
        if cov.ndim == 1:
            if cov.shape != mean.shape:
                raise ValueError("diagonal covariance length must match the mean")
        elif cov.ndim == 2:
            if cov.shape != (mean.size, mean.size):
                raise ValueError("covariance shape must match the mean dimension")
            if not np.allclose(cov, cov.T, atol=1e-12):
                raise ValueError("covariance must be symmetric")
        else:
            raise ValueError("covariance must be 1-D (diagonal) or 2-D")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def is_diagonal(self) -> bool:
        return self.covariance.ndim == 1

    @property
    def precision(self) -> np.ndarray:
        """K^-1: elementwise reciprocal for diagonal covariances, dense inverse
        otherwise (computed on demand)."""
        if self.is_diagonal:
            return 1.0 / self.covariance
        return np.linalg.inv(self.covariance)

    def apply_precision(self, vec: np.ndarray) -> np.ndarray:
        """Compute K^-1 @ vec without forming the inverse on the dense path.

        The dense solve on a diagonal matrix reduces to the same per-entry
        divisions as the fast path, so the two paths agree bitwise on
        diagonal inputs.
        """
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.dim,):
            raise ValueError(f"vector has shape {vec.shape}, expected ({self.dim},)")
        if self.is_diagonal:
            return vec / self.covariance
        return np.linalg.solve(self.covariance, vec)


def prior_seminorm(theta: np.ndarray, prior: GaussianPrior) -> float:
    """Squared precision-weighted norm theta^T K^-1 theta (a weighted 2-norm).

    Callers working with reduced parameters lift first (theta = P theta_r).
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    return float(np.dot(theta, prior.apply_precision(theta)))
