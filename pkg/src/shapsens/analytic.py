"""Closed-form sensitivity indices for linear models with Gaussian inputs.

For ``Y = beta0 + beta . X`` with ``X ~ N(mu, Sigma)``, every conditional
moment is available in closed form, so Shapley effects and Sobol' indices can
be computed exactly by enumerating coordinate subsets.  These functions serve
as oracles in the test suite and as a fast path for users with
linear-Gaussian problems.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg as sla

from .errors import DistributionError, SizeError
from .inputs import GaussianJoint

MAX_ENUMERATION_DIM = 15
_EIG_RCOND = 1e-12


@dataclass(frozen=True, eq=False)
class LinearGaussianProblem:
    """An affine response over a Gaussian joint."""

    beta0: float
    beta: np.ndarray
    joint: GaussianJoint

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float).reshape(-1)
        if beta.shape[0] != self.joint.dim:
            raise DistributionError(
                f"{beta.shape[0]} coefficients for a {self.joint.dim}-dimensional joint"
            )
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "beta0", float(self.beta0))

    @property
    def dim(self) -> int:
        return self.joint.dim


@dataclass(frozen=True, eq=False)
class AnalyticIndices:
    """Exact per-input indices; shapley sums to one within 1e-10."""

    shapley: np.ndarray
    first_order: np.ndarray
    total_independent: np.ndarray
    variance: float

    def __post_init__(self):
        if not self.variance > 0.0:
            raise DistributionError("output variance must be positive")
        if abs(float(np.sum(self.shapley)) - 1.0) > 1e-10:
            raise DistributionError("Shapley effects do not sum to one")


def _explained_variances(problem: LinearGaussianProblem) -> np.ndarray:
    """Var(E[Y | X_u]) for every coordinate subset u, indexed by bitmask.

    Uses the Schur-complement identity
    ``Var(E[Y|X_u]) = beta' S_{.,u} S_{u,u}^-1 S_{u,.} beta`` via a symmetric
    eigendecomposition of each conditioning block.  Eigenvalues below
    ``1e-12 * max`` are treated as exact zeros so that consistent degenerate
    blocks (perfectly correlated coordinates) evaluate to their limiting
    value; negative eigenvalues beyond tolerance raise.
    """
    d = problem.dim
    if d > MAX_ENUMERATION_DIM:
        raise SizeError(
            f"subset enumeration supports at most {MAX_ENUMERATION_DIM} inputs, got {d}"
        )
    beta = problem.beta
    cov = problem.joint.covariance
    sigma2 = float(beta @ cov @ beta)
    if not sigma2 > 0.0:
        raise DistributionError("the response has zero variance")

    tau2 = np.zeros(1 << d)
    tau2[(1 << d) - 1] = sigma2
    for mask in range(1, (1 << d) - 1):
        u = np.array([j for j in range(d) if (mask >> j) & 1], dtype=np.intp)
        block = cov[np.ix_(u, u)]
        cross_beta = cov[:, u].T @ beta  # S_{u,.} beta
        w, v = sla.eigh(block)
        wmax = w[-1]
        if wmax <= 0.0:
            raise DistributionError("conditioning block is not positive semidefinite")
        if w[0] < -_EIG_RCOND * wmax:
            raise DistributionError("conditioning block has a negative eigenvalue")
        keep = w > _EIG_RCOND * wmax
        t = v.T @ cross_beta
        tau2[mask] = float(np.sum(t[keep] ** 2 / w[keep]))
    return tau2


def _combine_shapley(tau2: np.ndarray, d: int) -> np.ndarray:
    sigma2 = tau2[-1]
    weights = [1.0 / (d * math.comb(d - 1, size)) for size in range(d)]
    popcount = np.array([bin(m).count("1") for m in range(1 << d)])
    shapley = np.zeros(d)
    for i in range(d):
        bit = 1 << i
        acc = 0.0
        for mask in range(1 << d):
            if mask & bit:
                continue
            acc += weights[popcount[mask]] * (tau2[mask | bit] - tau2[mask])
        shapley[i] = acc / sigma2
    return shapley


def shapley_linear_gaussian(problem: LinearGaussianProblem) -> np.ndarray:
    """Exact Shapley effects by subset enumeration (d <= 15).

    Each input's effect averages the increments of explained variance over
    all orderings, computed subset-wise with binomial weights and normalized
    by the total variance.
    """
    tau2 = _explained_variances(problem)
    return _combine_shapley(tau2, problem.dim)


def sobol_linear_gaussian(problem: LinearGaussianProblem):
    """Exact (full first-order, independent total) Sobol' indices.

    ``S_j = Var(E[Y|X_j]) / Var(Y)`` and
    ``ST_j = E[Var(Y|X_-j)] / Var(Y) = 1 - Var(E[Y|X_-j]) / Var(Y)``.
    """
    d = problem.dim
    tau2 = _explained_variances(problem)
    sigma2 = tau2[-1]
    full = (1 << d) - 1
    s = np.array([tau2[1 << j] / sigma2 for j in range(d)])
    st = np.array([(sigma2 - tau2[full ^ (1 << j)]) / sigma2 for j in range(d)])
    return s, st


def analytic_linear_gaussian(problem: LinearGaussianProblem) -> AnalyticIndices:
    """All exact indices of a linear-Gaussian problem in one pass."""
    tau2 = _explained_variances(problem)
    sigma2 = tau2[-1]
    d = problem.dim
    full = (1 << d) - 1
    s = np.array([tau2[1 << j] / sigma2 for j in range(d)])
    st = np.array([(sigma2 - tau2[full ^ (1 << j)]) / sigma2 for j in range(d)])
    return AnalyticIndices(_combine_shapley(tau2, d), s, st, float(sigma2))


def shapley_interaction_3d(sigma1: float, sigma2: float, sigma3: float, rho: float):
    """Closed forms for Y = X1 + X2*X3 with corr(X1, X3) = rho, X2 independent.

    All three inputs are centered Gaussians with the given standard
    deviations.  Returns (shapley, first_order, total_independent), each a
    length-3 array.  This is the model where the Shapley effect of X3 can
    exceed both of its Sobol' indices (for unit deviations, exactly when
    3/7 <= rho^2 <= 3/5).
    """
    for name, s in (("sigma1", sigma1), ("sigma2", sigma2), ("sigma3", sigma3)):
        if not s > 0.0:
            raise ValueError(f"{name} must be positive")
    if abs(rho) > 1.0:
        raise ValueError("rho must lie in [-1, 1]")
    v1 = sigma1**2
    v23 = sigma2**2 * sigma3**2
    sigma2_tot = v1 + v23
    r2 = rho**2
    shapley = np.array(
        [
            v1 * (1.0 - r2 / 2.0) + v23 * r2 / 6.0,
            v23 * (3.0 + r2) / 6.0,
            r2 * v1 / 2.0 + v23 * (3.0 - 2.0 * r2) / 6.0,
        ]
    ) / sigma2_tot
    first_order = np.array([v1, 0.0, r2 * v1]) / sigma2_tot
    total_independent = np.array([(1.0 - r2) * v1, v23, (1.0 - r2) * v23]) / sigma2_tot
    return shapley, first_order, total_independent


class SandwichOrder(Enum):
    """Relative ordering of (first-order, Shapley, independent-total) indices."""

    FORWARD = "first_order <= shapley <= total"
    REVERSED = "total <= shapley <= first_order"
    TIED = "all equal"


def sandwich_direction(
    beta1: float, beta2: float, sigma1: float, sigma2: float, rho: float
) -> SandwichOrder:
    """Which way the two-input linear-Gaussian sandwich inequality points.

    The forward ordering S_j <= Sh_j <= ST_j holds exactly when
    ``rho * (rho * (b1^2 s1^2 + b2^2 s2^2) / 2 + b1 b2 s1 s2) <= 0`` (with
    equality of all three indices at the boundary); otherwise the ordering is
    reversed.  The same criterion covers both inputs simultaneously.
    """
    if not (sigma1 > 0.0 and sigma2 > 0.0):
        raise ValueError("standard deviations must be positive")
    a = beta1**2 * sigma1**2 + beta2**2 * sigma2**2
    b = beta1 * beta2 * sigma1 * sigma2
    g = rho * (rho * a / 2.0 + b)
    if g == 0.0:
        return SandwichOrder.TIED
    return SandwichOrder.FORWARD if g < 0.0 else SandwichOrder.REVERSED
