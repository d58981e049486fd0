"""Joint input distributions with dependence.

Two joint families are supported:

* :class:`GaussianJoint` -- a multivariate normal ``N(mean, covariance)``.
* :class:`CopulaJoint` -- a Gaussian copula coupling arbitrary one-dimensional
  marginals (uniform or standard normal).

Both support exact i.i.d. sampling, exact conditional sampling of any
coordinate subset given the rest, and marginal sampling of a subset.  These
three operations are the engine underneath the permutation estimators.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
import scipy.linalg as sla
from scipy.special import ndtr, ndtri

from .errors import DistributionError, DomainError
from .rng import as_generator

SYMMETRY_ATOL = 1e-10


# ---------------------------------------------------------------------------
# Index sets (1-based, matching input labels x1..xd)
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=True)
class IndexSet:
    """A sorted set of input positions, 1-based like the input labels x1..xd."""

    indices: tuple

    def __init__(self, indices):
        idx = tuple(sorted(int(i) for i in indices))
        if len(set(idx)) != len(idx):
            raise ValueError("index set contains duplicates")
        if idx and idx[0] < 1:
            raise ValueError("indices are 1-based and must be >= 1")
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, i):
        return i in self.indices

    def validate_dim(self, dim: int) -> None:
        if self.indices and self.indices[-1] > dim:
            raise ValueError(f"index {self.indices[-1]} exceeds dimension {dim}")

    def complement(self, dim: int) -> "IndexSet":
        self.validate_dim(dim)
        return IndexSet(i for i in range(1, dim + 1) if i not in self.indices)

    def zero_based(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.intp) - 1


def _as_index_set(value) -> IndexSet:
    return value if isinstance(value, IndexSet) else IndexSet(value)


# ---------------------------------------------------------------------------
# Marginals for the copula family
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UniformMarginal:
    """Uniform law on [lower, upper]."""

    lower: float
    upper: float

    def __post_init__(self):
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise DistributionError("uniform marginal bounds must be finite")
        if not self.upper > self.lower:
            raise DistributionError("uniform marginal needs upper > lower")

    def ppf(self, p):
        return self.lower + (self.upper - self.lower) * np.asarray(p, dtype=float)

    def cdf(self, x):
        return (np.asarray(x, dtype=float) - self.lower) / (self.upper - self.lower)

    def to_latent(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x <= self.lower) or np.any(x >= self.upper):
            raise DomainError(
                f"value outside open support ({self.lower}, {self.upper}) "
                "of a uniform marginal"
            )
        return ndtri(self.cdf(x))

    def from_latent(self, z):
        return self.ppf(ndtr(z))


@dataclass(frozen=True)
class GaussianMarginal:
    """Standard normal marginal; the latent coordinate is the value itself."""

    def ppf(self, p):
        return ndtri(p)

    def cdf(self, x):
        return ndtr(x)

    def to_latent(self, x):
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise DomainError("non-finite value for a Gaussian marginal")
        return x

    def from_latent(self, z):
        return np.asarray(z, dtype=float)


Marginal = Union[UniformMarginal, GaussianMarginal]


# ---------------------------------------------------------------------------
# Matrix helpers
# ---------------------------------------------------------------------------


def _check_square_symmetric(a: np.ndarray, what: str) -> np.ndarray:
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DistributionError(f"{what} must be a square matrix")
    if not np.allclose(a, a.T, rtol=0.0, atol=SYMMETRY_ATOL):
        raise DistributionError(f"{what} is not symmetric within {SYMMETRY_ATOL}")
    return 0.5 * (a + a.T)


def _cholesky_lower(a: np.ndarray, what: str) -> np.ndarray:
    try:
        return sla.cholesky(a, lower=True)
    except sla.LinAlgError as exc:
        raise DistributionError(f"{what} is not positive-definite: {exc}") from exc


# ---------------------------------------------------------------------------
# Joint distributions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GaussianJoint:
    """Multivariate normal input law N(mean, covariance).

    The covariance must be symmetric positive semidefinite at construction;
    strict positive definiteness (a successful factorization) is enforced the
    first time the joint is sampled, so exactly degenerate covariances remain
    usable by the closed-form oracles.
    """

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = _check_square_symmetric(self.covariance, "covariance")
        if mean.shape[0] != cov.shape[0]:
            raise DistributionError(
                f"mean has length {mean.shape[0]} but covariance is "
                f"{cov.shape[0]}x{cov.shape[0]}"
            )
        eigs = sla.eigvalsh(cov)
        if eigs[0] < -SYMMETRY_ATOL * max(eigs[-1], 1.0):
            raise DistributionError("covariance has a negative eigenvalue")
        for name, arr in (("mean", mean), ("covariance", cov)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def _chol(self) -> np.ndarray:
        cached = self.__dict__.get("_chol_cache")
        if cached is None:
            cached = _cholesky_lower(self.covariance, "covariance")
            cached.setflags(write=False)
            object.__setattr__(self, "_chol_cache", cached)
        return cached

    # internal sampling hooks used by the estimators -----------------------

    def _sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal((n, self.dim))
        return self.mean + z @ self._chol.T

    def _marginal_sampler(self, idx0: np.ndarray):
        sub_mean = self.mean[idx0]
        sub_chol = _cholesky_lower(
            self.covariance[np.ix_(idx0, idx0)], "marginal covariance block"
        )

        def draw(n, rng):
            return sub_mean + rng.standard_normal((n, idx0.size)) @ sub_chol.T

        return draw

    def _conditional_split(self, free0: np.ndarray, given0: np.ndarray):
        return _GaussianConditional(self, free0, given0)


@dataclass(frozen=True, eq=False)
class CopulaJoint:
    """Gaussian copula with per-coordinate marginals.

    The latent vector Z ~ N(0, correlation) is mapped coordinate-wise through
    ``marginal.ppf(ndtr(z))``, so the stated correlation lives on the latent
    (copula) scale.
    """

    correlation: np.ndarray
    marginals: tuple
    _chol: np.ndarray = field(init=False, repr=False)

    def __init__(self, correlation, marginals: Sequence[Marginal]):
        corr = _check_square_symmetric(correlation, "correlation")
        if not np.allclose(np.diag(corr), 1.0, rtol=0.0, atol=SYMMETRY_ATOL):
            raise DistributionError("correlation matrix must have unit diagonal")
        marginals = tuple(marginals)
        if len(marginals) != corr.shape[0]:
            raise DistributionError(
                f"{len(marginals)} marginals for a {corr.shape[0]}-dimensional "
                "correlation matrix"
            )
        for m in marginals:
            if not isinstance(m, (UniformMarginal, GaussianMarginal)):
                raise DistributionError(f"unsupported marginal {m!r}")
        chol = _cholesky_lower(corr, "correlation")
        corr.setflags(write=False)
        chol.setflags(write=False)
        object.__setattr__(self, "correlation", corr)
        object.__setattr__(self, "marginals", marginals)
        object.__setattr__(self, "_chol", chol)

    @property
    def dim(self) -> int:
        return self.correlation.shape[0]

    def _from_latent(self, z: np.ndarray, idx0: np.ndarray) -> np.ndarray:
        x = np.empty_like(z)
        for col, j in enumerate(idx0):
            x[..., col] = self.marginals[j].from_latent(z[..., col])
        return x

    def _to_latent(self, x: np.ndarray, idx0: np.ndarray) -> np.ndarray:
        z = np.empty_like(x, dtype=float)
        for col, j in enumerate(idx0):
            z[..., col] = self.marginals[j].to_latent(x[..., col])
        return z

    def _sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal((n, self.dim)) @ self._chol.T
        return self._from_latent(z, np.arange(self.dim))

    def _marginal_sampler(self, idx0: np.ndarray):
        sub_chol = _cholesky_lower(
            self.correlation[np.ix_(idx0, idx0)], "marginal correlation block"
        )

        def draw(n, rng):
            z = rng.standard_normal((n, idx0.size)) @ sub_chol.T
            return self._from_latent(z, idx0)

        return draw

    def _conditional_split(self, free0: np.ndarray, given0: np.ndarray):
        return _CopulaConditional(self, free0, given0)


Joint = Union[GaussianJoint, CopulaJoint]


# ---------------------------------------------------------------------------
# Conditional machinery
# ---------------------------------------------------------------------------


def _regression_parts(cov: np.ndarray, free0: np.ndarray, given0: np.ndarray):
    """Return (A, chol_cond) for the law of X_free | X_given.

    A maps centered given-values to the conditional mean shift; chol_cond is
    the lower Cholesky factor of the conditional covariance (a Schur
    complement, independent of the conditioning values).
    """
    sig_gg = cov[np.ix_(given0, given0)]
    sig_fg = cov[np.ix_(free0, given0)]
    sig_ff = cov[np.ix_(free0, free0)]
    try:
        cho = sla.cho_factor(sig_gg, lower=True)
    except sla.LinAlgError as exc:
        raise DistributionError(f"singular conditioning block: {exc}") from exc
    a = sla.cho_solve(cho, sig_fg.T).T
    cond_cov = sig_ff - a @ sig_fg.T
    cond_cov = 0.5 * (cond_cov + cond_cov.T)
    chol_cond = _cholesky_lower(cond_cov, "conditional covariance")
    return a, cond_cov, chol_cond


class _GaussianConditional:
    """Batched sampler for X_free | X_given of a GaussianJoint.

    Precomputes everything that does not depend on the conditioning values,
    so one instance can serve every outer-loop draw of a prefix split.
    """

    def __init__(self, joint: GaussianJoint, free0: np.ndarray, given0: np.ndarray):
        self.joint = joint
        self.free0 = free0
        self.given0 = given0
        self.a, self.cond_cov, self.chol_cond = _regression_parts(
            joint.covariance, free0, given0
        )
        self.mu_f = joint.mean[free0]
        self.mu_g = joint.mean[given0]
        self.outer = joint._marginal_sampler(given0)

    def conditional_means(self, given_values: np.ndarray) -> np.ndarray:
        return self.mu_f + (given_values - self.mu_g) @ self.a.T

    def free_draws(self, given_values: np.ndarray, ni: int, rng) -> np.ndarray:
        no = given_values.shape[0]
        means = self.conditional_means(given_values)
        z = rng.standard_normal((no, ni, self.free0.size))
        return means[:, None, :] + z @ self.chol_cond.T

    def full_rows(self, given_values: np.ndarray, ni: int, rng) -> np.ndarray:
        no = given_values.shape[0]
        draws = self.free_draws(given_values, ni, rng)
        rows = np.empty((no, ni, self.joint.dim))
        rows[:, :, self.given0] = given_values[:, None, :]
        rows[:, :, self.free0] = draws
        return rows.reshape(no * ni, self.joint.dim)


class _CopulaConditional:
    """Batched sampler for X_free | X_given of a CopulaJoint.

    Conditioning happens in the latent Gaussian space: given values are mapped
    through their marginal CDFs and the normal quantile, the latent normal is
    conditioned exactly, and draws are mapped back through the marginals.
    """

    def __init__(self, joint: CopulaJoint, free0: np.ndarray, given0: np.ndarray):
        self.joint = joint
        self.free0 = free0
        self.given0 = given0
        self.a, self.cond_cov, self.chol_cond = _regression_parts(
            joint.correlation, free0, given0
        )
        self.outer = joint._marginal_sampler(given0)

    def free_draws(self, given_values: np.ndarray, ni: int, rng) -> np.ndarray:
        no = given_values.shape[0]
        z_given = self.joint._to_latent(given_values, self.given0)
        means = z_given @ self.a.T
        z = rng.standard_normal((no, ni, self.free0.size))
        latent = means[:, None, :] + z @ self.chol_cond.T
        return self.joint._from_latent(latent, self.free0)

    def full_rows(self, given_values: np.ndarray, ni: int, rng) -> np.ndarray:
        no = given_values.shape[0]
        draws = self.free_draws(given_values, ni, rng)
        rows = np.empty((no, ni, self.joint.dim))
        rows[:, :, self.given0] = given_values[:, None, :]
        rows[:, :, self.free0] = draws
        return rows.reshape(no * ni, self.joint.dim)


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def sample(joint: Joint, n: int, seed) -> np.ndarray:
    """Draw ``n`` i.i.d. rows from the joint law.

    Parameters
    ----------
    joint : GaussianJoint or CopulaJoint
    n : int
        Number of rows; ``n == 0`` yields an empty ``(0, d)`` matrix.
    seed : int or numpy.random.Generator
        Identical ``(joint, n, seed)`` produce a bit-identical matrix.
    """
    if n < 0:
        raise ValueError("sample size must be non-negative")
    rng = as_generator(seed)
    if n == 0:
        return np.empty((0, joint.dim))
    return joint._sample(n, rng)


def conditional_gaussian(
    joint: GaussianJoint, given, values
) -> GaussianJoint:
    """Exact conditional law of the remaining coordinates of a Gaussian joint.

    Returns the Gaussian law of ``X_free | X_given = values`` with
    ``mean_f + S_fg S_gg^-1 (values - mean_g)`` and the Schur-complement
    covariance ``S_ff - S_fg S_gg^-1 S_gf``.
    """
    given = _as_index_set(given)
    d = joint.dim
    given.validate_dim(d)
    if len(given) == 0 or len(given) >= d:
        raise ValueError("given must be a nonempty proper subset of the coordinates")
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.shape[0] != len(given):
        raise ValueError(
            f"{values.shape[0]} conditioning values for {len(given)} coordinates"
        )
    free0 = given.complement(d).zero_based()
    given0 = given.zero_based()
    a, cond_cov, _ = _regression_parts(joint.covariance, free0, given0)
    mean = joint.mean[free0] + a @ (values - joint.mean[given0])
    return GaussianJoint(mean, cond_cov)


def sample_conditional(joint: Joint, free, given_values, n: int, seed) -> np.ndarray:
    """Draw exact conditional samples of the ``free`` coordinates.

    ``given_values`` supplies the (ordered) values of the complement of
    ``free``.  For a CopulaJoint the conditioning is performed in latent
    Gaussian space.  Returns an ``(n, len(free))`` matrix whose columns follow
    the order of ``free``.
    """
    free = _as_index_set(free)
    d = joint.dim
    free.validate_dim(d)
    if len(free) == 0 or len(free) >= d:
        raise ValueError("free must be a nonempty proper subset of the coordinates")
    given = free.complement(d)
    given_values = np.asarray(given_values, dtype=float).reshape(-1)
    if given_values.shape[0] != len(given):
        raise ValueError(
            f"{given_values.shape[0]} given values for {len(given)} coordinates"
        )
    if n < 0:
        raise ValueError("sample size must be non-negative")
    rng = as_generator(seed)
    split = joint._conditional_split(free.zero_based(), given.zero_based())
    if n == 0:
        return np.empty((0, len(free)))
    draws = split.free_draws(given_values[None, :], n, rng)
    return draws.reshape(n, len(free))


def quantile_transform(joint: Joint, u: np.ndarray) -> np.ndarray:
    """Map unit-hypercube points through the joint's inverse Rosenblatt transform.

    Used to turn low-discrepancy designs into designs that follow the joint
    law.  Points must lie strictly inside (0, 1) in every coordinate.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim != 2 or u.shape[1] != joint.dim:
        raise ValueError(f"expected an (n, {joint.dim}) matrix of unit-cube points")
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        raise DomainError("unit-cube points must lie strictly inside (0, 1)")
    z = ndtri(u) @ joint._chol.T
    if isinstance(joint, GaussianJoint):
        return joint.mean + z
    return joint._from_latent(z, np.arange(joint.dim))
