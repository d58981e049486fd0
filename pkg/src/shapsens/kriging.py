"""Gaussian process surrogate: trend plus stationary anisotropic Matern 5/2.

The surrogate is universal kriging: a deterministic trend (constant or full
linear) plus a centered stationary process whose correlation is a per-
dimension product of Matern 5/2 terms.  Lengthscales are estimated by
maximum likelihood with the trend coefficients and the process variance
concentrated out analytically; the remaining optimization over
log-lengthscales uses an analytic gradient, L-BFGS-B, and a space-filling
multistart.

Outputs are standardized internally; all reported quantities (trend
coefficients, process variance, nugget, predictions) live on the original
output scale.
"""
from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize
from scipy.stats import qmc

from .errors import DegenerateOutputError, FitError, IllConditionedError
from .rng import substream

logger = logging.getLogger(__name__)

_SQRT5 = math.sqrt(5.0)
_PREDICT_CHUNK = 4096
_FILE_FORMAT = "shapsens-kriging"
_FILE_VERSION = 1


def matern52(h, lengthscale):
    """Matern 5/2 correlation at distance ``h`` for one lengthscale.

    ``(1 + sqrt5 h/l + 5 h^2 / (3 l^2)) * exp(-sqrt5 h/l)``; anisotropic
    kernels take the product of this over dimensions.
    """
    if np.any(np.asarray(lengthscale) <= 0.0):
        raise ValueError("lengthscale must be positive")
    t = np.asarray(h, dtype=float) / lengthscale
    if np.any(t < 0.0):
        raise ValueError("distance must be non-negative")
    return (1.0 + _SQRT5 * t + 5.0 * t**2 / 3.0) * np.exp(-_SQRT5 * t)


def _scaled_correlation(t):
    return (1.0 + _SQRT5 * t + 5.0 * t**2 / 3.0) * np.exp(-_SQRT5 * t)


def _cross_correlation(xa, xb, theta):
    k = np.ones((xa.shape[0], xb.shape[0]))
    for j in range(xa.shape[1]):
        t = np.abs(xa[:, j, None] - xb[None, :, j]) / theta[j]
        k *= _scaled_correlation(t)
    return k


def _trend_basis(x, trend):
    if trend == "constant":
        return np.ones((x.shape[0], 1))
    return np.hstack([np.ones((x.shape[0], 1)), x])


@dataclass(frozen=True)
class KrigingConfig:
    """Fit options.

    ``nugget`` is an absolute output-scale noise floor; ``None`` means
    ``1e-8 * Var(y)``.  ``lengthscale_bounds`` is a per-dimension list of
    (low, high) pairs; ``None`` derives ``[1e-2, 1e2] * range`` per dimension.
    """

    trend: str = "linear"
    nugget: Optional[float] = None
    restarts: int = 10
    lengthscale_bounds: Optional[tuple] = None

    def __post_init__(self):
        if self.trend not in ("constant", "linear"):
            raise ValueError(f"unknown trend {self.trend!r}")
        if self.nugget is not None and self.nugget < 0.0:
            raise ValueError("nugget must be non-negative")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.lengthscale_bounds is not None:
            bounds = tuple((float(lo), float(hi)) for lo, hi in self.lengthscale_bounds)
            for lo, hi in bounds:
                if not (0.0 < lo < hi):
                    raise ValueError("lengthscale bounds need 0 < low < high")
            object.__setattr__(self, "lengthscale_bounds", bounds)


@dataclass(eq=False)
class KrigingModel:
    """A fitted surrogate; immutable in use and safe to share across threads."""

    x_train: np.ndarray
    y_train: np.ndarray
    trend: str
    trend_coefficients: np.ndarray  # output scale
    lengthscales: np.ndarray
    process_variance: float  # output scale
    nugget: float  # effective noise variance, output scale
    relative_nugget: float
    log_likelihood: float
    fit_info: dict = field(default_factory=dict, repr=False)
    # standardized-space factorizations
    _y_center: float = 0.0
    _y_scale: float = 1.0
    _beta_std: np.ndarray = None
    _chol_r: tuple = None
    _rinv_resid: np.ndarray = None
    _rinv_h: np.ndarray = None
    _chol_hrh: tuple = None
    _sigma2_std: float = 0.0

    @property
    def dim(self) -> int:
        return self.x_train.shape[1]

    def predict(self, x_new: np.ndarray):
        """Predictive mean and variance at new points.

        The variance includes the trend-estimation inflation of universal
        kriging and is clamped at zero when roundoff drives it negative.
        """
        x_new = np.asarray(x_new, dtype=float)
        if x_new.ndim != 2 or x_new.shape[1] != self.dim:
            raise ValueError(f"expected an (m, {self.dim}) matrix")
        m = x_new.shape[0]
        mean = np.empty(m)
        var = np.empty(m)
        clipped = 0
        for lo in range(0, m, _PREDICT_CHUNK):
            hi = min(lo + _PREDICT_CHUNK, m)
            block = x_new[lo:hi]
            r = _cross_correlation(block, self.x_train, self.lengthscales)
            h = _trend_basis(block, self.trend)
            mean_std = h @ self._beta_std + r @ self._rinv_resid
            q = sla.cho_solve(self._chol_r, r.T, check_finite=False)
            quad = np.einsum("ij,ji->i", r, q)
            u = h - r @ self._rinv_h
            w = sla.cho_solve(self._chol_hrh, u.T, check_finite=False)
            infl = np.einsum("ij,ji->i", u, w)
            v = self._sigma2_std * (1.0 - quad + infl)
            neg = v < 0.0
            clipped += int(np.sum(neg))
            v[neg] = 0.0
            mean[lo:hi] = self._y_center + self._y_scale * mean_std
            var[lo:hi] = self._y_scale**2 * v
        if clipped:
            logger.debug("clamped %d negative predictive variances to zero", clipped)
        return mean, var


def _objective(log_theta, dabs, h, y_std, alpha, with_grad=True):
    """Profile negative log-likelihood (and gradient) over log-lengthscales."""
    n, p = h.shape
    theta = np.exp(log_theta)
    t = dabs / theta
    poly = 1.0 + _SQRT5 * t + 5.0 * t**2 / 3.0
    c = np.prod(poly * np.exp(-_SQRT5 * t), axis=2)
    r = c + alpha * np.eye(n)
    try:
        chol = sla.cho_factor(r, lower=True, check_finite=False)
    except sla.LinAlgError:
        if not with_grad:
            return np.inf
        return np.inf, np.zeros_like(log_theta)
    rinv_h = sla.cho_solve(chol, h, check_finite=False)
    rinv_y = sla.cho_solve(chol, y_std, check_finite=False)
    hrh = h.T @ rinv_h
    try:
        chol_hrh = sla.cho_factor(hrh, check_finite=False)
    except sla.LinAlgError:
        if not with_grad:
            return np.inf
        return np.inf, np.zeros_like(log_theta)
    beta = sla.cho_solve(chol_hrh, h.T @ rinv_y, check_finite=False)
    resid = y_std - h @ beta
    rinv_resid = rinv_y - rinv_h @ beta
    sigma2 = max(float(resid @ rinv_resid) / n, 1e-30)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol[0]))))
    nll = 0.5 * (n * math.log(sigma2) + logdet)
    if not with_grad:
        return nll
    rinv = sla.cho_solve(chol, np.eye(n), check_finite=False)
    grad = np.empty_like(log_theta)
    gfac = (5.0 * t**2 / 3.0) * (1.0 + _SQRT5 * t) / poly
    for k in range(log_theta.size):
        dr = c * gfac[:, :, k]
        grad[k] = 0.5 * float(np.sum(rinv * dr)) - float(
            rinv_resid @ dr @ rinv_resid
        ) / (2.0 * sigma2)
    return nll, grad


def _start_points(n_points, log_lo, log_hi):
    sampler = qmc.Sobol(d=log_lo.size, scramble=False)
    sampler.fast_forward(1)  # skip the all-zeros corner; first start is the center
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        u = sampler.random(n_points)
    return log_lo + u * (log_hi - log_lo)


def fit(x: np.ndarray, y: np.ndarray, cfg: KrigingConfig = None) -> KrigingModel:
    """Fit the surrogate by profile maximum likelihood.

    Requires ``n >= p + 2`` observations (p trend terms) and, when the nugget
    is exactly zero, no duplicated rows within 1e-12.
    """
    cfg = cfg or KrigingConfig()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise FitError("training inputs and outputs do not align")
    n, d = x.shape
    p = 1 if cfg.trend == "constant" else d + 1
    if n < p + 2:
        raise FitError(f"need at least {p + 2} points for a {cfg.trend} trend in {d}D")

    y_center = float(np.mean(y))
    y_var = float(np.var(y, ddof=1))
    if y_var <= 0.0:
        raise FitError("training outputs are constant")
    y_scale = math.sqrt(y_var)
    y_std = (y - y_center) / y_scale

    nugget_abs = 1e-8 * y_var if cfg.nugget is None else float(cfg.nugget)
    alpha = nugget_abs / y_var

    dabs = np.abs(x[:, None, :] - x[None, :, :])
    if alpha == 0.0:
        dist = np.max(dabs, axis=2) + np.eye(n)
        if np.min(dist) < 1e-12:
            raise FitError("duplicated training rows need a positive nugget")

    if cfg.lengthscale_bounds is not None:
        if len(cfg.lengthscale_bounds) != d:
            raise FitError(f"{len(cfg.lengthscale_bounds)} lengthscale bounds for {d} inputs")
        bounds = np.asarray(cfg.lengthscale_bounds, dtype=float)
    else:
        spans = x.max(axis=0) - x.min(axis=0)
        spans[spans == 0.0] = 1.0
        bounds = np.column_stack([1e-2 * spans, 1e2 * spans])
    log_lo = np.log(bounds[:, 0])
    log_hi = np.log(bounds[:, 1])

    h = _trend_basis(x, cfg.trend)
    starts = _start_points(cfg.restarts, log_lo, log_hi)
    best = None
    initial_nll = []
    for x0 in starts:
        initial_nll.append(_objective(x0, dabs, h, y_std, alpha, with_grad=False))
        try:
            res = minimize(
                _objective,
                x0,
                args=(dabs, h, y_std, alpha),
                jac=True,
                method="L-BFGS-B",
                bounds=list(zip(log_lo, log_hi)),
                options={"maxiter": 200},
            )
        except FloatingPointError:
            continue
        if not np.isfinite(res.fun):
            continue
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise FitError("all restarts failed to produce a finite likelihood")

    theta = np.exp(best.x)
    model = _finalize(
        x, y, cfg.trend, theta, alpha,
        fit_info={
            "initial_nll": [float(v) for v in initial_nll],
            "final_nll": float(best.fun),
            "restarts": cfg.restarts,
        },
    )
    return model


def _finalize(x, y, trend, theta, alpha, fit_info=None) -> KrigingModel:
    """Assemble a model (and its factorizations) for fixed hyperparameters."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    theta = np.asarray(theta, dtype=float)
    n = x.shape[0]
    y_center = float(np.mean(y))
    y_var = float(np.var(y, ddof=1))
    y_scale = math.sqrt(y_var)
    y_std = (y - y_center) / y_scale

    c = _cross_correlation(x, x, theta)
    r = c + alpha * np.eye(n)
    try:
        chol = sla.cho_factor(r, lower=True, check_finite=False)
    except sla.LinAlgError as exc:
        raise IllConditionedError(
            f"training covariance is not factorizable even with the nugget: {exc}"
        ) from exc
    h = _trend_basis(x, trend)
    rinv_h = sla.cho_solve(chol, h, check_finite=False)
    rinv_y = sla.cho_solve(chol, y_std, check_finite=False)
    hrh = h.T @ rinv_h
    try:
        chol_hrh = sla.cho_factor(hrh, check_finite=False)
    except sla.LinAlgError as exc:
        raise IllConditionedError(f"trend normal equations are singular: {exc}") from exc
    beta = sla.cho_solve(chol_hrh, h.T @ rinv_y, check_finite=False)
    resid = y_std - h @ beta
    rinv_resid = rinv_y - rinv_h @ beta
    sigma2_std = max(float(resid @ rinv_resid) / n, 0.0)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol[0]))))
    loglik = -0.5 * (
        n * math.log(max(sigma2_std, 1e-30)) + logdet + n * (1.0 + math.log(2.0 * math.pi))
    )

    beta_out = beta * y_scale
    beta_out[0] += y_center
    return KrigingModel(
        x_train=x,
        y_train=y,
        trend=trend,
        trend_coefficients=beta_out,
        lengthscales=theta,
        process_variance=sigma2_std * y_var,
        nugget=sigma2_std * alpha * y_var,
        relative_nugget=float(alpha),
        log_likelihood=loglik,
        fit_info=fit_info or {},
        _y_center=y_center,
        _y_scale=y_scale,
        _beta_std=beta,
        _chol_r=chol,
        _rinv_resid=rinv_resid,
        _rinv_h=rinv_h,
        _chol_hrh=chol_hrh,
        _sigma2_std=sigma2_std,
    )


def predict(model: KrigingModel, x_new: np.ndarray):
    """Module-level alias for :meth:`KrigingModel.predict`."""
    return model.predict(x_new)


def q2(model, x_test: np.ndarray, y_test: np.ndarray) -> float:
    """Predictivity coefficient 1 - SSE/SST on a test sample.

    1 for a perfect predictor, 0 for the test-mean predictor, negative when
    worse than the mean.
    """
    y_test = np.asarray(y_test, dtype=float).reshape(-1)
    if y_test.size < 2:
        raise DegenerateOutputError("need at least two test points")
    sst = float(np.sum((y_test - np.mean(y_test)) ** 2))
    if sst <= 0.0:
        raise DegenerateOutputError("test outputs are constant")
    y_hat, _ = model.predict(np.asarray(x_test, dtype=float))
    sse = float(np.sum((y_test - y_hat) ** 2))
    return 1.0 - sse / sst


class SurrogateMean:
    """The predictive mean wrapped as a pure batch model."""

    def __init__(self, model: KrigingModel):
        self.surrogate = model

    @property
    def dim(self) -> int:
        return self.surrogate.dim

    def __call__(self, x: np.ndarray) -> np.ndarray:
        mean, _ = self.surrogate.predict(np.asarray(x, dtype=float))
        return mean


def as_model(model: KrigingModel) -> SurrogateMean:
    """Wrap the predictive mean for use with the Shapley estimators."""
    return SurrogateMean(model)


# ---------------------------------------------------------------------------
# Learning designs and persistence
# ---------------------------------------------------------------------------


def sobol_design(n: int, d: int, seed: int) -> np.ndarray:
    """Scrambled Sobol' low-discrepancy design on the open unit hypercube."""
    if n < 1 or d < 1:
        raise ValueError("design size and dimension must be positive")
    rng = substream(seed) if not isinstance(seed, np.random.Generator) else seed
    sampler = qmc.Sobol(d=d, scramble=True, rng=rng)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        u = sampler.random(n)
    return np.clip(u, 1e-12, 1.0 - 1e-12)


def save_model(model: KrigingModel, path) -> None:
    """Persist a fitted surrogate as a versioned JSON text file."""
    payload = {
        "format": _FILE_FORMAT,
        "version": _FILE_VERSION,
        "trend": model.trend,
        "relative_nugget": model.relative_nugget,
        "lengthscales": [float(v) for v in model.lengthscales],
        "x_train": [[float(v) for v in row] for row in model.x_train],
        "y_train": [float(v) for v in model.y_train],
        "trend_coefficients": [float(v) for v in model.trend_coefficients],
        "process_variance": float(model.process_variance),
        "nugget": float(model.nugget),
        "log_likelihood": float(model.log_likelihood),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_model(path) -> KrigingModel:
    """Reload a surrogate saved by :func:`save_model`."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != _FILE_FORMAT:
        raise FitError(f"{path} is not a kriging model file")
    if payload.get("version") != _FILE_VERSION:
        raise FitError(f"unsupported model file version {payload.get('version')}")
    return _finalize(
        np.asarray(payload["x_train"], dtype=float),
        np.asarray(payload["y_train"], dtype=float),
        payload["trend"],
        np.asarray(payload["lengthscales"], dtype=float),
        float(payload["relative_nugget"]),
    )
