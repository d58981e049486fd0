"""Permutation Monte Carlo estimators of Shapley effects.

Both estimators walk input orderings and, at each position, estimate the
expected conditional variance of the output given the inputs *outside* the
current prefix (the complement convention; it is Shapley-equivalent to the
explained-variance cost and cheaper to estimate).  The increment between
consecutive positions is credited to the input entering the prefix; the last
input of each ordering is closed with the overall variance estimate, which
makes the effects sum to one by construction.

Full first-order Sobol' indices fall out of the last-position increments and
independent total indices out of the first-position increments, so both are
reported as by-products with their own confidence intervals.

Work is split into (permutation, position) cells.  Every cell draws from its
own seed-derived stream and cells are reduced in a fixed order, so results
are a deterministic function of (config, seed) alone, whatever the thread
count.  Model evaluations are coalesced into large batches across cells.
"""
from __future__ import annotations

import itertools
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateOutputError, SizeError
from .inputs import Joint, _as_index_set, sample
from .models import evaluate
from .rng import CELL_STREAM, PERMUTATION_STREAM, VARIANCE_STREAM, substream

MAX_EXACT_DIM = 10
_TARGET_BATCH_ROWS = 200_000


@dataclass(frozen=True)
class EstimatorConfig:
    """Loop sizes for the permutation estimators.

    ``n_inner`` draws estimate each conditional variance (must allow an
    unbiased sample variance, so >= 2), ``n_outer`` draws average it over the
    conditioning values, ``n_var`` draws estimate the overall output variance
    and ``n_perm`` is the number of sampled orderings for the random method.
    """

    method: str
    n_inner: int = 3
    n_outer: int = 1
    n_var: int = 10_000
    n_perm: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("exact", "random"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.n_inner < 2:
            raise ValueError("n_inner must be >= 2 (unbiased sample variance)")
        if self.n_outer < 1:
            raise ValueError("n_outer must be >= 1")
        if self.n_var < 2:
            raise ValueError("n_var must be >= 2")
        if self.method == "random" and self.n_perm < 1:
            raise ValueError("n_perm must be >= 1 for the random method")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True, eq=False)
class SensitivityResult:
    """Per-input estimates with 95% confidence half-widths.

    ``shapley`` sums to one by construction.  ``first_order`` and
    ``total_independent`` are the Sobol' by-products; for the random method
    with few permutations they may be NaN for inputs that never landed in the
    last (resp. first) position.  ``n_evaluations`` counts model calls,
    including the variance sample.
    """

    shapley: np.ndarray
    shapley_ci: np.ndarray
    first_order: np.ndarray
    first_order_ci: np.ndarray
    total_independent: np.ndarray
    total_independent_ci: np.ndarray
    variance: float
    mean: float
    n_evaluations: int


class _CountingModel:
    """Thread-safe wrapper counting evaluated rows."""

    def __init__(self, model):
        self.model = model
        self.count = 0
        self._lock = threading.Lock()

    def __call__(self, x):
        y = evaluate(self.model, x)
        with self._lock:
            self.count += x.shape[0]
        return y


def equivalent_permutations(n_outer_exact: int, dim: int) -> int:
    """Random-method permutation count matching the exact method's cost.

    With the recommended random-method loop sizes, sampling
    ``n_outer_exact * dim!`` orderings costs the same number of model
    evaluations as the exact method with outer size ``n_outer_exact``.
    """
    if dim > MAX_EXACT_DIM:
        raise SizeError(f"exact enumeration supports at most {MAX_EXACT_DIM} inputs")
    if dim < 1 or n_outer_exact < 1:
        raise ValueError("dimension and outer size must be positive")
    m = n_outer_exact * math.factorial(dim)
    if m > 2**63 - 1:
        raise SizeError("equivalent permutation count overflows a 64-bit integer")
    return m


def _variance_stats(model, joint: Joint, n_var: int, rng) -> tuple:
    x = sample(joint, n_var, rng)
    y = evaluate(model, x) if not isinstance(model, _CountingModel) else model(x)
    mean = float(np.mean(y))
    var = float(np.var(y, ddof=1))
    if var <= 1e-12 * mean * mean:
        raise DegenerateOutputError(
            f"output variance {var:g} is degenerate relative to the mean {mean:g}"
        )
    # variance of the sample variance, for the normalization term of the CIs
    centered = y - mean
    m4 = float(np.mean(centered**4))
    var_of_var = max(
        (m4 - (n_var - 3) / (n_var - 1) * var * var) / n_var, 0.0
    )
    return var, mean, var_of_var


def estimate_variance(model, joint: Joint, n_var: int, seed) -> tuple:
    """Unbiased sample variance and mean of the output over ``n_var`` draws."""
    if n_var < 2:
        raise ValueError("n_var must be >= 2")
    rng = seed if isinstance(seed, np.random.Generator) else substream(seed, VARIANCE_STREAM)
    var, mean, _ = _variance_stats(model, joint, n_var, rng)
    return var, mean


def _cell_rows(split, n_outer: int, n_inner: int, rng) -> np.ndarray:
    """Inputs for one (permutation, position) cell, outer-major."""
    given = split.outer(n_outer, rng)
    return split.full_rows(given, n_inner, rng)


def _cell_stats(y: np.ndarray, n_outer: int, n_inner: int) -> tuple:
    """Cost estimate and its outer-loop variance for one cell."""
    inner_vars = np.var(y.reshape(n_outer, n_inner), axis=1, ddof=1)
    cost = float(np.mean(inner_vars))
    if n_outer >= 2:
        cell_var = float(np.var(inner_vars, ddof=1) / n_outer)
    else:
        cell_var = 0.0
    return cost, cell_var


def prefix_cost(model, joint: Joint, prefix, n_inner: int, n_outer: int, stream) -> float:
    """Estimate E[Var(Y | X outside ``prefix``)], unnormalized.

    The outer loop draws the complement of ``prefix`` from its marginal; the
    inner loop draws ``prefix`` conditionally, evaluates the model and takes
    the unbiased sample variance.  The full set conditions on nothing (plain
    variance path); the empty set returns 0.
    """
    prefix = _as_index_set(prefix)
    d = joint.dim
    prefix.validate_dim(d)
    rng = stream if isinstance(stream, np.random.Generator) else substream(stream, CELL_STREAM)
    if len(prefix) == 0:
        return 0.0
    if n_inner < 2 or n_outer < 1:
        raise ValueError("need n_inner >= 2 and n_outer >= 1")
    if len(prefix) == d:
        x = sample(joint, n_outer * n_inner, rng)
    else:
        split = joint._conditional_split(
            prefix.zero_based(), prefix.complement(d).zero_based()
        )
        x = _cell_rows(split, n_outer, n_inner, rng)
    y = evaluate(model, x) if not isinstance(model, _CountingModel) else model(x)
    cost, _ = _cell_stats(y, n_outer, n_inner)
    return cost


# ---------------------------------------------------------------------------
# Permutation sweep
# ---------------------------------------------------------------------------


def _prefix_splits(joint: Joint, perms: np.ndarray) -> dict:
    """Conditional samplers for every distinct permutation prefix, by bitmask."""
    d = joint.dim
    all0 = np.arange(d)
    splits = {}
    for perm in perms:
        mask = 0
        for j in range(d - 1):
            mask |= 1 << int(perm[j])
            if mask not in splits:
                in_prefix = np.array([bool((mask >> k) & 1) for k in range(d)])
                splits[mask] = joint._conditional_split(all0[in_prefix], all0[~in_prefix])
    return splits


def _sweep_cells(model, joint, perms, cfg, splits, threads):
    """Estimate the cost of every (permutation, position) cell.

    Returns (costs, cell_vars), each shaped (n_perms, d-1).  Cells are chunked
    so each model call sees a large batch; chunks are reduced in index order.
    """
    d = joint.dim
    n_perms = perms.shape[0]
    n_positions = d - 1
    n_cells = n_perms * n_positions
    rows_per_cell = cfg.n_outer * cfg.n_inner
    cells_per_chunk = max(1, _TARGET_BATCH_ROWS // rows_per_cell)
    chunks = [
        (lo, min(lo + cells_per_chunk, n_cells))
        for lo in range(0, n_cells, cells_per_chunk)
    ]

    def run_chunk(bounds):
        lo, hi = bounds
        blocks = []
        for cell in range(lo, hi):
            perm_idx, j = divmod(cell, n_positions)
            mask = 0
            for k in range(j + 1):
                mask |= 1 << int(perms[perm_idx, k])
            rng = substream(cfg.seed, CELL_STREAM, perm_idx, j)
            blocks.append(_cell_rows(splits[mask], cfg.n_outer, cfg.n_inner, rng))
        y = model(np.vstack(blocks))
        costs = np.empty(hi - lo)
        cell_vars = np.empty(hi - lo)
        for k in range(hi - lo):
            y_cell = y[k * rows_per_cell : (k + 1) * rows_per_cell]
            costs[k], cell_vars[k] = _cell_stats(y_cell, cfg.n_outer, cfg.n_inner)
        return costs, cell_vars

    if threads <= 1 or len(chunks) == 1:
        results = [run_chunk(bounds) for bounds in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            results = list(executor.map(run_chunk, chunks))
    costs = np.empty(n_cells)
    cell_vars = np.empty(n_cells)
    for (lo, hi), (c, v) in zip(chunks, results):
        costs[lo:hi] = c
        cell_vars[lo:hi] = v
    return costs.reshape(n_perms, n_positions), cell_vars.reshape(n_perms, n_positions)


def _grouped_mean_ci(values, owners, counts_min, d):
    """Mean and 2-sd half-width of `values` grouped by owning input."""
    est = np.full(d, np.nan)
    ci = np.full(d, np.nan)
    for i in range(d):
        vals = values[owners == i]
        if vals.size >= 1:
            est[i] = float(np.mean(vals))
        if vals.size >= counts_min:
            ci[i] = 2.0 * float(np.std(vals, ddof=1)) / math.sqrt(vals.size)
    return est, ci


def _assemble_result(perms, costs, cell_vars, var_hat, mean_hat, var_of_var, cfg, count):
    d = perms.shape[1]
    n_perms = perms.shape[0]
    rel_var_vhat = var_of_var / var_hat**2

    # increments: position 0 starts from cost 0; the last position closes the
    # telescoping sum with the overall variance estimate (sum-to-one).
    deltas = np.empty((n_perms, d))
    deltas[:, 0] = costs[:, 0]
    if d > 2:
        deltas[:, 1 : d - 1] = costs[:, 1:] - costs[:, : d - 2]
    deltas[:, d - 1] = var_hat - costs[:, d - 1 - 1]

    shapley = np.zeros(d)
    np.add.at(shapley, perms.ravel(), deltas.ravel())
    shapley /= n_perms * var_hat

    frac_last = np.bincount(perms[:, d - 1], minlength=d) / n_perms

    if cfg.method == "exact":
        # cell-wise CLT: each increment's variance is the sum of its one or two
        # cells' outer-loop variances; cells are independent across the sweep.
        inc_vars = np.empty((n_perms, d))
        inc_vars[:, 0] = cell_vars[:, 0]
        if d > 2:
            inc_vars[:, 1 : d - 1] = cell_vars[:, 1:] + cell_vars[:, : d - 2]
        inc_vars[:, d - 1] = cell_vars[:, d - 2]
        var_acc = np.zeros(d)
        np.add.at(var_acc, perms.ravel(), inc_vars.ravel())
        shapley_var = var_acc / (n_perms * var_hat) ** 2
    else:
        # CLT over the sampled orderings: each contributes one increment per input
        per_perm = np.empty((n_perms, d))
        per_perm[np.arange(n_perms)[:, None], perms] = deltas
        if n_perms >= 2:
            shapley_var = np.var(per_perm, axis=0, ddof=1) / (n_perms * var_hat**2)
        else:
            shapley_var = np.full(d, np.nan)
    # the variance estimate enters through the normalization and the closing
    # increment; the delta-method term uses the V-hat-free part of the numerator
    shapley_var = shapley_var + (shapley - frac_last) ** 2 * rel_var_vhat
    shapley_ci = 2.0 * np.sqrt(shapley_var)

    # Sobol' by-products.  Independent total: first-position cells estimate
    # E[Var(Y | X_-i)].  Full first-order: last-position increments estimate
    # Var(Y) - E[Var(Y | X_i)].
    first_owner = perms[:, 0]
    last_owner = perms[:, d - 1]
    st_vals = costs[:, 0] / var_hat
    s_vals = deltas[:, d - 1] / var_hat

    if cfg.method == "exact":
        total_ind = np.full(d, np.nan)
        total_ci = np.full(d, np.nan)
        first_order = np.full(d, np.nan)
        first_ci = np.full(d, np.nan)
        for i in range(d):
            sel_first = first_owner == i
            total_ind[i] = float(np.mean(st_vals[sel_first]))
            total_ci[i] = 2.0 * math.sqrt(
                float(np.sum(cell_vars[sel_first, 0]))
                / (np.sum(sel_first) * var_hat) ** 2
                + total_ind[i] ** 2 * rel_var_vhat
            )
            sel_last = last_owner == i
            first_order[i] = float(np.mean(s_vals[sel_last]))
            first_ci[i] = 2.0 * math.sqrt(
                float(np.sum(cell_vars[sel_last, d - 2]))
                / (np.sum(sel_last) * var_hat) ** 2
                + (1.0 - first_order[i]) ** 2 * rel_var_vhat
            )
    else:
        total_ind, total_ci = _grouped_mean_ci(st_vals, first_owner, 2, d)
        first_order, first_ci = _grouped_mean_ci(s_vals, last_owner, 2, d)
        total_ci = np.sqrt(total_ci**2 + (2.0 * total_ind) ** 2 * rel_var_vhat)
        first_ci = np.sqrt(first_ci**2 + (2.0 * (1.0 - first_order)) ** 2 * rel_var_vhat)

    return SensitivityResult(
        shapley=shapley,
        shapley_ci=shapley_ci,
        first_order=first_order,
        first_order_ci=first_ci,
        total_independent=total_ind,
        total_independent_ci=total_ci,
        variance=var_hat,
        mean=mean_hat,
        n_evaluations=count,
    )


def _run(model, joint: Joint, perms: np.ndarray, cfg: EstimatorConfig, threads: int):
    d = joint.dim
    counting = _CountingModel(model)
    var_hat, mean_hat, var_of_var = _variance_stats(
        counting, joint, cfg.n_var, substream(cfg.seed, VARIANCE_STREAM)
    )
    if d == 1:
        ones = np.ones(1)
        zeros = np.zeros(1)
        return SensitivityResult(
            ones, zeros, ones, zeros, ones, zeros, var_hat, mean_hat, counting.count
        )
    splits = _prefix_splits(joint, perms)
    costs, cell_vars = _sweep_cells(counting, joint, perms, cfg, splits, threads)
    expected = cfg.n_inner * cfg.n_outer * perms.shape[0] * (d - 1) + cfg.n_var
    if counting.count != expected:
        raise RuntimeError(
            f"internal accounting error: {counting.count} evaluations, expected {expected}"
        )
    return _assemble_result(
        perms, costs, cell_vars, var_hat, mean_hat, var_of_var, cfg, counting.count
    )


def shapley_exact(
    model, joint: Joint, cfg: EstimatorConfig, threads: int = 1
) -> SensitivityResult:
    """Shapley effects by full enumeration of the d! input orderings.

    Costs ``n_inner * n_outer * d! * (d-1) + n_var`` model evaluations.
    Dimensions above 10 are rejected.
    """
    if cfg.method != "exact":
        raise ValueError("config method must be 'exact'")
    d = joint.dim
    if d > MAX_EXACT_DIM:
        raise SizeError(
            f"exact enumeration of {d}! orderings is not supported (max {MAX_EXACT_DIM})"
        )
    perms = np.array(list(itertools.permutations(range(d))), dtype=np.intp)
    if d == 1:
        perms = np.zeros((1, 1), dtype=np.intp)
    return _run(model, joint, perms, cfg, threads)


def shapley_random(
    model, joint: Joint, cfg: EstimatorConfig, threads: int = 1
) -> SensitivityResult:
    """Shapley effects over ``n_perm`` orderings sampled with replacement.

    Costs ``n_inner * n_outer * n_perm * (d-1) + n_var`` model evaluations;
    ``n_outer = 1`` is the recommended setting.  Confidence half-widths are
    two standard deviations of the per-ordering increments over sqrt(n_perm).
    """
    if cfg.method != "random":
        raise ValueError("config method must be 'random'")
    d = joint.dim
    rng = substream(cfg.seed, PERMUTATION_STREAM)
    perms = np.empty((cfg.n_perm, d), dtype=np.intp)
    for k in range(cfg.n_perm):
        perms[k] = rng.permutation(d)
    return _run(model, joint, perms, cfg, threads)


def estimate(
    model, joint: Joint, cfg: EstimatorConfig, threads: int = 1
) -> SensitivityResult:
    """Dispatch on ``cfg.method``."""
    if cfg.method == "exact":
        return shapley_exact(model, joint, cfg, threads)
    return shapley_random(model, joint, cfg, threads)
