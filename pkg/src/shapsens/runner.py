"""Experiment orchestration and machine-readable result emission.

Every verb writes plot-ready CSV files (one observation per row, '.' decimal
separator, '\\n' line endings) plus a TOML manifest that captures the resolved
configuration, the seed, evaluation counts and wall time.  Re-running a
manifest as a config reproduces the CSVs byte for byte.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, replace
from importlib import metadata
from typing import Optional

import numpy as np

from . import kriging
from .analytic import (
    LinearGaussianProblem,
    analytic_linear_gaussian,
    shapley_interaction_3d,
)
from .config import (
    FixCheckSpec,
    RunConfig,
    SweepSpec,
    clamp_correlation,
    parse_config,
    dump_toml,
    write_manifest,
)
from .demo import INPUT_NAMES, WeldDemoModel, weld_config_sections
from .errors import ConfigError
from .inputs import (
    CopulaJoint,
    GaussianJoint,
    GaussianMarginal,
    IndexSet,
    UniformMarginal,
    quantile_transform,
    sample,
)
from .models import InteractionModel, LinearModel, evaluate
from .rng import DESIGN_STREAM, FIXCHECK_STREAM, TEST_STREAM, substream
from .shapley import SensitivityResult, estimate

INDICES_COLUMNS = (
    "input",
    "shapley",
    "shapley_ci",
    "first_order_full",
    "first_order_full_ci",
    "total_independent",
    "total_independent_ci",
)


def _version() -> str:
    try:
        return metadata.version("shapsens")
    except metadata.PackageNotFoundError:
        return "unknown"


def _fmt(value) -> str:
    return repr(float(value))


def _write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _labels(run: RunConfig) -> tuple:
    if isinstance(run.model, WeldDemoModel):
        return INPUT_NAMES
    return tuple(f"x{i}" for i in range(1, run.joint.dim + 1))


def _result_rows(labels, result: SensitivityResult, prefix=()):
    rows = []
    for i, label in enumerate(labels):
        rows.append(
            list(prefix)
            + [
                label,
                _fmt(result.shapley[i]),
                _fmt(result.shapley_ci[i]),
                _fmt(result.first_order[i]),
                _fmt(result.first_order_ci[i]),
                _fmt(result.total_independent[i]),
                _fmt(result.total_independent_ci[i]),
            ]
        )
    return rows


@dataclass
class RunArtifacts:
    paths: list
    results: list  # (sweep value or None, SensitivityResult)
    surrogate: Optional[kriging.KrigingModel] = None
    surrogate_info: Optional[dict] = None


# ---------------------------------------------------------------------------
# Distribution and oracle helpers
# ---------------------------------------------------------------------------


def _joint_with_rho(joint, pair, rho):
    i, j = pair[0] - 1, pair[1] - 1
    if isinstance(joint, GaussianJoint):
        cov = np.array(joint.covariance)
        scale = np.sqrt(cov[i, i] * cov[j, j])
        cov[i, j] = cov[j, i] = rho * scale
        return GaussianJoint(joint.mean, cov)
    corr = np.array(joint.correlation)
    corr[i, j] = corr[j, i] = rho
    return CopulaJoint(corr, joint.marginals)


def _interaction_structure(joint) -> Optional[tuple]:
    """(sigma1, sigma2, sigma3, rho) when the joint matches the closed form."""
    if not isinstance(joint, GaussianJoint) or joint.dim != 3:
        return None
    if not np.allclose(joint.mean, 0.0, atol=1e-12):
        return None
    cov = joint.covariance
    if abs(cov[0, 1]) > 1e-12 or abs(cov[1, 2]) > 1e-12:
        return None
    s = np.sqrt(np.diag(cov))
    return float(s[0]), float(s[1]), float(s[2]), float(cov[0, 2] / (s[0] * s[2]))


def analytic_oracle(model, joint):
    """Exact (shapley, first_order, total_independent) when available, else None."""
    if isinstance(model, LinearModel) and isinstance(joint, GaussianJoint):
        problem = LinearGaussianProblem(model.intercept, model.coefficients, joint)
        exact = analytic_linear_gaussian(problem)
        return exact.shapley, exact.first_order, exact.total_independent
    if isinstance(model, InteractionModel):
        params = _interaction_structure(joint)
        if params is not None:
            return shapley_interaction_3d(*params)
    return None


def _marginal_means(joint) -> np.ndarray:
    if isinstance(joint, GaussianJoint):
        return np.array(joint.mean)
    means = []
    for m in joint.marginals:
        means.append((m.lower + m.upper) / 2.0 if isinstance(m, UniformMarginal) else 0.0)
    return np.array(means)


# ---------------------------------------------------------------------------
# Surrogate preparation
# ---------------------------------------------------------------------------


def _prepare_model(run: RunConfig, joint, out_prefix, save=True):
    """Fit the surrogate when configured; otherwise pass the model through."""
    if run.surrogate is None:
        return run.model, None, None, []
    spec = run.surrogate
    seed = run.estimator.seed
    design_u = kriging.sobol_design(spec.design_size, joint.dim, substream(seed, DESIGN_STREAM))
    design_x = quantile_transform(joint, design_u)
    design_y = evaluate(run.model, design_x)
    surrogate = kriging.fit(design_x, design_y, spec.kriging)
    x_test = sample(joint, spec.test_size, substream(seed, TEST_STREAM))
    y_test = evaluate(run.model, x_test)
    q2_value = kriging.q2(surrogate, x_test, y_test)
    paths = []
    if save:
        path = spec.save_path or f"{out_prefix}_surrogate.json"
        kriging.save_model(surrogate, path)
        paths.append(path)
    info = {
        "design_size": spec.design_size,
        "test_size": spec.test_size,
        "design_evaluations": spec.design_size + spec.test_size,
        "q2": float(q2_value),
        "process_variance": float(surrogate.process_variance),
        "lengthscales": [float(v) for v in surrogate.lengthscales],
    }
    return kriging.as_model(surrogate), surrogate, info, paths


def _run_info(verb, run: RunConfig, threads, outputs, wall_time, extra=None) -> dict:
    info = {
        "verb": verb,
        "package": "shapsens",
        "version": _version(),
        "seed": run.estimator.seed,
        "threads": threads,
        "wall_time_s": round(wall_time, 3),
        "outputs": [str(p) for p in outputs],
    }
    if extra:
        info.update(extra)
    return info


# ---------------------------------------------------------------------------
# Verbs
# ---------------------------------------------------------------------------


def run_analysis(run: RunConfig, out_prefix: str, threads: int = 1) -> RunArtifacts:
    """Single analysis, or a long-format sweep over a correlation entry."""
    if run.sweep is not None and run.sweep.parameter != "rho":
        raise ConfigError("sweep.parameter: analyze only sweeps 'rho'; use converge")
    start = time.perf_counter()
    labels = _labels(run)
    csv_path = f"{out_prefix}_indices.csv"
    paths = [csv_path]
    results = []
    surrogate = None
    info = None

    if run.sweep is None:
        model, surrogate, info, extra_paths = _prepare_model(run, run.joint, out_prefix)
        paths.extend(extra_paths)
        result = estimate(model, run.joint, run.estimator, threads)
        results.append((None, result))
        _write_csv(csv_path, INDICES_COLUMNS, _result_rows(labels, result))
        evaluations = result.n_evaluations
    else:
        rows = []
        evaluations = 0
        for rho in run.sweep.values:
            joint = _joint_with_rho(run.joint, run.sweep.pair, rho)
            model, surrogate, info, extra_paths = _prepare_model(
                run, joint, f"{out_prefix}_rho{rho}", save=False
            )
            result = estimate(model, joint, run.estimator, threads)
            results.append((rho, result))
            rows.extend(_result_rows(labels, result, prefix=[_fmt(rho)]))
            evaluations += result.n_evaluations
        _write_csv(csv_path, ("rho",) + INDICES_COLUMNS, rows)

    manifest = f"{out_prefix}_manifest.toml"
    paths.append(manifest)
    extra = {"evaluations": evaluations}
    if info is not None:
        extra.update({f"surrogate_{k}": v for k, v in info.items()})
    write_manifest(
        manifest,
        _run_info("analyze", run, threads, paths, time.perf_counter() - start, extra),
        run.sections,
    )
    return RunArtifacts(paths, results, surrogate, info)


def run_convergence(run: RunConfig, out_prefix: str, threads: int = 1) -> RunArtifacts:
    """Sweep the outer-loop or permutation budget; attach exact values if known."""
    if run.sweep is None or run.sweep.parameter not in ("n_outer", "n_perm"):
        raise ConfigError("sweep.parameter: converge sweeps 'n_outer' or 'n_perm'")
    start = time.perf_counter()
    labels = _labels(run)
    model, surrogate, info, extra_paths = _prepare_model(run, run.joint, out_prefix)
    oracle = analytic_oracle(run.model, run.joint)

    header = [run.sweep.parameter] + list(INDICES_COLUMNS)
    if oracle is not None:
        header += ["shapley_exact", "first_order_full_exact", "total_independent_exact"]
    rows = []
    results = []
    evaluations = 0
    for value in run.sweep.values:
        cfg = replace(run.estimator, **{run.sweep.parameter: int(value)})
        result = estimate(model, run.joint, cfg, threads)
        results.append((value, result))
        evaluations += result.n_evaluations
        block = _result_rows(labels, result, prefix=[str(int(value))])
        if oracle is not None:
            sh, s, st = oracle
            for i, row in enumerate(block):
                row.extend([_fmt(sh[i]), _fmt(s[i]), _fmt(st[i])])
        rows.extend(block)

    csv_path = f"{out_prefix}_convergence.csv"
    _write_csv(csv_path, header, rows)
    paths = [csv_path] + extra_paths + [f"{out_prefix}_manifest.toml"]
    extra = {"evaluations": evaluations}
    if info is not None:
        extra.update({f"surrogate_{k}": v for k, v in info.items()})
    write_manifest(
        paths[-1],
        _run_info("converge", run, threads, paths, time.perf_counter() - start, extra),
        run.sections,
    )
    return RunArtifacts(paths, results, surrogate, info)


def run_analytic(run: RunConfig, out_prefix: str) -> list:
    """Closed-form indices for linear-Gaussian (or 3-input interaction) specs."""
    start = time.perf_counter()
    oracle = analytic_oracle(run.model, run.joint)
    if oracle is None:
        raise ConfigError(
            "model/distribution: no closed form available; the analytic verb needs "
            "a linear model with Gaussian inputs or the 3-input interaction structure"
        )
    sh, s, st = oracle
    labels = _labels(run)
    csv_path = f"{out_prefix}_analytic.csv"
    rows = [
        [labels[i], _fmt(sh[i]), _fmt(s[i]), _fmt(st[i])]
        for i in range(len(labels))
    ]
    _write_csv(
        csv_path,
        ("input", "shapley", "first_order_full", "total_independent"),
        rows,
    )
    manifest = f"{out_prefix}_manifest.toml"
    write_manifest(
        manifest,
        _run_info("analytic", run, 1, [csv_path, manifest], time.perf_counter() - start),
        run.sections,
    )
    return [csv_path, manifest]


def run_fit_surrogate(run: RunConfig, out_prefix: str) -> list:
    """Fit, validate and persist a surrogate without running the estimator."""
    if run.surrogate is None:
        raise ConfigError("surrogate: section required for fit-surrogate")
    start = time.perf_counter()
    spec = run.surrogate
    if spec.save_path is None:
        run = replace_surrogate_path(run, f"{out_prefix}_surrogate.json")
    _, surrogate, info, paths = _prepare_model(run, run.joint, out_prefix)
    manifest = f"{out_prefix}_manifest.toml"
    paths = paths + [manifest]
    write_manifest(
        manifest,
        _run_info(
            "fit-surrogate",
            run,
            1,
            paths,
            time.perf_counter() - start,
            {f"surrogate_{k}": v for k, v in info.items()},
        ),
        run.sections,
    )
    return paths


def replace_surrogate_path(run: RunConfig, path: str) -> RunConfig:
    spec = replace(run.surrogate, save_path=path)
    return replace(run, surrogate=spec)


def fixed_input_variance_check(
    run: RunConfig,
    out_prefix: str,
    spec: Optional[FixCheckSpec] = None,
    model=None,
    write=True,
) -> dict:
    """Compare Var(Y) against Var(Y | fixed inputs held at given values).

    The remaining inputs follow their conditional law given the fixed values;
    the relative decrease supports the factors-fixing reading of small
    Shapley effects.
    """
    spec = spec or run.fixcheck
    if spec is None:
        raise ConfigError("fixcheck: section required for fix-check")
    start = time.perf_counter()
    joint = run.joint
    fixed = IndexSet(spec.indices)
    if len(fixed) == 0 or len(fixed) >= joint.dim:
        raise ConfigError("fixcheck.indices: must fix a nonempty proper subset")
    if model is None:
        model, _, _, _ = _prepare_model(run, joint, out_prefix, save=False)
    seed = run.estimator.seed

    values = (
        np.asarray(spec.values, dtype=float)
        if spec.values is not None
        else _marginal_means(joint)[fixed.zero_based()]
    )

    x_full = sample(joint, spec.n_var, substream(seed, FIXCHECK_STREAM, 0))
    var_full = float(np.var(evaluate(model, x_full), ddof=1))

    free = fixed.complement(joint.dim)
    split = joint._conditional_split(free.zero_based(), fixed.zero_based())
    rows = split.full_rows(values[None, :], spec.n_var, substream(seed, FIXCHECK_STREAM, 1))
    var_fixed = float(np.var(evaluate(model, rows), ddof=1))
    decrease = 1.0 - var_fixed / var_full

    report = {
        "fixed_inputs": [int(i) for i in spec.indices],
        "fixed_values": [float(v) for v in values],
        "variance_full": var_full,
        "variance_fixed": var_fixed,
        "relative_decrease": decrease,
        "n_var": spec.n_var,
    }
    if write:
        labels = _labels(run)
        csv_path = f"{out_prefix}_fixcheck.csv"
        _write_csv(
            csv_path,
            ("fixed_inputs", "variance_full", "variance_fixed", "relative_decrease"),
            [[
                ";".join(labels[i - 1] for i in spec.indices),
                _fmt(var_full),
                _fmt(var_fixed),
                _fmt(decrease),
            ]],
        )
        manifest = f"{out_prefix}_fixcheck_manifest.toml"
        write_manifest(
            manifest,
            _run_info(
                "fix-check", run, 1, [csv_path, manifest],
                time.perf_counter() - start, report,
            ),
            run.sections,
        )
        report["outputs"] = [csv_path, manifest]
    return report


def run_weld_demo(
    out_prefix: str,
    seed: int = 0,
    threads: int = 1,
    n_perm: int = 10_000,
    design_size: int = 500,
    restarts: int = 10,
) -> dict:
    """The full surrogate workflow on the 11-input weld demo.

    Generates a space-filling design mapped through the joint law, fits the
    surrogate, estimates Shapley effects with the random-permutation method on
    the surrogate, then fixes the three smallest-effect inputs at their means
    and reports the variance decrease.  Outputs are synthetic and are not
    comparable to any physical study.
    """
    sections = weld_config_sections(seed=seed, n_perm=n_perm, design_size=design_size,
                                    restarts=restarts)
    config_path = f"{out_prefix}_config.toml"
    with open(config_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dump_toml(sections))
    run = parse_config(dump_toml(sections))

    artifacts = run_analysis(run, out_prefix, threads)
    result = artifacts.results[0][1]
    order = np.argsort(result.shapley)
    smallest = IndexSet(int(i) + 1 for i in order[:3])
    model = kriging.as_model(artifacts.surrogate)
    report = fixed_input_variance_check(
        run,
        out_prefix,
        spec=FixCheckSpec(indices=smallest.indices, values=None, n_var=100_000),
        model=model,
    )
    return {
        "config": config_path,
        "paths": [config_path] + artifacts.paths + report["outputs"],
        "result": result,
        "surrogate_info": artifacts.surrogate_info,
        "fixcheck": report,
        "smallest_inputs": list(smallest.indices),
    }
