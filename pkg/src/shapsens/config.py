"""Run configuration: TOML parsing, validation and manifest emission.

A run is described by one TOML file with flat sections.  See README.md for a
fully annotated example.  Required sections are ``[model]``, ``[distribution]``
and ``[estimator]``; ``[sweep]``, ``[surrogate]`` and ``[fixcheck]`` are
optional.  A ``[run]`` section (written into manifests) is accepted and
ignored so that a manifest can be re-run as a config.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .inputs import CopulaJoint, GaussianJoint, GaussianMarginal, UniformMarginal
from .kriging import KrigingConfig
from .models import (
    ExternalModel,
    InteractionModel,
    IshigamiModel,
    LinearModel,
    ProjectionModel,
)
from .shapley import EstimatorConfig

logger = logging.getLogger(__name__)

RHO_CLAMP = 0.9999

_SECTIONS = {"model", "distribution", "estimator", "sweep", "surrogate", "fixcheck", "run"}


@dataclass(frozen=True)
class SweepSpec:
    parameter: str  # "rho" | "n_outer" | "n_perm"
    values: tuple
    pair: Optional[tuple] = None  # (i, j), 1-based, for rho sweeps


@dataclass(frozen=True)
class SurrogateSpec:
    design_size: int
    kriging: KrigingConfig
    test_size: int = 2000
    save_path: Optional[str] = None


@dataclass(frozen=True)
class FixCheckSpec:
    indices: tuple  # 1-based
    values: Optional[tuple]  # None -> fix at the joint means
    n_var: int = 100_000


@dataclass(frozen=True, eq=False)
class RunConfig:
    """A parsed and validated run description."""

    model: object
    joint: object
    estimator: EstimatorConfig
    sweep: Optional[SweepSpec]
    surrogate: Optional[SurrogateSpec]
    fixcheck: Optional[FixCheckSpec]
    sections: dict  # normalized, manifest-ready copy of the configuration

    def with_seed(self, seed: int) -> "RunConfig":
        sections = {k: dict(v) if isinstance(v, dict) else v for k, v in self.sections.items()}
        sections["estimator"]["seed"] = int(seed)
        return replace(
            self,
            estimator=replace(self.estimator, seed=int(seed)),
            sections=sections,
        )


# ---------------------------------------------------------------------------
# Parsing helpers; every error names the offending key
# ---------------------------------------------------------------------------


def _fail(key, message):
    raise ConfigError(f"{key}: {message}")


def _require(table, section, key, types, what):
    if key not in table:
        _fail(f"{section}.{key}", "missing required key")
    value = table[key]
    if not isinstance(value, types) or isinstance(value, bool):
        _fail(f"{section}.{key}", f"expected {what}")
    return value


def _optional(table, section, key, types, what, default):
    if key not in table:
        return default
    value = table[key]
    if not isinstance(value, types) or isinstance(value, bool):
        _fail(f"{section}.{key}", f"expected {what}")
    return value


def _number_list(table, section, key, required=True):
    if key not in table:
        if required:
            _fail(f"{section}.{key}", "missing required key")
        return None
    value = table[key]
    if not isinstance(value, list) or not value:
        _fail(f"{section}.{key}", "expected a nonempty list of numbers")
    flat = []
    for v in value:
        if isinstance(v, list):  # nested rows are accepted for matrices
            flat.extend(v)
        else:
            flat.append(v)
    for v in flat:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            _fail(f"{section}.{key}", "expected numbers only")
    return [float(v) for v in flat]


def _check_keys(table, section, allowed):
    for key in table:
        if key not in allowed:
            _fail(f"{section}.{key}", "unknown key")


def _square_from_rowmajor(values, section, key):
    n = len(values)
    d = int(round(n**0.5))
    if d * d != n:
        _fail(f"{section}.{key}", f"{n} entries do not form a square matrix")
    return np.asarray(values, dtype=float).reshape(d, d)


def _build_model(table):
    _require(table, "model", "kind", str, "a string")
    kind = table["kind"]
    if kind == "linear":
        _check_keys(table, "model", {"kind", "intercept", "coefficients"})
        coeffs = _number_list(table, "model", "coefficients")
        intercept = _optional(table, "model", "intercept", (int, float), "a number", 0.0)
        return LinearModel(intercept, coeffs)
    if kind == "ishigami":
        _check_keys(table, "model", {"kind", "a", "b"})
        a = _optional(table, "model", "a", (int, float), "a number", 7.0)
        b = _optional(table, "model", "b", (int, float), "a number", 0.1)
        return IshigamiModel(float(a), float(b))
    if kind == "interaction":
        _check_keys(table, "model", {"kind"})
        return InteractionModel()
    if kind == "projection":
        _check_keys(table, "model", {"kind", "index"})
        index = _require(table, "model", "index", int, "an integer")
        if index < 1:
            _fail("model.index", "must be >= 1")
        return ProjectionModel(index)
    if kind == "external":
        _check_keys(table, "model", {"kind", "command", "workdir"})
        command = _require(table, "model", "command", str, "a string")
        if not command.strip():
            _fail("model.command", "must be nonempty")
        workdir = _optional(table, "model", "workdir", str, "a string", None)
        return ExternalModel(command, workdir)
    if kind == "weld-demo":
        _check_keys(table, "model", {"kind"})
        from .demo import weld_model

        return weld_model()
    _fail("model.kind", f"unknown model kind {kind!r}")


def _build_marginal(entry, key):
    if not isinstance(entry, dict):
        _fail(key, "expected a table with a 'kind'")
    kind = entry.get("kind")
    if kind == "uniform":
        _check_keys(entry, key, {"kind", "lower", "upper"})
        lower = _require(entry, key, "lower", (int, float), "a number")
        upper = _require(entry, key, "upper", (int, float), "a number")
        if not upper > lower:
            _fail(key, "needs upper > lower")
        return UniformMarginal(float(lower), float(upper))
    if kind == "gaussian":
        _check_keys(entry, key, {"kind"})
        return GaussianMarginal()
    _fail(f"{key}.kind", f"unknown marginal kind {kind!r}")


def clamp_correlation(rho: float, key: str) -> float:
    """Clamp |rho| to 0.9999 for sampling; exact +-1 would be singular."""
    if abs(rho) > 1.0:
        _fail(key, f"correlation {rho} outside [-1, 1]")
    if abs(rho) > RHO_CLAMP:
        clamped = RHO_CLAMP if rho > 0 else -RHO_CLAMP
        logger.warning("%s: clamping correlation %g to %g", key, rho, clamped)
        return clamped
    return float(rho)


def _build_distribution(table):
    _require(table, "distribution", "kind", str, "a string")
    kind = table["kind"]
    if kind == "gaussian":
        _check_keys(table, "distribution", {"kind", "mean", "covariance"})
        mean = _number_list(table, "distribution", "mean")
        cov = _square_from_rowmajor(
            _number_list(table, "distribution", "covariance"), "distribution", "covariance"
        )
        if len(mean) != cov.shape[0]:
            _fail("distribution.mean", f"length {len(mean)} does not match the covariance")
        try:
            return GaussianJoint(mean, cov)
        except Exception as exc:
            _fail("distribution.covariance", str(exc))
    if kind == "copula":
        _check_keys(table, "distribution", {"kind", "correlation", "marginals"})
        corr = _square_from_rowmajor(
            _number_list(table, "distribution", "correlation"), "distribution", "correlation"
        )
        raw = table.get("marginals")
        if not isinstance(raw, list) or not raw:
            _fail("distribution.marginals", "expected a nonempty array of tables")
        marginals = [
            _build_marginal(entry, f"distribution.marginals[{i}]")
            for i, entry in enumerate(raw)
        ]
        try:
            return CopulaJoint(corr, marginals)
        except Exception as exc:
            _fail("distribution.correlation", str(exc))
    _fail("distribution.kind", f"unknown distribution kind {kind!r}")


def _build_estimator(table):
    _check_keys(
        table, "estimator", {"method", "n_inner", "n_outer", "n_var", "n_perm", "seed"}
    )
    method = _require(table, "estimator", "method", str, "a string")
    kwargs = {"method": method}
    for key, default in (
        ("n_inner", 3),
        ("n_outer", 1),
        ("n_var", 10_000),
        ("n_perm", 1),
        ("seed", 0),
    ):
        kwargs[key] = _optional(table, "estimator", key, int, "an integer", default)
    try:
        return EstimatorConfig(**kwargs)
    except ValueError as exc:
        _fail("estimator", str(exc))


def _build_sweep(table):
    _check_keys(table, "sweep", {"parameter", "values", "pair"})
    parameter = _require(table, "sweep", "parameter", str, "a string")
    if parameter not in ("rho", "n_outer", "n_perm"):
        _fail("sweep.parameter", f"unknown sweep parameter {parameter!r}")
    values = _number_list(table, "sweep", "values")
    if not values:
        _fail("sweep.values", "sweep grid must be nonempty")
    pair = None
    if parameter == "rho":
        raw = table.get("pair")
        if not (isinstance(raw, list) and len(raw) == 2 and all(isinstance(v, int) for v in raw)):
            _fail("sweep.pair", "rho sweeps need a pair of 1-based input indices")
        if raw[0] == raw[1] or min(raw) < 1:
            _fail("sweep.pair", "indices must be distinct and >= 1")
        pair = (raw[0], raw[1])
        values = [clamp_correlation(v, "sweep.values") for v in values]
    else:
        for v in values:
            if v < 1 or v != int(v):
                _fail("sweep.values", "loop sizes must be positive integers")
        values = [int(v) for v in values]
    return SweepSpec(parameter, tuple(values), pair)


def _build_surrogate(table):
    _check_keys(
        table,
        "surrogate",
        {"design_size", "trend", "nugget", "restarts", "lengthscale_bounds", "test_size", "save_path"},
    )
    design_size = _require(table, "surrogate", "design_size", int, "an integer")
    if design_size < 4:
        _fail("surrogate.design_size", "must be >= 4")
    trend = _optional(table, "surrogate", "trend", str, "a string", "linear")
    nugget = _optional(table, "surrogate", "nugget", (int, float), "a number", None)
    restarts = _optional(table, "surrogate", "restarts", int, "an integer", 10)
    bounds = None
    if "lengthscale_bounds" in table:
        raw = table["lengthscale_bounds"]
        if not isinstance(raw, list):
            _fail("surrogate.lengthscale_bounds", "expected a list of [low, high] pairs")
        try:
            bounds = tuple((float(lo), float(hi)) for lo, hi in raw)
        except (TypeError, ValueError):
            _fail("surrogate.lengthscale_bounds", "expected a list of [low, high] pairs")
    test_size = _optional(table, "surrogate", "test_size", int, "an integer", 2000)
    if test_size < 2:
        _fail("surrogate.test_size", "must be >= 2")
    save_path = _optional(table, "surrogate", "save_path", str, "a string", None)
    try:
        kcfg = KrigingConfig(
            trend=trend,
            nugget=None if nugget is None else float(nugget),
            restarts=restarts,
            lengthscale_bounds=bounds,
        )
    except ValueError as exc:
        _fail("surrogate", str(exc))
    return SurrogateSpec(design_size, kcfg, test_size, save_path)


def _build_fixcheck(table, dim):
    _check_keys(table, "fixcheck", {"indices", "values", "n_var"})
    raw = table.get("indices")
    if not (isinstance(raw, list) and raw and all(isinstance(v, int) for v in raw)):
        _fail("fixcheck.indices", "expected a nonempty list of 1-based integers")
    indices = tuple(sorted(raw))
    if len(set(indices)) != len(indices):
        _fail("fixcheck.indices", "indices must be distinct")
    if indices[0] < 1 or indices[-1] > dim:
        _fail("fixcheck.indices", f"indices must lie in [1, {dim}]")
    if len(indices) >= dim:
        _fail("fixcheck.indices", "must fix a proper subset of the inputs")
    values = None
    if "values" in table:
        vals = _number_list(table, "fixcheck", "values")
        if len(vals) != len(indices):
            _fail("fixcheck.values", f"expected {len(indices)} values")
        values = tuple(vals)
    n_var = _optional(table, "fixcheck", "n_var", int, "an integer", 100_000)
    if n_var < 2:
        _fail("fixcheck.n_var", "must be >= 2")
    return FixCheckSpec(indices, values, n_var)


def parse_config(text: str) -> RunConfig:
    """Parse and validate a TOML run configuration."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}")
    for section in data:
        if section not in _SECTIONS:
            _fail(section, "unknown section")
    for section in ("model", "distribution", "estimator"):
        if section not in data:
            _fail(section, "missing required section")
        if not isinstance(data[section], dict):
            _fail(section, "expected a table")

    model = _build_model(data["model"])
    joint = _build_distribution(data["distribution"])
    estimator = _build_estimator(data["estimator"])
    sweep = _build_sweep(data["sweep"]) if "sweep" in data else None
    surrogate = _build_surrogate(data["surrogate"]) if "surrogate" in data else None
    fixcheck = _build_fixcheck(data["fixcheck"], joint.dim) if "fixcheck" in data else None

    model_dim = getattr(model, "dim", None)
    if model_dim is not None and model_dim != joint.dim:
        _fail("distribution", f"model expects {model_dim} inputs, distribution has {joint.dim}")
    if isinstance(model, ProjectionModel) and model.index > joint.dim:
        _fail("model.index", f"exceeds the distribution dimension {joint.dim}")
    if sweep is not None and sweep.parameter == "rho":
        if max(sweep.pair) > joint.dim:
            _fail("sweep.pair", f"index exceeds the distribution dimension {joint.dim}")
    if sweep is not None and sweep.parameter == "n_perm" and estimator.method != "random":
        _fail("sweep.parameter", "n_perm sweeps require the random method")
    if sweep is not None and sweep.parameter == "n_outer" and estimator.method != "exact":
        _fail("sweep.parameter", "n_outer sweeps require the exact method")

    sections = {k: v for k, v in data.items() if k != "run"}
    return RunConfig(model, joint, estimator, sweep, surrogate, fixcheck, sections)


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config(fh.read())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")


# ---------------------------------------------------------------------------
# Manifest emission (restricted TOML writer)
# ---------------------------------------------------------------------------


def _toml_scalar(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_scalar(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {value!r} to TOML")


def dump_toml(sections: dict) -> str:
    """Serialize nested {section: {key: value}} tables to TOML text.

    Handles the value shapes this package emits: scalars, flat lists, nested
    numeric lists, and lists of scalar tables (arrays of tables).
    """
    lines = []
    for name, table in sections.items():
        lines.append(f"[{name}]")
        nested = []
        for key, value in table.items():
            if isinstance(value, list) and value and isinstance(value[0], dict):
                nested.append((key, value))
            else:
                lines.append(f"{key} = {_toml_scalar(value)}")
        for key, entries in nested:
            for entry in entries:
                lines.append("")
                lines.append(f"[[{name}.{key}]]")
                for k, v in entry.items():
                    lines.append(f"{k} = {_toml_scalar(v)}")
        lines.append("")
    return "\n".join(lines)


def write_manifest(path, run_info: dict, sections: dict) -> None:
    """Write a re-runnable manifest: a [run] section plus the configuration."""
    payload = {"run": run_info}
    payload.update(sections)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dump_toml(payload))
