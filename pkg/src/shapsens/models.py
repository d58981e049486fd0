"""Test functions and the batch evaluation contract.

Every model is a callable mapping an ``(n, d)`` input matrix to a length-n
output vector.  Builtin models are pure and vectorized; :class:`ExternalModel`
drives a child process over a CSV pipe and serializes access to it.
"""
from __future__ import annotations

import shlex
import subprocess
import threading
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ExternalModelError, ModelEvaluationError


@dataclass(frozen=True)
class LinearModel:
    """Affine response: intercept + coefficients . x."""

    intercept: float
    coefficients: tuple

    def __init__(self, intercept, coefficients):
        object.__setattr__(self, "intercept", float(intercept))
        object.__setattr__(
            self, "coefficients", tuple(float(c) for c in coefficients)
        )

    @property
    def dim(self) -> Optional[int]:
        return len(self.coefficients)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.intercept + x @ np.asarray(self.coefficients)


@dataclass(frozen=True)
class IshigamiModel:
    """sin(x1) + a sin(x2)^2 + b x3^4 sin(x1), the classic three-input benchmark."""

    a: float = 7.0
    b: float = 0.1

    @property
    def dim(self) -> Optional[int]:
        return 3

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        s1 = np.sin(x[:, 0])
        return s1 + self.a * np.sin(x[:, 1]) ** 2 + self.b * x[:, 2] ** 4 * s1


@dataclass(frozen=True)
class InteractionModel:
    """x1 + x2*x3: a pure interaction riding on one additive term."""

    @property
    def dim(self) -> Optional[int]:
        return 3

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x[:, 0] + x[:, 1] * x[:, 2]


@dataclass(frozen=True)
class ProjectionModel:
    """Returns input number ``index`` (1-based); all other inputs are inert."""

    index: int

    def __post_init__(self):
        if int(self.index) < 1:
            raise ValueError("projection index is 1-based and must be >= 1")
        object.__setattr__(self, "index", int(self.index))

    @property
    def dim(self) -> Optional[int]:
        return None  # any dimension >= index

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[1] < self.index:
            raise ModelEvaluationError(
                f"projection index {self.index} exceeds input dimension {x.shape[1]}"
            )
        return x[:, self.index - 1].copy()


@dataclass(frozen=True)
class EvaluationBatch:
    """A validated (inputs, outputs) pair; outputs must be finite."""

    inputs: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=float)
        outputs = np.asarray(self.outputs, dtype=float).reshape(-1)
        if inputs.shape[0] != outputs.shape[0]:
            raise ModelEvaluationError(
                f"{inputs.shape[0]} input rows but {outputs.shape[0]} outputs"
            )
        bad = np.flatnonzero(~np.isfinite(outputs))
        if bad.size:
            raise ModelEvaluationError(
                f"non-finite model output at row {bad[0]}", row=int(bad[0])
            )
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "outputs", outputs)

    def __len__(self):
        return self.outputs.shape[0]


@dataclass(eq=False)
class ExternalModel:
    """A simulator driven through a child process.

    The input batch is written to the child's standard input as CSV with a
    ``x1,...,xd`` header, one row per point, '.' decimals, newline-terminated
    rows.  The child must print one output value per input row, in order, to
    standard output.  Access is serialized: one in-flight batch per model.
    """

    command: str
    workdir: Optional[str] = None
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        if not self.command.strip():
            raise ValueError("external model command must be nonempty")

    @property
    def dim(self) -> Optional[int]:
        return None  # determined by the batch

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 2:
            raise ModelEvaluationError("external model expects an (n, d) matrix")
        with self._lock:
            return self._run_batch(x)

    def _run_batch(self, x: np.ndarray) -> np.ndarray:
        n, d = x.shape
        lines = [",".join(f"x{j}" for j in range(1, d + 1))]
        for row in x:
            lines.append(",".join(repr(float(v)) for v in row))
        payload = "\n".join(lines) + "\n"
        try:
            proc = subprocess.run(
                shlex.split(self.command),
                input=payload,
                capture_output=True,
                text=True,
                cwd=self.workdir,
            )
        except OSError as exc:
            raise ExternalModelError(f"failed to launch {self.command!r}: {exc}")
        if proc.returncode != 0:
            raise ExternalModelError(
                f"external model exited with code {proc.returncode}",
                stderr=proc.stderr,
            )
        out_lines = [ln for ln in proc.stdout.splitlines() if ln.strip()]
        if len(out_lines) != n:
            raise ExternalModelError(
                f"expected {n} output lines, got {len(out_lines)}",
                stderr=proc.stderr,
            )
        values = np.empty(n)
        for i, ln in enumerate(out_lines):
            try:
                values[i] = float(ln)
            except ValueError:
                raise ExternalModelError(
                    f"malformed output line {i}: {ln!r}", stderr=proc.stderr
                )
        return values


def evaluate(model, x: np.ndarray) -> np.ndarray:
    """Apply ``model`` to the rows of ``x`` with shape/arity checks.

    External models additionally get a finiteness check on their outputs; the
    error names the first offending row.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError("inputs must form an (n, d) matrix")
    expected = getattr(model, "dim", None)
    if expected is not None and x.shape[1] != expected:
        raise ValueError(
            f"model expects {expected} inputs but the batch has {x.shape[1]} columns"
        )
    y = np.asarray(model(x), dtype=float).reshape(-1)
    if y.shape[0] != x.shape[0]:
        raise ModelEvaluationError(
            f"model returned {y.shape[0]} outputs for {x.shape[0]} rows"
        )
    if isinstance(model, ExternalModel):
        return EvaluationBatch(x, y).outputs
    return y


def evaluate_external(model: ExternalModel, x: np.ndarray) -> np.ndarray:
    """Evaluate an :class:`ExternalModel` batch (order-preserving)."""
    return evaluate(model, x)
