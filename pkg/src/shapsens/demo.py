"""The 11-input weld-inspection demo.

Eleven standardized Gaussian inputs: four elastic coefficients (independent)
followed by seven grain orientations whose correlation matrix comes from the
welding-process analysis.  The response is a fixed quadratic-plus-interaction
polynomial chosen so that the three elastic coefficients C13/C33/C55 carry
small effects; it stands in for the unavailable finite-element code, so the
index values are illustrative only -- the point of the demo is the surrogate
workflow and the confidence-interval widths.
"""
from __future__ import annotations

import numpy as np

from .inputs import GaussianJoint

INPUT_NAMES = (
    "C11", "C13", "C33", "C55",
    "Or1", "Or2", "Or3", "Or4", "Or5", "Or6", "Or7",
)

# Correlation between the seven orientations (elastic coefficients are
# independent of everything).
ORIENTATION_CORRELATION = np.array(
    [
        [1.00, 0.80, 0.74, 0.69, 0.31, 0.23, 0.20],
        [0.80, 1.00, 0.64, 0.53, 0.59, 0.51, 0.46],
        [0.74, 0.64, 1.00, 0.25, 0.60, 0.57, 0.54],
        [0.69, 0.53, 0.25, 1.00, -0.25, -0.35, -0.33],
        [0.31, 0.59, 0.60, -0.25, 1.00, 0.96, 0.84],
        [0.23, 0.51, 0.57, -0.35, 0.96, 1.00, 0.95],
        [0.20, 0.46, 0.54, -0.33, 0.84, 0.95, 1.00],
    ]
)

# Synthetic response coefficients (inputs ordered as INPUT_NAMES).
_LINEAR = np.array([0.5, 0.15, 0.2, 0.25, 1.0, 0.7, 0.9, 0.5, 0.4, 0.35, 0.3])
_QUADRATIC = np.array([0.15, 0.0, 0.0, 0.0, 0.2, 0.0, 0.15, 0.0, 0.0, 0.0, 0.1])
_PAIRS = ((4, 5, 0.3), (6, 7, 0.25), (0, 8, 0.2), (9, 10, 0.2))


def weld_correlation() -> np.ndarray:
    """Full 11x11 input correlation: identity block plus the orientation block."""
    corr = np.eye(11)
    corr[4:, 4:] = ORIENTATION_CORRELATION
    return corr


def weld_joint() -> GaussianJoint:
    """Standardized Gaussian inputs with the weld correlation structure."""
    return GaussianJoint(np.zeros(11), weld_correlation())


class WeldDemoModel:
    """Fixed quadratic-plus-interaction polynomial over the 11 inputs."""

    dim = 11

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = x @ _LINEAR + (x**2) @ _QUADRATIC
        for i, j, c in _PAIRS:
            y = y + c * x[:, i] * x[:, j]
        return y

    def __repr__(self):
        return "WeldDemoModel()"


def weld_model() -> WeldDemoModel:
    return WeldDemoModel()


def weld_config_sections(
    seed: int = 0,
    n_perm: int = 10_000,
    design_size: int = 500,
    restarts: int = 10,
    test_size: int = 10_000,
) -> dict:
    """Config sections for the demo, also written out as a runnable file."""
    corr = weld_correlation()
    return {
        "model": {"kind": "weld-demo"},
        "distribution": {
            "kind": "gaussian",
            "mean": [0.0] * 11,
            "covariance": [float(v) for v in corr.ravel()],
        },
        "estimator": {
            "method": "random",
            "n_inner": 3,
            "n_outer": 1,
            "n_var": 10_000,
            "n_perm": int(n_perm),
            "seed": int(seed),
        },
        "surrogate": {
            "design_size": int(design_size),
            "trend": "linear",
            "restarts": int(restarts),
            "test_size": int(test_size),
        },
    }
