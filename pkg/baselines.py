"""Classical post-hoc recalibration maps over (initial forecast, outcome) pairs.

Platt scaling on the raw probability (sigma(A * p + B), not on log-odds),
isotonic regression by pool-adjacent-violators, and histogram binning. Maps are
fitted on the validation split and applied to the test split.
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from scipy.special import expit, log_expit
from sklearn.isotonic import isotonic_regression

from errors import DataValidationError
from metrics import DEFAULT_ECE_BINS, calibration_bin

logger = logging.getLogger(__name__)

PLATT_TOLERANCE = 1e-8
PLATT_MAX_ITER = 100
MAX_DAMPING = 1e6
BASELINE_KINDS = ("identity", "platt", "isotonic", "binning")


def _pairs(preds, outcomes):
    preds = np.asarray(preds, dtype=float).reshape(-1)
    outcomes = np.asarray(outcomes, dtype=float).reshape(-1)
    if preds.shape != outcomes.shape:
        raise DataValidationError(f"{preds.size} predictions but {outcomes.size} outcomes")
    if preds.size == 0:
        raise DataValidationError("Cannot fit a calibration map on zero examples")
    if np.any((outcomes != 0) & (outcomes != 1)):
        raise DataValidationError("Outcomes must be 0 or 1")
    if not np.all(np.isfinite(preds)):
        raise DataValidationError("Predictions must be finite")
    return preds, outcomes


# ============================================================
# MAPS
# ============================================================

@dataclass(frozen=True)
class IdentityMap:
    """Leaves the initial forecast as is."""

    kind = "identity"

    def apply(self, pred):
        return np.clip(np.asarray(pred, dtype=float), 0.0, 1.0)

    def to_dict(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True)
class PlattParams:
    A: float
    B: float

    kind = "platt"

    def __post_init__(self):
        if not (math.isfinite(self.A) and math.isfinite(self.B)):
            raise ValueError(f"Platt parameters must be finite, got A={self.A}, B={self.B}")

    def apply(self, pred):
        return expit(self.A * np.asarray(pred, dtype=float) + self.B)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "A": self.A, "B": self.B}


@dataclass(frozen=True, eq=False)
class IsotonicMap:
    """Right-continuous step function; inputs outside the range clamp."""

    breakpoints: np.ndarray
    levels: np.ndarray

    kind = "isotonic"

    def __post_init__(self):
        breakpoints = np.asarray(self.breakpoints, dtype=float).reshape(-1)
        levels = np.asarray(self.levels, dtype=float).reshape(-1)
        if breakpoints.size == 0 or breakpoints.shape != levels.shape:
            raise ValueError("Isotonic map needs one level per breakpoint")
        if np.any(np.diff(breakpoints) <= 0):
            raise ValueError("Isotonic breakpoints must be strictly ascending")
        if np.any(np.diff(levels) < 0) or np.any((levels < 0) | (levels > 1)):
            raise ValueError("Isotonic levels must be nondecreasing probabilities")
        object.__setattr__(self, "breakpoints", breakpoints)
        object.__setattr__(self, "levels", levels)

    def apply(self, pred):
        pos = np.searchsorted(self.breakpoints, np.asarray(pred, dtype=float), side="right") - 1
        return self.levels[np.clip(pos, 0, self.levels.size - 1)]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "breakpoints": self.breakpoints.tolist(), "levels": self.levels.tolist()}


@dataclass(frozen=True, eq=False)
class BinningMap:
    frequencies: np.ndarray

    kind = "binning"

    def __post_init__(self):
        frequencies = np.asarray(self.frequencies, dtype=float).reshape(-1)
        if frequencies.size == 0 or np.any((frequencies < 0) | (frequencies > 1)):
            raise ValueError("Bin frequencies must be probabilities, at least one bin")
        object.__setattr__(self, "frequencies", frequencies)

    @property
    def n_bins(self) -> int:
        return int(self.frequencies.size)

    @property
    def edges(self) -> np.ndarray:
        return np.arange(self.n_bins + 1) / self.n_bins

    def apply(self, pred):
        return self.frequencies[calibration_bin(pred, self.n_bins)]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "frequencies": self.frequencies.tolist()}


CalibrationMap = Union[IdentityMap, PlattParams, IsotonicMap, BinningMap]


def apply(calibration_map: CalibrationMap, pred):
    result = calibration_map.apply(pred)
    return float(result) if np.ndim(result) == 0 else result


# ============================================================
# FITTING
# ============================================================

def _platt_nll(design, outcomes, theta) -> float:
    z = design @ theta
    return float(-np.mean(outcomes * log_expit(z) + (1.0 - outcomes) * log_expit(-z)))


def fit_platt(preds, outcomes, tol: float = PLATT_TOLERANCE, max_iter: int = PLATT_MAX_ITER) -> PlattParams:
    """Damped Newton on the mean negative log-likelihood."""
    preds, outcomes = _pairs(preds, outcomes)
    rate = outcomes.mean()
    if rate in (0.0, 1.0):
        raise DataValidationError("Platt scaling needs both outcome classes; the likelihood is unbounded")

    design = np.column_stack([preds, np.ones_like(preds)])
    theta = np.array([0.0, math.log(rate / (1.0 - rate))])
    loss = _platt_nll(design, outcomes, theta)
    damping = 0.0
    iteration = 0
    converged = False
    while iteration < max_iter:
        s = expit(design @ theta)
        grad = design.T @ (s - outcomes) / preds.size
        if np.linalg.norm(grad) < tol:
            converged = True
            break
        hessian = (design * (s * (1.0 - s))[:, None]).T @ design / preds.size
        improved = False
        while damping <= MAX_DAMPING:
            try:
                step = np.linalg.solve(hessian + damping * np.eye(2), grad)
            except np.linalg.LinAlgError:
                damping = max(damping * 10.0, 1e-10)
                continue
            candidate = theta - step
            candidate_loss = _platt_nll(design, outcomes, candidate)
            if candidate_loss <= loss + 1e-15:
                improved = True
                break
            damping = max(damping * 10.0, 1e-10)
        iteration += 1
        if not improved:
            # no damped step lowers the loss; keep theta
            converged = True
            break
        theta, loss = candidate, candidate_loss
        damping *= 0.1
    if not converged:
        logger.warning("Platt fit stopped after %d iterations", iteration)
    params = PlattParams(float(theta[0]), float(theta[1]))
    logger.info("Platt fit: A=%.6f B=%.6f after %d iterations", params.A, params.B, iteration)
    return params


def fit_isotonic(preds, outcomes) -> IsotonicMap:
    preds, outcomes = _pairs(preds, outcomes)
    breakpoints, inverse, counts = np.unique(preds, return_inverse=True, return_counts=True)
    group_means = np.bincount(inverse.reshape(-1), weights=outcomes) / counts
    levels = isotonic_regression(group_means, sample_weight=counts.astype(float), increasing=True)
    return IsotonicMap(breakpoints, np.clip(levels, 0.0, 1.0))


def fit_binning(preds, outcomes, n_bins: int = DEFAULT_ECE_BINS) -> BinningMap:
    """Per-bin outcome rate; empty bins fall back to the global rate."""
    preds, outcomes = _pairs(preds, outcomes)
    idx = calibration_bin(preds, n_bins)
    counts = np.bincount(idx, minlength=n_bins)
    hits = np.bincount(idx, weights=outcomes, minlength=n_bins)
    frequencies = np.full(n_bins, outcomes.mean())
    filled = counts > 0
    frequencies[filled] = hits[filled] / counts[filled]
    return BinningMap(frequencies)


def fit_baseline(kind: str, preds, outcomes, n_bins: int = DEFAULT_ECE_BINS) -> CalibrationMap:
    if kind == "identity":
        return IdentityMap()
    if kind == "platt":
        return fit_platt(preds, outcomes)
    if kind == "isotonic":
        return fit_isotonic(preds, outcomes)
    if kind == "binning":
        return fit_binning(preds, outcomes, n_bins)
    raise ValueError(f"Unknown baseline {kind!r}; expected one of {BASELINE_KINDS}")


# ============================================================
# SERIALIZATION
# ============================================================

def map_from_dict(payload: dict) -> CalibrationMap:
    kind = payload.get("kind")
    try:
        if kind == "identity":
            return IdentityMap()
        if kind == "platt":
            return PlattParams(float(payload["A"]), float(payload["B"]))
        if kind == "isotonic":
            return IsotonicMap(payload["breakpoints"], payload["levels"])
        if kind == "binning":
            return BinningMap(payload["frequencies"])
    except (KeyError, ValueError) as e:
        raise DataValidationError(f"Invalid {kind} calibration map: {e}") from None
    raise DataValidationError(f"Unknown calibration map kind {kind!r}")


def save_map(calibration_map: CalibrationMap, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(calibration_map.to_dict(), indent=2), encoding="utf-8")
    return path


def load_map(path) -> CalibrationMap:
    path = Path(path)
    if not path.exists():
        raise DataValidationError(f"Calibration map not found: {path}")
    return map_from_dict(json.loads(path.read_text(encoding="utf-8")))
