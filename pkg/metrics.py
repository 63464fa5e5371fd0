"""Evaluation metrics for probability forecasts of binary events.

Brier score, accuracy, AUC, ECE, the reliability table, evaluation-time KL to
crowd histograms and the Brier-vs-ranked-uncertainty curve. ECE and the
reliability table share one equal-width partition: [0, 1/M], (1/M, 2/M], ...
"""

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import rankdata

from beta_core import BetaMixture, Histogram
from errors import DataValidationError, UndefinedMetricError
from objectives import PROB_CLIP, human_loss

logger = logging.getLogger(__name__)

DEFAULT_ECE_BINS = 10
DEFAULT_WINDOW = 300
THRESHOLD = 0.5


@dataclass(frozen=True)
class ReliabilityBin:
    bin_mean_pred: float
    bin_acc: float
    count: int


@dataclass(frozen=True)
class UncertaintyCurve:
    window: int
    points: Tuple[Tuple[int, float], ...]

    @property
    def smoothed_brier(self) -> np.ndarray:
        return np.array([b for _, b in self.points])


@dataclass
class EvalReport:
    method: str
    n: int
    brier: float
    accuracy: float
    auc: float
    ece: float
    log_loss: float
    kl_mean: Optional[float] = None
    reliability_bins: List[ReliabilityBin] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _validate(preds, outcomes) -> Tuple[np.ndarray, np.ndarray]:
    preds = np.asarray(preds, dtype=float).reshape(-1)
    outcomes = np.asarray(outcomes, dtype=float).reshape(-1)
    if preds.shape != outcomes.shape:
        raise DataValidationError(f"{preds.size} predictions but {outcomes.size} outcomes")
    if preds.size == 0:
        raise DataValidationError("Metrics need at least one prediction")
    if not np.all(np.isfinite(preds)) or np.any((preds < 0) | (preds > 1)):
        raise DataValidationError("Predictions must be probabilities in [0, 1]")
    if np.any((outcomes != 0) & (outcomes != 1)):
        raise DataValidationError("Outcomes must be 0 or 1")
    return preds, outcomes


def calibration_bin(preds, n_bins: int) -> np.ndarray:
    """Index of each prediction in the [0, 1/M], (1/M, 2/M], ... partition."""
    if n_bins < 1:
        raise DataValidationError(f"Need at least one calibration bin, got {n_bins}")
    inner_edges = np.arange(1, n_bins) / n_bins
    return np.searchsorted(inner_edges, np.asarray(preds, dtype=float), side="left")


# ============================================================
# POINT METRICS
# ============================================================

def brier(preds, outcomes) -> float:
    preds, outcomes = _validate(preds, outcomes)
    return float(np.mean((preds - outcomes) ** 2))


def accuracy(preds, outcomes, threshold: float = THRESHOLD) -> float:
    preds, outcomes = _validate(preds, outcomes)
    return float(np.mean((preds >= threshold) == (outcomes == 1)))


def log_loss(preds, outcomes) -> float:
    preds, outcomes = _validate(preds, outcomes)
    p = np.clip(preds, PROB_CLIP, 1.0 - PROB_CLIP)
    return float(-np.mean(outcomes * np.log(p) + (1.0 - outcomes) * np.log1p(-p)))


def auc(preds, outcomes) -> float:
    """Mann-Whitney AUC with average ranks for ties."""
    preds, outcomes = _validate(preds, outcomes)
    positives = outcomes == 1
    n_pos = int(positives.sum())
    n_neg = preds.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC is undefined when only one outcome class is present")
    ranks = rankdata(preds, method="average")
    u_statistic = ranks[positives].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u_statistic / (n_pos * n_neg))


# ============================================================
# CALIBRATION
# ============================================================

def reliability_table(preds, outcomes, n_bins: int = DEFAULT_ECE_BINS) -> List[ReliabilityBin]:
    """Non-empty bins only, in ascending order."""
    preds, outcomes = _validate(preds, outcomes)
    idx = calibration_bin(preds, n_bins)
    counts = np.bincount(idx, minlength=n_bins)
    pred_sums = np.bincount(idx, weights=preds, minlength=n_bins)
    hit_sums = np.bincount(idx, weights=outcomes, minlength=n_bins)
    rows = []
    for b in np.flatnonzero(counts):
        rows.append(ReliabilityBin(float(pred_sums[b] / counts[b]), float(hit_sums[b] / counts[b]), int(counts[b])))
    return rows


def ece(preds, outcomes, n_bins: int = DEFAULT_ECE_BINS) -> float:
    rows = reliability_table(preds, outcomes, n_bins)
    n = sum(r.count for r in rows)
    return float(sum(r.count / n * abs(r.bin_acc - r.bin_mean_pred) for r in rows))


def eval_kl(mixtures: Sequence[BetaMixture], histograms: Sequence[Histogram]) -> float:
    """Mean KL(h || discretize(mixture)) over aligned pairs."""
    if len(mixtures) != len(histograms):
        raise DataValidationError(f"{len(mixtures)} mixtures but {len(histograms)} histograms")
    if not mixtures:
        raise DataValidationError("eval_kl needs at least one pair")
    n_bins = histograms[0].n_bins
    losses = [human_loss(m, h, n_bins) for m, h in zip(mixtures, histograms)]
    return float(np.mean(losses))


def uncertainty_curve(uncertainties, preds, outcomes, window: int = DEFAULT_WINDOW) -> UncertaintyCurve:
    """Rolling Brier over items sorted by ascending uncertainty."""
    preds, outcomes = _validate(preds, outcomes)
    uncertainties = np.asarray(uncertainties, dtype=float).reshape(-1)
    if uncertainties.shape != preds.shape:
        raise DataValidationError(f"{uncertainties.size} uncertainties for {preds.size} predictions")
    if window < 1 or window > preds.size:
        raise DataValidationError(f"Smoothing window {window} must lie in [1, {preds.size}]")
    order = np.argsort(uncertainties, kind="stable")
    errors = ((preds - outcomes) ** 2)[order]
    smoothed = sliding_window_view(errors, window).mean(axis=1)
    return UncertaintyCurve(window, tuple((i, float(b)) for i, b in enumerate(smoothed)))


# ============================================================
# REPORTS
# ============================================================

def evaluate(preds, outcomes, method: str = "bbc", n_bins: int = DEFAULT_ECE_BINS,
             mixtures: Optional[Sequence[BetaMixture]] = None,
             histograms: Optional[Sequence[Histogram]] = None) -> EvalReport:
    preds, outcomes = _validate(preds, outcomes)
    kl_mean = None
    if mixtures is not None and histograms:
        kl_mean = eval_kl(mixtures, histograms)
    report = EvalReport(
        method=method,
        n=int(preds.size),
        brier=brier(preds, outcomes),
        accuracy=accuracy(preds, outcomes),
        auc=auc(preds, outcomes),
        ece=ece(preds, outcomes, n_bins),
        log_loss=log_loss(preds, outcomes),
        kl_mean=kl_mean,
        reliability_bins=reliability_table(preds, outcomes, n_bins),
    )
    logger.info("%s: Brier=%.4f Acc=%.4f AUC=%.4f ECE=%.4f", method, report.brier,
                report.accuracy, report.auc, report.ece)
    return report


def write_reliability_csv(rows: Sequence[ReliabilityBin], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["bin_mean_pred", "bin_acc", "count"])
        for r in rows:
            writer.writerow([repr(r.bin_mean_pred), repr(r.bin_acc), r.count])
    return path


def write_uncertainty_csv(curve: UncertaintyCurve, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["rank", "smoothed_brier"])
        for rank, value in curve.points:
            writer.writerow([rank, repr(value)])
    return path
