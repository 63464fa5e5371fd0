"""Synthetic three-regime Beta-Bernoulli data for the toy experiment.

Each record gets a 10-dimensional Gaussian feature vector. A fixed seeded
projection to 2-d followed by tanh decides the ground-truth regime: the
orientation of that point (its angle doubled, so opposite points agree) is split
into three sectors, so each regime covers two opposite 60-degree wedges. The
latent probability, the binary outcome and the simulated crowd forecasts are
then drawn from that regime's Beta.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from beta_core import DEFAULT_BINS, BetaParams, Histogram, SeedLike
from dataset_io import ForecastRecord, Source

logger = logging.getLogger(__name__)

N_FEATURES = 10
DEFAULT_QUESTIONS = 30000
DEFAULT_FORECASTERS = 1000
TEST_FRACTION = 0.2
CHUNK_SIZE = 1024

REGIME_NAMES = ("ConfidentYes", "Uncertain", "ConfidentNo")
REGIME_TRUTHS = {
    "ConfidentYes": BetaParams(50.0, 10.0),
    "Uncertain": BetaParams(5.0, 5.0),
    "ConfidentNo": BetaParams(10.0, 50.0),
}
CORRUPTION_KINDS = ("noise", "directional", "additive")
_KIND_ALIASES = {"rho": "noise", "noise": "noise", "gamma": "directional",
                 "directional": "directional", "delta": "additive", "additive": "additive"}


@dataclass(frozen=True)
class Regime:
    name: str
    truth: BetaParams

    def __post_init__(self):
        if self.name not in REGIME_TRUTHS:
            raise ValueError(f"Unknown regime {self.name!r}")
        if self.truth != REGIME_TRUTHS[self.name]:
            raise ValueError(f"Regime {self.name} must use {REGIME_TRUTHS[self.name]}")

    @classmethod
    def named(cls, name: str) -> "Regime":
        return cls(name, REGIME_TRUTHS[name])


@dataclass(frozen=True)
class CorruptionSpec:
    """Noise fraction rho, directional scale gamma or additive shift delta."""

    kind: str
    value: float

    def __post_init__(self):
        if self.kind not in CORRUPTION_KINDS:
            raise ValueError(f"Corruption kind must be one of {CORRUPTION_KINDS}, got {self.kind!r}")
        if not math.isfinite(self.value):
            raise ValueError("Corruption parameter must be finite")
        if self.kind == "noise" and not 0.0 <= self.value <= 1.0:
            raise ValueError(f"Noise fraction must lie in [0, 1], got {self.value}")

    @classmethod
    def parse(cls, text: str) -> "CorruptionSpec":
        """Parse 'gamma=0.5', 'delta=-0.1' or 'rho=0.3' style strings."""
        name, sep, raw = text.partition("=")
        if not sep or name.strip().lower() not in _KIND_ALIASES:
            raise ValueError(f"Cannot parse corruption {text!r}; use gamma=, delta= or rho=")
        return cls(_KIND_ALIASES[name.strip().lower()], float(raw))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value}


@dataclass(frozen=True, eq=False)
class SyntheticRecord:
    features: np.ndarray
    regime: Regime
    latent_p: float
    outcome: int
    histogram: Histogram
    split: str
    human_forecasts: Optional[np.ndarray] = None

    def to_forecast_record(self, index: int) -> ForecastRecord:
        return ForecastRecord(
            id=f"synthetic-{index:06d}",
            features=tuple(float(v) for v in self.features),
            outcome=self.outcome,
            histogram=self.histogram,
            source=Source.SYNTHETIC,
            split=self.split,
            regime=self.regime.name,
        )


# ============================================================
# HUMAN-FORECAST TRANSFORMS
# ============================================================

def corrupt(forecasts: Sequence[float], spec: CorruptionSpec, seed: SeedLike = None) -> np.ndarray:
    q = np.array(forecasts, dtype=float)
    if np.any((q < 0) | (q > 1)):
        raise ValueError("Forecasts must lie in [0, 1]")
    if spec.kind == "directional":
        if spec.value == 1.0:
            return q
        q = 0.5 + spec.value * (q - 0.5)
    elif spec.kind == "additive":
        if spec.value == 0.0:
            return q
        q = q + spec.value
    else:
        rng = np.random.default_rng(seed)
        n_noisy = int(round(spec.value * q.size))
        if n_noisy == 0:
            return q
        picks = rng.choice(q.size, size=n_noisy, replace=False)
        q[picks] = rng.uniform(0.0, 1.0, size=n_noisy)
    return np.clip(q, 0.0, 1.0)


def retain(forecasts: Sequence[float], fraction: float, seed: SeedLike = None) -> np.ndarray:
    """Uniform subsample without replacement, keeping at least one forecast."""
    q = np.array(forecasts, dtype=float)
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"Retention fraction must lie in (0, 1], got {fraction}")
    if fraction == 1.0 or q.size == 0:
        return q
    keep = max(1, int(round(fraction * q.size)))
    rng = np.random.default_rng(seed)
    return q[np.sort(rng.choice(q.size, size=keep, replace=False))]


# ============================================================
# GENERATION
# ============================================================

def regime_projection(seed: SeedLike) -> np.ndarray:
    """Orthonormal 10 -> 2 projection, so projected features stay isotropic."""
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((N_FEATURES, 2)))
    return q


def assign_regimes(features: np.ndarray, projection: np.ndarray) -> np.ndarray:
    """Regime index per row from the doubled angle of tanh(x @ P).

    Wedges [0, 60), [60, 120) and [120, 180) degrees map to regimes 0, 1 and 2,
    and so do the opposite wedges.
    """
    squashed = np.tanh(features @ projection)
    angle = np.mod(2.0 * np.arctan2(squashed[:, 1], squashed[:, 0]), 2.0 * np.pi)
    return np.minimum((angle // (2.0 * np.pi / 3.0)).astype(int), 2)


def generate(n: int = DEFAULT_QUESTIONS, forecasters: int = DEFAULT_FORECASTERS, seed: int = 0,
             n_bins: int = DEFAULT_BINS, test_fraction: float = TEST_FRACTION,
             corruption: Optional[CorruptionSpec] = None, retain_fraction: float = 1.0,
             keep_forecasts: bool = False) -> List[SyntheticRecord]:
    """Generate ``n`` toy questions.

    Corruption and retention touch only training-split crowd forecasts; test
    histograms stay clean. Raw forecasts are kept on the records only when
    ``keep_forecasts`` is set (30,000 x 1,000 draws is a lot of memory).
    """
    if n < 3:
        raise ValueError(f"Need at least 3 questions, got {n}")
    if forecasters < 1:
        raise ValueError(f"Need at least one forecaster, got {forecasters}")
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(7)]
    map_rng, feature_rng, latent_rng, outcome_rng, human_rng, split_rng, transform_rng = streams

    projection = regime_projection(map_rng)
    features = feature_rng.standard_normal((n, N_FEATURES))
    regime_idx = assign_regimes(features, projection)
    regimes = [Regime.named(name) for name in REGIME_NAMES]
    alphas = np.array([regimes[i].truth.alpha for i in regime_idx])
    betas = np.array([regimes[i].truth.beta for i in regime_idx])

    latent = latent_rng.beta(alphas, betas)
    outcomes = (outcome_rng.random(n) < latent).astype(int)

    n_test = int(round(test_fraction * n))
    is_test = np.zeros(n, dtype=bool)
    is_test[split_rng.permutation(n)[:n_test]] = True

    records = []
    for start in range(0, n, CHUNK_SIZE):
        stop = min(start + CHUNK_SIZE, n)
        crowd = human_rng.beta(alphas[start:stop, None], betas[start:stop, None],
                               size=(stop - start, forecasters))
        for offset, row in enumerate(crowd):
            i = start + offset
            if not is_test[i]:
                if retain_fraction < 1.0:
                    row = retain(row, retain_fraction, transform_rng)
                if corruption is not None:
                    row = corrupt(row, corruption, transform_rng)
            records.append(SyntheticRecord(
                features=features[i],
                regime=regimes[regime_idx[i]],
                latent_p=float(latent[i]),
                outcome=int(outcomes[i]),
                histogram=Histogram.from_samples(row, n_bins),
                split="test" if is_test[i] else "train",
                human_forecasts=row.copy() if keep_forecasts else None,
            ))

    counts = np.bincount(regime_idx, minlength=3)
    logger.info("Generated %d questions: %s", n,
                ", ".join(f"{name}={c}" for name, c in zip(REGIME_NAMES, counts)))
    return records


def regime_counts(records: Sequence[SyntheticRecord]) -> Tuple[int, int, int]:
    counts = {name: 0 for name in REGIME_NAMES}
    for r in records:
        counts[r.regime.name] += 1
    return tuple(counts[name] for name in REGIME_NAMES)
