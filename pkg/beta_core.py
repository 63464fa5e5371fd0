"""Beta and Beta-mixture mathematics.

Densities, moments, midpoint discretization onto a B-bin grid over [0, 1],
sampling, and the Beta-Bernoulli marginal likelihood. Everything here is a
pure function over immutable values; randomness always comes in as an explicit
seed or ``numpy.random.Generator``.
"""

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

import numpy as np
from scipy.special import betaln

DEFAULT_BINS = 100
WEIGHT_TOLERANCE = 1e-9

SeedLike = Union[int, np.random.Generator, None]


def _readonly(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


# ============================================================
# VALUE TYPES
# ============================================================

@dataclass(frozen=True)
class BetaParams:
    """Shape parameters of a single Beta distribution."""

    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("alpha", "beta"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise ValueError(f"Beta {name} must be finite and > 0, got {value}")

    @property
    def concentration(self) -> float:
        return self.alpha + self.beta


@dataclass(frozen=True, eq=False)
class BetaMixture:
    """K weighted Beta components, stored as parallel read-only arrays."""

    alphas: np.ndarray
    betas: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        alphas = _readonly(self.alphas).reshape(-1)
        betas = _readonly(self.betas).reshape(-1)
        weights = _readonly(self.weights).reshape(-1)
        if alphas.size == 0:
            raise ValueError("A mixture needs at least one component")
        if not (alphas.shape == betas.shape == weights.shape):
            raise ValueError(
                f"Component arrays disagree in length: "
                f"{alphas.size} alphas, {betas.size} betas, {weights.size} weights"
            )
        if not (np.all(np.isfinite(alphas)) and np.all(np.isfinite(betas))):
            raise ValueError("Mixture shape parameters must be finite")
        if np.any(alphas <= 0) or np.any(betas <= 0):
            raise ValueError("Mixture shape parameters must be > 0")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValueError("Mixture weights must be finite and nonnegative")
        if abs(weights.sum() - 1.0) > WEIGHT_TOLERANCE:
            raise ValueError(f"Mixture weights must sum to 1, got {weights.sum():.12f}")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def single(cls, params: BetaParams) -> "BetaMixture":
        return cls([params.alpha], [params.beta], [1.0])

    @classmethod
    def from_components(cls, components: Sequence[BetaParams], weights: Sequence[float]) -> "BetaMixture":
        return cls([c.alpha for c in components], [c.beta for c in components], weights)

    @property
    def n_components(self) -> int:
        return int(self.alphas.size)

    @property
    def components(self) -> List[BetaParams]:
        return [BetaParams(float(a), float(b)) for a, b in zip(self.alphas, self.betas)]

    def to_dict(self) -> dict:
        return {
            "alphas": self.alphas.tolist(),
            "betas": self.betas.tolist(),
            "weights": self.weights.tolist(),
        }


@dataclass(frozen=True, eq=False)
class Histogram:
    """Normalized mass over B uniform bins of [0, 1].

    Bin b covers [b/B, (b+1)/B); the last bin is closed at 1.
    """

    masses: np.ndarray

    def __post_init__(self):
        masses = _readonly(self.masses).reshape(-1)
        if masses.size < 2:
            raise ValueError(f"A histogram needs at least 2 bins, got {masses.size}")
        if not np.all(np.isfinite(masses)) or np.any(masses < 0):
            raise ValueError("Histogram masses must be finite and nonnegative")
        if abs(masses.sum() - 1.0) > WEIGHT_TOLERANCE:
            raise ValueError(f"Histogram masses must sum to 1, got {masses.sum():.12f}")
        object.__setattr__(self, "masses", masses)

    @property
    def n_bins(self) -> int:
        return int(self.masses.size)

    @classmethod
    def from_counts(cls, counts: Sequence[float]) -> "Histogram":
        counts = np.asarray(counts, dtype=float)
        total = counts.sum()
        if total <= 0:
            raise ValueError("Cannot normalize a histogram with zero total mass")
        return cls(counts / total)

    @classmethod
    def from_samples(cls, samples: Sequence[float], n_bins: int = DEFAULT_BINS) -> "Histogram":
        idx = bin_index(samples, n_bins)
        return cls.from_counts(np.bincount(idx, minlength=n_bins))

    def reversed(self) -> "Histogram":
        return Histogram(self.masses[::-1])


# ============================================================
# BINNING
# ============================================================

def bin_index(values: Sequence[float], n_bins: int) -> np.ndarray:
    """Bin index of each probability under the left-closed convention."""
    values = np.asarray(values, dtype=float)
    if np.any((values < 0) | (values > 1)) or not np.all(np.isfinite(values)):
        raise ValueError("Binned values must lie in [0, 1]")
    edges = np.arange(n_bins) / n_bins
    return np.minimum(np.searchsorted(edges, values, side="right") - 1, n_bins - 1)


def midpoint_grid(n_bins: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bin midpoints with ln(x) and ln(1 - x), exactly mirror-symmetric."""
    if n_bins < 2:
        raise ValueError(f"Need at least 2 bins, got {n_bins}")
    idx = np.arange(n_bins, dtype=float)
    lower = (idx + 0.5) / n_bins
    upper = (n_bins - 0.5 - idx) / n_bins
    return lower, np.log(lower), np.log(upper)


def component_log_densities(alphas, betas, n_bins: int) -> np.ndarray:
    """Log Beta densities of every component at every bin midpoint.

    Accepts arrays of any leading shape; returns shape ``alphas.shape + (B,)``.
    """
    alphas = np.asarray(alphas, dtype=float)[..., None]
    betas = np.asarray(betas, dtype=float)[..., None]
    _, log_x, log_1mx = midpoint_grid(n_bins)
    return (alphas - 1.0) * log_x + (betas - 1.0) * log_1mx - betaln(alphas, betas)


# ============================================================
# SINGLE BETA
# ============================================================

def beta_mean(p: BetaParams) -> float:
    return p.alpha / (p.alpha + p.beta)


def beta_variance(p: BetaParams) -> float:
    total = p.alpha + p.beta
    return p.alpha * p.beta / (total * total * (total + 1.0))


def log_pdf(p: BetaParams, x: float) -> float:
    if not 0.0 < x < 1.0:
        raise ValueError(f"Beta density is evaluated on the open interval (0, 1), got {x}")
    return (p.alpha - 1.0) * math.log(x) + (p.beta - 1.0) * math.log1p(-x) - float(betaln(p.alpha, p.beta))


def marginal_likelihood(p: BetaParams, y: int) -> float:
    """P(y | alpha, beta) with the latent probability integrated out."""
    if y not in (0, 1):
        raise ValueError(f"Outcome must be 0 or 1, got {y}")
    return (p.alpha if y == 1 else p.beta) / (p.alpha + p.beta)


def sample(p: BetaParams, n: int, seed: SeedLike = None) -> np.ndarray:
    """n i.i.d. Beta draws; numpy builds them from two gamma variates."""
    if n < 1:
        raise ValueError(f"Sample size must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    return rng.beta(p.alpha, p.beta, size=n)


# ============================================================
# MIXTURES
# ============================================================

def component_means(m: BetaMixture) -> np.ndarray:
    return m.alphas / (m.alphas + m.betas)


def mixture_mean(m: BetaMixture) -> float:
    return float(np.dot(m.weights, component_means(m)))


def mixture_variance(m: BetaMixture) -> float:
    # law of total variance
    means = component_means(m)
    totals = m.alphas + m.betas
    variances = m.alphas * m.betas / (totals * totals * (totals + 1.0))
    second_moment = float(np.dot(m.weights, variances + means * means))
    mean = float(np.dot(m.weights, means))
    return max(second_moment - mean * mean, 0.0)


def mixture_pdf(m: BetaMixture, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any((x <= 0) | (x >= 1)):
        raise ValueError("Beta density is evaluated on the open interval (0, 1)")
    xs = x[..., None]
    log_dens = (m.alphas - 1.0) * np.log(xs) + (m.betas - 1.0) * np.log1p(-xs) - betaln(m.alphas, m.betas)
    return np.exp(log_dens) @ m.weights


def discretize(m: BetaMixture, n_bins: int = DEFAULT_BINS) -> Histogram:
    """Midpoint density times bin width, renormalized to sum to 1."""
    dens = np.exp(component_log_densities(m.alphas, m.betas, n_bins))
    masses = (m.weights @ dens) / n_bins
    return Histogram(masses / masses.sum())


def sample_mixture(m: BetaMixture, n: int, seed: SeedLike = None) -> np.ndarray:
    if n < 1:
        raise ValueError(f"Sample size must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    picks = rng.choice(m.n_components, size=n, p=m.weights)
    return rng.beta(m.alphas[picks], m.betas[picks])


def moment_match(m: BetaMixture) -> BetaParams:
    """Single Beta sharing the mixture's mean and variance."""
    mean = mixture_mean(m)
    variance = mixture_variance(m)
    if variance <= 0:
        raise ValueError("Cannot moment-match a zero-variance mixture")
    concentration = mean * (1.0 - mean) / variance - 1.0
    if concentration <= 0:
        raise ValueError("Mixture variance too large for a single Beta")
    return BetaParams(mean * concentration, (1.0 - mean) * concentration)
