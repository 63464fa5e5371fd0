"""Training losses and their analytic gradients.

Two signals per example:

* binary loss: the Beta-Bernoulli marginal likelihood of the outcome, which is
  exactly binary cross-entropy of the mixture mean;
* human loss: KL(h || discretize(mixture)) against the crowd histogram.

The batched functions work on ``(N, K)`` parameter arrays and are what the
trainer calls. The per-mixture functions wrap them with N = 1.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import digamma, rel_entr

from beta_core import BetaMixture, Histogram, component_log_densities, midpoint_grid
from errors import DataValidationError

logger = logging.getLogger(__name__)

MASS_FLOOR = 1e-12
PROB_CLIP = 1e-12

LOSS_MODES = {
    "binary": (1.0, 0.0),
    "human": (0.0, 1.0),
    "both": (1.0, 1.0),
}


@dataclass(frozen=True)
class LossWeights:
    lambda_binary: float = 1.0
    lambda_human: float = 1.0

    def __post_init__(self):
        for name in ("lambda_binary", "lambda_human"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")
        if self.lambda_binary == 0 and self.lambda_human == 0:
            raise ValueError("At least one loss weight must be nonzero")

    @classmethod
    def from_mode(cls, mode: str) -> "LossWeights":
        try:
            return cls(*LOSS_MODES[mode])
        except KeyError:
            raise ValueError(f"Unknown loss mode {mode!r}; expected one of {sorted(LOSS_MODES)}") from None

    @property
    def needs_histograms(self) -> bool:
        return self.lambda_human > 0


@dataclass(frozen=True)
class LossBreakdown:
    binary_loss: float
    human_loss: float
    total: float

    def to_dict(self) -> dict:
        return {"binary_loss": self.binary_loss, "human_loss": self.human_loss, "total": self.total}


@dataclass(frozen=True, eq=False)
class MixtureGradient:
    """Partials of a loss in (alpha_k, beta_k, w_k)."""

    d_alpha: np.ndarray
    d_beta: np.ndarray
    d_weights: np.ndarray

    def projected_weights(self) -> np.ndarray:
        """Weight gradient restricted to the simplex tangent space."""
        return self.d_weights - self.d_weights.mean()


@dataclass(eq=False)
class BatchObjective:
    """Per-example losses and, optionally, their parameter gradients."""

    binary: np.ndarray
    human: np.ndarray
    total: np.ndarray
    d_alpha: Optional[np.ndarray] = None
    d_beta: Optional[np.ndarray] = None
    d_weights: Optional[np.ndarray] = None

    def mean_breakdown(self) -> LossBreakdown:
        return LossBreakdown(float(self.binary.mean()), float(self.human.mean()), float(self.total.mean()))


# ============================================================
# BATCHED
# ============================================================

def _binary_terms(alphas, betas, weights, outcomes, with_grad):
    totals = alphas + betas
    means = alphas / totals
    p_hat = np.sum(weights * means, axis=-1)
    p = np.clip(p_hat, PROB_CLIP, 1.0 - PROB_CLIP)
    loss = -(outcomes * np.log(p) + (1.0 - outcomes) * np.log1p(-p))
    if not with_grad:
        return loss, None
    d_p = np.where(p == p_hat, (p - outcomes) / (p * (1.0 - p)), 0.0)[:, None]
    sq = totals * totals
    return loss, (
        d_p * weights * betas / sq,
        -d_p * weights * alphas / sq,
        d_p * means,
    )


def _human_terms(alphas, betas, weights, histograms, with_grad):
    n_bins = histograms.shape[-1]
    dens = np.exp(component_log_densities(alphas, betas, n_bins))        # (N, K, B)
    mix = np.einsum("nk,nkb->nb", weights, dens)                          # (N, B)
    norm = mix.sum(axis=-1, keepdims=True)
    masses = mix / norm
    floored = masses < MASS_FLOOR
    loss = rel_entr(histograms, np.where(floored, MASS_FLOOR, masses)).sum(axis=-1)
    if not with_grad:
        return loss, None

    # d KL = sum_b coef_b * d mix_b, with the renormalization folded into coef
    active = (histograms > 0) & ~floored
    active_mass = np.where(active, histograms, 0.0).sum(axis=-1, keepdims=True)
    ratio = np.divide(histograms, mix, out=np.zeros_like(mix), where=active)
    coef = active_mass / norm - ratio                                     # (N, B)

    _, log_x, log_1mx = midpoint_grid(n_bins)
    weighted = coef[:, None, :] * dens                                    # (N, K, B)
    base = weighted.sum(axis=-1)
    psi_total = digamma(alphas + betas)
    d_alpha = weights * (weighted @ log_x - (digamma(alphas) - psi_total) * base)
    d_beta = weights * (weighted @ log_1mx - (digamma(betas) - psi_total) * base)
    return loss, (d_alpha, d_beta, base)


def batch_objective(
    alphas: np.ndarray,
    betas: np.ndarray,
    weights: np.ndarray,
    outcomes: np.ndarray,
    histograms: Optional[np.ndarray],
    loss_weights: LossWeights,
    with_grad: bool = True,
    n_bins: Optional[int] = None,
) -> BatchObjective:
    """Per-example losses for N mixtures of K components.

    ``histograms`` is ``(N, B)`` or None. When present the human loss is always
    reported, even if its weight is zero; its gradient is only accumulated when
    the weight is positive.
    """
    alphas = np.atleast_2d(np.asarray(alphas, dtype=float))
    betas = np.atleast_2d(np.asarray(betas, dtype=float))
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    outcomes = np.asarray(outcomes, dtype=float).reshape(-1)
    if outcomes.shape[0] != alphas.shape[0]:
        raise DataValidationError(f"{outcomes.shape[0]} outcomes for {alphas.shape[0]} mixtures")

    if histograms is None:
        if loss_weights.needs_histograms:
            raise DataValidationError("lambda_human > 0 requires a histogram for every example")
    else:
        histograms = np.atleast_2d(np.asarray(histograms, dtype=float))
        if n_bins is not None and histograms.shape[-1] != n_bins:
            raise DataValidationError(f"Histogram has {histograms.shape[-1]} bins, configured for {n_bins}")
        if histograms.shape[0] != alphas.shape[0]:
            raise DataValidationError(f"{histograms.shape[0]} histograms for {alphas.shape[0]} mixtures")

    binary, binary_grad = _binary_terms(alphas, betas, weights, outcomes, with_grad)
    if histograms is not None:
        human_grad_needed = with_grad and loss_weights.lambda_human > 0
        human, human_grad = _human_terms(alphas, betas, weights, histograms, human_grad_needed)
    else:
        human, human_grad = np.zeros_like(binary), None

    total = loss_weights.lambda_binary * binary + loss_weights.lambda_human * human
    result = BatchObjective(binary=binary, human=human, total=total)
    if with_grad:
        grads = [loss_weights.lambda_binary * g for g in binary_grad]
        if human_grad is not None:
            grads = [g + loss_weights.lambda_human * h for g, h in zip(grads, human_grad)]
        result.d_alpha, result.d_beta, result.d_weights = grads
    return result


# ============================================================
# PER-MIXTURE
# ============================================================

def _as_batch(m: BetaMixture):
    return m.alphas[None, :], m.betas[None, :], m.weights[None, :]


def _histogram_row(h: Optional[Histogram]):
    return None if h is None else h.masses[None, :]


def binary_loss(m: BetaMixture, y: int) -> float:
    """BCE of the mixture mean; the Beta-Bernoulli negative log marginal."""
    loss, _ = _binary_terms(*_as_batch(m), np.array([float(y)]), with_grad=False)
    return float(loss[0])


def human_loss(m: BetaMixture, h: Histogram, n_bins: Optional[int] = None) -> float:
    """KL(h || discretize(m)) with mixture bin mass floored at MASS_FLOOR."""
    if n_bins is not None and h.n_bins != n_bins:
        raise DataValidationError(f"Histogram has {h.n_bins} bins, configured for {n_bins}")
    loss, _ = _human_terms(*_as_batch(m), h.masses[None, :], with_grad=False)
    return float(loss[0])


def total_loss(m: BetaMixture, y: int, h: Optional[Histogram], w: LossWeights) -> LossBreakdown:
    result = batch_objective(*_as_batch(m), [y], _histogram_row(h), w, with_grad=False)
    return result.mean_breakdown()


def loss_gradients(m: BetaMixture, y: int, h: Optional[Histogram], w: LossWeights) -> MixtureGradient:
    result = batch_objective(*_as_batch(m), [y], _histogram_row(h), w, with_grad=True)
    return MixtureGradient(result.d_alpha[0], result.d_beta[0], result.d_weights[0])
