"""Feed-forward calibrator head: features (+ initial forecast) -> Beta mixture.

Two affine layers with a tanh hidden layer. The 3K raw outputs per example are
mapped to alpha_k = 1 + softplus(a_k), beta_k = 1 + softplus(b_k) and
w = softmax(l), so every output satisfies alpha, beta > 1 and lies on the
simplex. Gradients are written out by hand; the optimizer is plain gradient
descent or Adam.
"""

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, softmax

from beta_core import BetaMixture, SeedLike, mixture_mean, mixture_variance
from errors import DataValidationError, NumericalError
from objectives import BatchObjective, LossBreakdown, LossWeights, batch_objective

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
DEFAULT_HIDDEN = 64
DEFAULT_COMPONENTS = 5
TOY_COMPONENTS = 5
INIT_SCALE = 0.05
PARAM_NAMES = ("W1", "b1", "W2", "b2")
OPTIMIZERS = ("sgd", "adam")


@dataclass(frozen=True)
class CalibratorInput:
    features: Tuple[float, ...]
    init_forecast: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(float(v) for v in self.features))
        if self.init_forecast is not None and not 0.0 <= self.init_forecast <= 1.0:
            raise ValueError(f"init_forecast must lie in [0, 1], got {self.init_forecast}")

    def vector(self) -> np.ndarray:
        values = list(self.features)
        if self.init_forecast is not None:
            values.append(float(self.init_forecast))
        return np.asarray(values, dtype=float)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 200
    batch_size: int = 256
    seed: int = 0
    loss_weights: LossWeights = field(default_factory=LossWeights)
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")

    @classmethod
    def toy(cls, **overrides) -> "TrainConfig":
        """Settings used for the synthetic three-regime experiment."""
        return replace(cls(learning_rate=1e-3, epochs=200, batch_size=256), **overrides)

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "lambda_binary": self.loss_weights.lambda_binary,
            "lambda_human": self.loss_weights.lambda_human,
            "optimizer": self.optimizer,
        }


@dataclass(eq=False)
class ForwardCache:
    inputs: np.ndarray
    hidden: np.ndarray
    raw: np.ndarray
    alphas: np.ndarray
    betas: np.ndarray
    weights: np.ndarray


class CalibratorModel:
    """Two-layer MLP head producing K (alpha, beta, w) triples per input."""

    def __init__(self, input_dim: int, hidden_dim: int = DEFAULT_HIDDEN,
                 n_components: int = DEFAULT_COMPONENTS,
                 params: Optional[Dict[str, np.ndarray]] = None,
                 include_forecast: bool = False):
        if input_dim < 1 or hidden_dim < 1 or n_components < 1:
            raise ValueError("input_dim, hidden_dim and n_components must all be >= 1")
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.n_components = n_components
        self.include_forecast = include_forecast
        shapes = self.param_shapes()
        if params is None:
            params = {name: np.zeros(shape) for name, shape in shapes.items()}
        for name, shape in shapes.items():
            if name not in params or np.shape(params[name]) != shape:
                raise DataValidationError(f"Parameter {name} must have shape {shape}")
        self.params = {name: np.array(params[name], dtype=float) for name in PARAM_NAMES}

    def param_shapes(self) -> Dict[str, Tuple[int, ...]]:
        out = 3 * self.n_components
        return {
            "W1": (self.hidden_dim, self.input_dim),
            "b1": (self.hidden_dim,),
            "W2": (out, self.hidden_dim),
            "b2": (out,),
        }

    @classmethod
    def initialize(cls, input_dim: int, hidden_dim: int = DEFAULT_HIDDEN,
                   n_components: int = DEFAULT_COMPONENTS, seed: SeedLike = 0,
                   include_forecast: bool = False) -> "CalibratorModel":
        """Small uniform weights, zero output bias."""
        model = cls(input_dim, hidden_dim, n_components, include_forecast=include_forecast)
        rng = np.random.default_rng(seed)
        for name, shape in model.param_shapes().items():
            if name == "b2":
                continue
            model.params[name] = rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)
        return model

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy(self) -> "CalibratorModel":
        return CalibratorModel(self.input_dim, self.hidden_dim, self.n_components,
                               {k: v.copy() for k, v in self.params.items()},
                               include_forecast=self.include_forecast)

    # --------------------------------------------------------
    # forward / backward
    # --------------------------------------------------------

    def forward_arrays(self, inputs: np.ndarray) -> ForwardCache:
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        if inputs.shape[1] != self.input_dim:
            raise DataValidationError(f"Model expects {self.input_dim} input features, got {inputs.shape[1]}")
        p = self.params
        hidden = np.tanh(inputs @ p["W1"].T + p["b1"])
        raw = hidden @ p["W2"].T + p["b2"]
        k = self.n_components
        alphas = 1.0 + np.logaddexp(0.0, raw[:, :k])
        betas = 1.0 + np.logaddexp(0.0, raw[:, k:2 * k])
        weights = softmax(raw[:, 2 * k:], axis=1)
        return ForwardCache(inputs, hidden, raw, alphas, betas, weights)

    def backward(self, cache: ForwardCache, d_alpha: np.ndarray, d_beta: np.ndarray,
                 d_weights: np.ndarray) -> Dict[str, np.ndarray]:
        """Parameter gradients given loss partials in the mixture parameters."""
        k = self.n_components
        d_raw = np.empty_like(cache.raw)
        d_raw[:, :k] = d_alpha * expit(cache.raw[:, :k])
        d_raw[:, k:2 * k] = d_beta * expit(cache.raw[:, k:2 * k])
        w = cache.weights
        d_raw[:, 2 * k:] = w * (d_weights - np.sum(w * d_weights, axis=1, keepdims=True))
        d_hidden = d_raw @ self.params["W2"]
        d_pre = d_hidden * (1.0 - cache.hidden ** 2)
        return {
            "W1": d_pre.T @ cache.inputs,
            "b1": d_pre.sum(axis=0),
            "W2": d_raw.T @ cache.hidden,
            "b2": d_raw.sum(axis=0),
        }

    def objective(self, inputs: np.ndarray, outcomes: np.ndarray, histograms: Optional[np.ndarray],
                  loss_weights: LossWeights, with_grad: bool = True
                  ) -> Tuple[BatchObjective, Optional[Dict[str, np.ndarray]]]:
        """Batch-mean objective and, optionally, its parameter gradients."""
        cache = self.forward_arrays(inputs)
        result = batch_objective(cache.alphas, cache.betas, cache.weights, outcomes, histograms,
                                 loss_weights, with_grad=with_grad)
        if not with_grad:
            return result, None
        n = cache.inputs.shape[0]
        grads = self.backward(cache, result.d_alpha / n, result.d_beta / n, result.d_weights / n)
        return result, grads

    # --------------------------------------------------------
    # inference
    # --------------------------------------------------------

    def input_matrix(self, inputs: Sequence[CalibratorInput]) -> np.ndarray:
        return np.vstack([x.vector() for x in inputs]) if inputs else np.zeros((0, self.input_dim))

    def forward(self, x: CalibratorInput) -> BetaMixture:
        cache = self.forward_arrays(x.vector()[None, :])
        return BetaMixture(cache.alphas[0], cache.betas[0], cache.weights[0])

    def predict(self, x: CalibratorInput) -> Tuple[float, float, BetaMixture]:
        """(point forecast, epistemic uncertainty, mixture)."""
        mixture = self.forward(x)
        return mixture_mean(mixture), mixture_variance(mixture), mixture

    def predict_batch(self, inputs: np.ndarray) -> Tuple[np.ndarray, np.ndarray, List[BetaMixture]]:
        cache = self.forward_arrays(inputs)
        mixtures = [BetaMixture(a, b, w) for a, b, w in zip(cache.alphas, cache.betas, cache.weights)]
        means = np.array([mixture_mean(m) for m in mixtures])
        variances = np.array([mixture_variance(m) for m in mixtures])
        return means, variances, mixtures

    # --------------------------------------------------------
    # checkpoints
    # --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "input_dim": self.input_dim,
            "hidden_dim": self.hidden_dim,
            "n_components": self.n_components,
            "include_forecast": self.include_forecast,
            "activation": "tanh",
            "params": {name: self.params[name].tolist() for name in PARAM_NAMES},
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "CalibratorModel":
        version = payload.get("format_version")
        if version != CHECKPOINT_FORMAT_VERSION:
            raise DataValidationError(f"Unsupported checkpoint format_version {version!r}")
        try:
            params = {name: np.asarray(payload["params"][name], dtype=float) for name in PARAM_NAMES}
            return cls(int(payload["input_dim"]), int(payload["hidden_dim"]), int(payload["n_components"]),
                       params, include_forecast=bool(payload.get("include_forecast", False)))
        except KeyError as e:
            raise DataValidationError(f"Checkpoint is missing field {e}") from None


def save_checkpoint(model: CalibratorModel, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(model.to_dict(), indent=1), encoding="utf-8")
    return path


def load_checkpoint(path) -> CalibratorModel:
    path = Path(path)
    if not path.exists():
        raise DataValidationError(f"Checkpoint not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataValidationError(f"Checkpoint {path} is not valid JSON: {e}") from None
    return CalibratorModel.from_dict(payload)


# ============================================================
# TRAINING
# ============================================================

@dataclass(eq=False)
class TrainResult:
    model: CalibratorModel
    initial: LossBreakdown
    trace: List[LossBreakdown]


class _Adam:
    def __init__(self, cfg: TrainConfig, params: Dict[str, np.ndarray]):
        self.cfg = cfg
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads):
        cfg = self.cfg
        self.step_count += 1
        t = self.step_count
        for name in PARAM_NAMES:
            g = grads[name]
            self.m[name] = cfg.adam_beta1 * self.m[name] + (1.0 - cfg.adam_beta1) * g
            self.v[name] = cfg.adam_beta2 * self.v[name] + (1.0 - cfg.adam_beta2) * g * g
            m_hat = self.m[name] / (1.0 - cfg.adam_beta1 ** t)
            v_hat = self.v[name] / (1.0 - cfg.adam_beta2 ** t)
            params[name] -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


class _GradientDescent:
    def __init__(self, cfg: TrainConfig, params):
        self.cfg = cfg

    def step(self, params, grads):
        for name in PARAM_NAMES:
            params[name] -= self.cfg.learning_rate * grads[name]


def _check_finite(result: BatchObjective, index_map: np.ndarray):
    bad = np.flatnonzero(~np.isfinite(result.total))
    if bad.size:
        raise NumericalError("Non-finite training loss", index=int(index_map[bad[0]]))


def train_arrays(model: CalibratorModel, inputs: np.ndarray, outcomes: np.ndarray,
                 histograms: Optional[np.ndarray], cfg: TrainConfig) -> TrainResult:
    """Minibatch training on the weighted objective.

    Returns a new model; ``model`` is left untouched. The trace holds the
    dataset-mean loss after each epoch. Shuffling and initialization both draw
    from ``cfg.seed`` so repeated calls are bit-identical.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    outcomes = np.asarray(outcomes, dtype=float).reshape(-1)
    n = inputs.shape[0]
    if n == 0:
        raise DataValidationError("Cannot train on an empty dataset")
    if outcomes.shape[0] != n:
        raise DataValidationError(f"{outcomes.shape[0]} outcomes for {n} inputs")
    if histograms is None and cfg.loss_weights.needs_histograms:
        raise DataValidationError("lambda_human > 0 requires histograms for every training record")

    trained = model.copy()
    optimizer = (_Adam if cfg.optimizer == "adam" else _GradientDescent)(cfg, trained.params)
    rng = np.random.default_rng(cfg.seed)
    everything = np.arange(n)

    def dataset_loss() -> LossBreakdown:
        result, _ = trained.objective(inputs, outcomes, histograms, cfg.loss_weights, with_grad=False)
        _check_finite(result, everything)
        return result.mean_breakdown()

    initial = dataset_loss()
    logger.info("Initial loss: binary=%.5f human=%.5f total=%.5f",
                initial.binary_loss, initial.human_loss, initial.total)
    trace = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch_h = None if histograms is None else histograms[idx]
            result, grads = trained.objective(inputs[idx], outcomes[idx], batch_h, cfg.loss_weights)
            _check_finite(result, idx)
            optimizer.step(trained.params, grads)
        breakdown = dataset_loss()
        trace.append(breakdown)
        logger.info("Epoch %d/%d: binary=%.5f human=%.5f total=%.5f", epoch + 1, cfg.epochs,
                    breakdown.binary_loss, breakdown.human_loss, breakdown.total)
    return TrainResult(trained, initial, trace)


def train(model: CalibratorModel,
          dataset: Sequence[Tuple[CalibratorInput, int, Optional[np.ndarray]]],
          cfg: TrainConfig) -> TrainResult:
    """Train on (input, outcome, Histogram or None) triples."""
    if not dataset:
        raise DataValidationError("Cannot train on an empty dataset")
    inputs = model.input_matrix([x for x, _, _ in dataset])
    outcomes = np.array([y for _, y, _ in dataset], dtype=float)
    masses = [h for _, _, h in dataset]
    histograms = None
    if all(h is not None for h in masses):
        histograms = np.vstack([getattr(h, "masses", h) for h in masses])
    return train_arrays(model, inputs, outcomes, histograms, cfg)


def gradient_check(model: CalibratorModel, inputs: np.ndarray, outcomes: np.ndarray,
                   histograms: Optional[np.ndarray], loss_weights: LossWeights,
                   step: float = 1e-5, n_coords: int = 20, seed: SeedLike = 0,
                   floor: float = 1e-3) -> float:
    """Worst disagreement between analytic and central-difference gradients.

    Checks ``n_coords`` randomly chosen coordinates per parameter array.
    Error is |analytic - numeric| / max(|analytic|, |numeric|, floor), so it is
    a relative error for partials larger than ``floor`` and an absolute error
    scaled by ``1 / floor`` below it: a result under 1e-4 with the default floor
    bounds small partials to within 1e-7 absolute.
    """
    rng = np.random.default_rng(seed)
    _, grads = model.objective(inputs, outcomes, histograms, loss_weights)
    shifted = model.copy()
    worst = 0.0
    for name in PARAM_NAMES:
        flat = shifted.params[name].reshape(-1)
        picks = rng.choice(flat.size, size=min(n_coords, flat.size), replace=False)
        for i in picks:
            original = flat[i]
            flat[i] = original + step
            up, _ = shifted.objective(inputs, outcomes, histograms, loss_weights, with_grad=False)
            flat[i] = original - step
            down, _ = shifted.objective(inputs, outcomes, histograms, loss_weights, with_grad=False)
            flat[i] = original
            numeric = (up.total.mean() - down.total.mean()) / (2 * step)
            analytic = grads[name].reshape(-1)[i]
            scale = max(abs(analytic), abs(numeric), floor)
            worst = max(worst, abs(analytic - numeric) / scale)
    return worst
