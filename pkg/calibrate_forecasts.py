"""Command-line driver for the forecast calibration toolkit.

    python calibrate_forecasts.py gen --n 30000 --seed 0 --output runs/toy
    python calibrate_forecasts.py train --input runs/toy/dataset.jsonl --loss both --output runs/both
    python calibrate_forecasts.py eval --input runs/toy/dataset.jsonl --checkpoint runs/both/checkpoint.json --output runs/both
    python calibrate_forecasts.py recover --input runs/toy/dataset.jsonl --checkpoint runs/both/checkpoint.json --output runs/both

Every command writes ``run_metadata.json`` into its output directory. Exit codes:
0 success, 1 usage error, 2 data validation failure, 3 numerical failure.
"""

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass
from datetime import datetime
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

import baselines
import metrics
import synthetic
from beta_core import DEFAULT_BINS, BetaMixture, moment_match
from calibrator_model import (
    DEFAULT_COMPONENTS,
    DEFAULT_HIDDEN,
    CalibratorModel,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    train_arrays,
)
from dataset_io import ForecastRecord, RemoteFile, assign_splits, load, save, training_arrays
from errors import CalibrationError, DataValidationError, UsageError
from objectives import LOSS_MODES, LossBreakdown, LossWeights

logger = logging.getLogger(__name__)

# ============================================================
# CONFIGURATION
# ============================================================
LOG_LEVEL_ENV = "FORECAST_CALIBRATION_LOG_LEVEL"
DEFAULT_LOG_LEVEL = "WARNING"
METADATA_FILE = "run_metadata.json"
DATASET_FILE = "dataset.jsonl"
CHECKPOINT_FILE = "checkpoint.json"
LOSS_TRACE_FILE = "loss_trace.csv"
PREDICTIONS_FILE = "predictions.jsonl"
REPORT_FILE = "eval_report.json"
RELIABILITY_FILE = "reliability.csv"
UNCERTAINTY_FILE = "uncertainty_curve.csv"
RECOVERY_FILE = "recovery.csv"
ABLATION_FILE = "ablation_k.csv"
DOWNLOAD_FILE = "downloaded_input.jsonl"
DEFAULT_K_VALUES = "1,2,3,5,10"


@dataclass(frozen=True)
class RunConfig:
    """Every flag of one invocation, defaults filled in."""

    subcommand: str
    output: str
    input: Optional[str] = None
    checkpoint: Optional[str] = None
    seed: int = 0
    n: int = synthetic.DEFAULT_QUESTIONS
    forecasters: int = synthetic.DEFAULT_FORECASTERS
    hist_bins: int = DEFAULT_BINS
    retain: float = 1.0
    corrupt: Optional[str] = None
    loss: str = "both"
    lambda_binary: Optional[float] = None
    lambda_human: Optional[float] = None
    epochs: int = 200
    lr: float = 1e-3
    batch_size: int = 256
    hidden: int = DEFAULT_HIDDEN
    k: int = DEFAULT_COMPONENTS
    k_values: str = DEFAULT_K_VALUES
    optimizer: str = "adam"
    init_forecast: bool = True
    split: Optional[str] = None
    baseline: Optional[str] = None
    bins: int = metrics.DEFAULT_ECE_BINS
    window: int = metrics.DEFAULT_WINDOW

    def __post_init__(self):
        if self.loss not in LOSS_MODES:
            raise ValueError(f"--loss must be one of {sorted(LOSS_MODES)}, got {self.loss!r}")
        if self.epochs < 0:
            raise ValueError(f"--epochs must be >= 0, got {self.epochs}")
        if not 0.0 < self.retain <= 1.0:
            raise ValueError(f"--retain must lie in (0, 1], got {self.retain}")
        if self.bins < 1 or self.window < 1 or self.k < 1 or self.hidden < 1:
            raise ValueError("--bins, --window, --k and --hidden must be positive")
        if self.n < 3 or self.forecasters < 1:
            raise ValueError("--n must be >= 3 and --forecasters >= 1")
        self.corruption()
        self.parsed_k_values()
        weights = self.loss_weights
        if self.epochs > 0:
            self.train_config()
        logger.debug("Loss weights %s", weights)

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        fields = {name: getattr(args, name) for name in cls.__dataclass_fields__ if hasattr(args, name)}
        fields["init_forecast"] = not getattr(args, "no_init_forecast", False)
        return cls(**fields)

    @property
    def loss_weights(self) -> LossWeights:
        binary, human = LOSS_MODES[self.loss]
        if self.lambda_binary is not None:
            binary = self.lambda_binary
        if self.lambda_human is not None:
            human = self.lambda_human
        return LossWeights(binary, human)

    def train_config(self) -> TrainConfig:
        return TrainConfig(learning_rate=self.lr, epochs=self.epochs, batch_size=self.batch_size,
                           seed=self.seed, loss_weights=self.loss_weights, optimizer=self.optimizer)

    def corruption(self) -> Optional[synthetic.CorruptionSpec]:
        return None if self.corrupt is None else synthetic.CorruptionSpec.parse(self.corrupt)

    def parsed_k_values(self) -> List[int]:
        values = [int(v) for v in self.k_values.split(",") if v.strip()]
        if not values or any(v < 1 for v in values):
            raise ValueError(f"--k-values must list positive integers, got {self.k_values!r}")
        return values

    def to_metadata(self) -> dict:
        metadata = asdict(self)
        weights = self.loss_weights
        metadata["effective_lambda_binary"] = weights.lambda_binary
        metadata["effective_lambda_human"] = weights.lambda_human
        return metadata


# ============================================================
# HELPERS
# ============================================================

class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _output_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise UsageError(f"Cannot create output directory {out}: {e}") from None
    if not os.access(out, os.W_OK):
        raise UsageError(f"Output directory {out} is not writable")
    return out


def _check_inputs(cfg: RunConfig):
    if cfg.input is not None and not RemoteFile.is_remote(cfg.input) and not Path(cfg.input).exists():
        raise UsageError(f"Input file not found: {cfg.input}")
    if cfg.checkpoint is not None and not Path(cfg.checkpoint).exists():
        raise UsageError(f"Checkpoint not found: {cfg.checkpoint}")


def _load_records(cfg: RunConfig, out: Path) -> List[ForecastRecord]:
    if cfg.input is None:
        raise UsageError(f"{cfg.subcommand} needs --input")
    path = cfg.input
    if RemoteFile.is_remote(path):
        path = RemoteFile().download(path, out / DOWNLOAD_FILE)
        print(f"💾 Downloaded: {path}")
    records = load(path, cfg.hist_bins)
    if not records:
        raise DataValidationError(f"{cfg.input} contains no records")
    print(f"✅ Loaded {len(records)} records from {cfg.input}")
    return records


def _select(records: Sequence[ForecastRecord], split: Optional[str]) -> List[ForecastRecord]:
    if split is None:
        return list(records)
    chosen = assign_splits(records).get(split)
    if not chosen:
        raise DataValidationError(f"Split {split!r} is empty")
    return chosen


def _inputs(records: Sequence[ForecastRecord], include_forecast: bool) -> np.ndarray:
    return np.vstack([r.calibrator_input(include_forecast).vector() for r in records])


def _outcomes(records: Sequence[ForecastRecord]) -> np.ndarray:
    unresolved = [r.id for r in records if not r.resolved]
    if unresolved:
        raise DataValidationError(f"{len(unresolved)} unresolved record(s), e.g. {unresolved[0]}")
    return np.array([r.outcome for r in records], dtype=float)


def _init_forecasts(records: Sequence[ForecastRecord]) -> np.ndarray:
    missing = [r.id for r in records if r.init_forecast is None]
    if missing:
        raise DataValidationError(f"Baselines need init_forecast; {len(missing)} record(s) lack it, e.g. {missing[0]}")
    return np.array([r.init_forecast for r in records])


def _wants_forecast(cfg: RunConfig, records: Sequence[ForecastRecord]) -> bool:
    return cfg.init_forecast and all(r.init_forecast is not None for r in records)


def _write_json(payload: dict, path: Path) -> Path:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _write_metadata(cfg: RunConfig, out: Path, results: dict) -> Path:
    path = _write_json({"config": cfg.to_metadata(), "results": results}, out / METADATA_FILE)
    print(f"💾 Saved: {path}")
    return path


def _write_loss_trace(initial: LossBreakdown, trace: Sequence[LossBreakdown], path: Path) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["epoch", "binary_loss", "human_loss", "total"])
        for epoch, row in enumerate([initial, *trace]):
            writer.writerow([epoch, repr(row.binary_loss), repr(row.human_loss), repr(row.total)])
    return path


def _fit_model(cfg: RunConfig, records: Sequence[ForecastRecord], k: int
               ) -> Tuple[CalibratorModel, LossBreakdown, List[LossBreakdown]]:
    include = _wants_forecast(cfg, records)
    weights = cfg.loss_weights
    inputs, outcomes, histograms = training_arrays(records, include, weights.needs_histograms)
    model = CalibratorModel.initialize(inputs.shape[1], cfg.hidden, k, seed=cfg.seed, include_forecast=include)
    if cfg.epochs == 0:
        result, _ = model.objective(inputs, outcomes, histograms, weights, with_grad=False)
        return model, result.mean_breakdown(), []
    fitted = train_arrays(model, inputs, outcomes, histograms, cfg.train_config())
    return fitted.model, fitted.initial, fitted.trace


def _histograms(records: Sequence[ForecastRecord]):
    if records and all(r.histogram is not None for r in records):
        return [r.histogram for r in records]
    return None


# ============================================================
# RECOVERY TABLE
# ============================================================

@dataclass(frozen=True)
class RecoveryRow:
    regime: str
    count: int
    true_alpha: float
    true_beta: float
    true_mean: float
    recovered_alpha: float
    recovered_beta: float
    recovered_mean: float

    @property
    def mean_error(self) -> float:
        return abs(self.recovered_mean - self.true_mean)

    @property
    def concentration_ratio(self) -> float:
        return (self.recovered_alpha + self.recovered_beta) / (self.true_alpha + self.true_beta)


def recovery_table(records: Sequence[ForecastRecord], mixtures: Sequence[BetaMixture]) -> List[RecoveryRow]:
    """Average moment-matched (alpha, beta) and mean per ground-truth regime."""
    if len(records) != len(mixtures):
        raise DataValidationError(f"{len(records)} records but {len(mixtures)} mixtures")
    unlabeled = [r.id for r in records if r.regime not in synthetic.REGIME_TRUTHS]
    if unlabeled:
        raise DataValidationError(
            f"Recovery needs synthetic regime labels; {len(unlabeled)} record(s) lack one, e.g. {unlabeled[0]}")
    rows = []
    for name in synthetic.REGIME_NAMES:
        group = [m for r, m in zip(records, mixtures) if r.regime == name]
        if not group:
            continue
        matched = [moment_match(m) for m in group]
        truth = synthetic.REGIME_TRUTHS[name]
        rows.append(RecoveryRow(
            regime=name,
            count=len(group),
            true_alpha=truth.alpha,
            true_beta=truth.beta,
            true_mean=truth.alpha / truth.concentration,
            recovered_alpha=float(np.mean([p.alpha for p in matched])),
            recovered_beta=float(np.mean([p.beta for p in matched])),
            recovered_mean=float(np.mean([p.alpha / p.concentration for p in matched])),
        ))
    return rows


def write_recovery_csv(rows: Sequence[RecoveryRow], path: Path) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["regime", "count", "true_alpha", "true_beta", "true_mean",
                         "recovered_alpha", "recovered_beta", "recovered_mean", "mean_error"])
        for r in rows:
            writer.writerow([r.regime, r.count, repr(r.true_alpha), repr(r.true_beta), repr(r.true_mean),
                             repr(r.recovered_alpha), repr(r.recovered_beta), repr(r.recovered_mean),
                             repr(r.mean_error)])
    return path


# ============================================================
# COMMANDS
# ============================================================

def cmd_gen(cfg: RunConfig) -> Path:
    out = _output_dir(cfg)
    corruption = cfg.corruption()
    generated = synthetic.generate(cfg.n, cfg.forecasters, cfg.seed, cfg.hist_bins,
                                   corruption=corruption, retain_fraction=cfg.retain)
    records = [rec.to_forecast_record(i) for i, rec in enumerate(generated)]
    path = save(records, out / DATASET_FILE)
    print(f"💾 Saved: {path} ({len(records)} records)")

    counts = synthetic.regime_counts(generated)
    splits = {name: sum(1 for r in generated if r.split == name) for name in ("train", "test")}
    for name, count in zip(synthetic.REGIME_NAMES, counts):
        print(f"   {name:<13} {count:>6}")
    _write_metadata(cfg, out, {
        "records": len(records),
        "regime_counts": dict(zip(synthetic.REGIME_NAMES, counts)),
        "split_counts": splits,
        "regime_truths": {name: {"alpha": p.alpha, "beta": p.beta} for name, p in synthetic.REGIME_TRUTHS.items()},
        "corruption": None if corruption is None else corruption.to_dict(),
    })
    return path


def cmd_train(cfg: RunConfig) -> Path:
    _check_inputs(cfg)
    out = _output_dir(cfg)
    records = _select(_load_records(cfg, out), cfg.split or "train")
    weights = cfg.loss_weights
    print(f"🎯 Training on {len(records)} records: K={cfg.k}, "
          f"lambda_binary={weights.lambda_binary}, lambda_human={weights.lambda_human}, epochs={cfg.epochs}")

    model, initial, trace = _fit_model(cfg, records, cfg.k)
    path = save_checkpoint(model, out / CHECKPOINT_FILE)
    trace_path = _write_loss_trace(initial, trace, out / LOSS_TRACE_FILE)
    print(f"💾 Saved: {path}")
    print(f"💾 Saved: {trace_path}")
    final = trace[-1] if trace else initial
    print(f"✅ Final loss: binary={final.binary_loss:.5f} human={final.human_loss:.5f} total={final.total:.5f}")
    _write_metadata(cfg, out, {
        "records": len(records),
        "include_forecast": model.include_forecast,
        "n_parameters": model.n_parameters,
        "initial_loss": initial.to_dict(),
        "final_loss": final.to_dict(),
    })
    return path


def cmd_predict(cfg: RunConfig) -> Path:
    _check_inputs(cfg)
    if cfg.checkpoint is None:
        raise UsageError("predict needs --checkpoint")
    out = _output_dir(cfg)
    model = load_checkpoint(cfg.checkpoint)
    records = _select(_load_records(cfg, out), cfg.split)
    means, variances, mixtures = model.predict_batch(_inputs(records, model.include_forecast))
    path = out / PREDICTIONS_FILE
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for record, mean, variance, mixture in zip(records, means, variances, mixtures):
            row = {"id": record.id, "mean": float(mean), "variance": float(variance), **mixture.to_dict()}
            f.write(json.dumps(row, sort_keys=True) + "\n")
    print(f"💾 Saved: {path} ({len(records)} predictions)")
    _write_metadata(cfg, out, {"records": len(records)})
    return path


def cmd_fit_baseline(cfg: RunConfig) -> Path:
    _check_inputs(cfg)
    if cfg.baseline is None:
        raise UsageError(f"fit-baseline needs --baseline {'|'.join(baselines.BASELINE_KINDS)}")
    out = _output_dir(cfg)
    records = _select(_load_records(cfg, out), cfg.split or "val")
    fitted = baselines.fit_baseline(cfg.baseline, _init_forecasts(records), _outcomes(records), cfg.bins)
    path = baselines.save_map(fitted, out / f"baseline_{cfg.baseline}.json")
    print(f"💾 Saved: {path}")
    _write_metadata(cfg, out, {"records": len(records), "map": fitted.to_dict()})
    return path


def cmd_eval(cfg: RunConfig) -> Path:
    """Evaluate a checkpoint, or a baseline fitted on val, on the chosen split."""
    _check_inputs(cfg)
    out = _output_dir(cfg)
    records = _load_records(cfg, out)
    test = _select(records, cfg.split or "test")
    outcomes = _outcomes(test)

    curve = None
    if cfg.baseline is not None:
        fit_on = _select(records, "val") if cfg.baseline != "identity" else test
        fitted = baselines.fit_baseline(cfg.baseline, _init_forecasts(fit_on), _outcomes(fit_on), cfg.bins)
        preds = np.clip(fitted.apply(_init_forecasts(test)), 0.0, 1.0)
        report = metrics.evaluate(preds, outcomes, method=cfg.baseline, n_bins=cfg.bins)
    elif cfg.checkpoint is not None:
        model = load_checkpoint(cfg.checkpoint)
        preds, variances, mixtures = model.predict_batch(_inputs(test, model.include_forecast))
        if cfg.window > len(test):
            raise DataValidationError(f"--window {cfg.window} exceeds the {len(test)} evaluation records")
        report = metrics.evaluate(preds, outcomes, method="bbc", n_bins=cfg.bins,
                                  mixtures=mixtures, histograms=_histograms(test))
        curve = metrics.uncertainty_curve(variances, preds, outcomes, cfg.window)
    else:
        raise UsageError("eval needs --checkpoint or --baseline")

    path = _write_json(report.to_dict(), out / REPORT_FILE)
    print(f"💾 Saved: {path}")
    print(f"💾 Saved: {metrics.write_reliability_csv(report.reliability_bins, out / RELIABILITY_FILE)}")
    if curve is not None:
        print(f"💾 Saved: {metrics.write_uncertainty_csv(curve, out / UNCERTAINTY_FILE)}")
    kl = "n/a" if report.kl_mean is None else f"{report.kl_mean:.4f}"
    print(f"✅ {report.method}: Brier={report.brier:.4f} Acc={report.accuracy:.4f} "
          f"AUC={report.auc:.4f} ECE={report.ece:.4f} KL={kl}")
    _write_metadata(cfg, out, {"records": report.n, "method": report.method})
    return path


def cmd_recover(cfg: RunConfig) -> Path:
    _check_inputs(cfg)
    if cfg.checkpoint is None:
        raise UsageError("recover needs --checkpoint")
    out = _output_dir(cfg)
    model = load_checkpoint(cfg.checkpoint)
    test = _select(_load_records(cfg, out), cfg.split or "test")
    _, _, mixtures = model.predict_batch(_inputs(test, model.include_forecast))
    rows = recovery_table(test, mixtures)
    path = write_recovery_csv(rows, out / RECOVERY_FILE)

    print(f"\n{'Regime':<13} {'True (a, b)':>16} {'Recovered (a, b)':>20} {'True mean':>10} {'Rec. mean':>10}")
    print("-" * 73)
    for r in rows:
        print(f"{r.regime:<13} ({r.true_alpha:5.1f}, {r.true_beta:5.1f})    "
              f"({r.recovered_alpha:7.2f}, {r.recovered_beta:7.2f})  {r.true_mean:>10.3f} {r.recovered_mean:>10.3f}")
    print(f"\n💾 Saved: {path}")
    _write_metadata(cfg, out, {"rows": [asdict(r) for r in rows]})
    return path


def cmd_ablate_k(cfg: RunConfig) -> Path:
    """Train one model per mixture size and compare them on the test split."""
    _check_inputs(cfg)
    out = _output_dir(cfg)
    k_values = cfg.parsed_k_values()
    records = _load_records(cfg, out)
    train_records = _select(records, "train")
    test = _select(records, "test")
    outcomes = _outcomes(test)

    rows = []
    for k in k_values:
        print(f"🎯 K={k}")
        model, _, _ = _fit_model(cfg, train_records, k)
        preds, _, mixtures = model.predict_batch(_inputs(test, model.include_forecast))
        report = metrics.evaluate(preds, outcomes, method=f"bbc_k{k}", n_bins=cfg.bins,
                                  mixtures=mixtures, histograms=_histograms(test))
        rows.append((k, report))
        print(f"   Brier={report.brier:.4f} AUC={report.auc:.4f} ECE={report.ece:.4f}")

    path = out / ABLATION_FILE
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["k", "brier", "accuracy", "auc", "ece", "log_loss", "kl_mean"])
        for k, r in rows:
            writer.writerow([k, repr(r.brier), repr(r.accuracy), repr(r.auc), repr(r.ece), repr(r.log_loss),
                             "" if r.kl_mean is None else repr(r.kl_mean)])
    print(f"\n💾 Saved: {path}")
    _write_metadata(cfg, out, {"k_values": k_values})
    return path


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "predict": cmd_predict,
    "fit-baseline": cmd_fit_baseline,
    "eval": cmd_eval,
    "recover": cmd_recover,
    "ablate-k": cmd_ablate_k,
}


# ============================================================
# ARGUMENTS
# ============================================================

def build_parser() -> argparse.ArgumentParser:
    common = _ArgumentParser(add_help=False)
    common.add_argument("--output", required=True, help="Output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--log-level", default=os.environ.get(LOG_LEVEL_ENV, DEFAULT_LOG_LEVEL))

    data = _ArgumentParser(add_help=False)
    data.add_argument("--input", help="Dataset JSONL path or http(s) URL")
    data.add_argument("--split", choices=("train", "val", "test"))
    data.add_argument("--hist-bins", type=int, default=DEFAULT_BINS)

    training = _ArgumentParser(add_help=False)
    training.add_argument("--loss", choices=sorted(LOSS_MODES), default="both")
    training.add_argument("--lambda-binary", type=float)
    training.add_argument("--lambda-human", type=float)
    training.add_argument("--epochs", type=int, default=200)
    training.add_argument("--lr", type=float, default=1e-3)
    training.add_argument("--batch-size", type=int, default=256)
    training.add_argument("--hidden", type=int, default=DEFAULT_HIDDEN)
    training.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    training.add_argument("--no-init-forecast", action="store_true",
                          help="Do not append the initial forecast to the features")

    scoring = _ArgumentParser(add_help=False)
    scoring.add_argument("--bins", type=int, default=metrics.DEFAULT_ECE_BINS, help="ECE / binning bins")
    scoring.add_argument("--window", type=int, default=metrics.DEFAULT_WINDOW)

    parser = _ArgumentParser(prog="calibrate_forecasts", description="Beta-mixture forecast calibration")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_ArgumentParser)

    gen = sub.add_parser("gen", parents=[common], help="Generate the synthetic three-regime dataset")
    gen.add_argument("--n", type=int, default=synthetic.DEFAULT_QUESTIONS)
    gen.add_argument("--forecasters", type=int, default=synthetic.DEFAULT_FORECASTERS)
    gen.add_argument("--hist-bins", type=int, default=DEFAULT_BINS)
    gen.add_argument("--retain", type=float, default=1.0, help="Fraction of training crowd forecasts kept")
    gen.add_argument("--corrupt", help="gamma=<scale>, delta=<shift> or rho=<noise fraction>")

    train = sub.add_parser("train", parents=[common, data, training], help="Train a calibrator")
    train.add_argument("--k", type=int, default=DEFAULT_COMPONENTS)

    predict = sub.add_parser("predict", parents=[common, data], help="Predict Beta mixtures")
    predict.add_argument("--checkpoint", required=True)

    fit = sub.add_parser("fit-baseline", parents=[common, data], help="Fit a classical calibration map")
    fit.add_argument("--baseline", choices=baselines.BASELINE_KINDS, required=True)
    fit.add_argument("--bins", type=int, default=metrics.DEFAULT_ECE_BINS)

    evaluate = sub.add_parser("eval", parents=[common, data, scoring], help="Evaluate a checkpoint or baseline")
    evaluate.add_argument("--checkpoint")
    evaluate.add_argument("--baseline", choices=baselines.BASELINE_KINDS)

    recover = sub.add_parser("recover", parents=[common, data], help="Per-regime parameter recovery")
    recover.add_argument("--checkpoint", required=True)

    ablate = sub.add_parser("ablate-k", parents=[common, data, training, scoring], help="Mixture-size ablation")
    ablate.add_argument("--k-values", default=DEFAULT_K_VALUES)
    return parser


def _configure_logging(level: str):
    numeric = logging.getLevelName(str(level).upper())
    if not isinstance(numeric, int):
        raise UsageError(f"Unknown log level {level!r}")
    logging.basicConfig(level=numeric, format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _configure_logging(args.log_level)
        try:
            cfg = RunConfig.from_args(args)
        except ValueError as e:
            raise UsageError(str(e)) from None

        print("📈 Forecast Calibration")
        print("=" * 70)
        print(f"📅 Run time:  {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
        print(f"🎯 Command:   {cfg.subcommand}")
        print(f"🎲 Seed:      {cfg.seed}")
        print("=" * 70)
        COMMANDS[cfg.subcommand](cfg)
    except CalibrationError as e:
        print(f"❌ {e}", file=sys.stderr)
        return e.exit_code
    except ValueError as e:
        print(f"❌ {e}", file=sys.stderr)
        return DataValidationError.exit_code
    print("\n✅ Done")
    return 0


if __name__ == "__main__":
    sys.exit(main())
