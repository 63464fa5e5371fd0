"""Forecast records on disk: JSONL load/save, validation, splits, proxy histograms.

One JSON object per line::

    {"id": "...", "text": null, "features": [...], "init_forecast": 0.3,
     "outcome": 1, "histogram": [100 floats] | null, "resolve_date": "2025-05-02",
     "source": "metaculus", "split": null, "regime": null}

Market questions may give ``"price_history"`` (an inline ``{"history": [...]}``
object or a path relative to the JSONL file) instead of a histogram.
Histograms use the left-closed bin convention of ``beta_core.bin_index``.
Features are produced upstream; nothing here embeds text.
"""

import json
import logging
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import requests

from beta_core import DEFAULT_BINS, WEIGHT_TOLERANCE, Histogram
from calibrator_model import CalibratorInput
from errors import DataValidationError, UsageError

logger = logging.getLogger(__name__)

RENORMALIZE_TOLERANCE = 1e-6
TRAIN_END = date(2025, 4, 1)
VAL_END = date(2025, 8, 1)
TEST_END = date(2026, 2, 1)
OPEN_LOOKBACK = timedelta(days=30)
OPEN_GRACE = timedelta(days=7)
SPLIT_NAMES = ("train", "val", "test")
DOWNLOAD_TIMEOUT = 30

USER_AGENT = "Mozilla/5.0 (X11; Linux x86_64) forecast-calibration/1.0"


class Source(str, Enum):
    METACULUS = "metaculus"
    POLYMARKET = "polymarket"
    KALSHI = "kalshi"
    SYNTHETIC = "synthetic"


@dataclass(frozen=True, eq=False)
class ForecastRecord:
    id: str
    features: Tuple[float, ...]
    outcome: Optional[int] = None
    text: Optional[str] = None
    init_forecast: Optional[float] = None
    histogram: Optional[Histogram] = None
    resolve_date: Optional[date] = None
    source: Source = Source.METACULUS
    split: Optional[str] = None
    regime: Optional[str] = None

    @property
    def resolved(self) -> bool:
        return self.outcome is not None

    def calibrator_input(self, include_forecast: bool) -> CalibratorInput:
        if include_forecast and self.init_forecast is None:
            raise DataValidationError(f"Record {self.id} has no init_forecast")
        return CalibratorInput(self.features, self.init_forecast if include_forecast else None)

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "features": list(self.features),
            "init_forecast": self.init_forecast,
            "outcome": self.outcome,
            "histogram": None if self.histogram is None else self.histogram.masses.tolist(),
            "resolve_date": None if self.resolve_date is None else self.resolve_date.isoformat(),
            "source": self.source.value,
            "split": self.split,
            "regime": self.regime,
        }


# ============================================================
# PARSING
# ============================================================

def _parse_date(raw) -> Optional[date]:
    if raw is None:
        return None
    if not isinstance(raw, str):
        raise ValueError(f"resolve_date must be an ISO date string, got {raw!r}")
    try:
        return date.fromisoformat(raw)
    except ValueError:
        return datetime.fromisoformat(raw.replace("Z", "+00:00")).date()


def _parse_histogram(raw, n_bins: int) -> Optional[Histogram]:
    if raw is None:
        return None
    masses = np.asarray(raw, dtype=float)
    if masses.ndim != 1 or masses.size != n_bins:
        raise ValueError(f"histogram must have {n_bins} bins, got shape {masses.shape}")
    if not np.all(np.isfinite(masses)) or np.any(masses < 0):
        raise ValueError("histogram has negative or non-finite mass")
    total = masses.sum()
    gap = abs(total - 1.0)
    if gap > RENORMALIZE_TOLERANCE + WEIGHT_TOLERANCE:
        raise ValueError(f"histogram sums to {total:.9f}, not 1")
    if gap > WEIGHT_TOLERANCE:
        logger.warning("Renormalizing histogram that sums to %.9f", total)
        masses = masses / total
    return Histogram(masses)


def _parse_outcome(raw) -> Optional[int]:
    if raw is None:
        return None
    if isinstance(raw, bool) or raw not in (0, 1):
        raise ValueError(f"outcome must be 0, 1 or null, got {raw!r}")
    return int(raw)


def parse_record(obj: dict, n_bins: int = DEFAULT_BINS, base_dir: Optional[Path] = None) -> ForecastRecord:
    """Build a validated record from one decoded JSON object.

    A record with no ``histogram`` but a ``price_history`` gets the market
    price proxy histogram instead.
    """
    if not isinstance(obj, dict):
        raise ValueError("line is not a JSON object")
    if "id" not in obj or "features" not in obj:
        raise ValueError("record needs 'id' and 'features'")
    features = obj["features"]
    if not isinstance(features, list) or not features:
        raise ValueError("features must be a non-empty list of numbers")
    features = tuple(float(v) for v in features)
    if not all(np.isfinite(features)):
        raise ValueError("features must be finite")
    init_forecast = obj.get("init_forecast")
    if init_forecast is not None:
        init_forecast = float(init_forecast)
        if not 0.0 <= init_forecast <= 1.0:
            raise ValueError(f"init_forecast {init_forecast} outside [0, 1]")
    split = obj.get("split")
    if split is not None and split not in SPLIT_NAMES:
        raise ValueError(f"split must be one of {SPLIT_NAMES}, got {split!r}")
    histogram = _parse_histogram(obj.get("histogram"), n_bins)
    if histogram is None and obj.get("price_history") is not None:
        histogram = histogram_from_prices(obj["price_history"], n_bins, base_dir)
    return ForecastRecord(
        id=str(obj["id"]),
        features=features,
        outcome=_parse_outcome(obj.get("outcome")),
        text=obj.get("text"),
        init_forecast=init_forecast,
        histogram=histogram,
        resolve_date=_parse_date(obj.get("resolve_date")),
        source=Source(obj.get("source", Source.METACULUS.value)),
        split=split,
        regime=obj.get("regime"),
    )


def load(path, n_bins: int = DEFAULT_BINS) -> List[ForecastRecord]:
    """Read a JSONL file; every malformed line is reported by line number."""
    path = Path(path)
    if not path.exists():
        raise UsageError(f"Input file not found: {path}")
    records, problems = [], []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                records.append(parse_record(json.loads(line), n_bins, path.parent))
            except (json.JSONDecodeError, ValueError, TypeError) as e:
                problems.append(f"line {line_no}: {e}")
    if problems:
        shown = "\n  ".join(problems[:20])
        more = f"\n  ... and {len(problems) - 20} more" if len(problems) > 20 else ""
        raise DataValidationError(f"{len(problems)} invalid record(s) in {path}:\n  {shown}{more}")
    logger.info("Loaded %d records from %s", len(records), path)
    return records


def save(records: Iterable[ForecastRecord], path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(json.dumps(record.to_json_dict(), ensure_ascii=False))
            f.write("\n")
    return path


# ============================================================
# SPLITS
# ============================================================

@dataclass
class SplitResult:
    train: List[ForecastRecord] = field(default_factory=list)
    val: List[ForecastRecord] = field(default_factory=list)
    test: List[ForecastRecord] = field(default_factory=list)
    out_of_range: List[ForecastRecord] = field(default_factory=list)

    def get(self, name: str) -> List[ForecastRecord]:
        if name not in SPLIT_NAMES:
            raise UsageError(f"Unknown split {name!r}; expected one of {SPLIT_NAMES}")
        return getattr(self, name)

    def counts(self) -> Dict[str, int]:
        return {name: len(getattr(self, name)) for name in SPLIT_NAMES + ("out_of_range",)}


def temporal_split(records: Sequence[ForecastRecord]) -> SplitResult:
    """train < 2025-04-01 <= val < 2025-08-01 <= test < 2026-02-01."""
    result = SplitResult()
    for r in records:
        d = r.resolve_date
        if d is None or d >= TEST_END:
            result.out_of_range.append(r)
        elif d < TRAIN_END:
            result.train.append(r)
        elif d < VAL_END:
            result.val.append(r)
        else:
            result.test.append(r)
    if result.out_of_range:
        logger.warning("%d record(s) fall outside the temporal split range", len(result.out_of_range))
    return result


def assign_splits(records: Sequence[ForecastRecord]) -> SplitResult:
    """Use each record's explicit split if all have one, else split by date."""
    if records and all(r.split is not None for r in records):
        result = SplitResult()
        for r in records:
            result.get(r.split).append(r)
        return result
    return temporal_split(records)


def training_arrays(records: Sequence[ForecastRecord], include_forecast: bool,
                    need_histograms: bool) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """(inputs, outcomes, histograms or None) for resolved records."""
    unresolved = [r.id for r in records if not r.resolved]
    if unresolved:
        raise DataValidationError(f"{len(unresolved)} unresolved record(s), e.g. {unresolved[0]}")
    inputs = np.vstack([r.calibrator_input(include_forecast).vector() for r in records])
    outcomes = np.array([r.outcome for r in records], dtype=float)
    missing = [r.id for r in records if r.histogram is None]
    if need_histograms and missing:
        raise DataValidationError(
            f"lambda_human > 0 but {len(missing)} record(s) lack a histogram, e.g. {missing[0]}")
    histograms = None if missing else np.vstack([r.histogram.masses for r in records])
    return inputs, outcomes, histograms


# ============================================================
# MARKET PRICE HISTORIES
# ============================================================

def _as_utc(moment: Optional[datetime]) -> Optional[datetime]:
    """Naive datetimes are read as UTC; aware ones are converted to UTC."""
    if moment is None:
        return None
    if moment.tzinfo is None:
        return moment.replace(tzinfo=timezone.utc)
    return moment.astimezone(timezone.utc)


def _parse_moment(raw) -> Optional[datetime]:
    """Epoch seconds or an ISO-8601 string."""
    if raw is None:
        return None
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return datetime.fromtimestamp(float(raw), tz=timezone.utc)
    if isinstance(raw, str):
        try:
            return _as_utc(datetime.fromisoformat(raw.replace("Z", "+00:00")))
        except ValueError:
            pass
    raise DataValidationError(f"Cannot read {raw!r} as a timestamp")


@dataclass(frozen=True)
class PriceSeries:
    """Price observations plus optional market open/close times, all in UTC."""

    timestamps: Tuple[datetime, ...]
    prices: Tuple[float, ...]
    open_time: Optional[datetime] = None
    close_time: Optional[datetime] = None

    def __post_init__(self):
        object.__setattr__(self, "timestamps", tuple(_as_utc(t) for t in self.timestamps))
        object.__setattr__(self, "open_time", _as_utc(self.open_time))
        object.__setattr__(self, "close_time", _as_utc(self.close_time))
        if len(self.timestamps) != len(self.prices):
            raise DataValidationError("Price series needs one timestamp per price")
        if any(b < a for a, b in zip(self.timestamps, self.timestamps[1:])):
            raise DataValidationError("Price timestamps must be nondecreasing")
        if any(not 0.0 <= p <= 1.0 for p in self.prices):
            raise DataValidationError("Prices must lie in [0, 1]")
        if self.open_time is not None and self.close_time is not None and self.close_time < self.open_time:
            raise DataValidationError("Market close_time precedes open_time")

    @classmethod
    def from_history(cls, payload, open_time: Optional[datetime] = None,
                     close_time: Optional[datetime] = None) -> "PriceSeries":
        """Parse ``{"history": [{"t": epoch_seconds, "p": price}, ...]}``.

        The payload may also carry ``open_time`` / ``close_time`` (epoch seconds
        or ISO strings); explicit arguments take precedence.
        """
        points = payload.get("history", []) if isinstance(payload, dict) else payload
        try:
            pairs = sorted((float(pt["t"]), float(pt["p"])) for pt in points)
        except (KeyError, TypeError, ValueError) as e:
            raise DataValidationError(f"Malformed price history entry: {e}") from None
        if isinstance(payload, dict):
            open_time = open_time if open_time is not None else _parse_moment(payload.get("open_time"))
            close_time = close_time if close_time is not None else _parse_moment(payload.get("close_time"))
        return cls(
            timestamps=tuple(datetime.fromtimestamp(t, tz=timezone.utc) for t, _ in pairs),
            prices=tuple(p for _, p in pairs),
            open_time=open_time,
            close_time=close_time,
        )


def load_price_series(path) -> PriceSeries:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise DataValidationError(f"Cannot read price history {path}: {e}") from None
    return PriceSeries.from_history(payload)


def histogram_from_prices(raw, n_bins: int = DEFAULT_BINS, base_dir: Optional[Path] = None) -> Histogram:
    """Proxy histogram for a record's ``price_history`` field.

    ``raw`` is either an inline history object or a path to a history file,
    resolved against ``base_dir`` when relative.
    """
    if isinstance(raw, (dict, list)):
        series = PriceSeries.from_history(raw)
    elif isinstance(raw, str):
        path = Path(raw)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        series = load_price_series(path)
    else:
        raise DataValidationError(f"price_history must be an object or a file path, got {type(raw).__name__}")
    return proxy_histogram(series, n_bins)


def open_date(series: PriceSeries) -> datetime:
    """Earlier of (last - 30 days) and (first + 7 days)."""
    if not series.timestamps:
        raise DataValidationError("Cannot derive an open date from an empty price series")
    return min(series.timestamps[-1] - OPEN_LOOKBACK, series.timestamps[0] + OPEN_GRACE)


def proxy_histogram(series: PriceSeries, n_bins: int = DEFAULT_BINS) -> Histogram:
    """Bin the prices observed between market open and close."""
    if not series.timestamps:
        raise DataValidationError("Price series is empty")
    start = series.open_time if series.open_time is not None else open_date(series)
    end = series.close_time if series.close_time is not None else series.timestamps[-1]
    window = [p for t, p in zip(series.timestamps, series.prices) if start <= t <= end]
    if not window:
        raise DataValidationError(f"No prices between {start.isoformat()} and {end.isoformat()}")
    return Histogram.from_samples(window, n_bins)


# ============================================================
# REMOTE FILES
# ============================================================

class RemoteFile:
    """Download a dataset or price-history file over HTTP before loading it."""

    def __init__(self, timeout: int = DOWNLOAD_TIMEOUT):
        self.timeout = timeout
        self.session = requests.Session()
        self.session.headers.update({
            "User-Agent": USER_AGENT,
            "Accept": "application/json, application/x-ndjson, text/plain",
        })

    @staticmethod
    def is_remote(location: str) -> bool:
        return str(location).startswith(("http://", "https://"))

    def download(self, url: str, dest) -> Path:
        dest = Path(dest)
        logger.info("Fetching %s", url)
        try:
            response = self.session.get(url, timeout=self.timeout)
            response.raise_for_status()
        except requests.exceptions.RequestException as e:
            raise UsageError(f"Error downloading {url}: {e}") from None
        dest.write_bytes(response.content)
        logger.info("Saved %d bytes to %s", len(response.content), dest)
        return dest
