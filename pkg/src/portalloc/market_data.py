"""Price panel ingestion, return/volatility computation, and a
regime-switching synthetic price generator.

CSV format (used for prices and for context series alike): header row
``date,NAME1,...,NAMEm``, one row per date, ISO-8601 dates, ``.`` decimal
separator, no thousands separators.
"""
from __future__ import annotations

import csv
import datetime
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


def _as_day(value) -> np.datetime64:
    return np.datetime64(value, "D")


def atomic_write_text(path: str, text: str) -> None:
    """Write a file atomically (temp file in the same directory + rename)."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _format_float(x: float) -> str:
    # repr round-trips exactly, so load(write(frame)) == frame bit for bit
    return repr(float(x))


@dataclass(frozen=True)
class PriceFrame:
    """Date-indexed panel of strictly positive asset prices, shape (T, m)."""

    dates: np.ndarray
    assets: tuple[str, ...]
    prices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "assets", tuple(self.assets))
        if self.prices.ndim != 2 or self.prices.shape != (len(self.dates), len(self.assets)):
            raise DataError("price matrix shape does not match dates/assets")
        if len(self.dates) > 1 and not np.all(np.diff(self.dates) > np.timedelta64(0, "D")):
            raise DataError("unordered dates")
        if not np.all(np.isfinite(self.prices)) or np.any(self.prices <= 0):
            raise DataError("non-positive price in frame")

    @property
    def num_assets(self) -> int:
        return len(self.assets)


@dataclass(frozen=True)
class ReturnFrame:
    """Per-period arithmetic returns; row t is the return from date t-1 to t."""

    dates: np.ndarray
    assets: tuple[str, ...]
    returns: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "assets", tuple(self.assets))
        if self.returns.shape != (len(self.dates), len(self.assets)):
            raise DataError("return matrix shape does not match dates/assets")
        if np.any(self.returns <= -1.0):
            raise DataError("return <= -100% implies a non-positive price")

    @property
    def num_assets(self) -> int:
        return len(self.assets)


@dataclass(frozen=True)
class VolFrame:
    """Trailing per-period volatilities over a window of `window` returns.

    Row t holds the population standard deviation of the `window` returns
    ending at the matching ReturnFrame row; only full windows are kept.
    """

    dates: np.ndarray
    assets: tuple[str, ...]
    vols: np.ndarray
    window: int

    def __post_init__(self):
        object.__setattr__(self, "assets", tuple(self.assets))
        if self.window < 2:
            raise DataError("volatility window must be >= 2")
        if self.vols.shape != (len(self.dates), len(self.assets)):
            raise DataError("vol matrix shape does not match dates/assets")
        if np.any(self.vols < 0):
            raise DataError("negative volatility")


@dataclass(frozen=True)
class RegimeSpec:
    """One market regime: per-asset drift and vol, a single pairwise
    correlation, and the expected duration (steps) of a visit."""

    mean: np.ndarray
    vol: np.ndarray
    corr: float
    duration: int


@dataclass(frozen=True)
class SyntheticSpec:
    num_assets: int
    num_steps: int
    regimes: tuple[RegimeSpec, ...] = field(default_factory=tuple)
    seed: int = 0
    start_date: np.datetime64 = np.datetime64("2000-01-03")

    def __post_init__(self):
        object.__setattr__(self, "regimes", tuple(self.regimes))
        if self.num_assets < 1 or self.num_steps < 1:
            raise DataError("num_assets and num_steps must be >= 1")
        if not self.regimes:
            raise DataError("at least one regime is required")
        m = self.num_assets
        for i, reg in enumerate(self.regimes):
            if len(reg.mean) != m or len(reg.vol) != m:
                raise DataError(f"regime {i}: mean/vol length must equal num_assets")
            if reg.duration < 1:
                raise DataError(f"regime {i}: duration must be >= 1")
            if np.any(np.asarray(reg.vol) < 0):
                raise DataError(f"regime {i}: volatilities must be >= 0")
            if not -1.0 <= reg.corr <= 1.0:
                raise DataError(f"regime {i}: correlation must lie in [-1, 1]")
            if m > 1 and reg.corr < -1.0 / (m - 1):
                raise DataError(
                    f"regime {i}: constant correlation {reg.corr} is not "
                    f"positive semi-definite for {m} assets (needs >= {-1.0 / (m - 1):.4f})"
                )


def load_price_csv(path: str) -> PriceFrame:
    """Load a price panel CSV, validating every cell.

    Raises DataError with a distinct message for: missing file, bad header,
    malformed/duplicate/unordered dates, ragged rows, non-numeric cells and
    non-positive prices.
    """
    if not os.path.exists(path):
        raise DataError(f"price file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"empty price file: {path}") from None
        if len(header) < 2 or header[0] != "date":
            raise DataError("header must be 'date,<asset1>,...'")
        assets = tuple(header[1:])
        dates: list[np.datetime64] = []
        rows: list[list[float]] = []
        prev: datetime.date | None = None
        for i, row in enumerate(reader, start=2):
            if len(row) != len(assets) + 1:
                raise DataError(f"row {i} has {len(row)} cells, expected {len(assets) + 1}")
            try:
                day = datetime.date.fromisoformat(row[0])
            except ValueError:
                raise DataError(f"malformed date at row {i}: {row[0]!r}") from None
            if prev is not None:
                if day == prev:
                    raise DataError(f"duplicate date at row {i}: {row[0]}")
                if day < prev:
                    raise DataError(f"unordered dates at row {i}: {row[0]} after {prev.isoformat()}")
            prev = day
            values = []
            for name, cell in zip(assets, row[1:]):
                try:
                    value = float(cell)
                except ValueError:
                    raise DataError(f"non-numeric cell at (row {i}, asset {name}): {cell!r}") from None
                if not np.isfinite(value) or value <= 0:
                    raise DataError(f"non-positive price at (row {i}, asset {name})")
                values.append(value)
            dates.append(_as_day(day.isoformat()))
            rows.append(values)
    if not rows:
        raise DataError(f"price file has no data rows: {path}")
    return PriceFrame(np.array(dates, dtype="datetime64[D]"), assets, np.array(rows, dtype=float))


def write_price_csv(frame: PriceFrame, path: str) -> None:
    lines = ["date," + ",".join(frame.assets)]
    for day, row in zip(frame.dates, frame.prices):
        lines.append(str(day) + "," + ",".join(_format_float(x) for x in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def compute_returns(frame: PriceFrame) -> ReturnFrame:
    """Arithmetic returns r_t = p_t / p_{t-1} - 1, one row fewer than prices."""
    if len(frame.dates) < 2:
        raise DataError("insufficient history: need at least 2 price rows")
    returns = frame.prices[1:] / frame.prices[:-1] - 1.0
    return ReturnFrame(frame.dates[1:], frame.assets, returns)


def rolling_volatility(rf: ReturnFrame, window: int) -> VolFrame:
    """Trailing population standard deviation (divisor = window) of returns.

    The value at output row t covers the `window` returns ending at input
    row t + window - 1; rows without a full window are dropped.
    """
    if window < 2:
        raise DataError(f"volatility window must be >= 2, got {window}")
    if len(rf.dates) < window:
        raise DataError(f"insufficient rows: need >= {window}, got {len(rf.dates)}")
    sliding = np.lib.stride_tricks.sliding_window_view(rf.returns, window, axis=0)
    vols = sliding.std(axis=2, ddof=0)
    return VolFrame(rf.dates[window - 1:], rf.assets, vols, window)


def _weekday_dates(start: np.datetime64, count: int) -> np.ndarray:
    # enough calendar days to cover `count` weekdays, then trim
    span = np.arange(start, start + np.timedelta64(2 * count + 10, "D"), dtype="datetime64[D]")
    return span[np.is_busday(span)][:count]


def _regime_factor(reg: RegimeSpec, m: int) -> np.ndarray:
    # factor F with F F^T = diag(vol) C diag(vol); eigen route tolerates
    # singular C (corr == 1) and zero vols
    corr = np.full((m, m), reg.corr, dtype=float)
    np.fill_diagonal(corr, 1.0)
    eigvals, eigvecs = np.linalg.eigh(corr)
    root = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))
    return np.asarray(reg.vol, dtype=float)[:, None] * root


def generate_synthetic_with_regimes(spec: SyntheticSpec) -> tuple[PriceFrame, np.ndarray]:
    """Like generate_synthetic, but also returns the regime index of each
    return step (length num_steps) for diagnostics and tests."""
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    m = spec.num_assets
    factors = [_regime_factor(reg, m) for reg in spec.regimes]
    returns = np.empty((spec.num_steps, m))
    labels = np.empty(spec.num_steps, dtype=np.int64)
    done = 0
    regime_idx = 0
    while done < spec.num_steps:
        reg = spec.regimes[regime_idx % len(spec.regimes)]
        duration = int(rng.geometric(1.0 / reg.duration))
        take = min(duration, spec.num_steps - done)
        shocks = rng.standard_normal((take, m))
        returns[done:done + take] = np.asarray(reg.mean, dtype=float) + shocks @ factors[regime_idx % len(spec.regimes)].T
        labels[done:done + take] = regime_idx % len(spec.regimes)
        done += take
        regime_idx += 1
    if np.any(returns <= -1.0):
        raise DataError("synthetic returns reached -100%; reduce regime volatility")
    prices = np.empty((spec.num_steps + 1, m))
    prices[0] = 100.0
    prices[1:] = 100.0 * np.cumprod(1.0 + returns, axis=0)
    dates = _weekday_dates(spec.start_date, spec.num_steps + 1)
    assets = tuple(f"A{i + 1}" for i in range(m))
    return PriceFrame(dates, assets, prices), labels


def generate_synthetic(spec: SyntheticSpec) -> PriceFrame:
    """Deterministic (per seed) regime-switching Gaussian price panel.

    Regimes cycle in order; each visit lasts a geometrically distributed
    number of steps with the regime's expected duration. Prices start at 100.
    """
    frame, _ = generate_synthetic_with_regimes(spec)
    return frame
