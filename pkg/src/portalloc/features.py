"""Observation construction for the learned allocator.

An observation at decision time t stacks, over a set of lags, per-asset
returns and trailing volatilities (channels of a 2 x assets x lags tensor)
plus a matrix of lagged context series. Context defaults to three derived
series (cross-sectional max return, min return, max volatility) and can be
extended with externally supplied columns.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .market_data import ReturnFrame, VolFrame


@dataclass(frozen=True)
class LagSet:
    """Strictly increasing non-negative lag offsets, starting at 0."""

    lags: tuple[int, ...]

    def __post_init__(self):
        lags = tuple(int(x) for x in self.lags)
        object.__setattr__(self, "lags", lags)
        if not lags or lags[0] != 0:
            raise DataError("lag set must start at 0")
        if any(b <= a for a, b in zip(lags, lags[1:])):
            raise DataError("lags must be strictly increasing")
        if any(x < 0 for x in lags):
            raise DataError("lags must be non-negative")

    def __len__(self) -> int:
        return len(self.lags)

    @property
    def max_lag(self) -> int:
        return self.lags[-1]

    def offsets_oldest_first(self) -> np.ndarray:
        return np.array(self.lags[::-1], dtype=np.int64)


DEFAULT_LAGS = LagSet((0, 1, 2, 3, 4, 20, 60))


@dataclass(frozen=True)
class ContextFrame:
    dates: np.ndarray
    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if self.values.shape != (len(self.dates), len(self.names)):
            raise DataError("context matrix shape does not match dates/names")


@dataclass(frozen=True)
class Observation:
    """asset_tensor (2, assets, lags): channel 0 returns, channel 1 vols;
    context_matrix (series, context lags); lag axes run oldest -> newest."""

    asset_tensor: np.ndarray
    context_matrix: np.ndarray
    timestamp: np.datetime64

    def __post_init__(self):
        if self.asset_tensor.ndim != 3 or self.asset_tensor.shape[0] != 2:
            raise DataError("asset tensor must have shape (2, assets, lags)")
        if self.context_matrix.ndim != 2:
            raise DataError("context matrix must be 2-D")
        if not np.all(np.isfinite(self.asset_tensor)) or not np.all(np.isfinite(self.context_matrix)):
            raise DataError("observation contains non-finite cells")
        if np.any(self.asset_tensor[1] < 0):
            raise DataError("volatility channel must be non-negative")


def load_context_csv(path: str) -> ContextFrame:
    """Read external context series from a CSV in the price-file format
    (values are unconstrained reals rather than positive prices)."""
    import csv
    import datetime
    import os

    if not os.path.exists(path):
        raise DataError(f"context file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "date" or len(header) < 2:
            raise DataError("context header must be 'date,<name1>,...'")
        names = tuple(header[1:])
        dates, rows = [], []
        prev = None
        for i, row in enumerate(reader, start=2):
            if len(row) != len(names) + 1:
                raise DataError(f"context row {i} has {len(row)} cells, expected {len(names) + 1}")
            try:
                day = datetime.date.fromisoformat(row[0])
            except ValueError:
                raise DataError(f"malformed date at context row {i}: {row[0]!r}") from None
            if prev is not None and day <= prev:
                raise DataError(f"unordered or duplicate date at context row {i}: {row[0]}")
            prev = day
            try:
                rows.append([float(c) for c in row[1:]])
            except ValueError:
                raise DataError(f"non-numeric cell at context row {i}") from None
            dates.append(np.datetime64(day.isoformat(), "D"))
    if not rows:
        raise DataError(f"context file has no data rows: {path}")
    return ContextFrame(np.array(dates, dtype="datetime64[D]"), names, np.array(rows, dtype=float))


def build_context_series(rf: ReturnFrame, vf: VolFrame,
                         extra: ContextFrame | None = None) -> ContextFrame:
    """Derive the default context series, aligned to the volatility dates:
    cross-sectional max return, min return, and max volatility, with any
    external series appended by exact date match."""
    offset = len(rf.dates) - len(vf.dates)
    if offset < 0 or not np.array_equal(rf.dates[offset:], vf.dates):
        raise DataError("misaligned dates between return and volatility frames")
    rows = rf.returns[offset:]
    cols = [rows.max(axis=1), rows.min(axis=1), vf.vols.max(axis=1)]
    names = ["max_return", "min_return", "max_vol"]
    if extra is not None:
        idx = np.searchsorted(extra.dates, vf.dates)
        if np.any(idx >= len(extra.dates)) or not np.array_equal(extra.dates[idx], vf.dates):
            raise DataError("misaligned dates: external context does not cover the panel dates")
        for j, name in enumerate(extra.names):
            cols.append(extra.values[idx, j])
            names.append(name)
    return ContextFrame(vf.dates.copy(), tuple(names), np.column_stack(cols))


def min_valid_index(vf: VolFrame, rf: ReturnFrame, lags: LagSet, ctx_lags: LagSet) -> int:
    """Smallest return-frame index t at which an observation is fully defined."""
    vol_offset = len(rf.dates) - len(vf.dates)
    return vol_offset + max(lags.max_lag, ctx_lags.max_lag)


def build_observation(rf: ReturnFrame, vf: VolFrame, ctx: ContextFrame,
                      lags: LagSet, ctx_lags: LagSet, t: int) -> Observation:
    """Observation at return-frame index t; every lagged cell must exist.

    asset_tensor[0, k, j] is asset k's return at t - lag_j and
    asset_tensor[1, k, j] the trailing volatility at the same offset, with
    lag axis j ordered oldest -> newest (lag 0, "now", is the last column).
    """
    vol_offset = len(rf.dates) - len(vf.dates)
    ctx_offset = len(rf.dates) - len(ctx.dates)
    if ctx_offset < 0 or not np.array_equal(ctx.dates, rf.dates[ctx_offset:]):
        raise DataError("context frame dates do not align with the return frame")
    if t >= len(rf.dates):
        raise DataError(f"index {t} beyond end of data")
    needed = max(lags.max_lag + vol_offset, ctx_lags.max_lag + ctx_offset)
    if t < needed:
        raise DataError(f"insufficient history for lags at index {t}: need index >= {needed}")
    asset_off = lags.offsets_oldest_first()
    ctx_off = ctx_lags.offsets_oldest_first()
    rets = rf.returns[t - asset_off, :].T
    vols = vf.vols[t - asset_off - vol_offset, :].T
    context = ctx.values[t - ctx_off - ctx_offset, :].T
    return Observation(np.stack([rets, vols]), context, rf.dates[t])
