"""Independent brute-force oracles used by the test suite.

These deliberately avoid the library's solver/metric code paths: grid
enumeration plus direct objective evaluation for the allocators, plain
Python loops for the performance metrics, and central finite differences
for gradients.
"""
from __future__ import annotations

import math

import numpy as np

from portalloc._kernels import simplex_compositions

GRID_STEP = 0.005

_GRID_CACHE: dict[int, np.ndarray] = {}


def simplex_grid(l: int, step: float = GRID_STEP) -> np.ndarray:
    units = round(1.0 / step)
    key = l if step == GRID_STEP else -1
    if key not in _GRID_CACHE:
        grid = simplex_compositions(units, l) / float(units)
        if key == -1:
            return grid
        _GRID_CACHE[key] = grid
    return _GRID_CACHE[key]


def grid_min_quadratic(matrix: np.ndarray, feasible_mask=None) -> tuple[np.ndarray, float]:
    """argmin of w' M w over the grid (optionally masked)."""
    W = simplex_grid(matrix.shape[0])
    vals = np.einsum("ni,ij,nj->n", W, matrix, W)
    if feasible_mask is not None:
        vals = np.where(feasible_mask(W), vals, np.inf)
    i = int(np.argmin(vals))
    return W[i], float(vals[i])


def grid_min_risk_with_floor(sigma: np.ndarray, mu: np.ndarray, r_min: float):
    W = simplex_grid(sigma.shape[0])
    var = np.einsum("ni,ij,nj->n", W, sigma, W)
    var = np.where(W @ mu >= r_min - 1e-12, var, np.inf)
    i = int(np.argmin(var))
    return W[i], float(var[i])


def grid_max_return_with_cap(sigma: np.ndarray, mu: np.ndarray, cap: float):
    W = simplex_grid(sigma.shape[0])
    var = np.einsum("ni,ij,nj->n", W, sigma, W)
    ret = np.where(var <= cap + 1e-12, W @ mu, -np.inf)
    i = int(np.argmax(ret))
    return W[i], float(ret[i])


def grid_max_diversification(sigma: np.ndarray, vols: np.ndarray):
    W = simplex_grid(sigma.shape[0])
    var = np.einsum("ni,ij,nj->n", W, sigma, W)
    ratio = (W @ vols) / np.sqrt(var)
    i = int(np.argmax(ratio))
    return W[i], float(ratio[i])


def grid_equal_risk_contribution(sigma: np.ndarray):
    """Grid minimizer of the scale-reduced barrier objective
    1/2 + 1/2 ln(w'Sw) - (1/l) sum ln w_i (interior points only)."""
    l = sigma.shape[0]
    W = simplex_grid(l)
    interior = np.all(W > 0, axis=1)
    var = np.einsum("ni,ij,nj->n", W, sigma, W)
    with np.errstate(divide="ignore"):
        obj = 0.5 + 0.5 * np.log(var) - np.log(np.clip(W, 1e-300, None)).sum(axis=1) / l
    obj = np.where(interior, obj, np.inf)
    i = int(np.argmin(obj))
    return W[i], float(obj[i])


# ---------------------------------------------------------------------------
# metric oracles: plain loops, no vectorized shortcuts
# ---------------------------------------------------------------------------

def metrics_bruteforce(values) -> dict:
    values = [float(v) for v in values]
    steps = len(values) - 1
    rets = [values[i + 1] / values[i] - 1.0 for i in range(steps)]
    growth = values[-1] / values[0]
    ann = growth ** (252.0 / steps) - 1.0
    mean = sum(rets) / len(rets)
    if len(rets) >= 2:
        sd = math.sqrt(sum((r - mean) ** 2 for r in rets) / (len(rets) - 1))
    else:
        sd = 0.0
    # matches the library's definitional choice: float-noise vol counts as zero
    zero_floor = 1e-12 * max(1.0, max(abs(r) for r in rets))
    sharpe = None if sd <= zero_floor else ann / (sd * math.sqrt(252.0))
    downside = math.sqrt(sum(min(r, 0.0) ** 2 for r in rets) / len(rets))
    sortino = None if downside <= 0 else ann / (downside * math.sqrt(252.0))
    peak = values[0]
    max_dd = 0.0
    for v in values:
        peak = max(peak, v)
        max_dd = max(max_dd, (peak - v) / peak)
    return {"annualized_return": ann, "sharpe": sharpe, "sortino": sortino,
            "max_dd": max_dd}


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

def central_difference(fn, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of a scalar function of a flat array."""
    g = np.zeros_like(x, dtype=float)
    for i in range(x.size):
        bump = np.zeros_like(x, dtype=float)
        bump.flat[i] = h
        g.flat[i] = (fn(x + bump) - fn(x - bump)) / (2.0 * h)
    return g


def relative_errors(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return np.abs(a - b) / denom
