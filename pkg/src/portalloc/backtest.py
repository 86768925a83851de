"""Walk-forward evaluation harness and performance metrics.

Decisions made at step t (weights and leverage, from information up to and
including t) earn the asset returns realized at t + 1, net of proportional
transaction costs on leverage-scaled turnover. Schedules expand the training
window: the first split trains on everything before the initial train end,
each later split absorbs the previous test span.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DataError
from .market_data import ReturnFrame

TRADING_DAYS_PER_YEAR = 252


@dataclass(frozen=True)
class Split:
    """Index ranges into the return frame: train [train_start, train_end),
    test [test_start, test_end), with train_end == test_start."""

    train_start: int
    train_end: int
    test_start: int
    test_end: int


@dataclass(frozen=True)
class WalkForwardSchedule:
    splits: tuple[Split, ...]

    def __len__(self) -> int:
        return len(self.splits)


def make_schedule(dates: np.ndarray, initial_train_end: np.datetime64,
                  test_span: int) -> WalkForwardSchedule:
    """Expanding-train splits: the first test step is the first date after
    initial_train_end; tests cover test_span rows each (last may be shorter)."""
    if test_span < 1:
        raise DataError("test_span must be >= 1")
    initial_train_end = np.datetime64(initial_train_end, "D")
    first_test = int(np.searchsorted(dates, initial_train_end, side="right"))
    if first_test >= len(dates):
        raise DataError("empty test region: initial_train_end is at or beyond the data end")
    if first_test < 1:
        raise DataError("empty train region: initial_train_end precedes the data start")
    splits = []
    start = first_test
    while start < len(dates):
        end = min(start + test_span, len(dates))
        splits.append(Split(0, start, start, end))
        start = end
    return WalkForwardSchedule(tuple(splits))


DecideFn = Callable[[int], tuple[np.ndarray, float]]


@dataclass
class EquityCurve:
    """Portfolio value path (P starts at 1.0) plus the decision paths."""

    dates: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    leverage: np.ndarray
    turnover: np.ndarray
    bankrupt: bool = False

    def step_returns(self) -> np.ndarray:
        return self.values[1:] / self.values[:-1] - 1.0


def run_strategy(decide: DecideFn, rf: ReturnFrame, t_start: int, t_end: int,
                 cost_rate: float, prev_position: np.ndarray | None = None) -> EquityCurve:
    """Replay decisions over steps t in [t_start, t_end).

    decide(t) must use information up to t only; its action earns the asset
    returns at t + 1. Step return = lvg_t * <w_t, r_{t+1}> minus
    cost_rate * sum |lvg_t w_t - lvg_{t-1} w_{t-1}|. The initial previous
    position defaults to flat (all zeros), so entering the market is charged.
    A step loss of 100% or worse terminates the curve with bankrupt=True.
    """
    if cost_rate < 0:
        raise DataError("cost_rate must be >= 0")
    if t_end > len(rf.dates) - 1:
        raise DataError("t_end leaves no realized next-step return")
    if t_end <= t_start or t_start < 0:
        raise DataError("empty or invalid strategy range")
    m = rf.num_assets
    steps = t_end - t_start
    values = np.empty(steps + 1)
    values[0] = 1.0
    weights = np.empty((steps, m))
    leverage = np.empty(steps)
    turnover = np.empty(steps)
    position = np.zeros(m) if prev_position is None else np.asarray(prev_position, dtype=float)
    bankrupt = False
    taken = 0
    for i, t in enumerate(range(t_start, t_end)):
        w, lvg = decide(t)
        w = np.asarray(w, dtype=float)
        target = lvg * w
        weights[i] = w
        leverage[i] = lvg
        turnover[i] = float(np.abs(target - position).sum())
        step_ret = lvg * float(w @ rf.returns[t + 1]) - cost_rate * turnover[i]
        values[i + 1] = values[i] * (1.0 + step_ret)
        position = target
        taken = i + 1
        if step_ret <= -1.0:
            values[i + 1] = max(values[i + 1], 0.0)
            bankrupt = True
            break
    dates = rf.dates[t_start:t_start + taken + 1].copy()
    return EquityCurve(dates, values[:taken + 1], weights[:taken], leverage[:taken],
                       turnover[:taken], bankrupt)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def annualized_return(curve: EquityCurve) -> float:
    """Compounded growth rate scaled to 252 steps per year."""
    steps = len(curve.values) - 1
    if steps < 1:
        raise DataError("curve too short for metrics")
    if curve.values[-1] <= 0:
        return -1.0
    return float((curve.values[-1] / curve.values[0]) ** (TRADING_DAYS_PER_YEAR / steps) - 1.0)


def sharpe(curve: EquityCurve) -> float | None:
    """Annualized return over annualized daily volatility (sample std);
    None when the volatility is zero (undefined, never infinity). Volatility
    below 1e-12 counts as zero so constant-growth curves built in floating
    point still flag as undefined."""
    rets = curve.step_returns()
    if len(rets) < 2:
        return None
    vol = float(rets.std(ddof=1))
    if vol <= 1e-12 * max(1.0, float(np.abs(rets).max())):
        return None
    return annualized_return(curve) / (vol * math.sqrt(TRADING_DAYS_PER_YEAR))


def sortino(curve: EquityCurve) -> float | None:
    """Annualized return over annualized downside deviation
    sqrt(mean(min(r, 0)^2)); None when there are no negative returns."""
    rets = curve.step_returns()
    if len(rets) < 1:
        return None
    downside = float(np.sqrt(np.mean(np.minimum(rets, 0.0) ** 2)))
    if downside <= 0.0:
        return None
    return annualized_return(curve) / (downside * math.sqrt(TRADING_DAYS_PER_YEAR))


def max_drawdown(curve: EquityCurve) -> float:
    """Largest peak-to-trough loss: max over t of (running_max - P_t) / running_max."""
    running_max = np.maximum.accumulate(curve.values)
    drawdowns = (running_max - curve.values) / running_max
    return float(drawdowns.max())


@dataclass(frozen=True)
class MetricSet:
    annualized_return: float
    sortino: float | None
    sharpe: float | None
    max_dd: float

    @staticmethod
    def of(curve: EquityCurve) -> "MetricSet":
        return MetricSet(annualized_return(curve), sortino(curve), sharpe(curve),
                         max_drawdown(curve))


@dataclass
class PerformanceReport:
    model: str
    full: MetricSet
    horizons: dict[str, MetricSet] = field(default_factory=dict)
    per_window: list[MetricSet] = field(default_factory=list)
    curve: EquityCurve | None = None


def _slice_curve(curve: EquityCurve, last_steps: int) -> EquityCurve:
    if last_steps > len(curve.values) - 1:
        raise DataError(
            f"horizon of {last_steps} steps exceeds available history "
            f"({len(curve.values) - 1} steps)"
        )
    return EquityCurve(curve.dates[-(last_steps + 1):], curve.values[-(last_steps + 1):],
                       curve.weights[-last_steps:], curve.leverage[-last_steps:],
                       curve.turnover[-last_steps:], curve.bankrupt)


def report_for_curve(model: str, curve: EquityCurve, horizons: dict[str, int],
                     per_window: list[EquityCurve] | None = None) -> PerformanceReport:
    """Metrics over the full curve plus trailing horizons (given in steps)."""
    report = PerformanceReport(model, MetricSet.of(curve), curve=curve)
    for label, steps in horizons.items():
        report.horizons[label] = MetricSet.of(_slice_curve(curve, steps))
    for segment in per_window or []:
        report.per_window.append(MetricSet.of(segment))
    return report


def stitch_curves(segments: list[EquityCurve]) -> EquityCurve:
    """Chain test segments into one continuous out-of-sample curve,
    compounding values across the segment boundaries."""
    if not segments:
        raise DataError("no segments to stitch")
    dates = [segments[0].dates]
    values = [segments[0].values]
    weights = [segments[0].weights]
    leverage = [segments[0].leverage]
    turnover = [segments[0].turnover]
    for seg in segments[1:]:
        scale = values[-1][-1] / seg.values[0]
        dates.append(seg.dates[1:])
        values.append(seg.values[1:] * scale)
        weights.append(seg.weights)
        leverage.append(seg.leverage)
        turnover.append(seg.turnover)
    return EquityCurve(np.concatenate(dates), np.concatenate(values),
                       np.vstack(weights), np.concatenate(leverage),
                       np.concatenate(turnover), any(s.bankrupt for s in segments))


# ---------------------------------------------------------------------------
# model comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CompareConfig:
    """Everything a multi-model walk-forward comparison needs beyond data."""

    cost_rate: float = 0.0005
    rebalance: int = 21
    trad_leverage: float = 3.0
    ew_leverage: float = 1.0
    est_window: int | None = None
    r_min: float | None = None
    sigma_max: float | None = None
    horizons: dict[str, int] = field(default_factory=dict)
    seed: int = 0


def _traditional_decider(method: str, rf: ReturnFrame, first_decision: int,
                         cfg: CompareConfig, solver_cfg, leverage: float) -> DecideFn:
    from .allocators import solve
    from .risk_models import estimate_stats

    state: dict = {"w": None}

    def decide(t: int) -> tuple[np.ndarray, float]:
        if state["w"] is None or (t - first_decision) % cfg.rebalance == 0:
            window = None if cfg.est_window is None else cfg.est_window
            sub = ReturnFrame(rf.dates[: t + 1], rf.assets, rf.returns[: t + 1])
            stats = estimate_stats(sub, window)
            report = solve(method, stats, solver_cfg, r_min=cfg.r_min,
                           sigma_max=cfg.sigma_max)
            state["w"] = report.weights.w
        return state["w"], leverage

    return decide


def _policy_decider(params, bundle) -> DecideFn:
    from .features import build_observation
    from .policy import forward

    def decide(t: int) -> tuple[np.ndarray, float]:
        obs = build_observation(bundle.rf, bundle.vf, bundle.ctx, bundle.lags,
                                bundle.ctx_lags, t)
        action = forward(params, obs)
        return action.weights, action.leverage

    return decide


@dataclass(frozen=True)
class DataBundle:
    """Return frame plus the derived feature inputs shared by every model."""

    rf: ReturnFrame
    vf: object
    ctx: object
    lags: object
    ctx_lags: object


def compare_models(models: list[str], bundle: DataBundle, schedule: WalkForwardSchedule,
                   cfg: CompareConfig, solver_cfg=None, arch=None, train_cfg=None,
                   trained_params: dict[int, object] | None = None
                   ) -> list[PerformanceReport]:
    """Walk-forward every model over the schedule and report the metric table.

    The learned model retrains per split on the expanding train range unless
    per-split parameters are supplied in trained_params (split index -> params).
    Traditional models re-solve every cfg.rebalance steps on trailing stats.
    """
    from .allocators import SolverConfig, method_names
    from .features import min_valid_index
    from .policy import NetworkArch
    from .trainer import TrainConfig, make_window, train

    if not models:
        raise DataError("empty model list")
    valid = set(method_names()) | {"drl", "equalweight"}
    for name in models:
        if name not in valid:
            raise DataError(f"unknown model {name!r}; valid: {', '.join(sorted(valid))}")
    solver_cfg = solver_cfg or SolverConfig(seed=cfg.seed)
    arch = arch or NetworkArch()
    train_cfg = train_cfg or TrainConfig(seed=cfg.seed)
    rf = bundle.rf
    m = rf.num_assets
    lo = min_valid_index(bundle.vf, rf, bundle.lags, bundle.ctx_lags)
    reports = []
    for model in models:
        segments = []
        position = None
        for k, split in enumerate(schedule.splits):
            first_decision = split.test_start - 1
            if first_decision < lo:
                raise DataError(
                    f"split {k} starts testing at index {split.test_start}, before "
                    f"the first index with full feature history ({lo + 1})"
                )
            if model == "drl":
                if trained_params is not None and k in trained_params:
                    params = trained_params[k]
                else:
                    window = make_window(rf, bundle.vf, bundle.ctx, bundle.lags,
                                         bundle.ctx_lags, lo, split.train_end - 1)
                    seed_k = int(np.random.SeedSequence([cfg.seed, k]).generate_state(1)[0])
                    from dataclasses import replace
                    params = train(window, arch, replace(train_cfg, seed=seed_k)).params
                decide = _policy_decider(params, bundle)
            elif model == "equalweight":
                ew = np.full(m, 1.0 / m)
                decide = lambda t, ew=ew: (ew, cfg.ew_leverage)  # noqa: E731
            else:
                decide = _traditional_decider(model, rf, first_decision, cfg,
                                              solver_cfg, cfg.trad_leverage)
            seg = run_strategy(decide, rf, first_decision, split.test_end - 1,
                               cfg.cost_rate, prev_position=position)
            position = seg.leverage[-1] * seg.weights[-1]
            segments.append(seg)
        stitched = stitch_curves(segments)
        reports.append(report_for_curve(model, stitched, cfg.horizons, segments))
    return reports


def _fmt_metric(x: float | None) -> str:
    return "undef" if x is None else f"{x:.4f}"


def report_table_csv(reports: list[PerformanceReport]) -> str:
    """Metric table, one row per (model, horizon): return / Sortino / Sharpe /
    max DD column order."""
    lines = ["model,horizon,annualized_return,sortino,sharpe,max_dd"]
    for rep in reports:
        rows = [("full", rep.full)] + sorted(rep.horizons.items())
        for label, ms in rows:
            lines.append(
                f"{rep.model},{label},{_fmt_metric(ms.annualized_return)},"
                f"{_fmt_metric(ms.sortino)},{_fmt_metric(ms.sharpe)},{_fmt_metric(ms.max_dd)}"
            )
    return "\n".join(lines) + "\n"


def report_table_text(reports: list[PerformanceReport]) -> str:
    header = f"{'model':<20}{'horizon':<10}{'return':>10}{'Sortino':>10}{'Sharpe':>10}{'max DD':>10}"
    lines = [header, "-" * len(header)]
    for rep in reports:
        rows = [("full", rep.full)] + sorted(rep.horizons.items())
        for label, ms in rows:
            lines.append(
                f"{rep.model:<20}{label:<10}{_fmt_metric(ms.annualized_return):>10}"
                f"{_fmt_metric(ms.sortino):>10}{_fmt_metric(ms.sharpe):>10}"
                f"{_fmt_metric(ms.max_dd):>10}"
            )
    return "\n".join(lines) + "\n"


def curves_csv(reports: list[PerformanceReport]) -> str:
    """Wide CSV of stitched out-of-sample curves: date, then one value column
    per model. All stitched curves share the same date axis."""
    with_curves = [r for r in reports if r.curve is not None]
    if not with_curves:
        raise DataError("no curves to export")
    base = with_curves[0].curve.dates
    for rep in with_curves[1:]:
        if not np.array_equal(rep.curve.dates, base):
            raise DataError("model curves have mismatched date axes")
    lines = ["date," + ",".join(r.model for r in with_curves)]
    for i, day in enumerate(base):
        lines.append(str(day) + "," + ",".join(repr(float(r.curve.values[i]))
                                               for r in with_curves))
    return "\n".join(lines) + "\n"


def weights_csv(report: PerformanceReport) -> str:
    """Leverage-scaled weight path of one model plus the leverage column."""
    if report.curve is None:
        raise DataError("report has no curve attached")
    curve = report.curve
    m = curve.weights.shape[1]
    lines = ["date," + ",".join(f"w{i + 1}" for i in range(m)) + ",leverage"]
    for i in range(len(curve.weights)):
        scaled = curve.leverage[i] * curve.weights[i]
        lines.append(str(curve.dates[i]) + "," +
                     ",".join(repr(float(x)) for x in scaled) + "," +
                     repr(float(curve.leverage[i])))
    return "\n".join(lines) + "\n"
