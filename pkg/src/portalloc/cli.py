"""Command-line interface.

Subcommands: ingest, synth, allocate, train, backtest, compare, plot.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

Configuration is a flat ``key = value`` text file (see README for the key
list); command-line flags override file values. Every run writes a
``manifest.txt`` with the effective configuration, seed and versions, which
is sufficient to reproduce the outputs byte for byte.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, fields, replace

import numpy as np

from . import __version__, _kernels
from .allocators import SolverConfig, method_names, solve
from .backtest import (CompareConfig, DataBundle, compare_models, curves_csv,
                       make_schedule, report_table_csv, report_table_text,
                       weights_csv)
from .errors import DataError, NumericError, PortallocError
from .features import LagSet, build_context_series, load_context_csv
from .market_data import (RegimeSpec, SyntheticSpec, atomic_write_text,
                          compute_returns, generate_synthetic, load_price_csv,
                          rolling_volatility, write_price_csv)
from .policy import NetworkArch, load_params, save_params
from .risk_models import estimate_stats
from .trainer import TrainConfig, make_window, train, training_log_csv


class UsageError(PortallocError):
    """Bad invocation: unknown flags, missing required arguments."""


@dataclass
class RunConfig:
    prices: str = ""
    context: str = ""
    outdir: str = "out"
    seed: int = 0
    lags: str = "0,1,2,3,4,20,60"
    ctx_lags: str = ""
    vol_window: int = 20
    asset_conv: str = "5:3,10:3"
    context_conv: str = "3:3"
    hidden: str = ""
    max_leverage: float = 3.0
    l2_coeff: float = 1e-8
    learning_rate: float = 0.01
    noise_std: float = 0.002
    max_iterations: int = 500
    patience: int = 50
    policy_prob: float = 0.9
    solver_max_iters: int = 3000
    solver_tolerance: float = 1e-9
    solver_restarts: int = 5
    est_window: int = 0
    initial_train_end: str = "2006-12-31"
    test_span: int = 252
    rebalance: int = 21
    cost_rate: float = 0.0005
    trad_leverage: float = 3.0
    ew_leverage: float = 1.0
    horizons: str = "2y:504,5y:1260"
    r_min: str = ""
    sigma_max: str = ""
    svg: bool = False
    synth_assets: int = 2
    synth_steps: int = 1000
    regimes: str = "0.0004,0.0002|0.01,0.012|0.3|250"
    models: str = ""
    method: str = ""
    checkpoints: str = ""
    curves: str = ""
    weights: str = ""

    def lag_set(self) -> LagSet:
        return LagSet(tuple(int(x) for x in self.lags.split(",") if x != ""))

    def ctx_lag_set(self) -> LagSet:
        raw = self.ctx_lags if self.ctx_lags else self.lags
        return LagSet(tuple(int(x) for x in raw.split(",") if x != ""))

    def arch(self) -> NetworkArch:
        def conv_pairs(raw: str):
            return tuple(tuple(int(v) for v in item.split(":")) for item in raw.split(",") if item)

        hidden = tuple(int(x) for x in self.hidden.split(",") if x != "")
        return NetworkArch(conv_pairs(self.asset_conv), conv_pairs(self.context_conv),
                           hidden, self.max_leverage, self.l2_coeff)

    def solver_cfg(self) -> SolverConfig:
        return SolverConfig(self.solver_max_iters, 1.0, self.solver_tolerance,
                            self.solver_restarts, self.seed)

    def train_cfg(self) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.noise_std, self.max_iterations,
                           self.patience, self.policy_prob, seed=self.seed)

    def horizon_map(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for item in self.horizons.split(","):
            if not item:
                continue
            label, _, steps = item.partition(":")
            if not steps:
                raise UsageError(f"bad horizon {item!r}; expected label:steps")
            out[label] = int(steps)
        return out

    def compare_cfg(self) -> CompareConfig:
        return CompareConfig(
            cost_rate=self.cost_rate, rebalance=self.rebalance,
            trad_leverage=self.trad_leverage, ew_leverage=self.ew_leverage,
            est_window=self.est_window or None,
            r_min=float(self.r_min) if self.r_min else None,
            sigma_max=float(self.sigma_max) if self.sigma_max else None,
            horizons=self.horizon_map(), seed=self.seed,
        )


def _parse_regimes(raw: str) -> tuple[RegimeSpec, ...]:
    regimes = []
    for chunk in raw.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split("|")
        if len(parts) != 4:
            raise UsageError(f"bad regime {chunk!r}; expected means|vols|corr|duration")
        mean = np.array([float(x) for x in parts[0].split(",")])
        vol = np.array([float(x) for x in parts[1].split(",")])
        regimes.append(RegimeSpec(mean, vol, float(parts[2]), int(parts[3])))
    if not regimes:
        raise UsageError("no regimes given")
    return tuple(regimes)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; the contract is 1
        raise UsageError(message)


_COMMANDS = ("ingest", "synth", "allocate", "train", "backtest", "compare", "plot")


def _build_parser() -> _Parser:
    parser = _Parser(prog="portalloc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="flat key = value config file")
        for f in fields(RunConfig):
            flag = "--" + f.name.replace("_", "-")
            if f.type == "bool" or f.type is bool:
                p.add_argument(flag, action="store_true", default=None)
            else:
                p.add_argument(flag, default=None)
    return parser


def _load_config_file(path: str) -> dict[str, str]:
    if not os.path.exists(path):
        raise DataError(f"config file not found: {path}")
    values: dict[str, str] = {}
    with open(path) as fh:
        for i, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, eq, value = line.partition("=")
            if not eq:
                raise DataError(f"bad config line {i}: {line!r}")
            values[key.strip()] = value.strip()
    return values


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, raw) -> object:
    kind = _FIELD_TYPES[name]
    if isinstance(raw, bool):
        return raw
    text = str(raw)
    if kind in ("int", int):
        return int(text)
    if kind in ("float", float):
        return float(text)
    if kind in ("bool", bool):
        return text.strip().lower() in {"1", "true", "yes"}
    return text


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        for key, value in _load_config_file(args.config).items():
            if key not in _FIELD_TYPES:
                raise DataError(f"unknown config key {key!r}")
            cfg = replace(cfg, **{key: _coerce(key, value)})
    for f in fields(RunConfig):
        raw = getattr(args, f.name, None)
        if raw is not None:
            cfg = replace(cfg, **{f.name: _coerce(f.name, raw)})
    return cfg


def write_manifest(cfg: RunConfig, command: str) -> None:
    lines = [f"command = {command}"]
    for f in sorted(fields(RunConfig), key=lambda f: f.name):
        lines.append(f"{f.name} = {getattr(cfg, f.name)}")
    lines.append(f"version.portalloc = {__version__}")
    lines.append(f"version.numpy = {np.__version__}")
    lines.append(f"kernels = {'numba' if _kernels.USING_NUMBA else 'numpy'}")
    atomic_write_text(os.path.join(cfg.outdir, "manifest.txt"), "\n".join(lines) + "\n")


def _bundle(cfg: RunConfig) -> DataBundle:
    if not cfg.prices:
        raise UsageError("missing --prices")
    pf = load_price_csv(cfg.prices)
    rf = compute_returns(pf)
    vf = rolling_volatility(rf, cfg.vol_window)
    extra = load_context_csv(cfg.context) if cfg.context else None
    ctx = build_context_series(rf, vf, extra)
    return DataBundle(rf, vf, ctx, cfg.lag_set(), cfg.ctx_lag_set())


def _schedule(cfg: RunConfig, bundle: DataBundle):
    return make_schedule(bundle.rf.dates, np.datetime64(cfg.initial_train_end, "D"),
                         cfg.test_span)


def cmd_ingest(cfg: RunConfig) -> int:
    if not cfg.prices:
        raise UsageError("missing --prices")
    frame = load_price_csv(cfg.prices)
    write_price_csv(frame, os.path.join(cfg.outdir, "prices.csv"))
    write_manifest(cfg, "ingest")
    print(f"ingested {len(frame.dates)} rows x {frame.num_assets} assets -> "
          f"{cfg.outdir}/prices.csv")
    return 0


def cmd_synth(cfg: RunConfig) -> int:
    spec = SyntheticSpec(cfg.synth_assets, cfg.synth_steps,
                         _parse_regimes(cfg.regimes), cfg.seed)
    frame = generate_synthetic(spec)
    write_price_csv(frame, os.path.join(cfg.outdir, "prices.csv"))
    write_manifest(cfg, "synth")
    print(f"synthesized {len(frame.dates)} rows x {frame.num_assets} assets -> "
          f"{cfg.outdir}/prices.csv")
    return 0


def cmd_allocate(cfg: RunConfig) -> int:
    if not cfg.method:
        raise UsageError(f"missing --method; valid: {', '.join(method_names())}")
    if cfg.method not in method_names():
        raise UsageError(f"unknown method {cfg.method!r}; valid: {', '.join(method_names())}")
    if cfg.method == "markowitz" and not cfg.r_min:
        raise UsageError("missing --r-min (required by method 'markowitz')")
    if cfg.method == "maxreturn" and not cfg.sigma_max:
        raise UsageError("missing --sigma-max (required by method 'maxreturn')")
    if not cfg.prices:
        raise UsageError("missing --prices")
    rf = compute_returns(load_price_csv(cfg.prices))
    stats = estimate_stats(rf, cfg.est_window or None)
    report = solve(cfg.method, stats, cfg.solver_cfg(),
                   r_min=float(cfg.r_min) if cfg.r_min else None,
                   sigma_max=float(cfg.sigma_max) if cfg.sigma_max else None)
    print(f"method = {cfg.method}")
    for asset, w in zip(rf.assets, report.weights.w):
        print(f"  {asset}: {w:.6f}")
    print(f"objective = {report.objective_value:.10g}")
    print(f"iterations = {report.iterations}, converged = {report.converged}, "
          f"non_unique = {report.non_unique}")
    if report.active_constraints:
        print("active constraints: " + ", ".join(report.active_constraints))
    lines = ["asset,weight"]
    lines += [f"{a},{float(w)!r}" for a, w in zip(rf.assets, report.weights.w)]
    atomic_write_text(os.path.join(cfg.outdir, "weights.csv"), "\n".join(lines) + "\n")
    write_manifest(cfg, "allocate")
    return 0


def _split_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def cmd_train(cfg: RunConfig) -> int:
    bundle = _bundle(cfg)
    schedule = _schedule(cfg, bundle)
    arch = cfg.arch()
    base_train = cfg.train_cfg()
    from .features import min_valid_index

    lo = min_valid_index(bundle.vf, bundle.rf, bundle.lags, bundle.ctx_lags)
    for k, split in enumerate(schedule.splits):
        window = make_window(bundle.rf, bundle.vf, bundle.ctx, bundle.lags,
                             bundle.ctx_lags, lo, split.train_end - 1)
        trained = train(window, arch, replace(base_train, seed=_split_seed(cfg.seed, k)))
        save_params(trained.params, os.path.join(cfg.outdir, f"checkpoint_w{k:02d}.txt"))
        atomic_write_text(os.path.join(cfg.outdir, f"train_log_w{k:02d}.csv"),
                          training_log_csv(trained.log))
        print(f"window {k}: best objective {trained.best_objective:.6f} at "
              f"iteration {trained.best_iteration} ({len(trained.log)} iterations)")
    write_manifest(cfg, "train")
    return 0


def _load_checkpoints(cfg: RunConfig, count: int) -> dict[int, object] | None:
    if not cfg.checkpoints:
        return None
    out = {}
    for k in range(count):
        path = os.path.join(cfg.checkpoints, f"checkpoint_w{k:02d}.txt")
        if not os.path.exists(path):
            raise DataError(f"missing checkpoint for window {k}: {path}")
        out[k] = load_params(path)
    return out


def _run_comparison(cfg: RunConfig, models: list[str], command: str) -> int:
    bundle = _bundle(cfg)
    schedule = _schedule(cfg, bundle)
    trained = _load_checkpoints(cfg, len(schedule.splits)) if "drl" in models else None
    reports = compare_models(models, bundle, schedule, cfg.compare_cfg(),
                             solver_cfg=cfg.solver_cfg(), arch=cfg.arch(),
                             train_cfg=cfg.train_cfg(), trained_params=trained)
    table_text = report_table_text(reports)
    atomic_write_text(os.path.join(cfg.outdir, "metrics.csv"), report_table_csv(reports))
    atomic_write_text(os.path.join(cfg.outdir, "metrics.txt"), table_text)
    atomic_write_text(os.path.join(cfg.outdir, "curves.csv"), curves_csv(reports))
    for rep in reports:
        atomic_write_text(os.path.join(cfg.outdir, f"weights_{rep.model}.csv"),
                          weights_csv(rep))
    if cfg.svg:
        from .viz import line_chart_svg, stacked_area_svg

        series = {r.model: r.curve.values for r in reports}
        atomic_write_text(os.path.join(cfg.outdir, "curves.svg"),
                          line_chart_svg(reports[0].curve.dates, series))
        for rep in reports:
            names = [f"w{i + 1}" for i in range(rep.curve.weights.shape[1])]
            scaled = rep.curve.leverage[:, None] * rep.curve.weights
            atomic_write_text(os.path.join(cfg.outdir, f"weights_{rep.model}.svg"),
                              stacked_area_svg(rep.curve.dates[:-1], names, scaled))
    write_manifest(cfg, command)
    print(table_text, end="")
    return 0


def cmd_backtest(cfg: RunConfig) -> int:
    model = cfg.method or (cfg.models if "," not in cfg.models else "")
    if not model:
        raise UsageError("missing --method (one model to backtest)")
    return _run_comparison(cfg, [model], "backtest")


def cmd_compare(cfg: RunConfig) -> int:
    models = [m for m in cfg.models.split(",") if m]
    if not models:
        raise UsageError("missing --models (comma-separated list)")
    return _run_comparison(cfg, models, "compare")


def cmd_plot(cfg: RunConfig) -> int:
    from .viz import line_chart_svg, stacked_area_svg

    wrote = []
    if cfg.curves:
        dates, names, matrix = _read_wide_csv(cfg.curves)
        series = {name: matrix[:, j] for j, name in enumerate(names)}
        path = os.path.join(cfg.outdir, "curves.svg")
        atomic_write_text(path, line_chart_svg(dates, series))
        wrote.append(path)
    if cfg.weights:
        dates, names, matrix = _read_wide_csv(cfg.weights)
        keep = [j for j, n in enumerate(names) if n != "leverage"]
        path = os.path.join(cfg.outdir, "weights.svg")
        atomic_write_text(path, stacked_area_svg(dates, [names[j] for j in keep],
                                                 matrix[:, keep]))
        wrote.append(path)
    if not wrote:
        raise UsageError("plot needs --curves and/or --weights")
    write_manifest(cfg, "plot")
    for path in wrote:
        print(f"wrote {path}")
    return 0


def _read_wide_csv(path: str):
    import csv

    if not os.path.exists(path):
        raise DataError(f"file not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "date":
        raise DataError(f"expected a date,... header in {path}")
    names = rows[0][1:]
    dates = np.array([np.datetime64(r[0], "D") for r in rows[1:]])
    matrix = np.array([[float(c) for c in r[1:]] for r in rows[1:]])
    return dates, names, matrix


_HANDLERS = {
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "allocate": cmd_allocate,
    "train": cmd_train,
    "backtest": cmd_backtest,
    "compare": cmd_compare,
    "plot": cmd_plot,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve_config(args)
        os.makedirs(cfg.outdir, exist_ok=True)
        return _HANDLERS[args.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
