"""Long-only portfolio construction on the simplex {w : w >= 0, sum w = 1}.

Five programs over window moments (mu, Sigma, C, sigma):

* min-risk with a return floor     min w'Sw   s.t. mu'w >= r_min
* max-return with a risk cap       max mu'w   s.t. w'Sw <= sigma_max^2
* minimum variance                 min w'Sw
* maximum diversification          max (w'sigma) / sqrt(w'Sw)
* maximum decorrelation            min w'Cw
* risk parity                      min 1/2 w'Sw - (1/l) sum ln w_i, renormalized

The first five run on a shared projected-gradient descent with backtracking
line search and multi-start; the two inequality-constrained programs fold
their constraint in through its Lagrange multiplier, found by bisection over
smooth inner solves, terminating once the constraint holds to 1e-8. Risk
parity minimizes its barrier objective over the positive orthant by cyclic
coordinate descent (each coordinate has a closed-form positive root), then
renormalizes; the renormalized point carries equal risk contributions
w_i (Sw)_i.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, InfeasibleError, NumericError
from .risk_models import CovarianceStats

_SUM_TOL = 1e-8


@dataclass(frozen=True)
class Weights:
    """Allocation fractions on the simplex: 0 <= w_i <= 1, sum w = 1."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        object.__setattr__(self, "w", w)
        if w.ndim != 1 or w.size < 1:
            raise DataError("weights must be a non-empty vector")
        if not np.all(np.isfinite(w)):
            raise DataError("weights contain non-finite entries")
        if np.any(w < -_SUM_TOL) or np.any(w > 1.0 + _SUM_TOL):
            raise DataError("weights outside [0, 1]")
        if abs(float(w.sum()) - 1.0) > _SUM_TOL:
            raise DataError(f"weights sum to {w.sum():.12f}, not 1")


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 3000
    step_size: float = 1.0
    tolerance: float = 1e-9
    restarts: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise DataError("max_iters must be >= 1")
        if self.tolerance <= 0:
            raise DataError("tolerance must be > 0")
        if self.step_size <= 0:
            raise DataError("step_size must be > 0")
        if self.restarts < 1:
            raise DataError("restarts must be >= 1")


@dataclass(frozen=True)
class SolveReport:
    weights: Weights
    objective_value: float
    iterations: int
    converged: bool
    active_constraints: tuple[str, ...] = field(default_factory=tuple)
    non_unique: bool = False


def project_to_simplex(v: np.ndarray) -> Weights:
    """Euclidean projection onto the simplex (sort-and-threshold)."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size < 1:
        raise DataError("projection input must be a non-empty vector")
    if not np.all(np.isfinite(v)):
        raise DataError("projection input has non-finite entries")
    w = _project(v)
    return Weights(w)


def _project(v: np.ndarray) -> np.ndarray:
    if v.size == 1:
        return np.array([1.0])
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    cond = u - css / idx > 0
    rho = int(np.nonzero(cond)[0][-1])
    tau = css[rho] / (rho + 1)
    return np.maximum(v - tau, 0.0)


def _starts(l: int, cfg: SolverConfig, extra: list[np.ndarray] | None = None) -> list[np.ndarray]:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, l]))
    pts = [np.full(l, 1.0 / l)]
    if extra:
        pts.extend(np.asarray(p, dtype=float) for p in extra)
    while len(pts) < cfg.restarts:
        pts.append(rng.dirichlet(np.ones(l)))
    return pts[: max(cfg.restarts, len(pts))]


def _pg_descend(fun, grad, start: np.ndarray, cfg: SolverConfig):
    """Projected gradient descent with Armijo backtracking from one start.

    Returns (w, f(w), iterations, converged); converged means the projected
    gradient mapping norm fell below cfg.tolerance.
    """
    w = _project(np.asarray(start, dtype=float))
    fw = fun(w)
    step = cfg.step_size
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        g = grad(w)
        gnorm = float(np.linalg.norm(g))
        s = step
        accepted = False
        while s > 1e-18:
            cand = _project(w - s * g)
            d = cand - w
            dist2 = float(d @ d)
            if dist2 == 0.0:
                break
            fc = fun(cand)
            if fc <= fw - 1e-4 * dist2 / s:
                accepted = True
                break
            s *= 0.5
        if not accepted:
            # no descent step exists at resolvable step sizes: stationary
            converged = True
            break
        mapping = np.sqrt(dist2) / s
        w, fw = cand, fc
        step = min(s * 2.0, 1e6)
        if mapping <= cfg.tolerance * max(1.0, gnorm):
            converged = True
            break
    return w, fw, it, converged


def _pg_multistart(fun, grad, l: int, cfg: SolverConfig, extra_starts=None):
    """Run the descent from several starts; return the best endpoint plus a
    non-uniqueness flag (endpoints far apart at numerically equal objectives)."""
    endpoints = []
    total_iters = 0
    any_converged = False
    for start in _starts(l, cfg, extra_starts):
        w, fw, iters, conv = _pg_descend(fun, grad, start, cfg)
        endpoints.append((fw, w, conv))
        total_iters += iters
        any_converged = any_converged or conv
    best_f, best_w, best_conv = min(endpoints, key=lambda e: e[0])
    non_unique = any(
        abs(fw - best_f) < 1e-8 and np.max(np.abs(w - best_w)) > 0.01
        for fw, w, _ in endpoints
    )
    return best_w, best_f, total_iters, best_conv, non_unique


def _finish(w: np.ndarray, objective: float, iterations: int, converged: bool,
            active: tuple[str, ...] = (), non_unique: bool = False) -> SolveReport:
    w = _project(w)  # enforce simplex feasibility exactly, never hope for it
    active = active + tuple(f"w[{i}]=0" for i in np.nonzero(w <= 1e-12)[0])
    return SolveReport(Weights(w), float(objective), iterations, converged, active, non_unique)


def _min_variance_arr(sigma: np.ndarray, cfg: SolverConfig):
    def fun(w):
        return float(w @ sigma @ w)

    def grad(w):
        return 2.0 * (sigma @ w)

    return _pg_multistart(fun, grad, sigma.shape[0], cfg)


def solve_min_variance(stats: CovarianceStats, cfg: SolverConfig = SolverConfig()) -> SolveReport:
    """Minimize portfolio variance w'Sw on the simplex."""
    w, fw, iters, conv, nu = _min_variance_arr(stats.sigma_mat, cfg)
    return _finish(w, fw, iters, conv, non_unique=nu)


def solve_max_decorrelation(stats: CovarianceStats, cfg: SolverConfig = SolverConfig()) -> SolveReport:
    """Minimize w'Cw (C the correlation matrix) on the simplex."""
    corr = stats.corr

    def fun(w):
        return float(w @ corr @ w)

    def grad(w):
        return 2.0 * (corr @ w)

    w, fw, iters, conv, nu = _pg_multistart(fun, grad, stats.num_assets, cfg)
    return _finish(w, fw, iters, conv, non_unique=nu)


def solve_max_diversification(stats: CovarianceStats, cfg: SolverConfig = SolverConfig()) -> SolveReport:
    """Maximize the diversification ratio (w'sigma) / sqrt(w'Sw)."""
    sigma = stats.sigma_mat
    vols = stats.vols
    # below this, w'Sw is float noise around zero for this matrix scale
    floor = 1e-12 * float(np.max(np.diag(sigma)))

    def fun(w):
        quad = float(w @ sigma @ w)
        if quad <= floor:
            raise NumericError("degenerate risk: portfolio volatility is zero")
        return -float(vols @ w) / np.sqrt(quad)

    def grad(w):
        quad = float(w @ sigma @ w)
        if quad <= floor:
            raise NumericError("degenerate risk: portfolio volatility is zero")
        b = np.sqrt(quad)
        a = float(vols @ w)
        return -vols / b + a * (sigma @ w) / b ** 3

    w, fw, iters, conv, nu = _pg_multistart(fun, grad, stats.num_assets, cfg)
    return _finish(w, -fw, iters, conv, non_unique=nu)


def _quadratic_inner(sigma: np.ndarray, linear: np.ndarray, start: np.ndarray,
                     cfg: SolverConfig):
    """Minimize w'Sw + linear'w on the simplex from a warm start (convex, so
    one descent run reaches the global optimum)."""

    def fun(w):
        return float(w @ sigma @ w) + float(linear @ w)

    def grad(w):
        return 2.0 * (sigma @ w) + linear

    return _pg_descend(fun, grad, start, cfg)


def solve_markowitz_min_risk(stats: CovarianceStats, r_min: float,
                             cfg: SolverConfig = SolverConfig()) -> SolveReport:
    """Minimize w'Sw subject to mu'w >= r_min on the simplex.

    The return floor enters through its Lagrangian: bisection over the
    multiplier lam of min w'Sw - lam * mu'w until the floor is met to 1e-8.
    Infeasible targets (r_min above every asset mean) are rejected, never
    clamped.
    """
    mu, sigma = stats.mu, stats.sigma_mat
    if r_min > float(np.max(mu)) + 1e-12:
        raise InfeasibleError(
            f"infeasible return target: r_min={r_min} exceeds max mean {np.max(mu):.6g}"
        )
    if r_min >= float(np.max(mu)) - 1e-12:
        # only the best-mean face attains the floor: min variance over it
        face = np.nonzero(mu >= r_min - 1e-12)[0]
        w_face, _, iters, conv, nu = _min_variance_arr(sigma[np.ix_(face, face)], cfg)
        w = np.zeros(stats.num_assets)
        w[face] = w_face
        return _finish(w, float(w @ sigma @ w), iters, conv, ("return_target",), nu)
    minvar = solve_min_variance(stats, cfg)
    w = minvar.weights.w
    iters_total = minvar.iterations
    if float(mu @ w) >= r_min - 1e-8:
        active = ("return_target",) if abs(float(mu @ w) - r_min) <= 1e-6 else ()
        return _finish(w, float(w @ sigma @ w), iters_total, minvar.converged, active,
                       minvar.non_unique)
    lam_lo = 0.0
    lam_hi = 1.0
    conv = True
    for _ in range(80):
        w, _, iters, c = _quadratic_inner(sigma, -lam_hi * mu, w, cfg)
        iters_total += iters
        conv = conv and c
        if float(mu @ w) >= r_min - 1e-8:
            break
        lam_lo = lam_hi
        lam_hi *= 4.0
    else:
        raise NumericError("return-floor bisection failed to bracket the multiplier")
    w_feas = w
    for _ in range(60):
        lam = 0.5 * (lam_lo + lam_hi)
        w, _, iters, c = _quadratic_inner(sigma, -lam * mu, w, cfg)
        iters_total += iters
        conv = conv and c
        if float(mu @ w) >= r_min - 1e-8:
            lam_hi, w_feas = lam, w
        else:
            lam_lo = lam
        if abs(float(mu @ w) - r_min) <= 1e-10:
            w_feas = w
            break
    return _finish(w_feas, float(w_feas @ sigma @ w_feas), iters_total, conv,
                   ("return_target",))


def solve_markowitz_max_return(stats: CovarianceStats, sigma_max: float,
                               cfg: SolverConfig = SolverConfig()) -> SolveReport:
    """Maximize mu'w subject to w'Sw <= sigma_max^2 on the simplex.

    sigma_max is a volatility; the cap applies to portfolio variance
    sigma_max^2. Feasibility is checked against the minimum-variance
    portfolio; the cap enters through its Lagrangian, with bisection over
    lam of min lam * w'Sw - mu'w until the cap binds to 1e-8.
    """
    mu, sigma = stats.mu, stats.sigma_mat
    if sigma_max < 0:
        raise DataError(f"sigma_max must be >= 0, got {sigma_max}")
    cap = sigma_max ** 2
    vertex = np.zeros(stats.num_assets)
    vertex[int(np.argmax(mu))] = 1.0
    if float(vertex @ sigma @ vertex) <= cap + 1e-12:
        # risk cap slack at the best-mean vertex: unconstrained maximum
        return _finish(vertex, float(mu @ vertex), 0, True)
    minvar = solve_min_variance(stats, cfg)
    q_min = minvar.objective_value
    if cap < q_min - 1e-12:
        raise InfeasibleError(
            f"infeasible risk cap: sigma_max^2={cap:.6g} is below the minimum "
            f"attainable variance {q_min:.6g}"
        )
    iters_total = minvar.iterations
    if cap <= q_min + 1e-14:
        return _finish(minvar.weights.w, float(mu @ minvar.weights.w), iters_total,
                       minvar.converged, ("risk_cap",), minvar.non_unique)
    lam_lo = 0.0
    lam_hi = 1.0
    w = minvar.weights.w
    conv = True
    for _ in range(80):
        w, _, iters, c = _quadratic_inner(lam_hi * sigma, -mu, w, cfg)
        iters_total += iters
        conv = conv and c
        if float(w @ sigma @ w) <= cap + 1e-8:
            break
        lam_lo = lam_hi
        lam_hi *= 4.0
    else:
        raise NumericError("risk-cap bisection failed to bracket the multiplier")
    w_feas = w
    for _ in range(60):
        lam = 0.5 * (lam_lo + lam_hi)
        w, _, iters, c = _quadratic_inner(lam * sigma, -mu, w, cfg)
        iters_total += iters
        conv = conv and c
        if float(w @ sigma @ w) <= cap + 1e-8:
            lam_hi, w_feas = lam, w
        else:
            lam_lo = lam
        if abs(float(w @ sigma @ w) - cap) <= 1e-12 * max(cap, 1.0):
            w_feas = w
            break
    return _finish(w_feas, float(mu @ w_feas), iters_total, conv, ("risk_cap",))


def _erc_coordinate_descent(sigma: np.ndarray, max_sweeps: int = 2000) -> tuple[np.ndarray, int]:
    """Minimize 1/2 x'Sx - (1/l) sum ln x_i over x > 0 by cyclic coordinate
    descent; each coordinate update is the positive root of a quadratic."""
    l = sigma.shape[0]
    x = 1.0 / np.sqrt(np.diag(sigma) * l)
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        max_rel = 0.0
        for i in range(l):
            cross = float(sigma[i] @ x) - sigma[i, i] * x[i]
            new = (-cross + np.sqrt(cross * cross + 4.0 * sigma[i, i] / l)) / (2.0 * sigma[i, i])
            max_rel = max(max_rel, abs(new - x[i]) / max(x[i], 1e-300))
            x[i] = new
        if max_rel < 1e-14:
            break
    return x, sweeps


def risk_contributions(w: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Per-asset contribution to portfolio variance: w_i * (S w)_i."""
    w = np.asarray(w, dtype=float)
    return w * (sigma @ w)


def solve_risk_parity(stats: CovarianceStats, cfg: SolverConfig = SolverConfig()) -> SolveReport:
    """Equal-risk-contribution portfolio via the log-barrier program.

    Minimizes 1/2 x'Sx - (1/l) sum ln x_i over x > 0, then renormalizes to
    the simplex; at the renormalized point the contributions w_i (Sw)_i are
    equal. Reported objective is the barrier objective reduced over positive
    rescalings: 1/2 + 1/2 ln(w'Sw) - (1/l) sum ln w_i.
    """
    sigma = stats.sigma_mat
    eig = np.linalg.eigvalsh(sigma)
    if eig[0] <= 1e-10 * max(eig[-1], 1e-300):
        raise DataError(
            "singular covariance matrix: apply shrink_covariance before solving risk parity"
        )
    x, sweeps = _erc_coordinate_descent(sigma, max_sweeps=cfg.max_iters)
    w = x / x.sum()
    contrib = risk_contributions(w, sigma)
    spread = float(contrib.max() / contrib.min()) - 1.0
    converged = spread <= 1e-6
    objective = 0.5 + 0.5 * np.log(float(w @ sigma @ w)) - float(np.log(w).sum()) / len(w)
    return _finish(w, objective, sweeps, converged)


_METHODS = {
    "markowitz": solve_markowitz_min_risk,
    "maxreturn": solve_markowitz_max_return,
    "minvariance": solve_min_variance,
    "maxdiversification": solve_max_diversification,
    "maxdecorrelation": solve_max_decorrelation,
    "riskparity": solve_risk_parity,
}


def method_names() -> tuple[str, ...]:
    return tuple(_METHODS)


def solve(method: str, stats: CovarianceStats, cfg: SolverConfig = SolverConfig(),
          r_min: float | None = None, sigma_max: float | None = None) -> SolveReport:
    """Dispatch over the named programs. markowitz requires r_min and
    maxreturn requires sigma_max."""
    if method not in _METHODS:
        raise DataError(f"unknown method {method!r}; valid: {', '.join(_METHODS)}")
    if method == "markowitz":
        if r_min is None:
            raise DataError("method 'markowitz' requires r_min")
        return solve_markowitz_min_risk(stats, r_min, cfg)
    if method == "maxreturn":
        if sigma_max is None:
            raise DataError("method 'maxreturn' requires sigma_max")
        return solve_markowitz_max_return(stats, sigma_max, cfg)
    return _METHODS[method](stats, cfg)
