"""Episodic policy-gradient training over a historical window.

Each iteration replays the window once: the policy acts on (noise-perturbed)
observations, a random action replaces the policy's with probability
1 - policy_prob, and the terminal reward is the net performance
P_T / P_0 - 1 with a one-step action lag (the action decided at t earns the
returns realized at t + 1). The gradient of the terminal reward (minus the
L2 penalty) flows by exact backpropagation through every policy-chosen step;
random-action steps contribute constant factors. Parameters ascend with Adam;
training stops early when the best seen reward stops improving.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .errors import DataError, NumericError
from .features import (ContextFrame, LagSet, Observation, build_observation,
                       min_valid_index)
from .market_data import ReturnFrame, VolFrame
from .policy import (Action, NetworkArch, PolicyParameters, forward,
                     forward_tape, init_network, l2_penalty_tape)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    noise_std: float = 0.002
    max_iterations: int = 500
    early_stop_patience: int = 50
    policy_prob: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise DataError("learning_rate must be > 0")
        if self.noise_std < 0:
            raise DataError("noise_std must be >= 0")
        if not 0.0 <= self.policy_prob <= 1.0:
            raise DataError("policy_prob must lie in [0, 1]")
        if self.max_iterations < 1:
            raise DataError("max_iterations must be >= 1")
        if self.early_stop_patience < 1:
            raise DataError("early_stop_patience must be >= 1")


@dataclass(frozen=True)
class TradingWindow:
    """Pre-built decision points: observation at each step plus the asset
    returns realized one step later."""

    observations: tuple[Observation, ...]
    next_returns: np.ndarray
    dates: np.ndarray

    def __len__(self) -> int:
        return len(self.observations)


def make_window(rf: ReturnFrame, vf: VolFrame, ctx: ContextFrame, lags: LagSet,
                ctx_lags: LagSet, t_start: int, t_end: int) -> TradingWindow:
    """Decision steps t in [t_start, t_end); each needs full lag history and
    a realized return at t + 1, so t_end may be at most len(rf) - 1."""
    lo = min_valid_index(vf, rf, lags, ctx_lags)
    if t_start < lo:
        raise DataError(f"window start {t_start} precedes first valid index {lo}")
    if t_end > len(rf.dates) - 1:
        raise DataError(f"window end {t_end} leaves no realized next-step return")
    if t_end <= t_start:
        raise DataError("window too short: no decision steps")
    obs = tuple(build_observation(rf, vf, ctx, lags, ctx_lags, t)
                for t in range(t_start, t_end))
    nxt = rf.returns[t_start + 1:t_end + 1].copy()
    return TradingWindow(obs, nxt, rf.dates[t_start:t_end].copy())


@dataclass(frozen=True)
class EpisodeRecord:
    obs: Observation
    action: Action
    obs_next: Observation | None
    next_returns: np.ndarray
    is_policy: bool


@dataclass
class EpisodeBuffer:
    """One replayed pass over a window; cleared and rebuilt every iteration."""

    records: list[EpisodeRecord] = field(default_factory=list)
    terminal_reward: float = 0.0


def _perturb(obs: Observation, noise_std: float, rng: np.random.Generator) -> Observation:
    if noise_std == 0.0:
        return obs
    asset = obs.asset_tensor + rng.normal(0.0, noise_std, obs.asset_tensor.shape)
    # volatility channel stays a non-negative quantity
    asset[1] = np.maximum(asset[1], 0.0)
    ctx = obs.context_matrix + rng.normal(0.0, noise_std, obs.context_matrix.shape)
    return Observation(asset, ctx, obs.timestamp)


def _random_action(m: int, max_leverage: float, rng: np.random.Generator) -> Action:
    return Action(rng.dirichlet(np.ones(m)), float(rng.uniform(0.0, max_leverage)))


def run_episode(params: PolicyParameters, window: TradingWindow, noise_std: float,
                policy_prob: float, rng: np.random.Generator) -> EpisodeBuffer:
    """Replay the window once, storing (observation used, action, noisy next
    observation) per step and the terminal net performance.

    Noise lands on the stored/used observation copies only; the reward always
    uses the true realized returns.
    """
    if len(window) < 1:
        raise DataError("window too short for an episode")
    buffer = EpisodeBuffer()
    gross = 1.0
    obs_used = window.observations[0]
    for i in range(len(window)):
        use_policy = policy_prob >= 1.0 or rng.uniform() < policy_prob
        if use_policy:
            action = forward(params, obs_used)
        else:
            action = _random_action(params.m, params.arch.max_leverage, rng)
        step_ret = action.leverage * float(action.weights @ window.next_returns[i])
        gross *= 1.0 + step_ret
        obs_next = None
        if i + 1 < len(window):
            obs_next = _perturb(window.observations[i + 1], noise_std, rng)
        buffer.records.append(EpisodeRecord(obs_used, action, obs_next,
                                            window.next_returns[i], use_policy))
        if obs_next is not None:
            obs_used = obs_next
    buffer.terminal_reward = gross - 1.0
    return buffer


def buffer_objective(tape: Tape, params: PolicyParameters, buffer: EpisodeBuffer) -> Tensor:
    """Differentiable terminal reward minus L2 penalty, rebuilt from a stored
    episode. Policy steps re-run the network on the stored observations;
    random-action steps enter as constant growth factors."""
    gross = None
    for rec in buffer.records:
        if rec.is_policy:
            weights, lev = forward_tape(tape, params, rec.obs)
            step = ad.mul(tape, lev, ad.dot_const(tape, weights, rec.next_returns))
            factor = ad.add_const(tape, step, 1.0)
        else:
            const = 1.0 + rec.action.leverage * float(rec.action.weights @ rec.next_returns)
            factor = None if const == 1.0 else const
        if factor is None:
            continue
        if gross is None:
            gross = factor if isinstance(factor, Tensor) else Tensor(np.array(factor))
        elif isinstance(factor, Tensor):
            gross = ad.mul(tape, gross, factor)
        else:
            gross = ad.scale(tape, gross, factor)
    if gross is None:
        gross = Tensor(np.array(1.0))
    reward = ad.add_const(tape, gross, -1.0)
    return ad.sub(tape, reward, l2_penalty_tape(tape, params))


def episode_objective(params: PolicyParameters, window: TradingWindow,
                      tape: Tape | None = None) -> Tensor:
    """Deterministic objective of the pure policy over a window (no noise,
    no random actions): net performance minus L2. Pass a fresh Tape to make
    the result differentiable via autodiff.backward."""
    tape = tape if tape is not None else Tape()
    rng = np.random.default_rng(0)  # unused: all randomness is off
    buffer = run_episode(params, window, 0.0, 1.0, rng)
    return buffer_objective(tape, params, buffer)


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0


def init_adam(params: PolicyParameters) -> AdamState:
    return AdamState({n: np.zeros_like(t.data) for n, t in params.tensors.items()},
                     {n: np.zeros_like(t.data) for n, t in params.tensors.items()})


def adam_step(state: AdamState, params: PolicyParameters, grads: dict[str, np.ndarray],
              learning_rate: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    """Bias-corrected Adam update in the ascent direction (theta += step)."""
    state.step += 1
    t = state.step
    for name, tensor in params.tensors.items():
        g = grads.get(name)
        if g is None:
            continue
        state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * g * g
        m_hat = state.m[name] / (1.0 - beta1 ** t)
        v_hat = state.v[name] / (1.0 - beta2 ** t)
        tensor.data = tensor.data + learning_rate * m_hat / (np.sqrt(v_hat) + eps)
    return state


@dataclass(frozen=True)
class IterationLog:
    iteration: int
    objective: float
    best_objective: float
    gradient_norm: float


@dataclass
class TrainedPolicy:
    params: PolicyParameters
    log: list[IterationLog]
    best_objective: float
    best_iteration: int


def training_log_csv(log: list[IterationLog]) -> str:
    lines = ["iteration,objective,best_objective,gradient_norm"]
    for row in log:
        lines.append(f"{row.iteration},{row.objective!r},{row.best_objective!r},"
                     f"{row.gradient_norm!r}")
    return "\n".join(lines) + "\n"


def train(window: TradingWindow, arch: NetworkArch, cfg: TrainConfig) -> TrainedPolicy:
    """Iterate episodes with Adam ascent on the terminal reward.

    Tracks the best reward seen; stops after early_stop_patience iterations
    without improvement and returns the best-seen parameters, not the last.
    """
    first = window.observations[0]
    m, lags = first.asset_tensor.shape[1], first.asset_tensor.shape[2]
    ctx_series, ctx_lags = first.context_matrix.shape
    params = init_network(arch, m, lags, ctx_series, ctx_lags, seed=cfg.seed)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    adam = init_adam(params)
    log: list[IterationLog] = []
    best = -np.inf
    best_iter = 0
    best_snap = params.snapshot()
    for iteration in range(1, cfg.max_iterations + 1):
        buffer = run_episode(params, window, cfg.noise_std, cfg.policy_prob, rng)
        reward = buffer.terminal_reward
        if not np.isfinite(reward):
            raise NumericError(
                f"non-finite episode reward at iteration {iteration}; "
                "lower the learning rate or shorten the window"
            )
        if reward > best:
            best = reward
            best_iter = iteration
            best_snap = params.snapshot()
        params.zero_grads()
        tape = Tape()
        objective = buffer_objective(tape, params, buffer)
        ad.backward(tape, objective)
        grads = {n: t.grad for n, t in params.tensors.items() if t.grad is not None}
        norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
        if not np.isfinite(norm):
            raise NumericError(f"non-finite gradient at iteration {iteration}")
        adam_step(adam, params, grads, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
        log.append(IterationLog(iteration, reward, best, norm))
        if iteration - best_iter >= cfg.early_stop_patience:
            break
    result = copy.deepcopy(params)
    result.restore(best_snap)
    return TrainedPolicy(result, log, best, best_iter)
