"""Sequential response generation by minimizing the uncertainty growth rate.

An episode lasts ``n_steps`` steps. At step ``i`` the responder:

1. appends the newest raw error and, for ``i >= 1``, credits the previous
   action with the rate ``smooth(errors)[-1] - smooth(errors)[-2]``;
2. discounts every stored rate ``j`` by its age ``i - j``;
3. fits a zero-mean GP of discounted rate versus action;
4. returns the minimizer of the lower confidence bound, using the
   exploration weight scheduled for step ``i``.

The functional API (:func:`begin_response`, :func:`respond_step`) is what
the simulator harness drives; :class:`ResponseGenerator` wraps it with
``get_params``/``set_params`` so configurations can be cloned and searched.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import as_series
from .acquisition import (
    MINIMIZE,
    ActionBounds,
    BetaSchedule,
    OptBudget,
    PenaltyConfig,
    beta_at,
    optimize_acquisition,
    penalize,
)
from .exceptions import EpisodeCompleteError, InsufficientDataError
from .gp import GaussianProcess, KernelSpec


def reconstruction_error(observed, reconstructed) -> float:
    """Mean squared difference between two flat intensity arrays."""
    a = np.asarray(observed, dtype=float).reshape(-1)
    b = np.asarray(reconstructed, dtype=float).reshape(-1)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    if a.size == 0:
        raise ValueError("arrays must be non-empty")
    d = a - b
    return float(np.mean(d * d))


def smooth(errors, w: int = 5) -> np.ndarray:
    """Causal trailing mean; the first ``w - 1`` outputs average what exists."""
    e = as_series(errors, name="errors", min_len=1)
    if w < 1:
        raise ValueError(f"window must be >= 1, got {w}")
    c = np.concatenate([[0.0], np.cumsum(e)])
    k = np.arange(1, e.size + 1)
    start = np.maximum(k - w, 0)
    return (c[k] - c[start]) / (k - start)


def error_rate(smoothed) -> float:
    s = np.asarray(smoothed, dtype=float).reshape(-1)
    if s.size < 2:
        raise InsufficientDataError(f"need at least 2 smoothed samples for a rate, got {s.size}")
    return float(s[-1] - s[-2])


@dataclass(frozen=True)
class ResponderConfig:
    n_steps: int = 30
    smoothing_window: int = 5
    bounds: ActionBounds = field(default_factory=ActionBounds.unit)
    kernel: KernelSpec = field(default_factory=KernelSpec)
    noise: float = 0.01
    schedule: BetaSchedule = field(default_factory=BetaSchedule)
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    budget: OptBudget = field(default_factory=OptBudget)
    # Ablation only: draw the first action uniformly instead of the box center.
    random_first_action: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.smoothing_window < 2:
            raise ValueError(f"smoothing_window must be >= 2, got {self.smoothing_window}")


@dataclass
class ResponderState:
    """Mutable state of one response episode.

    ``raw_errors`` holds the pre-trigger history followed by every error seen
    since the episode began; ``n_seed`` is the length of the pre-trigger part.
    """

    config: ResponderConfig
    raw_errors: list[float]
    n_seed: int
    step: int = 0
    n_at_start: int = 0
    actions: list[np.ndarray] = field(default_factory=list)
    rates: list[float] = field(default_factory=list)
    trace: list[dict] = field(default_factory=list)


def begin_response(cfg: ResponderConfig, recent_errors) -> ResponderState:
    """Start an episode seeded with the errors observed before the trigger."""
    e = as_series(recent_errors, name="recent_errors")
    if e.size < cfg.smoothing_window:
        raise InsufficientDataError(
            f"need at least {cfg.smoothing_window} pre-trigger errors, got {e.size}"
        )
    return ResponderState(config=cfg, raw_errors=[float(v) for v in e], n_seed=int(e.size))


def is_complete(state: ResponderState) -> bool:
    return state.step >= state.config.n_steps


def penalized_targets(state: ResponderState) -> np.ndarray:
    """Stored rates discounted by age ``step - j``."""
    i = state.step
    return np.array([penalize(r, i - j, state.config.penalty) for j, r in enumerate(state.rates)])


def _digest(values: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(values, dtype=float).tobytes()).hexdigest()[:12]


def respond_step(state: ResponderState, new_error: float | None) -> tuple[np.ndarray, ResponderState]:
    """Run one optimization cycle and return the next action.

    ``new_error`` is the error observed after the previous action was
    applied. At step 0 it may be ``None`` when the trigger-time error is
    already the last entry of the seed history.
    """
    if is_complete(state):
        raise EpisodeCompleteError(f"episode finished after {state.config.n_steps} steps")
    cfg = state.config
    i = state.step
    if new_error is None:
        if i != 0:
            raise ValueError("new_error may only be omitted at step 0")
    else:
        new_error = float(new_error)
        if not np.isfinite(new_error):
            raise ValueError("new_error must be finite")
        state.raw_errors.append(new_error)

    if i == 0:
        state.n_at_start = len(state.raw_errors)
    smoothed = smooth(state.raw_errors, cfg.smoothing_window)
    if i > 0:
        state.rates.append(error_rate(smoothed))

    targets = penalized_targets(state)
    X = np.asarray(state.actions, dtype=float).reshape(-1, cfg.bounds.dim)
    model = GaussianProcess(kernel=cfg.kernel, noise=cfg.noise, prior_mean=0.0).fit(X, targets)
    beta = beta_at(cfg.schedule, i)
    if i == 0 and cfg.random_first_action:
        rng = np.random.default_rng([cfg.seed, 0])
        action = rng.uniform(cfg.bounds.lower, cfg.bounds.upper)
    else:
        action = optimize_acquisition(model, beta, cfg.bounds, MINIMIZE, cfg.budget)

    state.trace.append(
        {
            "step": i,
            "raw_error": state.raw_errors[-1],
            "smoothed_error": float(smoothed[-1]),
            "error_rate": state.rates[-1] if state.rates else float("nan"),
            "targets_digest": _digest(targets),
            "beta": beta,
            **{f"a{k + 1}": float(v) for k, v in enumerate(action)},
        }
    )
    state.actions.append(np.asarray(action, dtype=float))
    state.step = i + 1
    return action, state


def replay_rates(state: ResponderState) -> list[float]:
    """Recompute every credited rate from ``raw_errors`` alone."""
    w = state.config.smoothing_window
    out = []
    for j in range(1, len(state.rates) + 1):
        s = smooth(state.raw_errors[: state.n_at_start + j], w)
        out.append(error_rate(s))
    return out


TRACE_COLUMNS = ("step", "raw_error", "smoothed_error", "error_rate", "targets_digest", "beta")


def write_trace_csv(state: ResponderState, path) -> None:
    dim = state.config.bounds.dim
    cols = list(TRACE_COLUMNS) + [f"a{k + 1}" for k in range(dim)]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        for row in state.trace:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


class ResponseGenerator(BaseEstimator):
    """Estimator-style front end to a response episode.

    Call :meth:`start` with the pre-trigger errors, then :meth:`step` with
    each newly observed error; every call returns the next action.
    """

    def __init__(
        self,
        n_steps=30,
        smoothing_window=5,
        length_scale=0.2,
        output_scale=0.01,
        kernel_kind="matern52",
        noise=0.01,
        beta0=0.07,
        beta_k=0.0,
        k_step=5,
        penalty_gain=6.15,
        penalty_offset=0.1,
        action_dim=2,
    ):
        self.n_steps = n_steps
        self.smoothing_window = smoothing_window
        self.length_scale = length_scale
        self.output_scale = output_scale
        self.kernel_kind = kernel_kind
        self.noise = noise
        self.beta0 = beta0
        self.beta_k = beta_k
        self.k_step = k_step
        self.penalty_gain = penalty_gain
        self.penalty_offset = penalty_offset
        self.action_dim = action_dim

    def to_config(self) -> ResponderConfig:
        return ResponderConfig(
            n_steps=self.n_steps,
            smoothing_window=self.smoothing_window,
            bounds=ActionBounds.unit(self.action_dim),
            kernel=KernelSpec(self.kernel_kind, self.length_scale, self.output_scale),
            noise=self.noise,
            schedule=BetaSchedule(self.beta0, self.beta_k, self.k_step),
            penalty=PenaltyConfig(self.penalty_gain, self.penalty_offset),
        )

    def start(self, recent_errors, first_error=None):
        self.state_ = begin_response(self.to_config(), recent_errors)
        action, _ = respond_step(self.state_, first_error)
        return action

    def step(self, error):
        action, _ = respond_step(self.state_, error)
        return action

    @property
    def complete_(self) -> bool:
        return is_complete(self.state_)
