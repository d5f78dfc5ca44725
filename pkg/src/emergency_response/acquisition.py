"""Confidence-bound acquisition with a decaying exploration weight.

Pieces:

* :class:`BetaSchedule` / :func:`beta_at` -- exploration weight that starts
  at ``beta0`` and decays to ``beta_k`` by step ``k_step``, then stays there.
* :class:`PenaltyConfig` / :func:`penalize` -- age discount
  ``gain * ln(age) + offset`` added to an observed rate.
* :func:`acquisition_value` -- ``mu +/- sqrt(beta * var)``.
* :func:`optimize_acquisition` -- deterministic box-constrained search:
  uniform grid scan, then pattern search from the best few grid points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import as_point
from .gp import GaussianProcess

MINIMIZE = "minimize"
MAXIMIZE = "maximize"


def _check_sense(sense: str) -> str:
    sense = sense.lower()
    if sense not in (MINIMIZE, MAXIMIZE):
        raise ValueError(f"sense must be 'minimize' or 'maximize', got {sense!r}")
    return sense


@dataclass(frozen=True)
class BetaSchedule:
    """Non-increasing exploration weight over the steps of an episode.

    ``shape="quadratic"`` gives ``beta_k + (beta0 - beta_k) * (1 - (i/k_step)**2)``
    for ``i < k_step``. With the defaults this is ``0.07 - 0.0028 * i**2``.
    """

    beta0: float = 0.07
    beta_k: float = 0.0
    k_step: int = 5
    shape: str = "quadratic"

    def __post_init__(self):
        if self.beta_k < 0:
            raise ValueError(f"beta_k must be nonnegative, got {self.beta_k}")
        if not self.beta0 > self.beta_k:
            raise ValueError(f"beta0 ({self.beta0}) must exceed beta_k ({self.beta_k})")
        if int(self.k_step) != self.k_step or self.k_step < 1:
            raise ValueError(f"k_step must be an integer >= 1, got {self.k_step}")
        if self.shape not in ("quadratic", "linear"):
            raise ValueError(f"shape must be 'quadratic' or 'linear', got {self.shape!r}")


def beta_at(sched: BetaSchedule, i: int) -> float:
    if i < 0:
        raise ValueError(f"step index must be >= 0, got {i}")
    if i >= sched.k_step:
        return float(sched.beta_k)
    frac = i / sched.k_step
    decay = frac * frac if sched.shape == "quadratic" else frac
    return max(sched.beta_k, sched.beta_k + (sched.beta0 - sched.beta_k) * (1.0 - decay))


@dataclass(frozen=True)
class PenaltyConfig:
    """Age penalty ``gain * ln(age) + offset``.

    ``mode="additive"`` adds it to the rate. ``mode="scaled"`` adds it in
    proportion to the rate's magnitude, ``rate + |rate| * penalty``; this is
    an alternative for experiments only.
    """

    gain: float = 6.15
    offset: float = 0.1
    mode: str = "additive"

    def __post_init__(self):
        if self.gain < 0 or self.offset < 0:
            raise ValueError("penalty gain and offset must be nonnegative")
        if self.mode not in ("additive", "scaled"):
            raise ValueError(f"mode must be 'additive' or 'scaled', got {self.mode!r}")

    def amount(self, age: int) -> float:
        return self.gain * math.log(age) + self.offset


def penalize(rate: float, age: int, cfg: PenaltyConfig) -> float:
    if age < 1:
        raise ValueError(f"observation age must be >= 1, got {age}")
    q = cfg.amount(age)
    if cfg.mode == "additive":
        return rate + q
    return rate + abs(rate) * q


@dataclass(frozen=True)
class ActionBounds:
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi) or not lo:
            raise ValueError("lower and upper must be non-empty and of equal length")
        if any(not l < h for l, h in zip(lo, hi)):
            raise ValueError(f"every lower bound must be below its upper bound: {lo} vs {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, dim: int = 2) -> "ActionBounds":
        return cls((0.0,) * dim, (1.0,) * dim)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.lower) + np.asarray(self.upper))

    def contains(self, a) -> bool:
        a = np.asarray(a, dtype=float)
        return bool(np.all(a >= self.lower) and np.all(a <= self.upper))

    def clip(self, a) -> np.ndarray:
        return np.clip(np.asarray(a, dtype=float), self.lower, self.upper)


@dataclass(frozen=True)
class OptBudget:
    grid_per_axis: int = 16
    n_starts: int = 4
    min_step: float = 1e-4
    max_iter: int = 2000


def _acq(model: GaussianProcess, A: np.ndarray, beta: float, sense: str) -> np.ndarray:
    mean, var = model.predict(A, return_var=True)
    bonus = np.sqrt(beta * var)
    return mean + bonus if sense == MAXIMIZE else mean - bonus


def acquisition_value(model: GaussianProcess, a, beta: float, sense: str = MINIMIZE) -> float:
    """Upper (maximize) or lower (minimize) confidence bound at one point."""
    if beta < 0:
        raise ValueError(f"beta must be nonnegative, got {beta}")
    sense = _check_sense(sense)
    a = as_point(a, dim=model.n_features_in_)
    return float(_acq(model, a[None, :], beta, sense)[0])


def _lex_best(values: np.ndarray, points: np.ndarray) -> int:
    """Index of the smallest value; exact ties go to the lexicographically smallest point."""
    best = np.flatnonzero(values == values.min())
    if best.size == 1:
        return int(best[0])
    keys = points[best]
    order = np.lexsort(keys.T[::-1])
    return int(best[order[0]])


def _better(v: float, p: np.ndarray, best_v: float, best_p: np.ndarray) -> bool:
    if v != best_v:
        return v < best_v
    return tuple(p) < tuple(best_p)


def optimize_acquisition(
    model: GaussianProcess,
    beta: float,
    bounds: ActionBounds,
    sense: str = MINIMIZE,
    budget: OptBudget | None = None,
) -> np.ndarray:
    """Best in-bounds point of the acquisition surface.

    A uniform grid of ``grid_per_axis`` points per axis (bounds included) is
    scanned; the ``n_starts`` best grid points seed a compass pattern search
    whose step starts at one grid spacing and halves down to ``min_step``.
    A constant surface returns the box center.
    """
    if beta < 0:
        raise ValueError(f"beta must be nonnegative, got {beta}")
    sense = _check_sense(sense)
    budget = budget or OptBudget()
    if bounds.dim != model.n_features_in_:
        raise ValueError(f"bounds have dimension {bounds.dim}, model expects {model.n_features_in_}")
    lo = np.asarray(bounds.lower)
    hi = np.asarray(bounds.upper)
    sign = 1.0 if sense == MINIMIZE else -1.0

    def objective(A):
        return sign * _acq(model, A, beta, sense)

    axes = [np.linspace(l, h, budget.grid_per_axis) for l, h in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, bounds.dim)
    values = objective(grid)
    if np.ptp(values) == 0.0:
        return bounds.center

    # Stable sort: equal values keep the grid's lexicographic order.
    starts = np.argsort(values, kind="stable")[: budget.n_starts]
    step0 = (hi - lo) / max(budget.grid_per_axis - 1, 1)
    directions = np.concatenate([np.eye(bounds.dim), -np.eye(bounds.dim)])

    best_p, best_v = grid[starts[0]].copy(), float(values[starts[0]])
    for s in starts:
        p, v = grid[s].copy(), float(values[s])
        step = step0.copy()
        for _ in range(budget.max_iter):
            if np.max(step) < budget.min_step:
                break
            cand = np.clip(p + directions * step, lo, hi)
            cv = objective(cand)
            k = _lex_best(cv, cand)
            if _better(float(cv[k]), cand[k], v, p):
                p, v = cand[k].copy(), float(cv[k])
            else:
                step = step * 0.5
        if _better(v, p, best_v, best_p):
            best_p, best_v = p, v
    return best_p
