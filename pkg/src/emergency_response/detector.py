"""Emergency detection from a rolling window of raw errors.

A polynomial (quadratic by default) is least-squares fitted to the last
``window`` errors at abscissae ``1..window`` and evaluated ``horizon`` steps
ahead. The detector fires when the trailing run of extrapolated values
above the threshold is at least ``min_exceed`` long.

The threshold comes from nominal (danger-free) errors, either as an
empirical nearest-rank quantile or as a quantile of a fitted Burr Type III
distribution with CDF ``(1 + z**-c)**-d``, ``z = (x - loc) / scale``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import as_series, check_probability
from .exceptions import DegenerateDataError, InsufficientDataError

MIN_CALIBRATION_SAMPLES = 50


@dataclass(frozen=True)
class DetectorConfig:
    window: int = 15
    horizon: int = 7
    min_exceed: int = 3
    threshold: float = 35.0
    degree: int = 2

    def __post_init__(self):
        if not 1 <= self.min_exceed <= self.horizon:
            raise ValueError(f"need 1 <= min_exceed <= horizon, got {self.min_exceed}, {self.horizon}")
        if self.degree < 0 or self.window <= self.degree + 1:
            raise ValueError(f"window ({self.window}) must exceed degree + 1 ({self.degree + 1})")


@dataclass
class DetectorState:
    """Ring buffer of ``(step, error)`` pairs; at most ``window`` long."""

    window: int = 15
    buffer: deque = field(default=None)
    next_step: int = 0

    def __post_init__(self):
        if self.buffer is None:
            self.buffer = deque(maxlen=self.window)

    @property
    def errors(self) -> np.ndarray:
        return np.array([e for _, e in self.buffer])


@lru_cache(maxsize=32)
def extrapolation_matrix(window: int, horizon: int, degree: int) -> np.ndarray:
    """Linear map from a full window to its ``horizon`` extrapolated values."""
    t = np.arange(1, window + 1, dtype=float)
    t_new = np.arange(window + 1, window + horizon + 1, dtype=float)
    # Centering keeps the Vandermonde system well conditioned.
    mid = 0.5 * (window + 1)
    V = np.vander(t - mid, degree + 1, increasing=True)
    V_new = np.vander(t_new - mid, degree + 1, increasing=True)
    P = V_new @ np.linalg.pinv(V)
    P.setflags(write=False)
    return P


def trailing_exceedances(values, threshold: float) -> int:
    """Length of the run of values above ``threshold`` that ends at the last entry."""
    n = 0
    for v in reversed(np.asarray(values)):
        if v > threshold:
            n += 1
        else:
            break
    return n


def extrapolate(window_errors, cfg: DetectorConfig) -> np.ndarray:
    e = as_series(window_errors, name="window_errors")
    if e.size != cfg.window:
        raise ValueError(f"expected {cfg.window} errors, got {e.size}")
    return extrapolation_matrix(cfg.window, cfg.horizon, cfg.degree) @ e


def push_and_check(state: DetectorState, cfg: DetectorConfig, e: float) -> tuple[bool, np.ndarray]:
    """Append one error; once the buffer is full, extrapolate and test."""
    e = float(e)
    if not math.isfinite(e):
        raise ValueError(f"error must be finite, got {e}")
    if state.buffer.maxlen != cfg.window:
        raise ValueError(f"state window {state.buffer.maxlen} does not match config window {cfg.window}")
    state.buffer.append((state.next_step, e))
    state.next_step += 1
    if len(state.buffer) < cfg.window:
        return False, np.empty(0)
    ext = extrapolate(state.errors, cfg)
    return trailing_exceedances(ext, cfg.threshold) >= cfg.min_exceed, ext


# -- Burr Type III ----------------------------------------------------------


@dataclass(frozen=True)
class BurrParams:
    c: float
    d: float
    loc: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if not (self.c > 0 and self.d > 0 and self.scale > 0):
            raise ValueError(f"Burr III needs c, d, scale > 0; got {self}")


def burr3_cdf(x, p: BurrParams):
    z = (np.asarray(x, dtype=float) - p.loc) / p.scale
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        out = np.where(z > 0, (1.0 + np.power(np.where(z > 0, z, 1.0), -p.c)) ** (-p.d), 0.0)
    return float(out) if out.ndim == 0 else out


def burr3_quantile(p_target: float, p: BurrParams) -> float:
    p_target = check_probability(p_target, "p_target")
    return p.loc + p.scale * (p_target ** (-1.0 / p.d) - 1.0) ** (-1.0 / p.c)


def burr3_logpdf(x, p: BurrParams) -> np.ndarray:
    z = (np.asarray(x, dtype=float) - p.loc) / p.scale
    out = np.full(z.shape, -np.inf)
    pos = z > 0
    lz = np.log(z[pos])
    # log1p(z**-c) computed stably for tiny z
    log1p_zc = np.logaddexp(0.0, -p.c * lz)
    out[pos] = math.log(p.c * p.d / p.scale) - (p.c + 1.0) * lz - (p.d + 1.0) * log1p_zc
    return out


def _start_params(z: np.ndarray) -> tuple[float, float, float]:
    """Log-logistic (d = 1) start matched to the mean and spread of log z."""
    lz = np.log(z)
    sd = float(np.std(lz))
    c = math.pi / (math.sqrt(3.0) * sd) if sd > 0 else 1.0
    return c, 1.0, float(np.exp(np.median(lz)))


def fit_burr3(samples, loc: float | None = None) -> BurrParams:
    """Maximum-likelihood Burr III fit with a pinned location.

    ``loc`` defaults to just below the sample minimum. ``(c, d, scale)`` are
    searched in log space with Nelder-Mead from a log-logistic start.
    """
    x = as_series(samples, name="samples")
    if x.size < MIN_CALIBRATION_SAMPLES:
        raise InsufficientDataError(f"need at least {MIN_CALIBRATION_SAMPLES} samples, got {x.size}")
    lo, hi = float(x.min()), float(x.max())
    if hi - lo <= 0.0:
        raise DegenerateDataError("all samples are equal; cannot fit a distribution")
    if loc is None:
        loc = lo - 1e-6 * (hi - lo)
    elif loc >= lo:
        raise ValueError(f"loc ({loc}) must lie below the sample minimum ({lo})")
    z = x - loc
    c0, d0, s0 = _start_params(z)

    def nll(theta):
        c, d, s = np.exp(theta)
        lz = np.log(z / s)
        ll = np.log(c * d / s) - (c + 1.0) * lz - (d + 1.0) * np.logaddexp(0.0, -c * lz)
        total = -float(np.sum(ll))
        return total if math.isfinite(total) else 1e300

    res = minimize(
        nll,
        np.log([c0, d0, s0]),
        method="Nelder-Mead",
        options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 20000, "maxfev": 40000},
    )
    c, d, s = np.exp(res.x)
    params = BurrParams(float(c), float(d), float(loc), float(s))
    if not np.isfinite(burr3_logpdf(x, params)).all():
        raise DegenerateDataError("fitted Burr III has non-finite likelihood on the samples")
    return params


def empirical_quantile(samples, rho: float) -> float:
    """Nearest-rank quantile: the ``ceil(rho * n)``-th smallest sample."""
    x = np.sort(as_series(samples, name="samples", min_len=1))
    rho = check_probability(rho, "rho")
    # round() guards against 0.995 * 1000 == 995.0000000000001
    rank = max(1, math.ceil(round(rho * x.size, 9)))
    return float(x[rank - 1])


def calibrate_threshold(samples, rho: float = 0.995, method: str = "empirical", loc: float | None = None) -> tuple[float, BurrParams | None]:
    """Upper error limit below which a fraction ``rho`` of nominal errors fall.

    Returns ``(threshold, burr_params)``; the params are ``None`` for the
    empirical method.
    """
    rho = check_probability(rho, "rho")
    x = as_series(samples, name="samples")
    if x.size < MIN_CALIBRATION_SAMPLES:
        raise InsufficientDataError(f"need at least {MIN_CALIBRATION_SAMPLES} samples, got {x.size}")
    method = method.lower()
    if method == "empirical":
        return empirical_quantile(x, rho), None
    if method in ("burr", "burrfit", "burr3"):
        params = fit_burr3(x, loc=loc)
        return burr3_quantile(rho, params), params
    raise ValueError(f"unknown calibration method {method!r}")


def calibration_report(threshold: float, rho: float, method: str, params: BurrParams | None) -> str:
    """Key-value text block describing a calibration result."""
    lines = [f"method = {method}", f"rho = {rho!r}"]
    for key in ("c", "d", "loc", "scale"):
        lines.append(f"{key} = {getattr(params, key)!r}" if params is not None else f"{key} = ")
    lines.append(f"ULe = {threshold!r}")
    return "\n".join(lines) + "\n"


def parse_error_file(path) -> np.ndarray:
    """Read one error value per line; blank lines and ``#`` comments are skipped."""
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                values.append(float(line))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: not a number: {line!r}") from exc
    return np.array(values)


# -- estimator front ends ---------------------------------------------------


class Burr3(BaseEstimator):
    """Burr Type III distribution fitted by maximum likelihood."""

    def __init__(self, loc=None):
        self.loc = loc

    def fit(self, X, y=None):
        self.params_ = fit_burr3(X, loc=self.loc)
        self.c_, self.d_, self.loc_, self.scale_ = (
            self.params_.c,
            self.params_.d,
            self.params_.loc,
            self.params_.scale,
        )
        return self

    def cdf(self, x):
        check_is_fitted(self, "params_")
        return burr3_cdf(x, self.params_)

    def quantile(self, p):
        check_is_fitted(self, "params_")
        return burr3_quantile(p, self.params_)

    def score_samples(self, X):
        check_is_fitted(self, "params_")
        return burr3_logpdf(as_series(X), self.params_)


class ExtrapolationDetector(BaseEstimator):
    """Calibrate on nominal errors, then flag windows heading above the limit.

    ``fit`` sets ``threshold_`` from nominal errors. ``predict`` takes an
    array of windows (one per row, ``window`` columns) and returns whether
    each would fire; ``decision_function`` returns the extrapolated values.
    """

    def __init__(self, window=15, horizon=7, min_exceed=3, degree=2, rho=0.995, method="empirical", threshold=None):
        self.window = window
        self.horizon = horizon
        self.min_exceed = min_exceed
        self.degree = degree
        self.rho = rho
        self.method = method
        self.threshold = threshold

    def fit(self, X, y=None):
        if self.threshold is not None:
            self.threshold_, self.burr_params_ = float(self.threshold), None
        else:
            self.threshold_, self.burr_params_ = calibrate_threshold(X, self.rho, self.method)
        self.config_ = DetectorConfig(self.window, self.horizon, self.min_exceed, self.threshold_, self.degree)
        return self

    def _windows(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.window:
            raise ValueError(f"windows must have shape (n, {self.window}), got {X.shape}")
        return X

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "config_")
        P = extrapolation_matrix(self.window, self.horizon, self.degree)
        return self._windows(X) @ P.T

    def predict(self, X) -> np.ndarray:
        ext = self.decision_function(X)
        tail = ext[:, -self.min_exceed:] > self.threshold_
        return tail.all(axis=1)

    def new_state(self) -> DetectorState:
        return DetectorState(window=self.window)
