"""Driving processes for the hurdle and count components.

The per-day driving value is a baseline rate plus a shot-noise sum of
decay-kernel contributions from past event days. The hurdle probability
is the probability that a Poisson variable with that rate is nonzero,
p = 1 - exp(-x), which keeps the likelihood algebra cheap.

Polynomial trend terms use normalized time t/t_ref (t_ref is the length
of the fitting window) so trend coefficients stay O(1); seasonal terms
use the raw day index so the period keeps its meaning in days. When
evaluating past the fitting window, normalized time simply continues
beyond 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import decay
from .decay import DecayKernel
from .timeline import EventHistory

SEASONAL_PERIOD = 365.25

SELF_EXCITING = "self-exciting"
SELF_INHIBITING = "self-inhibiting"


@dataclass(frozen=True)
class BaselineTerms:
    """Which optional baseline terms are active (intercept is always on)."""

    linear: bool = False
    quadratic: bool = False
    seasonal: bool = False

    @property
    def n_free(self) -> int:
        return 1 + self.linear + self.quadratic + 2 * self.seasonal


@dataclass(frozen=True)
class BaselineParams:
    """Log-linear baseline: exp(b0 + b1*t~ + b2*t~^2 + a1 sin + a2 cos).

    Inactive terms are pinned at zero and do not count as free parameters.
    """

    beta0: float
    beta1: float = 0.0
    beta2: float = 0.0
    a1: float = 0.0
    a2: float = 0.0
    terms: BaselineTerms = BaselineTerms()
    period: float = SEASONAL_PERIOD

    def __post_init__(self) -> None:
        if not self.terms.linear and self.beta1 != 0.0:
            raise ValueError("beta1 set while the linear term is inactive")
        if not self.terms.quadratic and self.beta2 != 0.0:
            raise ValueError("beta2 set while the quadratic term is inactive")
        if not self.terms.seasonal and (self.a1 != 0.0 or self.a2 != 0.0):
            raise ValueError("seasonal amplitudes set while the seasonal term is inactive")


@dataclass(frozen=True)
class ShotNoiseParams:
    """Self-exciting component: magnitude alpha >= 0 and a decay kernel."""

    alpha: float
    kernel: DecayKernel

    def __post_init__(self) -> None:
        if self.alpha < 0.0:
            raise ValueError(f"shot-noise magnitude must be >= 0, got {self.alpha}")


@dataclass(frozen=True)
class HurdleParams:
    """Full parameter set of the event-day component."""

    baseline: BaselineParams
    shot: ShotNoiseParams | None = None

    @property
    def n_free(self) -> int:
        if self.shot is None:
            return self.baseline.terms.n_free
        return self.baseline.terms.n_free + 2 + (self.shot.kernel.family == "nb")


@dataclass(frozen=True)
class CountDrivingParams:
    """Driving process for the count side: beta_c + alpha_c * sum Y_i g(lag).

    ``link`` maps the driving value to the power-law tail parameter:
    self-exciting uses (1 - exp(-x))^-1 so excitation fattens the tail,
    self-inhibiting uses exp(x) so excitation thins it. Either link keeps
    the tail parameter above 1 whenever beta_c > 0.
    """

    beta_c: float
    alpha_c: float
    kernel: DecayKernel
    link: str = SELF_EXCITING

    def __post_init__(self) -> None:
        if not self.beta_c > 0.0:
            raise ValueError(f"count baseline level must be > 0, got {self.beta_c}")
        if self.alpha_c < 0.0:
            raise ValueError(f"count magnitude must be >= 0, got {self.alpha_c}")
        if self.link not in (SELF_EXCITING, SELF_INHIBITING):
            raise ValueError(f"unknown link {self.link!r}")


def baseline(t, t_ref: int, p: BaselineParams) -> np.ndarray:
    """Baseline rate at day index t (scalar or array); strictly positive."""
    t = np.asarray(t, dtype=np.float64)
    tn = t / float(t_ref)
    log_rate = p.beta0 + p.beta1 * tn + p.beta2 * tn * tn
    if p.terms.seasonal:
        phase = 2.0 * np.pi * t / p.period
        log_rate = log_rate + p.a1 * np.sin(phase) + p.a2 * np.cos(phase)
    out = np.exp(log_rate)
    return out if out.shape else float(out)


def baseline_path(n_days: int, t_ref: int, p: BaselineParams) -> np.ndarray:
    """Baseline rate for days 1..n_days."""
    return np.asarray(baseline(np.arange(1, n_days + 1), t_ref, p), dtype=np.float64).reshape(-1)


def shot_noise(t: int, history: EventHistory, p: ShotNoiseParams, marks=None) -> float:
    """Shot-noise value at day t from event days strictly before t.

    With ``marks`` given (per-event weights, e.g. incident counts), event i
    contributes alpha * marks_i * g(t - t_i); otherwise alpha * g(t - t_i).
    Events older than the kernel truncation horizon are skipped.
    """
    if p.alpha == 0.0 or len(history) == 0:
        return 0.0
    horizon = decay.truncation_horizon(p.kernel, cap=max(int(t), 1))
    lo = int(np.searchsorted(history.event_days, t - horizon, side="left"))
    hi = int(np.searchsorted(history.event_days, t, side="left"))
    if lo == hi:
        return 0.0
    lags = t - history.event_days[lo:hi]
    weights = 1.0 if marks is None else np.asarray(marks, dtype=np.float64)[lo:hi]
    return float(p.alpha * np.sum(weights * decay.pmf(p.kernel, lags)))


def shot_noise_path(n_days: int, history: EventHistory, p: ShotNoiseParams, marks=None) -> np.ndarray:
    """Shot-noise values for days 1..n_days, via one buffer pass per event."""
    out = np.zeros(n_days, dtype=np.float64)
    if p.alpha == 0.0 or len(history) == 0:
        return out
    horizon = decay.truncation_horizon(p.kernel, cap=n_days)
    table = p.alpha * decay.pmf_table(p.kernel, horizon)
    weights = np.ones(len(history)) if marks is None else np.asarray(marks, dtype=np.float64)
    for day, w in zip(history.event_days, weights):
        if day >= n_days:
            continue
        span = min(horizon, n_days - day)
        out[day : day + span] += w * table[:span]
    return out


def driving(t: int, t_ref: int, history: EventHistory, bp: BaselineParams, sp: ShotNoiseParams | None) -> float:
    """Driving value at day t: baseline plus shot noise."""
    x = float(baseline(t, t_ref, bp))
    if sp is not None:
        x += shot_noise(t, history, sp)
    return x


def driving_path(
    n_days: int, t_ref: int, history: EventHistory, bp: BaselineParams, sp: ShotNoiseParams | None
) -> np.ndarray:
    """Driving values for days 1..n_days."""
    x = baseline_path(n_days, t_ref, bp)
    if sp is not None:
        x = x + shot_noise_path(n_days, history, sp)
    return x


def hurdle_prob(x):
    """Map a driving value x >= 0 to the event-day probability 1 - exp(-x)."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0.0):
        raise ValueError("driving value must be non-negative")
    out = -np.expm1(-x)
    return out if out.shape else float(out)


def hurdle_prob_inv(p):
    """Inverse transform: the driving value producing probability p."""
    p = np.asarray(p, dtype=np.float64)
    out = -np.log1p(-p)
    return out if out.shape else float(out)


def hurdle_probabilities(series_history: EventHistory, n_days: int, t_ref: int, params: HurdleParams) -> np.ndarray:
    """Model-implied per-day event probabilities given the observed history."""
    x = driving_path(n_days, t_ref, series_history, params.baseline, params.shot)
    return -np.expm1(-x)


def link_state(x_c, link: str):
    """Map the count-side driving value to the power-law tail parameter."""
    x_c = np.asarray(x_c, dtype=np.float64)
    if link == SELF_EXCITING:
        out = 1.0 / (-np.expm1(-x_c))
    elif link == SELF_INHIBITING:
        out = np.exp(x_c)
    else:
        raise ValueError(f"unknown link {link!r}")
    return out if out.shape else float(out)


def count_driving(t: int, history: EventHistory, p: CountDrivingParams) -> tuple[float, float]:
    """Count-side driving value and tail parameter at day t.

    Contributions are weighted by the incident counts of past event days,
    so multi-incident days push harder than single ones.
    """
    proxy = ShotNoiseParams(alpha=p.alpha_c, kernel=p.kernel) if p.alpha_c > 0 else None
    x_c = p.beta_c
    if proxy is not None:
        x_c += shot_noise(t, history, proxy, marks=history.event_counts)
    return x_c, float(link_state(x_c, p.link))


def count_driving_path(n_days: int, history: EventHistory, p: CountDrivingParams) -> tuple[np.ndarray, np.ndarray]:
    """Count-side driving values and tail parameters for days 1..n_days."""
    x_c = np.full(n_days, p.beta_c, dtype=np.float64)
    if p.alpha_c > 0 and len(history):
        proxy = ShotNoiseParams(alpha=p.alpha_c, kernel=p.kernel)
        x_c += shot_noise_path(n_days, history, proxy, marks=history.event_counts)
    return x_c, np.asarray(link_state(x_c, p.link))


# ---------------------------------------------------------------------------
# Waiting-time forecasts
# ---------------------------------------------------------------------------


class WaitEstimate(NamedTuple):
    value: float
    tail_bound: float
    horizon: int


def _future_driving(
    frozen: EventHistory, first_day: int, n_ahead: int, bp, sp, t_ref: int
) -> np.ndarray:
    """Driving values at first_day .. first_day+n_ahead-1 for a frozen history."""
    days = np.arange(first_day, first_day + n_ahead)
    x = np.asarray(baseline(days, t_ref, bp), dtype=np.float64).reshape(-1)
    if sp is not None and sp.alpha > 0 and len(frozen):
        max_lag = int(days[-1] - frozen.event_days[0])
        horizon = decay.truncation_horizon(sp.kernel, cap=max(max_lag, 1))
        lo = int(np.searchsorted(frozen.event_days, days[-1] - horizon, side="left"))
        lags = days[:, None] - frozen.event_days[None, lo:]
        x = x + sp.alpha * np.sum(decay.pmf(sp.kernel, lags), axis=1)
    return x


def survival_path(
    t0: int, u_max: int, history: EventHistory, bp: BaselineParams, sp: ShotNoiseParams | None, t_ref: int
) -> np.ndarray:
    """Survival values for horizons 1..u_max past t0.

    Computed as a running product of per-day no-event probabilities
    exp(-x), so extending the horizon by one day multiplies the previous
    value by exactly the next no-event factor. Events after t0 are
    ignored (the forecast conditions on no new events).
    """
    frozen = history.through(t0)
    x = _future_driving(frozen, t0 + 1, u_max, bp, sp, t_ref)
    return np.cumprod(np.exp(-x))


def survival(
    t0: int, u: int, history: EventHistory, bp: BaselineParams, sp: ShotNoiseParams | None, t_ref: int
) -> float:
    """Probability that the next event day is more than u days past t0."""
    if u < 1:
        return 1.0
    return float(survival_path(t0, u, history, bp, sp, t_ref)[-1])


def expected_wait(
    t0: int,
    history: EventHistory,
    bp: BaselineParams,
    sp: ShotNoiseParams | None,
    t_ref: int,
    horizon: int = 100_000,
    tol: float = 1e-8,
) -> WaitEstimate:
    """Expected days until the next event day, 1 + sum of survival values.

    The sum is truncated once the survival value drops below ``tol``; the
    reported tail bound assumes the driving value does not fall below its
    value at the truncation point.
    """
    frozen = history.through(t0)
    total = 1.0
    v = 1.0
    x_last = 0.0
    steps = 0
    chunk = 512
    while v >= tol:
        if steps >= horizon:
            raise ArithmeticError(
                f"survival still {v:.3e} after {horizon} days; the driving value decays "
                "too fast for the waiting-time sum to converge within the horizon"
            )
        n = min(chunk, horizon - steps)
        x = _future_driving(frozen, t0 + steps + 1, n, bp, sp, t_ref)
        vs = v * np.cumprod(np.exp(-x))
        total += float(np.sum(vs))
        v = float(vs[-1])
        x_last = float(x[-1])
        steps += n
    q = np.exp(-x_last)
    tail = v * q / (1.0 - q) if q < 1.0 else np.inf
    return WaitEstimate(value=total, tail_bound=tail, horizon=steps)
