"""Log-likelihoods, the power-law count distribution, and the model zoo.

The hurdle decomposition makes the total log-likelihood a sum of a
Bernoulli event-day part and a positive-count part with no shared
parameters, so the two sides are evaluated and maximized independently.

The event-day part has a fast form

    sum_{event days} log(exp(x_t) - 1) - sum_t x_t,

where the shot-noise portion of the second sum collapses to one kernel-CDF
term per event day instead of one kernel-pmf term per (event, day) pair.
The slower per-day Bernoulli form is kept as an independent cross-check.

Counts on event days follow a discrete power law f(y) = y^(-s) / zeta(s)
on y = 1, 2, ...; the normalizing zeta function and its log-derivative are
computed by a truncated series with Euler-Maclaurin tail corrections.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import decay, intensity
from .decay import DecayKernel
from .intensity import (
    SELF_EXCITING,
    SELF_INHIBITING,
    BaselineTerms,
    CountDrivingParams,
    HurdleParams,
    link_state,
)
from .timeline import DailySeries, to_history

FORMAT_VERSION = 1

# Tail-parameter window used during likelihood evaluation; beyond the cap
# the pmf is numerically a point mass at 1.
S_FLOOR = 1.0 + 1e-6
S_CAP = 50.0

_TAIL_EPS = 1e-12

# Bernoulli numbers B_2, B_4, ..., B_20 for the Euler-Maclaurin tail.
_BERNOULLI = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
)
_EM_N = 24


# ---------------------------------------------------------------------------
# Riemann zeta machinery
# ---------------------------------------------------------------------------


def zeta_norm(s):
    """zeta(s) for s > 1, accurate to ~1e-13 relative error.

    Truncated power sum up to a small cutoff plus Euler-Maclaurin tail
    corrections; vectorized over s.
    """
    s = np.asarray(s, dtype=np.float64)
    if np.any(s <= 1.0):
        raise ValueError("zeta(s) diverges for s <= 1")
    sc = s[..., None]
    k = np.arange(1, _EM_N, dtype=np.float64)
    partial = np.sum(k**-sc, axis=-1)
    n = float(_EM_N)
    out = partial + n ** (1.0 - s) / (s - 1.0) + 0.5 * n**-s
    # Correction terms B_2j/(2j)! * s(s+1)...(s+2j-2) * n^(1-s-2j)
    rising = np.ones_like(s)
    fact = 1.0
    for j, b2j in enumerate(_BERNOULLI, start=1):
        fact *= (2.0 * j - 1.0) * (2.0 * j)
        rising = rising * (s + (2.0 * j - 2.0)) if j > 1 else s.copy()
        if j > 1:
            rising = rising * (s + (2.0 * j - 3.0))
        out = out + (b2j / fact) * rising * n ** (1.0 - s - 2.0 * j)
    return out if out.shape else float(out)


def zeta_log_deriv(s):
    """zeta'(s) / zeta(s) for s > 1 (a negative number), vectorized."""
    s = np.asarray(s, dtype=np.float64)
    if np.any(s <= 1.0):
        raise ValueError("zeta(s) diverges for s <= 1")
    sc = s[..., None]
    k = np.arange(1, _EM_N, dtype=np.float64)
    pow_k = k**-sc
    partial = np.sum(pow_k, axis=-1)
    dpartial = -np.sum(np.log(k) * pow_k, axis=-1)
    n = float(_EM_N)
    ln_n = np.log(n)
    int_term = n ** (1.0 - s) / (s - 1.0)
    value = partial + int_term + 0.5 * n**-s
    deriv = dpartial - ln_n * int_term - n ** (1.0 - s) / (s - 1.0) ** 2 - 0.5 * ln_n * n**-s
    rising = np.ones_like(s)
    invsum = np.zeros_like(s)
    fact = 1.0
    for j, b2j in enumerate(_BERNOULLI, start=1):
        fact *= (2.0 * j - 1.0) * (2.0 * j)
        if j == 1:
            rising = s.copy()
            invsum = 1.0 / s
        else:
            for off in (2.0 * j - 3.0, 2.0 * j - 2.0):
                rising = rising * (s + off)
                invsum = invsum + 1.0 / (s + off)
        scale = (b2j / fact) * n ** (1.0 - s - 2.0 * j)
        value = value + scale * rising
        deriv = deriv + scale * rising * (invsum - ln_n)
    out = deriv / value
    return out if out.shape else float(out)


def zeta_log_pmf(y, s):
    """log f(y; s) = -s log y - log zeta(s) on the support y >= 1."""
    y = np.asarray(y, dtype=np.float64)
    if np.any(y < 1):
        raise ValueError("power-law counts have no support below 1")
    s_arr = np.asarray(s, dtype=np.float64)
    out = -s_arr * np.log(y) - np.log(zeta_norm(s_arr))
    return out if out.shape else float(out)


def zeta_pmf(y, s):
    """f(y; s) = y^(-s) / zeta(s) on the support y >= 1."""
    return np.exp(zeta_log_pmf(y, s))


def zeta_tail_bound(y: int, s: float) -> float:
    """Upper bound on P(Y > y) under the power-law count distribution."""
    return y ** (1.0 - s) / ((s - 1.0) * float(zeta_norm(s)))


def clamp_s(s):
    """Pin the tail parameter into the evaluation window (S_FLOOR, S_CAP]."""
    return np.clip(s, S_FLOOR, S_CAP)


# ---------------------------------------------------------------------------
# Hurdle (event-day) log-likelihood
# ---------------------------------------------------------------------------


def _log_expm1(x: np.ndarray) -> np.ndarray:
    """log(exp(x) - 1) without overflow for large x."""
    x = np.asarray(x, dtype=np.float64)
    small = x < 30.0
    with np.errstate(divide="ignore", over="ignore"):
        out = np.where(small, np.log(np.expm1(np.where(small, x, 1.0))), x + np.log1p(-np.exp(-x)))
    return out


class HurdleLikelihood:
    """Reusable evaluator of the event-day log-likelihood on one series.

    Construction precomputes everything parameter-independent (trend and
    seasonal covariates, event-pair lags); ``value`` then costs one kernel
    table plus vectorized lookups, which is what makes refitting cheap.

    ``max_pair_lag`` caps the stored event-pair lags; contributions beyond
    the kernel truncation horizon are dropped, so any cap at or above the
    horizon of the fitted kernel is exact to the truncation tolerance.
    """

    def __init__(self, series: DailySeries, t_ref: int | None = None, max_pair_lag: int | None = None):
        self.series = series
        self.n_days = len(series)
        self.t_ref = int(t_ref) if t_ref is not None else self.n_days
        history = to_history(series)
        self.event_days = history.event_days
        self.n_events = len(history)

        t = np.arange(1, self.n_days + 1, dtype=np.float64)
        self._tn = t / float(self.t_ref)
        phase = 2.0 * np.pi * t / intensity.SEASONAL_PERIOD
        self._sin = np.sin(phase)
        self._cos = np.cos(phase)
        self._event_idx = self.event_days - 1
        self._end_lags = self.n_days - self.event_days  # lag used in the CDF term

        cap = self.n_days if max_pair_lag is None else int(max_pair_lag)
        lags, segs = [], []
        ed = self.event_days
        for j in range(1, self.n_events):
            lo = int(np.searchsorted(ed, ed[j] - cap, side="left"))
            if lo == j:
                continue
            lags.append(ed[j] - ed[lo:j])
            segs.append(np.full(j - lo, j, dtype=np.int64))
        if lags:
            lag_flat = np.concatenate(lags)
            seg_flat = np.concatenate(segs)
            order = np.argsort(lag_flat, kind="stable")
            self._lag = lag_flat[order]
            self._seg = seg_flat[order]
        else:
            self._lag = np.empty(0, dtype=np.int64)
            self._seg = np.empty(0, dtype=np.int64)

    def _baseline(self, bp) -> np.ndarray:
        log_rate = bp.beta0 + bp.beta1 * self._tn + bp.beta2 * self._tn**2
        if bp.terms.seasonal:
            log_rate = log_rate + bp.a1 * self._sin + bp.a2 * self._cos
        return np.exp(log_rate)

    def value(self, params: HurdleParams) -> float:
        """Event-day log-likelihood; -inf signals a degenerate fit."""
        b = self._baseline(params.baseline)
        x_events = b[self._event_idx].copy()
        sum_x = float(np.sum(b))

        sp = params.shot
        if sp is not None and sp.alpha > 0 and self.n_events:
            table_len = decay.truncation_horizon(sp.kernel, _TAIL_EPS, cap=self.n_days)
            table = decay.pmf_table(sp.kernel, table_len)
            cdf = np.cumsum(table)
            cut = int(np.searchsorted(self._lag, table_len, side="right"))
            if cut:
                contrib = table[self._lag[:cut] - 1]
                x_events += sp.alpha * np.bincount(
                    self._seg[:cut], weights=contrib, minlength=self.n_events
                )
            # G(n_days - t_i); lags past the table are within eps of full mass
            idx = np.clip(self._end_lags, 0, table_len)
            g_end = np.where(idx > 0, cdf[idx - 1], 0.0)
            sum_x += sp.alpha * float(np.sum(g_end))

        if np.any(x_events <= 0.0):
            return -np.inf
        return float(np.sum(_log_expm1(x_events))) - sum_x


def hurdle_loglik(series: DailySeries, params: HurdleParams, t_ref: int | None = None) -> float:
    """Event-day log-likelihood of a series under the given parameters."""
    return HurdleLikelihood(series, t_ref=t_ref).value(params)


def hurdle_loglik_naive(series: DailySeries, params: HurdleParams, t_ref: int | None = None) -> float:
    """Per-day Bernoulli form of the event-day log-likelihood.

    Evaluates p_t for every day and sums the Bernoulli terms directly;
    slower than ``hurdle_loglik`` but an independent route to the same
    number, kept for cross-checking.
    """
    n_days = len(series)
    t_ref = t_ref if t_ref is not None else n_days
    history = to_history(series)
    x = intensity.driving_path(n_days, t_ref, history, params.baseline, params.shot)
    p = intensity.hurdle_prob(x)
    events = series.counts >= 1
    with np.errstate(divide="ignore"):
        log_p = np.log(p[events])
    if np.any(np.isinf(log_p)):
        return -np.inf
    return float(np.sum(log_p) + np.sum(np.log1p(-p[~events])))


# ---------------------------------------------------------------------------
# Count log-likelihood
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantCountParams:
    """Time-invariant power-law tail parameter."""

    s: float

    def __post_init__(self) -> None:
        if not self.s > 1.0:
            raise ValueError(f"tail parameter must exceed 1, got {self.s}")


CountParams = Union[ConstantCountParams, CountDrivingParams]


class CountLikelihood:
    """Reusable evaluator of the count log-likelihood on one series."""

    def __init__(self, series: DailySeries, max_pair_lag: int | None = None):
        history = to_history(series)
        if len(history) == 0:
            raise ValueError("count likelihood needs at least one event day")
        self.event_days = history.event_days
        self.event_counts = history.event_counts.astype(np.float64)
        self.n_events = len(history)
        self._log_y = np.log(self.event_counts)

        cap = int(series.n_days) if max_pair_lag is None else int(max_pair_lag)
        lags, segs, weights = [], [], []
        ed = self.event_days
        for j in range(1, self.n_events):
            lo = int(np.searchsorted(ed, ed[j] - cap, side="left"))
            if lo == j:
                continue
            lags.append(ed[j] - ed[lo:j])
            segs.append(np.full(j - lo, j, dtype=np.int64))
            weights.append(self.event_counts[lo:j])
        if lags:
            lag_flat = np.concatenate(lags)
            order = np.argsort(lag_flat, kind="stable")
            self._lag = lag_flat[order]
            self._seg = np.concatenate(segs)[order]
            self._w = np.concatenate(weights)[order]
        else:
            self._lag = np.empty(0, dtype=np.int64)
            self._seg = np.empty(0, dtype=np.int64)
            self._w = np.empty(0)

    def tail_parameters(self, params: CountParams) -> np.ndarray:
        """Per-event-day tail parameter in effect (clamped for evaluation)."""
        if isinstance(params, ConstantCountParams):
            return np.full(self.n_events, float(clamp_s(params.s)))
        x_c = np.full(self.n_events, params.beta_c, dtype=np.float64)
        if params.alpha_c > 0 and self._lag.size:
            table_len = decay.truncation_horizon(params.kernel, _TAIL_EPS, cap=int(self._lag[-1]))
            table = decay.pmf_table(params.kernel, table_len)
            cut = int(np.searchsorted(self._lag, table_len, side="right"))
            if cut:
                contrib = self._w[:cut] * table[self._lag[:cut] - 1]
                x_c += params.alpha_c * np.bincount(
                    self._seg[:cut], weights=contrib, minlength=self.n_events
                )
        return np.asarray(clamp_s(link_state(x_c, params.link)))

    def value(self, params: CountParams) -> float:
        s = self.tail_parameters(params)
        return float(np.sum(-s * self._log_y - np.log(zeta_norm(s))))


def count_loglik(series: DailySeries, params: CountParams) -> float:
    """Count log-likelihood: sum of log f(y_t; s_t) over event days."""
    return CountLikelihood(series).value(params)


def full_density(y, p_event: float, s: float):
    """Hurdle density over all counts: 1 - p at zero, p * f(y; s) above."""
    y = np.asarray(y)
    if np.any(y < 0):
        raise ValueError("counts must be non-negative")
    out = np.where(y == 0, 1.0 - p_event, p_event * zeta_pmf(np.maximum(y, 1), s))
    return out if out.shape else float(out)


def aic(loglik: float, n_free: int) -> float:
    """Akaike information criterion, 2k - 2 log L; lower is better."""
    if n_free < 0:
        raise ValueError("parameter count must be non-negative")
    return 2.0 * n_free - 2.0 * loglik


# ---------------------------------------------------------------------------
# Model zoo
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HurdleModelSpec:
    """Which baseline terms are active and whether the self-exciting term is on."""

    terms: BaselineTerms = BaselineTerms()
    self_exciting: bool = False
    kernel_family: str = "nb"

    @property
    def n_free(self) -> int:
        if not self.self_exciting:
            return self.terms.n_free
        # magnitude + mean, plus the size parameter for the nb family
        return self.terms.n_free + 2 + (self.kernel_family == "nb")

    def to_json(self, name: str | None = None) -> dict:
        baseline = ["intercept"]
        for term in ("linear", "quadratic", "seasonal"):
            if getattr(self.terms, term):
                baseline.append(term)
        out = {"baseline": baseline, "se": self.self_exciting, "kernel": self.kernel_family}
        if name:
            out["name"] = name
        return out

    @staticmethod
    def from_json(obj: dict) -> "HurdleModelSpec":
        if "name" in obj and set(obj) <= {"name"}:
            return hurdle_spec(obj["name"])
        terms = obj.get("baseline", ["intercept"])
        unknown = set(terms) - {"intercept", "linear", "quadratic", "seasonal"}
        if unknown:
            raise ValueError(f"unknown baseline terms {sorted(unknown)}")
        return HurdleModelSpec(
            terms=BaselineTerms(
                linear="linear" in terms,
                quadratic="quadratic" in terms,
                seasonal="seasonal" in terms,
            ),
            self_exciting=bool(obj.get("se", False)),
            kernel_family=obj.get("kernel", "nb"),
        )


@dataclass(frozen=True)
class CountModelSpec:
    """Count-model variant: constant, self-exciting, or self-inhibiting tail."""

    variant: str = "Cz"

    def __post_init__(self) -> None:
        if self.variant not in ("Cz", "Cse", "Csi"):
            raise ValueError(f"unknown count variant {self.variant!r}")

    @property
    def n_free(self) -> int:
        return 1 if self.variant == "Cz" else 3

    @property
    def link(self) -> str | None:
        if self.variant == "Cse":
            return SELF_EXCITING
        if self.variant == "Csi":
            return SELF_INHIBITING
        return None

    def to_json(self) -> dict:
        return {"variant": self.variant}

    @staticmethod
    def from_json(obj: dict) -> "CountModelSpec":
        return CountModelSpec(variant=obj["variant"])


_BASELINE_SHAPES = {
    1: BaselineTerms(),
    2: BaselineTerms(linear=True),
    3: BaselineTerms(linear=True, quadratic=True),
    4: BaselineTerms(seasonal=True),
    5: BaselineTerms(linear=True, seasonal=True),
    6: BaselineTerms(linear=True, quadratic=True, seasonal=True),
}

HURDLE_ZOO = {
    **{f"BL{i}": HurdleModelSpec(terms=shape) for i, shape in _BASELINE_SHAPES.items()},
    **{
        f"SE{i}": HurdleModelSpec(terms=shape, self_exciting=True)
        for i, shape in _BASELINE_SHAPES.items()
    },
}

COUNT_ZOO = {name: CountModelSpec(variant=name) for name in ("Cz", "Cse", "Csi")}


def hurdle_spec(name: str) -> HurdleModelSpec:
    """Look up one of the named event-day models BL1..BL6 / SE1..SE6."""
    try:
        return HURDLE_ZOO[name]
    except KeyError:
        raise ValueError(f"unknown hurdle model {name!r}; expected one of {sorted(HURDLE_ZOO)}") from None


def count_spec(name: str) -> CountModelSpec:
    """Look up one of the named count models Cz / Cse / Csi."""
    try:
        return COUNT_ZOO[name]
    except KeyError:
        raise ValueError(f"unknown count model {name!r}; expected one of {sorted(COUNT_ZOO)}") from None


def spec_name(spec) -> str | None:
    """Zoo name of a spec, if it has one."""
    zoo = HURDLE_ZOO if isinstance(spec, HurdleModelSpec) else COUNT_ZOO
    for name, candidate in zoo.items():
        if candidate == spec:
            return name
    return None


# ---------------------------------------------------------------------------
# Fitted models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FittedModel:
    """A spec, its maximized parameters, and fit metadata."""

    kind: str  # "hurdle" | "count"
    spec: HurdleModelSpec | CountModelSpec
    params: HurdleParams | CountParams
    loglik: float
    n_free: int
    t_ref: int
    start_date: dt.date
    n_days: int
    convergence: dict

    @property
    def aic(self) -> float:
        return aic(self.loglik, self.n_free)

    def to_json(self) -> dict:
        if self.kind == "hurdle":
            spec_json = {"hurdle": self.spec.to_json(spec_name(self.spec))}
            bp = self.params.baseline
            params: dict = {"beta0": bp.beta0}
            if bp.terms.linear:
                params["beta1"] = bp.beta1
            if bp.terms.quadratic:
                params["beta2"] = bp.beta2
            if bp.terms.seasonal:
                params["a1"] = bp.a1
                params["a2"] = bp.a2
            if self.params.shot is not None:
                sp = self.params.shot
                params["alpha"] = sp.alpha
                params.update(sp.kernel.to_json())
                params.pop("kernel", None)
                params["kernel"] = sp.kernel.family
        else:
            spec_json = {"count": self.spec.to_json()}
            if isinstance(self.params, ConstantCountParams):
                params = {"s": self.params.s}
            else:
                params = {
                    "beta_c": self.params.beta_c,
                    "alpha_c": self.params.alpha_c,
                    "mu_c": self.params.kernel.mu,
                    "link": self.params.link,
                }
        return {
            "format_version": FORMAT_VERSION,
            "kind": self.kind,
            "spec": spec_json,
            "params": params,
            "loglik": self.loglik,
            "aic": self.aic,
            "n_free": self.n_free,
            "window": {
                "start_date": self.start_date.isoformat(),
                "n_days": self.n_days,
                "t_ref": self.t_ref,
            },
            "convergence": self.convergence,
        }

    @staticmethod
    def from_json(obj: dict) -> "FittedModel":
        kind = obj["kind"]
        p = obj["params"]
        if kind == "hurdle":
            spec = HurdleModelSpec.from_json(obj["spec"]["hurdle"])
            baseline = intensity.BaselineParams(
                beta0=p["beta0"],
                beta1=p.get("beta1", 0.0),
                beta2=p.get("beta2", 0.0),
                a1=p.get("a1", 0.0),
                a2=p.get("a2", 0.0),
                terms=spec.terms,
            )
            shot = None
            if spec.self_exciting:
                kernel = DecayKernel.from_json(
                    {"kernel": p["kernel"], "mu": p["mu"], "r": p.get("r")}
                )
                shot = intensity.ShotNoiseParams(alpha=p["alpha"], kernel=kernel)
            params: HurdleParams | CountParams = HurdleParams(baseline=baseline, shot=shot)
        else:
            spec = CountModelSpec.from_json(obj["spec"]["count"])
            if spec.variant == "Cz":
                params = ConstantCountParams(s=p["s"])
            else:
                params = CountDrivingParams(
                    beta_c=p["beta_c"],
                    alpha_c=p["alpha_c"],
                    kernel=DecayKernel("geom", p["mu_c"]),
                    link=p.get("link", spec.link),
                )
        window = obj["window"]
        return FittedModel(
            kind=kind,
            spec=spec,
            params=params,
            loglik=obj["loglik"],
            n_free=obj["n_free"],
            t_ref=window["t_ref"],
            start_date=dt.date.fromisoformat(window["start_date"]),
            n_days=window["n_days"],
            convergence=obj.get("convergence", {}),
        )
