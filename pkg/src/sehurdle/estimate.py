"""Maximum-likelihood fitting.

Constrained parameters (magnitudes, kernel means and sizes, count
baseline levels) are optimized through log transforms so the simplex
search never leaves the parameter domain; trend and seasonal
coefficients are unconstrained and pass through unchanged.

The optimizer is a plain Nelder-Mead simplex with a restart-on-stall
pass, which is plenty for the handful of parameters these models carry
and avoids the awkward analytic gradients of the kernel CDF terms.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import brentq

from . import likelihood as lik
from .decay import DecayKernel
from .intensity import BaselineParams, CountDrivingParams, HurdleParams, ShotNoiseParams
from .likelihood import (
    S_CAP,
    S_FLOOR,
    ConstantCountParams,
    CountLikelihood,
    CountModelSpec,
    FittedModel,
    HurdleLikelihood,
    HurdleModelSpec,
)
from .timeline import DailySeries, to_history


class FitError(RuntimeError):
    """Every optimizer start failed; carries per-start diagnostics."""


# ---------------------------------------------------------------------------
# Parameter transforms
# ---------------------------------------------------------------------------

_ID, _LOG, _LOG_SHIFT = "id", "log", "log-shift1"


@dataclass(frozen=True)
class ParamTransform:
    """Bijection between constrained parameters and optimizer space.

    ``log`` maps (0, inf) to the real line, ``log-shift1`` does the same
    for (1, inf); unconstrained coordinates use the identity.
    """

    names: tuple[str, ...]
    kinds: tuple[str, ...]

    def encode(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        out = np.empty_like(values)
        for i, kind in enumerate(self.kinds):
            if kind == _ID:
                out[i] = values[i]
            elif kind == _LOG:
                out[i] = np.log(values[i])
            else:
                out[i] = np.log(values[i] - 1.0)
        return out

    def decode(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        out = np.empty_like(z)
        for i, kind in enumerate(self.kinds):
            if kind == _ID:
                out[i] = z[i]
            elif kind == _LOG:
                out[i] = np.exp(min(z[i], 700.0))
            else:
                out[i] = 1.0 + np.exp(min(z[i], 700.0))
        return out


def hurdle_transform(spec: HurdleModelSpec) -> ParamTransform:
    names = ["beta0"]
    kinds = [_ID]
    if spec.terms.linear:
        names.append("beta1")
        kinds.append(_ID)
    if spec.terms.quadratic:
        names.append("beta2")
        kinds.append(_ID)
    if spec.terms.seasonal:
        names += ["a1", "a2"]
        kinds += [_ID, _ID]
    if spec.self_exciting:
        names += ["alpha", "mu"]
        kinds += [_LOG, _LOG_SHIFT]
        if spec.kernel_family == "nb":
            names.append("r")
            kinds.append(_LOG)
    return ParamTransform(tuple(names), tuple(kinds))


def count_transform(spec: CountModelSpec) -> ParamTransform:
    if spec.variant == "Cz":
        return ParamTransform(("s",), (_LOG_SHIFT,))
    return ParamTransform(("beta_c", "alpha_c", "mu_c"), (_LOG, _LOG, _LOG_SHIFT))


def hurdle_params_from_vector(spec: HurdleModelSpec, values) -> HurdleParams:
    """Assemble hurdle parameters from a constrained-value vector."""
    values = list(np.asarray(values, dtype=np.float64))
    beta0 = values.pop(0)
    beta1 = values.pop(0) if spec.terms.linear else 0.0
    beta2 = values.pop(0) if spec.terms.quadratic else 0.0
    a1 = values.pop(0) if spec.terms.seasonal else 0.0
    a2 = values.pop(0) if spec.terms.seasonal else 0.0
    baseline = BaselineParams(beta0=beta0, beta1=beta1, beta2=beta2, a1=a1, a2=a2, terms=spec.terms)
    shot = None
    if spec.self_exciting:
        alpha, mu = values.pop(0), values.pop(0)
        r = values.pop(0) if spec.kernel_family == "nb" else None
        shot = ShotNoiseParams(alpha=alpha, kernel=DecayKernel(spec.kernel_family, mu, r))
    return HurdleParams(baseline=baseline, shot=shot)


def hurdle_vector_from_params(spec: HurdleModelSpec, params: HurdleParams) -> np.ndarray:
    values = [params.baseline.beta0]
    if spec.terms.linear:
        values.append(params.baseline.beta1)
    if spec.terms.quadratic:
        values.append(params.baseline.beta2)
    if spec.terms.seasonal:
        values += [params.baseline.a1, params.baseline.a2]
    if spec.self_exciting:
        values += [params.shot.alpha, params.shot.kernel.mu]
        if spec.kernel_family == "nb":
            values.append(params.shot.kernel.r)
    return np.asarray(values, dtype=np.float64)


def count_params_from_vector(spec: CountModelSpec, values):
    values = np.asarray(values, dtype=np.float64)
    if spec.variant == "Cz":
        return ConstantCountParams(s=float(values[0]))
    return CountDrivingParams(
        beta_c=float(values[0]),
        alpha_c=float(values[1]),
        kernel=DecayKernel("geom", float(values[2])),
        link=spec.link,
    )


def count_vector_from_params(spec: CountModelSpec, params) -> np.ndarray:
    if spec.variant == "Cz":
        return np.asarray([params.s])
    return np.asarray([params.beta_c, params.alpha_c, params.kernel.mu])


# ---------------------------------------------------------------------------
# Nelder-Mead simplex minimizer
# ---------------------------------------------------------------------------


class MinimizeResult(NamedTuple):
    x: np.ndarray
    value: float
    n_evals: int
    n_iters: int
    converged: bool
    n_restarts: int


def minimize(
    fn: Callable[[np.ndarray], float],
    x0,
    xtol: float = 1e-8,
    max_evals: int = 10_000,
    initial_step: float = 0.25,
    max_restarts: int = 2,
) -> MinimizeResult:
    """Nelder-Mead simplex descent with restart-on-stall.

    Terminates a pass when the simplex diameter drops below ``xtol`` or the
    evaluation budget runs out. After a converged pass the simplex is
    rebuilt around the best point with a smaller step; the search ends when
    a restart fails to improve. Non-finite objective values during the
    search are treated as worst-possible and get contracted away; a
    non-finite value at the start point is an error.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    n = x0.size
    evals = 0

    def wrapped(x: np.ndarray) -> float:
        nonlocal evals
        evals += 1
        v = fn(x)
        return float(v) if np.isfinite(v) else np.inf

    f0 = fn(x0)
    evals += 1
    if not np.isfinite(f0):
        raise ValueError(f"objective is not finite at the start point (value {f0!r})")

    refl, expa, contr, shrink = 1.0, 2.0, 0.5, 0.5
    best_x, best_f = x0.copy(), float(f0)
    n_iters = 0
    n_restarts = 0
    converged = False
    step = initial_step

    for attempt in range(max_restarts + 1):
        verts = [best_x.copy()]
        vals = [best_f]
        for i in range(n):
            v = best_x.copy()
            v[i] += step
            verts.append(v)
            vals.append(wrapped(v))
        verts = np.asarray(verts)
        vals = np.asarray(vals)

        pass_converged = False
        while evals < max_evals:
            order = np.argsort(vals, kind="stable")
            verts, vals = verts[order], vals[order]
            if np.max(np.abs(verts[1:] - verts[0])) < xtol:
                pass_converged = True
                break
            n_iters += 1

            centroid = np.mean(verts[:-1], axis=0)
            xr = centroid + refl * (centroid - verts[-1])
            fr = wrapped(xr)
            if fr < vals[0]:
                xe = centroid + expa * (centroid - verts[-1])
                fe = wrapped(xe)
                if fe < fr:
                    verts[-1], vals[-1] = xe, fe
                else:
                    verts[-1], vals[-1] = xr, fr
                continue
            if fr < vals[-2]:
                verts[-1], vals[-1] = xr, fr
                continue
            xc = centroid + contr * (verts[-1] - centroid)
            fc = wrapped(xc)
            if fc < vals[-1]:
                verts[-1], vals[-1] = xc, fc
                continue
            for i in range(1, n + 1):
                verts[i] = verts[0] + shrink * (verts[i] - verts[0])
                vals[i] = wrapped(verts[i])

        improved = vals[0] < best_f - 1e-12
        if vals[0] < best_f:
            best_x, best_f = verts[np.argmin(vals)].copy(), float(np.min(vals))
        if pass_converged:
            converged = True
        if evals >= max_evals or n == 0:
            break
        if attempt < max_restarts and pass_converged:
            if attempt > 0 and not improved:
                break
            n_restarts += 1
            step = step / 5.0
        else:
            break

    return MinimizeResult(
        x=best_x, value=best_f, n_evals=evals, n_iters=n_iters, converged=converged, n_restarts=n_restarts
    )


# ---------------------------------------------------------------------------
# Fit options and multi-start machinery
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitOptions:
    """Controls for the multi-start simplex fit.

    ``warm_start`` (a params object of the right shape) replaces the
    default start grid with a single start, which is how rolling refits
    stay cheap. ``t_ref`` pins the trend normalization to a window other
    than the fitted one; ``max_pair_lag`` caps the event-pair lags kept by
    the likelihood workspace.
    """

    n_starts: int = 5
    seed: int = 0
    xtol: float = 1e-8
    max_evals: int = 10_000
    initial_step: float = 0.25
    max_restarts: int = 2
    warm_start: object = None
    t_ref: int | None = None
    max_pair_lag: int | None = None
    n_jobs: int = 1


def bl1_closed_form(series: DailySeries) -> float:
    """Closed-form intercept MLE of the constant event-day model."""
    p_hat = series.n_event_days / len(series)
    if not 0.0 < p_hat < 1.0:
        raise ValueError("series needs at least one event day and one non-event day")
    return float(np.log(-np.log1p(-p_hat)))


# (alpha, mu, r) corners bracketing the magnitudes the models tend to land on.
_SE_START_GRID = (
    (0.2, 10.0, 0.5),
    (0.9, 40.0, 2.0),
    (0.2, 40.0, 2.0),
    (0.9, 10.0, 0.5),
    (0.2, 10.0, 2.0),
    (0.9, 40.0, 0.5),
    (0.2, 40.0, 0.5),
    (0.9, 10.0, 2.0),
)


def _hurdle_starts(series: DailySeries, spec: HurdleModelSpec, opts: FitOptions) -> list[np.ndarray]:
    """Start vectors in constrained space."""
    beta0 = bl1_closed_form(series)
    n_base = spec.terms.n_free
    rng = np.random.default_rng(opts.seed)
    starts = []
    if not spec.self_exciting:
        offsets = [0.0, 0.5, -0.5, 1.0, -1.0]
        for i in range(opts.n_starts):
            off = offsets[i] if i < len(offsets) else float(rng.normal(0.0, 1.0))
            starts.append(np.array([beta0 + off] + [0.0] * (n_base - 1)))
        return starts
    for i in range(opts.n_starts):
        if i < len(_SE_START_GRID):
            alpha, mu, r = _SE_START_GRID[i]
        else:
            alpha = float(rng.uniform(0.1, 0.95))
            mu = float(np.exp(rng.uniform(np.log(5.0), np.log(60.0))))
            r = float(np.exp(rng.uniform(np.log(0.3), np.log(3.0))))
        # Excitation accounts for roughly alpha of the event rate, so the
        # baseline start is the closed form shrunk accordingly.
        b0 = beta0 + np.log1p(-min(alpha, 0.95))
        se = [alpha, mu] + ([r] if spec.kernel_family == "nb" else [])
        starts.append(np.array([b0] + [0.0] * (n_base - 1) + se))
    return starts


def _count_starts(series: DailySeries, spec: CountModelSpec, opts: FitOptions) -> list[np.ndarray]:
    s0 = zeta_mle(to_history(series).event_counts)
    if spec.link == "self-exciting":
        base = float(-np.log1p(-1.0 / s0))
    else:
        base = float(np.log(s0))
    grid = ((0.05, 2.0), (0.3, 30.0), (0.3, 2.0), (0.05, 30.0), (1e-3, 5.0))
    rng = np.random.default_rng(opts.seed)
    starts = []
    for i in range(opts.n_starts):
        if i < len(grid):
            alpha_c, mu_c = grid[i]
        else:
            alpha_c = float(np.exp(rng.uniform(np.log(1e-3), np.log(1.0))))
            mu_c = float(np.exp(rng.uniform(np.log(1.5), np.log(60.0))))
        starts.append(np.array([base, alpha_c, mu_c]))
    return starts


def _hurdle_task(z0, series, spec, t_ref, max_pair_lag, xtol, max_evals, initial_step, max_restarts):
    """One hurdle-fit start; top level so a process pool can run it."""
    workspace = HurdleLikelihood(series, t_ref=t_ref, max_pair_lag=max_pair_lag)
    transform = hurdle_transform(spec)

    def objective(z: np.ndarray) -> float:
        return -workspace.value(hurdle_params_from_vector(spec, transform.decode(z)))

    return minimize(
        objective, z0, xtol=xtol, max_evals=max_evals, initial_step=initial_step, max_restarts=max_restarts
    )


def _count_task(z0, series, spec, max_pair_lag, xtol, max_evals, initial_step, max_restarts):
    """One count-fit start; top level so a process pool can run it."""
    workspace = CountLikelihood(series, max_pair_lag=max_pair_lag)
    transform = count_transform(spec)

    def objective(z: np.ndarray) -> float:
        return -workspace.value(count_params_from_vector(spec, transform.decode(z)))

    return minimize(
        objective, z0, xtol=xtol, max_evals=max_evals, initial_step=initial_step, max_restarts=max_restarts
    )


def _run_starts(objective, transform, starts, opts, task=None) -> tuple[MinimizeResult, int, list[dict]]:
    """Minimize from every start; return the best result, its index, and a log.

    Results are gathered in start order, so the selection (best value,
    ties broken by the earliest start) is deterministic regardless of how
    the starts are executed.
    """
    results: list[MinimizeResult | Exception] = []
    z_starts = [transform.encode(s) for s in starts]
    if opts.n_jobs > 1 and task is not None and len(z_starts) > 1:
        with ProcessPoolExecutor(max_workers=opts.n_jobs) as pool:
            futures = [pool.submit(task, z) for z in z_starts]
            for fut in futures:
                try:
                    results.append(fut.result())
                except Exception as exc:  # noqa: BLE001 - collected as diagnostics
                    results.append(exc)
    else:
        for z in z_starts:
            try:
                results.append(
                    minimize(
                        objective,
                        z,
                        xtol=opts.xtol,
                        max_evals=opts.max_evals,
                        initial_step=opts.initial_step,
                        max_restarts=opts.max_restarts,
                    )
                )
            except Exception as exc:  # noqa: BLE001 - collected as diagnostics
                results.append(exc)

    log = []
    best, best_idx = None, -1
    for idx, res in enumerate(results):
        if isinstance(res, Exception):
            log.append({"start": idx, "error": str(res)})
            continue
        log.append(
            {
                "start": idx,
                "value": res.value,
                "n_evals": res.n_evals,
                "converged": res.converged,
                "n_restarts": res.n_restarts,
            }
        )
        if np.isfinite(res.value) and (best is None or res.value < best.value):
            best, best_idx = res, idx
    if best is None:
        raise FitError(f"all {len(results)} starts failed: {log}")
    return best, best_idx, log


# ---------------------------------------------------------------------------
# Public fitting entry points
# ---------------------------------------------------------------------------


def fit_hurdle(series: DailySeries, spec: HurdleModelSpec, opts: FitOptions | None = None) -> FittedModel:
    """Maximize the event-day log-likelihood of a named or custom spec."""
    opts = opts or FitOptions()
    if not 0 < series.n_event_days < len(series):
        raise ValueError("series needs at least one event day and one non-event day")
    t_ref = opts.t_ref if opts.t_ref is not None else len(series)
    workspace = HurdleLikelihood(series, t_ref=t_ref, max_pair_lag=opts.max_pair_lag)
    transform = hurdle_transform(spec)

    def objective(z: np.ndarray) -> float:
        return -workspace.value(hurdle_params_from_vector(spec, transform.decode(z)))

    if opts.warm_start is not None:
        starts = [hurdle_vector_from_params(spec, opts.warm_start)]
    else:
        starts = _hurdle_starts(series, spec, opts)
    task = partial(
        _hurdle_task,
        series=series,
        spec=spec,
        t_ref=t_ref,
        max_pair_lag=opts.max_pair_lag,
        xtol=opts.xtol,
        max_evals=opts.max_evals,
        initial_step=opts.initial_step,
        max_restarts=opts.max_restarts,
    )
    best, best_idx, log = _run_starts(objective, transform, starts, opts, task=task)
    params = hurdle_params_from_vector(spec, transform.decode(best.x))
    return FittedModel(
        kind="hurdle",
        spec=spec,
        params=params,
        loglik=-best.value,
        n_free=spec.n_free,
        t_ref=t_ref,
        start_date=series.start_date,
        n_days=len(series),
        convergence={
            "best_start": best_idx,
            "converged": best.converged,
            "n_evals": best.n_evals,
            "seed": opts.seed,
            "starts": log,
        },
    )


def zeta_mle(event_counts) -> float:
    """Tail-parameter MLE of the power-law count model.

    Solves mean(log y) = -zeta'(s)/zeta(s) by bracketed root finding on
    (S_FLOOR, S_CAP]. When every count is 1 the mean log is zero and the
    likelihood increases toward the cap, so the cap is returned with a
    boundary warning.
    """
    counts = np.asarray(event_counts, dtype=np.float64)
    if counts.size == 0:
        raise ValueError("need at least one event-day count")
    if np.any(counts < 1):
        raise ValueError("event-day counts must be >= 1")
    target = float(np.mean(np.log(counts)))
    lo, hi = S_FLOOR, S_CAP
    # -zeta'(s)/zeta(s) falls from +inf toward 0 as s grows, so the root
    # is bracketed iff the mean log count sits between the endpoint values.
    f = lambda s: -lik.zeta_log_deriv(s) - target  # noqa: E731 - tiny root function
    if target <= 0.0 or f(hi) >= 0.0:
        warnings.warn("counts carry almost no tail mass; tail parameter pinned at the cap")
        return S_CAP
    if f(lo) <= 0.0:
        warnings.warn("extremely heavy counts; tail parameter pinned at the floor")
        return S_FLOOR
    return float(brentq(f, lo, hi, xtol=1e-10))


def fit_count(series: DailySeries, spec: CountModelSpec, opts: FitOptions | None = None) -> FittedModel:
    """Maximize the count log-likelihood of a Cz / Cse / Csi spec."""
    opts = opts or FitOptions()
    history = to_history(series)
    if len(history) == 0:
        raise ValueError("series has no event days to fit a count model on")
    t_ref = opts.t_ref if opts.t_ref is not None else len(series)
    common = dict(
        kind="count",
        spec=spec,
        n_free=spec.n_free,
        t_ref=t_ref,
        start_date=series.start_date,
        n_days=len(series),
    )
    if spec.variant == "Cz":
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            s_hat = zeta_mle(history.event_counts)
        boundary = len(caught) > 0
        params = ConstantCountParams(s=s_hat)
        return FittedModel(
            params=params,
            loglik=lik.count_loglik(series, params),
            convergence={"method": "root", "boundary": boundary},
            **common,
        )

    workspace = CountLikelihood(series, max_pair_lag=opts.max_pair_lag)
    transform = count_transform(spec)

    def objective(z: np.ndarray) -> float:
        return -workspace.value(count_params_from_vector(spec, transform.decode(z)))

    if opts.warm_start is not None:
        starts = [count_vector_from_params(spec, opts.warm_start)]
    else:
        starts = _count_starts(series, spec, opts)
    task = partial(
        _count_task,
        series=series,
        spec=spec,
        max_pair_lag=opts.max_pair_lag,
        xtol=opts.xtol,
        max_evals=opts.max_evals,
        initial_step=opts.initial_step,
        max_restarts=opts.max_restarts,
    )
    best, best_idx, log = _run_starts(objective, transform, starts, opts, task=task)
    params = count_params_from_vector(spec, transform.decode(best.x))
    return FittedModel(
        params=params,
        loglik=-best.value,
        convergence={
            "best_start": best_idx,
            "converged": best.converged,
            "n_evals": best.n_evals,
            "seed": opts.seed,
            "starts": log,
        },
        **common,
    )
