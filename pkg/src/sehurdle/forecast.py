"""Rolling update-and-forecast evaluation with log probability gains.

Each test day is predicted from data strictly before it: the event-day
probability from the hurdle model of interest and from a reference
model, and (when a count model is supplied) the count density in effect.
After the day is observed it joins the history, and the parameters are
re-estimated on the schedule given by ``refit_every``. The gain G sums
the per-day log-likelihood-ratio of model against reference over the
test window; its count-side analogue sums over realized event days only.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import decay, estimate, intensity, likelihood as lik
from .estimate import FitOptions
from .intensity import BaselineParams, CountDrivingParams, HurdleParams
from .likelihood import ConstantCountParams, CountModelSpec, HurdleModelSpec
from .timeline import DailySeries, split, to_history

PROB_CLIP = 1e-12


@dataclass(frozen=True)
class ForecastRecord:
    """One test day: predictions, realized outcome, gain contributions."""

    day: int
    date: dt.date
    p_hat: float
    pi_hat: float
    s_t: float | None
    s_ref: float | None
    event: int
    count: int
    g_contrib: float
    gc_contrib: float | None


@dataclass(frozen=True)
class BacktestReport:
    """Scored test window plus the refit schedule that produced it."""

    records: list[ForecastRecord]
    g_total: float
    gc_total: float | None
    split_date: dt.date
    refit_every: int
    refit_days: list[int] = field(default_factory=list)
    refit_failures: list[int] = field(default_factory=list)


def log_gain_hurdle(records: list[ForecastRecord]) -> float:
    """Hurdle-side gain recomputed from the recorded probabilities."""
    total = 0.0
    for r in records:
        if r.event:
            total += np.log(r.p_hat / r.pi_hat)
        else:
            total += np.log((1.0 - r.p_hat) / (1.0 - r.pi_hat))
    return float(total)


def log_gain_count(records: list[ForecastRecord]) -> float:
    """Count-side gain recomputed from the recorded tail parameters."""
    event_records = [r for r in records if r.event]
    if not event_records:
        raise ValueError("no event days in the test window to score counts on")
    total = 0.0
    for r in event_records:
        if r.s_t is None or r.s_ref is None:
            raise ValueError(f"day {r.day} has no count prediction")
        total += lik.zeta_log_pmf(r.count, r.s_t) - lik.zeta_log_pmf(r.count, r.s_ref)
    return float(total)


# ---------------------------------------------------------------------------
# Cached per-parameter predictors
# ---------------------------------------------------------------------------


class _HurdlePredictor:
    """One-day-ahead event probability with a cached kernel table."""

    def __init__(self, params: HurdleParams, t_ref: int, max_day: int):
        self.params = params
        self.t_ref = t_ref
        self._table = None
        if params.shot is not None and params.shot.alpha > 0:
            horizon = decay.truncation_horizon(params.shot.kernel, cap=max_day)
            self._table = params.shot.alpha * decay.pmf_table(params.shot.kernel, horizon)

    def prob(self, t: int, event_days: np.ndarray) -> float:
        x = float(intensity.baseline(t, self.t_ref, self.params.baseline))
        if self._table is not None and event_days.size:
            lo = int(np.searchsorted(event_days, t - self._table.size, side="left"))
            lags = t - event_days[lo:]
            x += float(np.sum(self._table[lags - 1]))
        return float(np.clip(-np.expm1(-x), PROB_CLIP, 1.0 - PROB_CLIP))


class _CountPredictor:
    """One-day-ahead power-law tail parameter with a cached kernel table."""

    def __init__(self, params, max_day: int):
        self.params = params
        self._table = None
        if isinstance(params, CountDrivingParams) and params.alpha_c > 0:
            horizon = decay.truncation_horizon(params.kernel, cap=max_day)
            self._table = params.alpha_c * decay.pmf_table(params.kernel, horizon)

    def tail(self, t: int, event_days: np.ndarray, event_counts: np.ndarray) -> float:
        if isinstance(self.params, ConstantCountParams):
            return float(lik.clamp_s(self.params.s))
        x_c = self.params.beta_c
        if self._table is not None and event_days.size:
            lo = int(np.searchsorted(event_days, t - self._table.size, side="left"))
            lags = t - event_days[lo:]
            x_c += float(np.sum(event_counts[lo:] * self._table[lags - 1]))
        return float(lik.clamp_s(intensity.link_state(x_c, self.params.link)))


def _is_constant_hurdle(spec: HurdleModelSpec) -> bool:
    return not spec.self_exciting and spec.terms == intensity.BaselineTerms()


def _fit_hurdle_rolling(series, spec, opts) -> HurdleParams:
    if _is_constant_hurdle(spec):
        return HurdleParams(baseline=BaselineParams(beta0=estimate.bl1_closed_form(series)))
    return estimate.fit_hurdle(series, spec, opts).params


def _fit_count_rolling(series, spec, opts):
    if spec.variant == "Cz":
        return ConstantCountParams(s=estimate.zeta_mle(to_history(series).event_counts))
    return estimate.fit_count(series, spec, opts).params


def rolling_forecast(
    series: DailySeries,
    split_date: dt.date,
    hurdle_spec: HurdleModelSpec,
    count_spec: CountModelSpec | None = None,
    reference_hurdle: HurdleModelSpec | None = None,
    reference_count: CountModelSpec | None = None,
    refit_every: int = 1,
    opts: FitOptions | None = None,
) -> BacktestReport:
    """Walk the test window one day at a time, predicting then updating.

    Both the model of interest and the reference are refit on the same
    schedule, warm-started from their previous parameters; identical
    specs share one fit, so a model backtested against itself scores
    exactly zero. A refit that fails leaves the previous parameters in
    place and flags the day. Trend normalization stays pinned to the
    training-window length throughout.
    """
    if refit_every < 1:
        raise ValueError("refit_every must be >= 1")
    opts = opts or FitOptions()
    train, test = split(series, split_date)
    t_ref = opts.t_ref if opts.t_ref is not None else len(train)
    train_len = len(train)
    n_days = len(series)

    reference_hurdle = reference_hurdle if reference_hurdle is not None else lik.hurdle_spec("BL1")
    if count_spec is not None and reference_count is None:
        reference_count = lik.count_spec("Cz")

    base_opts = replace(opts, t_ref=t_ref)
    hurdle_specs = {hurdle_spec, reference_hurdle}
    count_specs = {count_spec, reference_count} - {None}

    def refit_all(upto_day: int, current: dict, failures: list[int]) -> dict:
        prefix = DailySeries(series.start_date, series.counts[:upto_day])
        fitted = {}
        for sp in hurdle_specs | count_specs:
            o = replace(base_opts, warm_start=current.get(sp)) if sp in current else base_opts
            fit_one = _fit_hurdle_rolling if isinstance(sp, HurdleModelSpec) else _fit_count_rolling
            try:
                fitted[sp] = fit_one(prefix, sp, o)
            except Exception:
                if sp not in current:
                    raise
                fitted[sp] = current[sp]
                failures.append(upto_day)
        return fitted

    failures: list[int] = []
    params = refit_all(train_len, {}, failures)

    full_history = to_history(series)
    ed_full = full_history.event_days
    ec_full = full_history.event_counts.astype(np.float64)

    def predictors(p: dict) -> dict:
        out = {sp: _HurdlePredictor(p[sp], t_ref, n_days) for sp in hurdle_specs}
        out.update({sp: _CountPredictor(p[sp], n_days) for sp in count_specs})
        return out

    pred = predictors(params)
    records: list[ForecastRecord] = []
    refit_days: list[int] = []
    since_refit = 0

    for t in range(train_len + 1, n_days + 1):
        n_seen = int(np.searchsorted(ed_full, t, side="left"))
        ed = ed_full[:n_seen]
        ec = ec_full[:n_seen]

        p_hat = pred[hurdle_spec].prob(t, ed)
        pi_hat = pred[reference_hurdle].prob(t, ed)
        event = int(series.counts[t - 1] >= 1)
        count = int(series.counts[t - 1])

        if event:
            g = float(np.log(p_hat / pi_hat))
        else:
            g = float(np.log((1.0 - p_hat) / (1.0 - pi_hat)))

        s_t = s_ref = None
        gc = None
        if count_spec is not None:
            s_t = pred[count_spec].tail(t, ed, ec)
            s_ref = pred[reference_count].tail(t, ed, ec)
            if event:
                gc = float(lik.zeta_log_pmf(count, s_t) - lik.zeta_log_pmf(count, s_ref))

        records.append(
            ForecastRecord(
                day=t,
                date=series.date_of(t),
                p_hat=p_hat,
                pi_hat=pi_hat,
                s_t=s_t,
                s_ref=s_ref,
                event=event,
                count=count,
                g_contrib=g,
                gc_contrib=gc,
            )
        )

        since_refit += 1
        if since_refit >= refit_every and t < n_days:
            params = refit_all(t, params, failures)
            pred = predictors(params)
            refit_days.append(t)
            since_refit = 0

    g_total = float(sum(r.g_contrib for r in records))
    gc_total = None
    if count_spec is not None:
        gc_total = float(sum(r.gc_contrib for r in records if r.gc_contrib is not None))
    return BacktestReport(
        records=records,
        g_total=g_total,
        gc_total=gc_total,
        split_date=split_date,
        refit_every=refit_every,
        refit_days=refit_days,
        refit_failures=failures,
    )


# ---------------------------------------------------------------------------
# Artifact emission
# ---------------------------------------------------------------------------

CSV_FIELDS = ["date", "p_hat", "pi_hat", "s_t", "E_t", "Y_t", "g_contrib", "gc_contrib"]


def write_forecast_csv(report: BacktestReport, path: str | Path, header_comment: str | None = None) -> None:
    """Per-day forecast rows; count columns are blank without a count model."""
    with open(path, "w", newline="\n", encoding="utf-8") as handle:
        if header_comment:
            handle.write(f"# {header_comment}\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for r in report.records:
            writer.writerow(
                [
                    r.date.isoformat(),
                    f"{r.p_hat:.12g}",
                    f"{r.pi_hat:.12g}",
                    "" if r.s_t is None else f"{r.s_t:.12g}",
                    r.event,
                    r.count,
                    f"{r.g_contrib:.12g}",
                    "" if r.gc_contrib is None else f"{r.gc_contrib:.12g}",
                ]
            )


def summary_json(report: BacktestReport) -> dict:
    out = {
        "g_hurdle": report.g_total,
        "split_date": report.split_date.isoformat(),
        "refit_every": report.refit_every,
        "n_test_days": len(report.records),
        "n_event_days": int(sum(r.event for r in report.records)),
        "n_refits": len(report.refit_days),
        "n_refit_failures": len(report.refit_failures),
    }
    if report.gc_total is not None:
        out["g_count"] = report.gc_total
    return out
