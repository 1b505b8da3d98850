"""Figure rendering for the CLI report paths.

Each saver draws one focused matplotlib figure next to the delimited
artifact it illustrates; the CSV stays the authoritative output and the
figure is a convenience rendering of the same numbers.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

plt.rcParams.update(
    {
        "figure.figsize": (8.0, 4.0),
        "figure.dpi": 120,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "font.size": 10,
    }
)

_SAVE_KW = {"bbox_inches": "tight"}


def save_series_plot(series, path: str | Path) -> None:
    """Daily counts as a stem-style plot over calendar time."""
    days = np.nonzero(series.counts)[0]
    dates = [series.date_of(int(d) + 1) for d in days]
    fig, ax = plt.subplots()
    if days.size:
        ax.vlines(dates, 0, series.counts[days], lw=1.0, color="tab:blue")
    ax.set_xlim(series.start_date, series.end_date)
    ax.set_ylim(bottom=0)
    ax.set_xlabel("date")
    ax.set_ylabel("incidents per day")
    ax.set_title(f"{series.n_event_days} event days, {series.total_count} incidents over {len(series)} days")
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_kfunction_plot(curve, path: str | Path) -> None:
    """Centered weighted K curve with its bootstrap envelope band."""
    fig, ax = plt.subplots()
    if curve.env_lo is not None and curve.env_hi is not None:
        ax.fill_between(curve.lags, curve.env_lo, curve.env_hi, color="0.8", label="95% envelope")
    ax.plot(curve.lags, curve.centered, color="tab:red", lw=1.5, label="observed")
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_xlabel("lag (days)")
    ax.set_ylabel("weighted K minus lag")
    ax.legend(loc="upper left")
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_probability_plot(dates, p_hat, events, path: str | Path, pi_hat=None) -> None:
    """Event-day probability path with an event rug; optional reference path."""
    fig, ax = plt.subplots()
    ax.plot(dates, p_hat, color="tab:blue", lw=1.0, label="model")
    if pi_hat is not None:
        ax.plot(dates, pi_hat, color="tab:orange", lw=1.0, ls="--", label="reference")
    events = np.asarray(events, dtype=bool)
    if events.any():
        event_dates = [d for d, e in zip(dates, events) if e]
        ax.plot(event_dates, np.zeros(len(event_dates)), "|", color="k", ms=10, label="event days")
    ax.set_ylim(bottom=0)
    ax.set_xlabel("date")
    ax.set_ylabel("event-day probability")
    ax.legend(loc="upper left")
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_forecast_plot(report, path: str | Path) -> None:
    """Predicted probabilities and the running gain over the test window."""
    dates = [r.date for r in report.records]
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(8.0, 6.0))
    ax1.plot(dates, [r.p_hat for r in report.records], color="tab:blue", lw=1.0, label="model")
    ax1.plot(dates, [r.pi_hat for r in report.records], color="tab:orange", lw=1.0, ls="--", label="reference")
    event_dates = [r.date for r in report.records if r.event]
    if event_dates:
        ax1.plot(event_dates, np.zeros(len(event_dates)), "|", color="k", ms=10)
    ax1.set_ylabel("event-day probability")
    ax1.set_ylim(bottom=0)
    ax1.legend(loc="upper left")
    ax2.plot(dates, np.cumsum([r.g_contrib for r in report.records]), color="tab:green", lw=1.2)
    ax2.axhline(0.0, color="k", lw=0.8)
    ax2.set_ylabel("cumulative log gain")
    ax2.set_xlabel("date")
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_count_pmf_plot(event_counts, model_pmfs: dict, path: str | Path, max_count: int = 15) -> None:
    """Observed event-day count frequencies against model pmfs."""
    counts = np.asarray(event_counts)
    ys = np.arange(1, max_count + 1)
    emp = np.array([(counts == y).mean() for y in ys])
    fig, ax = plt.subplots()
    ax.bar(ys, emp, color="0.8", label="observed")
    for label, pmf in model_pmfs.items():
        ax.plot(ys, pmf[: max_count], "o-", ms=4, lw=1.0, label=label)
    ax.set_yscale("log")
    ax.set_xlabel("incidents on an event day")
    ax.set_ylabel("probability")
    ax.legend()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
