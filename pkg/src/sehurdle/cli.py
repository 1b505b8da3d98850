"""Command-line surface: ingest, fit, simulate, diagnose, forecast.

Every subcommand prints a one-line JSON summary to stdout, writes its
artifacts atomically (temp file + rename), and exits 0 on success, 1 on
a usage problem, 2 on a numerical failure. Stochastic artifacts embed
the seed and a digest of the run configuration so a rerun with the same
configuration is byte-identical.

Relative output paths resolve against ``SEHURDLE_OUTDIR`` when that
environment variable is set. Report-style subcommands also render a
matplotlib figure next to each delimited artifact unless ``--no-plot``
is given.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import diagnostics, estimate, forecast, intensity, likelihood as lik, timeline
from .estimate import FitError, FitOptions
from .likelihood import FORMAT_VERSION, FittedModel

OUTDIR_ENV = "SEHURDLE_OUTDIR"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: D102 - argparse hook
        raise _UsageError(message)


def _resolve_out(path: str) -> Path:
    p = Path(path)
    base = os.environ.get(OUTDIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _tmp_name(path: Path) -> Path:
    # keep the suffix so format-sniffing writers behave
    return path.with_name(f".{path.stem}.tmp{os.getpid()}{path.suffix}")


def _atomic_text(path: Path, text: str) -> None:
    tmp = _tmp_name(path)
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _atomic_via(path: Path, writer) -> None:
    """Run a path-taking writer against a temp file, then rename."""
    tmp = _tmp_name(path)
    try:
        writer(tmp)
        os.replace(tmp, path)
    finally:
        tmp.unlink(missing_ok=True)


def _digest(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _parse_date(text: str, flag: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise _UsageError(f"{flag}: expected an ISO date (YYYY-MM-DD), got {text!r}") from None


def _load_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as handle:
            return json.load(handle)
    except FileNotFoundError:
        raise _UsageError(f"--model: cannot read {path!r}") from None
    except json.JSONDecodeError as exc:
        raise _UsageError(f"--model: {path!r} is not valid JSON ({exc})") from None


def _resolve_spec(arg: str, kind_hint: str | None = None):
    """A zoo name or a spec/fitted JSON path -> (kind, spec, params-or-None)."""
    if arg in lik.HURDLE_ZOO:
        return "hurdle", lik.hurdle_spec(arg), None
    if arg in lik.COUNT_ZOO:
        return "count", lik.count_spec(arg), None
    if not arg.endswith(".json"):
        raise _UsageError(
            f"--model: unknown model name {arg!r}; expected one of "
            f"{sorted(lik.HURDLE_ZOO) + sorted(lik.COUNT_ZOO)} or a JSON file"
        )
    obj = _load_json(arg)
    if "params" in obj:
        fitted = FittedModel.from_json(obj)
        return fitted.kind, fitted.spec, fitted
    spec_obj = obj.get("spec", obj)
    if "hurdle" in spec_obj:
        return "hurdle", lik.HurdleModelSpec.from_json(spec_obj["hurdle"]), None
    if "count" in spec_obj:
        return "count", lik.CountModelSpec.from_json(spec_obj["count"]), None
    raise _UsageError(f"--model: {arg!r} has neither a 'hurdle' nor a 'count' spec field")


def _print_summary(obj: dict) -> None:
    print(json.dumps(obj, sort_keys=True, default=str))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_ingest(args) -> dict:
    records = timeline.read_incidents_csv(args.input)
    start = _parse_date(args.start, "--start")
    end = _parse_date(args.end, "--end")
    series = timeline.ingest_incidents(records, start, end)
    out = _resolve_out(args.output)
    _atomic_via(out, lambda p: timeline.write_series_csv(series, p))
    if args.plot:
        from . import report

        _atomic_via(out.with_suffix(".png"), lambda p: report.save_series_plot(series, p))
    return {
        "command": "ingest",
        "output": str(out),
        "n_days": len(series),
        "n_event_days": series.n_event_days,
        "total_count": series.total_count,
    }


def _fit_options(args, series=None) -> FitOptions:
    return FitOptions(
        n_starts=args.starts,
        seed=args.seed if args.seed is not None else 0,
        n_jobs=args.threads,
        t_ref=getattr(args, "t_ref", None),
    )


def _cmd_fit(args) -> dict:
    series = timeline.read_series_csv(args.input)
    kind, spec, fitted = _resolve_spec(args.model)
    if fitted is not None:
        raise _UsageError("--model: already a fitted model; pass a spec or zoo name to fit")
    opts = _fit_options(args)
    if kind == "hurdle":
        model = estimate.fit_hurdle(series, spec, opts)
    else:
        model = estimate.fit_count(series, spec, opts)
    config = {
        "command": "fit",
        "model": args.model,
        "input": str(args.input),
        "seed": opts.seed,
        "starts": opts.n_starts,
    }
    doc = model.to_json()
    doc["seed"] = opts.seed
    doc["config_digest"] = _digest(config)
    out = _resolve_out(args.output)
    _atomic_text(out, json.dumps(doc, indent=2, sort_keys=True) + "\n")

    if args.plot:
        from . import report

        png = out.with_suffix(".png")
        if kind == "hurdle":
            history = timeline.to_history(series)
            p_path = intensity.hurdle_probabilities(history, len(series), model.t_ref, model.params)
            dates = [series.date_of(d) for d in range(1, len(series) + 1)]
            _atomic_via(
                png, lambda p: report.save_probability_plot(dates, p_path, series.counts >= 1, p)
            )
        else:
            counts = timeline.to_history(series).event_counts
            ys = np.arange(1, 16)
            if isinstance(model.params, lik.ConstantCountParams):
                pmfs = {"fitted": lik.zeta_pmf(ys, model.params.s)}
            else:
                base_s = float(lik.clamp_s(intensity.link_state(model.params.beta_c, model.params.link)))
                pmfs = {"baseline state": lik.zeta_pmf(ys, base_s)}
            _atomic_via(png, lambda p: report.save_count_pmf_plot(counts, pmfs, p))

    summary = {"command": "fit", "output": str(out), "aic": model.aic, "loglik": model.loglik}
    summary.update(doc["params"])
    return summary


def _cmd_simulate(args) -> dict:
    kind, spec, fitted = _resolve_spec(args.model)
    if fitted is None or kind != "hurdle":
        raise _UsageError("--model: simulate needs a fitted hurdle-model JSON")
    count_params = None
    if args.count_model:
        ckind, _, cfitted = _resolve_spec(args.count_model)
        if cfitted is None or ckind != "count":
            raise _UsageError("--count-model: simulate needs a fitted count-model JSON")
        count_params = cfitted.params
    start_date = _parse_date(args.start_date, "--start-date") if args.start_date else fitted.start_date
    config = {
        "command": "simulate",
        "model": args.model,
        "count_model": args.count_model,
        "days": args.days,
        "seed": args.seed,
        "start_date": start_date,
    }
    series = diagnostics.simulate(
        fitted.params, args.days, seed=args.seed, count=count_params, t_ref=fitted.t_ref, start_date=start_date
    )
    out = _resolve_out(args.output)
    comment = f"format_version={FORMAT_VERSION} seed={args.seed} config={_digest(config)}"
    _atomic_via(out, lambda p: timeline.write_series_csv(series, p, header_comment=comment))
    if args.plot:
        from . import report

        _atomic_via(out.with_suffix(".png"), lambda p: report.save_series_plot(series, p))
    return {
        "command": "simulate",
        "output": str(out),
        "seed": args.seed,
        "n_days": len(series),
        "n_event_days": series.n_event_days,
        "total_count": series.total_count,
        "config_digest": _digest(config),
    }


def _cmd_diagnose(args) -> dict:
    series = timeline.read_series_csv(args.input)
    kind, spec, fitted = _resolve_spec(args.model)
    if kind != "hurdle":
        raise _UsageError("--model: diagnostics need an event-day (hurdle) model")
    if fitted is None:
        fitted = estimate.fit_hurdle(series, spec, _fit_options(args))
    lags = diagnostics.default_lags(args.max_lag)
    curve = diagnostics.k_diagnostic(
        series,
        fitted.params,
        lags=lags,
        n_sims=args.sims,
        seed=args.seed,
        t_ref=fitted.t_ref,
        n_jobs=args.threads,
    )
    config = {
        "command": "diagnose",
        "model": args.model,
        "input": str(args.input),
        "sims": args.sims,
        "seed": args.seed,
        "max_lag": args.max_lag,
    }
    out = _resolve_out(args.output)

    def _write(p: Path) -> None:
        with open(p, "w", newline="\n", encoding="utf-8") as handle:
            handle.write(f"# format_version={FORMAT_VERSION} seed={args.seed} config={_digest(config)}\n")
            handle.write("lag,khat_minus_t,lo,hi\n")
            for lag, c, lo, hi in zip(curve.lags, curve.centered, curve.env_lo, curve.env_hi):
                handle.write(f"{int(lag)},{c:.12g},{lo:.12g},{hi:.12g}\n")

    _atomic_via(out, _write)
    if args.plot:
        from . import report

        _atomic_via(out.with_suffix(".png"), lambda p: report.save_kfunction_plot(curve, p))
    n_outside = int(np.sum((curve.centered < curve.env_lo) | (curve.centered > curve.env_hi)))
    return {
        "command": "diagnose",
        "output": str(out),
        "seed": args.seed,
        "n_lags": int(curve.lags.size),
        "n_outside_envelope": n_outside,
        "config_digest": _digest(config),
    }


def _cmd_forecast(args) -> dict:
    series = timeline.read_series_csv(args.input)
    split_date = _parse_date(args.split, "--split")
    kind, hspec, hfitted = _resolve_spec(args.model)
    if kind != "hurdle":
        raise _UsageError("--model: the forecast model must be an event-day (hurdle) model")
    rkind, rspec, _ = _resolve_spec(args.reference)
    if rkind != "hurdle":
        raise _UsageError("--reference: must be an event-day (hurdle) model")
    cspec = crspec = None
    if args.count_model:
        ckind, cspec, _ = _resolve_spec(args.count_model)
        if ckind != "count":
            raise _UsageError("--count-model: must be a count model")
        crkind, crspec, _ = _resolve_spec(args.count_reference)
        if crkind != "count":
            raise _UsageError("--count-reference: must be a count model")
    opts = _fit_options(args)
    report_bt = forecast.rolling_forecast(
        series,
        split_date,
        hspec,
        count_spec=cspec,
        reference_hurdle=rspec,
        reference_count=crspec,
        refit_every=args.refit_every,
        opts=opts,
    )
    config = {
        "command": "forecast",
        "model": args.model,
        "count_model": args.count_model,
        "reference": args.reference,
        "split": args.split,
        "refit_every": args.refit_every,
        "seed": opts.seed,
    }
    comment = f"format_version={FORMAT_VERSION} seed={opts.seed} config={_digest(config)}"
    out = _resolve_out(args.output)
    _atomic_via(out, lambda p: forecast.write_forecast_csv(report_bt, p, header_comment=comment))

    summary_doc = forecast.summary_json(report_bt)
    summary_doc.update({"format_version": FORMAT_VERSION, "seed": opts.seed, "config_digest": _digest(config)})
    summary_path = _resolve_out(args.summary) if args.summary else out.with_name(out.stem + "_summary.json")
    _atomic_text(summary_path, json.dumps(summary_doc, indent=2, sort_keys=True) + "\n")

    if args.plot:
        from . import report

        _atomic_via(out.with_suffix(".png"), lambda p: report.save_forecast_plot(report_bt, p))
    return {
        "command": "forecast",
        "output": str(out),
        "summary": str(summary_path),
        **{k: summary_doc[k] for k in ("g_hurdle", "n_test_days") if k in summary_doc},
        **({"g_count": summary_doc["g_count"]} if "g_count" in summary_doc else {}),
        "config_digest": _digest(config),
    }


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sehurdle", description="Self-exciting hurdle models for daily event counts.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed_required: bool) -> None:
        p.add_argument("--seed", type=int, required=seed_required, default=None if seed_required else 0)
        p.add_argument("--threads", type=int, default=1, help="cap on internal parallelism")
        p.add_argument("--starts", type=int, default=5, help="optimizer multi-start count")
        p.add_argument("--no-plot", dest="plot", action="store_false", help="skip figure rendering")

    p = sub.add_parser("ingest", help="aggregate incident rows into a daily series")
    p.add_argument("--input", required=True)
    p.add_argument("--start", required=True, help="window start (ISO date)")
    p.add_argument("--end", required=True, help="window end (ISO date)")
    p.add_argument("--output", default="series.csv")
    p.add_argument("--no-plot", dest="plot", action="store_false")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("fit", help="fit a named or JSON-specified model to a series")
    p.add_argument("--model", required=True, help="zoo name (BL1..SE6, Cz, Cse, Csi) or spec JSON path")
    p.add_argument("--input", required=True)
    p.add_argument("--output", default="fitted.json")
    p.add_argument("--t-ref", dest="t_ref", type=int, default=None)
    common(p, seed_required=False)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("simulate", help="sample a daily series from a fitted model")
    p.add_argument("--model", required=True, help="fitted hurdle-model JSON path")
    p.add_argument("--count-model", default=None, help="fitted count-model JSON path")
    p.add_argument("--days", type=int, required=True)
    p.add_argument("--start-date", default=None)
    p.add_argument("--output", default="simulated.csv")
    common(p, seed_required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("diagnose", help="weighted K curve with a parametric-bootstrap envelope")
    p.add_argument("--input", required=True)
    p.add_argument("--model", required=True, help="fitted-model JSON or zoo name (fit on the fly)")
    p.add_argument("--sims", type=int, default=1000)
    p.add_argument("--max-lag", type=int, default=100)
    p.add_argument("--output", default="kfunction.csv")
    common(p, seed_required=True)
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("forecast", help="rolling update-and-forecast backtest")
    p.add_argument("--input", required=True)
    p.add_argument("--split", required=True, help="first test day (ISO date)")
    p.add_argument("--model", required=True)
    p.add_argument("--reference", default="BL1")
    p.add_argument("--count-model", default=None)
    p.add_argument("--count-reference", default="Cz")
    p.add_argument("--refit-every", dest="refit_every", type=int, default=1)
    p.add_argument("--output", default="forecast.csv")
    p.add_argument("--summary", default=None)
    common(p, seed_required=False)
    p.set_defaults(func=_cmd_forecast)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        summary = args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (FitError, ArithmeticError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    _print_summary(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
