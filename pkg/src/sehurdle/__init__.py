"""Self-exciting hurdle models for daily event-count time series.

A daily count series is modeled in two parts: a Bernoulli hurdle whose
event-day probability is driven by a baseline plus a shot-noise sum over
past event days, and a power-law distribution for the number of
incidents on an event day, optionally driven by its own shot-noise
process. The package covers ingestion, maximum-likelihood fitting of the
named model zoo (BL1-BL6, SE1-SE6, Cz, Cse, Csi), forward simulation,
weighted K-function diagnostics with bootstrap envelopes, and rolling
out-of-sample backtesting scored by log probability gains.
"""

from .decay import DecayKernel
from .diagnostics import (
    Envelope,
    KFunctionCurve,
    bootstrap_envelope,
    k_diagnostic,
    poisson_expected_days,
    sample_zeta,
    simulate,
    weighted_k,
)
from .estimate import FitError, FitOptions, bl1_closed_form, fit_count, fit_hurdle, minimize, zeta_mle
from .forecast import (
    BacktestReport,
    ForecastRecord,
    log_gain_count,
    log_gain_hurdle,
    rolling_forecast,
)
from .intensity import (
    BaselineParams,
    BaselineTerms,
    CountDrivingParams,
    HurdleParams,
    ShotNoiseParams,
    baseline,
    count_driving,
    driving,
    expected_wait,
    hurdle_prob,
    shot_noise,
    survival,
)
from .likelihood import (
    COUNT_ZOO,
    HURDLE_ZOO,
    ConstantCountParams,
    CountModelSpec,
    FittedModel,
    HurdleModelSpec,
    aic,
    count_loglik,
    count_spec,
    full_density,
    hurdle_loglik,
    hurdle_spec,
    zeta_norm,
    zeta_pmf,
)
from .timeline import (
    DailySeries,
    EventHistory,
    IncidentRecord,
    demo_multiset,
    demo_series,
    ingest_incidents,
    split,
    to_history,
)

__version__ = "0.1.0"
