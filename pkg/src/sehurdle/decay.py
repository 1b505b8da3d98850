"""Decay kernels on positive integer lags.

A kernel is a proper probability mass function g(u) on u = 1, 2, ... that
shapes how the influence of a past event day fades. Three families are
supported, all parameterized by their mean ``mu`` (in days):

* ``"nb"``   shifted negative binomial with size ``r`` (the workhorse),
* ``"geom"`` shifted geometric (negative binomial at r = 1),
* ``"pois"`` shifted Poisson (the r -> infinity limit, in closed form).

All pmf evaluation is done in log space through log-gamma so that small
size parameters (r < 1) with large lags do not underflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

FAMILIES = ("nb", "geom", "pois")

# Block size for incremental tail accumulation (median / horizon search).
_BLOCK = 4096


@dataclass(frozen=True)
class DecayKernel:
    """Decay kernel, identified by family, mean ``mu`` > 1 and size ``r``.

    ``r`` is only meaningful for the ``"nb"`` family; the geometric kernel
    pins r = 1 and the Poisson kernel is the r -> infinity limit.
    """

    family: str
    mu: float
    r: float | None = None

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        if not self.mu > 1.0:
            raise ValueError(f"kernel mean must exceed 1 day, got mu={self.mu}")
        if self.family == "nb":
            if self.r is None or not self.r > 0.0:
                raise ValueError(f"nb kernel needs size r > 0, got r={self.r}")
        elif self.r is not None:
            raise ValueError(f"size r applies only to the nb family, got r={self.r} for {self.family!r}")

    def to_json(self) -> dict:
        out = {"kernel": self.family, "mu": self.mu}
        if self.family == "nb":
            out["r"] = self.r
        return out

    @staticmethod
    def from_json(obj: dict) -> "DecayKernel":
        family = obj["kernel"]
        r = obj.get("r") if family == "nb" else None
        return DecayKernel(family=family, mu=float(obj["mu"]), r=r)


def log_pmf(kernel: DecayKernel, u) -> np.ndarray:
    """log g(u); -inf outside the support u >= 1."""
    u = np.asarray(u, dtype=np.float64)
    mu = kernel.mu
    with np.errstate(divide="ignore", invalid="ignore"):
        if kernel.family == "geom":
            # g(u) = (1/mu) ((mu-1)/mu)^(u-1)
            out = -np.log(mu) + (u - 1.0) * (np.log(mu - 1.0) - np.log(mu))
        elif kernel.family == "pois":
            # g(u) = exp(-(mu-1)) (mu-1)^(u-1) / (u-1)!
            out = -(mu - 1.0) + (u - 1.0) * np.log(mu - 1.0) - gammaln(u)
        else:
            r = kernel.r
            p = r / (mu - 1.0 + r)
            out = (
                gammaln(r + u - 1.0)
                - gammaln(r)
                - gammaln(u)
                + r * np.log(p)
                + (u - 1.0) * np.log1p(-p)
            )
    return np.where(u >= 1.0, out, -np.inf)


def pmf(kernel: DecayKernel, u) -> np.ndarray:
    """g(u); zero outside the support."""
    return np.exp(log_pmf(kernel, u))


def pmf_table(kernel: DecayKernel, max_lag: int) -> np.ndarray:
    """g(1), ..., g(max_lag) as a dense table."""
    if max_lag < 1:
        return np.empty(0)
    return pmf(kernel, np.arange(1, max_lag + 1))


def cdf_table(kernel: DecayKernel, max_lag: int) -> np.ndarray:
    """G(1), ..., G(max_lag) with G(u) = sum of g(1..u)."""
    return np.cumsum(pmf_table(kernel, max_lag))


def cdf(kernel: DecayKernel, u) -> np.ndarray:
    """G(u) = sum_{v<=u} g(v); zero below the support."""
    u = np.asarray(u)
    if u.size == 0:
        return np.zeros(u.shape)
    hi = int(np.max(u)) if np.max(u) >= 1 else 0
    table = np.concatenate([[0.0], cdf_table(kernel, hi)])
    idx = np.clip(u.astype(np.int64), 0, hi)
    out = table[np.maximum(idx, 0)]
    return out if out.shape else float(out)


def median(kernel: DecayKernel) -> int:
    """Smallest u with G(u) >= 1/2."""
    total = 0.0
    start = 1
    while True:
        block = pmf(kernel, np.arange(start, start + _BLOCK))
        csum = total + np.cumsum(block)
        hit = np.nonzero(csum >= 0.5)[0]
        if hit.size:
            return start + int(hit[0])
        total = csum[-1]
        start += _BLOCK


def truncation_horizon(kernel: DecayKernel, eps: float = 1e-12, cap: int | None = None) -> int:
    """Smallest U with 1 - G(U) < eps, or ``cap`` if that comes first.

    Every infinite sum over the kernel support is truncated at this
    horizon, which bounds the discarded tail mass by eps. A cap keeps the
    search bounded when callers only need lags up to a known window.
    """
    total = 0.0
    start = 1
    limit = 100_000_000 if cap is None else int(cap)
    while True:
        if start > limit:
            if cap is not None:
                return limit
            raise RuntimeError(f"kernel tail did not reach 1-{eps} within 1e8 lags")
        block = pmf(kernel, np.arange(start, min(start + _BLOCK, limit + 1)))
        csum = total + np.cumsum(block)
        hit = np.nonzero(1.0 - csum < eps)[0]
        if hit.size:
            return start + int(hit[0])
        total = csum[-1]
        start += block.size


def mean(kernel: DecayKernel, eps: float = 1e-12) -> float:
    """Numerically integrated kernel mean, sum of u*g(u) up to the horizon."""
    hi = truncation_horizon(kernel, eps)
    u = np.arange(1, hi + 1, dtype=np.float64)
    return float(np.sum(u * pmf(kernel, u)))


def sample(kernel: DecayKernel, rng: np.random.Generator, size=None):
    """Draw lags from the kernel."""
    mu = kernel.mu
    if kernel.family == "geom":
        return rng.geometric(1.0 / mu, size=size)
    if kernel.family == "pois":
        return rng.poisson(mu - 1.0, size=size) + 1
    p = kernel.r / (mu - 1.0 + kernel.r)
    return rng.negative_binomial(kernel.r, p, size=size) + 1
