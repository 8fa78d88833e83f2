"""Estimators and hypothesis checks shared by the experiments.

All Monte Carlo comparisons in the lab use the same pre-registered band:
an estimate agrees with its target when it lies within three standard
errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import kolmogorov

from .errors import EmptySampleError, InvalidParametersError
from .rng import AUX, replica_rng

SQRT_2_OVER_PI = math.sqrt(2 / math.pi)
BAND = 3.0


@dataclass(frozen=True)
class SampleSummary:
    count: int
    mean: float
    median: float
    variance: float
    std_error_of_mean: float
    quantiles: dict


def summarize(samples, grid=(0.05, 0.25, 0.5, 0.75, 0.95)) -> SampleSummary:
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise EmptySampleError("cannot summarize an empty sample")
    var = float(x.var(ddof=1)) if x.size > 1 else 0.0
    return SampleSummary(
        count=int(x.size),
        mean=float(x.mean()),
        median=float(np.median(x)),
        variance=var,
        std_error_of_mean=math.sqrt(var / x.size),
        quantiles={q: float(np.quantile(x, q)) for q in grid},
    )


@dataclass(frozen=True)
class KSResult:
    statistic: float
    p_value: float


def ks_two_sample(a, b) -> KSResult:
    """Two-sample Kolmogorov-Smirnov statistic with the asymptotic p-value."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise EmptySampleError("KS test needs two nonempty samples")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    d = float(np.max(np.abs(fa - fb)))
    en = a.size * b.size / (a.size + b.size)
    return KSResult(d, float(kolmogorov(math.sqrt(en) * d)))


def ks_one_sample(samples, cdf) -> KSResult:
    """KS distance from a continuous cdf (callable, vectorized)."""
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise EmptySampleError("KS test needs a nonempty sample")
    f = cdf(x)
    i = np.arange(1, x.size + 1)
    d = float(max(np.max(i / x.size - f), np.max(f - (i - 1) / x.size)))
    return KSResult(d, float(kolmogorov(math.sqrt(x.size) * d)))


def ks_integer(samples, cdf) -> float:
    """KS distance between integer samples and an integer-supported cdf.

    Both step functions jump only at integers, so the supremum is attained
    on the integers up to the sample maximum.
    """
    x = np.asarray(samples, dtype=np.int64)
    if x.size == 0:
        raise EmptySampleError("KS test needs a nonempty sample")
    ks = np.arange(0, x.max() + 1)
    emp = np.cumsum(np.bincount(x, minlength=ks.size)) / x.size
    return float(np.max(np.abs(emp - cdf(ks))))


def within_band(estimate: float, target: float, se: float, band: float = BAND) -> bool:
    return abs(estimate - target) <= band * se


@dataclass(frozen=True)
class SquareCovCheck:
    empirical_cov: float
    target: float
    se: float
    passed: bool


def gaussian_square_cov_check(rho: float, reps: int, seed: int = 0,
                              sigma1: float = 1.0, sigma2: float = 1.0) -> SquareCovCheck:
    """Sample (X, Y) with Cov(X, Y) = rho and compare cov(X^2, Y^2) with 2 rho^2."""
    if abs(rho) > sigma1 * sigma2:
        raise InvalidParametersError("correlation exceeds sigma1 * sigma2", rho=rho)
    rng = replica_rng(seed, 0, AUX)
    z1 = rng.standard_normal(reps)
    z2 = rng.standard_normal(reps)
    x = sigma1 * z1
    y = (rho / sigma1) * z1 + math.sqrt(max(sigma2**2 - (rho / sigma1) ** 2, 0.0)) * z2
    x2 = x * x - np.mean(x * x)
    y2 = y * y - np.mean(y * y)
    prod = x2 * y2
    emp = float(prod.mean())
    se = float(prod.std(ddof=1) / math.sqrt(reps))
    target = 2 * rho**2
    return SquareCovCheck(emp, target, se, within_band(emp, target, se))


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    residuals: np.ndarray
    sizes: np.ndarray
    medians: np.ndarray


def fit_cover_scaling(points) -> ScalingFit:
    """Least squares of median sqrt(tau_cov / 2 n^2) against log n.

    ``points`` is a sequence of ``(n, tau_samples)``.
    """
    pts = sorted((int(n), np.asarray(s, dtype=float)) for n, s in points)
    sizes = np.array([n for n, _ in pts])
    if len(np.unique(sizes)) < 3:
        raise InvalidParametersError("insufficient design: need at least 3 distinct sizes", sizes=sizes.tolist())
    if any(len(s) < 30 for _, s in pts):
        raise InvalidParametersError("insufficient design: need at least 30 samples per size")
    med = np.array([np.median(np.sqrt(s / (2.0 * n * n))) for n, s in pts])
    x = np.log(sizes.astype(float))
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, med, rcond=None)
    return ScalingFit(float(slope), float(intercept), med - (slope * x + intercept), sizes, med)


@dataclass(frozen=True)
class TauConcentration:
    mean_ratio: float
    mean_ratio_se: float
    sd_ratio: float
    reps: int


def tau_concentration_check(g, v0, t: float, reps: int, seed: int = 0) -> TauConcentration:
    """mean(tau(t)) / (2 t |E|) and SD(tau(t)) / (|E| sqrt t)."""
    from .walker import inverse_local_fields

    if reps < 100:
        raise InvalidParametersError("need at least 100 replicas", reps=reps)
    v = g.special if v0 is None else g.vertex(v0)
    _, tau, _ = inverse_local_fields(g, v, t, seed, range(reps))
    norm = 2 * t * g.edge_count
    sd = float(tau.std(ddof=1))
    return TauConcentration(
        mean_ratio=float(tau.mean() / norm),
        mean_ratio_se=sd / math.sqrt(reps) / norm,
        sd_ratio=sd / (g.edge_count * math.sqrt(t)),
        reps=reps,
    )
