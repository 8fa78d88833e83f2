"""Discrete Gaussian free field: exact sampling, maxima, detection events."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidParametersError
from .exactsolve import interior_factor
from .lattice import LatticeGraph, build_box
from .rng import FIELD, replica_rng

SQRT_2_OVER_PI = math.sqrt(2 / math.pi)
_BLOCK = 512


@dataclass(frozen=True, eq=False)
class GffSample:
    graph: LatticeGraph
    zero_set: tuple
    values: np.ndarray
    seed: tuple


def _zero_indices(g: LatticeGraph, U) -> np.ndarray:
    idx = np.atleast_1d(U if isinstance(U, np.ndarray) else g.vertices(U)).astype(np.int64)
    if idx.size == 0:
        raise InvalidParametersError("GFF needs a nonempty zero set")
    return np.unique(idx)


def gff_fields(g: LatticeGraph, U, seed: int, replicas, stream: int = FIELD) -> np.ndarray:
    """Independent fields, one row per replica; columns follow vertex order.

    The interior Laplacian (the precision matrix) is factored once per
    (graph, zero set); each replica back-solves its own standard-normal vector.
    """
    zero = _zero_indices(g, U)
    interior, _, factor = interior_factor(g, zero)
    replicas = list(replicas)
    out = np.zeros((len(replicas), g.num_vertices))
    for lo in range(0, len(replicas), _BLOCK):
        block = replicas[lo:lo + _BLOCK]
        z = np.empty((len(interior), len(block)))
        for j, r in enumerate(block):
            z[:, j] = replica_rng(seed, r, stream).standard_normal(len(interior))
        out[lo:lo + len(block), interior] = factor.sample(z).T
    return out


def sample_gff(g: LatticeGraph, U, seed: int = 0, replica: int = 0) -> GffSample:
    zero = _zero_indices(g, U)
    values = gff_fields(g, zero, seed, [replica])[0]
    return GffSample(g, tuple(zero.tolist()), values, (seed, replica))


@dataclass(frozen=True)
class MaxStatistics:
    n: int
    reps: int
    max_samples: np.ndarray
    mean: float
    median: float
    std: float | None

    @classmethod
    def from_samples(cls, n: int, samples) -> "MaxStatistics":
        s = np.asarray(samples, dtype=float)
        std = float(s.std(ddof=1)) if len(s) > 1 else None
        return cls(n, len(s), s, float(s.mean()), float(np.median(s)), std)


def max_statistics(n: int, reps: int, seed: int = 0, replica_offset: int = 0) -> MaxStatistics:
    """Maximum of the GFF on the wired n x n box, boundary included.

    The boundary carries the value 0, so each sample is
    ``max(0, max over interior vertices)``.
    """
    if reps < 1:
        raise InvalidParametersError("need at least one replica", reps=reps)
    g = build_box(n, "wired")
    interior = np.flatnonzero(np.arange(g.num_vertices) != g.special)
    maxima = np.empty(reps)
    for lo in range(0, reps, _BLOCK):
        reps_block = range(replica_offset + lo, replica_offset + min(reps, lo + _BLOCK))
        fields = gff_fields(g, [g.special], seed, reps_block)
        maxima[lo:lo + len(reps_block)] = np.maximum(fields[:, interior].max(axis=1), 0.0)
    return MaxStatistics.from_samples(n, maxima)


def bz_prediction(n: float) -> float:
    """sqrt(2/pi) (log n - 3/(8 log 2) log log n), the expected maximum up to O(1)."""
    if n < 16:
        raise DomainError("prediction needs n >= 16 so that log log n > 0")
    ln = math.log(n)
    return SQRT_2_OVER_PI * (ln - 3 / (8 * math.log(2)) * math.log(ln))


def detection_event(sample: GffSample, B, M: float):
    """Is there v in B with |eta_v - M| |eta_u - M| <= 1/4 for every neighbor u?

    Returns ``(occurred, witness)``.
    """
    g = sample.graph
    region = np.asarray(B, dtype=np.int64)
    eta = sample.values
    for v in region:
        nbrs = g.neighbor_indices(v)
        if np.all(np.abs(eta[v] - M) * np.abs(eta[nbrs] - M) <= 0.25):
            return True, int(v)
    return False, None


def detection_indicator(g: LatticeGraph, fields: np.ndarray, B, M: float) -> np.ndarray:
    """Vectorized ``detection_event`` over rows of ``fields``."""
    region = np.asarray(B, dtype=np.int64)
    dev = np.abs(fields - M)
    ok = np.ones((fields.shape[0], len(region)), dtype=bool)
    for j, v in enumerate(region):
        nbrs = g.neighbor_indices(v)
        ok[:, j] = np.all(dev[:, [v]] * dev[:, nbrs] <= 0.25, axis=1)
    return ok.any(axis=1)


@dataclass(frozen=True)
class DominationReport:
    p_coarse: float  # P(sup over region of the field vanishing on U1 >= level)
    p_fine: float  # same for the field vanishing on the larger set U2
    se_coarse: float
    se_fine: float
    ratio: float
    ratio_se: float
    reps: int
    violation: bool  # ratio below 1/2 by more than 3 standard errors


def quantile_domination_check(g: LatticeGraph, U1, U2, region, level: float, reps: int,
                              seed: int = 0) -> DominationReport:
    """Compare tail probabilities of the region maximum for nested zero sets."""
    z1 = set(_zero_indices(g, U1).tolist())
    z2 = set(_zero_indices(g, U2).tolist())
    if not z1 <= z2:
        raise InvalidParametersError("zero sets are not nested (need U1 subset of U2)")
    region = np.asarray(region, dtype=np.int64)
    f1 = gff_fields(g, sorted(z1), seed, range(reps), stream=FIELD)
    f2 = gff_fields(g, sorted(z2), seed, range(reps), stream=FIELD + 1)
    p1 = float(np.mean(f1[:, region].max(axis=1) >= level))
    p2 = float(np.mean(f2[:, region].max(axis=1) >= level))
    se1 = math.sqrt(p1 * (1 - p1) / reps)
    se2 = math.sqrt(p2 * (1 - p2) / reps)
    if p2 == 0:
        ratio, rse = math.inf if p1 > 0 else 1.0, 0.0
    else:
        ratio = p1 / p2
        rse = ratio * math.sqrt((se1 / p1) ** 2 + (se2 / p2) ** 2) if p1 > 0 else se1 / p2
    return DominationReport(p1, p2, se1, se2, ratio, rse, reps, ratio + 3 * rse < 0.5)


def markov_residual_variance(fields: np.ndarray, v: int, others) -> tuple[float, float]:
    """Regress eta_v on the other coordinates; return (residual variance, its SE).

    For the free field this is the conditional variance 1 / d_v.
    """
    others = np.asarray(others, dtype=np.int64)
    X = fields[:, others]
    y = fields[:, v]
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = len(y) - len(others)
    var = float(resid @ resid / dof)
    # residual variance of a Gaussian regression: chi-square with dof degrees
    return var, var * math.sqrt(2.0 / dof)
