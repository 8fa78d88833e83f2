"""Continuous-time random walk with local-time, excursion and crossing accounting.

Jumps follow the simple random walk (uniform over the neighbor slice, so
parallel edges weigh in with their multiplicity); holding times are i.i.d.
Exp(1).  Local time is holding time divided by degree.

The hot loop is a numba kernel that consumes pre-drawn uniforms and
exponentials in chunks; the Python side refills the buffers from the
replica's Philox stream, so a replica's trajectory depends on (seed, replica)
only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import InvalidParametersError, NotFoundError
from .lattice import LatticeGraph
from .rng import WALK, replica_rng

COVERED = "covered"
INVERSE_LOCAL = "inverse-local-reached"
HORIZON = "horizon-reached"
BUDGET = "step-budget"

DEFAULT_BUDGET = 10**9

_MODE_COVER, _MODE_INVERSE, _MODE_HORIZON = 0, 1, 2
_RUNNING, _DONE, _OUT_OF_BUDGET = 0, 1, 2

# state_i slots
_CUR, _STEPS, _COVERED, _STATUS, _PHASE, _PATHLEN = range(6)
# state_f slots
_ELAPSED, _V0HOLD, _TAUCOV, _TAURET = range(4)


@numba.njit(cache=True)
def _advance(indptr, indices, hold, visits, state_i, state_f, unif, expo,
             mode, target, v0, start, budget, record, path_v, path_h):
    nv = len(visits)
    cur = state_i[_CUR]
    steps = state_i[_STEPS]
    covered = state_i[_COVERED]
    phase = state_i[_PHASE]
    p = 0
    elapsed = state_f[_ELAPSED]
    v0hold = state_f[_V0HOLD]
    status = _RUNNING
    k = 0
    while k < len(unif):
        h = expo[k]
        if mode == _MODE_INVERSE and cur == v0 and v0hold + h >= target:
            h = target - v0hold
            status = _DONE
        elif mode == _MODE_HORIZON and elapsed + h >= target:
            h = target - elapsed
            status = _DONE
        hold[cur] += h
        elapsed += h
        if cur == v0:
            v0hold += h
        if record:
            path_v[p] = cur
            path_h[p] = h
            p += 1
        k += 1
        if status == _DONE:
            break
        lo = indptr[cur]
        deg = indptr[cur + 1] - lo
        cur = indices[lo + int(unif[k - 1] * deg)]
        steps += 1
        visits[cur] += 1
        if mode == _MODE_COVER:
            if phase == 0:
                if visits[cur] == 1:
                    covered += 1
                    if covered == nv:
                        state_f[_TAUCOV] = elapsed
                        phase = 1
            elif cur == start:
                state_f[_TAURET] = elapsed
                status = _DONE
                break
        if steps >= budget:
            status = _OUT_OF_BUDGET
            break
    state_i[_CUR] = cur
    state_i[_STEPS] = steps
    state_i[_COVERED] = covered
    state_i[_PHASE] = phase
    state_i[_STATUS] = status
    state_i[_PATHLEN] = p
    state_f[_ELAPSED] = elapsed
    state_f[_V0HOLD] = v0hold
    return k


@dataclass(eq=False)
class WalkRecord:
    graph: LatticeGraph
    start: int
    local_time: np.ndarray
    visit_count: np.ndarray
    elapsed: float
    steps: int
    stop_reason: str
    tau_cov: float | None = None
    tau_cov_return: float | None = None
    rng_seed: tuple = (0, 0)
    # sojourn sequence: path[i] is the i-th vertex occupied, holds[i] its holding time
    path: np.ndarray | None = None
    holds: np.ndarray | None = None
    _excursions: list | None = field(default=None, repr=False)

    @property
    def excursions(self) -> list:
        if self._excursions is None:
            self._excursions = excursion_decompose(self, self.start)
        return self._excursions

    def holding_total(self) -> float:
        return float(np.dot(self.graph.degree, self.local_time))


def _chunk_size(g: LatticeGraph, mode: int, target: float, degree_v0: int = 1) -> int:
    if mode == _MODE_INVERSE:
        # target is t * d_v0 and E[tau(t)] = 2 t |E|
        est = 1.2 * 2 * target / degree_v0 * g.edge_count
    elif mode == _MODE_HORIZON:
        est = 1.1 * target + 10 * math.sqrt(target)
    else:
        nv = g.num_vertices
        est = nv * max(1.0, math.log(nv)) ** 2
    return int(min(max(est + 64, 256), 1 << 20))


def _simulate(g: LatticeGraph, start: int, mode: int, target: float, v0: int,
              rng: np.random.Generator, budget: int, record: bool):
    nv = g.num_vertices
    hold = np.zeros(nv)
    visits = np.zeros(nv, dtype=np.int64)
    visits[start] = 1
    state_i = np.zeros(6, dtype=np.int64)
    state_i[_CUR] = start
    state_i[_COVERED] = 1
    state_f = np.zeros(4)
    state_f[_TAUCOV] = np.nan
    state_f[_TAURET] = np.nan
    if mode == _MODE_COVER and nv == 1:
        state_f[_TAUCOV] = 0.0
        state_i[_PHASE] = 1
    chunk = _chunk_size(g, mode, target, g.degree[v0] if v0 >= 0 else 1)
    paths_v, paths_h = [], []
    empty_i = np.zeros(0, dtype=np.int64)
    empty_f = np.zeros(0)
    while True:
        unif = rng.random(chunk)
        expo = rng.standard_exponential(chunk)
        if record:
            pv = np.empty(chunk, dtype=np.int64)
            ph = np.empty(chunk)
        else:
            pv, ph = empty_i, empty_f
        _advance(g.indptr, g.indices, hold, visits, state_i, state_f, unif, expo,
                 mode, target, v0, start, budget, record, pv, ph)
        if record:
            paths_v.append(pv[:state_i[_PATHLEN]])
            paths_h.append(ph[:state_i[_PATHLEN]])
        if state_i[_STATUS] != _RUNNING:
            break
    if mode == _MODE_INVERSE and state_i[_STATUS] == _DONE:
        # the truncated sojourn makes this exact up to rounding; pin it
        hold[v0] = target
    path = holds = None
    if record:
        path = np.concatenate(paths_v)
        holds = np.concatenate(paths_h)
        if mode == _MODE_COVER:
            # final arrival, no holding accrued
            path = np.append(path, state_i[_CUR])
            holds = np.append(holds, 0.0)
    return hold, visits, state_i, state_f, path, holds


def _record(g, start, hold, visits, state_i, state_f, path, holds, done_reason, seed, replica):
    reason = done_reason if state_i[_STATUS] == _DONE else BUDGET
    tau_cov = None if math.isnan(state_f[_TAUCOV]) else float(state_f[_TAUCOV])
    tau_ret = None if math.isnan(state_f[_TAURET]) else float(state_f[_TAURET])
    return WalkRecord(
        graph=g,
        start=start,
        local_time=hold / g.degree,
        visit_count=visits,
        elapsed=float(state_f[_ELAPSED]),
        steps=int(state_i[_STEPS]),
        stop_reason=reason,
        tau_cov=tau_cov,
        tau_cov_return=tau_ret,
        rng_seed=(seed, replica),
        path=path,
        holds=holds,
    )


def _check_budget(budget):
    if budget <= 0:
        raise InvalidParametersError("step budget must be positive", budget=budget)


def run_until_cover(g: LatticeGraph, start=None, seed: int = 0, replica: int = 0,
                    budget: int = DEFAULT_BUDGET, record_path: bool = False) -> WalkRecord:
    """Walk until every vertex is visited, then on to the first return to ``start``."""
    _check_budget(budget)
    s = g.special if start is None and g.special is not None else g.vertex(0 if start is None else start)
    rng = replica_rng(seed, replica, WALK)
    out = _simulate(g, s, _MODE_COVER, 0.0, -1, rng, budget, record_path)
    return _record(g, s, *out, COVERED, seed, replica)


def run_until_inverse_local(g: LatticeGraph, v0=None, t: float = 1.0, seed: int = 0, replica: int = 0,
                            budget: int = DEFAULT_BUDGET, record_path: bool = False) -> WalkRecord:
    """Walk from ``v0`` up to tau(t), the time the local time at ``v0`` reaches ``t``.

    The last sojourn at ``v0`` is truncated so the recorded local time there
    equals ``t`` exactly.
    """
    _check_budget(budget)
    if not t > 0:
        raise InvalidParametersError("local-time level must be positive", t=t)
    s = g.special if v0 is None else g.vertex(v0)
    if s is None:
        raise NotFoundError("graph has no special vertex; pass v0")
    rng = replica_rng(seed, replica, WALK)
    out = _simulate(g, s, _MODE_INVERSE, t * g.degree[s], s, rng, budget, record_path)
    return _record(g, s, *out, INVERSE_LOCAL, seed, replica)


def run_for_time(g: LatticeGraph, start=None, horizon: float = 1.0, seed: int = 0, replica: int = 0,
                 budget: int = DEFAULT_BUDGET, record_path: bool = False) -> WalkRecord:
    """Walk for a fixed continuous-time horizon."""
    _check_budget(budget)
    s = g.special if start is None and g.special is not None else g.vertex(0 if start is None else start)
    rng = replica_rng(seed, replica, WALK)
    out = _simulate(g, s, _MODE_HORIZON, float(horizon), -1, rng, budget, record_path)
    return _record(g, s, *out, HORIZON, seed, replica)


def inverse_local_fields(g: LatticeGraph, v0: int, t: float, seed: int, replicas, budget: int = DEFAULT_BUDGET):
    """Local-time fields at tau(t) for a range of replicas, without records.

    Returns ``(fields, elapsed, visits)`` with one row per replica.
    """
    replicas = list(replicas)
    nv = g.num_vertices
    fields = np.empty((len(replicas), nv))
    elapsed = np.empty(len(replicas))
    visits = np.empty((len(replicas), nv), dtype=np.int64)
    target = t * g.degree[v0]
    for row, r in enumerate(replicas):
        rng = replica_rng(seed, r, WALK)
        hold, vis, state_i, state_f, _, _ = _simulate(g, v0, _MODE_INVERSE, target, v0, rng, budget, False)
        if state_i[_STATUS] != _DONE:
            raise InvalidParametersError("step budget exhausted before tau(t)", replica=r, budget=budget)
        fields[row] = hold / g.degree
        elapsed[row] = state_f[_ELAPSED]
        visits[row] = vis
    return fields, elapsed, visits


def excursion_decompose(rec: WalkRecord, v0=None) -> list[tuple[int, int]]:
    """Minimal segments ``(i, j)`` of the sojourn path with path[i] = path[j] = v0.

    Consecutive segments share their endpoint; a trailing segment that never
    returns to ``v0`` is not an excursion and is left out.
    """
    if rec.path is None:
        raise InvalidParametersError("record has no stored path; rerun with record_path=True")
    v = rec.start if v0 is None else rec.graph.vertex(v0)
    at = np.flatnonzero(rec.path == v)
    return [(int(a), int(b)) for a, b in zip(at[:-1], at[1:])]


def excursion_hits(rec: WalkRecord, segments, region) -> np.ndarray:
    """Boolean per segment: did the excursion visit any vertex of ``region``?"""
    mask = np.zeros(rec.graph.num_vertices, dtype=bool)
    mask[np.asarray(region, dtype=np.int64)] = True
    inside = mask[rec.path]
    csum = np.concatenate([[0], np.cumsum(inside)])
    return np.array([csum[b + 1] - csum[a] > 0 for a, b in segments], dtype=bool)


def occurrence_times(rec: WalkRecord, indices=None) -> np.ndarray:
    """Local time at v0 at which each excursion set off (nondecreasing)."""
    segs = rec.excursions
    v = rec.start
    at_v0 = rec.path == v
    cum = np.cumsum(np.where(at_v0, rec.holds, 0.0)) / rec.graph.degree[v]
    stamps = np.array([cum[a] for a, _ in segs])
    if indices is None:
        return stamps
    idx = np.atleast_1d(indices)
    if len(idx) and (idx.min() < -len(segs) or idx.max() >= len(segs)):
        raise NotFoundError(f"excursion index out of range (have {len(segs)})")
    return stamps[idx]


@dataclass(frozen=True)
class CrossingTrace:
    inner: tuple
    outer: tuple
    endpoints: np.ndarray  # vertex indices Z_k, in order

    @property
    def count(self) -> int:
        return len(self.endpoints)


@numba.njit(cache=True)
def _crossings(path, in_inner, in_outer):
    out = np.empty(len(path), dtype=np.int64)
    k = 0
    armed = False
    for v in path:
        if in_inner[v]:
            armed = True
        elif armed and in_outer[v]:
            out[k] = v
            k += 1
            armed = False
    return out[:k]


def crossing_trace(rec: WalkRecord, inner, outer) -> CrossingTrace:
    """Endpoints of the successive minimal segments from ``inner`` to ``outer``."""
    if rec.path is None:
        raise InvalidParametersError("record has no stored path; rerun with record_path=True")
    g = rec.graph
    a = np.unique(np.asarray(inner, dtype=np.int64))
    b = np.unique(np.asarray(outer, dtype=np.int64))
    if len(a) == 0 or len(b) == 0 or np.intersect1d(a, b).size:
        raise InvalidParametersError("crossing regions must be disjoint and nonempty")
    in_a = np.zeros(g.num_vertices, dtype=np.bool_)
    in_b = np.zeros(g.num_vertices, dtype=np.bool_)
    in_a[a] = True
    in_b[b] = True
    return CrossingTrace(tuple(a.tolist()), tuple(b.tolist()), _crossings(rec.path, in_a, in_b))


def thin_point_event(rec: WalkRecord, B, threshold: int = 120):
    """Whether some vertex of ``B`` was visited at most ``threshold`` times.

    Returns ``(occurred, witness)``; the witness is the first such vertex.
    """
    region = np.asarray(B, dtype=np.int64)
    counts = rec.visit_count[region]
    hit = np.flatnonzero(counts <= threshold)
    if hit.size == 0:
        return False, None
    return True, int(region[hit[0]])
