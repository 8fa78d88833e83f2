"""Exact linear-algebra quantities on lattice graphs.

Green functions, effective resistances and harmonic measures all come from
the interior sub-Laplacian ``L_II`` (rows and columns of ``V \\ U``).  With
visits counted from step 0,

    G_U = L_II^{-1} D_I,        R_eff(x, U) = G_U(x, x) / d_x,

and ``L_II`` is also the precision matrix of the free field vanishing on U.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, InvalidParametersError, NotFoundError, NumericalFailure
from .lattice import LatticeGraph, box_boundary, disk_boundary, disk_sites

EULER_GAMMA = 0.5772156649015329
KERNEL_CONSTANT = (2 * EULER_GAMMA + math.log(8)) / math.pi
DEFAULT_KERNEL_RADIUS = 64


class SymmetricFactor:
    """Sparse LDL^T factorization of a symmetric positive-definite matrix.

    SuperLU in symmetric mode with no pivoting gives ``Pr A Pr^T = L U`` with
    ``U = diag(d) L^T``.  Besides solves, the factor maps standard normals to
    samples with covariance ``A^{-1}``: if ``w = Pr^T L diag(d)^{1/2} z`` then
    ``Cov(w) = A`` and ``A^{-1} w`` has covariance ``A^{-1}``.
    """

    def __init__(self, matrix):
        self.matrix = sp.csc_matrix(matrix, dtype=float)
        self.size = self.matrix.shape[0]
        try:
            self._lu = spla.splu(
                self.matrix,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options=dict(SymmetricMode=True),
            )
        except RuntimeError as exc:
            raise NumericalFailure(f"factorization failed: {exc}") from exc
        pivots = self._lu.U.diagonal()
        if not np.array_equal(self._lu.perm_r, self._lu.perm_c) or np.any(pivots <= 0):
            raise NumericalFailure("matrix is not symmetric positive definite")
        self._sqrt_pivots = np.sqrt(pivots)
        self._L = self._lu.L.tocsr()
        perm = self._lu.perm_r
        # Pr^T as a gather index: (Pr^T v)[i] = v[perm[i]]
        self._gather = perm

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self._lu.solve(np.asarray(b, dtype=float))

    def sample(self, z: np.ndarray) -> np.ndarray:
        """Map standard normals ``z`` (rows = coordinates) to N(0, A^{-1})."""
        z = np.asarray(z, dtype=float)
        scaled = z * (self._sqrt_pivots if z.ndim == 1 else self._sqrt_pivots[:, None])
        w = self._L @ scaled
        w = w[self._gather]
        return self._lu.solve(w)


def _key(indices) -> tuple:
    return tuple(sorted(int(i) for i in indices))


@lru_cache(maxsize=64)
def _interior(g: LatticeGraph, absorbing: tuple):
    """(interior vertex indices, position map, factor of L_II), cached per (g, U)."""
    mask = np.ones(g.num_vertices, dtype=bool)
    mask[list(absorbing)] = False
    interior = np.flatnonzero(mask)
    pos = np.full(g.num_vertices, -1, dtype=np.int64)
    pos[interior] = np.arange(len(interior))
    lap = g.laplacian()[interior][:, interior]
    return interior, pos, SymmetricFactor(lap)


def interior_factor(g: LatticeGraph, U) -> tuple:
    idx = g.vertices(U) if not isinstance(U, np.ndarray) else U
    if len(idx) == 0:
        raise InvalidParametersError("absorbing set is empty")
    return _interior(g, _key(idx))


@dataclass(frozen=True, eq=False)
class GreenSolution:
    graph: LatticeGraph
    absorbing: tuple  # vertex indices
    interior: np.ndarray
    _pos: np.ndarray
    factor: SymmetricFactor

    def _column(self, y: int) -> np.ndarray:
        """G_U(., y) over all vertices."""
        out = np.zeros(self.graph.num_vertices)
        p = self._pos[y]
        if p < 0:
            return out
        rhs = np.zeros(len(self.interior))
        rhs[p] = self.graph.degree[y]
        out[self.interior] = self.factor.solve(rhs)
        return out

    def green(self, x, y) -> float:
        xi, yi = self.graph.vertex(x), self.graph.vertex(y)
        return float(self._column(yi)[xi])

    def column(self, y) -> np.ndarray:
        return self._column(self.graph.vertex(y))

    def matrix(self) -> np.ndarray:
        """Dense G_U over all vertices (rows x, columns y)."""
        nv = self.graph.num_vertices
        out = np.zeros((nv, nv))
        inv = self.factor.solve(np.eye(len(self.interior)))
        inv = 0.5 * (inv + inv.T)
        out[np.ix_(self.interior, self.interior)] = inv * self.graph.degree[self.interior][None, :]
        return out

    def covariance(self) -> np.ndarray:
        """Normalized Green function G_U(x, y) / d_y, i.e. the free-field covariance."""
        return self.matrix() / self.graph.degree[None, :]

    def resistance(self, x) -> float:
        xi = self.graph.vertex(x)
        return self.green(xi, xi) / self.graph.degree[xi]

    def resistances(self) -> np.ndarray:
        """R_eff(x, U) for every vertex (0 on U)."""
        out = np.zeros(self.graph.num_vertices)
        size = len(self.interior)
        diag = np.empty(size)
        block = 512
        for start in range(0, size, block):
            stop = min(size, start + block)
            rhs = np.zeros((size, stop - start))
            rhs[np.arange(start, stop), np.arange(stop - start)] = 1.0
            diag[start:stop] = self.factor.solve(rhs)[np.arange(start, stop), np.arange(stop - start)]
        out[self.interior] = diag
        return out


def solve_green(g: LatticeGraph, U) -> GreenSolution:
    """Exact Green function of the walk killed on the vertex set ``U``."""
    idx = np.atleast_1d(g.vertices(U) if not isinstance(U, np.ndarray) else U)
    if len(idx) == 0:
        raise InvalidParametersError("no absorbing set")
    interior, pos, factor = _interior(g, _key(idx))
    return GreenSolution(g, _key(idx), interior, pos, factor)


def effective_resistance_reduction(g: LatticeGraph, x, U) -> float:
    """R_eff(x, U) by star-mesh elimination of every other vertex.

    Independent of the Laplacian solve; cost is cubic, meant for small graphs.
    """
    xi = g.vertex(x)
    targets = set(int(u) for u in g.vertices(U))
    if xi in targets:
        return 0.0
    sink = -1
    cond: dict[int, dict[int, float]] = {}

    def node(v):
        return sink if v in targets else v

    for u, v in g.edges():
        a, b = node(int(u)), node(int(v))
        if a == b:
            continue
        cond.setdefault(a, {}).setdefault(b, 0.0)
        cond.setdefault(b, {}).setdefault(a, 0.0)
        cond[a][b] += 1.0
        cond[b][a] += 1.0
    for k in [v for v in list(cond) if v not in (xi, sink)]:
        nbrs = cond.pop(k)
        total = sum(nbrs.values())
        for i in nbrs:
            del cond[i][k]
        items = list(nbrs.items())
        for a in range(len(items)):
            i, ci = items[a]
            for b in range(a + 1, len(items)):
                j, cj = items[b]
                c = ci * cj / total
                cond[i][j] = cond[i].get(j, 0.0) + c
                cond[j][i] = cond[j].get(i, 0.0) + c
    c = cond.get(xi, {}).get(sink, 0.0)
    if c == 0.0:
        raise NumericalFailure("x is disconnected from U")
    return 1.0 / c


def kernel_asymptotic(dx, dy) -> np.ndarray:
    """(2/pi) ln|x| + (2 gamma + ln 8)/pi - cos(4 theta) / (6 pi |x|^2)."""
    dx = np.asarray(dx, dtype=float)
    dy = np.asarray(dy, dtype=float)
    r2 = dx * dx + dy * dy
    theta = np.arctan2(dy, dx)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(r2) / math.pi + KERNEL_CONSTANT - np.cos(4 * theta) / (6 * math.pi * r2)


@lru_cache(maxsize=4)
def _kernel_table(radius: int) -> np.ndarray:
    """Exact a(x) for |x_i| <= radius, indexed ``table[x + R, y + R]``.

    Solves discrete harmonicity off the origin on [-N, N]^2 with a(0) = 0 and
    the asymptotic expansion as Dirichlet data on the outer square; boundary
    error is O(N^-4).
    """
    half = 2 * radius + 16
    m = 2 * half - 1
    tri = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(m, m))
    lap = (sp.kron(sp.eye(m), tri) + sp.kron(tri, sp.eye(m))).tolil()
    coords = np.arange(-half + 1, half)
    rhs = np.zeros((m, m))
    rhs[0, :] += kernel_asymptotic(-half, coords)
    rhs[-1, :] += kernel_asymptotic(half, coords)
    rhs[:, 0] += kernel_asymptotic(coords, -half)
    rhs[:, -1] += kernel_asymptotic(coords, half)
    origin = (half - 1) * m + (half - 1)
    lap.rows[origin] = [origin]
    lap.data[origin] = [1.0]
    rhs[half - 1, half - 1] = 0.0
    sol = spla.splu(lap.tocsc()).solve(rhs.ravel()).reshape(m, m)
    lo = half - 1 - radius
    table = sol[lo:lo + 2 * radius + 1, lo:lo + 2 * radius + 1].copy()
    table[radius, radius] = 0.0  # the solve leaves rounding noise at the pinned origin
    table.setflags(write=False)
    return table


def potential_kernel(x, radius: int = DEFAULT_KERNEL_RADIUS) -> float:
    """Potential kernel a(x) of simple random walk on Z^2, with a(0) = 0."""
    dx, dy = int(x[0]), int(x[1])
    if dx * dx + dy * dy <= radius * radius:
        return float(_kernel_table(radius)[dx + radius, dy + radius])
    return float(kernel_asymptotic(dx, dy))


def potential_kernel_array(dx: np.ndarray, dy: np.ndarray, radius: int = DEFAULT_KERNEL_RADIUS) -> np.ndarray:
    dx = np.asarray(dx, dtype=np.int64)
    dy = np.asarray(dy, dtype=np.int64)
    out = np.empty(np.broadcast(dx, dy).shape)
    inside = dx * dx + dy * dy <= radius * radius
    table = _kernel_table(radius)
    out[inside] = table[dx[inside] + radius, dy[inside] + radius]
    out[~inside] = kernel_asymptotic(dx[~inside], dy[~inside])
    return out


def green_via_kernel(g: LatticeGraph, x, y, radius: int = DEFAULT_KERNEL_RADIUS) -> float:
    """G_{dA}(x, y) = E_x a(S_tau - y) - a(x - y) on a wired box.

    The exit distribution onto the boundary is exact: the harmonic extension
    of ``z -> a(z - y)`` from the boundary sites is solved with the same
    interior Laplacian as the wired graph.
    """
    if g.kind != "wired-box":
        raise InvalidParametersError("green_via_kernel needs a wired box", kind=g.kind)
    n = g.n
    boundary = set(box_boundary(n))
    x, y = tuple(x), tuple(y)
    if x in boundary or y in boundary:
        return 0.0
    sol = solve_green(g, [g.special])
    ys = np.array(y)
    interior_sites = np.array([g.labels[v] for v in sol.interior])
    rhs = np.zeros(len(sol.interior))
    for step in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        nb = interior_sites + np.array(step)
        on_bd = (nb[:, 0] == 0) | (nb[:, 0] == n - 1) | (nb[:, 1] == 0) | (nb[:, 1] == n - 1)
        d = nb[on_bd] - ys
        rhs[on_bd] += potential_kernel_array(d[:, 0], d[:, 1], radius)
    exit_mean = sol.factor.solve(rhs)
    xi = g.vertex(x)
    return float(exit_mean[sol._pos[xi]] - potential_kernel((x[0] - y[0], x[1] - y[1]), radius))


def green_disk_approx(x, y, n: float) -> float:
    """Leading terms of the Green function killed on the disk of radius n.

    (1/2pi)(log|y| - log|x - y|) + (1/2pi)(log|x| - log n); the true value
    differs by an additive O(1), uniformly.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nx, ny, nd = np.hypot(*x), np.hypot(*y), np.hypot(*(x - y))
    if nx == 0 or ny == 0 or nd == 0:
        raise DomainError("formula is singular at the origin and on the diagonal")
    return (math.log(ny) - math.log(nd) + math.log(nx) - math.log(n)) / (2 * math.pi)


@dataclass(frozen=True)
class HarmonicMeasure:
    source: int
    target: tuple  # vertex indices, sorted
    weights: np.ndarray

    def as_dict(self, g: LatticeGraph) -> dict:
        return {g.labels[v]: float(w) for v, w in zip(self.target, self.weights)}


def harmonic_measure(g: LatticeGraph, x, B) -> HarmonicMeasure:
    """Exact law of the first hitting position of ``B`` from ``x``."""
    target = _key(g.vertices(B) if not isinstance(B, np.ndarray) else B)
    if not target:
        raise InvalidParametersError("harmonic measure needs a nonempty target")
    xi = g.vertex(x)
    weights = np.zeros(len(target))
    if xi in target:
        weights[target.index(xi)] = 1.0
        return HarmonicMeasure(xi, target, weights)
    interior, pos, factor = _interior(g, target)
    e = np.zeros(len(interior))
    e[pos[xi]] = 1.0
    w = factor.solve(e)
    cross = g.adjacency()[interior][:, list(target)]
    weights = np.asarray(cross.T @ w).ravel()
    return HarmonicMeasure(xi, target, weights)


def hitting_probabilities(g: LatticeGraph, target, avoid) -> np.ndarray:
    """P_v(tau_target < tau_avoid) for every vertex v (one solve)."""
    t = set(_key(g.vertices(target)))
    a = set(_key(g.vertices(avoid)))
    if t & a:
        raise InvalidParametersError("target and avoid sets overlap")
    absorbing = _key(t | a)
    interior, pos, factor = _interior(g, absorbing)
    cross = g.adjacency()[interior][:, sorted(t)]
    h = np.zeros(g.num_vertices)
    h[sorted(t)] = 1.0
    h[interior] = factor.solve(np.asarray(cross.sum(axis=1)).ravel())
    return h


def harmonic_tv_distance(h1: HarmonicMeasure, h2: HarmonicMeasure) -> float:
    if h1.target != h2.target:
        raise InvalidParametersError("harmonic measures live on different target sets")
    return float(min(1.0, 0.5 * np.abs(h1.weights - h2.weights).sum()))


def annulus_escape_prob(x, m: float, n: float) -> float:
    """Leading term (log|x| - log m) / (log n - log m) of escaping to radius n."""
    if not m < n:
        raise DomainError("inner radius must be below outer radius")
    r = math.hypot(x[0], x[1])
    if not m <= r <= n:
        raise DomainError(f"|x| = {r} outside [{m}, {n}]")
    return (math.log(r) - math.log(m)) / (math.log(n) - math.log(m))


def annulus_escape_exact(m: float, n: float) -> dict:
    """Exact P_x(tau_{dC_n} < tau_{dC_m}) for lattice x with m <= |x| <= n.

    Computed on a free box holding C_n, centered at the origin of the
    returned coordinates.
    """
    from .lattice import build_box

    half = int(math.ceil(n)) + 2
    g = build_box(2 * half + 1, "free")
    c = (half, half)
    outer = disk_boundary(c, n)
    inner_disk = disk_sites(c, m)
    inside_outer = set(disk_sites(c, n))
    beyond = [s for s in g.labels if s not in inside_outer]
    h = hitting_probabilities(g, outer + beyond, inner_disk)
    out = {}
    for s in inside_outer:
        r = math.hypot(s[0] - c[0], s[1] - c[1])
        if m <= r <= n:
            out[(s[0] - c[0], s[1] - c[1])] = float(h[g.vertex(s)])
    return out


def disk_green_exact(host: LatticeGraph) -> GreenSolution:
    """Green function of a disk-identified box killed at its identified vertex."""
    if host.special is None:
        raise NotFoundError("graph has no identified vertex")
    return solve_green(host, [host.special])
