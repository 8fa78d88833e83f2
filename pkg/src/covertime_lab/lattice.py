"""Lattice graphs with vertex identification, and the geometric packings.

Graphs are unit-conductance multigraphs stored in CSR form.  Parallel edges
are kept as repeated entries of the neighbor array, so picking a uniform
position in a vertex's neighbor slice is the multiplicity-weighted step of
the simple random walk.  Self-loops produced by identification are dropped.

Box sites carry coordinates ``(x, y)`` with ``0 <= x, y < n``.  A vertex
obtained by merging a set of sites is labelled ``"v0"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np

from .errors import InvalidParametersError, InvalidSizeError, NotFoundError

SPECIAL = "v0"

KINDS = ("wired-box", "free-box", "torus", "disk-identified-box", "path")


@dataclass(frozen=True, eq=False)
class LatticeGraph:
    kind: str
    n: int
    labels: tuple
    indptr: np.ndarray
    indices: np.ndarray
    special: int | None = None
    # sites merged into the special vertex, in row-major order
    merged: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "_index", {lab: i for i, lab in enumerate(self.labels)})
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)

    @property
    def num_vertices(self) -> int:
        return len(self.labels)

    @property
    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def edge_count(self) -> int:
        return len(self.indices) // 2

    @property
    def v0(self) -> Hashable:
        if self.special is None:
            raise NotFoundError(f"{self.kind} graph has no special vertex")
        return self.labels[self.special]

    def vertex(self, label) -> int:
        """Index of ``label``; integers that are not labels are taken as indices."""
        try:
            return self._index[_normalize(label)]
        except (KeyError, TypeError):
            pass
        if isinstance(label, (int, np.integer)) and 0 <= label < len(self.labels):
            return int(label)
        raise NotFoundError(f"vertex {label!r} not in {self.kind} graph")

    def vertices(self, labels: Iterable) -> np.ndarray:
        return np.array([self.vertex(lab) for lab in labels], dtype=np.int64)

    def neighbor_indices(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def site_vertex(self, site) -> int:
        """Vertex that the lattice site ``site`` was mapped to (``v0`` when merged)."""
        site = _normalize(site)
        if site in self._index:
            return self._index[site]
        if self.special is not None and site in set(self.merged):
            return self.special
        raise NotFoundError(f"site {site!r} not in {self.kind} graph")

    def adjacency(self):
        """Sparse adjacency matrix with parallel-edge multiplicities as entries."""
        import scipy.sparse as sp

        nv = self.num_vertices
        a = sp.csr_matrix(
            (np.ones(len(self.indices)), self.indices.copy(), self.indptr.copy()),
            shape=(nv, nv),
        )
        a.sum_duplicates()
        return a

    def laplacian(self):
        import scipy.sparse as sp

        return (sp.diags(self.degree.astype(float)) - self.adjacency()).tocsr()

    def edges(self) -> np.ndarray:
        """Each undirected edge once, as rows ``(u, v)`` with ``u <= v``."""
        src = np.repeat(np.arange(self.num_vertices), self.degree)
        keep = src < self.indices
        return np.column_stack([src[keep], self.indices[keep]])


def _normalize(label):
    if isinstance(label, list):
        return tuple(label)
    if isinstance(label, tuple):
        return tuple(int(c) for c in label)
    return label


def _assemble(kind, n, sites, edge_pairs, merged=(), meta=None) -> LatticeGraph:
    """Build a graph from lattice sites and site-level edges.

    ``merged`` sites collapse into one special vertex appended last; edges with
    both ends merged become self-loops and are discarded.
    """
    merged_set = set(merged)
    labels = [s for s in sites if s not in merged_set]
    index = {s: i for i, s in enumerate(labels)}
    special = None
    if merged_set:
        special = len(labels)
        labels.append(SPECIAL)
        for s in merged_set:
            index[s] = special
    src, dst = [], []
    for a, b in edge_pairs:
        u, v = index[a], index[b]
        if u == v:
            continue
        src += (u, v)
        dst += (v, u)
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    indptr = np.zeros(len(labels) + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    indptr = np.cumsum(indptr)
    return LatticeGraph(
        kind=kind,
        n=n,
        labels=tuple(labels),
        indptr=indptr,
        indices=dst,
        special=special,
        merged=tuple(sorted(merged_set)),
        meta=dict(meta or {}),
    )


def _grid_sites(n):
    return [(x, y) for x in range(n) for y in range(n)]


def _grid_edges(n):
    for x in range(n):
        for y in range(n):
            if x + 1 < n:
                yield (x, y), (x + 1, y)
            if y + 1 < n:
                yield (x, y), (x, y + 1)


def box_boundary(n: int) -> list[tuple[int, int]]:
    """Sites of the n x n box with a lattice neighbor outside the box."""
    return [(x, y) for x, y in _grid_sites(n) if x in (0, n - 1) or y in (0, n - 1)]


def build_box(n: int, boundary: str = "wired") -> LatticeGraph:
    """n x n box (n sites per side), free or with its boundary wired to ``v0``."""
    if boundary not in ("wired", "free"):
        raise InvalidParametersError(f"unknown boundary {boundary!r}")
    if n < 3:
        raise InvalidSizeError("box side must be at least 3", n=n)
    merged = box_boundary(n) if boundary == "wired" else ()
    kind = "wired-box" if boundary == "wired" else "free-box"
    return _assemble(kind, n, _grid_sites(n), _grid_edges(n), merged)


def build_torus(n: int) -> LatticeGraph:
    if n < 2:
        raise InvalidSizeError("torus side must be at least 2", n=n)
    pairs = []
    for x in range(n):
        for y in range(n):
            pairs.append(((x, y), ((x + 1) % n, y)))
            pairs.append(((x, y), (x, (y + 1) % n)))
    return _assemble("torus", n, _grid_sites(n), pairs)


def build_path(k: int = 1) -> LatticeGraph:
    """Path of ``k`` interior sites whose two ends are wired to ``v0``.

    ``k = 1`` is special-cased to the single-edge graph ``v0 - (1, 0)``.
    """
    if k < 1:
        raise InvalidSizeError("path needs at least one interior site", k=k)
    sites = [(i, 0) for i in range(k + 2)]
    pairs = [((i, 0), (i + 1, 0)) for i in range(k + 1)]
    if k == 1:
        sites, pairs = sites[:2], pairs[:1]
        merged = [(0, 0)]
    else:
        merged = [(0, 0), (k + 1, 0)]
    return _assemble("path", k, sites, pairs, merged)


def single_edge() -> LatticeGraph:
    """Two vertices ``v0`` and ``(1, 0)`` joined by one edge."""
    return build_path(1)


def box_center(n: int) -> tuple[int, int]:
    return (n // 2, n // 2)


def disk_sites(center, r: float) -> list[tuple[int, int]]:
    """Discrete ball {z in Z^2 : |z - center| <= r}."""
    cx, cy = center
    k = int(math.floor(r))
    out = []
    for dx in range(-k, k + 1):
        for dy in range(-k, k + 1):
            if dx * dx + dy * dy <= r * r:
                out.append((cx + dx, cy + dy))
    return out


def disk_boundary(center, r: float) -> list[tuple[int, int]]:
    """Sites of the discrete ball having a lattice neighbor outside it."""
    inside = set(disk_sites(center, r))
    out = []
    for x, y in sorted(inside):
        if any(nb not in inside for nb in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1))):
            out.append((x, y))
    return out


def identify_disk(n: int, radius: float, center=None) -> LatticeGraph:
    """Free n x n box with the ball of the given radius merged into ``v0``.

    Any radius >= 0 is accepted here; a radius below 1 merges the center site
    alone, which is a pure relabeling.
    """
    if n < 3:
        raise InvalidSizeError("box side must be at least 3", n=n)
    center = box_center(n) if center is None else tuple(center)
    disk = disk_sites(center, radius)
    if any(not (0 < x < n - 1 and 0 < y < n - 1) for x, y in disk):
        raise InvalidParametersError("identified disk must lie inside the box", n=n, radius=radius)
    return _assemble(
        "disk-identified-box",
        n,
        _grid_sites(n),
        _grid_edges(n),
        disk,
        meta={"radius": radius, "center": center},
    )


def scale(n: float, k: float) -> float:
    """n_k = n / (log n)^k with the natural logarithm."""
    return n / math.log(n) ** k


def build_disk_identified_box(n: int, kappa: float, center=None) -> LatticeGraph:
    """Free box with the disk of radius n/(log n)^(2 kappa) identified."""
    if n < 3:
        raise InvalidSizeError("box side must be at least 3", n=n)
    radius = scale(n, 2 * kappa)
    if radius < 1:
        raise InvalidParametersError(
            "identified disk radius below 1; reduce kappa or raise n", n=n, kappa=kappa, radius=radius
        )
    g = identify_disk(n, radius, center)
    g.meta["kappa"] = kappa
    return g


def neighbors(g: LatticeGraph, v) -> list:
    """Multiset of neighbor labels of ``v``; length equals the degree."""
    i = g.vertex(v)
    return [g.labels[j] for j in g.neighbor_indices(i)]


def write_adjacency(g: LatticeGraph, path) -> None:
    """Debug dump: one undirected edge per line as ``u v``."""

    def fmt(lab):
        return lab if isinstance(lab, str) else ",".join(map(str, lab))

    with open(path, "w", encoding="utf-8") as fh:
        for u, v in g.edges():
            fh.write(f"{fmt(g.labels[u])} {fmt(g.labels[v])}\n")


@dataclass(frozen=True, eq=False)
class Packing:
    style: str
    regions: tuple  # vertex-index arrays
    kappa: float
    sub_side: float
    count: int
    anchors: tuple

    def region_sites(self, g: LatticeGraph, i: int) -> list:
        return [g.labels[v] for v in self.regions[i]]


def box_region(g: LatticeGraph, corner, side: int) -> np.ndarray:
    """Vertex indices of the ``side`` x ``side`` box with lower-left ``corner``."""
    x0, y0 = corner
    sites = [(x0 + dx, y0 + dy) for dx in range(side) for dy in range(side)]
    idx = []
    for s in sites:
        v = g.site_vertex(s)
        if v == g.special:
            raise InvalidParametersError("region touches the identified set", corner=corner, side=side)
        idx.append(v)
    return np.array(idx, dtype=np.int64)


def packing_parameters(n: int, kappa: float, style: str) -> dict:
    ln = math.log(n)
    if style == "boxes":
        return {
            "m": math.floor(ln ** (kappa / 3) / 12) - 1,
            "L": int(scale(n, 2 * kappa)),
            "spacing": 3 * scale(n, kappa),
            "height": scale(n, 2 * kappa),
        }
    if style == "balls":
        return {
            "m": math.floor(ln ** (kappa / 2) / 2),
            "radius": scale(n, 5 * kappa),
            "ring": scale(n, kappa / 2),
            "spacing": scale(n, kappa),
        }
    raise InvalidParametersError(f"unknown packing style {style!r}")


def build_packing(g: LatticeGraph, style: str, kappa: float) -> Packing:
    if style == "boxes":
        if g.kind != "wired-box":
            raise InvalidParametersError("box packing needs a wired box", kind=g.kind)
        return _box_packing(g, kappa)
    if style == "balls":
        if g.kind != "disk-identified-box":
            raise InvalidParametersError("ball packing needs a disk-identified box", kind=g.kind)
        return _ball_packing(g, kappa)
    raise InvalidParametersError(f"unknown packing style {style!r}")


def _box_packing(g: LatticeGraph, kappa: float) -> Packing:
    n = g.n
    p = packing_parameters(n, kappa, "boxes")
    m, side = p["m"], p["L"]
    if m < 1 or side * side < 2:
        raise InvalidParametersError("box packing is empty at these parameters", m=m, L=side)
    y0 = int(p["height"])
    anchors, regions = [], []
    for i in range(1, m + 1):
        corner = (int(i * p["spacing"]), y0)
        inside = all(0 < c and c + side - 1 < n - 1 for c in corner)
        if not inside:
            raise InvalidParametersError("packing box leaves the interior", m=m, L=side, i=i)
        anchors.append(corner)
        regions.append(box_region(g, corner, side))
    return Packing("boxes", tuple(regions), kappa, side, m, tuple(anchors))


def ring_centers(center, ring: float, m: int, spacing: float) -> list:
    """Greedy centers on the discrete circle of radius ``ring``, in angular order.

    A site is kept when it is at distance >= ``spacing`` from every kept
    site; at most ``m`` sites are returned.
    """
    sites = disk_boundary(center, ring)
    sites.sort(key=lambda s: math.atan2(s[1] - center[1], s[0] - center[0]) % (2 * math.pi))
    chosen: list = []
    for s in sites:
        if len(chosen) == m:
            break
        if all(math.dist(s, c) >= spacing for c in chosen):
            chosen.append(s)
    return chosen


def _ball_packing(g: LatticeGraph, kappa: float) -> Packing:
    n = g.n
    p = packing_parameters(n, kappa, "balls")
    m, radius = p["m"], p["radius"]
    center = g.meta.get("center", box_center(n))
    if m < 1 or len(disk_sites((0, 0), radius)) < 2:
        raise InvalidParametersError("ball packing is empty at these parameters", m=m, L=radius)
    chosen = ring_centers(center, p["ring"], m, p["spacing"])
    if len(chosen) < m:
        raise InvalidParametersError("ring too small for the requested centers", m=m, placed=len(chosen))
    regions = []
    for c in chosen:
        sites = disk_sites(c, radius)
        idx = []
        for s in sites:
            if not (0 < s[0] < n - 1 and 0 < s[1] < n - 1):
                raise InvalidParametersError("packing ball leaves the box interior", m=m, L=radius)
            v = g.site_vertex(s)
            if v == g.special:
                raise InvalidParametersError("packing ball meets the identified disk", m=m, L=radius)
            idx.append(v)
        regions.append(np.array(idx, dtype=np.int64))
    return Packing("balls", tuple(regions), kappa, radius, m, tuple(chosen))


def region_from_sites(g: LatticeGraph, sites: Sequence) -> np.ndarray:
    return np.array([g.site_vertex(s) for s in sites], dtype=np.int64)
