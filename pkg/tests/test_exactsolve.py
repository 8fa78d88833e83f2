import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from covertime_lab.errors import DomainError, InvalidParametersError
from covertime_lab.exactsolve import (HarmonicMeasure, annulus_escape_exact, annulus_escape_prob, disk_green_exact,
                                      effective_resistance_reduction, green_disk_approx, green_via_kernel,
                                      harmonic_measure, harmonic_tv_distance, hitting_probabilities,
                                      kernel_asymptotic, potential_kernel, solve_green)
from covertime_lab.lattice import (box_center, build_box, build_path, build_torus, disk_boundary, disk_sites,
                                   identify_disk)


def test_wired_3x3_green():
    g = build_box(3)
    sol = solve_green(g, [g.special])
    assert sol.green((1, 1), (1, 1)) == pytest.approx(1.0, abs=1e-12)
    assert sol.resistance((1, 1)) == pytest.approx(0.25, abs=1e-12)
    assert sol.green("v0", (1, 1)) == 0.0


def test_wired_5x5_solve_matches_reduction():
    g = build_box(5)
    sol = solve_green(g, [g.special])
    r = effective_resistance_reduction(g, (2, 2), [g.special])
    assert sol.green((2, 2), (2, 2)) == pytest.approx(4 * r, abs=1e-10)


def test_single_edge_resistance():
    g = build_path(1)
    assert solve_green(g, [g.special]).resistance((1, 0)) == pytest.approx(1.0)


def test_empty_absorbing_set():
    with pytest.raises(InvalidParametersError):
        solve_green(build_box(5), [])


@pytest.mark.parametrize("graph,U", [
    (build_box(5), ["v0"]),
    (build_box(4, "free"), [(0, 0)]),
    (build_torus(4), [(0, 0)]),
    (build_box(4, "free"), [(0, 0), (3, 2)]),
])
def test_resistance_oracle_exhaustive(graph, U):
    sol = solve_green(graph, U)
    res = sol.resistances()
    for v in range(graph.num_vertices):
        assert res[v] == pytest.approx(effective_resistance_reduction(graph, v, U), abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(n=st.integers(3, 7), picks=st.lists(st.integers(0, 48), min_size=1, max_size=4))
def test_green_degree_normalized_symmetry(n, picks):
    g = build_box(n, "free")
    U = sorted({p % g.num_vertices for p in picks})
    G = solve_green(g, np.array(U)).matrix()
    d = g.degree
    assert np.allclose(G / d[None, :], (G / d[None, :]).T, atol=1e-9)
    assert np.all(G[U, :] == 0)


def test_potential_kernel_values():
    assert potential_kernel((0, 0)) == 0.0
    assert potential_kernel((1, 0)) == pytest.approx(1.0, abs=1e-8)
    assert potential_kernel((1, 1)) == pytest.approx(4 / math.pi, abs=1e-8)
    assert potential_kernel((0, -1)) == pytest.approx(potential_kernel((1, 0)), abs=1e-12)


def test_potential_kernel_switchover():
    R = 64
    for p in [(64, 0), (45, 45), (60, 22), (30, 56)]:
        exact = potential_kernel(p, radius=R)
        assert abs(exact - float(kernel_asymptotic(*p))) < 1e-4


def test_potential_kernel_is_harmonic_off_origin():
    for p in [(1, 0), (3, 4), (10, -7)]:
        x, y = p
        avg = np.mean([potential_kernel((x + 1, y)), potential_kernel((x - 1, y)),
                       potential_kernel((x, y + 1)), potential_kernel((x, y - 1))])
        assert avg == pytest.approx(potential_kernel(p), abs=1e-9)


@pytest.mark.parametrize("n,dx", [(21, (0, 0)), (41, (1, 0)), (31, (4, -3))])
def test_green_via_kernel_agrees(n, dx):
    g = build_box(n)
    c = box_center(n)
    y = (c[0] + dx[0], c[1] + dx[1])
    assert abs(green_via_kernel(g, c, y) - solve_green(g, [g.special]).green(c, y)) < 1e-3


def test_green_via_kernel_boundary_is_absorbed():
    g = build_box(21)
    assert green_via_kernel(g, (0, 5), (10, 10)) == 0.0
    with pytest.raises(InvalidParametersError):
        green_via_kernel(build_torus(5), (1, 1), (2, 2))


def test_green_disk_approx_algebra():
    n = 10.0
    x = (10.0, 0.0)
    y = (5.0, 5.0 * math.sqrt(3))
    assert green_disk_approx(x, y, n) == pytest.approx(0.0, abs=1e-12)
    a, b = (3.0, 1.0), (-2.0, 4.0)
    # the two leading terms together are symmetric in x and y
    assert green_disk_approx(a, b, 20) == pytest.approx(green_disk_approx(b, a, 20), abs=1e-15)
    with pytest.raises(DomainError):
        green_disk_approx((0, 0), (1, 1), 5)
    with pytest.raises(DomainError):
        green_disk_approx((1, 1), (1, 1), 5)


def test_green_disk_offset_stable():
    # walk killed on the identified disk, points outside it
    host = 101
    c = box_center(host)
    x, y = (10, 0), (12, 0)
    offsets = []
    for r in (3.0, 5.0, 8.0):
        g = identify_disk(host, r)
        sol = disk_green_exact(g)
        xs, ys = (c[0] + x[0], c[1] + x[1]), (c[0] + y[0], c[1] + y[1])
        offsets.append(sol.green(xs, ys) / g.degree[g.vertex(ys)] - green_disk_approx(x, y, r))
    assert max(offsets) - min(offsets) <= 0.15


def test_harmonic_measure_point_mass():
    g = build_box(9, "free")
    h = harmonic_measure(g, (2, 2), [(2, 2), (5, 5)])
    assert h.as_dict(g) == {(2, 2): 1.0, (5, 5): 0.0}


def test_harmonic_measure_symmetry_and_normalization():
    n, r = 31, 9
    g = build_box(n, "free")
    c = box_center(n)
    ring = disk_boundary(c, r)
    h = harmonic_measure(g, c, ring)
    assert h.weights.sum() == pytest.approx(1.0, abs=1e-10)
    assert np.all(h.weights >= -1e-14)
    w = h.as_dict(g)
    for (x, y), val in w.items():
        dx, dy = x - c[0], y - c[1]
        for sx, sy in [(-dx, dy), (dx, -dy), (dy, dx), (-dy, -dx)]:
            assert w[(c[0] + sx, c[1] + sy)] == pytest.approx(val, abs=1e-10)


def test_harmonic_measure_flat_on_circle():
    n = 40
    host = 2 * n + 11
    g = build_box(host, "free")
    c = box_center(host)
    h = harmonic_measure(g, c, disk_boundary(c, n))
    scaled = n * h.weights[h.weights > 0]
    assert scaled.min() > 0.01 and scaled.max() < 1.0
    assert scaled.max() / scaled.min() < 10


def test_harmonic_measure_empty_target():
    with pytest.raises(InvalidParametersError):
        harmonic_measure(build_box(5, "free"), (1, 1), [])


def test_hitting_probabilities_range():
    g = build_box(11, "free")
    h = hitting_probabilities(g, [(0, 0)], [(10, 10)])
    assert h[g.vertex((0, 0))] == 1 and h[g.vertex((10, 10))] == 0
    assert h[g.vertex((5, 5))] == pytest.approx(0.5, abs=1e-10)
    with pytest.raises(InvalidParametersError):
        hitting_probabilities(g, [(0, 0)], [(0, 0)])


def test_tv_distance_cases():
    a = HarmonicMeasure(0, (1, 2), np.array([1.0, 0.0]))
    b = HarmonicMeasure(0, (1, 2), np.array([0.0, 1.0]))
    assert harmonic_tv_distance(a, a) == 0.0
    assert harmonic_tv_distance(a, b) == 1.0
    with pytest.raises(InvalidParametersError):
        harmonic_tv_distance(a, HarmonicMeasure(0, (1, 3), np.array([1.0, 0.0])))


def test_tv_bound_constant_does_not_grow():
    # sources outside C_n, target C_m; TV <= c m (log n)^2 / n with a fitted c
    fitted = {}
    for n in (30, 50, 80):
        half = 2 * n + 2
        g = build_box(2 * half + 1, "free")
        c = (half, half)
        for m in (2, 4, 6):
            target = disk_sites(c, m)
            h1 = harmonic_measure(g, (c[0] + n + 1, c[1]), target)
            h2 = harmonic_measure(g, (c[0] - n - 1, c[1] + 3), target)
            fitted[(m, n)] = harmonic_tv_distance(h1, h2) / (m * math.log(n) ** 2 / n)
    c_hat = max(fitted.values())
    assert 0 < c_hat < 1
    for m in (2, 4, 6):
        assert fitted[(m, 80)] <= 1.5 * fitted[(m, 30)]


def test_annulus_leading_term():
    assert annulus_escape_prob((10, 0), 2, 10) == pytest.approx(1.0)
    assert annulus_escape_prob((0, 2), 2, 10) == pytest.approx(0.0)
    assert annulus_escape_prob((3, 4), 2.5, 10) == pytest.approx(0.5)
    with pytest.raises(DomainError):
        annulus_escape_prob((1, 0), 2, 10)
    with pytest.raises(DomainError):
        annulus_escape_prob((3, 0), 5, 4)


def test_annulus_exact_error_order_one_over_m():
    for m in (3, 6):
        exact = annulus_escape_exact(m, 30)
        err = max(abs(p - annulus_escape_prob(x, m, 30)) for x, p in exact.items())
        assert 0 < err * m < 1
        assert all(0 <= p <= 1 for p in exact.values())
