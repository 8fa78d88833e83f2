import math

import numpy as np
import pytest

from covertime_lab.errors import DomainError
from covertime_lab.exactsolve import solve_green
from covertime_lab.isomorphism import (compound_marginal_sample, compound_marginal_samples, lhs_samples, rhs_samples,
                                       sample_lhs, sample_rhs, verify_identity)
from covertime_lab.lattice import build_box, build_path
from covertime_lab.stats import ks_two_sample
from covertime_lab.walker import inverse_local_fields


def test_value_at_v0_is_t():
    g = build_box(5)
    t = 1.7
    assert sample_lhs(g, None, t, 0, 3)[g.special] == pytest.approx(t, abs=1e-12)
    assert sample_rhs(g, None, t, 0, 3)[g.special] == t
    assert np.all(sample_lhs(g, None, t, 0, 4) >= 0)


def test_single_edge_moments():
    g = build_path(1)
    x = g.vertex((1, 0))
    t = 1.5
    n = 100_000
    lhs = lhs_samples(g, None, t, 1, range(n))[:, x]
    assert abs(lhs.mean() - (t + 0.5)) <= 3 * lhs.std(ddof=1) / math.sqrt(n)
    rhs = rhs_samples(g, None, t, 1, range(n))[:, x]
    # Var((eta + sqrt(2t))^2 / 2) with Var(eta) = 1
    target = 0.5 + 2 * t
    se = ((rhs - rhs.mean()) ** 2).std(ddof=1) / math.sqrt(n)
    assert abs(rhs.var(ddof=1) - target) <= 3 * se


def test_low_power_flag():
    rep = verify_identity(build_path(1), t=1.0, reps=10)
    assert rep.low_power
    assert rep.summary()["low_power"] is True


def test_single_edge_identity():
    rep = verify_identity(build_path(1), t=1.0, reps=100_000, seed=2, ks_max=0.015)
    assert rep.passed, rep.rows()
    assert not rep.low_power


def test_path_of_three_identity():
    rep = verify_identity(build_path(3), t=0.5, reps=100_000, seed=3, ks_max=0.015)
    assert rep.passed, rep.rows()
    assert len(rep.rows()) == 4


@pytest.mark.slow
def test_wired_5x5_identity_at_t2():
    rep = verify_identity(build_box(5), t=2.0, reps=200_000, seed=1)
    assert all(c.ks_statistic < 0.01 for c in rep.per_vertex.values())


def test_compound_marginal_atom_and_mean():
    n = 200_000
    s = compound_marginal_samples(1.0, 1.0, n, seed=0)
    p0 = math.exp(-1)
    assert abs(np.mean(s == 0) - p0) <= 3 * math.sqrt(p0 * (1 - p0) / n)
    m = compound_marginal_samples(3.0, 0.7, n, seed=1)
    assert abs(m.mean() - 3.0) <= 3 * m.std(ddof=1) / math.sqrt(n)
    assert compound_marginal_sample(1.0, 1.0, 0, 5) == compound_marginal_samples(1.0, 1.0, 1, 0, 5)[0]
    with pytest.raises(DomainError):
        compound_marginal_samples(0.0, 1.0, 5)
    with pytest.raises(DomainError):
        compound_marginal_samples(1.0, -1.0, 5)


def test_compound_marginal_matches_walker_local_time():
    g = build_box(5)
    x = g.vertex((1, 2))
    t = 1.0
    R = solve_green(g, [g.special]).resistance(x)
    local, _, _ = inverse_local_fields(g, g.special, t, 4, range(50_000))
    direct = compound_marginal_samples(t, R, 200_000, seed=4)
    assert ks_two_sample(local[:, x], direct).statistic < 0.015
