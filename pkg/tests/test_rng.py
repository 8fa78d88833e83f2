import numpy as np
from hypothesis import given, settings, strategies as st

from covertime_lab.rng import AUX, FIELD, WALK, replica_key, replica_rng


def test_same_key_same_stream():
    a = replica_rng(7, 3, WALK).random(5)
    b = replica_rng(7, 3, WALK).random(5)
    assert np.array_equal(a, b)


def test_streams_and_replicas_differ():
    base = replica_rng(7, 3, WALK).random(5)
    assert not np.array_equal(base, replica_rng(7, 3, FIELD).random(5))
    assert not np.array_equal(base, replica_rng(7, 4, WALK).random(5))
    assert not np.array_equal(base, replica_rng(8, 3, WALK).random(5))
    assert not np.array_equal(replica_rng(7, 3, FIELD).random(5), replica_rng(7, 3, AUX).random(5))


@settings(max_examples=50)
@given(seed=st.integers(0, 2**64 - 1), r=st.integers(0, 2**64 - 1))
def test_replica_key_split(seed, r):
    k = replica_key(seed, r)
    assert k & ((1 << 64) - 1) == seed
    assert k >> 64 == r
