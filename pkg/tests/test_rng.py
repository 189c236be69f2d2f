import statistics

from hypothesis import given
from hypothesis import strategies as st

from dsaft.rng import CALIBRATION_STREAM, FABRIC_STREAM, KeyedStream, RngStream

seeds = st.integers(min_value=0, max_value=2**63)


@given(seeds, st.integers(0, 1000))
def test_same_key_same_sequence(seed, stream):
    a, b = RngStream(seed, stream), RngStream(seed, stream)
    assert [a.uniform() for _ in range(600)] == [b.uniform() for _ in range(600)]


def test_streams_differ():
    a = [RngStream(1, 0).uniform() for _ in range(3)]
    b = [RngStream(1, 1).uniform() for _ in range(3)]
    c = [RngStream(2, 0).uniform() for _ in range(3)]
    assert a != b and a != c
    assert RngStream(0, FABRIC_STREAM).uniform() != RngStream(0, CALIBRATION_STREAM).uniform()


def test_buffering_is_invisible():
    # buffer refills must not change the sequence
    r = RngStream(5, 3)
    first = [r.uniform() for _ in range(1500)]
    import numpy as np

    g = np.random.Generator(np.random.Philox(key=(3 << 64) | 5))
    assert first == g.random(1500).tolist()
    assert r.draws == 1500


@given(seeds, st.integers(1, 50))
def test_randrange_bounds(seed, n):
    r = RngStream(seed)
    assert all(0 <= r.randrange(n) < n for _ in range(50))


def test_normal_moments():
    r = RngStream(11)
    xs = [r.normal() for _ in range(20000)]
    assert abs(statistics.fmean(xs)) < 0.03
    assert abs(statistics.pstdev(xs) - 1) < 0.03


def test_split_is_deterministic_and_independent():
    r = RngStream(9, 2)
    assert r.split(4).uniform() == RngStream(9, 2).split(4).uniform()
    assert r.split(4).uniform() != r.split(5).uniform()


@given(seeds, st.lists(st.integers(0, 2**40), max_size=5))
def test_keyed_stream_depends_only_on_key(seed, key):
    a, b = KeyedStream(seed, *key), KeyedStream(seed, *key)
    xs = [a.uniform() for _ in range(4)]
    assert xs == [b.uniform() for _ in range(4)]
    assert all(0 <= x < 1 for x in xs)


def test_keyed_stream_uniformity():
    xs = [KeyedStream(3, i).uniform() for i in range(20000)]
    assert abs(statistics.fmean(xs) - 0.5) < 0.01
