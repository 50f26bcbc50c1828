import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from dephydro._philox import philox_block, to_unit
from dephydro.clocks import (
    Purpose,
    RngKey,
    clock_stream,
    merge_window_events,
    window_events,
)


@pytest.mark.parametrize("key", [(0, 0), (1, 2), (2**63 + 5, 2**40 - 1)])
@pytest.mark.parametrize("counter", [(0, 0, 0, 0), (7, 3, 0, 11), (2**64 - 1, 0, 0, 0)])
def test_philox_matches_numpy(key, counter):
    # numpy increments the 256-bit counter before producing a block
    c = (sum(w << (64 * i) for i, w in enumerate(counter)) - 1) % 2**256
    prev = [(c >> (64 * i)) & (2**64 - 1) for i in range(4)]
    bg = np.random.Philox(key=np.array(key, dtype=np.uint64), counter=np.array(prev, dtype=np.uint64))
    expected = bg.random_raw(4)
    got = philox_block(*(np.uint64(c) for c in counter), np.uint64(key[0]), np.uint64(key[1]))
    assert [int(g) for g in got] == [int(e) for e in expected]


def test_to_unit_range():
    assert to_unit(np.uint64(0)) == 0.0
    assert 0.0 < to_unit(np.uint64(2**64 - 1)) < 1.0


def test_key_words_separate_purposes_and_replicas():
    base = RngKey(9, Purpose.INIT)
    words = {base.words(), base.with_purpose(Purpose.CLOCK).words(),
             base.with_replica(0).words(), base.with_replica(1).words()}
    assert len({tuple(int(w) for w in ws) for ws in words}) == 4


@pytest.mark.parametrize("bad", [-1, 2**64])
def test_key_rejects_out_of_range_seed(bad):
    with pytest.raises(ValueError):
        RngKey(bad, Purpose.CLOCK)


def test_window_count_mean(key):
    # 2 clocks of rate 1 per site: mean count 2 W T
    W, T, draws = 20, 3.0, 1000
    counts = [len(window_events(key.with_replica(r), 0, W, 0.0, T)) for r in range(draws)]
    assert abs(np.mean(counts) / (2 * W * T) - 1) < 0.01


def test_interarrival_times_are_exponential(key):
    ev = clock_stream(key, site=3, horizon=3000.0)
    t = np.array([e.time for e in ev])
    gaps = np.diff(np.concatenate([[0.0], t]))
    assert stats.kstest(gaps, "expon", args=(0, 0.5)).pvalue > 1e-3
    alphas = np.array([e.alpha for e in ev])
    assert abs(alphas.mean() - 0.5) < 4 * 0.5 / math.sqrt(alphas.size)


def test_window_is_union_of_site_streams(key):
    merged = merge_window_events(key, range(-4, 6), 7.5)
    per_site = sorted(
        (e for s in range(-4, 6) for e in clock_stream(key, s, 7.5)), key=lambda e: (e.time, e.site, e.alpha)
    )
    assert merged == per_site


def test_site_stream_independent_of_window(key):
    narrow = [e for e in merge_window_events(key, range(0, 5), 4.0) if e.site == 2]
    wide = [e for e in merge_window_events(key, range(-50, 60), 4.0) if e.site == 2]
    assert narrow == wide


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 5.0), st.floats(0.01, 5.0))
def test_time_windows_split_cleanly(a, span):
    key = RngKey(3, Purpose.CLOCK)
    whole = window_events(key, 0, 6, 0.0, a + span)
    first = window_events(key, 0, 6, 0.0, a)
    second = window_events(key, 0, 6, a, a + span)
    assert np.array_equal(whole.times, np.concatenate([first.times, second.times]))
    assert np.all(np.diff(whole.times) >= 0)


def test_deterministic_replay(key):
    a = window_events(key, 10, 30, 0.0, 5.0)
    b = window_events(key, 10, 30, 0.0, 5.0)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_clock_stream_rejects_bad_horizon(key):
    with pytest.raises(ValueError):
        clock_stream(key, 0, 0.0)
