"""Keyed, replayable realizations of the two unit-rate clock fields.

The two clocks of a site are realized together as their superposition: on
each unit time slab [k, k+1) the number of marks is Poisson(2), each mark has
a uniform time and a fair alpha label, all drawn from Philox counter blocks
addressed by (block, k, site). This has the law of two independent rate-1
processes. A stream is therefore a pure function of its key, and any
window of sites can be realized lazily, one slab at a time, with the same
marks at every site regardless of the window around it.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np
from numba import njit

from dephydro._philox import philox4x64, to_unit

_MASK64 = (1 << 64) - 1


class Purpose(enum.IntEnum):
    INIT = 1
    CLOCK = 2
    GILLESPIE = 3
    AUX = 4


@dataclass(frozen=True)
class RngKey:
    """Address of an independent random stream."""

    master_seed: int
    purpose: Purpose
    site: Optional[int] = None
    replica: Optional[int] = None

    def __post_init__(self):
        if not 0 <= self.master_seed <= _MASK64:
            raise ValueError("master_seed must fit in 64 bits")
        if self.replica is not None and not 0 <= self.replica < (1 << 40):
            raise ValueError("replica index out of range")

    def words(self):
        """Philox key words (k0, k1) as numpy uint64."""
        rep = 0 if self.replica is None else self.replica + 1
        k1 = (int(self.purpose) << 48) | rep
        return np.uint64(self.master_seed), np.uint64(k1)

    def with_purpose(self, purpose: Purpose) -> "RngKey":
        return replace(self, purpose=purpose)

    def with_replica(self, replica: int) -> "RngKey":
        return replace(self, replica=replica)

    def for_site(self, site: int) -> "RngKey":
        return replace(self, site=site)

    def generator(self) -> np.random.Generator:
        """numpy Generator on this key's stream (site selects a disjoint counter range)."""
        k0, k1 = self.words()
        site = 0 if self.site is None else self.site & _MASK64
        bg = np.random.Philox(key=[int(k0), int(k1)], counter=[0, 0, 0, site])
        return np.random.Generator(bg)


class ClockEvent(NamedTuple):
    time: float
    site: int
    alpha: int


class EventBatch(NamedTuple):
    """Time-sorted events as parallel arrays; ``pos`` indexes the window."""

    times: np.ndarray
    pos: np.ndarray
    alpha: np.ndarray

    def __len__(self):
        return self.times.size


def _poisson_cdf(mean, kmax=40):
    cdf, term, acc = [], math.exp(-mean), 0.0
    for k in range(kmax):
        acc += term
        cdf.append(acc)
        term *= mean / (k + 1)
    return np.array(cdf)


# marks per (site, unit slab) for the superposed rate-2 clock
_CDF2 = _poisson_cdf(2.0)
_ONE = np.uint64(1)


@njit(inline="always", cache=True)
def _poisson2(u):
    k = 0
    while k < _CDF2.size - 1 and u >= _CDF2[k]:
        k += 1
    return k


@njit(inline="always", cache=True)
def _site_slab(k0, k1, site, slab, times, codes, n, p, base, t_lo, t_hi):
    """Append the marks of one site on one unit slab; returns the new fill.

    Block 0 of counter (0, slab, 0, site) gives the mark count (word 0) and up
    to three marks (words 1..3); further marks use blocks 1, 2, ... Each mark
    word carries the time offset in its top 53 bits and alpha in bit 0.
    """
    w0, w1, w2, w3 = philox4x64(0, slab, 0, site, k0, k1)
    m = _poisson2(to_unit(w0))
    blk = 0
    e0 = e1 = e2 = e3 = np.uint64(0)
    start = n
    for j in range(m):
        if j == 0:
            w = w1
        elif j == 1:
            w = w2
        elif j == 2:
            w = w3
        else:
            r = (j - 3) % 4
            if r == 0:
                blk += 1
                e0, e1, e2, e3 = philox4x64(blk, slab, 0, site, k0, k1)
                w = e0
            elif r == 1:
                w = e1
            elif r == 2:
                w = e2
            else:
                w = e3
        t = base + to_unit(w)
        if t > t_lo and t <= t_hi:
            c = 2 * p + np.int64(w & _ONE)
            i = n
            while i > start and (times[i - 1] > t or (times[i - 1] == t and codes[i - 1] > c)):
                times[i] = times[i - 1]
                codes[i] = codes[i - 1]
                i -= 1
            times[i] = t
            codes[i] = c
            n += 1
    return n


@njit(cache=True)
def _window_slab(k0, k1, first, L, slab, t_lo, t_hi):
    """Marks of slab ``slab`` for sites first..first+L-1 with t_lo < t <= t_hi.

    Returns (times, codes) sorted by (time, code) where code = 2*pos + alpha.
    """
    cap = 2 * L + 64
    times = np.empty(cap)
    codes = np.empty(cap, dtype=np.int64)
    n = 0
    base = float(slab)
    for p in range(L):
        if cap - n < _CDF2.size:
            cap *= 2
            times2 = np.empty(cap)
            codes2 = np.empty(cap, dtype=np.int64)
            times2[:n] = times[:n]
            codes2[:n] = codes[:n]
            times, codes = times2, codes2
        n = _site_slab(k0, k1, np.uint64(np.int64(first + p)), slab, times, codes, n, p, base, t_lo, t_hi)
    return _bucket_sort(times[:n], codes[:n], base)


@njit(cache=True)
def _bucket_sort(times, codes, base):
    """Sort events of one unit slab by (time, code) in expected O(n)."""
    n = times.size
    if n == 0:
        return times, codes
    counts = np.zeros(n + 1, dtype=np.int64)
    bucket = np.empty(n, dtype=np.int64)
    for i in range(n):
        b = int((times[i] - base) * n)
        b = min(max(b, 0), n - 1)
        bucket[i] = b
        counts[b + 1] += 1
    for b in range(n):
        counts[b + 1] += counts[b]
    fill = counts.copy()
    ts = np.empty(n)
    cs = np.empty(n, dtype=np.int64)
    for i in range(n):
        j = fill[bucket[i]]
        fill[bucket[i]] += 1
        ts[j] = times[i]
        cs[j] = codes[i]
    for b in range(n):
        lo = counts[b]
        for i in range(lo + 1, counts[b + 1]):
            t, c = ts[i], cs[i]
            j = i
            while j > lo and (ts[j - 1] > t or (ts[j - 1] == t and cs[j - 1] > c)):
                ts[j] = ts[j - 1]
                cs[j] = cs[j - 1]
                j -= 1
            ts[j] = t
            cs[j] = c
    return ts, cs


def iter_window_slabs(key: RngKey, first: int, L: int, t_lo: float, t_hi: float):
    """Yield time-sorted EventBatch objects covering (t_lo, t_hi], slab by slab."""
    if t_hi <= t_lo:
        return
    k0, k1 = key.with_purpose(Purpose.CLOCK).words()
    for slab in range(max(int(math.floor(t_lo)), 0), int(math.ceil(t_hi))):
        times, codes = _window_slab(k0, k1, first, L, slab, t_lo, t_hi)
        yield EventBatch(times, codes >> 1, (codes & 1).astype(np.uint8))


def window_events(key: RngKey, first: int, L: int, t_lo: float, t_hi: float) -> EventBatch:
    batches = list(iter_window_slabs(key, first, L, t_lo, t_hi))
    if not batches:
        return EventBatch(np.empty(0), np.empty(0, dtype=np.int64), np.empty(0, dtype=np.uint8))
    return EventBatch(*(np.concatenate(parts) for parts in zip(*batches)))


def clock_stream(key: RngKey, site: int, horizon: float) -> list[ClockEvent]:
    """Merged marks of the two clocks at ``site`` on (0, horizon]."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if key.site is not None and key.site != site:
        raise ValueError("key is bound to a different site")
    ev = window_events(key, site, 1, 0.0, horizon)
    return [ClockEvent(float(t), site, int(a)) for t, a in zip(ev.times, ev.alpha)]


def merge_window_events(key: RngKey, sites, horizon: float) -> list[ClockEvent]:
    """Time-ordered marks of all clocks in a window of consecutive sites.

    ``sites`` is an iterable of consecutive site labels; each site uses the
    same stream as ``clock_stream(key, site, horizon)``.
    """
    sites = np.asarray(list(sites), dtype=np.int64)
    if sites.size == 0:
        return []
    if np.any(np.diff(sites) != 1):
        raise ValueError("window sites must be consecutive")
    first = int(sites[0])
    ev = window_events(key, first, sites.size, 0.0, horizon)
    return [ClockEvent(float(t), first + int(p), int(a)) for t, p, a in zip(ev.times, ev.pos, ev.alpha)]
