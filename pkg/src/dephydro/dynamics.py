"""The update map, single-copy evolution and exact generator checks on small tori.

Kernels work on one uint8 occupancy per site; ``Configuration`` objects are
unpacked on entry and repacked on exit. Positions index the topology window
(``site - topology.first``). Bond ``i`` sits between positions ``i`` and
``i + 1`` (on a ring, bond ``L - 1`` joins the last and first site).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from numba import njit

from dephydro._philox import philox4x64, to_unit
from dephydro.clocks import ClockEvent, EventBatch, Purpose, RngKey, iter_window_slabs
from dephydro.lattice import Configuration, Topology

NOOP, SWAP_ADJACENT, SWAP_LONG = "noop", "swap_adjacent", "swap_long"

ALL_MOVES = frozenset({"10>01", "01>10", "110>011", "001>100"})
# a right swap that also needs an empty site beyond, for negative controls only
CONTROL_MOVES = frozenset({"100>010"})


class UpdateOutcome(NamedTuple):
    kind: str
    changed_sites: frozenset


# ---------------------------------------------------------------- kernels


@njit(inline="always", cache=True)
def _partner(p, k, L, ring):
    """Position p + k, or -1 when it falls off a segment."""
    q = p + k
    if q >= L:
        if not ring:
            return -1
        q -= L
    return q


@njit(inline="always", cache=True)
def _fire(occ, p, a, L, ring, cur, track):
    """Apply one clock mark (p, a). Returns 0 (no change), 1 (adjacent) or 2 (long)."""
    if occ[p] != a:
        return 0
    q = _partner(p, 1, L, ring)
    if q < 0:
        return 0
    if occ[q] != a:
        occ[p] = 1 - a
        occ[q] = a
        if track:
            cur[p] += 1 if a == 1 else -1
        return 1
    r = _partner(p, 2, L, ring)
    if r < 0 or occ[r] == a:
        return 0
    occ[p] = 1 - a
    occ[r] = a
    if track:
        d = 1 if a == 1 else -1
        cur[p] += d
        cur[q] += d
    return 2


@njit(cache=True)
def _apply_batch(occ, ring, pos, alpha, lo, hi, cur):
    L = occ.size
    track = cur.size > 0
    for i in range(lo, hi):
        _fire(occ, pos[i], alpha[i], L, ring, cur, track)


@njit(cache=True)
def _apply_batch_multi(occs, ring, pos, alpha, lo, hi):
    J, L = occs.shape
    dummy = np.zeros(0, dtype=np.int64)
    for i in range(lo, hi):
        p, a = pos[i], alpha[i]
        for j in range(J):
            _fire(occs[j], p, a, L, ring, dummy, False)


@njit(inline="always", cache=True)
def _mark(w, two_L):
    idx = min(int(to_unit(w) * two_L), two_L - 1)
    return idx >> 1, np.uint8(idx & 1)


@njit(cache=True)
def _apply_marks(occ, ring, k0, k1, slab, start, stop, cur):
    """Apply marks start..stop-1 of a slab of the aggregate stream.

    Mark i of slab k is word i % 4 of Philox block (i // 4, k, 0, 0); it picks
    (position, alpha) uniformly among the 2L clocks.
    """
    L = occ.size
    track = cur.size > 0
    i = start
    while i < stop:
        w = philox4x64(np.uint64(i >> 2), slab, 0, 0, k0, k1)
        for r in range(i & 3, 4):
            if i >= stop:
                break
            p, a = _mark(w[r], 2 * L)
            _fire(occ, p, a, L, ring, cur, track)
            i += 1


@njit(cache=True)
def _marks(k0, k1, slab, start, stop, L):
    pos = np.empty(stop - start, dtype=np.int64)
    alpha = np.empty(stop - start, dtype=np.uint8)
    for i in range(start, stop):
        w = philox4x64(np.uint64(i >> 2), slab, 0, 0, k0, k1)
        pos[i - start], alpha[i - start] = _mark(w[i & 3], 2 * L)
    return pos, alpha


# ---------------------------------------------------------------- local maps


def update_outcome(config: Configuration, x: int) -> UpdateOutcome:
    """What the map at ``x`` would do to ``config`` (ignoring the gate)."""
    topo = config.topology
    if not topo.contains(x):
        raise ValueError(f"site {x} outside {topo.describe()}")
    if not (topo.contains(x + 1)):
        return UpdateOutcome(NOOP, frozenset())
    if config[x] != config[x + 1]:
        return UpdateOutcome(SWAP_ADJACENT, frozenset({x, x + 1}))
    if not topo.contains(x + 2):
        return UpdateOutcome(NOOP, frozenset())
    if config[x] != config[x + 2]:
        return UpdateOutcome(SWAP_LONG, frozenset({x, x + 2}))
    return UpdateOutcome(SWAP_LONG, frozenset())


def phi(config: Configuration, x: int) -> Configuration:
    """Exchange (x, x+1) if they differ, otherwise (x, x+2)."""
    out = config.copy()
    for site in update_outcome(config, x).changed_sites:
        out.set(site, 1 - config[site])
    return out


def step_event(config: Configuration, event: ClockEvent) -> Configuration:
    """Apply ``phi`` at the event site iff the site holds the event's alpha."""
    if config[event.site] != event.alpha:
        if not config.topology.contains(event.site):
            raise ValueError(f"site {event.site} outside {config.topology.describe()}")
        return config.copy()
    return phi(config, event.site)


# ---------------------------------------------------------------- evolution


@dataclass
class EvolveResult:
    config: Configuration
    n_events: int
    snapshots: list = field(default_factory=list)
    current: Optional[np.ndarray] = None
    events: Optional[EventBatch] = None


def _check_snapshots(snapshot_times, t_start, t_end):
    times = [] if snapshot_times is None else [float(s) for s in snapshot_times]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("snapshot times must be non-decreasing")
    if times and (times[0] < t_start or times[-1] > t_end):
        raise ValueError("snapshot times must lie in [t_start, t_end]")
    return times


def evolve(
    config: Configuration,
    t_end: float,
    key: RngKey,
    mode: str = "keyed",
    t_start: float = 0.0,
    snapshot_times: Optional[Sequence[float]] = None,
    track_current: bool = False,
    log_events: bool = False,
) -> EvolveResult:
    """Run the dynamics from ``t_start`` to ``t_end``.

    ``keyed`` mode reads the per-site clock field of ``key`` (so the path is a
    pure function of the key and can be shared across copies and windows);
    ``gillespie`` mode draws the superposed rate-2L process from one stream
    and always starts at time 0.
    """
    if not t_end >= 0:
        raise ValueError("t_end must be nonnegative")
    if mode not in ("keyed", "gillespie"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "gillespie" and t_start != 0:
        raise ValueError("gillespie mode always starts at time 0")
    if t_start > t_end:
        raise ValueError("t_start exceeds t_end")
    snaps = _check_snapshots(snapshot_times, t_start, t_end)
    topo = config.topology
    occ = config.to_array().copy()
    cur = np.zeros(topo.L if track_current else 0, dtype=np.int64)
    runner = _evolve_keyed if mode == "keyed" else _evolve_gillespie
    snapshots, n_events, logs = runner(occ, topo, key, t_start, t_end, snaps, cur, log_events)
    events = None
    if log_events:
        parts = list(zip(*logs)) if logs else [[np.empty(0)], [np.empty(0, np.int64)], [np.empty(0, np.uint8)]]
        times, pos, alpha = (np.concatenate(p) for p in parts)
        events = EventBatch(times, pos + topo.first, alpha)
    return EvolveResult(
        Configuration.from_array(topo, occ),
        n_events,
        snapshots,
        cur if track_current else None,
        events,
    )


def _evolve_keyed(occ, topo: Topology, key, t_start, t_end, snaps, cur, log_events):
    snapshots, logs, n_events = [], [], 0
    k = 0
    slab0 = max(math.floor(t_start), 0)
    for i, batch in enumerate(iter_window_slabs(key, topo.first, topo.L, t_start, t_end)):
        slab_end = min(slab0 + i + 1, t_end)
        lo = 0
        while k < len(snaps) and snaps[k] <= slab_end:
            hi = int(np.searchsorted(batch.times, snaps[k], side="right"))
            _apply_batch(occ, topo.is_ring, batch.pos, batch.alpha, lo, hi, cur)
            lo = hi
            snapshots.append(Configuration.from_array(topo, occ))
            k += 1
        _apply_batch(occ, topo.is_ring, batch.pos, batch.alpha, lo, batch.times.size, cur)
        n_events += batch.times.size
        if log_events:
            logs.append(batch)
    while k < len(snaps):
        snapshots.append(Configuration.from_array(topo, occ))
        k += 1
    return snapshots, n_events, logs


def _slab_generator(k0, k1, slab: int, lane: int) -> np.random.Generator:
    # counters (c, slab, lane, 0) with lane >= 1 never meet the mark blocks
    return np.random.Generator(np.random.Philox(key=[int(k0), int(k1)], counter=[0, slab, lane, 0]))


def _evolve_gillespie(occ, topo: Topology, key, t_start, t_end, snaps, cur, log_events):
    """Aggregate-stream evolution, one unit time slab at a time.

    The number of marks in a slab of length h is Poisson(2 L h) and, in time
    order, the marks are i.i.d. uniform over the 2L clocks, so no event times
    are needed. Snapshot times split a slab's mark sequence by binomial draws
    from a separate lane, leaving the mark sequence itself unchanged.
    """
    k0, k1 = key.with_purpose(Purpose.GILLESPIE).words()
    L = topo.L
    snapshots, logs, n_events = [], [], 0
    k = 0
    for slab in range(int(math.ceil(t_end))):
        lo_t, hi_t = float(slab), min(slab + 1.0, t_end)
        n = int(_slab_generator(k0, k1, slab, 1).poisson(2.0 * L * (hi_t - lo_t)))
        split = _slab_generator(k0, k1, slab, 2)
        cuts, done, prev = [], 0, lo_t
        while k < len(snaps) and snaps[k] <= hi_t:
            share = (snaps[k] - prev) / (hi_t - prev) if hi_t > prev else 1.0
            done += int(split.binomial(n - done, min(max(share, 0.0), 1.0)))
            cuts.append((snaps[k], done))
            prev = snaps[k]
            k += 1
        cuts.append((hi_t, n))
        start, prev_t = 0, lo_t
        for i, (t_cut, stop) in enumerate(cuts):
            if log_events:
                pos, alpha = _marks(k0, k1, slab, start, stop, L)
                times = np.sort(split.uniform(prev_t, t_cut, stop - start))
                _apply_batch(occ, topo.is_ring, pos, alpha, 0, pos.size, cur)
                logs.append((times, pos, alpha))
            else:
                _apply_marks(occ, topo.is_ring, k0, k1, slab, start, stop, cur)
            if i < len(cuts) - 1:
                snapshots.append(Configuration.from_array(topo, occ))
            start, prev_t = stop, t_cut
        n_events += n
    while k < len(snaps):
        snapshots.append(Configuration.from_array(topo, occ))
        k += 1
    return snapshots, n_events, logs


# ---------------------------------------------------------------- generator on tori


@dataclass(frozen=True)
class RateMatrix:
    """Off-diagonal jump rates of the torus generator over all 2**n states.

    State ``s`` has occupancy ``(s >> x) & 1`` at site ``x``.
    """

    n: int
    q: sp.csr_matrix

    def out_rates(self) -> np.ndarray:
        return np.asarray(self.q.sum(axis=1)).ravel()

    def in_rates(self) -> np.ndarray:
        return np.asarray(self.q.sum(axis=0)).ravel()


def _move_targets(n: int, moves=ALL_MOVES) -> np.ndarray:
    """targets[s, x]: state reached by the move at site x from s, or -1."""
    unknown = set(moves) - ALL_MOVES - CONTROL_MOVES
    if unknown:
        raise ValueError(f"unknown moves {sorted(unknown)}")
    states = np.arange(1 << n, dtype=np.int64)
    bits = (states[:, None] >> np.arange(n)) & 1
    targets = np.full((states.size, n), -1, dtype=np.int64)
    for x in range(n):
        y1, y2 = (x + 1) % n, (x + 2) % n
        b0, b1, b2 = bits[:, x], bits[:, y1], bits[:, y2]
        flip1 = states ^ ((1 << x) | (1 << y1))
        flip2 = states ^ ((1 << x) | (1 << y2))
        rules = {
            "10>01": ((b0 == 1) & (b1 == 0), flip1),
            "01>10": ((b0 == 0) & (b1 == 1), flip1),
            "110>011": ((b0 == 1) & (b1 == 1) & (b2 == 0), flip2),
            "001>100": ((b0 == 0) & (b1 == 0) & (b2 == 1), flip2),
            "100>010": ((b0 == 1) & (b1 == 0) & (b2 == 0), flip1),
        }
        for name in sorted(moves):
            mask, dest = rules[name]
            if np.any(targets[mask, x] >= 0):
                raise ValueError("moves overlap: each site admits at most one move")
            targets[mask, x] = dest[mask]
    return targets


def build_rate_matrix(n: int, moves=ALL_MOVES) -> RateMatrix:
    """Integer rates q(s, s') counting the sites whose move maps s to s'."""
    if not 3 <= n <= 14:
        raise ValueError("torus size must be in 3..14")
    targets = _move_targets(n, moves)
    rows = np.repeat(np.arange(1 << n), n)
    cols = targets.ravel()
    keep = cols >= 0
    q = sp.csr_matrix(
        (np.ones(int(keep.sum()), dtype=np.int64), (rows[keep], cols[keep])),
        shape=(1 << n, 1 << n),
    )
    q.sum_duplicates()
    return RateMatrix(n, q)


class StationarityResult(NamedTuple):
    passed: bool
    counterexample: Optional[int]
    out_rate: Optional[int] = None
    in_rate: Optional[int] = None


def stationarity_identity_check(n: int, moves=ALL_MOVES) -> StationarityResult:
    """Exact check that every state's total out-rate equals its total in-rate."""
    if not 3 <= n <= 14:
        raise ValueError("torus size must be in 3..14")
    targets = _move_targets(n, moves)
    out = (targets >= 0).sum(axis=1)
    inn = np.bincount(targets[targets >= 0], minlength=1 << n)
    bad = np.flatnonzero(out != inn)
    if bad.size == 0:
        return StationarityResult(True, None)
    s = int(bad[0])
    return StationarityResult(False, s, int(out[s]), int(inn[s]))


def state_string(s: int, n: int) -> str:
    """Occupancies of sites 0..n-1 of a torus state, as a 0/1 string."""
    return "".join(str((s >> x) & 1) for x in range(n))
