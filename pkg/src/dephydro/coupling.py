"""Copies driven by one clock field: discrepancies, stability functionals, audits.

Discrepancy signs follow the ordered pair (zeta, xi): ``+1`` where zeta holds
the particle, ``-1`` where xi does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from numba import njit
from scipy import stats

from dephydro.clocks import ClockEvent, RngKey, iter_window_slabs
from dephydro.dynamics import _apply_batch_multi, _fire, step_event
from dephydro.lattice import Configuration, Topology


class DiscrepancySet(NamedTuple):
    sites: np.ndarray
    signs: np.ndarray

    def __len__(self):
        return int(self.sites.size)

    def entries(self):
        return [(int(s), int(g)) for s, g in zip(self.sites, self.signs)]


def _same_topology(a: Configuration, b: Configuration):
    if a.topology != b.topology:
        raise ValueError("configurations live on different topologies")


def discrepancies(zeta: Configuration, xi: Configuration) -> DiscrepancySet:
    _same_topology(zeta, xi)
    d = zeta.to_array().astype(np.int8) - xi.to_array().astype(np.int8)
    idx = np.flatnonzero(d)
    return DiscrepancySet(idx + zeta.topology.first, d[idx].astype(np.int64))


def _partial_sums(zeta: Configuration, xi: Configuration) -> np.ndarray:
    _same_topology(zeta, xi)
    if zeta.topology.is_ring and zeta.count() != xi.count():
        raise ValueError("ring stability functional needs equal particle numbers")
    d = zeta.to_array().astype(np.int64) - xi.to_array().astype(np.int64)
    return np.cumsum(d)


def delta(zeta: Configuration, xi: Configuration) -> int:
    """sup_x |sum_{y <= x} (zeta(y) - xi(y))| over the window.

    On a ring the sums start at the bond before site 0 (a fixed cut).
    """
    s = _partial_sums(zeta, xi)
    return int(np.abs(s).max(initial=0))


def oscillation(zeta: Configuration, xi: Configuration) -> int:
    """Largest |signed discrepancy sum| over any run of consecutive sites.

    Equal to max S - min S of the partial sums (with the empty sum 0); on a
    ring it does not depend on where the sums start.
    """
    s = _partial_sums(zeta, xi)
    return int(max(s.max(initial=0), 0) - min(s.min(initial=0), 0))


# ---------------------------------------------------------------- ensembles


@dataclass(frozen=True)
class CoupledEnsemble:
    """Copies on one topology that read the same clock marks."""

    copies: tuple

    def __post_init__(self):
        if len(self.copies) < 1:
            raise ValueError("an ensemble needs at least one copy")
        topo = self.copies[0].topology
        if any(c.topology != topo for c in self.copies):
            raise ValueError("all copies must share the topology")

    @classmethod
    def of(cls, *copies: Configuration) -> "CoupledEnsemble":
        return cls(tuple(c.copy() for c in copies))

    @property
    def topology(self) -> Topology:
        return self.copies[0].topology

    def __len__(self):
        return len(self.copies)

    def occupancy(self) -> np.ndarray:
        return np.stack([c.to_array() for c in self.copies])

    @classmethod
    def from_occupancy(cls, topology: Topology, occs: np.ndarray) -> "CoupledEnsemble":
        return cls(tuple(Configuration.from_array(topology, row) for row in occs))

    def evolve(self, t_end: float, key: RngKey, t_start: float = 0.0) -> "CoupledEnsemble":
        """Every copy reads the keyed clock field on (t_start, t_end]."""
        topo = self.topology
        occs = self.occupancy()
        for batch in iter_window_slabs(key, topo.first, topo.L, t_start, t_end):
            _apply_batch_multi(occs, topo.is_ring, batch.pos, batch.alpha, 0, batch.times.size)
        return CoupledEnsemble.from_occupancy(topo, occs)


def step_coupled(ensemble: CoupledEnsemble, event: ClockEvent) -> CoupledEnsemble:
    """Apply one mark to each copy under its own gate."""
    return CoupledEnsemble(tuple(step_event(c, event) for c in ensemble.copies))


# ---------------------------------------------------------------- audit kernel

# violation codes
OK, COUNT_UP, SIGN_ORDER, ORDER_BROKEN, DELTA_UP, OSC_UP = 0, 1, 2, 3, 4, 5
VIOLATIONS = {
    COUNT_UP: "discrepancy count increased",
    SIGN_ORDER: "signs changed or opposite discrepancies swapped",
    ORDER_BROKEN: "ordered pair lost its order",
    DELTA_UP: "partial-sum supremum increased",
    OSC_UP: "partial-sum oscillation increased",
}


@njit(cache=True)
def _sums(a, b):
    s = 0
    smax = 0
    smin = 0
    for i in range(a.size):
        s += np.int64(a[i]) - np.int64(b[i])
        if s > smax:
            smax = s
        if s < smin:
            smin = s
    return max(smax, -smin), smax - smin


@njit(cache=True)
def _window_signs(a, b, p, L, ring, out):
    """Signs a - b at positions p-2..p+2 (0 outside a segment); returns count."""
    n = 0
    for o in range(5):
        q = p - 2 + o
        if ring:
            q %= L
        elif q < 0 or q >= L:
            out[o] = 0
            continue
        out[o] = np.int64(a[q]) - np.int64(b[q])
        if out[o] != 0:
            n += 1
    return n


@njit(cache=True)
def _is_subsequence(after, before):
    j = 0
    for i in range(5):
        if after[i] == 0:
            continue
        while j < 5 and before[j] != after[i]:
            j += 1
        if j == 5:
            return False
        j += 1
    return True


@njit(cache=True)
def _audit_batch(occs, ring, pos, alpha, lo, hi, pairs, order, count, dlt, osc, sum_mode, stats, viol, before_pat):
    """Apply events lo..hi-1 to every copy and audit every listed pair.

    Stops at the first violation, recording (code, event index, pair) in
    ``viol`` and the copies' 5-site patterns before the event in
    ``before_pat``. ``stats`` accumulates [annihilated pairs, moved marks].
    ``sum_mode`` per pair: 0 skips the partial sums, 1 audits the oscillation,
    2 audits the supremum as well.
    """
    J, L = occs.shape
    npairs = pairs.shape[0]
    sb = np.zeros((npairs, 5), dtype=np.int64)
    sa = np.zeros(5, dtype=np.int64)
    nb = np.zeros(npairs, dtype=np.int64)
    dummy = np.zeros(0, dtype=np.int64)
    for i in range(lo, hi):
        p, a = pos[i], alpha[i]
        for m in range(npairs):
            nb[m] = _window_signs(occs[pairs[m, 0]], occs[pairs[m, 1]], p, L, ring, sb[m])
        for j in range(J):
            for o in range(5):
                q = p - 2 + o
                if ring:
                    q %= L
                before_pat[j, o] = occs[j, q] if 0 <= q < L else 255
        changed = False
        for j in range(J):
            if _fire(occs[j], p, a, L, ring, dummy, False) != 0:
                changed = True
        if not changed:
            continue
        for m in range(npairs):
            z = occs[pairs[m, 0]]
            x = occs[pairs[m, 1]]
            na = _window_signs(z, x, p, L, ring, sa)
            same = True
            for o in range(5):
                if sa[o] != sb[m, o]:
                    same = False
            if same:
                continue
            code = OK
            if na > nb[m]:
                code = COUNT_UP
            elif not _is_subsequence(sa, sb[m]):
                code = SIGN_ORDER
            else:
                for o in range(5):
                    if order[m] != 0 and sa[o] == -order[m]:
                        code = ORDER_BROKEN
            if code == OK and sum_mode[m] > 0:
                d_new, o_new = _sums(z, x)
                if sum_mode[m] == 2 and d_new > dlt[m]:
                    code = DELTA_UP
                elif o_new > osc[m]:
                    code = OSC_UP
                dlt[m] = d_new
                osc[m] = o_new
            if code != OK:
                viol[0] = code
                viol[1] = i
                viol[2] = m
                return
            stats[0] += (nb[m] - na) // 2
            stats[1] += 1
            count[m] = count[m] - nb[m] + na


class CouplingViolation(AssertionError):
    """An exact coupling property failed; carries the offending event."""

    def __init__(self, code, event, pair, patterns):
        self.code = code
        self.event = event
        self.pair = pair
        self.patterns = patterns
        pats = ", ".join("".join("." if v == 255 else str(v) for v in row) for row in patterns)
        super().__init__(
            f"{VIOLATIONS[code]} at event {event} for pair {pair}; "
            f"copies on [x-2, x+2] before the event: {pats}"
        )


@dataclass
class AuditReport:
    n_events: int
    times: list = field(default_factory=list)
    counts: list = field(default_factory=list)
    deltas: list = field(default_factory=list)
    oscillations: list = field(default_factory=list)
    annihilated_pairs: int = 0
    discrepancy_moves: int = 0
    sign_flips: int = 0
    swaps: int = 0
    ordered_pairs: int = 0


def _pair_order(z: np.ndarray, x: np.ndarray) -> int:
    if np.all(z >= x):
        return 1
    if np.all(z <= x):
        return -1
    return 0


def coupled_evolve_audited(
    ensemble: CoupledEnsemble,
    t_end: float,
    key: RngKey,
    t_start: float = 0.0,
) -> tuple[CoupledEnsemble, AuditReport]:
    """Evolve on the keyed clock field, auditing every pair of copies per event.

    Each event is checked on [x-2, x+2]: the discrepancy count may not grow,
    the signed sequence after the event must be a subsequence of the one
    before (no sign change, no opposite-sign swap), ordered pairs stay
    ordered, and the partial-sum oscillation may not grow. On a segment the
    sup of partial sums from the left wall is checked as well; on a ring the
    partial sums are only audited for pairs with equal particle numbers.
    Raises ``CouplingViolation`` on the first failure.
    """
    topo = ensemble.topology
    occs = ensemble.occupancy()
    J = occs.shape[0]
    if J < 2:
        raise ValueError("need at least two copies")
    pairs = np.array([(j, k) for j in range(J) for k in range(j + 1, J)], dtype=np.int64)
    counts = occs.sum(axis=1)
    if topo.is_ring:
        sum_mode = np.array([int(counts[j] == counts[k]) for j, k in pairs], dtype=np.int64)
    else:
        sum_mode = np.full(len(pairs), 2, dtype=np.int64)
    order = np.array([_pair_order(occs[j], occs[k]) for j, k in pairs], dtype=np.int64)
    count = np.array([int(np.sum(occs[j] != occs[k])) for j, k in pairs], dtype=np.int64)
    dlt = np.empty(len(pairs), dtype=np.int64)
    osc = np.empty(len(pairs), dtype=np.int64)
    for m, (j, k) in enumerate(pairs):
        dlt[m], osc[m] = _sums(occs[j], occs[k])
    stats_ = np.zeros(2, dtype=np.int64)
    viol = np.zeros(3, dtype=np.int64)
    pat = np.zeros((J, 5), dtype=np.int64)
    report = AuditReport(0, ordered_pairs=int(np.count_nonzero(order)))
    report.times.append(t_start)
    report.counts.append(count.tolist())
    report.deltas.append(dlt.tolist())
    report.oscillations.append(osc.tolist())
    slab0 = max(math.floor(t_start), 0)
    for s, batch in enumerate(iter_window_slabs(key, topo.first, topo.L, t_start, t_end)):
        _audit_batch(
            occs, topo.is_ring, batch.pos, batch.alpha, 0, batch.times.size,
            pairs, order, count, dlt, osc, sum_mode, stats_, viol, pat,
        )
        if viol[0] != OK:
            i = int(viol[1])
            ev = ClockEvent(float(batch.times[i]), int(batch.pos[i]) + topo.first, int(batch.alpha[i]))
            raise CouplingViolation(int(viol[0]), ev, tuple(pairs[viol[2]]), pat.copy())
        report.n_events += batch.times.size
        report.times.append(min(slab0 + s + 1.0, t_end))
        report.counts.append(count.tolist())
        report.deltas.append(dlt.tolist())
        report.oscillations.append(osc.tolist())
    report.annihilated_pairs = int(stats_[0])
    report.discrepancy_moves = int(stats_[1])
    return CoupledEnsemble.from_occupancy(topo, occs), report


# ---------------------------------------------------------------- annihilation hazard


@njit(cache=True)
def _until_pair_changes(z, x, ring, pos, alpha, times, i0, i1):
    """First event after which the discrepancies at positions i0, i1 change.

    Returns (event index or -1, annihilated flag).
    """
    L = z.size
    dummy = np.zeros(0, dtype=np.int64)
    for i in range(pos.size):
        p, a = pos[i], alpha[i]
        c1 = _fire(z, p, a, L, ring, dummy, False)
        c2 = _fire(x, p, a, L, ring, dummy, False)
        if c1 == 0 and c2 == 0:
            continue
        moved = False
        for o in range(5):
            q = (p - 2 + o) % L
            want = 0
            if q == i0:
                want = 1
            elif q == i1:
                want = -1
            if np.int64(z[q]) - np.int64(x[q]) != want:
                moved = True
        if moved:
            gone = z[i0] == x[i0] and z[i1] == x[i1]
            n_left = 0
            for o in range(5):
                q = (p - 2 + o) % L
                if z[q] != x[q]:
                    n_left += 1
            return i, gone and n_left == 0
    return -1, False


class HazardEstimate(NamedTuple):
    annihilations: int
    exposure: float
    rate: float
    lower: float
    upper: float


def annihilation_hazard(
    L: int,
    trials: int,
    key: RngKey,
    background_density: float = 0.5,
    confidence: float = 0.95,
) -> HazardEstimate:
    """Rate at which an adjacent (+, -) discrepancy pair annihilates.

    Each trial puts a (+ at 0, - at 1) pair on a Bernoulli background of a
    ring and runs until the pair changes in any way; the estimate is
    annihilations per unit exposure time with an exact Poisson interval.
    """
    from dephydro.clocks import Purpose
    from dephydro.lattice import DensityProfile, Ring, sample_product

    topo = Ring(L)
    k_total, exposure = 0, 0.0
    for r in range(trials):
        rk = key.with_replica(r)
        base = sample_product(DensityProfile.constant(background_density), topo, rk.with_purpose(Purpose.INIT)).to_array()
        z = base.copy()
        x = base.copy()
        z[0], z[1] = 1, 0
        x[0], x[1] = 0, 1
        t = 0.0
        while True:
            batches = iter_window_slabs(rk.with_purpose(Purpose.CLOCK), 0, L, t, t + 1.0)
            hit = -1
            for b in batches:
                hit, gone = _until_pair_changes(z, x, True, b.pos, b.alpha, b.times, 0, 1)
                if hit >= 0:
                    exposure += float(b.times[hit])
                    k_total += int(gone)
                    break
            if hit >= 0:
                break
            t += 1.0
            if t > 1e4:
                raise RuntimeError("pair never changed")
    alpha = 1.0 - confidence
    lower = stats.chi2.ppf(alpha / 2, 2 * k_total) / 2 / exposure if k_total else 0.0
    upper = stats.chi2.ppf(1 - alpha / 2, 2 * k_total + 2) / 2 / exposure
    return HazardEstimate(k_total, exposure, k_total / exposure, float(lower), float(upper))


# ---------------------------------------------------------------- finite propagation


@njit(cache=True)
def _first_disagreement(z, x, ring, pos, alpha, lo, hi):
    """Index of the first event after which z and x differ on [lo, hi], or -1."""
    L = z.size
    dummy = np.zeros(0, dtype=np.int64)
    for i in range(pos.size):
        p, a = pos[i], alpha[i]
        c1 = _fire(z, p, a, L, ring, dummy, False)
        c2 = _fire(x, p, a, L, ring, dummy, False)
        if c1 == 0 and c2 == 0:
            continue
        for o in range(3):
            q = p + o
            if ring:
                q %= L
            elif q >= L:
                continue
            if lo <= q <= hi and z[q] != x[q]:
                return i
    return -1


class PropagationResult(NamedTuple):
    agree: int
    trials: int
    frequency: float
    interval: tuple


def finite_propagation_test(
    zeta0: Sequence[Configuration] | Configuration,
    xi0: Sequence[Configuration] | Configuration,
    x: int,
    y: int,
    t: float,
    v: float,
    key: RngKey,
    trials: Optional[int] = None,
    replica_offset: int = 0,
) -> PropagationResult:
    """Fraction of trials whose two coupled copies agree on [x+vt, y-vt] up to time t.

    ``zeta0`` and ``xi0`` are single configurations (reused in every trial)
    or equal-length sequences of per-trial initial states; they must agree
    on [x, y]. Trial r uses the clock field of
    ``key.with_replica(replica_offset + r)``.
    """
    zs = [zeta0] if isinstance(zeta0, Configuration) else list(zeta0)
    xs = [xi0] if isinstance(xi0, Configuration) else list(xi0)
    if len(zs) != len(xs):
        raise ValueError("need as many zeta states as xi states")
    if trials is None:
        trials = len(zs)
    if len(zs) not in (1, trials):
        raise ValueError("state sequences must have one entry per trial")
    if not (t > 0 and v > 0):
        raise ValueError("need t > 0 and v > 0")
    a, b = math.ceil(x + v * t), math.floor(y - v * t)
    if a > b:
        raise ValueError("interval too short for this t and v")
    topo = zs[0].topology
    if not (topo.contains(x) and topo.contains(y)) or (not topo.is_ring and not x <= y):
        raise ValueError("interval outside the window")
    lo, hi = topo.index(a), topo.index(b)
    if lo > hi:
        raise ValueError("interval may not wrap around the ring cut")
    agree = 0
    for r in range(trials):
        z = zs[r % len(zs)].to_array().copy()
        xx = xs[r % len(xs)].to_array().copy()
        if zs[r % len(zs)].topology != topo or xs[r % len(xs)].topology != topo:
            raise ValueError("all states must share the topology")
        span = np.arange(topo.index(x), topo.index(y) + 1)
        if np.any(z[span] != xx[span]):
            raise ValueError("initial states must agree on [x, y]")
        ok = True
        for batch in iter_window_slabs(key.with_replica(replica_offset + r), topo.first, topo.L, 0.0, t):
            if _first_disagreement(z, xx, topo.is_ring, batch.pos, batch.alpha, lo, hi) >= 0:
                ok = False
                break
        agree += ok
    return PropagationResult(agree, trials, agree / trials, (a, b))


# ---------------------------------------------------------------- attractiveness criterion


def _gamma(eta: np.ndarray, x: int, y: int) -> np.ndarray:
    """Jump kernel from x to y, vectorized over the rows of ``eta``."""
    d = y - x
    if abs(d) == 1:
        return np.ones(eta.shape[0], dtype=np.int64)
    if d == 2:
        return eta[:, x + 1].astype(np.int64)
    if d == -2:
        return 1 - eta[:, x - 1].astype(np.int64)
    return np.zeros(eta.shape[0], dtype=np.int64)


class GSResult(NamedTuple):
    first_ok: np.ndarray
    second_ok: np.ndarray
    first_lhs: np.ndarray
    first_rhs: np.ndarray
    second_lhs: np.ndarray
    second_rhs: np.ndarray

    @property
    def passed(self) -> bool:
        return bool(self.first_ok.all() and self.second_ok.all())


def check_gs_inequalities(xi, zeta) -> GSResult:
    """Both attractiveness inequalities at every site of ordered pairs xi <= zeta.

    Accepts Configurations (every site is checked, ring sites wrap) or
    integer arrays of shape (W,) or (N, W) treated as open windows, where
    only sites with three neighbours on each side are checked. Entries at
    sites where a condition does not apply are reported as passing with
    both sides zero. Integer arithmetic throughout.
    """
    if isinstance(xi, Configuration):
        _same_topology(xi, zeta)
        topo = xi.topology
        xa, za = xi.to_array()[None, :], zeta.to_array()[None, :]
        if topo.is_ring:
            xa = np.concatenate([xa[:, -3:], xa, xa[:, :3]], axis=1)
            za = np.concatenate([za[:, -3:], za, za[:, :3]], axis=1)
        else:
            pad = np.zeros((1, 3), dtype=xa.dtype)
            # walls: no site outside can jump, so padding holes in both copies is neutral
            xa = np.concatenate([pad, xa, pad], axis=1)
            za = np.concatenate([pad, za, pad], axis=1)
        res = _gs(xa.astype(np.int64), za.astype(np.int64), wall=not topo.is_ring)
        return GSResult(*(r[0] for r in res))
    xa = np.atleast_2d(np.asarray(xi, dtype=np.int64))
    za = np.atleast_2d(np.asarray(zeta, dtype=np.int64))
    res = _gs(xa, za, wall=False)
    if np.ndim(xi) == 1:
        res = tuple(r[0] for r in res)
    return GSResult(*res)


def _gs(xa: np.ndarray, za: np.ndarray, wall: bool):
    if xa.shape != za.shape or xa.shape[1] < 7:
        raise ValueError("need equal-shape windows of at least 7 sites")
    if np.any((xa != 0) & (xa != 1)) or np.any((za != 0) & (za != 1)):
        raise ValueError("occupancies must be 0 or 1")
    if np.any(xa > za):
        raise ValueError("input is not ordered: need xi <= zeta")
    n, w = xa.shape
    inner = range(3, w - 3)
    shape = (n, w - 6)
    l1, r1, l2, r2 = (np.zeros(shape, dtype=np.int64) for _ in range(4))
    for k, c in enumerate(inner):
        for d in (-2, -1, 1, 2):
            o = c + d
            if wall and (o < 3 or o >= w - 3):
                continue
            # first inequality at y = c, summing over x = o
            l1[:, k] += xa[:, o] * np.maximum(_gamma(xa, o, c) - _gamma(za, o, c), 0)
            r1[:, k] += za[:, o] * (1 - xa[:, o]) * _gamma(za, o, c)
            # second inequality at x = c, summing over y = o
            l2[:, k] += (1 - za[:, o]) * np.maximum(_gamma(za, c, o) - _gamma(xa, c, o), 0)
            r2[:, k] += za[:, o] * (1 - xa[:, o]) * _gamma(xa, c, o)
    applies1 = za[:, 3 : w - 3] == 0
    applies2 = xa[:, 3 : w - 3] == 1
    l1, r1 = l1 * applies1, r1 * applies1
    l2, r2 = l2 * applies2, r2 * applies2
    return l1 <= r1, l2 <= r2, l1, r1, l2, r2
