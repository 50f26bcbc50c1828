"""Lattice windows, packed occupancy configurations and density profiles."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from dephydro._philox import philox4x64, to_unit

MIN_SITES = 5


@dataclass(frozen=True)
class Topology:
    """A finite window of the line: a ring, or a segment with walls.

    Ring sites are ``0..L-1`` with arithmetic mod ``L``. Segment sites are
    ``first..first+L-1`` (``first`` defaults to 1); moves whose partner sites
    fall outside the segment are disabled.
    """

    kind: str
    L: int
    first: int = 0
    left_blocked: bool = True
    right_blocked: bool = True

    def __post_init__(self):
        if self.kind not in ("ring", "segment"):
            raise ValueError(f"unknown topology kind {self.kind!r}")
        if int(self.L) != self.L or self.L < MIN_SITES:
            raise ValueError(f"need an integer L >= {MIN_SITES}, got {self.L}")
        if self.kind == "ring" and self.first != 0:
            raise ValueError("ring sites always start at 0")
        if self.kind == "segment" and not (self.left_blocked and self.right_blocked):
            # an open end needs a particle reservoir, which is not modelled
            raise ValueError("segment ends must be blocked")

    @property
    def is_ring(self) -> bool:
        return self.kind == "ring"

    @property
    def last(self) -> int:
        return self.first + self.L - 1

    def sites(self) -> np.ndarray:
        return np.arange(self.first, self.first + self.L, dtype=np.int64)

    def contains(self, site: int) -> bool:
        return self.is_ring or self.first <= site <= self.last

    def index(self, site):
        """Array position of ``site`` (reduced mod L on a ring)."""
        if self.is_ring:
            return np.mod(site, self.L)
        site = np.asarray(site)
        if np.any((site < self.first) | (site > self.last)):
            raise ValueError(f"site outside segment [{self.first}, {self.last}]")
        pos = site - self.first
        return int(pos) if pos.ndim == 0 else pos

    def describe(self) -> str:
        if self.is_ring:
            return f"Ring({self.L})"
        return f"Segment({self.L}, first={self.first})"


def Ring(L: int) -> Topology:
    return Topology("ring", L)


def Segment(L: int, left_blocked: bool = True, right_blocked: bool = True, first: int = 1) -> Topology:
    return Topology("segment", L, first, left_blocked, right_blocked)


def centered_segment(half_width: int) -> Topology:
    """Segment covering sites ``-half_width..half_width``."""
    return Segment(2 * half_width + 1, first=-half_width)


def pack_bits(occ: np.ndarray) -> np.ndarray:
    """Pack a 0/1 array into little-endian 64-bit words."""
    raw = np.packbits(np.asarray(occ, dtype=np.uint8), bitorder="little")
    pad = (-raw.size) % 8
    if pad:
        raw = np.concatenate([raw, np.zeros(pad, dtype=np.uint8)])
    return raw.view("<u8").copy()


def unpack_bits(words: np.ndarray, L: int) -> np.ndarray:
    return np.unpackbits(words.view(np.uint8), count=L, bitorder="little")


class Configuration:
    """Occupancy of every site of a topology, stored 64 sites per word.

    Single-writer: ``set`` mutates in place; everything else returns copies.
    """

    __slots__ = ("topology", "words")

    def __init__(self, topology: Topology, words: np.ndarray):
        nwords = (topology.L + 63) // 64
        if words.dtype != np.uint64 or words.shape != (nwords,):
            raise ValueError("word array does not match the topology")
        self.topology = topology
        self.words = words

    @classmethod
    def from_array(cls, topology: Topology, occ) -> "Configuration":
        occ = np.asarray(occ)
        if occ.shape != (topology.L,):
            raise ValueError(f"expected {topology.L} occupancies, got shape {occ.shape}")
        if np.any((occ != 0) & (occ != 1)):
            raise ValueError("occupancies must be 0 or 1")
        return cls(topology, pack_bits(occ.astype(np.uint8)))

    @classmethod
    def zeros(cls, topology: Topology) -> "Configuration":
        return cls(topology, np.zeros((topology.L + 63) // 64, dtype=np.uint64))

    @classmethod
    def ones(cls, topology: Topology) -> "Configuration":
        return cls.from_array(topology, np.ones(topology.L, dtype=np.uint8))

    @classmethod
    def from_sites(cls, topology: Topology, occupied: Sequence[int]) -> "Configuration":
        occ = np.zeros(topology.L, dtype=np.uint8)
        occ[topology.index(np.asarray(list(occupied), dtype=np.int64))] = 1
        return cls.from_array(topology, occ)

    @classmethod
    def from_string(cls, topology: Topology, pattern: str) -> "Configuration":
        return cls.from_array(topology, np.array([int(c) for c in pattern], dtype=np.uint8))

    def to_array(self) -> np.ndarray:
        return unpack_bits(self.words, self.topology.L)

    def __getitem__(self, site: int) -> int:
        pos = self.topology.index(site)
        return int((self.words[pos >> 6] >> np.uint64(pos & 63)) & np.uint64(1))

    def set(self, site: int, value: int) -> None:
        if value not in (0, 1):
            raise ValueError("occupancy must be 0 or 1")
        pos = self.topology.index(site)
        bit = np.uint64(1) << np.uint64(pos & 63)
        if value:
            self.words[pos >> 6] |= bit
        else:
            self.words[pos >> 6] &= ~bit

    def count(self) -> int:
        return int(np.bitwise_count(self.words).sum())

    def copy(self) -> "Configuration":
        return Configuration(self.topology, self.words.copy())

    def complement(self) -> "Configuration":
        return Configuration.from_array(self.topology, 1 - self.to_array())

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return self.topology == other.topology and np.array_equal(self.words, other.words)

    def __hash__(self):
        return hash((self.topology, self.words.tobytes()))

    def __repr__(self):
        occ = self.to_array()
        body = "".join(map(str, occ[:64])) + ("..." if occ.size > 64 else "")
        return f"Configuration({self.topology.describe()}, {body})"


@dataclass(frozen=True)
class DensityProfile:
    """Macroscopic density profile: a constant, a Riemann step, or a table.

    A table holds ``values[k]`` on ``[breaks[k], breaks[k+1])``; outside the
    table the nearest edge value applies. A step is ``lam`` on x < 0 and
    ``rho`` on x >= 0.
    """

    kind: str
    values: tuple = ()
    breaks: tuple = ()
    _tab: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if np.any(~np.isfinite(vals)) or np.any((vals < 0) | (vals > 1)):
            raise ValueError("density values must lie in [0, 1]")
        if self.kind == "constant":
            ok = len(self.values) == 1 and not self.breaks
        elif self.kind == "step":
            ok = len(self.values) == 2 and not self.breaks
        elif self.kind == "table":
            b = np.asarray(self.breaks, dtype=float)
            ok = len(self.values) >= 1 and len(self.breaks) == len(self.values) + 1
            if ok and np.any(np.diff(b) <= 0):
                raise ValueError("table breakpoints must be strictly increasing")
        else:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if not ok:
            raise ValueError(f"malformed {self.kind} profile")

    @classmethod
    def constant(cls, rho: float) -> "DensityProfile":
        return cls("constant", (float(rho),))

    @classmethod
    def step(cls, lam: float, rho: float) -> "DensityProfile":
        return cls("step", (float(lam), float(rho)))

    @classmethod
    def table(cls, breaks, values) -> "DensityProfile":
        return cls("table", tuple(float(v) for v in values), tuple(float(b) for b in breaks))

    def as_table(self):
        """Equivalent (breaks, values) arrays; edge values extend outward."""
        if self.kind == "constant":
            return np.array([0.0, 1.0]), np.array(self.values)
        if self.kind == "step":
            return np.array([-1.0, 0.0, 1.0]), np.array(self.values)
        return np.asarray(self.breaks), np.asarray(self.values)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        breaks, values = self.as_table()
        k = np.searchsorted(breaks, x, side="right") - 1
        return values[np.clip(k, 0, values.size - 1)]

    @property
    def left_value(self) -> float:
        return float(self.as_table()[1][0])

    @property
    def right_value(self) -> float:
        return float(self.as_table()[1][-1])

    def integral(self, a: float, b: float) -> float:
        """Exact integral of the profile over [a, b]."""
        breaks, values = self.as_table()
        edges = np.concatenate([[min(a, breaks[0])], breaks[1:-1], [max(b, breaks[-1])]])
        lo = np.clip(edges[:-1], a, b)
        hi = np.clip(edges[1:], a, b)
        return float(np.sum((hi - lo) * values))


@njit(cache=True)
def _site_uniforms(sites, k0, k1):
    out = np.empty(sites.size)
    for i in range(sites.size):
        w0, _, _, _ = philox4x64(0, 0, 0, sites[i], k0, k1)
        out[i] = to_unit(w0)
    return out


def site_uniforms(key, sites) -> np.ndarray:
    """One uniform per site, a pure function of (key, site label)."""
    k0, k1 = key.words()
    return _site_uniforms(np.asarray(sites, dtype=np.int64).view(np.uint64), k0, k1)


def sample_product(profile: DensityProfile, topology: Topology, key, scale_eps: float = 1.0) -> Configuration:
    """Independent Bernoulli(u0(eps * x)) occupancy at every site x.

    Each site's draw depends only on (key, x), so nested windows sampled with
    the same key agree on their common sites.
    """
    if not scale_eps > 0:
        raise ValueError("scale_eps must be positive")
    sites = topology.sites()
    dens = profile(scale_eps * sites)
    occ = (site_uniforms(key, sites) < dens).astype(np.uint8)
    return Configuration.from_array(topology, occ)
