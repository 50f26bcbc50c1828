"""Fluxes, currents, empirical fields and test functions."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate, optimize

from dephydro.lattice import Configuration, DensityProfile

# ---------------------------------------------------------------- microscopic flux


def flux_of_pattern(m1, z0, p1, p2):
    """Net current across the bond (0, 1) given occupancies at -1, 0, 1, 2."""
    return (
        (z0 - p1)
        + (m1 * z0 * (1 - p1) - (1 - m1) * (1 - z0) * p1)
        + (z0 * p1 * (1 - p2) - (1 - z0) * (1 - p1) * p2)
    )


def micro_flux(config: Configuration, origin: int = 0) -> int:
    topo = config.topology
    sites = [origin - 1, origin, origin + 1, origin + 2]
    if not all(topo.contains(s) for s in sites):
        raise ValueError("flux needs sites origin-1 .. origin+2 inside the window")
    return int(flux_of_pattern(*(config[s] for s in sites)))


def exact_product_expectation(observable: Callable, width: int, rho):
    """Mean of ``observable(*pattern)`` over ``width`` i.i.d. Bernoulli(rho) sites.

    Exact enumeration of all 2**width patterns; with a ``fractions.Fraction``
    density the result is an exact rational.
    """
    if not 1 <= width <= 6:
        raise ValueError("patterns of 1 to 6 sites only")
    total = 0
    for pat in itertools.product((0, 1), repeat=width):
        k = sum(pat)
        total += observable(*pat) * rho**k * (1 - rho) ** (width - k)
    return total


def flux_expectation(rho):
    return exact_product_expectation(flux_of_pattern, 4, rho)


# ---------------------------------------------------------------- currents


def mean_current(current: np.ndarray, t: float) -> float:
    """Signed crossings per bond per unit time, averaged over bonds."""
    if not t > 0:
        raise ValueError("t must be positive")
    return float(np.mean(current) / t)


def window_inflow(current: np.ndarray, lo: int, hi: int, ring: bool) -> int:
    """Net particles that entered positions lo..hi through their end bonds."""
    L = current.size
    left = current[lo - 1] if lo > 0 else (current[L - 1] if ring else 0)
    right = current[hi] if (hi < L - 1 or ring) else 0
    return int(left - right)


# ---------------------------------------------------------------- test functions


@dataclass(frozen=True)
class Hat:
    """Triangle of height 1 on [center - half_width, center + half_width]."""

    center: float = 0.0
    half_width: float = 1.0

    name = "hat"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.clip(1.0 - np.abs(x - self.center) / self.half_width, 0.0, None)

    @property
    def support(self):
        return (self.center - self.half_width, self.center + self.half_width)

    def kinks(self):
        return [self.center - self.half_width, self.center, self.center + self.half_width]

    lipschitz = property(lambda self: 1.0 / self.half_width)


@dataclass(frozen=True)
class TruncatedGaussian:
    """exp(-(x-c)^2 / 2 s^2) - exp(-k^2 / 2), cut to zero beyond k standard deviations."""

    center: float = 0.0
    sigma: float = 0.5
    cutoff: float = 3.0

    name = "gauss"

    def __call__(self, x):
        z = (np.asarray(x, dtype=float) - self.center) / self.sigma
        floor = math.exp(-0.5 * self.cutoff**2)
        return np.where(np.abs(z) < self.cutoff, np.exp(-0.5 * z * z) - floor, 0.0)

    @property
    def support(self):
        w = self.cutoff * self.sigma
        return (self.center - w, self.center + w)

    def kinks(self):
        return list(self.support)

    lipschitz = property(lambda self: math.exp(-0.5) / self.sigma)


@dataclass(frozen=True)
class SmoothedIndicator:
    """1 on [a, b], linear ramps of width ``ramp`` outside, 0 beyond."""

    a: float = 0.0
    b: float = 1.0
    ramp: float = 0.1

    name = "indicator"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        up = np.clip((x - (self.a - self.ramp)) / self.ramp, 0.0, 1.0)
        down = np.clip(((self.b + self.ramp) - x) / self.ramp, 0.0, 1.0)
        return np.minimum(up, down)

    @property
    def support(self):
        return (self.a - self.ramp, self.b + self.ramp)

    def kinks(self):
        return [self.a - self.ramp, self.a, self.b, self.b + self.ramp]

    lipschitz = property(lambda self: 1.0 / self.ramp)


def l2_norm_sq(f) -> float:
    lo, hi = f.support
    return float(integrate.quad(lambda x: float(f(x)) ** 2, lo, hi, points=f.kinks(), limit=200)[0])


def integral_against(f, u: Callable, breaks=()) -> float:
    """Integral of f(x) u(x) over supp f; ``breaks`` lists known jumps of u."""
    lo, hi = f.support
    pts = sorted({p for p in list(f.kinks()) + list(breaks) if lo < p < hi})
    return float(integrate.quad(lambda x: float(f(x)) * float(u(x)), lo, hi, points=pts or None, limit=400)[0])


# ---------------------------------------------------------------- empirical fields


def _covered(config: Configuration, lo_site: float, hi_site: float):
    topo = config.topology
    if lo_site < topo.first or hi_site > topo.last:
        raise ValueError("test function support exceeds the window")


def empirical_pairing(config: Configuration, f, scale_eps: float, shift: float = 0.0) -> float:
    """eps * sum_x f(eps x - shift) eta(x)."""
    if not scale_eps > 0:
        raise ValueError("scale_eps must be positive")
    lo, hi = f.support
    _covered(config, (lo + shift) / scale_eps, (hi + shift) / scale_eps)
    x = config.topology.sites()
    return float(scale_eps * np.dot(f(scale_eps * x - shift), config.to_array()))


def block_density_profile(config: Configuration, block_size: int, scale_eps: float = 1.0) -> DensityProfile:
    """Block means as a table profile; site x covers [eps (x - 1/2), eps (x + 1/2))."""
    if block_size < 1:
        raise ValueError("block size must be at least 1")
    occ = config.to_array().astype(float)
    L = occ.size
    starts = np.arange(0, L, block_size)
    sums = np.add.reduceat(occ, starts)
    sizes = np.diff(np.append(starts, L))
    first = config.topology.first
    breaks = scale_eps * (first + np.append(starts, L) - 0.5)
    return DensityProfile.table(breaks, sums / sizes)


def default_block_size(n: int) -> int:
    return max(8, n // 100)


def block_means(config: Configuration, edges_macro: np.ndarray, scale_eps: float) -> np.ndarray:
    """Mean occupancy of the sites x with eps x in each [edges[k], edges[k+1])."""
    occ = config.to_array().astype(float)
    cum = np.concatenate([[0.0], np.cumsum(occ)])
    first = config.topology.first
    idx = np.ceil(np.asarray(edges_macro, dtype=float) / scale_eps - 1e-9).astype(np.int64) - first
    if idx[0] < 0 or idx[-1] > occ.size:
        raise ValueError("blocks exceed the window")
    if np.any(np.diff(idx) <= 0):
        raise ValueError("every block needs at least one site")
    return (cum[idx[1:]] - cum[idx[:-1]]) / np.diff(idx)


# ---------------------------------------------------------------- fluctuations


class ScalingTime(NamedTuple):
    s: float
    clamped: bool


def scaling_time(t: float, eps: float) -> ScalingTime:
    """Microscopic time s >= e with eps^2 s sqrt(log s) = t.

    When even s = e overshoots, the log correction is out of its regime and
    s = t / eps^2 is returned with ``clamped`` set.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    target = t / eps**2
    if target < math.e:
        return ScalingTime(target, True)
    g = lambda s: s * math.sqrt(math.log(s)) - target
    hi = max(target, math.e) + 1.0
    s = optimize.brentq(g, math.e, hi, xtol=1e-300, rtol=1e-15, maxiter=500)
    return ScalingTime(float(s), False)


def fluctuation_pairing(config: Configuration, f, eps: float, s: float) -> float:
    """eps^(1/2) sum_x f(eps x - eps s)(eta(x) - 1/2).

    On a ring the support wraps around and must be shorter than the ring.
    """
    if not 0 < eps:
        raise ValueError("eps must be positive")
    lo, hi = f.support
    topo = config.topology
    if topo.is_ring:
        x = np.arange(math.ceil(lo / eps + s), math.floor(hi / eps + s) + 1)
        if x.size >= topo.L:
            raise ValueError("test function support wraps the whole ring")
        occ = config.to_array()[np.mod(x, topo.L)]
    else:
        _covered(config, lo / eps + s, hi / eps + s)
        x = topo.sites()
        occ = config.to_array()
    return float(math.sqrt(eps) * np.dot(f(eps * x - eps * s), occ - 0.5))


def interval_fluctuation(config: Configuration, length: int, start: int = 1) -> float:
    """sum_{x = start .. start + length - 1} (eta(x) - 1/2)."""
    if length < 0:
        raise ValueError("length must be nonnegative")
    if length == 0:
        return 0.0
    topo = config.topology
    if not (topo.contains(start) and topo.contains(start + length - 1)) or (topo.is_ring and length > topo.L):
        raise ValueError("interval exceeds the window")
    occ = config.to_array()
    idx = topo.index(np.arange(start, start + length))
    return float(occ[idx].sum() - 0.5 * length)
