import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dephydro.clocks import ClockEvent, Purpose, RngKey
from dephydro.dynamics import step_event
from dephydro.lattice import Configuration, DensityProfile, Ring, Segment, centered_segment, sample_product
from dephydro.observables import (
    Hat,
    SmoothedIndicator,
    TruncatedGaussian,
    block_density_profile,
    block_means,
    empirical_pairing,
    flux_expectation,
    fluctuation_pairing,
    integral_against,
    interval_fluctuation,
    l2_norm_sq,
    mean_current,
    micro_flux,
    scaling_time,
    window_inflow,
)


def test_flux_at_three_quarters_is_exact():
    assert flux_expectation(Fraction(3, 4)) == Fraction(3, 16)
    assert flux_expectation(Fraction(1, 2)) == 0
    assert flux_expectation(Fraction(1, 4)) == Fraction(-3, 16)


@pytest.mark.parametrize("pattern", list(itertools.product((0, 1), repeat=4)))
def test_micro_flux_counts_bond_crossings(pattern):
    # sites -1, 0, 1, 2 sit at ring positions 7, 0, 1, 2; the rest alternate
    topo = Ring(10)
    occ = np.array([pattern[1], pattern[2], pattern[3], 1, 0, 1, 0, pattern[0], 1, 0])
    c = Configuration.from_array(topo, occ)
    total = 0
    for p in range(10):
        for a in (0, 1):
            after = step_event(c, ClockEvent(0.0, p, a)).to_array()
            if np.array_equal(after, occ):
                continue
            src = [q for q in range(10) if occ[q] == 1 and after[q] == 0][0]
            dst = [q for q in range(10) if occ[q] == 0 and after[q] == 1][0]
            # signed number of times the jump crosses the bond (0, 1)
            lo, hi = sorted((src, dst))
            if (hi - lo) > 5:
                lo, hi = hi - 10, lo
            if lo <= 0 < hi:
                total += 1 if dst == hi % 10 else -1
    assert micro_flux(c, 0) == total


def test_micro_flux_needs_four_sites():
    with pytest.raises(ValueError):
        micro_flux(Configuration.zeros(Segment(6)), 6)


def test_mean_current_and_inflow():
    cur = np.array([2, 0, -2, 4])
    assert mean_current(cur, 2.0) == 0.5
    assert window_inflow(cur, 1, 2, ring=False) == 2 - (-2)
    assert window_inflow(cur, 0, 3, ring=True) == 4 - 4
    assert window_inflow(cur, 0, 3, ring=False) == 0
    with pytest.raises(ValueError):
        mean_current(cur, 0.0)


@pytest.mark.parametrize("f, norm", [(Hat(0, 1), 2 / 3), (SmoothedIndicator(-1, 1, 0.25), 2 + 2 * 0.25 / 3),
                                     (TruncatedGaussian(0, 0.5, 3), None)])
def test_test_functions(f, norm):
    lo, hi = f.support
    x = np.linspace(lo - 1, hi + 1, 4001)
    y = f(x)
    assert np.all(y[(x <= lo) | (x >= hi)] == 0)
    assert np.max(np.abs(np.diff(y) / np.diff(x))) <= f.lipschitz * (1 + 1e-9)
    if norm is None:
        s = 0.5
        # exact value of the integral of (exp(-z^2/2s^2) - c)^2 over |z| < 3s
        c = math.exp(-4.5)
        norm = (s * math.sqrt(math.pi) * math.erf(3) - 2 * c * s * math.sqrt(2 * math.pi) * math.erf(3 / math.sqrt(2))
                + c * c * 6 * s)
    assert l2_norm_sq(f) == pytest.approx(norm, rel=1e-9)


def test_integral_against_step():
    u = DensityProfile.step(1.0, 0.0)
    assert integral_against(Hat(0, 1), u, breaks=[0.0]) == pytest.approx(0.5)


def test_empirical_pairing_constant_density():
    topo = centered_segment(2000)
    c = sample_product(DensityProfile.constant(0.3), topo, RngKey(1, Purpose.INIT))
    assert empirical_pairing(c, Hat(0, 1), 0.001) == pytest.approx(0.3, abs=0.03)
    ones = Configuration.ones(topo)
    assert empirical_pairing(ones, Hat(0, 1), 0.01) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        empirical_pairing(ones, Hat(0, 1), 0.0001)


def test_block_means():
    topo = Segment(10, first=-5)  # sites -5 .. 4
    c = Configuration.from_array(topo, [1, 1, 0, 0, 1, 0, 1, 1, 1, 0])
    # eps = 1/2: blocks [-2, 0) and [0, 2) hold sites -4..-1 and 0..3
    assert block_means(c, np.array([-2.0, 0.0, 2.0]), 0.5).tolist() == [0.5, 0.75]
    with pytest.raises(ValueError):
        block_means(c, np.array([-4.0, 0.0]), 0.5)
    with pytest.raises(ValueError):
        block_means(c, np.array([0.1, 0.4]), 0.5)


def test_block_density_profile():
    topo = Segment(6, first=0)
    c = Configuration.from_array(topo, [1, 1, 0, 1, 0, 0])
    prof = block_density_profile(c, 3)
    assert prof(np.array([0.0, 1.0, 3.0, 4.9])).tolist() == [2 / 3, 2 / 3, 1 / 3, 1 / 3]


# ---------------------------------------------------------------- fluctuations


@pytest.mark.parametrize("t, eps", [(0.1, 0.01), (0.5, 0.005), (1.0, 0.1), (0.25, 0.2)])
def test_scaling_time_residual(t, eps):
    st_ = scaling_time(t, eps)
    assert not st_.clamped
    assert eps**2 * st_.s * math.sqrt(math.log(st_.s)) == pytest.approx(t, rel=1e-12)


def test_scaling_time_clamp_and_errors():
    st_ = scaling_time(1e-4, 0.1)
    assert st_.clamped and st_.s == pytest.approx(1e-2)
    for bad in [(0.0, 0.1), (1.0, 1.5)]:
        with pytest.raises(ValueError):
            scaling_time(*bad)


def test_fluctuation_variance_at_time_zero():
    eps = 0.01
    f = Hat(0, 1)
    topo = Ring(400)
    rng = np.random.default_rng(11)
    vals = np.array([fluctuation_pairing(Configuration.from_array(topo, rng.integers(0, 2, 400)), f, eps, 0.0)
                     for _ in range(10_000)])
    x = np.arange(-100, 101)
    exact = 0.25 * eps * np.sum(f(eps * x) ** 2)
    assert abs(vals.mean()) < 4 * math.sqrt(exact / vals.size)
    assert vals.var() == pytest.approx(exact, rel=0.03)


def test_fluctuation_pairing_wraps_and_shifts():
    topo = Ring(50)
    c = Configuration.from_sites(topo, [48, 49, 0, 1, 2])
    f = SmoothedIndicator(-0.5, 0.5, 0.1)
    # with eps = 1/10 the support covers |x| <= 6; shifting by s = 25 moves it to the far side
    assert fluctuation_pairing(c, f, 0.1, 0.0) > fluctuation_pairing(c, f, 0.1, 25.0)
    with pytest.raises(ValueError):
        fluctuation_pairing(c, f, 0.01, 0.0)


def test_interval_fluctuation_variance():
    L = 1000
    rng = np.random.default_rng(5)
    topo = Segment(L)
    vals = np.array([interval_fluctuation(Configuration.from_array(topo, rng.integers(0, 2, L)), L) for _ in range(10_000)])
    assert vals.var() == pytest.approx(L / 4, rel=0.05)


@given(st.lists(st.integers(0, 1), min_size=5, max_size=40), st.integers(0, 39))
def test_interval_fluctuation_oracle(occ, length):
    topo = Segment(len(occ))
    length = min(length, len(occ))
    c = Configuration.from_array(topo, occ)
    assert interval_fluctuation(c, length) == sum(occ[:length]) - length / 2


def test_interval_fluctuation_errors():
    c = Configuration.zeros(Segment(10))
    with pytest.raises(ValueError):
        interval_fluctuation(c, 11)
    with pytest.raises(ValueError):
        interval_fluctuation(c, -1)
