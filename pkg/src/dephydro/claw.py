"""The conservation law u_t + G(u)_x = 0 with G(u) = 2u(1-u)(2u-1).

Exact Riemann solutions (case construction and a variational oracle),
Rankine-Hugoniot and Oleinik checks, and a first-order Godunov solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from numba import njit

from dephydro.lattice import DensityProfile

SQRT3 = math.sqrt(3.0)
# interior critical points of G: minimum at U_MIN, maximum at U_MAX
U_MIN = 0.5 - 1.0 / (2.0 * SQRT3)
U_MAX = 0.5 + 1.0 / (2.0 * SQRT3)
MAX_SPEED = 2.0  # max |H| on [0, 1]


def flux(u):
    u = np.asarray(u, dtype=float)
    return 2.0 * u * (1.0 - u) * (2.0 * u - 1.0)


def speed(u):
    """Characteristic speed H = G'."""
    u = np.asarray(u, dtype=float)
    return 1.0 - 12.0 * (u - 0.5) ** 2


def speed_derivative(u):
    return 24.0 * (0.5 - np.asarray(u, dtype=float))


def speed_inverse(v, upper: bool):
    """Branch of H^-1 on [0, 1/2] (lower) or [1/2, 1] (upper); needs -2 <= v <= 1."""
    v = np.asarray(v, dtype=float)
    if np.any(v > 1.0 + 1e-15) or np.any(v < -MAX_SPEED - 1e-15):
        raise ValueError("speed outside [-2, 1]")
    r = np.sqrt(np.clip(1.0 - v, 0.0, None) / 12.0)
    return 0.5 + r if upper else 0.5 - r


def _speed_inverse_integral(v, upper: bool):
    """Antiderivative of the H^-1 branch in v."""
    w = np.clip(1.0 - np.asarray(v, dtype=float), 0.0, None)
    c = (2.0 / 3.0) * w**1.5 / math.sqrt(12.0)
    return 0.5 * v - c if upper else 0.5 * v + c


def tangency(u: float) -> float:
    """Point a != u where the chord from u touches the graph: G'(a) = (G(a)-G(u))/(a-u).

    The tangency condition reduces to 8a^2 - (4u+6)a + 6u - 4u^2 = 0 with roots
    u and 3/4 - u/2; the trivial root is discarded.
    """
    if not 0.0 <= u <= 1.0:
        raise ValueError("u must lie in [0, 1]")
    if u == 0.5:
        raise ValueError("tangency degenerates at the inflection point u = 1/2")
    return 0.75 - 0.5 * u


def rh_speed(u_minus: float, u_plus: float) -> float:
    if u_minus == u_plus:
        raise ValueError("shock speed needs distinct states")
    return float((flux(u_minus) - flux(u_plus)) / (u_minus - u_plus))


def oleinik_check(u_minus: float, u_plus: float, tol: float = 1e-12) -> bool:
    """Chord condition for a jump u_minus -> u_plus.

    chord(s) - G(s) = 4 (s - u_minus)(s - u_plus)(s - r) with r = 3/2 - u_minus - u_plus,
    so its sign between the states is fixed by where r sits. The chord must
    lie below the graph for increasing jumps and above it for decreasing
    ones; ``tol`` absorbs roundoff at tangential contact.
    """
    if u_minus == u_plus:
        raise ValueError("no jump between equal states")
    r = 1.5 - u_minus - u_plus
    if u_minus < u_plus:
        return r <= u_minus + tol
    return r >= u_minus - tol


# ---------------------------------------------------------------- Riemann solutions

CONSTANT, FAN_LOWER, FAN_UPPER = "constant", "fan_lower", "fan_upper"


class Piece(NamedTuple):
    kind: str
    v_lo: float
    v_hi: float
    value: float = float("nan")  # only for constants

    def __call__(self, v):
        if self.kind == CONSTANT:
            return np.full(np.shape(v), self.value)
        return speed_inverse(np.clip(v, self.v_lo, self.v_hi), self.kind == FAN_UPPER)

    def integral(self, a: float, b: float) -> float:
        a, b = max(a, self.v_lo), min(b, self.v_hi)
        if b <= a:
            return 0.0
        if self.kind == CONSTANT:
            return self.value * (b - a)
        up = self.kind == FAN_UPPER
        return float(_speed_inverse_integral(b, up) - _speed_inverse_integral(a, up))


@dataclass(frozen=True)
class RiemannSolution:
    """Self-similar entropy solution u(x, t) = U(x / t), stored as pieces in v."""

    lam: float
    rho: float
    pieces: tuple

    def __call__(self, v):
        """U(v); at a jump the left state is returned."""
        v = np.asarray(v, dtype=float)
        k = np.searchsorted(self.breakpoints(), v, side="left")
        out = np.empty(v.shape)
        for i, p in enumerate(self.pieces):
            sel = k == i
            out[sel] = p(v[sel])
        return out if out.ndim else float(out)

    def at(self, x, t: float):
        if not t > 0:
            raise ValueError("t must be positive")
        return self(np.asarray(x, dtype=float) / t)

    def breakpoints(self) -> list:
        return [p.v_hi for p in self.pieces[:-1]]

    def jumps(self) -> list:
        """(v, u_minus, u_plus) for each discontinuity."""
        out = []
        for left, right in zip(self.pieces, self.pieces[1:]):
            v = left.v_hi
            a, b = float(left(np.array(v))), float(right(np.array(v)))
            if abs(a - b) > 1e-12:
                out.append((v, a, b))
        return out

    def integral_v(self, a: float, b: float) -> float:
        """Exact integral of U over [a, b] in the fan variable."""
        return sum(p.integral(a, b) for p in self.pieces)

    def cell_average(self, x0: float, x1: float, t: float) -> float:
        """Exact mean of u(., t) over [x0, x1]."""
        if not (t > 0 and x1 > x0):
            raise ValueError("need t > 0 and a nonempty cell")
        return t * self.integral_v(x0 / t, x1 / t) / (x1 - x0)

    def complement(self) -> "RiemannSolution":
        """1 - U, the solution for data (1 - lam, 1 - rho)."""
        swap = {CONSTANT: CONSTANT, FAN_LOWER: FAN_UPPER, FAN_UPPER: FAN_LOWER}
        pieces = tuple(
            Piece(swap[p.kind], p.v_lo, p.v_hi, 1.0 - p.value if p.kind == CONSTANT else float("nan"))
            for p in self.pieces
        )
        return RiemannSolution(1.0 - self.lam, 1.0 - self.rho, pieces)


def _constant(value, lo=-math.inf, hi=math.inf):
    return Piece(CONSTANT, lo, hi, float(value))


def _solve_low(lam: float, rho: float) -> tuple:
    """Pieces for rho <= 1/2."""
    if lam == rho:
        return (_constant(lam),)
    if lam < rho:
        # lam < rho <= 1/2: G convex there, continuous fan on the lower branch
        a, b = float(speed(lam)), float(speed(rho))
        return (_constant(lam, hi=a), Piece(FAN_LOWER, a, b), _constant(rho, lo=b))
    star = tangency(rho) if rho != 0.5 else 0.5
    if lam <= star:
        s = rh_speed(lam, rho)
        return (_constant(lam, hi=s), _constant(rho, lo=s))
    # lam > rho*: fan on the upper branch from lam down to rho*, then a contact shock
    a, b = float(speed(lam)), float(speed(star))
    return (_constant(lam, hi=a), Piece(FAN_UPPER, a, b), _constant(rho, lo=b))


def riemann_solve(lam: float, rho: float) -> RiemannSolution:
    """Entropy solution for data lam on x < 0 and rho on x > 0."""
    if not (0.0 <= lam <= 1.0 and 0.0 <= rho <= 1.0):
        raise ValueError("Riemann data must lie in [0, 1]")
    lam, rho = float(lam), float(rho)
    if rho <= 0.5:
        sol = RiemannSolution(lam, rho, _solve_low(lam, rho))
    else:
        sol = RiemannSolution(1.0 - lam, 1.0 - rho, _solve_low(1.0 - lam, 1.0 - rho)).complement()
    for v, a, b in sol.jumps():
        if not oleinik_check(a, b):
            raise AssertionError(f"inadmissible jump {a} -> {b} at v = {v}")
        if abs(rh_speed(a, b) - v) > 1e-12:
            raise AssertionError(f"jump {a} -> {b} moves at {rh_speed(a, b)}, not {v}")
    return sol


def riemann_variational(lam: float, rho: float, v):
    """argmin of G(s) - v s over [lam, rho] (argmax over [rho, lam] if lam > rho).

    Vectorized over ``v``; the optimum sits at an endpoint or where H(s) = v.
    """
    lo, hi = min(lam, rho), max(lam, rho)
    vv = np.atleast_1d(np.asarray(v, dtype=float))
    cands = [np.full(vv.shape, lo), np.full(vv.shape, hi)]
    inside = (vv >= -MAX_SPEED) & (vv <= 1.0)
    for up in (False, True):
        s = np.full(vv.shape, lo)
        s[inside] = speed_inverse(vv[inside], up)
        cands.append(np.where((s > lo) & (s < hi), s, lo))
    c = np.stack(cands)
    vals = flux(c) - vv * c
    k = np.argmin(vals, axis=0) if lam <= rho else np.argmax(vals, axis=0)
    out = c[k, np.arange(vv.size)]
    return float(out[0]) if np.ndim(v) == 0 else out


# ---------------------------------------------------------------- Godunov scheme


@njit(cache=True)
def _g(u):
    return 2.0 * u * (1.0 - u) * (2.0 * u - 1.0)


@njit(cache=True)
def _godunov_flux(a, b):
    lo, hi = (a, b) if a <= b else (b, a)
    best = _g(a)
    fb = _g(b)
    if a <= b:
        best = min(best, fb)
    else:
        best = max(best, fb)
    for c in (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0)):
        if lo < c < hi:
            fc = _g(c)
            best = min(best, fc) if a <= b else max(best, fc)
    return best


def godunov_flux(a: float, b: float) -> float:
    """Exact Riemann flux: min of G over [a, b] if a <= b, else max over [b, a]."""
    return float(_godunov_flux(float(a), float(b)))


@njit(cache=True)
def _godunov_steps(u, left, right, dt_over_dx, nsteps):
    n = u.size
    f = np.empty(n + 1)
    boundary = 0.0
    for _ in range(nsteps):
        f[0] = _godunov_flux(left, u[0])
        for i in range(1, n):
            f[i] = _godunov_flux(u[i - 1], u[i])
        f[n] = _godunov_flux(u[n - 1], right)
        for i in range(n):
            u[i] -= dt_over_dx * (f[i + 1] - f[i])
        boundary += f[0] - f[n]
    return boundary


@dataclass
class Grid1D:
    """Cell averages on [-A, A] with far-field ghost values."""

    half_width: float
    dx: float
    u: np.ndarray
    left: float
    right: float
    cfl: float = 0.4
    t: float = 0.0
    boundary_inflow: float = 0.0  # time integral of (flux in at left - flux out at right)

    @classmethod
    def from_profile(cls, profile: DensityProfile, half_width: float, dx: float, cfl: float = 0.4) -> "Grid1D":
        if not (half_width > 0 and dx > 0):
            raise ValueError("need positive half-width and cell size")
        if not 0 < cfl <= 0.5:
            raise ValueError("CFL number must lie in (0, 0.5]")
        n = int(round(2 * half_width / dx))
        if n < 2 or abs(n * dx - 2 * half_width) > 1e-9 * half_width:
            raise ValueError("cell size must divide the domain width")
        edges = -half_width + dx * np.arange(n + 1)
        u = np.array([profile.integral(a, b) / dx for a, b in zip(edges[:-1], edges[1:])])
        return cls(half_width, dx, u, profile.left_value, profile.right_value, cfl)

    @property
    def centers(self) -> np.ndarray:
        return -self.half_width + self.dx * (np.arange(self.u.size) + 0.5)

    @property
    def edges(self) -> np.ndarray:
        return -self.half_width + self.dx * np.arange(self.u.size + 1)

    def mass(self) -> float:
        return float(self.u.sum() * self.dx)

    def copy(self) -> "Grid1D":
        return Grid1D(self.half_width, self.dx, self.u.copy(), self.left, self.right, self.cfl, self.t, self.boundary_inflow)

    def advance(self, t_to: float) -> None:
        """Step to time ``t_to`` with dt = cfl dx / 2, shortening only the last step."""
        if t_to < self.t:
            raise ValueError("cannot step backwards")
        dt = self.cfl * self.dx / MAX_SPEED
        span = t_to - self.t
        nfull = int(math.floor(span / dt + 1e-9))
        if nfull:
            self.boundary_inflow += dt * _godunov_steps(self.u, self.left, self.right, dt / self.dx, nfull)
        rest = span - nfull * dt
        if rest > 1e-14:
            self.boundary_inflow += rest * _godunov_steps(self.u, self.left, self.right, rest / self.dx, 1)
        self.t = t_to


class GodunovRun(NamedTuple):
    grid: Grid1D
    snapshots: list


def godunov_evolve(
    profile: DensityProfile,
    half_width: float,
    dx: float,
    t_end: float,
    cfl: float = 0.4,
    snapshot_times: Optional[Sequence[float]] = None,
) -> GodunovRun:
    grid = Grid1D.from_profile(profile, half_width, dx, cfl)
    snaps = []
    for s in sorted(snapshot_times or []):
        if not 0 <= s <= t_end:
            raise ValueError("snapshot times must lie in [0, t_end]")
        grid.advance(s)
        snaps.append(grid.copy())
    grid.advance(t_end)
    return GodunovRun(grid, snaps)


def level_crossing(x: np.ndarray, u: np.ndarray, level: float) -> float:
    """Rightmost x where the piecewise-linear interpolant of u crosses ``level``."""
    above = u >= level
    idx = np.flatnonzero(above[:-1] != above[1:])
    if idx.size == 0:
        raise ValueError("profile never crosses the level")
    i = idx[-1]
    return float(x[i] + (level - u[i]) * (x[i + 1] - x[i]) / (u[i + 1] - u[i]))


def l1_error_cells(grid: Grid1D, sol: RiemannSolution, t: float, a: float, b: float) -> float:
    """L1 distance on [a, b] between grid cells and exact cell averages of a Riemann solution."""
    e = grid.edges
    inside = (e[:-1] >= a - 1e-12) & (e[1:] <= b + 1e-12)
    exact = np.array([sol.cell_average(x0, x1, t) for x0, x1 in zip(e[:-1][inside], e[1:][inside])])
    return float(np.sum(np.abs(grid.u[inside] - exact)) * grid.dx)
