"""Two-cell crossing-point optimisation under constant currents.

A vessel moving at speed ``s`` relative to the water, in a cell with current
vector ``u``, covers a displacement ``d`` in the time ``t`` satisfying
``|d - t*u| = s*t``. Squaring gives a quadratic whose smaller positive root
is the travel time. The crossing solvers minimise the sum of two such travel
times over the offset ``y`` of the crossing point along the shared boundary
between two cells, by running Newton's method on the stationarity function
``F(y)`` (the derivative of the time sum scaled by the positive factor
``X1*X2``) with a bisection safeguard.

Three solver variants are provided:

* ``solve_flat`` - constant cell widths; used when building the cell-to-cell
  graph. The caller pre-scales east-west spans by the cosine of each cell's
  centre latitude.
* ``solve_smoothed_horizontal`` - east-west pairs with a within-cell
  latitude correction: the horizontal span becomes ``z = x*cos(theta)``
  with ``theta = y/R + lambda`` changing along the boundary.
* ``solve_smoothed_vertical`` - north-south pairs where the boundary sits at
  a fixed latitude; horizontal offsets at the entry and exit latitudes are
  related to offsets at the boundary by the cosine ratios
  ``r1 = cos(lambda)/cos(theta)`` and ``r2 = cos(psi)/cos(theta)``.

Shorthand used throughout (per side i = 1, 2):

* ``C = s^2 - u^2 - v^2`` - excess of vessel speed over current speed.
* ``D = u . d`` - current component along the displacement.
* ``X = sqrt(D^2 + C*|d|^2)``, so that ``t = (X - D) / C``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

from .geo import EARTH_RADIUS_M

FLAT_HORIZONTAL = "flat_horizontal"
SMOOTHED_HORIZONTAL = "smoothed_horizontal"
SMOOTHED_VERTICAL = "smoothed_vertical"


class TransitError(ValueError):
    """Base class for transit feasibility failures."""


class InfeasibleTransit(TransitError):
    """The vessel cannot make headway against the current on this leg."""


class UndefinedTransit(TransitError):
    """Current speed equals vessel speed and is orthogonal to the leg."""


def travel_time(d: Tuple[float, float], u: Tuple[float, float], s: float) -> float:
    """Time in seconds to cover displacement ``d`` (m) under current ``u`` (m/s).

    Solves ``(s^2 - |u|^2) t^2 + 2 (u.d) t - |d|^2 = 0`` for the smallest
    positive root. When ``s^2 == |u|^2`` the quadratic degenerates to the
    linear solution ``t = |d|^2 / (2 u.d)``, valid only for ``u.d > 0``.

    Raises ``InfeasibleTransit`` when the vessel is too slow to reach the
    target, ``UndefinedTransit`` in the orthogonal equal-speed case.
    """
    if s <= 0.0:
        raise ValueError("vessel speed must be positive")
    dx, dy = d
    ux, uy = u
    d2 = dx * dx + dy * dy
    if d2 == 0.0:
        return 0.0
    c = s * s - (ux * ux + uy * uy)
    dot = ux * dx + uy * dy
    if c == 0.0:
        if dot > 0.0:
            return d2 / (2.0 * dot)
        if dot == 0.0:
            raise UndefinedTransit("current matches vessel speed orthogonally")
        raise InfeasibleTransit("current matches vessel speed and opposes travel")
    disc = dot * dot + d2 * c
    if c < 0.0:
        if dot <= 0.0 or disc < 0.0:
            raise InfeasibleTransit("vessel slower than current on this heading")
    return (math.sqrt(disc) - dot) / c


@dataclass(frozen=True)
class CellTraversal:
    """One cell's contribution to a crossing problem, in the normalised frame.

    ``u`` points along the travel axis (towards the boundary), ``v`` along
    the boundary axis (direction of increasing ``y``). ``half_span`` is the
    distance from the start point to the boundary in metres; for the
    smoothed-horizontal case it is the un-scaled (equatorial) span.
    """

    speed: float
    u: float
    v: float
    half_span: float

    def excess(self) -> float:
        return self.speed * self.speed - self.u * self.u - self.v * self.v


@dataclass(frozen=True)
class CrossingProblem:
    """An adjacent-cell-pair crossing task in the normalised frame.

    ``Y`` is the signed offset of the end point from the start point along
    the boundary axis, in metres. Latitudes (degrees) are required by the
    smoothed orientations only: entry/exit for horizontal, entry/exit and
    boundary for vertical. ``earth_radius`` sets the curvature strength of
    the smoothed-horizontal correction.
    """

    left: CellTraversal
    right: CellTraversal
    Y: float
    orientation: str = FLAT_HORIZONTAL
    lat_entry: Optional[float] = None
    lat_exit: Optional[float] = None
    lat_boundary: Optional[float] = None
    earth_radius: float = EARTH_RADIUS_M

    def span(self) -> float:
        return abs(self.left.half_span) + abs(self.right.half_span) + abs(self.Y)


@dataclass(frozen=True)
class CrossingSolution:
    """Optimised crossing offset with the two cell travel times."""

    yval: float
    t1: float
    t2: float
    converged: bool
    iterations: int

    @property
    def total_time(self) -> float:
        return self.t1 + self.t2


def _require_feasible(problem: CrossingProblem) -> None:
    if problem.left.excess() <= 0.0:
        raise InfeasibleTransit("left cell: current as fast as the vessel")
    if problem.right.excess() <= 0.0:
        raise InfeasibleTransit("right cell: current as fast as the vessel")
    if problem.left.half_span <= 0.0 or problem.right.half_span <= 0.0:
        raise ValueError("half spans must be positive")


def _eval_flat(problem: CrossingProblem, y: float):
    """F, dF and the travel times for the constant-width crossing."""
    L, R_, Y = problem.left, problem.right, problem.Y
    x, a = L.half_span, R_.half_span
    u1, v1, u2, v2 = L.u, L.v, R_.u, R_.v
    c1, c2 = L.excess(), R_.excess()
    d1 = x * u1 + y * v1
    d2 = a * u2 + (Y - y) * v2
    x1 = math.sqrt(d1 * d1 + c1 * (x * x + y * y))
    x2 = math.sqrt(d2 * d2 + c2 * (a * a + (Y - y) * (Y - y)))
    t1 = (x1 - d1) / c1
    t2 = (x2 - d2) / c2
    dx1 = (d1 * v1 + c1 * y) / x1
    dx2 = (-d2 * v2 - c2 * (Y - y)) / x2
    f = x2 * (y - v1 * (x1 - d1) / c1) + x1 * (y - Y + v2 * (x2 - d2) / c2)
    df = ((x1 + x2) + y * (dx1 + dx2)
          - (v1 / c1) * (dx2 * (x1 - d1) + x2 * (dx1 - v1))
          + (v2 / c2) * (dx1 * (x2 - d2) + x1 * (dx2 + v2))
          - Y * dx1)
    return f, df, t1, t2, x1 * x2


def _eval_smoothed_horizontal(problem: CrossingProblem, y: float):
    """F, dF and travel times with the within-cell latitude correction.

    theta = y/R + lambda tracks the crossing latitude; the effective spans
    are z_l = x*cos(theta) and z_r = a*cos(psi) with psi = -(Y-y)/R + tau.
    """
    L, R_, Y = problem.left, problem.right, problem.Y
    x, a = L.half_span, R_.half_span
    u1, v1, u2, v2 = L.u, L.v, R_.u, R_.v
    c1, c2 = L.excess(), R_.excess()
    rad = problem.earth_radius
    lam = math.radians(problem.lat_entry)
    tau = math.radians(problem.lat_exit)
    theta = y / rad + lam
    psi = -(Y - y) / rad + tau
    zl = x * math.cos(theta)
    zr = a * math.cos(psi)
    dzl = -x * math.sin(theta) / rad
    dzr = -a * math.sin(psi) / rad
    d1 = zl * u1 + y * v1
    d2 = zr * u2 + (Y - y) * v2
    x1 = math.sqrt(d1 * d1 + c1 * (zl * zl + y * y))
    x2 = math.sqrt(d2 * d2 + c2 * (zr * zr + (Y - y) * (Y - y)))
    t1 = (x1 - d1) / c1
    t2 = (x2 - d2) / c2
    dd1 = dzl * u1 + v1
    dd2 = dzr * u2 - v2
    dx1 = (d1 * v1 + c1 * y + dzl * (d1 * u1 + c1 * zl)) / x1
    dx2 = (-v2 * d2 - c2 * (Y - y) + dzr * (d2 * u2 + c2 * zr)) / x2
    zl_term = zl - t1 * u1
    zr_term = zr - t2 * u2
    f = ((x1 + x2) * y - t1 * x2 * v1 + t2 * x1 * v2 - Y * x1
         + dzr * zr_term * x1 + dzl * zl_term * x2)
    df = ((x1 + x2) + y * (dx1 + dx2)
          - (v1 / c1) * (dx2 * (x1 - d1) + x2 * (dx1 - dd1))
          + (v2 / c2) * (dx1 * (x2 - d2) + x1 * (dx2 - dd2))
          - Y * dx1
          - (zr / (rad * rad)) * zr_term * x1
          - (zl / (rad * rad)) * zl_term * x2
          + dzr * (dzr - (u2 / c2) * (dx2 - dd2)) * x1
          + dzl * (dzl - (u1 / c1) * (dx1 - dd1)) * x2
          + dzr * zr_term * dx1 + dzl * zl_term * dx2)
    return f, df, t1, t2, x1 * x2


def _eval_smoothed_vertical(problem: CrossingProblem, y: float):
    """F, dF and travel times with cosine-ratio horizontal corrections.

    The boundary sits at a fixed latitude theta; ``y`` is the horizontal
    offset measured at that latitude. r1 and r2 rescale offsets to the
    entry and exit latitudes.
    """
    L, R_, Y = problem.left, problem.right, problem.Y
    x, a = L.half_span, R_.half_span
    u1, v1, u2, v2 = L.u, L.v, R_.u, R_.v
    c1, c2 = L.excess(), R_.excess()
    cos_b = math.cos(math.radians(problem.lat_boundary))
    r1 = math.cos(math.radians(problem.lat_entry)) / cos_b
    r2 = math.cos(math.radians(problem.lat_exit)) / cos_b
    d1 = x * u1 + r1 * v1 * y
    d2 = a * u2 + r2 * v2 * (Y - y)
    d1sq = x * x + (r1 * y) * (r1 * y)
    d2sq = a * a + (r2 * (Y - y)) * (r2 * (Y - y))
    x1 = math.sqrt(d1 * d1 + c1 * d1sq)
    x2 = math.sqrt(d2 * d2 + c2 * d2sq)
    t1 = (x1 - d1) / c1
    t2 = (x2 - d2) / c2
    dx1 = r1 * (d1 * v1 + r1 * c1 * y) / x1
    dx2 = -r2 * (d2 * v2 + r2 * c2 * (Y - y)) / x2
    f = ((r2 * r2 * x1 + r1 * r1 * x2) * y
         - r1 * (x1 - d1) * x2 * v1 / c1
         + r2 * (x2 - d2) * x1 * v2 / c2
         - r2 * r2 * Y * x1)
    df = ((r2 * r2 * x1 + r1 * r1 * x2)
          + y * (r2 * r2 * dx1 + r1 * r1 * dx2)
          - (r1 * v1 / c1) * ((dx1 - r1 * v1) * x2 + (x1 - d1) * dx2)
          + (r2 * v2 / c2) * ((dx2 + r2 * v2) * x1 + dx1 * (x2 - d2))
          - r2 * r2 * Y * dx1)
    return f, df, t1, t2, x1 * x2


_EVALUATORS: dict[str, Callable] = {
    FLAT_HORIZONTAL: _eval_flat,
    SMOOTHED_HORIZONTAL: _eval_smoothed_horizontal,
    SMOOTHED_VERTICAL: _eval_smoothed_vertical,
}


def evaluate(problem: CrossingProblem, y: float) -> Tuple[float, float, float, float]:
    """Return (F, dF, t1, t2) at offset ``y`` for the problem's orientation."""
    f, df, t1, t2, _ = _EVALUATORS[problem.orientation](problem, y)
    return f, df, t1, t2


def crossing_objective(problem: CrossingProblem, y: float) -> float:
    """Total travel time t1 + t2 at offset ``y``."""
    _, _, t1, t2, _ = _EVALUATORS[problem.orientation](problem, y)
    return t1 + t2


def _mirrored(problem: CrossingProblem) -> CrossingProblem:
    """Reflect the problem about the boundary axis origin (y -> -y)."""
    L, R_ = problem.left, problem.right
    return CrossingProblem(
        left=CellTraversal(L.speed, L.u, -L.v, L.half_span),
        right=CellTraversal(R_.speed, R_.u, -R_.v, R_.half_span),
        Y=-problem.Y,
        orientation=problem.orientation,
        lat_entry=problem.lat_entry,
        lat_exit=problem.lat_exit,
        lat_boundary=problem.lat_boundary,
        earth_radius=problem.earth_radius,
    )


def _wants_mirror(problem: CrossingProblem) -> bool:
    """Canonical sign choice so that mirrored inputs give exactly mirrored output."""
    if problem.Y != 0.0:
        return problem.Y < 0.0
    if problem.left.v != 0.0:
        return problem.left.v < 0.0
    return problem.right.v < 0.0


def _solve(problem: CrossingProblem, init_y: Optional[float],
           tol: float, max_iter: int) -> CrossingSolution:
    """Safeguarded Newton iteration on F(y).

    Maintains a sign-changing bracket around the root where one exists and
    bisects whenever the Newton step leaves it or the derivative degenerates.
    The flat and vertical problems are mirror-symmetric, so they are first
    normalised to a canonical sign; this makes the mirror identity exact.
    """
    _require_feasible(problem)
    mirror = problem.orientation != SMOOTHED_HORIZONTAL and _wants_mirror(problem)
    if mirror:
        inner = _solve(_mirrored(problem), None if init_y is None else -init_y,
                       tol, max_iter)
        return CrossingSolution(-inner.yval, inner.t1, inner.t2,
                                inner.converged, inner.iterations)

    eval_fn = _EVALUATORS[problem.orientation]
    x, a, Y = problem.left.half_span, problem.right.half_span, problem.Y
    span = max(problem.span(), 1.0)
    y = init_y if init_y is not None else Y * x / (x + a)

    lo = min(0.0, Y) - 4.0 * span
    hi = max(0.0, Y) + 4.0 * span
    f_lo = eval_fn(problem, lo)[0]
    f_hi = eval_fn(problem, hi)[0]
    for _ in range(4):
        if f_lo < 0.0 < f_hi:
            break
        lo -= 2.0 * span
        hi += 2.0 * span
        f_lo = eval_fn(problem, lo)[0]
        f_hi = eval_fn(problem, hi)[0]
    bracketed = f_lo < 0.0 < f_hi
    y = min(max(y, lo), hi)

    xtol = 1e-9 * span
    t1 = t2 = math.inf
    for iteration in range(1, max_iter + 1):
        f, df, t1, t2, scale = eval_fn(problem, y)
        if abs(f) <= tol * max(scale, 1.0):
            return CrossingSolution(y, t1, t2, True, iteration)
        if bracketed:
            if f > 0.0:
                hi = y
            else:
                lo = y
        if df != 0.0 and math.isfinite(df):
            y_new = y - f / df
        else:
            y_new = math.nan
        if not math.isfinite(y_new) or not lo <= y_new <= hi:
            if not bracketed:
                return CrossingSolution(y, t1, t2, False, iteration)
            y_new = 0.5 * (lo + hi)
        if abs(y_new - y) <= xtol:
            f, df, t1, t2, scale = eval_fn(problem, y_new)
            return CrossingSolution(y_new, t1, t2, abs(f) <= tol * max(scale, 1.0),
                                    iteration)
        y = y_new
    return CrossingSolution(y, t1, t2, False, max_iter)


def solve_flat(problem: CrossingProblem, init_y: Optional[float] = None,
               tol: float = 1e-9, max_iter: int = 100) -> CrossingSolution:
    """Optimise the crossing offset for a constant-width cell pair."""
    if problem.orientation != FLAT_HORIZONTAL:
        raise ValueError(f"expected {FLAT_HORIZONTAL} orientation")
    return _solve(problem, init_y, tol, max_iter)


def solve_smoothed_horizontal(problem: CrossingProblem, init_y: Optional[float] = None,
                              tol: float = 1e-9, max_iter: int = 100) -> CrossingSolution:
    """Optimise an east-west crossing with the within-cell latitude correction.

    The returned offset may place the crossing outside the cells' shared
    latitude range; callers handle that case (horseshoe insertion).
    """
    if problem.orientation != SMOOTHED_HORIZONTAL:
        raise ValueError(f"expected {SMOOTHED_HORIZONTAL} orientation")
    if problem.lat_entry is None or problem.lat_exit is None:
        raise ValueError("smoothed horizontal crossing needs entry and exit latitudes")
    return _solve(problem, init_y, tol, max_iter)


def solve_smoothed_vertical(problem: CrossingProblem, init_y: Optional[float] = None,
                            tol: float = 1e-9, max_iter: int = 100) -> CrossingSolution:
    """Optimise a north-south crossing with cosine-ratio corrections."""
    if problem.orientation != SMOOTHED_VERTICAL:
        raise ValueError(f"expected {SMOOTHED_VERTICAL} orientation")
    if (problem.lat_entry is None or problem.lat_exit is None
            or problem.lat_boundary is None):
        raise ValueError("smoothed vertical crossing needs entry, exit and boundary latitudes")
    return _solve(problem, init_y, tol, max_iter)
