"""Iterative route smoothing off the mesh.

The mesh-optimal route visits cell centres, which are artifacts of the mesh.
Smoothing drops the centre visits and re-optimises every crossing point
between the entry and exit points that contextualise its adjacent cell pair,
using the curvature-corrected solvers. When an optimised crossing escapes
the shared boundary segment, the route is extended around the corner with a
horseshoe pattern of up to three new adjacent cell pairs; diagonal (corner)
crossings are replaced by a transit of one of the two flanking cells.

Three constraints keep the smoothed route honest to the mesh:

1. a horseshoe whose new cells are blocked is clipped back to a corner of
   the original pair;
2. reversing edges introduced by successive horseshoes are removed;
3. cells with much higher ice concentration than the original pair are
   treated like blocked cells (step changes in speed are not navigable).

Iteration sweeps the whole path left to right; it stops when two successive
sweeps change the total travel time by less than the convergence tolerance
(and no cells were added or removed), or at the iteration cap.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from . import crossing as cr
from .env_mesh import (CASE_E, CASE_N, CASE_S, CASE_W, CellBox,
                       NeighbourGraph)
from .geo import DEFAULT_UNITS, GeoPoint, Units, lat_scale
from .planner import DijkstraPath, Point, RouteLeg, leg_through_cell
from .vessel_perf import CellPerformance

logger = logging.getLogger(__name__)

_ON_BOUNDARY_TOL = 1e-9  # degrees
_MIN_SPAN = 1e-3         # metres; below this a side collapses to the boundary


@dataclass(frozen=True)
class SmoothingConfig:
    epsilon: float = 1000.0            # metres between entry and exit
    max_iterations: int = 1000
    convergence_tol_days: float = 1e-3
    ice_step_limit: float = 10.0       # SIC percentage points
    enforce_ice_step: bool = True

    def __post_init__(self):
        if self.epsilon <= 0.0 or self.convergence_tol_days <= 0.0:
            raise ValueError("epsilon and convergence tolerance must be positive")


@dataclass
class RouteNode:
    """A route vertex: a fixed waypoint or a crossing between two cells.

    ``src`` is the cell of the leg arriving at the node, ``dst`` the cell of
    the leg leaving it; waypoints leave one of them None. ``case`` is the
    crossing's case code (None for waypoints).
    """

    point: Point
    src: Optional[int]
    dst: Optional[int]
    case: Optional[int] = None

    @property
    def is_crossing(self) -> bool:
        return self.case is not None


@dataclass
class SmoothingState:
    """Mutable smoothing workspace: the node list plus tracking-point cursor.

    The mid tracking point is ``nodes[cursor]``; the first and last tracking
    points are its neighbours.
    """

    nodes: List[RouteNode]
    cursor: int = 1
    iteration: int = 0
    last_total_time: float = math.inf


@dataclass(frozen=True)
class HorseshoeRequest:
    """Emitted when an optimised crossing escapes its boundary segment."""

    side: int            # case code of the escape direction (±2 or ±4)
    overshoot: Point     # where the unconstrained crossing wanted to be


@dataclass
class SmoothedRoute:
    """The smoothed route with per-leg quantities and convergence info."""

    start: GeoPoint
    end: GeoPoint
    points: List[Point]
    legs: List[RouteLeg]
    iterations: int
    converged: bool
    trace: List[Tuple[int, float, int]] = field(default_factory=list)

    @property
    def total_time(self) -> float:
        return sum(leg.time for leg in self.legs)

    @property
    def total_distance(self) -> float:
        return sum(leg.distance for leg in self.legs)

    @property
    def total_fuel(self) -> float:
        return sum(leg.fuel for leg in self.legs)


def _project(point: Point, boundary) -> Point:
    """Nearest point on the boundary segment."""
    kind = boundary[0]
    if kind == "v":
        lon_b, lo, hi = boundary[1:]
        return (lon_b, min(max(point[1], lo), hi))
    if kind == "h":
        lat_b, lo, hi = boundary[1:]
        return (min(max(point[0], lo), hi), lat_b)
    return (boundary[1], boundary[2])


def _on_boundary(point: Point, boundary, tol: float = _ON_BOUNDARY_TOL) -> bool:
    kind = boundary[0]
    if kind == "v":
        lon_b, lo, hi = boundary[1:]
        return abs(point[0] - lon_b) <= tol and lo - tol <= point[1] <= hi + tol
    if kind == "h":
        lat_b, lo, hi = boundary[1:]
        return abs(point[1] - lat_b) <= tol and lo - tol <= point[0] <= hi + tol
    return abs(point[0] - boundary[1]) <= tol and abs(point[1] - boundary[2]) <= tol


def _line_boundary_point(p: Point, q: Point, boundary) -> Point:
    """Where the segment p->q crosses the boundary line, clamped to the segment."""
    kind = boundary[0]
    if kind == "c":
        return (boundary[1], boundary[2])
    if kind == "v":
        coord, lo, hi = boundary[1:]
        denom = q[0] - p[0]
        t = 0.5 if denom == 0.0 else (coord - p[0]) / denom
        t = min(max(t, 0.0), 1.0)
        val = p[1] + t * (q[1] - p[1])
        return (coord, min(max(val, lo), hi))
    coord, lo, hi = boundary[1:]
    denom = q[1] - p[1]
    t = 0.5 if denom == 0.0 else (coord - p[1]) / denom
    t = min(max(t, 0.0), 1.0)
    val = p[0] + t * (q[0] - p[0])
    return (min(max(val, lo), hi), coord)


def ice_step_guard(pair_cells: Sequence[CellBox], candidates: Sequence[CellBox],
                   perf: Dict[int, CellPerformance], cfg: SmoothingConfig) -> bool:
    """Whether smoothing may enter all candidate cells.

    Inaccessible candidates are always rejected; accessible ones are rejected
    when their ice concentration exceeds the original pair's maximum by more
    than the configured step limit.
    """
    for cell in candidates:
        p = perf.get(cell.id)
        if p is None or not p.accessible:
            return False
    if not cfg.enforce_ice_step:
        return True
    base = max(c.agg_sic for c in pair_cells)
    return all(c.agg_sic <= base + cfg.ice_step_limit for c in candidates)


def smooth_step_horizontal(entry: Point, exit_: Point, src: CellBox, dst: CellBox,
                           case: int, boundary, perf: Dict[int, CellPerformance],
                           curvature_radius: float,
                           units: Units = DEFAULT_UNITS,
                           ) -> Tuple[Point, Optional[HorseshoeRequest]]:
    """Re-optimise an east-west crossing between its entry and exit points.

    Returns the new crossing point, plus a horseshoe request when the
    optimum leaves the shared latitude range.
    """
    k = units.metres_per_degree
    lon_b, lat_lo, lat_hi = boundary[1:]
    sgn = 1.0 if case == CASE_E else -1.0
    x = abs(lon_b - entry[0]) * k
    a = abs(exit_[0] - lon_b) * k
    if x < _MIN_SPAN:
        return _project(entry, boundary), None
    if a < _MIN_SPAN:
        return _project(exit_, boundary), None
    problem = cr.CrossingProblem(
        left=cr.CellTraversal(perf[src.id].speed_mps, sgn * src.agg_u, src.agg_v, x),
        right=cr.CellTraversal(perf[dst.id].speed_mps, sgn * dst.agg_u, dst.agg_v, a),
        Y=(exit_[1] - entry[1]) * k,
        orientation=cr.SMOOTHED_HORIZONTAL,
        lat_entry=entry[1], lat_exit=exit_[1],
        earth_radius=curvature_radius)
    sol = cr.solve_smoothed_horizontal(problem)
    lat_new = entry[1] + sol.yval / k
    if lat_lo <= lat_new <= lat_hi:
        return (lon_b, lat_new), None
    side = CASE_S if lat_new < lat_lo else CASE_N
    return _project((lon_b, lat_new), boundary), HorseshoeRequest(side, (lon_b, lat_new))


def smooth_step_vertical(entry: Point, exit_: Point, src: CellBox, dst: CellBox,
                         case: int, boundary, perf: Dict[int, CellPerformance],
                         units: Units = DEFAULT_UNITS,
                         ) -> Tuple[Point, Optional[HorseshoeRequest]]:
    """Re-optimise a north-south crossing; may request an east/west horseshoe."""
    k = units.metres_per_degree
    lat_b, lon_lo, lon_hi = boundary[1:]
    north = case == CASE_N
    x = abs(lat_b - entry[1]) * k
    a = abs(exit_[1] - lat_b) * k
    if x < _MIN_SPAN:
        return _project(entry, boundary), None
    if a < _MIN_SPAN:
        return _project(exit_, boundary), None
    cos_b = lat_scale(lat_b)
    u1 = src.agg_v if north else -src.agg_v
    u2 = dst.agg_v if north else -dst.agg_v
    problem = cr.CrossingProblem(
        left=cr.CellTraversal(perf[src.id].speed_mps, u1, src.agg_u, x),
        right=cr.CellTraversal(perf[dst.id].speed_mps, u2, dst.agg_u, a),
        Y=(exit_[0] - entry[0]) * k * cos_b,
        orientation=cr.SMOOTHED_VERTICAL,
        lat_entry=entry[1], lat_exit=exit_[1], lat_boundary=lat_b)
    sol = cr.solve_smoothed_vertical(problem)
    lon_new = entry[0] + sol.yval / (k * cos_b)
    if lon_lo <= lon_new <= lon_hi:
        return (lon_new, lat_b), None
    side = CASE_W if lon_new < lon_lo else CASE_E
    return _project((lon_new, lat_b), boundary), HorseshoeRequest(side, (lon_new, lat_b))


def smooth_step_diagonal(entry: Point, exit_: Point, src: CellBox, dst: CellBox,
                         case: int, graph: NeighbourGraph,
                         perf: Dict[int, CellPerformance], cfg: SmoothingConfig,
                         units: Units = DEFAULT_UNITS) -> Optional[List[RouteNode]]:
    """Replace a corner crossing by a transit of an off-diagonal flank cell.

    Evaluates both flanking cells (where accessible and within the ice-step
    limit) and returns the pair of replacement crossing nodes through the
    cheaper one; None when both flanks are unusable.
    """
    corner = _project((0.0, 0.0), graph.shared_boundary(src.id, dst.id))
    probe = 1e-6 * min(src.half_width, src.half_height,
                       dst.half_width, dst.half_height)
    if abs(case) == 1:  # NE/SW pair: flanks are the NW and SE quadrants
        probes = [(-probe, probe), (probe, -probe)]
    else:               # SE/NW pair: flanks are the NE and SW quadrants
        probes = [(probe, probe), (-probe, -probe)]
    candidates: List[CellBox] = []
    for dx, dy in probes:
        cell = graph.cell_at(corner[0] + dx, corner[1] + dy)
        if cell is None or cell.id in (src.id, dst.id):
            continue
        if not ice_step_guard((src, dst), [cell], perf, cfg):
            continue
        if (src.id, cell.id) not in graph.edges or (cell.id, dst.id) not in graph.edges:
            continue
        candidates.append(cell)
    best: Optional[Tuple[float, CellBox, Point, Point]] = None
    for cell in sorted(candidates, key=lambda c: c.id):
        b1 = graph.shared_boundary(src.id, cell.id)
        b2 = graph.shared_boundary(cell.id, dst.id)
        p1 = _line_boundary_point(entry, exit_, b1)
        p2 = _line_boundary_point(entry, exit_, b2)
        try:
            t1, _, _ = leg_through_cell(entry, p1, src, perf[src.id], units)
            t2, _, _ = leg_through_cell(p1, p2, cell, perf[cell.id], units)
            t3, _, _ = leg_through_cell(p2, exit_, dst, perf[dst.id], units)
        except cr.TransitError:
            continue
        cost = t1 + t2 + t3
        if best is None or cost < best[0]:
            best = (cost, cell, p1, p2)
    if best is None:
        return None
    _, cell, p1, p2 = best
    return [RouteNode(p1, src.id, cell.id, graph.edges[(src.id, cell.id)]),
            RouteNode(p2, cell.id, dst.id, graph.edges[(cell.id, dst.id)])]


def apply_special_cases(state: SmoothingState, cfg: SmoothingConfig,
                        graph: NeighbourGraph,
                        units: Units = DEFAULT_UNITS) -> bool:
    """Snap the cursor crossing when entry/exit coincide or sit on the boundary.

    When the entry and exit points are within epsilon of each other the
    crossing is placed on the boundary nearest the exit; when either of them
    already lies on the shared boundary the crossing is placed over it (the
    corresponding cell travel time becomes zero).
    """
    node = state.nodes[state.cursor]
    if not node.is_crossing or abs(node.case) in (1, 3):
        return False
    entry = state.nodes[state.cursor - 1].point
    exit_ = state.nodes[state.cursor + 1].point
    boundary = graph.shared_boundary(node.src, node.dst)
    k = units.metres_per_degree
    mean_lat = 0.5 * (entry[1] + exit_[1])
    dx = (exit_[0] - entry[0]) * k * lat_scale(mean_lat)
    dy = (exit_[1] - entry[1]) * k
    if math.hypot(dx, dy) < cfg.epsilon:
        node.point = _project(exit_, boundary)
        return True
    if _on_boundary(entry, boundary):
        node.point = _project(entry, boundary)
        return True
    if _on_boundary(exit_, boundary):
        node.point = _project(exit_, boundary)
        return True
    return False


def remove_reversing_edges(state: SmoothingState) -> int:
    """Collapse consecutive crossings that traverse a boundary both ways.

    Removing such a pair leaves the route inside the outer cell; the
    operation is idempotent. Returns the number of nodes removed.
    """
    nodes = state.nodes
    removed = 0
    i = 1
    while i < len(nodes) - 1:
        a, b = nodes[i], nodes[i + 1]
        if (a.is_crossing and b.is_crossing
                and a.src == b.dst and a.dst == b.src):
            del nodes[i:i + 2]
            removed += 2
            i = max(i - 1, 1)
            continue
        i += 1
    if removed and state.cursor >= len(nodes) - 1:
        state.cursor = max(len(nodes) - 2, 1)
    return removed


class Smoother:
    """Runs the smoothing iteration over one mesh/performance context."""

    def __init__(self, graph: NeighbourGraph, perf: Dict[int, CellPerformance],
                 cfg: Optional[SmoothingConfig] = None,
                 units: Units = DEFAULT_UNITS,
                 curvature_radius: Optional[float] = None):
        self.graph = graph
        self.perf = perf
        self.cfg = cfg or SmoothingConfig()
        self.units = units
        self.curvature_radius = curvature_radius or units.earth_radius

    # -- route evaluation -------------------------------------------------

    def total_time(self, nodes: Sequence[RouteNode]) -> float:
        total = 0.0
        for i in range(len(nodes) - 1):
            cell_id = nodes[i].dst
            cell = self.graph.cells[cell_id]
            try:
                t, _, _ = leg_through_cell(nodes[i].point, nodes[i + 1].point,
                                           cell, self.perf[cell_id], self.units)
            except cr.TransitError:
                return math.inf
            total += t
        return total

    def build_legs(self, nodes: Sequence[RouteNode]) -> List[RouteLeg]:
        legs = []
        for i in range(len(nodes) - 1):
            cell_id = nodes[i].dst
            cell = self.graph.cells[cell_id]
            t, d, f = leg_through_cell(nodes[i].point, nodes[i + 1].point,
                                       cell, self.perf[cell_id], self.units)
            legs.append(RouteLeg(nodes[i].point, nodes[i + 1].point, cell_id, t, d, f))
        return legs

    # -- horseshoe construction -------------------------------------------

    def _side_neighbour(self, cell_id: int, side: int, probe: float) -> Optional[CellBox]:
        """Neighbour on the given side whose extent covers the probe coordinate."""
        for nbr_id, _ in self.graph.neighbours(cell_id, case=side):
            nbr = self.graph.cells[nbr_id]
            if abs(side) == CASE_S:  # horizontal sides: probe is a longitude
                if nbr.lon_min - _ON_BOUNDARY_TOL <= probe <= nbr.lon_max + _ON_BOUNDARY_TOL:
                    return nbr
            else:                    # vertical sides: probe is a latitude
                if nbr.lat_min - _ON_BOUNDARY_TOL <= probe <= nbr.lat_max + _ON_BOUNDARY_TOL:
                    return nbr
        return None

    def _horseshoe(self, state: SmoothingState, request: HorseshoeRequest) -> int:
        """Insert the horseshoe cells; returns the number of nodes now at the cursor.

        Falls back to clipping the crossing to the nearest corner of the
        original pair when the needed cells are missing, blocked or rejected
        by the ice-step guard (constraints 1 and 3).
        """
        i = state.cursor
        node = state.nodes[i]
        src = self.graph.cells[node.src]
        dst = self.graph.cells[node.dst]
        boundary = self.graph.shared_boundary(node.src, node.dst)
        kind = boundary[0]
        side = request.side
        if kind == "v":
            lon_b, lo, hi = boundary[1:]
            corner = (lon_b, lo if side == CASE_S else hi)
            delta = 1e-9 * max(abs(hi - lo), 1e-3)
            probe_src, probe_dst = lon_b - delta, lon_b + delta
            if self.graph.edges.get((node.src, node.dst)) == CASE_W:
                probe_src, probe_dst = probe_dst, probe_src
        else:
            lat_b, lo, hi = boundary[1:]
            corner = (lo if side == CASE_W else hi, lat_b)
            delta = 1e-9 * max(abs(hi - lo), 1e-3)
            probe_src, probe_dst = lat_b - delta, lat_b + delta
            if self.graph.edges.get((node.src, node.dst)) == CASE_S:
                probe_src, probe_dst = probe_dst, probe_src
        cs = self._side_neighbour(node.src, side, probe_src)
        cd = self._side_neighbour(node.dst, side, probe_dst)

        def clip() -> int:
            node.point = corner
            return 1

        if cs is None or cd is None:
            return clip()
        flank = [cs] if cs.id == cd.id else [cs, cd]
        if not ice_step_guard((src, dst), flank, self.perf, self.cfg):
            return clip()

        entry = state.nodes[i - 1].point
        exit_ = state.nodes[i + 1].point
        new_nodes: List[RouteNode] = []
        if cs.id == cd.id:
            b1 = self.graph.shared_boundary(node.src, cs.id)
            b2 = self.graph.shared_boundary(cs.id, node.dst)
            new_nodes.append(RouteNode(_line_boundary_point(entry, request.overshoot, b1),
                                       node.src, cs.id, self.graph.edges[(node.src, cs.id)]))
            new_nodes.append(RouteNode(_line_boundary_point(request.overshoot, exit_, b2),
                                       cs.id, node.dst, self.graph.edges[(cs.id, node.dst)]))
        else:
            if (cs.id, cd.id) not in self.graph.edges:
                return clip()
            b1 = self.graph.shared_boundary(node.src, cs.id)
            b2 = self.graph.shared_boundary(cs.id, cd.id)
            b3 = self.graph.shared_boundary(cd.id, node.dst)
            new_nodes.append(RouteNode(_line_boundary_point(entry, request.overshoot, b1),
                                       node.src, cs.id, self.graph.edges[(node.src, cs.id)]))
            new_nodes.append(RouteNode(_project(request.overshoot, b2),
                                       cs.id, cd.id, self.graph.edges[(cs.id, cd.id)]))
            new_nodes.append(RouteNode(_line_boundary_point(request.overshoot, exit_, b3),
                                       cd.id, node.dst, self.graph.edges[(cd.id, node.dst)]))
        state.nodes[i:i + 1] = new_nodes
        logger.debug("horseshoe via %s at crossing %d", [c.id for c in flank], i)
        return len(new_nodes)

    # -- the sweep ---------------------------------------------------------

    def _process_cursor(self, state: SmoothingState) -> Tuple[int, bool]:
        """Smooth the node at the cursor; returns (nodes now occupying it, structural?)."""
        node = state.nodes[state.cursor]
        entry = state.nodes[state.cursor - 1].point
        exit_ = state.nodes[state.cursor + 1].point
        src = self.graph.cells[node.src]
        dst = self.graph.cells[node.dst]
        if abs(node.case) in (1, 3):
            replacement = smooth_step_diagonal(entry, exit_, src, dst, node.case,
                                               self.graph, self.perf, self.cfg,
                                               self.units)
            if replacement is None:
                return 1, False
            state.nodes[state.cursor:state.cursor + 1] = replacement
            return len(replacement), True
        if apply_special_cases(state, self.cfg, self.graph, self.units):
            return 1, False
        boundary = self.graph.shared_boundary(node.src, node.dst)
        try:
            if boundary[0] == "v":
                point, request = smooth_step_horizontal(
                    entry, exit_, src, dst, node.case, boundary, self.perf,
                    self.curvature_radius, self.units)
            else:
                point, request = smooth_step_vertical(
                    entry, exit_, src, dst, node.case, boundary, self.perf,
                    self.units)
        except cr.TransitError:
            return 1, False
        if request is None:
            node.point = point
            return 1, False
        inserted = self._horseshoe(state, request)
        return inserted, inserted > 1

    def sweep(self, state: SmoothingState) -> bool:
        """One full left-to-right pass; True when the cell structure changed."""
        structural = False
        state.cursor = 1
        guard = 0
        while state.cursor < len(state.nodes) - 1:
            guard += 1
            if guard > 50 * (len(state.nodes) + 8):
                logger.warning("sweep guard tripped at %d nodes", len(state.nodes))
                break
            advanced, changed = self._process_cursor(state)
            structural = structural or changed
            state.cursor += advanced
        if remove_reversing_edges(state):
            structural = True
        return structural

    def smooth(self, path: DijkstraPath) -> SmoothedRoute:
        """Smooth a mesh-optimal route until the travel time converges."""
        sp = (path.start.lon, path.start.lat)
        ep = (path.end.lon, path.end.lat)
        nodes = [RouteNode(sp, None, path.cells[0], None)]
        for pair in path.pairs:
            nodes.append(RouteNode(pair.crossing_point, pair.src, pair.dst, pair.case))
        nodes.append(RouteNode(ep, path.cells[-1], None, None))
        state = SmoothingState(nodes=nodes)
        state.last_total_time = self.total_time(nodes)

        tol_seconds = self.cfg.convergence_tol_days * self.units.seconds_per_day
        converged = False
        trace: List[Tuple[int, float, int]] = []
        iterations = 0
        for iteration in range(1, self.cfg.max_iterations + 1):
            state.iteration = iterations = iteration
            structural = self.sweep(state)
            total = self.total_time(state.nodes)
            trace.append((iteration, total, len(state.nodes)))
            if not structural and abs(state.last_total_time - total) < tol_seconds:
                converged = True
                state.last_total_time = total
                break
            state.last_total_time = total

        legs = self.build_legs(state.nodes)
        points = [n.point for n in state.nodes]
        if not converged:
            logger.warning("smoothing did not converge in %d iterations", iterations)
        return SmoothedRoute(start=path.start, end=path.end, points=points,
                             legs=legs, iterations=iterations,
                             converged=converged, trace=trace)


def smooth(path: DijkstraPath, graph: NeighbourGraph,
           perf: Dict[int, CellPerformance],
           cfg: Optional[SmoothingConfig] = None,
           units: Units = DEFAULT_UNITS,
           curvature_radius: Optional[float] = None) -> SmoothedRoute:
    """Smooth a Dijkstra path over its mesh (convenience wrapper)."""
    return Smoother(graph, perf, cfg, units, curvature_radius).smooth(path)
