"""Cell-to-cell route planning over the augmented mesh.

Every directed pair of adjacent cells is normalised into a canonical
left-to-right crossing problem (rotating or mirroring axes and current
components according to the case code), solved with the flat Newton solver,
and materialised as an edge carrying travel time, distance and fuel.
Dijkstra's algorithm then finds the minimum-cost cell sequence between two
waypoints under a selectable objective; crossing points always remain the
travel-time-optimal ones.

Leg quantities are evaluated with one canonical per-cell metric (east-west
offsets scaled by the cosine of the cell's centre latitude) so that route
totals are consistent between the planner and the smoother.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from . import crossing as cr
from .env_mesh import (CASE_E, CASE_N, CASE_NE, CASE_NW, CASE_S, CASE_SE,
                       CASE_SW, CASE_W, CellBox, NeighbourGraph)
from .geo import DEFAULT_UNITS, GeoPoint, Units, lat_scale
from .vessel_perf import CellPerformance

logger = logging.getLogger(__name__)

OBJECTIVES = ("travel_time", "fuel", "distance")

Point = Tuple[float, float]  # (lon, lat) in the mesh frame


class PlacementError(ValueError):
    """A waypoint falls outside the mesh or inside a blocked cell."""


class NoRouteError(RuntimeError):
    """The two waypoints are not connected in the pruned graph."""


@dataclass(frozen=True)
class Objective:
    kind: str = "travel_time"

    def __post_init__(self):
        if self.kind not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")


def cell_metric_vec(p: Point, q: Point, cell: CellBox,
                    units: Units = DEFAULT_UNITS) -> Tuple[float, float]:
    """Displacement q - p in metres using the cell's fixed east-west scale."""
    k = units.metres_per_degree
    return ((q[0] - p[0]) * k * lat_scale(cell.cy), (q[1] - p[1]) * k)


def leg_through_cell(p: Point, q: Point, cell: CellBox, perf: CellPerformance,
                     units: Units = DEFAULT_UNITS) -> Tuple[float, float, float]:
    """(time s, distance m, fuel t) for a straight leg inside one cell."""
    d = cell_metric_vec(p, q, cell, units)
    t = cr.travel_time(d, (cell.agg_u, cell.agg_v), perf.speed_mps)
    dist = math.hypot(*d)
    fuel = t * perf.fuel_rate / units.seconds_per_day
    return t, dist, fuel


@dataclass(frozen=True)
class AdjacentCellPair:
    """One directed crossing between two adjacent cells."""

    src: int
    dst: int
    case: int
    crossing: cr.CrossingSolution
    crossing_point: Point
    t_src: float
    t_dst: float
    leg_time: float
    leg_distance: float
    leg_fuel: float

    def weight(self, objective: Objective) -> float:
        if objective.kind == "travel_time":
            return self.leg_time
        if objective.kind == "fuel":
            return self.leg_fuel
        return self.leg_distance


# Current components (u along travel axis, v along boundary axis) per case,
# expressed as (sign of east comp into u, use north comp in u) etc. The
# frames are: E=(east, north), W=(west, north), S=(south, east), N=(north, east).
def _frame_currents(code: int, u_east: float, v_north: float) -> Tuple[float, float]:
    if code == CASE_E:
        return u_east, v_north
    if code == CASE_W:
        return -u_east, v_north
    if code == CASE_S:
        return -v_north, u_east
    if code == CASE_N:
        return v_north, u_east
    raise ValueError(f"no normalised frame for case {code}")


def _corner_point(cell: CellBox, code: int) -> Point:
    lon = cell.lon_max if code in (CASE_NE, CASE_SE) else cell.lon_min
    lat = cell.lat_max if code in (CASE_NE, CASE_NW) else cell.lat_min
    return (lon, lat)


def _solve_pair(graph: NeighbourGraph, src: CellBox, dst: CellBox, code: int,
                perf_src: CellPerformance, perf_dst: CellPerformance,
                units: Units) -> Tuple[cr.CrossingSolution, Point]:
    """Newton-optimised crossing point for one directed orthogonal pair."""
    k = units.metres_per_degree
    kind, coord, seg_lo, seg_hi = graph.shared_boundary(src.id, dst.id)
    u1, v1 = _frame_currents(code, src.agg_u, src.agg_v)
    u2, v2 = _frame_currents(code, dst.agg_u, dst.agg_v)
    if kind == "v":
        x = src.half_width * k * lat_scale(src.cy)
        a = dst.half_width * k * lat_scale(dst.cy)
        yy = (dst.cy - src.cy) * k
    else:
        x = src.half_height * k
        a = dst.half_height * k
        yy = (dst.cx - src.cx) * k * lat_scale(coord)
    problem = cr.CrossingProblem(
        left=cr.CellTraversal(perf_src.speed_mps, u1, v1, x),
        right=cr.CellTraversal(perf_dst.speed_mps, u2, v2, a),
        Y=yy, orientation=cr.FLAT_HORIZONTAL)
    sol = cr.solve_flat(problem)
    if kind == "v":
        lat = min(max(src.cy + sol.yval / k, seg_lo), seg_hi)
        point = (coord, lat)
        y_clamped = (lat - src.cy) * k
    else:
        lon = min(max(src.cx + sol.yval / (k * lat_scale(coord)), seg_lo), seg_hi)
        point = (lon, coord)
        y_clamped = (lon - src.cx) * k * lat_scale(coord)
    if y_clamped != sol.yval:
        _, _, t1, t2 = cr.evaluate(problem, y_clamped)
        sol = cr.CrossingSolution(y_clamped, t1, t2, sol.converged, sol.iterations)
    return sol, point


def build_edges(graph: NeighbourGraph, perf: Dict[int, CellPerformance],
                units: Units = DEFAULT_UNITS) -> Dict[Tuple[int, int], AdjacentCellPair]:
    """Materialise every directed adjacency as a weighted crossing edge.

    Orthogonal pairs get Newton-optimised crossing points (clamped to the
    shared boundary segment); diagonal pairs cross exactly at the shared
    corner. Pairs infeasible under the currents are omitted.
    """
    edges: Dict[Tuple[int, int], AdjacentCellPair] = {}
    for (src_id, dst_id), code in sorted(graph.edges.items()):
        src, dst = graph.cells[src_id], graph.cells[dst_id]
        ps, pd = perf.get(src_id), perf.get(dst_id)
        if ps is None or pd is None or not (ps.accessible and pd.accessible):
            continue
        try:
            if abs(code) in (1, 3):
                point = _corner_point(src, code)
                solution = None
            else:
                solution, point = _solve_pair(graph, src, dst, code, ps, pd, units)
            t1, d1, f1 = leg_through_cell((src.cx, src.cy), point, src, ps, units)
            t2, d2, f2 = leg_through_cell(point, (dst.cx, dst.cy), dst, pd, units)
        except cr.TransitError:
            logger.debug("edge %s->%s infeasible under currents", src_id, dst_id)
            continue
        if solution is None:
            solution = cr.CrossingSolution(0.0, t1, t2, True, 0)
        edges[(src_id, dst_id)] = AdjacentCellPair(
            src=src_id, dst=dst_id, case=code, crossing=solution,
            crossing_point=point, t_src=t1, t_dst=t2,
            leg_time=t1 + t2, leg_distance=d1 + d2, leg_fuel=f1 + f2)
    return edges


@dataclass(frozen=True)
class RouteLeg:
    """A straight route segment inside a single cell."""

    start: Point
    end: Point
    cell: int
    time: float
    distance: float
    fuel: float


@dataclass
class DijkstraPath:
    """Mesh-optimal route: centres and crossing points in visit order."""

    start: GeoPoint
    end: GeoPoint
    objective: Objective
    cells: List[int]
    points: List[Point]
    legs: List[RouteLeg]
    cost: float
    pairs: List[AdjacentCellPair]

    @property
    def total_time(self) -> float:
        return sum(leg.time for leg in self.legs)

    @property
    def total_distance(self) -> float:
        return sum(leg.distance for leg in self.legs)

    @property
    def total_fuel(self) -> float:
        return sum(leg.fuel for leg in self.legs)


def locate_cell(graph: NeighbourGraph, perf: Dict[int, CellPerformance],
                point: Point) -> CellBox:
    """Accessible cell containing the point (smallest id wins on boundaries)."""
    hits = [c for c in graph.cells.values()
            if c.contains(point[0], point[1])]
    if not hits:
        raise PlacementError(f"waypoint {point} is outside the mesh")
    open_hits = [c for c in hits if perf.get(c.id) and perf[c.id].accessible]
    if not open_hits:
        raise PlacementError(f"waypoint {point} falls in a blocked cell "
                             f"(candidates {sorted(c.id for c in hits)})")
    return min(open_hits, key=lambda c: c.id)


def _in_cell_leg(p: Point, q: Point, cell: CellBox, perf: CellPerformance,
                 units: Units) -> RouteLeg:
    t, d, f = leg_through_cell(p, q, cell, perf, units)
    return RouteLeg(p, q, cell.id, t, d, f)


def _leg_weight(leg: RouteLeg, objective: Objective) -> float:
    if objective.kind == "travel_time":
        return leg.time
    if objective.kind == "fuel":
        return leg.fuel
    return leg.distance


def _blocking_frontier(graph: NeighbourGraph, visited: set) -> List[int]:
    """Cells that halt the search: non-visited cells touching the visited set."""
    from .env_mesh import _contact_case
    frontier = set()
    inside = [graph.cells[v] for v in visited]
    for cell in graph.cells.values():
        if cell.id in visited:
            continue
        for v in inside:
            try:
                if _contact_case(cell, v) is not None:
                    frontier.add(cell.id)
                    break
            except Exception:
                frontier.add(cell.id)
                break
    return sorted(frontier)


def plan(graph: NeighbourGraph, edges: Dict[Tuple[int, int], AdjacentCellPair],
         perf: Dict[int, CellPerformance], start: GeoPoint, end: GeoPoint,
         objective: Objective = Objective(),
         units: Units = DEFAULT_UNITS) -> DijkstraPath:
    """Minimum-cost route between two waypoints under the objective.

    The start waypoint joins its containing cell's centre by a straight
    in-cell leg, then the route follows adjacent-cell-pair edges, and a
    final in-cell leg reaches the end waypoint.
    """
    sp: Point = (start.lon, start.lat)
    ep: Point = (end.lon, end.lat)
    start_cell = locate_cell(graph, perf, sp)
    end_cell = locate_cell(graph, perf, ep)

    if start_cell.id == end_cell.id:
        try:
            leg = _in_cell_leg(sp, ep, start_cell, perf[start_cell.id], units)
        except cr.TransitError as exc:
            raise NoRouteError(f"start cell {start_cell.id} untraversable: {exc}")
        return DijkstraPath(start, end, objective, [start_cell.id], [sp, ep],
                            [leg], _leg_weight(leg, objective), [])

    try:
        start_leg = _in_cell_leg(sp, (start_cell.cx, start_cell.cy),
                                 start_cell, perf[start_cell.id], units)
    except cr.TransitError as exc:
        raise NoRouteError(f"start cell {start_cell.id} untraversable: {exc}")

    out_edges: Dict[int, List[AdjacentCellPair]] = {}
    for pair in edges.values():
        out_edges.setdefault(pair.src, []).append(pair)
    for lst in out_edges.values():
        lst.sort(key=lambda p: p.dst)

    dist: Dict[int, float] = {start_cell.id: _leg_weight(start_leg, objective)}
    prev: Dict[int, AdjacentCellPair] = {}
    visited: set = set()
    heap: List[Tuple[float, int]] = [(dist[start_cell.id], start_cell.id)]
    while heap:
        cost, cell_id = heapq.heappop(heap)
        if cell_id in visited:
            continue
        visited.add(cell_id)
        if cell_id == end_cell.id:
            break
        for pair in out_edges.get(cell_id, ()):
            if pair.dst in visited:
                continue
            new_cost = cost + pair.weight(objective)
            if pair.dst not in dist or new_cost < dist[pair.dst]:
                dist[pair.dst] = new_cost
                prev[pair.dst] = pair
                heapq.heappush(heap, (new_cost, pair.dst))
            elif new_cost == dist[pair.dst] and pair.src < prev[pair.dst].src:
                prev[pair.dst] = pair  # deterministic parent on exact ties
    if end_cell.id not in visited:
        frontier = _blocking_frontier(graph, visited)
        raise NoRouteError(
            f"no route from cell {start_cell.id} to cell {end_cell.id}: "
            f"{len(visited)} cells reachable, frontier blocked at cells "
            f"{frontier[:8]}")

    chain: List[AdjacentCellPair] = []
    cur = end_cell.id
    while cur != start_cell.id:
        pair = prev[cur]
        chain.append(pair)
        cur = pair.src
    chain.reverse()

    try:
        end_leg = _in_cell_leg((end_cell.cx, end_cell.cy), ep,
                               end_cell, perf[end_cell.id], units)
    except cr.TransitError as exc:
        raise NoRouteError(f"end cell {end_cell.id} untraversable: {exc}")

    cells = [start_cell.id] + [p.dst for p in chain]
    points: List[Point] = [sp, (start_cell.cx, start_cell.cy)]
    legs: List[RouteLeg] = [start_leg]
    for pair in chain:
        src_cell = graph.cells[pair.src]
        dst_cell = graph.cells[pair.dst]
        points.append(pair.crossing_point)
        points.append((dst_cell.cx, dst_cell.cy))
        legs.append(RouteLeg((src_cell.cx, src_cell.cy), pair.crossing_point,
                             pair.src, pair.t_src,
                             math.hypot(*cell_metric_vec((src_cell.cx, src_cell.cy),
                                                         pair.crossing_point, src_cell, units)),
                             pair.t_src * perf[pair.src].fuel_rate / units.seconds_per_day))
        legs.append(RouteLeg(pair.crossing_point, (dst_cell.cx, dst_cell.cy),
                             pair.dst, pair.t_dst,
                             math.hypot(*cell_metric_vec(pair.crossing_point,
                                                         (dst_cell.cx, dst_cell.cy), dst_cell, units)),
                             pair.t_dst * perf[pair.dst].fuel_rate / units.seconds_per_day))
    points.append(ep)
    legs.append(end_leg)
    total_cost = dist[end_cell.id] + _leg_weight(end_leg, objective)
    return DijkstraPath(start, end, objective, cells, points, legs, total_cost, chain)
