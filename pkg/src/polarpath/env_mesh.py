"""Environmental mesh construction.

Ingests regularly gridded environmental fields (sea-ice concentration,
bathymetry, surface currents), averages them over a time window, builds a
non-uniform quadtree mesh by recursive cell splitting, aggregates the data
per cell and derives the pruned neighbourhood graph with directional case
codes.

Case codes encode the compass direction from a cell to its neighbour:

    1 = NE   2 = E    3 = SE   4 = S
   -1 = SW  -2 = W   -3 = NW  -4 = N

so that edge (A, B, c) always implies edge (B, A, -c).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

REQUIRED_VARIABLES = ("sic", "depth", "current_u", "current_v")

CASE_NE, CASE_E, CASE_SE, CASE_S = 1, 2, 3, 4
CASE_SW, CASE_W, CASE_NW, CASE_N = -1, -2, -3, -4
ORTHOGONAL_CASES = (CASE_E, CASE_W, CASE_S, CASE_N)
DIAGONAL_CASES = (CASE_NE, CASE_SE, CASE_SW, CASE_NW)

_GEOM_TOL = 1e-9  # degrees


class GridError(ValueError):
    """Malformed or inconsistent grid input."""


class DomainError(ValueError):
    """Requested window or region does not intersect the available data."""


class MeshError(ValueError):
    """Structurally invalid mesh (overlapping or non-covering cells)."""


@dataclass
class EnvGrid:
    """Time-averaged environmental fields on a regular lon/lat grid.

    All field arrays have shape (nlat, nlon); missing values are NaN.
    SIC is in percent, depth in metres (negative below sea level),
    currents in m/s (eastward / northward).
    """

    lons: np.ndarray
    lats: np.ndarray
    sic: np.ndarray
    depth: np.ndarray
    current_u: np.ndarray
    current_v: np.ndarray
    time_window: Tuple[str, str] = ("", "")

    def __post_init__(self):
        shape = (len(self.lats), len(self.lons))
        for name in ("sic", "depth", "current_u", "current_v"):
            arr = getattr(self, name)
            if arr.shape != shape:
                raise GridError(f"field '{name}' has shape {arr.shape}, expected {shape}")
        finite = self.sic[np.isfinite(self.sic)]
        if finite.size and (finite.min() < -1e-9 or finite.max() > 100.0 + 1e-9):
            raise GridError("field 'sic' outside [0, 100] percent")


def _as_float_array(obj, name: str) -> np.ndarray:
    try:
        arr = np.asarray(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise GridError(f"field '{name}' is not numeric: {exc}") from None
    return arr


def _average_variable(name: str, var: dict, missing: float,
                      time_window: Optional[Tuple[str, str]]) -> np.ndarray:
    """Collapse an optional leading time dimension by averaging over the window."""
    if "values" not in var:
        raise GridError(f"variable '{name}' has no values")
    values = _as_float_array(var["values"], name)
    values = np.where(values == missing, np.nan, values)
    times = var.get("times")
    if times is None:
        if values.ndim != 2:
            raise GridError(f"variable '{name}' must be 2-D when no time stamps are given")
        return values
    if values.ndim != 3 or values.shape[0] != len(times):
        raise GridError(f"variable '{name}' must be (time, lat, lon) with {len(times)} steps")
    if time_window is None:
        picked = values
    else:
        start, end = time_window
        mask = [start <= t <= end for t in times]
        if not any(mask):
            raise DomainError(
                f"variable '{name}': no time stamps inside window [{start}, {end}]")
        picked = values[np.asarray(mask)]
    with np.errstate(invalid="ignore"):
        out = np.nanmean(picked, axis=0)
    return out


def load_grid(sources: Sequence[str] | str,
              lon_bounds: Optional[Tuple[float, float]] = None,
              lat_bounds: Optional[Tuple[float, float]] = None,
              time_window: Optional[Tuple[str, str]] = None) -> EnvGrid:
    """Load one or more grid files, crop to a window and average over time.

    Each file is a JSON document with ``lons``, ``lats``, a
    ``missing_value`` sentinel and a ``variables`` mapping. All files must
    share the lon/lat vectors. Longitudes are unwrapped into the frame of
    ``lon_bounds`` so that windows spanning the antimeridian work.
    """
    if isinstance(sources, (str, bytes)):
        sources = [sources]
    lons = lats = None
    variables: Dict[str, np.ndarray] = {}
    for path in sources:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GridError(f"{path}: not valid JSON ({exc})") from None
        missing = float(doc.get("missing_value", np.nan))
        here_lons = _as_float_array(doc.get("lons"), "lons")
        here_lats = _as_float_array(doc.get("lats"), "lats")
        if lons is None:
            lons, lats = here_lons, here_lats
        elif not (np.array_equal(lons, here_lons) and np.array_equal(lats, here_lats)):
            raise GridError(f"{path}: lon/lat vectors differ from previous files")
        for name, var in doc.get("variables", {}).items():
            variables[name] = _average_variable(name, var, missing, time_window)
    if lons is None:
        raise GridError("no grid files given")
    full_shape = (len(lats), len(lons))
    for name in REQUIRED_VARIABLES:
        if name not in variables:
            raise GridError(f"missing required variable '{name}'")
        if variables[name].shape != full_shape:
            raise GridError(
                f"variable '{name}' has shape {variables[name].shape}, expected {full_shape}")

    if lon_bounds is not None:
        lon0, lon1 = lon_bounds
        frame = lon0 + np.mod(lons - lon0, 360.0)
        order = np.argsort(frame, kind="stable")
        frame = frame[order]
        keep = frame <= lon1 + _GEOM_TOL
        if not keep.any():
            raise DomainError("window does not intersect grid longitudes")
        lon_idx = order[keep]
        lons = frame[keep]
    else:
        lon_idx = np.arange(len(lons))
    if lat_bounds is not None:
        keep = (lats >= lat_bounds[0] - _GEOM_TOL) & (lats <= lat_bounds[1] + _GEOM_TOL)
        if not keep.any():
            raise DomainError("window does not intersect grid latitudes")
        lat_idx = np.where(keep)[0]
        lats = lats[keep]
    else:
        lat_idx = np.arange(len(lats))

    fields = {name: variables[name][np.ix_(lat_idx, lon_idx)]
              for name in REQUIRED_VARIABLES}
    return EnvGrid(lons=np.asarray(lons, dtype=float), lats=np.asarray(lats, dtype=float),
                   sic=fields["sic"], depth=fields["depth"],
                   current_u=fields["current_u"], current_v=fields["current_v"],
                   time_window=time_window or ("", ""))


@dataclass(frozen=True)
class SplitConfig:
    """Controls quadtree refinement.

    A cell splits when its SIC values straddle ``sic_bounds_split``, its SIC
    variance exceeds ``sic_variance_threshold`` or it mixes land and ocean,
    provided the depth cap is not reached and each child would retain at
    least ``min_data_points`` grid nodes.
    """

    max_depth: int = 3
    min_data_points: int = 4
    sic_variance_threshold: float = 25.0
    sic_bounds_split: Tuple[float, float] = (70.0, 90.0)
    land_depth_threshold: float = -10.0

    def __post_init__(self):
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.min_data_points < 1:
            raise ValueError("min_data_points must be >= 1")


@dataclass
class CellBox:
    """A quadtree leaf: geometry plus aggregated environment.

    ``half_width`` is in degrees of longitude (the physical east-west
    half-extent is ``half_width * metres_per_degree * cos(cy)``);
    ``half_height`` in degrees of latitude.
    """

    id: int
    cx: float
    cy: float
    half_width: float
    half_height: float
    depth_level: int
    agg_sic: float
    agg_u: float
    agg_v: float
    agg_depth: float
    land_fraction: float
    data_count: int

    @property
    def lon_min(self) -> float:
        return self.cx - self.half_width

    @property
    def lon_max(self) -> float:
        return self.cx + self.half_width

    @property
    def lat_min(self) -> float:
        return self.cy - self.half_height

    @property
    def lat_max(self) -> float:
        return self.cy + self.half_height

    def contains(self, lon: float, lat: float, tol: float = 0.0) -> bool:
        return (self.lon_min - tol <= lon <= self.lon_max + tol
                and self.lat_min - tol <= lat <= self.lat_max + tol)


@dataclass(frozen=True)
class CellAggregate:
    """Raw per-extent aggregation result (NaN fields when count == 0)."""

    agg_sic: float
    agg_u: float
    agg_v: float
    agg_depth: float
    land_fraction: float
    data_count: int
    sic_min: float
    sic_max: float
    sic_var: float


def aggregate(bounds: Tuple[float, float, float, float], grid: EnvGrid,
              land_depth_threshold: float = -10.0) -> CellAggregate:
    """Aggregate grid nodes inside (lon_min, lon_max, lat_min, lat_max).

    Node membership is half-open ([min, max)) so that the four children of a
    split cell partition the parent's nodes exactly. Missing nodes are
    excluded; a cell with no valid SIC node reports ``data_count == 0``.
    """
    lon0, lon1, lat0, lat1 = bounds
    ii = np.where((grid.lats >= lat0) & (grid.lats < lat1))[0]
    jj = np.where((grid.lons >= lon0) & (grid.lons < lon1))[0]
    if ii.size == 0 or jj.size == 0:
        return CellAggregate(*([math.nan] * 5), 0, math.nan, math.nan, math.nan)
    sel = np.ix_(ii, jj)
    sic = grid.sic[sel]
    depth = grid.depth[sel]
    cu = grid.current_u[sel]
    cv = grid.current_v[sel]
    valid = np.isfinite(sic)
    count = int(valid.sum())
    if count == 0:
        return CellAggregate(*([math.nan] * 5), 0, math.nan, math.nan, math.nan)
    svals = sic[valid]
    with np.errstate(invalid="ignore"):
        mean_u = float(np.nanmean(cu)) if np.isfinite(cu).any() else math.nan
        mean_v = float(np.nanmean(cv)) if np.isfinite(cv).any() else math.nan
        mean_depth = float(np.nanmean(depth)) if np.isfinite(depth).any() else math.nan
    dvalid = np.isfinite(depth)
    if dvalid.any():
        land = float((depth[dvalid] > land_depth_threshold).sum()) / float(dvalid.sum())
    else:
        land = math.nan
    return CellAggregate(
        agg_sic=float(svals.mean()),
        agg_u=mean_u, agg_v=mean_v, agg_depth=mean_depth,
        land_fraction=land, data_count=count,
        sic_min=float(svals.min()), sic_max=float(svals.max()),
        sic_var=float(svals.var()),
    )


def _should_split(agg: CellAggregate, cfg: SplitConfig) -> bool:
    lo, hi = cfg.sic_bounds_split
    if agg.data_count == 0:
        return False
    if agg.sic_min < lo and agg.sic_max > hi:
        return True
    if agg.sic_var > cfg.sic_variance_threshold:
        return True
    if math.isfinite(agg.land_fraction) and 0.0 < agg.land_fraction < 1.0:
        return True
    return False


def build_mesh(grid: EnvGrid, cfg: SplitConfig,
               region: Tuple[float, float, float, float],
               initial_cell_size: float | Tuple[float, float]) -> List[CellBox]:
    """Build the quadtree leaf cover of ``region`` (lon_min, lon_max, lat_min, lat_max).

    The region is tiled with initial cells of ``initial_cell_size`` degrees
    (ragged edge cells are clamped to the region), then each cell is split
    recursively into lon/lat quarters while its split condition holds, the
    depth cap allows and every child keeps enough data.
    """
    lon0, lon1, lat0, lat1 = region
    if lon1 <= lon0 or lat1 <= lat0:
        raise DomainError("region is empty")
    if (lon0 < grid.lons.min() - _GEOM_TOL or lon1 > grid.lons.max() + _GEOM_TOL
            or lat0 < grid.lats.min() - _GEOM_TOL or lat1 > grid.lats.max() + _GEOM_TOL):
        raise DomainError("region extends outside the grid extent")
    if isinstance(initial_cell_size, (int, float)):
        dlon = dlat = float(initial_cell_size)
    else:
        dlon, dlat = map(float, initial_cell_size)
    if dlon <= 0 or dlat <= 0:
        raise ValueError("initial cell size must be positive")

    cells: List[CellBox] = []

    def emit(bounds, depth, agg):
        b_lon0, b_lon1, b_lat0, b_lat1 = bounds
        cells.append(CellBox(
            id=len(cells),
            cx=0.5 * (b_lon0 + b_lon1), cy=0.5 * (b_lat0 + b_lat1),
            half_width=0.5 * (b_lon1 - b_lon0), half_height=0.5 * (b_lat1 - b_lat0),
            depth_level=depth,
            agg_sic=agg.agg_sic, agg_u=agg.agg_u, agg_v=agg.agg_v,
            agg_depth=agg.agg_depth, land_fraction=agg.land_fraction,
            data_count=agg.data_count,
        ))

    def refine(bounds, depth):
        agg = aggregate(bounds, grid, cfg.land_depth_threshold)
        if depth >= cfg.max_depth or not _should_split(agg, cfg):
            emit(bounds, depth, agg)
            return
        b_lon0, b_lon1, b_lat0, b_lat1 = bounds
        mid_lon = 0.5 * (b_lon0 + b_lon1)
        mid_lat = 0.5 * (b_lat0 + b_lat1)
        quarters = [
            (b_lon0, mid_lon, b_lat0, mid_lat),  # SW
            (mid_lon, b_lon1, b_lat0, mid_lat),  # SE
            (b_lon0, mid_lon, mid_lat, b_lat1),  # NW
            (mid_lon, b_lon1, mid_lat, b_lat1),  # NE
        ]
        child_aggs = [aggregate(q, grid, cfg.land_depth_threshold) for q in quarters]
        if any(c.data_count < cfg.min_data_points for c in child_aggs):
            emit(bounds, depth, agg)
            return
        for q in quarters:
            refine(q, depth + 1)

    n_lon = max(1, math.ceil((lon1 - lon0) / dlon - _GEOM_TOL))
    n_lat = max(1, math.ceil((lat1 - lat0) / dlat - _GEOM_TOL))
    for i in range(n_lat):
        for j in range(n_lon):
            bounds = (lon0 + j * dlon, min(lon0 + (j + 1) * dlon, lon1),
                      lat0 + i * dlat, min(lat0 + (i + 1) * dlat, lat1))
            refine(bounds, 0)
    logger.info("mesh built: %d cells over %s", len(cells), region)
    return cells


def _contact_case(a: CellBox, b: CellBox, tol: float = _GEOM_TOL) -> Optional[int]:
    """Case code from a to b if the two cells touch, else None.

    Shared edge segments of positive length give orthogonal codes; exact
    corner contact gives diagonal codes. Raises MeshError on area overlap.
    """
    overlap_lon = min(a.lon_max, b.lon_max) - max(a.lon_min, b.lon_min)
    overlap_lat = min(a.lat_max, b.lat_max) - max(a.lat_min, b.lat_min)
    if overlap_lon > tol and overlap_lat > tol:
        raise MeshError(f"cells {a.id} and {b.id} overlap")
    if overlap_lon < -tol or overlap_lat < -tol:
        return None
    east = abs(a.lon_max - b.lon_min) <= tol
    west = abs(a.lon_min - b.lon_max) <= tol
    north = abs(a.lat_max - b.lat_min) <= tol
    south = abs(a.lat_min - b.lat_max) <= tol
    if east and overlap_lat > tol:
        return CASE_E
    if west and overlap_lat > tol:
        return CASE_W
    if north and overlap_lon > tol:
        return CASE_N
    if south and overlap_lon > tol:
        return CASE_S
    # point contact: classify by which corners meet
    if east and north:
        return CASE_NE
    if east and south:
        return CASE_SE
    if west and south:
        return CASE_SW
    if west and north:
        return CASE_NW
    return None


@dataclass
class NeighbourGraph:
    """Adjacency among accessible cells with directional case codes."""

    cells: Dict[int, CellBox]
    edges: Dict[Tuple[int, int], int] = field(default_factory=dict)

    def neighbours(self, cell_id: int, case: Optional[int] = None) -> List[Tuple[int, int]]:
        """List (neighbour id, case code) pairs, optionally filtered by code."""
        out = []
        for (src, dst), code in self.edges.items():
            if src == cell_id and (case is None or code == case):
                out.append((dst, code))
        return sorted(out)

    def cell_at(self, lon: float, lat: float, tol: float = _GEOM_TOL) -> Optional[CellBox]:
        """Smallest-id unblocked cell containing the point, if any."""
        hits = [c for c in self.cells.values() if c.contains(lon, lat, tol)]
        return min(hits, key=lambda c: c.id) if hits else None

    def shared_boundary(self, src: int, dst: int):
        """Geometry of the shared boundary between two adjacent cells.

        Returns ("v", lon, lat_lo, lat_hi) for east/west contact,
        ("h", lat, lon_lo, lon_hi) for north/south contact and
        ("c", lon, lat) for a corner contact.
        """
        a, b = self.cells[src], self.cells[dst]
        code = self.edges[(src, dst)]
        if abs(code) == CASE_E:
            lon = a.lon_max if code == CASE_E else a.lon_min
            return ("v", lon, max(a.lat_min, b.lat_min), min(a.lat_max, b.lat_max))
        if abs(code) == CASE_S:
            lat = a.lat_min if code == CASE_S else a.lat_max
            return ("h", lat, max(a.lon_min, b.lon_min), min(a.lon_max, b.lon_max))
        lon = a.lon_max if code in (CASE_NE, CASE_SE) else a.lon_min
        lat = a.lat_max if code in (CASE_NE, CASE_NW) else a.lat_min
        return ("c", lon, lat)


def build_neighbour_graph(cells: Iterable[CellBox],
                          blocked: Callable[[CellBox], bool]) -> NeighbourGraph:
    """Connect touching cells, pruning every edge incident to a blocked cell."""
    cell_list = sorted(cells, key=lambda c: c.id)
    graph = NeighbourGraph(cells={c.id: c for c in cell_list})
    blocked_ids = {c.id for c in cell_list if blocked(c)}
    for i, a in enumerate(cell_list):
        for b in cell_list[i + 1:]:
            code = _contact_case(a, b)  # raises on overlap, blocked or not
            if code is None or a.id in blocked_ids or b.id in blocked_ids:
                continue
            graph.edges[(a.id, b.id)] = code
            graph.edges[(b.id, a.id)] = -code
    return graph


def save_mesh(path: str, cells: Sequence[CellBox], graph: NeighbourGraph,
              blocked_ids: Iterable[int], meta: Optional[dict] = None) -> None:
    """Write the mesh and its adjacency to a JSON document."""
    blocked = set(blocked_ids)

    def num(v):
        return None if (isinstance(v, float) and not math.isfinite(v)) else v

    doc = {
        "meta": meta or {},
        "cells": [
            {
                "id": c.id, "centre": [c.cx, c.cy],
                "half_width": c.half_width, "half_height": c.half_height,
                "depth_level": c.depth_level,
                "agg_sic": num(c.agg_sic), "agg_current": [num(c.agg_u), num(c.agg_v)],
                "agg_depth": num(c.agg_depth),
                "land_fraction": num(c.land_fraction), "data_count": c.data_count,
                "blocked": c.id in blocked,
            }
            for c in sorted(cells, key=lambda c: c.id)
        ],
        "edges": [
            {"src": src, "dst": dst, "case": code}
            for (src, dst), code in sorted(graph.edges.items())
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_mesh(path: str) -> Tuple[List[CellBox], NeighbourGraph, set]:
    """Read a mesh JSON document back into cells, graph and blocked ids."""
    with open(path) as fh:
        doc = json.load(fh)

    def num(v):
        return math.nan if v is None else float(v)

    cells = []
    blocked = set()
    for c in doc["cells"]:
        cells.append(CellBox(
            id=c["id"], cx=c["centre"][0], cy=c["centre"][1],
            half_width=c["half_width"], half_height=c["half_height"],
            depth_level=c["depth_level"], agg_sic=num(c["agg_sic"]),
            agg_u=num(c["agg_current"][0]), agg_v=num(c["agg_current"][1]),
            agg_depth=num(c.get("agg_depth")),
            land_fraction=num(c["land_fraction"]), data_count=c["data_count"],
        ))
        if c["blocked"]:
            blocked.add(c["id"])
    graph = NeighbourGraph(cells={c.id: c for c in cells})
    for e in doc["edges"]:
        graph.edges[(e["src"], e["dst"])] = e["case"]
    return cells, graph, blocked
