"""Command-line interface.

Subcommands:

* ``mesh-build``    build the quadtree mesh from grid files and write JSON
* ``route``         plan (and optionally smooth) a route between waypoints
* ``validate``      check routes against raw ice data (radius of influence)
* ``compare``       Dijkstra vs smoothed statistics over waypoint pairs
* ``crossing-dump`` tabulate F(y), dF(y) and the objective for one crossing

Exit codes: 0 success, 1 usage/config, 2 I/O, 3 no route, 4 non-convergence.
Set the ``POLARPATH_LOG`` environment variable to change the log level.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import crossing as cr
from .env_mesh import (DomainError, EnvGrid, GridError, NeighbourGraph,
                       SplitConfig, build_mesh, build_neighbour_graph,
                       load_grid, load_mesh, save_mesh)
from .geo import DEFAULT_UNITS, GeoPoint, Units, lat_scale, normalise_lon
from .planner import (DijkstraPath, NoRouteError, Objective, PlacementError,
                      build_edges, plan)
from .smoother import SmoothedRoute, Smoother, SmoothingConfig
from .vessel_perf import VesselConfig, augment_mesh, cell_accessible

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_NO_ROUTE = 3
EXIT_NO_CONVERGENCE = 4

_OBJECTIVE_ALIASES = {"time": "travel_time", "travel_time": "travel_time",
                      "fuel": "fuel", "distance": "distance"}


class ConfigError(ValueError):
    """Unusable run configuration."""


@dataclass
class RunConfig:
    """One planning run: data sources, mesh, vessel and waypoints."""

    grid_files: List[str]
    region: Tuple[float, float, float, float]
    initial_cell_size: float
    time_window: Optional[Tuple[str, str]] = None
    validate_window: Optional[Tuple[str, str]] = None
    split: SplitConfig = field(default_factory=SplitConfig)
    vessel: VesselConfig = field(default_factory=VesselConfig)
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    objective: Objective = field(default_factory=Objective)
    waypoints: Dict[str, GeoPoint] = field(default_factory=dict)
    pairs: List[Tuple[str, str]] = field(default_factory=list)
    base_dir: str = "."

    def grid_paths(self) -> List[str]:
        return [p if os.path.isabs(p) else os.path.join(self.base_dir, p)
                for p in self.grid_files]

    @classmethod
    def from_json(cls, path: str) -> "RunConfig":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        try:
            region = doc["region"]
            if isinstance(region, dict):
                region = (region["lon_min"], region["lon_max"],
                          region["lat_min"], region["lat_max"])
            else:
                region = tuple(region)
            waypoints = {}
            for wp in doc.get("waypoints", []):
                if wp["name"] in waypoints:
                    raise ConfigError(f"duplicate waypoint name '{wp['name']}'")
                waypoints[wp["name"]] = GeoPoint(wp["lon"], wp["lat"])
            objective = Objective(_OBJECTIVE_ALIASES.get(
                doc.get("objective", "travel_time"), doc.get("objective")))
            cfg = cls(
                grid_files=list(doc["grid_files"]),
                region=region,
                initial_cell_size=doc["initial_cell_size"],
                time_window=tuple(doc["time_window"]) if doc.get("time_window") else None,
                validate_window=(tuple(doc["validate_window"])
                                 if doc.get("validate_window") else None),
                split=SplitConfig(**{**doc.get("split", {}),
                                     **({"sic_bounds_split": tuple(doc["split"]["sic_bounds_split"])}
                                        if doc.get("split", {}).get("sic_bounds_split") else {})}),
                vessel=VesselConfig.from_dict(doc.get("vessel", {})),
                smoothing=SmoothingConfig(**doc.get("smoothing", {})),
                objective=objective,
                waypoints=waypoints,
                pairs=[tuple(p) for p in doc.get("pairs", [])],
                base_dir=os.path.dirname(os.path.abspath(path)),
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for a, b in cfg.pairs:
            if a not in cfg.waypoints or b not in cfg.waypoints:
                raise ConfigError(f"pair ({a}, {b}) uses an unknown waypoint name")
        return cfg

    def waypoint(self, name: str) -> GeoPoint:
        if name not in self.waypoints:
            raise ConfigError(f"unknown waypoint '{name}' "
                              f"(have {sorted(self.waypoints)})")
        return self.waypoints[name]


@dataclass
class MeshContext:
    """A built mesh with its graph, performance map and crossing edges."""

    cells: list
    graph: NeighbourGraph
    perf: dict
    edges: dict
    blocked: set


def build_context(cfg: RunConfig, units: Units = DEFAULT_UNITS) -> MeshContext:
    grid = load_grid(cfg.grid_paths(),
                     lon_bounds=(cfg.region[0], cfg.region[1]),
                     lat_bounds=(cfg.region[2], cfg.region[3]),
                     time_window=cfg.time_window)
    cells = build_mesh(grid, cfg.split, cfg.region, cfg.initial_cell_size)
    perf = augment_mesh(cells, cfg.vessel)
    graph = build_neighbour_graph(cells, lambda c: not perf[c.id].accessible)
    edges = build_edges(graph, perf, units)
    blocked = {c.id for c in cells if not perf[c.id].accessible}
    return MeshContext(cells, graph, perf, edges, blocked)


# ---------------------------------------------------------------------------
# GeoJSON / CSV output
# ---------------------------------------------------------------------------

def _route_feature(kind: str, points, legs, objective: Objective,
                   extra: Optional[dict] = None) -> dict:
    total_time = sum(l.time for l in legs)
    total_fuel = sum(l.fuel for l in legs)
    total_dist = sum(l.distance for l in legs)
    props = {
        "kind": kind,
        "legs": [{"time_s": l.time, "fuel_t": l.fuel, "distance_m": l.distance,
                  "cell": l.cell} for l in legs],
        "summary": {
            "objective": objective.kind,
            "total_time_s": total_time,
            "total_time_days": total_time / DEFAULT_UNITS.seconds_per_day,
            "total_fuel_t": total_fuel,
            "total_distance_m": total_dist,
        },
    }
    if extra:
        props["summary"].update(extra)
    return {
        "type": "Feature",
        "geometry": {
            "type": "LineString",
            "coordinates": [[normalise_lon(p[0]), p[1]] for p in points],
        },
        "properties": props,
    }


def write_geojson(path: str, features: List[dict], mesh_id: str = "") -> None:
    doc = {"type": "FeatureCollection", "features": features,
           "mesh_id": mesh_id}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_mesh_build(args) -> int:
    cfg = RunConfig.from_json(args.config)
    ctx = build_context(cfg)
    meta = {"region": list(cfg.region), "time_window": list(cfg.time_window or ()),
            "initial_cell_size": cfg.initial_cell_size}
    save_mesh(args.out, ctx.cells, ctx.graph, ctx.blocked, meta)
    max_depth = max((c.depth_level for c in ctx.cells), default=0)
    frac = len(ctx.blocked) / len(ctx.cells) if ctx.cells else 0.0
    print(f"cells={len(ctx.cells)} blocked_fraction={frac:.3f} max_depth={max_depth}")
    print(f"mesh written to {args.out}")
    return EXIT_OK


def _plan_pair(cfg: RunConfig, ctx: MeshContext, name_from: str, name_to: str,
               objective: Objective, want_smooth: bool):
    start = cfg.waypoint(name_from)
    end = cfg.waypoint(name_to)
    path = plan(ctx.graph, ctx.edges, ctx.perf, start, end, objective)
    smoothed = None
    if want_smooth:
        smoothed = Smoother(ctx.graph, ctx.perf, cfg.smoothing).smooth(path)
    return path, smoothed


def cmd_route(args) -> int:
    cfg = RunConfig.from_json(args.config)
    objective = Objective(_OBJECTIVE_ALIASES.get(args.objective, args.objective)) \
        if args.objective else cfg.objective
    ctx = build_context(cfg)
    path, smoothed = _plan_pair(cfg, ctx, args.src, args.dst, objective, args.smooth)

    features = [_route_feature("dijkstra", path.points, path.legs, objective)]
    if smoothed is not None:
        improvement = 0.0
        if path.total_time > 0.0:
            improvement = (path.total_time - smoothed.total_time) / path.total_time * 100.0
        features.append(_route_feature(
            "smoothed", smoothed.points, smoothed.legs, objective,
            extra={"iterations": smoothed.iterations,
                   "converged": smoothed.converged,
                   "improvement_pct": improvement}))
    out = args.out or f"route_{args.src}_{args.dst}.geojson"
    write_geojson(out, features, mesh_id=f"{cfg.region}")

    day = DEFAULT_UNITS.seconds_per_day
    print(f"dijkstra: time={path.total_time / day:.6f} days "
          f"fuel={path.total_fuel:.3f} t distance={path.total_distance / 1000.0:.3f} km")
    if smoothed is not None:
        print(f"smoothed: time={smoothed.total_time / day:.6f} days "
              f"fuel={smoothed.total_fuel:.3f} t "
              f"distance={smoothed.total_distance / 1000.0:.3f} km "
              f"iterations={smoothed.iterations}")
        print(f"improvement={improvement:.3f}%")
        if args.trace:
            with open(args.trace, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["iteration", "total_time_s", "node_count"])
                for row in smoothed.trace:
                    writer.writerow([row[0], f"{row[1]:.6f}", row[2]])
    print(f"route written to {out}")
    if smoothed is not None and not smoothed.converged:
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def resample_route(points: Sequence[Tuple[float, float]], spacing: float,
                   units: Units = DEFAULT_UNITS) -> List[Tuple[float, float]]:
    """Points every ``spacing`` metres along the polyline, from its start."""
    k = units.metres_per_degree

    def seg_len(p, q):
        mean_lat = 0.5 * (p[1] + q[1])
        return math.hypot((q[0] - p[0]) * k * lat_scale(mean_lat), (q[1] - p[1]) * k)

    out = [tuple(points[0])]
    target = spacing
    walked = 0.0
    for p, q in zip(points[:-1], points[1:]):
        length = seg_len(p, q)
        while length > 0.0 and target <= walked + length:
            f = (target - walked) / length
            out.append((p[0] + f * (q[0] - p[0]), p[1] + f * (q[1] - p[1])))
            target += spacing
        walked += length
    return out


def mean_sic_within(grid: EnvGrid, point: Tuple[float, float], radius: float,
                    units: Units = DEFAULT_UNITS) -> float:
    """Mean raw SIC over grid nodes within ``radius`` metres of the point."""
    k = units.metres_per_degree
    lon_g, lat_g = np.meshgrid(grid.lons, grid.lats)
    dx = (lon_g - point[0]) * k * lat_scale(point[1])
    dy = (lat_g - point[1]) * k
    mask = (dx * dx + dy * dy <= radius * radius) & np.isfinite(grid.sic)
    if not mask.any():
        return math.nan
    return float(grid.sic[mask].mean())


def validate_route(points, grid: EnvGrid, threshold: float,
                   spacing: float = 10_000.0, radius: float = 15_000.0,
                   units: Units = DEFAULT_UNITS) -> Tuple[int, int]:
    """(samples, violations) for one route against the raw grid."""
    samples = resample_route(points, spacing, units)
    violations = 0
    for p in samples:
        mean = mean_sic_within(grid, p, radius, units)
        if math.isfinite(mean) and mean > threshold:
            violations += 1
    return len(samples), violations


def cmd_validate(args) -> int:
    cfg = RunConfig.from_json(args.config)
    raw = load_grid(cfg.grid_paths(),
                    lon_bounds=(cfg.region[0], cfg.region[1]),
                    lat_bounds=(cfg.region[2], cfg.region[3]),
                    time_window=cfg.validate_window or cfg.time_window)
    files = sorted(f for f in os.listdir(args.routes) if f.endswith(".geojson"))
    if not files:
        raise FileNotFoundError(f"no .geojson routes in {args.routes}")
    report = []
    for name in files:
        with open(os.path.join(args.routes, name)) as fh:
            doc = json.load(fh)
        for feature in doc.get("features", []):
            coords = feature["geometry"]["coordinates"]
            n, v = validate_route([tuple(c) for c in coords], raw,
                                  cfg.vessel.max_ice_conc)
            pct = 100.0 * v / n if n else 0.0
            report.append({"file": name,
                           "kind": feature["properties"].get("kind", ""),
                           "samples": n, "violations": v,
                           "violation_pct": pct})
            print(f"{name} [{feature['properties'].get('kind', '')}]: "
                  f"{v}/{n} samples violate ({pct:.2f}%)")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"routes": report}, fh, indent=1, sort_keys=True)
            fh.write("\n")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = RunConfig.from_json(args.config)
    pairs = cfg.pairs
    if args.pairs:
        with open(args.pairs) as fh:
            pairs = [tuple(p) for p in json.load(fh)]
    if not pairs:
        raise ConfigError("no waypoint pairs given")
    ctx = build_context(cfg)
    day = DEFAULT_UNITS.seconds_per_day
    rows = []
    improvements = []
    for name_from, name_to in pairs:
        try:
            path, smoothed = _plan_pair(cfg, ctx, name_from, name_to,
                                        cfg.objective, True)
        except (NoRouteError, PlacementError) as exc:
            logger.warning("pair (%s, %s) unroutable: %s", name_from, name_to, exc)
            rows.append([name_from, name_to, "unroutable", "", "", ""])
            continue
        d_days = path.total_time / day
        s_days = smoothed.total_time / day
        improvement = (d_days - s_days) / d_days * 100.0 if d_days > 0 else 0.0
        improvements.append(improvement)
        status = "ok" if smoothed.converged else "no-convergence"
        rows.append([name_from, name_to, status, f"{d_days:.6f}",
                     f"{s_days:.6f}", f"{improvement:.6f}"])
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["from", "to", "status", "dijkstra_days",
                         "smoothed_days", "improvement_pct"])
        writer.writerows(rows)
        if improvements:
            arr = np.asarray(improvements)
            writer.writerow(["mean", "", "", "", "", f"{arr.mean():.6f}"])
            writer.writerow(["std", "", "", "", "", f"{arr.std():.6f}"])
    print(f"compared {len(pairs)} pairs "
          f"({len(improvements)} routable) -> {args.out}")
    return EXIT_OK


def cmd_crossing_dump(args) -> int:
    with open(args.problem) as fh:
        doc = json.load(fh)
    problem = cr.CrossingProblem(
        left=cr.CellTraversal(**doc["left"]),
        right=cr.CellTraversal(**doc["right"]),
        Y=doc["Y"], orientation=doc.get("orientation", cr.FLAT_HORIZONTAL),
        lat_entry=doc.get("lat_entry"), lat_exit=doc.get("lat_exit"),
        lat_boundary=doc.get("lat_boundary"),
        earth_radius=doc.get("earth_radius", DEFAULT_UNITS.earth_radius))
    span = problem.span()
    lo = min(0.0, problem.Y) - 2.0 * span
    hi = max(0.0, problem.Y) + 2.0 * span
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y", "F", "dF", "objective_s"])
        for i in range(args.samples):
            y = lo + (hi - lo) * i / (args.samples - 1)
            f, df, t1, t2 = cr.evaluate(problem, y)
            writer.writerow([f"{y:.6f}", f"{f:.9g}", f"{df:.9g}", f"{t1 + t2:.9f}"])
    print(f"crossing table written to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polarpath",
        description="Polar-ocean vessel route planning over quadtree meshes")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh-build", help="build and save the environmental mesh")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mesh_build)

    p = sub.add_parser("route", help="plan a route between two named waypoints")
    p.add_argument("--config", required=True)
    p.add_argument("--from", dest="src", required=True)
    p.add_argument("--to", dest="dst", required=True)
    p.add_argument("--objective", choices=sorted(_OBJECTIVE_ALIASES))
    p.add_argument("--smooth", action="store_true")
    p.add_argument("--out")
    p.add_argument("--trace")
    p.set_defaults(func=cmd_route)

    p = sub.add_parser("validate", help="check routes against raw ice data")
    p.add_argument("--config", required=True)
    p.add_argument("--routes", required=True, help="directory of .geojson routes")
    p.add_argument("--out")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("compare", help="Dijkstra vs smoothed statistics")
    p.add_argument("--config", required=True)
    p.add_argument("--pairs", help="JSON file with [[from, to], ...]")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("crossing-dump", help="tabulate one crossing problem")
    p.add_argument("--problem", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--samples", type=int, default=201)
    p.set_defaults(func=cmd_crossing_dump)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=os.environ.get("POLARPATH_LOG", "WARNING").upper())
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GridError, DomainError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NoRouteError, PlacementError) as exc:
        print(f"routing error: {exc}", file=sys.stderr)
        return EXIT_NO_ROUTE


if __name__ == "__main__":
    sys.exit(main())
