"""Vessel route planning for polar oceans.

Builds a non-uniform quadtree mesh from gridded environmental data, augments
it with vessel performance (ice resistance, safe speed, fuel), plans
mesh-optimal routes with Newton-optimised cell crossings under currents, and
smooths them off the mesh with latitude-corrected solvers.
"""

from .geo import EARTH_RADIUS_M, KNOTS_TO_MPS, GeoPoint, Units, equirect_distance, lat_scale
from .env_mesh import (CellBox, EnvGrid, NeighbourGraph, SplitConfig,
                       aggregate, build_mesh, build_neighbour_graph, load_grid,
                       load_mesh, save_mesh)
from .vessel_perf import (CellPerformance, VesselConfig, augment_mesh,
                          fuel_rate, ice_froude, ice_resistance,
                          speed_from_resistance)
from .crossing import (CellTraversal, CrossingProblem, CrossingSolution,
                       InfeasibleTransit, solve_flat,
                       solve_smoothed_horizontal, solve_smoothed_vertical,
                       travel_time)
from .planner import (AdjacentCellPair, DijkstraPath, NoRouteError, Objective,
                      PlacementError, build_edges, plan)
from .smoother import SmoothedRoute, Smoother, SmoothingConfig, smooth

__version__ = "0.1.0"

__all__ = [
    "AdjacentCellPair", "CellBox", "CellPerformance", "CellTraversal",
    "CrossingProblem", "CrossingSolution", "DijkstraPath", "EARTH_RADIUS_M",
    "EnvGrid", "GeoPoint", "InfeasibleTransit", "KNOTS_TO_MPS",
    "NeighbourGraph", "NoRouteError", "Objective", "PlacementError",
    "SmoothedRoute", "Smoother", "SmoothingConfig", "SplitConfig", "Units",
    "VesselConfig", "aggregate", "augment_mesh", "build_edges", "build_mesh",
    "build_neighbour_graph", "equirect_distance", "fuel_rate", "ice_froude",
    "ice_resistance", "lat_scale", "load_grid", "load_mesh", "plan",
    "save_mesh", "smooth", "solve_flat", "solve_smoothed_horizontal",
    "solve_smoothed_vertical", "speed_from_resistance", "travel_time",
]
