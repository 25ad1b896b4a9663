"""Geodesy primitives shared by the mesh, planner and smoother.

All solvers work internally in metres, seconds and m/s. Degrees appear only
at I/O boundaries. East-west distances use the equirectangular
approximation: one degree of longitude is worth ``cos(lat)`` degrees of
latitude, with a single reference latitude per conversion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

EARTH_RADIUS_M = 6_371_000.0
KNOTS_TO_MPS = 1852.0 / 3600.0  # 1 knot = 1.852 km/h
SECONDS_PER_DAY = 86_400.0


@dataclass(frozen=True)
class Units:
    """Unit system threaded through the solvers (earth radius configurable)."""

    earth_radius: float = EARTH_RADIUS_M
    knots_to_mps: float = KNOTS_TO_MPS
    seconds_per_day: float = SECONDS_PER_DAY

    @property
    def metres_per_degree(self) -> float:
        """Meridional metres per degree of latitude (or equatorial longitude)."""
        return self.earth_radius * math.pi / 180.0


DEFAULT_UNITS = Units()


def normalise_lon(lon: float) -> float:
    """Wrap a longitude into [-180, 180); in-range values pass through exactly."""
    if -180.0 <= lon < 180.0:
        return lon
    wrapped = math.fmod(lon + 180.0, 360.0)
    if wrapped < 0.0:
        wrapped += 360.0
    return wrapped - 180.0


def lon_difference(lon_from: float, lon_to: float) -> float:
    """Signed eastward longitude difference, normalised into (-180, 180]."""
    diff = math.fmod(lon_to - lon_from, 360.0)
    if diff <= -180.0:
        diff += 360.0
    elif diff > 180.0:
        diff -= 360.0
    return diff


@dataclass(frozen=True)
class GeoPoint:
    """A geographic position; lon in [-180, 180), lat in [-90, 90]."""

    lon: float
    lat: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        object.__setattr__(self, "lon", normalise_lon(self.lon))


def lat_scale(lat: float) -> float:
    """Cosine shrink factor for east-west distances at the given latitude."""
    if not -90.0 <= lat <= 90.0:
        raise ValueError(f"latitude {lat} outside [-90, 90]")
    if abs(lat) == 90.0:
        return 0.0
    return math.cos(math.radians(lat))


def equirect_distance(a: GeoPoint, b: GeoPoint, ref_lat: float,
                      units: Units = DEFAULT_UNITS) -> float:
    """Flat-surface distance in metres with longitude scaled at ``ref_lat``.

    Pythagoras on the lat/lon offsets; symmetric in its two points.
    """
    k = units.metres_per_degree
    dx = lon_difference(a.lon, b.lon) * lat_scale(ref_lat) * k
    dy = (b.lat - a.lat) * k
    return math.hypot(dx, dy)
