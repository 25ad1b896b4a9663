"""Per-cell vessel performance: ice resistance, safe speed and fuel rate.

The resistance of level ice on the hull is modelled as

    R = 0.5 * C * rho_ice * B * h * V^2 * C_i^n      [SI, newtons]

with the ice force coefficient ``C = k_c * Fr^b`` and the ice Froude number
``Fr = V / sqrt(g * h * C_i)``. Hull constants (k_c, b, n) come from a
two-entry table for slender and blunt hull forms. Solving the same equation
for V at a fixed resistance limit gives the safe speed in heavy ice:

    V^(2+b) = 2 R_L / (k_c rho_ice B h C_i^n (g h C_i)^(-b/2))

Fuel use in tons/day is a calibrated polynomial in speed (knots) and
resistance (kilonewtons). Everything here computes in SI internally and
exposes knots / kN / tons-per-day at the interface, because the fuel
polynomial is calibrated in those units.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional

from .env_mesh import CellBox
from .geo import KNOTS_TO_MPS

logger = logging.getLogger(__name__)

GRAVITY = 9.81  # m/s^2


@dataclass(frozen=True)
class HullParams:
    """Ice force coefficient constants for one hull form."""

    k_c: float
    b: float
    n: float


HULL_TABLE = {
    "slender": HullParams(k_c=4.4, b=-0.8267, n=2.0),
    "blunt": HullParams(k_c=16.1, b=-1.7937, n=3.0),
}


@dataclass(frozen=True)
class BreakingSpec:
    """Operating point defining the hull's resistance limit.

    Default: able to break 1 m of continuous (100%) level ice at 3 knots.
    """

    speed: float = 3.0          # knots
    thickness: float = 1.0      # metres
    concentration: float = 1.0  # fraction


@dataclass(frozen=True)
class FuelCoeffs:
    """tons/day = a2*V^2 + a1*V + r2*R^2 + r1*R + base (V knots, R kN)."""

    a2: float = 0.113
    a1: float = -0.132
    r2: float = 0.003
    r1: float = 0.042
    base: float = 6.0


@dataclass(frozen=True)
class VesselConfig:
    max_speed: float = 13.0        # knots
    beam: float = 24.0             # metres
    ice_density: float = 900.0     # kg/m^3
    hull: str = "slender"
    max_ice_conc: float = 80.0     # percent
    ice_thickness: float = 0.8     # metres (regional constant)
    breaking: BreakingSpec = field(default_factory=BreakingSpec)
    fuel: FuelCoeffs = field(default_factory=FuelCoeffs)
    min_depth: float = 10.0        # metres of water required

    def __post_init__(self):
        if self.hull not in HULL_TABLE:
            raise ValueError(f"unknown hull form '{self.hull}'")
        if not 0.0 < self.max_ice_conc <= 100.0:
            raise ValueError("max_ice_conc must be in (0, 100]")
        if self.max_speed <= 0.0:
            raise ValueError("max_speed must be positive")

    @property
    def hull_params(self) -> HullParams:
        return HULL_TABLE[self.hull]

    @classmethod
    def from_dict(cls, doc: Mapping) -> "VesselConfig":
        kwargs = dict(doc)
        if "breaking" in kwargs:
            kwargs["breaking"] = BreakingSpec(**kwargs["breaking"])
        if "fuel" in kwargs:
            kwargs["fuel"] = FuelCoeffs(**kwargs["fuel"])
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path: str) -> "VesselConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class CellPerformance:
    """Vessel behaviour pre-compiled into one mesh cell."""

    resistance: float   # kN at the safe speed
    safe_speed: float   # knots
    fuel_rate: float    # tons/day
    accessible: bool

    @property
    def speed_mps(self) -> float:
        return self.safe_speed * KNOTS_TO_MPS


def ice_froude(speed_mps: float, thickness: float, concentration: float) -> float:
    """Ice Froude number V / sqrt(g * h * C_i); all inputs must be positive."""
    if thickness <= 0.0 or concentration <= 0.0:
        raise ValueError("ice Froude number undefined for zero thickness or concentration")
    if speed_mps <= 0.0:
        raise ValueError("speed must be positive")
    return speed_mps / math.sqrt(GRAVITY * thickness * concentration)


def ice_resistance(speed_knots: float, thickness: float, concentration: float,
                   cfg: VesselConfig) -> float:
    """Resistance force in kN at the given speed and ice state.

    Open water (zero concentration or thickness) produces zero resistance.
    """
    if speed_knots < 0.0 or thickness < 0.0 or not 0.0 <= concentration <= 1.0:
        raise ValueError("negative speed/thickness or concentration outside [0, 1]")
    if concentration == 0.0 or thickness == 0.0 or speed_knots == 0.0:
        return 0.0
    hull = cfg.hull_params
    v = speed_knots * KNOTS_TO_MPS
    froude = ice_froude(v, thickness, concentration)
    coeff = hull.k_c * froude ** hull.b
    newtons = (0.5 * coeff * cfg.ice_density * cfg.beam * thickness
               * v * v * concentration ** hull.n)
    return newtons / 1000.0


def speed_from_resistance(limit_kn: float, thickness: float, concentration: float,
                          cfg: VesselConfig) -> float:
    """Speed in knots at which resistance equals ``limit_kn``, capped at max speed.

    Inverts the resistance model:
    V^(2+b) = 2 R_L / (k_c rho B h C_i^n (g h C_i)^(-b/2)).
    """
    if limit_kn <= 0.0 or thickness <= 0.0 or concentration <= 0.0:
        raise ValueError("limit, thickness and concentration must be positive")
    hull = cfg.hull_params
    newtons = limit_kn * 1000.0
    denom = (hull.k_c * cfg.ice_density * cfg.beam * thickness
             * concentration ** hull.n
             * (GRAVITY * thickness * concentration) ** (-hull.b / 2.0))
    v = (2.0 * newtons / denom) ** (1.0 / (2.0 + hull.b))
    return min(v / KNOTS_TO_MPS, cfg.max_speed)


def fuel_rate(speed_knots: float, resistance_kn: float, cfg: VesselConfig) -> float:
    """Fuel consumption in tons/day at the given speed and resistance."""
    if speed_knots < 0.0 or resistance_kn < 0.0:
        raise ValueError("speed and resistance must be nonnegative")
    c = cfg.fuel
    return (c.a2 * speed_knots * speed_knots + c.a1 * speed_knots
            + c.r2 * resistance_kn * resistance_kn + c.r1 * resistance_kn + c.base)


def force_limit(cfg: VesselConfig) -> float:
    """Resistance (kN) at the breaking-spec operating point."""
    return ice_resistance(cfg.breaking.speed, cfg.breaking.thickness,
                          cfg.breaking.concentration, cfg)


def cell_accessible(cell: CellBox, cfg: VesselConfig) -> bool:
    """Whether the vessel may enter the cell at all."""
    if cell.data_count == 0 or not math.isfinite(cell.agg_sic):
        return False
    if cell.agg_sic > cfg.max_ice_conc:
        return False
    if math.isfinite(cell.land_fraction) and cell.land_fraction > 0.0:
        return False
    # agg_depth is negative below sea level; require min_depth of water
    if math.isfinite(cell.agg_depth) and cell.agg_depth > -cfg.min_depth:
        return False
    return True


def cell_performance(cell: CellBox, cfg: VesselConfig, limit_kn: float,
                     thickness: Optional[float] = None) -> CellPerformance:
    """Resistance, safe speed and fuel rate for one cell."""
    if not cell_accessible(cell, cfg):
        return CellPerformance(0.0, 0.0, 0.0, accessible=False)
    h = cfg.ice_thickness if thickness is None else thickness
    conc = cell.agg_sic / 100.0
    resist = ice_resistance(cfg.max_speed, h, conc, cfg)
    if resist > limit_kn:
        speed = speed_from_resistance(limit_kn, h, conc, cfg)
        resist = ice_resistance(speed, h, conc, cfg)
    else:
        speed = cfg.max_speed
    return CellPerformance(resist, speed, fuel_rate(speed, resist, cfg), accessible=True)


def augment_mesh(cells: Iterable[CellBox], cfg: VesselConfig,
                 thickness: Optional[Mapping[int, float]] = None) -> Dict[int, CellPerformance]:
    """Compute performance for every cell; blocked cells are flagged inaccessible.

    ``thickness`` optionally overrides the configured regional ice thickness
    per cell id.
    """
    limit = force_limit(cfg)
    out: Dict[int, CellPerformance] = {}
    for cell in cells:
        h = None if thickness is None else thickness.get(cell.id)
        out[cell.id] = cell_performance(cell, cfg, limit, h)
    n_blocked = sum(1 for p in out.values() if not p.accessible)
    logger.info("mesh augmented: %d cells, %d inaccessible (limit %.2f kN)",
                len(out), n_blocked, limit)
    return out
