"""Working fluid properties and planar diffuser/channel geometry.

All quantities are SI. Cross-sections are rectangular (width x depth) with
a uniform etch depth, so area ratios reduce to width ratios.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

DEFAULT_DEPTH = 350e-6  # m, measured channel thickness


@dataclass(frozen=True)
class FluidProperties:
    density: float = 997.0  # kg/m^3, water at 25 C
    dynamic_viscosity: float = 8.9e-4  # Pa s
    gravity: float = 9.81  # m/s^2

    def __post_init__(self):
        if not self.density > 0:
            raise ValueError(f"density must be > 0, got {self.density}")
        if not self.dynamic_viscosity > 0:
            raise ValueError(f"dynamic_viscosity must be > 0, got {self.dynamic_viscosity}")
        if not self.gravity >= 0:
            raise ValueError(f"gravity must be >= 0, got {self.gravity}")


@dataclass(frozen=True)
class DiffuserGeometry:
    """Planar diffuser with straight diverging walls.

    ``opening_angle`` is the full included angle 2*theta in radians.
    """

    throat_width: float = 300e-6
    length: float = 3.4e-3
    opening_angle: float = math.radians(10.0)
    depth: float = DEFAULT_DEPTH

    def __post_init__(self):
        for name in ("throat_width", "length", "depth"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be > 0, got {value}")
        if not 0 < self.opening_angle < math.pi / 2:
            raise ValueError(
                f"opening_angle must lie in (0, pi/2) rad, got {self.opening_angle}"
            )

    @classmethod
    def from_mm_deg(cls, w1_mm, length_mm, two_theta_deg, depth_mm=DEFAULT_DEPTH * 1e3):
        return cls(w1_mm * 1e-3, length_mm * 1e-3, math.radians(two_theta_deg), depth_mm * 1e-3)

    @property
    def two_theta_deg(self) -> float:
        return math.degrees(self.opening_angle)


@dataclass(frozen=True)
class ChamberSpec:
    """Pump chamber and the channel that links it to the next chamber downstream."""

    diameter: float = 10e-3
    connecting_channel_width: float = 3.0e-3
    connecting_channel_depth: float = DEFAULT_DEPTH
    connecting_channel_length: float = 1.0e-3

    def __post_init__(self):
        for name in ("diameter", "connecting_channel_width",
                     "connecting_channel_depth", "connecting_channel_length"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be > 0, got {value}")

    @property
    def channel_area(self) -> float:
        return self.connecting_channel_width * self.connecting_channel_depth


@dataclass(frozen=True)
class ChannelStation:
    """Pressure, mean velocity and elevation at one cross-section."""

    pressure: float
    velocity: float
    height: float = 0.0


def exit_width(geom: DiffuserGeometry) -> float:
    """Wide-end width W2 = W1 + 2 L tan(theta)."""
    return geom.throat_width + 2.0 * geom.length * math.tan(0.5 * geom.opening_angle)


def areas(geom: DiffuserGeometry) -> tuple[float, float]:
    """Return (A_in, A_out): narrow-mouth and wide-end cross-section areas.

    Used as a nozzle the same element swaps roles; the narrow mouth area is
    the reference area for both flow directions.
    """
    return geom.throat_width * geom.depth, exit_width(geom) * geom.depth


def slenderness(geom: DiffuserGeometry) -> float:
    return geom.length / geom.throat_width


def bernoulli_residual(s1: ChannelStation, s2: ChannelStation, fluid: FluidProperties,
                       include_gravity: bool = False) -> float:
    """Loss-free Bernoulli imbalance between two stations, in Pa.

    Zero when the stations carry the same total head. Gravity terms only
    enter when ``include_gravity`` is set.
    """
    rho = fluid.density
    h1 = s1.pressure / rho + 0.5 * s1.velocity**2
    h2 = s2.pressure / rho + 0.5 * s2.velocity**2
    if include_gravity:
        h1 += fluid.gravity * s1.height
        h2 += fluid.gravity * s2.height
    return rho * (h1 - h2)


def rectangular_duct_resistance(width: float, depth: float, length: float,
                                fluid: FluidProperties) -> float:
    """Laminar hydraulic resistance (Pa s/m^3) of a rectangular duct.

    R = 12 mu L / (w h^3 (1 - 0.63 h/w)) with h the smaller side.
    """
    h, w = sorted((width, depth))
    return 12.0 * fluid.dynamic_viscosity * length / (w * h**3 * (1.0 - 0.63 * h / w))
