"""Steady diffuser/nozzle element: pressure recovery, losses and rectified flow.

Sign convention: a positive pressure difference is ``p(inlet end) - p(outlet end)``
and drives a positive flow from the element's inlet end to its outlet end.
Which of the two directions is the low-loss diffuser direction is set by
``DiffuserElement.orientation``.

Pressure recovery model
-----------------------
No design chart is reproduced here, so pressure recovery follows a smooth
empirical curve::

    Cp(2theta, L/W1) = (1 - (W1/W2)^2) * eff(2theta, L/W1)
    eff = EFF_MAX * exp(-ln(2theta / theta_opt)^2 / (2 * SPREAD^2))
    theta_opt = THETA_OPT_REF * sqrt(SLENDERNESS_REF / (L/W1))

``1 - (W1/W2)^2`` is the ideal (loss-free) recovery of the area change and
``eff`` the fraction actually achieved, peaking at ``theta_opt`` and falling
off on both sides (wall friction at small angles, stall at large ones).
Longer diffusers stall earlier, hence the shrinking optimum. The constants
are frozen by golden tests.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .fluids_geometry import DiffuserGeometry, FluidProperties, areas, slenderness

EFF_MAX = 0.8
THETA_OPT_REF = 10.0  # deg
SLENDERNESS_REF = 3.4 / 0.3
SPREAD = 0.6
MAX_MODEL_ANGLE = 60.0  # deg

# extra loss on top of K (diffuser) and the jet-exit dump (nozzle)
DEFAULT_XI_BASE = 0.1
NOZZLE_EXIT_LOSS = 1.0


class Orientation(str, enum.Enum):
    INLET_TO_OUTLET = "inlet_to_outlet"
    OUTLET_TO_INLET = "outlet_to_inlet"

    def flipped(self) -> "Orientation":
        if self is Orientation.INLET_TO_OUTLET:
            return Orientation.OUTLET_TO_INLET
        return Orientation.INLET_TO_OUTLET

    @property
    def sign(self) -> int:
        return 1 if self is Orientation.INLET_TO_OUTLET else -1


@dataclass(frozen=True)
class PressureRecovery:
    cp: float

    def __post_init__(self):
        if not self.cp < 1:
            raise ValueError(f"cp must be < 1, got {self.cp}")


@dataclass(frozen=True)
class LossCoefficients:
    xi_d: float
    xi_n: float

    def __post_init__(self):
        if not (self.xi_d > 0 and self.xi_n > 0):
            raise ValueError(f"loss coefficients must be > 0, got {self.xi_d}, {self.xi_n}")


@dataclass(frozen=True)
class DiffuserElement:
    geometry: DiffuserGeometry
    losses: LossCoefficients
    orientation: Orientation = Orientation.INLET_TO_OUTLET

    @property
    def area(self) -> float:
        """Narrow-mouth reference area, shared by both flow directions."""
        return areas(self.geometry)[0]

    def flipped(self) -> "DiffuserElement":
        return DiffuserElement(self.geometry, self.losses, self.orientation.flipped())


def pressure_recovery_cp(geom: DiffuserGeometry) -> PressureRecovery:
    two_theta = geom.two_theta_deg
    if not 0 < two_theta <= MAX_MODEL_ANGLE:
        raise ValueError(
            f"opening angle {two_theta:.3g} deg outside the recovery model range (0, {MAX_MODEL_ANGLE}]"
        )
    a_in, a_out = areas(geom)
    ideal = 1.0 - (a_in / a_out) ** 2
    theta_opt = THETA_OPT_REF * math.sqrt(SLENDERNESS_REF / slenderness(geom))
    eff = EFF_MAX * math.exp(-math.log(two_theta / theta_opt) ** 2 / (2.0 * SPREAD**2))
    return PressureRecovery(ideal * eff)


def loss_coefficient_K(geom: DiffuserGeometry, cp: PressureRecovery | float) -> float:
    a_in, a_out = areas(geom)
    cp_value = cp.cp if isinstance(cp, PressureRecovery) else cp
    return 1.0 - (a_in / a_out) ** 2 - cp_value


def loss_coefficients_from_geometry(geom: DiffuserGeometry, xi_base: float = DEFAULT_XI_BASE) -> LossCoefficients:
    """Directional loss coefficients referenced to the narrow-mouth velocity.

    Diffuser direction: K from the recovery model plus ``xi_base``.
    Nozzle direction: flow leaves the narrow mouth as a jet and dumps its
    whole dynamic head (unit loss), plus ``xi_base``.
    """
    k = loss_coefficient_K(geom, pressure_recovery_cp(geom))
    return LossCoefficients(xi_d=k + xi_base, xi_n=NOZZLE_EXIT_LOSS + xi_base)


def throat_velocity(delta_p: float, fluid: FluidProperties, xi: float) -> float:
    if delta_p < 0:
        raise ValueError(f"delta_p must be a magnitude (>= 0), got {delta_p}")
    return math.sqrt(2.0 * delta_p / (fluid.density * xi))


def volume_flow(area: float, velocity: float) -> float:
    return area * velocity


def directional_flow(elem: DiffuserElement, delta_p_signed, fluid: FluidProperties):
    """Signed volume flow through the element for a signed pressure difference.

    Accepts scalars or numpy arrays.
    """
    dp = np.asarray(delta_p_signed, dtype=float)
    forward = dp * elem.orientation.sign >= 0
    xi = np.where(forward, elem.losses.xi_d, elem.losses.xi_n)
    q = np.sign(dp) * elem.area * np.sqrt(2.0 * np.abs(dp) / (fluid.density * xi))
    return float(q) if q.ndim == 0 else q


def pressure_drop(elem: DiffuserElement, flow, fluid: FluidProperties):
    """Inverse of :func:`directional_flow`: signed pressure difference for a flow."""
    q = np.asarray(flow, dtype=float)
    forward = q * elem.orientation.sign >= 0
    xi = np.where(forward, elem.losses.xi_d, elem.losses.xi_n)
    u = q / elem.area
    dp = 0.5 * fluid.density * xi * u * np.abs(u)
    return float(dp) if dp.ndim == 0 else dp


def rectification_ratio(losses: LossCoefficients) -> float:
    """Forward/backward flow ratio at equal |dp|: sqrt(xi_n / xi_d)."""
    return math.sqrt(losses.xi_n / losses.xi_d)
