"""Lumped network of the three-chamber valve-less pump and its time stepper.

Topology (forward pumping direction left to right)::

    inlet reservoir -[inlet element]- C1 -[link]- C2 -[link]- C3 -[outlet element]- outlet reservoir

Fluid is incompressible and chambers are rigid apart from the membranes, so
continuity fixes every link flow once the inlet flow ``q0`` is known::

    q_k = q0 + (dV_1 + ... + dV_k)/dt

The remaining unknown comes from the pressure closure: the pressure drops
along the chain must add up to ``p_inlet - p_outlet``. Each element drop is
piecewise quadratic in its flow and each link drop is linear, so the closure
is a strictly increasing piecewise-quadratic function of ``q0`` with kinks at
``q0 = 0`` and ``q_N = 0``. It is solved piece by piece in closed form,
polished with Newton steps, and any entry that still misses the tolerance is
handed to a bracketing root finder.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .diffuser_element import DiffuserElement, Orientation, directional_flow, pressure_drop
from .errors import NonConvergence, NotConverged
from .fluids_geometry import ChamberSpec, FluidProperties, rectangular_duct_resistance
from .membrane_actuation import (
    DriveConfig,
    MembraneModel,
    PhasePlan,
    cascade_transition,
    default_phase_plan,
    target_volumes,
)

M3S_TO_UL_MIN = 6e10
MIN_STEPS_PER_CYCLE = 200


class LinkModel(str, enum.Enum):
    LOSSLESS = "lossless"
    LINEAR_RESISTANCE = "linear_resistance"


@dataclass(frozen=True)
class PumpConfig:
    inlet_element: DiffuserElement
    outlet_element: DiffuserElement
    chambers: tuple[ChamberSpec, ...] = (ChamberSpec(),) * 3
    interior_link_model: LinkModel = LinkModel.LINEAR_RESISTANCE
    fluid: FluidProperties = FluidProperties()
    membrane: MembraneModel = MembraneModel()
    plan: PhasePlan | None = None
    inlet_pressure: float = 0.0
    outlet_pressure: float = 0.0

    def __post_init__(self):
        if not self.chambers:
            raise ValueError("at least one chamber is required")
        object.__setattr__(self, "chambers", tuple(self.chambers))
        object.__setattr__(self, "interior_link_model", LinkModel(self.interior_link_model))
        if self.plan is None:
            object.__setattr__(self, "plan", default_phase_plan(len(self.chambers)))
        elif self.plan.n_chambers != len(self.chambers):
            raise ValueError(
                f"phase plan covers {self.plan.n_chambers} chambers, pump has {len(self.chambers)}"
            )

    @property
    def n_chambers(self) -> int:
        return len(self.chambers)

    @property
    def forward_pumping(self) -> bool:
        return (self.inlet_element.orientation is Orientation.INLET_TO_OUTLET
                and self.outlet_element.orientation is Orientation.INLET_TO_OUTLET)

    def link_resistances(self) -> np.ndarray:
        """Resistance of the N-1 interior links; link k joins chamber k to k+1."""
        if self.interior_link_model is LinkModel.LOSSLESS:
            return np.zeros(self.n_chambers - 1)
        return np.array([
            rectangular_duct_resistance(c.connecting_channel_width, c.connecting_channel_depth,
                                        c.connecting_channel_length, self.fluid)
            for c in self.chambers[:-1]
        ])

    def with_membrane(self, **changes) -> "PumpConfig":
        return replace(self, membrane=replace(self.membrane, **changes))

    def with_elements(self, inlet: DiffuserElement, outlet: DiffuserElement) -> "PumpConfig":
        return replace(self, inlet_element=inlet, outlet_element=outlet)

    def flipped(self) -> "PumpConfig":
        return self.with_elements(self.inlet_element.flipped(), self.outlet_element.flipped())


@dataclass
class PumpState:
    time: float
    chamber_volumes: np.ndarray
    chamber_pressures: np.ndarray
    boundary_pressures: tuple[float, float] = (0.0, 0.0)
    membrane_stages: np.ndarray | None = None
    inlet_flow: float = 0.0
    outlet_flow: float = 0.0
    continuity_residual: float = 0.0

    @classmethod
    def at_rest(cls, config: PumpConfig) -> "PumpState":
        n = config.n_chambers
        p_in = config.inlet_pressure
        return cls(
            time=0.0,
            chamber_volumes=np.zeros(n),
            chamber_pressures=np.full(n, p_in),
            boundary_pressures=(config.inlet_pressure, config.outlet_pressure),
            membrane_stages=np.zeros((config.membrane.order, n)),
        )


@dataclass
class FlowRecord:
    frequency: float
    dt: float
    time: np.ndarray
    inlet_flow: np.ndarray
    outlet_flow: np.ndarray
    chamber_pressures: np.ndarray
    cycle_net_volumes: list[float] = field(default_factory=list)
    cycle_gross_volumes: list[float] = field(default_factory=list)
    converged: bool = False
    max_continuity_residual: float = 0.0

    @property
    def cycles(self) -> int:
        return len(self.cycle_net_volumes)

    def cycle_summaries(self) -> list[tuple[int, float, float]]:
        return [(i + 1, v, v * self.frequency * M3S_TO_UL_MIN)
                for i, v in enumerate(self.cycle_net_volumes)]


# -- network solve -------------------------------------------------------------


def _quad_coeffs(elem: DiffuserElement, fluid: FluidProperties) -> tuple[float, float]:
    """(c_pos, c_neg): dp = c * q|q| for positive / negative flow."""
    base = 0.5 * fluid.density / elem.area**2
    if elem.orientation is Orientation.INLET_TO_OUTLET:
        return base * elem.losses.xi_d, base * elem.losses.xi_n
    return base * elem.losses.xi_n, base * elem.losses.xi_d


@dataclass(frozen=True)
class NetworkSolution:
    link_flows: np.ndarray  # (batch, N+1): inlet element, interior links, outlet element
    chamber_pressures: np.ndarray  # (batch, N)
    continuity_residual: np.ndarray  # (batch,) absolute, m^3/s


def _closure(q0, cum, c_in, c_out, resist, dp_bc):
    q_out = q0 + cum[:, -1]
    c1 = np.where(q0 >= 0, c_in[0], c_in[1])
    c2 = np.where(q_out >= 0, c_out[0], c_out[1])
    lin = resist.sum() * q0 + cum[:, :-1] @ resist
    return c1 * q0 * np.abs(q0) + c2 * q_out * np.abs(q_out) + lin - dp_bc


def _closure_slope(q0, cum, c_in, c_out, resist):
    q_out = q0 + cum[:, -1]
    c1 = np.where(q0 >= 0, c_in[0], c_in[1])
    c2 = np.where(q_out >= 0, c_out[0], c_out[1])
    return 2 * c1 * np.abs(q0) + 2 * c2 * np.abs(q_out) + resist.sum()


def _solve_piecewise(cum, c_in, c_out, resist, dp_bc):
    s = cum[:, -1]
    r_sum = resist.sum()
    d = cum[:, :-1] @ resist
    lo = np.minimum(0.0, -s)
    hi = np.maximum(0.0, -s)
    g_lo = _closure(lo, cum, c_in, c_out, resist, dp_bc)
    g_hi = _closure(hi, cum, c_in, c_out, resist, dp_bc)
    # sign of q0 and q_out on the piece that holds the root
    left = g_lo >= 0
    right = g_hi < 0
    mid_point = 0.5 * (lo + hi)
    probe = np.where(left, lo - 1.0, np.where(right, hi + 1.0, mid_point))
    sig1 = np.where(probe >= 0, 1.0, -1.0)
    sig2 = np.where(probe + s >= 0, 1.0, -1.0)
    # in the middle piece the two signs are fixed by which breakpoint is lower
    sig1 = np.where(~left & ~right, np.where(s > 0, -1.0, 1.0), sig1)
    sig2 = np.where(~left & ~right, -sig1, sig2)
    c1 = np.where(sig1 > 0, c_in[0], c_in[1])
    c2 = np.where(sig2 > 0, c_out[0], c_out[1])
    a = sig1 * c1 + sig2 * c2
    b = 2 * sig2 * c2 * s + r_sum
    c = sig2 * c2 * s**2 + d - dp_bc
    disc = np.sqrt(np.maximum(b * b - 4 * a * c, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        # increasing branch, written to avoid cancellation
        x_pos = np.where(b >= 0, -2 * c / (b + disc), (disc - b) / (2 * a))
    x = np.where(np.isfinite(x_pos), x_pos, mid_point)
    x = np.where(left, np.minimum(x, lo), np.where(right, np.maximum(x, hi), np.clip(x, lo, hi)))
    for _ in range(2):
        g = _closure(x, cum, c_in, c_out, resist, dp_bc)
        slope = _closure_slope(x, cum, c_in, c_out, resist)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_new = x - g / slope
        x = np.where(np.isfinite(x_new) & (slope > 0), x_new, x)
    return x


def _bracketed_root(cum_row, c_in, c_out, resist, dp_bc, scale):
    cum2 = cum_row[None, :]

    def g(q):
        return float(_closure(np.array([q]), cum2, c_in, c_out, resist, dp_bc)[0])

    span = max(scale, abs(cum_row).max(), 1e-30)
    lo, hi = -span, span
    for _ in range(200):
        if g(lo) <= 0:
            break
        lo *= 2
    for _ in range(200):
        if g(hi) >= 0:
            break
        hi *= 2
    return brentq(g, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def solve_network(rates, config: PumpConfig, flow_scale: float | None = None,
                  rtol: float = 1e-9) -> NetworkSolution:
    """Quasi-static link flows and chamber pressures for membrane volume rates.

    ``rates`` has shape (batch, N) or (N,), in m^3/s, positive when a
    membrane pushes fluid out of its chamber.
    """
    r = np.atleast_2d(np.asarray(rates, dtype=float))
    fluid = config.fluid
    c_in = _quad_coeffs(config.inlet_element, fluid)
    c_out = _quad_coeffs(config.outlet_element, fluid)
    resist = config.link_resistances()
    dp_bc = config.inlet_pressure - config.outlet_pressure
    cum = np.cumsum(r, axis=1)
    if flow_scale is None:
        flow_scale = float(np.abs(r).max()) if r.size else 0.0

    q0 = _solve_piecewise(cum, c_in, c_out, resist, dp_bc)
    sol = _assemble(q0, cum, config, resist)
    tol = rtol * flow_scale
    bad = np.flatnonzero(sol.continuity_residual > tol)
    if bad.size:
        for i in bad:
            q0[i] = _bracketed_root(cum[i], c_in, c_out, resist, dp_bc, flow_scale)
        sol = _assemble(q0, cum, config, resist)
        worst = float(sol.continuity_residual.max())
        if worst > tol:
            raise NonConvergence(
                f"continuity residual {worst:.3e} m^3/s exceeds {tol:.3e}", residual=worst)
    return sol


def _assemble(q0, cum, config: PumpConfig, resist) -> NetworkSolution:
    fluid = config.fluid
    n = cum.shape[1]
    flows = np.empty((cum.shape[0], n + 1))
    flows[:, 0] = q0
    flows[:, 1:] = q0[:, None] + cum
    p = np.empty((cum.shape[0], n))
    p[:, 0] = config.inlet_pressure - pressure_drop(config.inlet_element, q0, fluid)
    for k in range(1, n):
        p[:, k] = p[:, k - 1] - resist[k - 1] * flows[:, k]
    # element flows recovered from the pressure field, then checked against continuity
    q_in = np.atleast_1d(directional_flow(config.inlet_element, config.inlet_pressure - p[:, 0], fluid))
    q_out = np.atleast_1d(directional_flow(config.outlet_element, p[:, -1] - config.outlet_pressure, fluid))
    rates_total = cum[:, -1]
    if config.interior_link_model is LinkModel.LOSSLESS or n == 1:
        residual = np.abs(q_in + rates_total - q_out)
    else:
        interior = (p[:, :-1] - p[:, 1:]) / resist
        into = np.concatenate([q_in[:, None], interior], axis=1)
        out_of = np.concatenate([interior, q_out[:, None]], axis=1)
        rates = np.diff(np.concatenate([np.zeros((cum.shape[0], 1)), cum], axis=1), axis=1)
        residual = np.abs(into + rates - out_of).max(axis=1)
    return NetworkSolution(flows, p, residual)


# -- time stepping -------------------------------------------------------------


def _continuity_scale(config: PumpConfig, drive: DriveConfig) -> float:
    return config.membrane.stroke_volume_ref * 2 * math.pi * drive.frequency


def step(state: PumpState, config: PumpConfig, drive: DriveConfig, dt: float,
         rtol: float = 1e-9) -> PumpState:
    """Advance the membranes by dt and re-solve the quasi-static network."""
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if dt > drive.period / MIN_STEPS_PER_CYCLE * (1 + 1e-12):
        raise ValueError(f"dt={dt:.3g} s exceeds period/{MIN_STEPS_PER_CYCLE}")
    stages = state.membrane_stages
    if stages is None:
        stages = np.zeros((config.membrane.order, config.n_chambers))
        stages[:] = state.chamber_volumes
    target = target_volumes([state.time + 0.5 * dt], drive, config.membrane, config.plan)[0]
    new_stages = target + cascade_transition(dt, config.membrane) @ (stages - target)
    volumes = new_stages[-1]
    rates = (volumes - state.chamber_volumes) / dt
    sol = solve_network(rates, config, flow_scale=_continuity_scale(config, drive), rtol=rtol)
    return PumpState(
        time=state.time + dt,
        chamber_volumes=volumes,
        chamber_pressures=sol.chamber_pressures[0],
        boundary_pressures=(config.inlet_pressure, config.outlet_pressure),
        membrane_stages=new_stages,
        inlet_flow=float(sol.link_flows[0, 0]),
        outlet_flow=float(sol.link_flows[0, -1]),
        continuity_residual=float(sol.continuity_residual[0]),
    )


def _cycle_converged(prev: float, cur: float, gross: float, rtol: float) -> bool:
    return abs(cur - prev) <= rtol * max(abs(cur), 1e-6 * gross, 1e-300)


def run_cycles(config: PumpConfig, drive: DriveConfig, max_cycles: int = 50,
               dt: float | None = None, steps_per_cycle: int = 600,
               cycle_rtol: float = 1e-3, continuity_rtol: float = 1e-9,
               min_cycles: int = 2) -> FlowRecord:
    """Drive the pump from rest until the per-cycle net outlet volume settles.

    Steps are taken one cycle at a time: membrane volumes advance
    sequentially and the network solves for the whole cycle are batched.
    """
    if max_cycles < 2:
        raise ValueError("max_cycles must be >= 2")
    period = drive.period
    if dt is not None:
        steps_per_cycle = int(round(period / dt))
        if abs(steps_per_cycle * dt - period) > 1e-9 * period:
            raise ValueError("dt must divide the drive period into whole steps")
    if steps_per_cycle < MIN_STEPS_PER_CYCLE:
        raise ValueError(f"need at least {MIN_STEPS_PER_CYCLE} steps per cycle")
    dt = period / steps_per_cycle
    n = config.n_chambers
    membrane = config.membrane
    transition = cascade_transition(dt, membrane)
    scale = _continuity_scale(config, drive)

    # commanded volumes are periodic; sample once at step midpoints
    mid_times = (np.arange(steps_per_cycle) + 0.5) * dt
    targets = target_volumes(mid_times, drive, membrane, config.plan)

    stages = np.zeros((membrane.order, n))
    times, q_in, q_out, pressures = [], [], [], []
    nets, grosses = [], []
    worst = 0.0
    converged = False
    for cycle in range(max_cycles):
        volumes = np.empty((steps_per_cycle + 1, n))
        volumes[0] = stages[-1]
        for k in range(steps_per_cycle):
            stages = targets[k] + transition @ (stages - targets[k])
            volumes[k + 1] = stages[-1]
        rates = np.diff(volumes, axis=0) / dt
        sol = solve_network(rates, config, flow_scale=scale, rtol=continuity_rtol)
        worst = max(worst, float(sol.continuity_residual.max()))
        outflow = sol.link_flows[:, -1]
        times.append(cycle * period + (np.arange(1, steps_per_cycle + 1)) * dt)
        q_in.append(sol.link_flows[:, 0])
        q_out.append(outflow)
        pressures.append(sol.chamber_pressures)
        nets.append(float(outflow.sum() * dt))
        grosses.append(float(np.abs(outflow).sum() * dt))
        if cycle + 1 >= min_cycles and _cycle_converged(nets[-2], nets[-1], grosses[-1], cycle_rtol):
            converged = True
            break

    return FlowRecord(
        frequency=drive.frequency,
        dt=dt,
        time=np.concatenate(times),
        inlet_flow=np.concatenate(q_in),
        outlet_flow=np.concatenate(q_out),
        chamber_pressures=np.concatenate(pressures),
        cycle_net_volumes=nets,
        cycle_gross_volumes=grosses,
        converged=converged,
        max_continuity_residual=worst,
    )


def net_flow_rate(record: FlowRecord, require_converged: bool = True) -> float:
    """Net outlet flow of the last cycle in ul/min."""
    if not record.cycle_net_volumes or (require_converged and not record.converged):
        raise NotConverged(f"no converged cycle after {record.cycles} cycles")
    return record.cycle_net_volumes[-1] * record.frequency * M3S_TO_UL_MIN


def mean_channel_velocity(flow: float, channel: ChamberSpec) -> float:
    return flow / channel.channel_area
