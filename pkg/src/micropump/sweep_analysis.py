"""Design studies: diffuser angle sweep, frequency response, calibration, angle search."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import partial

import numpy as np
from scipy.optimize import brentq

from .diffuser_element import DiffuserElement, loss_coefficients_from_geometry
from .errors import CalibrationFailed, MicropumpError
from .fluids_geometry import DiffuserGeometry, exit_width, slenderness
from .membrane_actuation import DriveConfig
from .pump_network import PumpConfig, net_flow_rate, run_cycles

DEFAULT_PROFILE_FACTOR = 0.48 / 0.35
PROFILE_FACTOR_RANGE = (1.2, 1.6)

# reported CFD velocities at the 0.35 mm/s inlet condition, keyed by 2theta (deg)
REFERENCE_VELOCITIES = {
    5.0: (0.48, 0.261),
    10.0: (0.45, 0.192),
    15.0: (0.43, 0.153),
    20.0: (0.41, 0.120),
}

INV_PHI = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class AngleSweepRow:
    two_theta: float  # deg
    W2: float  # mm
    L_over_W1: float
    v_inlet: float  # mm/s
    v_max: float  # mm/s
    v_out: float  # mm/s
    loss_rate: float


@dataclass(frozen=True)
class FrequencySweepRow:
    frequency: float
    flow_rate: float  # ul/min
    converged: bool
    error: str = ""


@dataclass(frozen=True)
class CalibrationResult:
    stroke_volume_ref: float  # m^3
    response_cutoff: float  # Hz
    achieved_peak_flow: float  # ul/min
    achieved_peak_frequency: float  # Hz
    residual: float
    achieved_flow_at_target: float = float("nan")

    def apply(self, config: PumpConfig) -> PumpConfig:
        return config.with_membrane(stroke_volume_ref=self.stroke_volume_ref,
                                    response_cutoff=self.response_cutoff)


@dataclass(frozen=True)
class SimulationSettings:
    steps_per_cycle: int = 600
    max_cycles: int = 50
    cycle_rtol: float = 1e-3
    continuity_rtol: float = 1e-9


def angle_sweep(base: DiffuserGeometry, angles, v_inlet: float = 0.35,
                profile_factor: float = DEFAULT_PROFILE_FACTOR) -> list[AngleSweepRow]:
    """Quasi-1D velocities along the diffuser for each opening angle (deg).

    The exit velocity follows continuity through the widening section; the
    peak velocity is the laminar centreline value at the inlet.
    """
    angles = list(angles)
    if not angles:
        raise ValueError("angles must be non-empty")
    lo, hi = PROFILE_FACTOR_RANGE
    if not lo <= profile_factor <= hi:
        raise ValueError(f"profile_factor {profile_factor} outside [{lo}, {hi}]")
    rows = []
    for angle in angles:
        if not 0 < angle <= 60:
            raise ValueError(f"angle {angle} deg outside (0, 60]")
        geom = replace(base, opening_angle=math.radians(angle))
        w2 = exit_width(geom)
        v_out = v_inlet * geom.throat_width / w2
        rows.append(AngleSweepRow(
            two_theta=float(angle),
            W2=w2 * 1e3,
            L_over_W1=slenderness(geom),
            v_inlet=v_inlet,
            v_max=profile_factor * v_inlet,
            v_out=v_out,
            loss_rate=(v_inlet - v_out) / v_inlet if v_inlet else 0.0,
        ))
    return rows


def reference_deviations(rows: list[AngleSweepRow]) -> list[tuple[float, float, float, float]]:
    """(angle, model v_out, reported v_out, relative deviation) where a reference exists."""
    out = []
    for row in rows:
        ref = REFERENCE_VELOCITIES.get(round(row.two_theta, 9))
        if ref is None:
            continue
        v_ref = ref[1]
        out.append((row.two_theta, row.v_out, v_ref, (row.v_out - v_ref) / v_ref))
    return out


def simulate_flow(config: PumpConfig, drive: DriveConfig,
                  settings: SimulationSettings = SimulationSettings(),
                  require_converged: bool = True) -> float:
    record = run_cycles(config, drive, max_cycles=settings.max_cycles,
                        steps_per_cycle=settings.steps_per_cycle,
                        cycle_rtol=settings.cycle_rtol,
                        continuity_rtol=settings.continuity_rtol)
    return net_flow_rate(record, require_converged=require_converged)


def _sweep_point(frequency, config, drive_base, settings):
    drive = replace(drive_base, frequency=frequency)
    try:
        record = run_cycles(config, drive, max_cycles=settings.max_cycles,
                            steps_per_cycle=settings.steps_per_cycle,
                            cycle_rtol=settings.cycle_rtol,
                            continuity_rtol=settings.continuity_rtol)
    except MicropumpError as exc:
        return FrequencySweepRow(frequency, float("nan"), False, f"{type(exc).__name__}: {exc}")
    return FrequencySweepRow(frequency, net_flow_rate(record, require_converged=False),
                             record.converged)


def frequency_sweep(config: PumpConfig, drive_base: DriveConfig, freqs,
                    settings: SimulationSettings = SimulationSettings(),
                    workers: int = 1) -> list[FrequencySweepRow]:
    """Net flow rate at each frequency with everything else fixed.

    Points are independent; with ``workers > 1`` they run in separate
    processes and are still returned in input order.
    """
    freqs = [float(f) for f in freqs]
    if not freqs or any(not f > 0 for f in freqs):
        raise ValueError("freqs must be non-empty and positive")
    point = partial(_sweep_point, config=config, drive_base=drive_base, settings=settings)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(point, freqs))
    return [point(f) for f in freqs]


def golden_section_max(f, a: float, b: float, tol: float = 1e-3, max_iter: int = 200):
    """Maximise a unimodal f on [a, b]; returns (x, f(x), evaluations)."""
    evals = []

    def fx(x):
        y = f(x)
        evals.append((x, y))
        return y

    if b - a <= tol:
        x = 0.5 * (a + b)
        return x, fx(x), evals
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = fx(c), fx(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = fx(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = fx(d)
    x, y = (c, fc) if fc >= fd else (d, fd)
    return x, y, evals


def _peak(config, drive, settings, f_lo, f_hi, tol):
    def flow(freq):
        return simulate_flow(config, replace(drive, frequency=freq), settings)
    x, y, _ = golden_section_max(flow, f_lo, f_hi, tol=tol)
    return x, y


def calibrate(config: PumpConfig, target_flow: float, target_freq: float,
              target_voltage: float, drive_base: DriveConfig | None = None,
              fc_bounds=(5.0, 1000.0), stroke_bounds=(1e-12, 1e-6),
              settings: SimulationSettings = SimulationSettings(),
              rtol: float = 1e-3, max_passes: int = 4) -> CalibrationResult:
    """Fit the membrane cutoff and stroke to one measured operating point.

    Stage 1 picks the cutoff so the flow-vs-frequency slope vanishes at
    ``target_freq``; stage 2 scales the stroke until the flow there equals
    ``target_flow``. The network is not exactly homogeneous in stroke, so
    the two stages are repeated until the cutoff stops moving.
    """
    if target_freq <= 0 or target_voltage <= 0 or target_flow < 0:
        raise ValueError("calibration targets must be positive")
    drive = replace(drive_base or DriveConfig(), frequency=target_freq, voltage=target_voltage)
    if target_flow == 0:
        return CalibrationResult(0.0, config.membrane.response_cutoff, 0.0,
                                 float("nan"), 0.0, 0.0)

    h = 0.02

    def slope(fc, cfg):
        trial = cfg.with_membrane(response_cutoff=fc)
        up = simulate_flow(trial, replace(drive, frequency=target_freq * (1 + h)), settings)
        down = simulate_flow(trial, replace(drive, frequency=target_freq * (1 - h)), settings)
        return up - down

    def flow_at_target(stroke, cfg):
        return simulate_flow(cfg.with_membrane(stroke_volume_ref=stroke), drive, settings)

    cfg = config
    fc = cfg.membrane.response_cutoff
    for _ in range(max_passes):
        s_lo, s_hi = slope(fc_bounds[0], cfg), slope(fc_bounds[1], cfg)
        if not s_lo < 0 < s_hi:
            raise CalibrationFailed(
                "cutoff bounds do not bracket a flow maximum at the target frequency",
                evidence={"fc_bounds": fc_bounds, "slope_at_bounds": (s_lo, s_hi)})
        fc_new = brentq(slope, *fc_bounds, args=(cfg,), xtol=1e-6, rtol=1e-10)
        cfg = cfg.with_membrane(response_cutoff=fc_new)

        q_lo = flow_at_target(stroke_bounds[0], cfg) - target_flow
        q_hi = flow_at_target(stroke_bounds[1], cfg) - target_flow
        if not q_lo < 0 < q_hi:
            raise CalibrationFailed(
                "stroke bounds do not bracket the target flow",
                evidence={"stroke_bounds": stroke_bounds, "flow_minus_target": (q_lo, q_hi)})
        stroke = brentq(lambda s: flow_at_target(s, cfg) - target_flow, *stroke_bounds,
                        xtol=1e-18, rtol=1e-10)
        cfg = cfg.with_membrane(stroke_volume_ref=stroke)
        shift = abs(fc_new - fc) / fc_new
        fc = fc_new
        if shift < 1e-4:
            break

    achieved = simulate_flow(cfg, drive, settings)
    residual = abs(achieved - target_flow) / target_flow
    if residual > rtol:
        raise CalibrationFailed(f"flow residual {residual:.2e} exceeds {rtol:.0e}",
                                evidence={"achieved": achieved, "target": target_flow})
    peak_f, peak_q = _peak(cfg, drive, settings, 0.5 * target_freq, 2.0 * target_freq, 1e-3 * target_freq)
    return CalibrationResult(
        stroke_volume_ref=cfg.membrane.stroke_volume_ref,
        response_cutoff=cfg.membrane.response_cutoff,
        achieved_peak_flow=peak_q,
        achieved_peak_frequency=peak_f,
        residual=residual,
        achieved_flow_at_target=achieved,
    )


def config_for_angle(config: PumpConfig, two_theta_deg: float, xi_base: float) -> PumpConfig:
    """Swap both port elements for ones of the given opening angle."""
    def rebuild(elem: DiffuserElement) -> DiffuserElement:
        geom = replace(elem.geometry, opening_angle=math.radians(two_theta_deg))
        return DiffuserElement(geom, loss_coefficients_from_geometry(geom, xi_base), elem.orientation)
    return config.with_elements(rebuild(config.inlet_element), rebuild(config.outlet_element))


@dataclass(frozen=True)
class AngleOptimum:
    best_angle: float
    best_flow: float
    grid: tuple[tuple[float, float], ...]
    refinements: tuple[tuple[float, float], ...] = ()


def optimize_angle(config: PumpConfig, drive: DriveConfig, angle_range, xi_base: float = 0.1,
                   grid_step: float = 2.5, tol: float = 0.01,
                   settings: SimulationSettings = SimulationSettings()) -> AngleOptimum:
    """Opening angle (deg) that maximises net flow, by grid scan then golden section."""
    lo, hi = map(float, angle_range)
    if not (0 < lo <= hi <= 60):
        raise ValueError(f"angle range {angle_range} must satisfy 0 < lower <= upper <= 60")
    if grid_step > 2.5:
        raise ValueError("grid_step must be <= 2.5 deg")

    def flow(angle):
        return simulate_flow(config_for_angle(config, angle, xi_base), drive, settings)

    if hi - lo <= tol:
        return AngleOptimum(lo, flow(lo), ((lo, flow(lo)),))
    n = max(2, int(math.ceil((hi - lo) / grid_step)) + 1)
    grid_x = np.linspace(lo, hi, n)
    grid = [(float(x), flow(float(x))) for x in grid_x]
    values = [q for _, q in grid]
    i = int(np.argmax(values))
    a = grid_x[max(i - 1, 0)]
    b = grid_x[min(i + 1, n - 1)]
    x, y, evals = golden_section_max(flow, float(a), float(b), tol=tol)
    if values[i] > y:
        x, y = grid[i]
    return AngleOptimum(float(x), float(y), tuple(grid), tuple(evals))
