"""Run configuration: TOML schema, validation and unit conversion.

The file is written in design units (mm, deg, ul, V, Hz); everything is
converted to SI on load. Sections and keys::

    [fluid]       density_kg_m3, viscosity_pa_s, gravity_m_s2
    [geometry]    throat_width_mm, length_mm, opening_angle_deg, depth_mm
    [elements]    xi_base, xi_d, xi_n, inlet_orientation, outlet_orientation
    [chambers]    count, diameter_mm, link_width_mm, link_depth_mm, link_length_mm,
                  interior_link_model
    [membrane]    stroke_volume_ul, voltage_ref_v, response_cutoff_hz, lag_order
    [drive]       voltage_v, frequency_hz, waveform, phase_offsets_deg
    [plan]        steps, step_fractions
    [boundary]    inlet_pressure_pa, outlet_pressure_pa
    [solver]      dt_divisor, max_cycles, cycle_rtol, continuity_rtol
    [sweep]       angles_deg, v_inlet_mm_s, profile_factor, frequencies_hz,
                  angle_range_deg, angle_grid_step_deg, workers
    [calibration] target_flow_ul_min, target_frequency_hz, target_voltage_v,
                  fc_bounds_hz, stroke_bounds_ul
    [output]      directory

Every key is optional; unknown sections or keys are rejected. ``xi_d`` and
``xi_n`` must be given together and then replace the loss coefficients
derived from the geometry.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .diffuser_element import (
    DEFAULT_XI_BASE,
    DiffuserElement,
    LossCoefficients,
    Orientation,
    loss_coefficients_from_geometry,
)
from .errors import ParseError, ValidationError
from .fluids_geometry import ChamberSpec, DiffuserGeometry, FluidProperties
from .membrane_actuation import DriveConfig, MembraneModel, PhasePlan, plan_from_offsets
from .pump_network import LinkModel, PumpConfig
from .sweep_analysis import DEFAULT_PROFILE_FACTOR, PROFILE_FACTOR_RANGE, SimulationSettings

BUNDLED = ("paper_baseline", "paper_calibrated")

DEFAULTS = {
    "fluid": {"density_kg_m3": 997.0, "viscosity_pa_s": 8.9e-4, "gravity_m_s2": 9.81},
    "geometry": {"throat_width_mm": 0.3, "length_mm": 3.4, "opening_angle_deg": 10.0,
                 "depth_mm": 0.35},
    "elements": {"xi_base": DEFAULT_XI_BASE, "xi_d": None, "xi_n": None,
                 "inlet_orientation": "inlet_to_outlet",
                 "outlet_orientation": "inlet_to_outlet"},
    "chambers": {"count": 3, "diameter_mm": 10.0, "link_width_mm": 3.0,
                 "link_depth_mm": 0.35, "link_length_mm": 1.0,
                 "interior_link_model": "linear_resistance"},
    "membrane": {"stroke_volume_ul": 0.65, "voltage_ref_v": 24.0,
                 "response_cutoff_hz": 70.0, "lag_order": 2},
    "drive": {"voltage_v": 24.0, "frequency_hz": 50.0, "waveform": "square",
              "phase_offsets_deg": None},
    "plan": {"steps": None, "step_fractions": None},
    "boundary": {"inlet_pressure_pa": 0.0, "outlet_pressure_pa": 0.0},
    "solver": {"dt_divisor": 600, "max_cycles": 50, "cycle_rtol": 1e-3,
               "continuity_rtol": 1e-9},
    "sweep": {"angles_deg": [5.0, 10.0, 15.0, 20.0], "v_inlet_mm_s": 0.35,
              "profile_factor": DEFAULT_PROFILE_FACTOR,
              "frequencies_hz": [10.0 * k for k in range(1, 11)],
              "angle_range_deg": [5.0, 40.0], "angle_grid_step_deg": 2.5, "workers": 1},
    "calibration": {"target_flow_ul_min": 365.0, "target_frequency_hz": 50.0,
                    "target_voltage_v": 24.0, "fc_bounds_hz": [10.0, 500.0],
                    "stroke_bounds_ul": [1e-3, 1e3]},
    "output": {"directory": "out"},
}


@dataclass(frozen=True)
class SweepSettings:
    angles_deg: tuple[float, ...]
    v_inlet_mm_s: float
    profile_factor: float
    frequencies_hz: tuple[float, ...]
    angle_range_deg: tuple[float, float]
    angle_grid_step_deg: float
    workers: int


@dataclass(frozen=True)
class CalibrationTargets:
    flow_ul_min: float
    frequency_hz: float
    voltage_v: float
    fc_bounds_hz: tuple[float, float]
    stroke_bounds_m3: tuple[float, float]


@dataclass(frozen=True)
class RunConfig:
    pump: PumpConfig
    drive: DriveConfig
    geometry: DiffuserGeometry
    xi_base: float
    solver: SimulationSettings
    sweep: SweepSettings
    calibration: CalibrationTargets
    output_dir: str
    raw: dict = field(compare=False, repr=False, default_factory=dict)

    def to_dict(self) -> dict:
        """Resolved configuration in file units; loads back to an equal RunConfig."""
        return copy.deepcopy(self.raw)

    def with_drive(self, **changes) -> "RunConfig":
        return replace(self, drive=replace(self.drive, **changes))


def resolve_bundled(name: str) -> Path:
    return Path(str(resources.files("micropump") / "configs" / f"{name}.toml"))


def load_config(path) -> RunConfig:
    """Parse and validate a TOML run configuration."""
    path = Path(path)
    if not path.exists() and str(path) in BUNDLED:
        path = resolve_bundled(str(path))
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"{path}: cannot read ({exc.strerror})") from exc
    if not text.strip():
        raise ParseError(f"{path}: empty configuration file")
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return config_from_dict(data)


def _merge(data: dict) -> dict:
    if not isinstance(data, dict):
        raise ParseError("configuration root must be a table")
    merged = copy.deepcopy(DEFAULTS)
    for section, body in data.items():
        if section not in DEFAULTS:
            raise ValidationError(section, "unknown section")
        if not isinstance(body, dict):
            raise ValidationError(section, "must be a table")
        for key, value in body.items():
            if key not in DEFAULTS[section]:
                raise ValidationError(f"{section}.{key}", "unknown key")
            merged[section][key] = value
    return merged


def _num(cfg, section, key, *, positive=False, nonneg=False, integer=False):
    value = cfg[section][key]
    name = f"{section}.{key}"
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(name, f"expected a number, got {value!r}")
    if integer and (not float(value).is_integer()):
        raise ValidationError(name, f"expected an integer, got {value!r}")
    if not math.isfinite(value):
        raise ValidationError(name, "must be finite")
    if positive and not value > 0:
        raise ValidationError(name, f"must be > 0, got {value}")
    if nonneg and not value >= 0:
        raise ValidationError(name, f"must be >= 0, got {value}")
    return int(value) if integer else float(value)


def _num_list(cfg, section, key, length=None):
    value = cfg[section][key]
    name = f"{section}.{key}"
    if not isinstance(value, list) or not value:
        raise ValidationError(name, "expected a non-empty list of numbers")
    if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
        raise ValidationError(name, "expected a list of numbers")
    if length is not None and len(value) != length:
        raise ValidationError(name, f"expected {length} values, got {len(value)}")
    return tuple(float(v) for v in value)


def _choice(cfg, section, key, options):
    value = cfg[section][key]
    if value not in options:
        raise ValidationError(f"{section}.{key}", f"must be one of {sorted(options)}, got {value!r}")
    return value


def _build(name, factory, *args, **kwargs):
    try:
        return factory(*args, **kwargs)
    except ValueError as exc:
        raise ValidationError(name, str(exc)) from exc


def config_from_dict(data: dict) -> RunConfig:
    cfg = _merge(data)
    n = "fluid"
    fluid = _build(n, FluidProperties,
                   _num(cfg, n, "density_kg_m3", positive=True),
                   _num(cfg, n, "viscosity_pa_s", positive=True),
                   _num(cfg, n, "gravity_m_s2", nonneg=True))

    n = "geometry"
    angle = _num(cfg, n, "opening_angle_deg", positive=True)
    if not angle < 90:
        raise ValidationError("geometry.opening_angle_deg", "must be < 90")
    geom = _build(n, DiffuserGeometry.from_mm_deg,
                  _num(cfg, n, "throat_width_mm", positive=True),
                  _num(cfg, n, "length_mm", positive=True), angle,
                  _num(cfg, n, "depth_mm", positive=True))

    n = "elements"
    xi_base = _num(cfg, n, "xi_base", nonneg=True)
    orientations = {o.value for o in Orientation}
    inlet_or = Orientation(_choice(cfg, n, "inlet_orientation", orientations))
    outlet_or = Orientation(_choice(cfg, n, "outlet_orientation", orientations))
    if (cfg[n]["xi_d"] is None) != (cfg[n]["xi_n"] is None):
        raise ValidationError("elements.xi_d", "xi_d and xi_n must be given together")
    if cfg[n]["xi_d"] is not None:
        losses = _build(n, LossCoefficients, _num(cfg, n, "xi_d", positive=True),
                        _num(cfg, n, "xi_n", positive=True))
    else:
        losses = _build("geometry.opening_angle_deg", loss_coefficients_from_geometry, geom, xi_base)

    n = "chambers"
    count = _num(cfg, n, "count", positive=True, integer=True)
    chamber = _build(n, ChamberSpec,
                     _num(cfg, n, "diameter_mm", positive=True) * 1e-3,
                     _num(cfg, n, "link_width_mm", positive=True) * 1e-3,
                     _num(cfg, n, "link_depth_mm", positive=True) * 1e-3,
                     _num(cfg, n, "link_length_mm", positive=True) * 1e-3)
    link_model = LinkModel(_choice(cfg, n, "interior_link_model", {m.value for m in LinkModel}))

    n = "membrane"
    membrane = _build(n, MembraneModel,
                      _num(cfg, n, "stroke_volume_ul", positive=True) * 1e-9,
                      _num(cfg, n, "voltage_ref_v", positive=True),
                      _num(cfg, n, "response_cutoff_hz", positive=True),
                      _num(cfg, n, "lag_order", positive=True, integer=True))

    n = "drive"
    if cfg[n]["phase_offsets_deg"] is None:
        cfg[n]["phase_offsets_deg"] = [360.0 * i / count for i in range(count)]
    offsets_deg = _num_list(cfg, n, "phase_offsets_deg", length=count)
    drive = _build(n, DriveConfig,
                   _num(cfg, n, "voltage_v", nonneg=True),
                   _num(cfg, n, "frequency_hz", positive=True),
                   _choice(cfg, n, "waveform", {"square", "sine"}),
                   tuple(math.radians(d) for d in offsets_deg))

    n = "plan"
    if cfg[n]["steps"] is None:
        plan = plan_from_offsets([d / 360.0 for d in offsets_deg])
        cfg[n]["steps"] = plan.to_strings()
        cfg[n]["step_fractions"] = list(plan.step_fractions)
    else:
        rows = cfg[n]["steps"]
        if not isinstance(rows, list) or any(not isinstance(r, str) for r in rows):
            raise ValidationError("plan.steps", "expected a list of strings such as 'DUD'")
        fractions = None
        if cfg[n]["step_fractions"] is not None:
            fractions = _num_list(cfg, n, "step_fractions", length=len(rows))
        plan = _build("plan.steps", PhasePlan.from_strings, rows, fractions)
        if plan.n_chambers != count:
            raise ValidationError("plan.steps", f"rows must have {count} entries")
        cfg[n]["step_fractions"] = list(plan.step_fractions)

    n = "boundary"
    p_in = _num(cfg, n, "inlet_pressure_pa")
    p_out = _num(cfg, n, "outlet_pressure_pa")

    inlet = DiffuserElement(geom, losses, inlet_or)
    outlet = DiffuserElement(geom, losses, outlet_or)
    pump = _build("chambers", PumpConfig, inlet, outlet, (chamber,) * count, link_model,
                  fluid, membrane, plan, p_in, p_out)

    n = "solver"
    divisor = _num(cfg, n, "dt_divisor", positive=True, integer=True)
    if divisor < 200:
        raise ValidationError("solver.dt_divisor", "must be >= 200 steps per period")
    max_cycles = _num(cfg, n, "max_cycles", positive=True, integer=True)
    if max_cycles < 2:
        raise ValidationError("solver.max_cycles", "must be >= 2")
    solver = SimulationSettings(divisor, max_cycles,
                                _num(cfg, n, "cycle_rtol", positive=True),
                                _num(cfg, n, "continuity_rtol", positive=True))

    n = "sweep"
    angles = _num_list(cfg, n, "angles_deg")
    if any(not 0 < a <= 60 for a in angles):
        raise ValidationError("sweep.angles_deg", "angles must lie in (0, 60]")
    profile = _num(cfg, n, "profile_factor", positive=True)
    lo, hi = PROFILE_FACTOR_RANGE
    if not lo <= profile <= hi:
        raise ValidationError("sweep.profile_factor", f"must lie in [{lo}, {hi}]")
    freqs = _num_list(cfg, n, "frequencies_hz")
    if any(not f > 0 for f in freqs):
        raise ValidationError("sweep.frequencies_hz", "frequencies must be > 0")
    a_range = _num_list(cfg, n, "angle_range_deg", length=2)
    if not 0 < a_range[0] <= a_range[1] <= 60:
        raise ValidationError("sweep.angle_range_deg", "need 0 < lower <= upper <= 60")
    step = _num(cfg, n, "angle_grid_step_deg", positive=True)
    if step > 2.5:
        raise ValidationError("sweep.angle_grid_step_deg", "must be <= 2.5")
    sweep = SweepSettings(angles, _num(cfg, n, "v_inlet_mm_s", nonneg=True), profile, freqs,
                          a_range, step, _num(cfg, n, "workers", positive=True, integer=True))

    n = "calibration"
    fc_bounds = _num_list(cfg, n, "fc_bounds_hz", length=2)
    stroke_bounds = _num_list(cfg, n, "stroke_bounds_ul", length=2)
    for name, bounds in (("fc_bounds_hz", fc_bounds), ("stroke_bounds_ul", stroke_bounds)):
        if not 0 < bounds[0] < bounds[1]:
            raise ValidationError(f"calibration.{name}", "need 0 < lower < upper")
    calibration = CalibrationTargets(
        _num(cfg, n, "target_flow_ul_min", nonneg=True),
        _num(cfg, n, "target_frequency_hz", positive=True),
        _num(cfg, n, "target_voltage_v", positive=True),
        fc_bounds, tuple(b * 1e-9 for b in stroke_bounds))

    directory = cfg["output"]["directory"]
    if not isinstance(directory, str) or not directory:
        raise ValidationError("output.directory", "expected a non-empty string")

    # echo without unset optional keys so the dict stays TOML-serialisable
    if cfg["elements"]["xi_d"] is None:
        del cfg["elements"]["xi_d"], cfg["elements"]["xi_n"]
    return RunConfig(pump, drive, geom, xi_base, solver, sweep, calibration, directory, raw=cfg)


def dump_config(config: RunConfig) -> str:
    import tomli_w
    return tomli_w.dumps(config.to_dict())
