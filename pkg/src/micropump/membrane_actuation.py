"""PZT membrane actuation: drive waveform, peristaltic phase plan and response lag.

Volumes here are membrane-displaced volumes, signed about the neutral
position; positive means the membrane is pressed down into the chamber.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

DOWN = True
UP = False


@dataclass(frozen=True)
class MembraneModel:
    """Linear voltage-to-stroke map followed by a cascade of equal first-order lags.

    ``order`` identical stages, each with time constant 1/(2 pi fc).
    """

    stroke_volume_ref: float = 0.65e-9  # m^3, peak-to-peak at voltage_ref
    voltage_ref: float = 24.0
    response_cutoff: float = 70.0  # Hz
    order: int = 2

    def __post_init__(self):
        if not self.stroke_volume_ref > 0:
            raise ValueError(f"stroke_volume_ref must be > 0, got {self.stroke_volume_ref}")
        if not self.voltage_ref > 0:
            raise ValueError(f"voltage_ref must be > 0, got {self.voltage_ref}")
        if not self.response_cutoff > 0:
            raise ValueError(f"response_cutoff must be > 0, got {self.response_cutoff}")
        if self.order < 1:
            raise ValueError(f"order must be >= 1, got {self.order}")

    @property
    def tau(self) -> float:
        return 1.0 / (2.0 * math.pi * self.response_cutoff)

    def stroke(self, voltage: float) -> float:
        return self.stroke_volume_ref * voltage / self.voltage_ref


@dataclass(frozen=True)
class PhasePlan:
    """Ordered chamber-state table; ``steps[k][i]`` is True when chamber i is down."""

    steps: tuple[tuple[bool, ...], ...]
    step_fractions: tuple[float, ...]

    def __post_init__(self):
        if not self.steps:
            raise ValueError("phase plan needs at least one step")
        width = len(self.steps[0])
        if width == 0 or any(len(s) != width for s in self.steps):
            raise ValueError("every step must list the state of every chamber")
        if len(self.step_fractions) != len(self.steps):
            raise ValueError("one step fraction per step required")
        if any(f <= 0 for f in self.step_fractions):
            raise ValueError("step fractions must be positive")
        if abs(sum(self.step_fractions) - 1.0) > 1e-12:
            raise ValueError(f"step fractions must sum to 1, got {sum(self.step_fractions)}")

    @property
    def n_chambers(self) -> int:
        return len(self.steps[0])

    @property
    def boundaries(self) -> np.ndarray:
        """Cumulative phase at the end of each step."""
        return np.cumsum(self.step_fractions)

    def to_strings(self) -> list[str]:
        return ["".join("D" if s else "U" for s in step) for step in self.steps]

    @classmethod
    def from_strings(cls, rows, fractions=None) -> "PhasePlan":
        steps = []
        for row in rows:
            if not row or set(row.upper()) - {"D", "U"}:
                raise ValueError(f"plan row {row!r} must use only 'D' and 'U'")
            steps.append(tuple(c == "D" for c in row.upper()))
        if fractions is None:
            fractions = [1.0 / len(steps)] * len(steps)
        return cls(tuple(steps), tuple(float(f) for f in fractions))


@dataclass(frozen=True)
class DriveConfig:
    voltage: float = 24.0
    frequency: float = 50.0
    waveform: str = "square"
    phase_offsets: tuple[float, ...] = field(
        default_factory=lambda: tuple(2 * math.pi * i / 3 for i in range(3)))

    def __post_init__(self):
        if not self.voltage >= 0:
            raise ValueError(f"voltage must be >= 0, got {self.voltage}")
        if not self.frequency > 0:
            raise ValueError(f"frequency must be > 0, got {self.frequency}")
        if self.waveform not in ("square", "sine"):
            raise ValueError(f"waveform must be 'square' or 'sine', got {self.waveform!r}")

    @property
    def period(self) -> float:
        return 1.0 / self.frequency

    def with_(self, **changes) -> "DriveConfig":
        from dataclasses import replace
        return replace(self, **changes)


def plan_from_offsets(offset_fractions) -> PhasePlan:
    """Step table of 50%-duty square waves delayed by the given period fractions.

    Chamber i is down on [o_i, o_i + 1/2) (mod 1). Steps run between
    consecutive transition instants.
    """
    offsets = [Fraction(o).limit_denominator(10**6) % 1 for o in offset_fractions]
    cuts = sorted({o for o in offsets} | {(o + Fraction(1, 2)) % 1 for o in offsets} | {Fraction(0)})
    edges = cuts + [Fraction(1)]
    steps, fractions = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid = (lo + hi) / 2
        steps.append(tuple((mid - o) % 1 < Fraction(1, 2) for o in offsets))
        fractions.append(float(hi - lo))
    return PhasePlan(tuple(steps), tuple(fractions))


def default_phase_plan(n_chambers: int) -> PhasePlan:
    """Travelling compression wave: chamber i delayed by i/n of a period."""
    if n_chambers < 1:
        raise ValueError("n_chambers must be >= 1")
    return plan_from_offsets([Fraction(i, n_chambers) for i in range(n_chambers)])


def default_phase_offsets(n_chambers: int) -> tuple[float, ...]:
    return tuple(2 * math.pi * i / n_chambers for i in range(n_chambers))


def plan_state(phase, plan: PhasePlan) -> np.ndarray:
    """Chamber states (bool, down=True) at cycle phase(s) in [0, 1)."""
    phase = np.asarray(phase, dtype=float) % 1.0
    idx = np.searchsorted(plan.boundaries, phase, side="right")
    idx = np.minimum(idx, len(plan.steps) - 1)
    return np.asarray(plan.steps, dtype=bool)[idx]


def target_volumes(times, drive: DriveConfig, membrane: MembraneModel, plan: PhasePlan) -> np.ndarray:
    """Commanded displaced volume for every chamber, shape (len(times), n_chambers)."""
    t = np.atleast_1d(np.asarray(times, dtype=float))
    half = 0.5 * membrane.stroke(drive.voltage)
    if drive.waveform == "square":
        down = plan_state(drive.frequency * t, plan)
        return np.where(down, half, -half)
    offsets = np.asarray(drive.phase_offsets, dtype=float)
    return half * np.sin(2 * math.pi * drive.frequency * t[:, None] - offsets[None, :])


def target_volume(t: float, chamber: int, drive: DriveConfig, membrane: MembraneModel,
                  plan: PhasePlan) -> float:
    return float(target_volumes([t], drive, membrane, plan)[0, chamber])


def actual_volume_step(v_current, v_target, dt: float, membrane: MembraneModel):
    """One first-order lag stage, advanced exactly for a constant target over dt."""
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    decay = math.exp(-dt / membrane.tau)
    return v_target + (v_current - v_target) * decay


def cascade_transition(dt: float, membrane: MembraneModel) -> np.ndarray:
    """Exact one-step transition matrix of the lag cascade (deviations from target).

    Stage k is driven by stage k-1 (stage 0 by the target). With the target
    held constant over dt, deviation y_k evolves as
    sum_j y_j (dt/tau)^(k-j)/(k-j)! exp(-dt/tau).
    """
    x = dt / membrane.tau
    n = membrane.order
    m = np.zeros((n, n))
    for k in range(n):
        for j in range(k + 1):
            m[k, j] = x ** (k - j) / math.factorial(k - j)
    return m * math.exp(-x)


def advance_membrane(stages: np.ndarray, v_target, dt: float, membrane: MembraneModel,
                     transition: np.ndarray | None = None) -> np.ndarray:
    """Advance cascade states (shape (order, n_chambers)); the last row is the membrane volume."""
    if transition is None:
        transition = cascade_transition(dt, membrane)
    target = np.asarray(v_target, dtype=float)
    return target + transition @ (stages - target)
