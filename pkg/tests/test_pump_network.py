import math
from dataclasses import replace

import numpy as np
import pytest
from helpers import sine_drive, single_chamber_pump
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import closed_form_net_volume, element_flow, single_chamber_net_volume

from micropump.diffuser_element import DiffuserElement, LossCoefficients, loss_coefficients_from_geometry
from micropump.errors import NonConvergence, NotConverged
from micropump.fluids_geometry import ChamberSpec, DiffuserGeometry
from micropump.membrane_actuation import DriveConfig
from micropump.pump_network import (
    FlowRecord,
    LinkModel,
    PumpConfig,
    PumpState,
    mean_channel_velocity,
    net_flow_rate,
    run_cycles,
    solve_network,
    step,
)

# oracle net outlet volume per cycle for a 1 nl stroke (fine-step bisection integration)
ORACLE_NET = {1.5: 1.9999999835506585e-10, 2.0: 3.333333305917764e-10, 3.0: 4.999999958876647e-10}


def test_oracle_agrees_with_closed_form():
    area = 0.3e-3 * 0.35e-3
    for eta, frozen in ORACLE_NET.items():
        net, gross = single_chamber_net_volume(1e-9, 1.0, area, 997.0, 0.5, 0.5 * eta**2)
        assert net == pytest.approx(frozen, rel=1e-9)
        assert net == pytest.approx(closed_form_net_volume(1e-9, eta), rel=1e-6)
        assert gross == pytest.approx(1e-9, rel=1e-6)


@pytest.mark.parametrize("eta", sorted(ORACLE_NET))
def test_single_chamber_matches_oracle(eta):
    cfg = single_chamber_pump(0.5, 0.5 * eta**2, fc=1000.0, stroke=1e-9)
    rec = run_cycles(cfg, sine_drive(1.0), steps_per_cycle=600)
    assert rec.converged
    assert rec.cycle_net_volumes[-1] == pytest.approx(ORACLE_NET[eta], rel=1e-3)


def test_zero_stroke_keeps_boundary_pressure(paper_pump):
    drive = DriveConfig(voltage=0.0)
    state = PumpState.at_rest(paper_pump)
    for _ in range(5):
        state = step(state, paper_pump, drive, drive.period / 400)
        assert np.all(state.chamber_pressures == 0.0)
        assert state.inlet_flow == 0.0 and state.outlet_flow == 0.0
    rec = run_cycles(paper_pump, drive)
    assert rec.converged and rec.cycles == 2
    assert net_flow_rate(rec) == 0.0


def test_symmetric_single_chamber_mirror_flows():
    cfg = single_chamber_pump(0.8, 0.8, fc=1000.0)
    rec = run_cycles(cfg, sine_drive(2.0), steps_per_cycle=400)
    last = slice(-400, None)
    assert rec.inlet_flow[last] == pytest.approx(-rec.outlet_flow[last], abs=1e-25)
    assert abs(rec.cycle_net_volumes[-1]) < 1e-9 * rec.cycle_gross_volumes[-1]


def test_step_matches_run_cycles(paper_pump):
    drive = DriveConfig(frequency=50.0)
    n = 300
    rec = run_cycles(paper_pump, drive, max_cycles=2, steps_per_cycle=n, cycle_rtol=1e-12)
    state = PumpState.at_rest(paper_pump)
    outs = []
    for _ in range(2 * n):
        state = step(state, paper_pump, drive, drive.period / n)
        outs.append(state.outlet_flow)
    assert np.array(outs) == pytest.approx(rec.outlet_flow, rel=1e-9, abs=1e-18)
    assert state.chamber_pressures == pytest.approx(rec.chamber_pressures[-1], rel=1e-9, abs=1e-9)


def test_step_rejects_coarse_dt(paper_pump):
    drive = DriveConfig(frequency=50.0)
    with pytest.raises(ValueError):
        step(PumpState.at_rest(paper_pump), paper_pump, drive, drive.period / 100)


def brute_force_inlet_flow(rates, cfg):
    """Scan-and-bisect the pressure closure directly from element laws."""
    fluid = cfg.fluid
    a = cfg.inlet_element.area
    xi = cfg.inlet_element.losses
    res = cfg.link_resistances()
    cum = np.cumsum(rates)

    def closure(q0):
        flows = q0 + np.concatenate([[0.0], cum])
        c = 0.5 * fluid.density / a**2
        dp_in = c * (xi.xi_d if flows[0] >= 0 else xi.xi_n) * flows[0] * abs(flows[0])
        dp_out = c * (xi.xi_d if flows[-1] >= 0 else xi.xi_n) * flows[-1] * abs(flows[-1])
        return dp_in + dp_out + float(np.dot(res, flows[1:-1]))

    lo, hi = -1.0, 1.0
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if closure(mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-22:
            break
    return 0.5 * (lo + hi)


rate = st.floats(-5e-8, 5e-8)
_geom = DiffuserGeometry.from_mm_deg(0.3, 3.4, 10.0, 0.35)
_elem = DiffuserElement(_geom, loss_coefficients_from_geometry(_geom))
PUMP = PumpConfig(_elem, _elem)


@settings(max_examples=60, deadline=None)
@given(rates=st.lists(rate, min_size=3, max_size=3), link_model=st.sampled_from(list(LinkModel)))
def test_solver_matches_bisection(rates, link_model):
    cfg = replace(PUMP, interior_link_model=link_model)
    sol = solve_network(np.array(rates), cfg, flow_scale=5e-8)
    assert sol.link_flows[0, 0] == pytest.approx(brute_force_inlet_flow(np.array(rates), cfg), abs=1e-19)
    assert sol.continuity_residual[0] <= 1e-9 * 5e-8


def test_pressures_consistent_with_element_laws(paper_pump):
    rates = np.array([[2e-8, -1e-8, 3e-9], [-4e-8, 0.0, 1e-8]])
    sol = solve_network(rates, paper_pump)
    fluid = paper_pump.fluid
    xi = paper_pump.inlet_element.losses
    a = paper_pump.inlet_element.area
    q_in = element_flow(0.0 - sol.chamber_pressures[:, 0], a, fluid.density, xi.xi_d, xi.xi_n)
    assert q_in == pytest.approx(sol.link_flows[:, 0], rel=1e-9)
    r = paper_pump.link_resistances()
    link = (sol.chamber_pressures[:, :-1] - sol.chamber_pressures[:, 1:]) / r
    assert link == pytest.approx(sol.link_flows[:, 1:-1], rel=1e-9)


def test_mass_conservation_every_step(paper_pump):
    drive = DriveConfig(frequency=50.0)
    rec = run_cycles(paper_pump, drive)
    scale = paper_pump.membrane.stroke_volume_ref * 2 * math.pi * drive.frequency
    assert rec.max_continuity_residual < 1e-9 * scale


def test_nonconvergence_reported(paper_pump):
    with pytest.raises(NonConvergence) as err:
        solve_network(np.array([1e-8, 0.0, 0.0]), paper_pump, flow_scale=1e-8, rtol=-1.0)
    assert err.value.residual is not None


def test_rectification_sign_and_flip(paper_pump):
    drive = DriveConfig(frequency=50.0)
    fwd = run_cycles(paper_pump, drive, cycle_rtol=1e-10)
    back = run_cycles(paper_pump.flipped(), drive, cycle_rtol=1e-10)
    assert fwd.cycle_net_volumes[-1] > 0
    assert back.cycle_net_volumes[-1] == pytest.approx(-fwd.cycle_net_volumes[-1], rel=1e-8)


def test_symmetric_elements_null(paper_pump):
    sym = LossCoefficients(0.6, 0.6)
    cfg = paper_pump.with_elements(replace(paper_pump.inlet_element, losses=sym),
                                   replace(paper_pump.outlet_element, losses=sym))
    rec = run_cycles(cfg, DriveConfig(frequency=50.0))
    assert rec.converged
    assert abs(rec.cycle_net_volumes[-1]) < 1e-3 * rec.cycle_gross_volumes[-1]


def test_dt_refinement(paper_pump):
    drive = DriveConfig(frequency=50.0)
    coarse = net_flow_rate(run_cycles(paper_pump, drive, steps_per_cycle=600))
    fine = net_flow_rate(run_cycles(paper_pump, drive, steps_per_cycle=1200))
    assert abs(fine - coarse) / abs(fine) < 5e-3


def test_back_pressure_reduces_flow(paper_pump):
    drive = DriveConfig(frequency=50.0)
    free = net_flow_rate(run_cycles(paper_pump, drive))
    loaded = net_flow_rate(run_cycles(replace(paper_pump, outlet_pressure=20.0), drive))
    assert loaded < free


def test_net_flow_rate_units():
    rec = FlowRecord(50.0, 1e-4, np.zeros(1), np.zeros(1), np.zeros(1), np.zeros((1, 3)),
                     cycle_net_volumes=[0.0, 0.1217e-9], converged=True)
    assert net_flow_rate(rec) == pytest.approx(365.1, abs=0.1)
    steady = replace(rec, frequency=1.0, cycle_net_volumes=[2e-9])
    assert net_flow_rate(steady) == pytest.approx(120.0)
    zero = replace(rec, cycle_net_volumes=[0.0, 0.0])
    assert net_flow_rate(zero) == 0.0
    with pytest.raises(NotConverged):
        net_flow_rate(replace(rec, converged=False))
    with pytest.raises(NotConverged):
        net_flow_rate(replace(rec, cycle_net_volumes=[]))


def test_mean_channel_velocity():
    ch = ChamberSpec(connecting_channel_width=300e-6, connecting_channel_depth=350e-6)
    assert mean_channel_velocity(3.675e-11, ch) == pytest.approx(0.35e-3)
    assert mean_channel_velocity(0.0, ch) == 0.0
    assert mean_channel_velocity(7.35e-11, ch) == pytest.approx(0.7e-3)


def test_run_cycles_preconditions(paper_pump):
    with pytest.raises(ValueError):
        run_cycles(paper_pump, DriveConfig(), max_cycles=1)
    with pytest.raises(ValueError):
        run_cycles(paper_pump, DriveConfig(), steps_per_cycle=100)


def test_samples_strictly_increasing(paper_pump):
    rec = run_cycles(paper_pump, DriveConfig(frequency=80.0))
    assert np.all(np.diff(rec.time) > 0)
    assert len(rec.time) == rec.cycles * 600


def test_plan_chamber_mismatch(paper_pump):
    from micropump.membrane_actuation import default_phase_plan
    with pytest.raises(ValueError):
        replace(paper_pump, plan=default_phase_plan(2))
