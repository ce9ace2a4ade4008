import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from micropump.diffuser_element import (
    DiffuserElement,
    LossCoefficients,
    Orientation,
    PressureRecovery,
    directional_flow,
    loss_coefficient_K,
    loss_coefficients_from_geometry,
    pressure_drop,
    pressure_recovery_cp,
    rectification_ratio,
    throat_velocity,
    volume_flow,
)
from micropump.fluids_geometry import DiffuserGeometry, FluidProperties

GRID = [5, 10, 15, 20, 30, 40]

# frozen recovery model at W1 = 0.3 mm, L = 3.4 mm
GOLDEN_CP = {
    5: 0.306785900286288,
    10: 0.7100996790463298,
    15: 0.5965747965229404,
    20: 0.39403493554068064,
    30: 0.14665826285124886,
    40: 0.05479900842625981,
}


def geom(angle, length=3.4):
    return DiffuserGeometry.from_mm_deg(0.3, length, angle, 0.35)


def documented_cp(angle_deg, w1, length):
    w2 = w1 + 2 * length * math.tan(math.radians(angle_deg) / 2)
    theta_opt = 10.0 * math.sqrt((3.4 / 0.3) / (length / w1))
    eff = 0.8 * math.exp(-math.log(angle_deg / theta_opt) ** 2 / (2 * 0.6**2))
    return (1 - (w1 / w2) ** 2) * eff


@pytest.mark.parametrize("angle", GRID)
def test_cp_golden(angle):
    cp = pressure_recovery_cp(geom(angle)).cp
    assert cp == pytest.approx(GOLDEN_CP[angle], rel=1e-12)
    assert cp == pytest.approx(documented_cp(angle, 0.3, 3.4), rel=1e-12)


def test_k_argmin_and_argmax_over_grid():
    ks = {a: loss_coefficient_K(geom(a), pressure_recovery_cp(geom(a))) for a in GRID}
    assert min(ks, key=ks.get) == 10
    assert 5 <= min(ks, key=ks.get) <= 20
    assert 20 <= max(ks, key=ks.get) <= 40
    assert ks[10] < ks[30]
    assert min(ks[a] for a in (30, 40)) > ks[10]


def test_cp_continuous_in_angle():
    xs = np.linspace(0.5, 60, 2000)
    cps = np.array([pressure_recovery_cp(geom(x)).cp for x in xs])
    assert np.abs(np.diff(cps)).max() < 0.01


@pytest.mark.parametrize("angle", [0.0, -5.0, 61.0])
def test_cp_rejects_out_of_range(angle):
    with pytest.raises(ValueError):
        pressure_recovery_cp(geom(angle))


def test_k_identity_case():
    tiny = DiffuserGeometry(0.3e-3, 3.4e-3, 1e-12, 0.35e-3)
    assert loss_coefficient_K(tiny, 0.0) == pytest.approx(0.0, abs=1e-9)


def test_k_examples():
    # W1/W2 from the reported widths
    for w2, expected in ((0.895, 0.28764), (1.5, 0.36)):
        ratio = 0.3 / w2
        assert 1 - ratio**2 - 0.6 == pytest.approx(expected, abs=5e-5)
    g20 = geom(20)
    assert loss_coefficient_K(g20, PressureRecovery(0.6)) == pytest.approx(0.36, abs=2e-3)
    assert loss_coefficient_K(geom(10), 0.6) == pytest.approx(0.28764, abs=2e-3)


@given(st.floats(0.5, 59), st.floats(0.5, 59), st.floats(-0.5, 0.9))
def test_k_decreases_as_area_ratio_nears_one(a1, a2, cp):
    lo, hi = sorted((a1, a2))
    # smaller angle -> A_in/A_out closer to 1 -> smaller K at fixed cp
    assert loss_coefficient_K(geom(lo), cp) <= loss_coefficient_K(geom(hi), cp) + 1e-15


def test_throat_velocity():
    fluid = FluidProperties(density=1000.0)
    assert throat_velocity(0.0, fluid, 2.0) == 0.0
    assert throat_velocity(1.0, fluid, 2.0) == pytest.approx(0.0316228, rel=1e-6)
    assert throat_velocity(4.0, fluid, 2.0) == pytest.approx(2 * throat_velocity(1.0, fluid, 2.0))
    with pytest.raises(ValueError):
        throat_velocity(-1.0, fluid, 2.0)


def test_volume_flow():
    q = volume_flow(1.05e-7, 0.35e-3)
    assert q == pytest.approx(3.675e-11)
    assert q * 6e10 == pytest.approx(2.205)
    assert volume_flow(1.05e-7, 0.0) == 0.0
    assert volume_flow(2.1e-7, 0.35e-3) == pytest.approx(2 * q)


def element(xi_d, xi_n, orientation=Orientation.INLET_TO_OUTLET):
    return DiffuserElement(geom(10), LossCoefficients(xi_d, xi_n), orientation)


pressures = st.floats(1e-6, 1e5)


def test_directional_flow_zero():
    assert directional_flow(element(0.5, 2.0), 0.0, FluidProperties()) == 0.0


@given(pressures)
def test_directional_flow_symmetric_element(dp):
    e, fluid = element(0.7, 0.7), FluidProperties()
    assert abs(directional_flow(e, dp, fluid)) == pytest.approx(abs(directional_flow(e, -dp, fluid)))


@given(pressures)
def test_directional_flow_ratio(dp):
    e, fluid = element(0.5, 2.0), FluidProperties()
    fwd, back = directional_flow(e, dp, fluid), directional_flow(e, -dp, fluid)
    assert fwd > 0 > back
    assert fwd / -back == pytest.approx(2.0, rel=1e-12)


@given(pressures, st.sampled_from(list(Orientation)))
def test_directional_flow_matches_composition(dp, orientation):
    e, fluid = element(0.4, 1.3, orientation), FluidProperties()
    for signed in (dp, -dp):
        forward = signed * orientation.sign > 0
        xi = 0.4 if forward else 1.3
        expected = math.copysign(volume_flow(e.area, throat_velocity(abs(signed), fluid, xi)), signed)
        assert directional_flow(e, signed, fluid) == pytest.approx(expected, rel=1e-14)


@given(pressures, st.floats(1.01, 3.0))
def test_flow_monotone(dp, factor):
    fluid = FluidProperties()
    e = element(0.5, 1.5)
    assert directional_flow(e, dp * factor, fluid) > directional_flow(e, dp, fluid)
    assert directional_flow(element(0.5 * factor, 1.5), dp, fluid) < directional_flow(e, dp, fluid)


@given(st.one_of(st.just(0.0), st.floats(1e-20, 1e-5), st.floats(-1e-5, -1e-20)),
       st.sampled_from(list(Orientation)))
def test_pressure_drop_inverts_flow(q, orientation):
    e, fluid = element(0.4, 1.3, orientation), FluidProperties()
    dp = pressure_drop(e, q, fluid)
    assert directional_flow(e, dp, fluid) == pytest.approx(q, rel=1e-12)


def test_flow_continuous_at_zero():
    e, fluid = element(0.5, 2.0), FluidProperties()
    small = directional_flow(e, np.array([-1e-12, 1e-12]), fluid)
    assert np.abs(small).max() < 1e-10


def test_orientation_flip_mirrors_flow():
    e, fluid = element(0.5, 2.0), FluidProperties()
    assert directional_flow(e.flipped(), 10.0, fluid) == pytest.approx(-directional_flow(e, -10.0, fluid))


def test_rectification_ratio():
    assert rectification_ratio(LossCoefficients(1.0, 1.0)) == 1.0
    assert rectification_ratio(LossCoefficients(0.5, 2.0)) == pytest.approx(2.0)
    assert rectification_ratio(LossCoefficients(0.5, 0.6)) > 1
    assert rectification_ratio(LossCoefficients(0.6, 0.5)) < 1


def test_loss_coefficients_from_geometry():
    losses = loss_coefficients_from_geometry(geom(10), xi_base=0.1)
    assert losses.xi_d == pytest.approx(0.17752491976158236 + 0.1, rel=1e-12)
    assert losses.xi_n == pytest.approx(1.1)
    assert rectification_ratio(losses) > 1


@pytest.mark.parametrize("bad", [(0.0, 1.0), (1.0, -1.0)])
def test_loss_invariants(bad):
    with pytest.raises(ValueError):
        LossCoefficients(*bad)


def test_pressure_recovery_invariant():
    with pytest.raises(ValueError):
        PressureRecovery(1.0)
    assert PressureRecovery(-0.5).cp == -0.5
