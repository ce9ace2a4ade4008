import math

from micropump.diffuser_element import DiffuserElement, LossCoefficients
from micropump.fluids_geometry import ChamberSpec, DiffuserGeometry
from micropump.membrane_actuation import DriveConfig, MembraneModel, default_phase_plan
from micropump.pump_network import LinkModel, PumpConfig


def single_chamber_pump(xi_d, xi_n, fc=1000.0, stroke=1e-9, order=2):
    geom = DiffuserGeometry.from_mm_deg(0.3, 3.4, 10.0, 0.35)
    elem = DiffuserElement(geom, LossCoefficients(xi_d, xi_n))
    return PumpConfig(elem, elem, chambers=(ChamberSpec(),), interior_link_model=LinkModel.LOSSLESS,
                      membrane=MembraneModel(stroke, 24.0, fc, order), plan=default_phase_plan(1))


def sine_drive(freq, n=1, voltage=24.0):
    return DriveConfig(voltage, freq, "sine", tuple(2 * math.pi * i / n for i in range(n)))
