import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from micropump.diffuser_element import DiffuserElement, loss_coefficients_from_geometry
from micropump.fluids_geometry import DiffuserGeometry
from micropump.pump_network import PumpConfig


@pytest.fixture
def paper_geometry():
    return DiffuserGeometry.from_mm_deg(0.3, 3.4, 10.0, 0.35)


@pytest.fixture
def paper_pump(paper_geometry):
    elem = DiffuserElement(paper_geometry, loss_coefficients_from_geometry(paper_geometry))
    return PumpConfig(elem, elem)
