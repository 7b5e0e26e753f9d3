import sys
from pathlib import Path

import pytest

SRC = Path(__file__).resolve().parent.parent / 'src'
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

from thermo_network.properties.gas_props import GasSpec  # noqa: E402
from thermo_network.scenario import demos  # noqa: E402
from thermo_network.simulation.integrator import RK4, RK45, IntegrationOptions  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-horizon, cross-solver and fuzz tests (run with -m slow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("markexpr"):
        return
    skip_slow = pytest.mark.skip(reason="slow test; select with -m slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def air():
    return GasSpec.default_air()


@pytest.fixture
def tank():
    return demos.tank()


@pytest.fixture
def piston():
    return demos.piston()


@pytest.fixture
def two_compartment():
    return demos.two_compartment()


@pytest.fixture
def heat_matter():
    return demos.heat_matter()


@pytest.fixture
def isolated_heat_matter():
    return demos.isolated_heat_matter()


@pytest.fixture
def short_options():
    """Two seconds of adaptive stepping at the demo tolerances."""
    return IntegrationOptions(method=RK45, t_final=2.0, h0=1e-3, h_min=1e-9, h_max=0.1,
                              abs_tol=1e-9, rel_tol=1e-9, sample_dt=0.05)


@pytest.fixture
def fixed_step():
    """Factory for classic RK4 options at a constant step h."""
    def build(h, t_final, sample_dt=None):
        return IntegrationOptions(method=RK4, t_final=t_final, h0=h, h_min=min(h, 1e-9), h_max=h,
                                  sample_dt=sample_dt or t_final)
    return build


@pytest.fixture
def cli_config(tmp_path):
    """Config file that keeps logs and demo output inside the test's tmp directory."""
    path = tmp_path / 'config.yml'
    path.write_text(
        "logging:\n"
        "  level: INFO\n"
        f"  file: {tmp_path / 'logs' / 'thermo_network.log'}\n"
        "output:\n"
        f"  dir: {tmp_path / 'output'}\n"
    )
    return path
