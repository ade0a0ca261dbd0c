import numpy as np
import pytest

from graspkit.dataset import generate_dataset, write_records
from graspkit.fixtures import get_fixture, unit_cube
from graspkit.materials import Material, PartAssignment, mass_properties

from helpers import small_config


@pytest.fixture(scope="session")
def small_records():
    """Two instances of each desk-corpus object (10 records)."""
    return generate_dataset(small_config(2), workers=1)


@pytest.fixture(scope="session")
def small_dataset_dir(small_records, tmp_path_factory):
    return write_records(tmp_path_factory.mktemp("ds") / "data", small_records)


@pytest.fixture
def cube():
    return unit_cube()


@pytest.fixture
def cube_1kg():
    """Unit cube (1 m side) with mu=0.5 and density 1 kg/m^3, i.e. mass 1 kg."""
    mesh = unit_cube()

    def make(fragility="normal", mu=0.5):
        mat = Material("test", 1.0, mu, fragility)
        assign = [PartAssignment(0, mat, 1.0)]
        return mesh, assign, mass_properties(mesh, assign)

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def hammer():
    return get_fixture("hammer")


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance PASS/FAIL lines at the end of the run."""
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
