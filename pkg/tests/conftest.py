import numpy as np
import pytest

from polaron_lab.crystal import NuclearDensity, SCFParams, crystal_from_hamiltonian, scf_solve
from polaron_lab.grid import LatticeSpec

# the deepwell-1d crystal: a = 2, tight-binding regime
DEEPWELL = NuclearDensity.from_dict({"Z": 1, "sites": [{"center": [1.0], "width": 0.1, "charge": 1.0}]})
# short cell (a = 0.5), nearly free electrons with a small gap; cheap unit-test crystal
SHORT_CELL = NuclearDensity.from_dict({"Z": 1, "sites": [{"center": [0.25], "width": 0.03, "charge": 1.0}]})


@pytest.fixture(autouse=True)
def _isolated_cache(tmp_path_factory, monkeypatch):
    monkeypatch.setenv("POLARON_LAB_CACHE", str(tmp_path_factory.getbasetemp() / "cache"))


@pytest.fixture(scope="session")
def small_crystal():
    """Short-cell crystal on a 64-point supercell for fast unit tests."""
    return scf_solve(SHORT_CELL, LatticeSpec(1, 0.5, 16, 4), SCFParams())


@pytest.fixture(scope="session")
def deepwell_crystal():
    """The deepwell-1d crystal (256 points)."""
    return scf_solve(DEEPWELL, LatticeSpec(1, 2.0, 16, 16), SCFParams())


def toy_hamiltonian(seed: int, n: int = 4, gap: float = 1.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    ev = np.concatenate([[-gap / 2], gap / 2 + rng.uniform(0, 1, n - 1)])
    return (U * ev) @ U.T


@pytest.fixture
def toy_crystal():
    """Four-point toy crystal with a hand-built H0 and a rank-one Fermi sea."""
    spec = LatticeSpec(1, 1.0, 4, 1)
    return crystal_from_hamiltonian(spec, toy_hamiltonian(0), 1)


# --- acceptance summary ------------------------------------------------------------

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        num, title = mark.args
        _CRITERIA[num] = (title, "PASS" if rep.outcome == "passed" else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        title, status = _CRITERIA[num]
        terminalreporter.write_line(f"criterion {num:2d} [{status}] {title}")
