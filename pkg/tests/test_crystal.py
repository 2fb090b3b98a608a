import numpy as np
import pytest

from polaron_lab.crystal import (InsulatorViolation, NuclearDensity, SCFDiverged, SCFParams, band_structure,
                                 bloch_indices, crystal_from_hamiltonian, insulator_check, kinetic_matrix,
                                 scf_solve)
from polaron_lab.grid import LatticeSpec, periodize

from conftest import SHORT_CELL


def test_free_electron_bands_match_dispersion():
    spec = LatticeSpec(1, 0.5, 8, 4)
    bands = band_structure(np.zeros(spec.n_c), spec)
    for j, e in zip(bloch_indices(spec), bands):
        m = np.fft.fftfreq(spec.n, 1 / spec.n)
        ks = 2 * np.pi * m[(m - j[0]) % spec.M == 0] / spec.L
        np.testing.assert_allclose(e, np.sort(ks**2 / 2), atol=1e-10)


@pytest.mark.parametrize("d,n_c,M", [(1, 8, 3), (2, 4, 2)])
def test_bloch_fibers_tile_supercell_spectrum(d, n_c, M):
    spec = LatticeSpec(d, 1.0, n_c, M)
    rng = np.random.default_rng(2)
    v = rng.standard_normal(spec.cell().shape)
    fibers = np.sort(band_structure(v, spec).reshape(-1))
    H = kinetic_matrix(spec) + np.diag(periodize(v, spec).reshape(-1))
    np.testing.assert_allclose(fibers, np.linalg.eigvalsh(H), atol=1e-9)


def test_jellium_violates_insulator_assumption():
    with pytest.raises(InsulatorViolation) as info:
        scf_solve(NuclearDensity.uniform(1), LatticeSpec(1, 0.5, 16, 4))
    edges = info.value.band_edges
    assert edges["band_Z1_min"] - edges["band_Z_max"] <= 1e-6


def test_insulator_check_midgap():
    bands = np.array([[0.0, 2.0], [0.5, 3.0]])
    gap, eF = insulator_check(bands, 1)
    assert gap == pytest.approx(1.5) and eF == pytest.approx(1.25)


def test_scf_divergence_is_reported():
    with pytest.raises(SCFDiverged) as info:
        scf_solve(SHORT_CELL, LatticeSpec(1, 0.5, 16, 4), SCFParams(max_iter=1, tol=1e-15))
    assert len(info.value.trace) >= 1


def test_deepwell_crystal_invariants(small_crystal):
    c = small_crystal
    g = c.gamma0
    assert c.gap > 0.1
    np.testing.assert_allclose(g @ g, g, atol=1e-10)
    assert np.trace(g) == pytest.approx(c.n_occ, abs=1e-9)
    assert c.rho_cell.sum() * c.spec.cell().weight == pytest.approx(c.Z, abs=1e-9)
    assert c.scf_residual <= 1e-8
    assert np.all(np.diff(c.energy_trace) <= 1e-10)
    # eps_F in the gap of the supercell Hamiltonian
    assert c.eigvals[c.n_occ - 1] < c.eps_F < c.eigvals[c.n_occ]


def test_band_bottom_is_lowest_supercell_level(small_crystal):
    c = small_crystal
    h = c.polaron_hamiltonian()
    assert c.E_per == pytest.approx(np.linalg.eigvalsh(h)[0], abs=1e-10)
    u = c.u_per_super()
    assert u.norm() == pytest.approx(1.0, abs=1e-12)
    # u_per is an eigenvector at the band bottom
    hu = h @ (u.flat() * np.sqrt(c.spec.weight))
    np.testing.assert_allclose(hu, c.E_per * u.flat() * np.sqrt(c.spec.weight), atol=1e-8)


def test_scf_is_deterministic(small_crystal):
    again = scf_solve(SHORT_CELL, small_crystal.spec, SCFParams())
    np.testing.assert_array_equal(again.v_cell, small_crystal.v_cell)


def test_toy_hamiltonian_needs_a_gap():
    spec = LatticeSpec(1, 1.0, 4, 1)
    with pytest.raises(InsulatorViolation):
        crystal_from_hamiltonian(spec, np.eye(4), 1)
