import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polaron_lab.coulomb import CoulombKernel
from polaron_lab.grid import GridFunction, LatticeSpec
from polaron_lab.pekar import (ChoquardParams, DielectricModel, FitUnreliable, choquard_solve, fit_epsilon,
                               fp_effective, pekar_energy, pekar_multiplier, solve_scalar_eps)
from polaron_lab.polaron import Profile, SingleState, dilated_density

SPEC1 = LatticeSpec(1, 0.5, 8, 16)
SPEC2 = LatticeSpec(2, 1.0, 6, 2)


def gaussian(spec, width):
    r = spec.distance_to((spec.L / 2,) * spec.d)
    return GridFunction(spec, np.exp(-0.5 * (r / width) ** 2), real=False)


def density(spec, width=1.5):
    return dilated_density(Profile("bump", width), 1.0, spec)


def test_dielectric_model_validation():
    with pytest.raises(ValueError):
        DielectricModel(1.0)
    with pytest.raises(ValueError):
        DielectricModel(np.array([[2.0, 1.0], [0.0, 2.0]]))
    with pytest.raises(ValueError):
        DielectricModel(np.diag([2.0, 0.5]))
    m = DielectricModel(np.diag([2.0, 3.0]))
    assert not m.is_scalar and DielectricModel(2.0).is_scalar


def test_fp_vanishes_without_screening():
    assert fp_effective(density(SPEC1), 1.0) == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.floats(1.01, 50.0), st.floats(1.01, 2.0))
def test_fp_decreases_with_eps(eps, factor):
    rho = density(SPEC1)
    assert fp_effective(rho, eps * factor) < fp_effective(rho, eps) < 0


def test_isotropic_matrix_matches_scalar():
    rho = density(SPEC2, 0.8)
    assert fp_effective(rho, 3.0 * np.eye(2)) == pytest.approx(fp_effective(rho, 3.0), rel=1e-13)
    aniso = fp_effective(rho, np.diag([2.0, 4.0]))
    assert fp_effective(rho, 4.0) < aniso < fp_effective(rho, 2.0)


def test_screened_multiplier_for_other_kernels():
    w = CoulombKernel(SPEC1, "yukawa", 1.0)
    np.testing.assert_allclose(pekar_multiplier(SPEC1, 4.0, w), -0.75 * w.symbol)
    with pytest.raises(ValueError):
        pekar_multiplier(SPEC2, np.diag([2.0, 3.0]), CoulombKernel(SPEC2, "yukawa", 1.0))


@settings(max_examples=20, deadline=None)
@given(st.floats(1.05, 100.0))
def test_scalar_eps_round_trip(eps):
    rho = density(SPEC1)
    assert solve_scalar_eps(rho, fp_effective(rho, eps)) == pytest.approx(eps, rel=1e-9)


def test_scalar_eps_rejects_unattainable_targets():
    rho = density(SPEC1)
    with pytest.raises(FitUnreliable):
        solve_scalar_eps(rho, 1.0)


def test_fit_epsilon_recovers_synthetic_constant():
    prof = Profile("bump", 1.0)
    lams = [1.0, 2.0, 3.0]
    rhos = [dilated_density(prof, l, SPEC1) for l in lams]
    F = [fp_effective(r, 3.0) for r in rhos]
    fit = fit_epsilon(lams, F, rhos[0], rho_lams=rhos)
    np.testing.assert_allclose(fit.eps_per_lambda, 3.0, rtol=1e-9)
    assert {"lam", "F", "lam_F", "eps_lam"} <= set(fit.table[0])


def test_fit_epsilon_rejects_bad_data():
    rho = density(SPEC1)
    with pytest.raises(FitUnreliable) as info:
        fit_epsilon([1.0, 2.0], [-1.0, 0.5], rho)
    assert len(info.value.table) == 2
    with pytest.raises(FitUnreliable):
        fit_epsilon([1.0, 2.0], [-1.0, -2.0], rho)
    with pytest.raises(FitUnreliable):
        fit_epsilon([2.0, 1.0], [-1.0, -0.5], rho)


def test_choquard_descent():
    r = choquard_solve(3.0, 1.0, SPEC1)
    assert np.all(np.diff(r.trace) <= 1e-14)
    assert r.residual <= ChoquardParams().tol
    trial = SingleState.normalized(gaussian(SPEC1, SPEC1.L / 8))
    assert r.energy <= pekar_energy(trial, 3.0) + 1e-14
    assert r.state.psi.norm() == pytest.approx(1.0, abs=1e-12)
    # restart from a shifted minimizer
    shifted = SingleState(GridFunction(SPEC1, np.roll(r.state.psi.values, 7), real=False))
    again = choquard_solve(3.0, 1.0, SPEC1, psi0=shifted)
    assert again.energy == pytest.approx(r.energy, abs=1e-9)


def test_choquard_weak_screening_does_not_bind():
    # on a finite torus the delocalized state wins for eps close to 1
    assert abs(choquard_solve(1.01, 1.0, SPEC1).energy) <= 1e-10
    assert choquard_solve(5.0, 1.0, SPEC1).energy < choquard_solve(2.0, 1.0, SPEC1).energy < 0


def test_choquard_divergence_is_reported():
    from polaron_lab.pekar import ChoquardDiverged

    with pytest.raises(ChoquardDiverged) as info:
        choquard_solve(3.0, 1.0, SPEC1, ChoquardParams(max_iter=2, tol=1e-14))
    assert len(info.value.trace) >= 2
