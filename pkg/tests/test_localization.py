import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from polaron_lab.coulomb import CoulombKernel
from polaron_lab.grid import LatticeSpec
from polaron_lab.localization import (LocalizationOps, PreconditionError, adding_lemma_check, build_pair,
                                      fit_slope, ims_defect, localization_error_report, localize, ramp)
from polaron_lab.response import minimize_fcrys

from oracles import random_feasible
from test_response import bump


@settings(max_examples=50, deadline=None)
@given(arrays(float, 20, elements=st.floats(0, 50)), st.floats(0.1, 10))
def test_ramp_is_a_partition(r, R):
    chi, eta = ramp(r, R)
    np.testing.assert_allclose(chi**2 + eta**2, 1.0, atol=1e-14)
    assert np.all(chi[r <= R] == 1.0) and np.all(np.abs(chi[r >= 2 * R]) <= 1e-15)


def test_pair_geometry():
    spec = LatticeSpec(1, 0.5, 16, 16)
    pair = build_pair(1.0, spec.L / 2, spec)
    grad = np.abs(np.gradient(pair.chi.values, spec.h))
    assert grad.max() <= pair.grad_bound * 1.01
    with pytest.raises(ValueError):
        build_pair(spec.L / 4, 0.0, spec)
    with pytest.raises(ValueError):
        build_pair(0.0, 0.0, spec)


def test_operator_invariants(small_crystal):
    c = small_crystal
    ops = LocalizationOps.build(build_pair(0.3, c.spec.L / 2, c.spec), c.gamma0)
    inv = ops.invariants(c.gamma0)
    assert inv["commutator"] <= 1e-12
    assert inv["max_eig_X2_Y2"] <= 1 + 1e-12
    assert inv["norm_X"] <= 1 + 1e-12 and inv["norm_Y"] <= 1 + 1e-12


def test_localized_minimizer_stays_admissible(small_crystal):
    c = small_crystal
    r = minimize_fcrys(bump(c.spec, c.spec.L / 2, 0.2), c, CoulombKernel(c.spec))
    ops = LocalizationOps.build(build_pair(0.3, c.spec.L / 2, c.spec), c.gamma0)
    assert localize(r.minimizer, ops.X).is_feasible()
    assert localize(r.minimizer, ops.Y).is_feasible()


def _random_instance(rng, n=16):
    A = rng.standard_normal((n, n))
    _, U = np.linalg.eigh(A + A.T)
    k = rng.integers(1, n)
    Pi = U[:, :k] @ U[:, :k].T
    B = rng.standard_normal((n, n))
    B = 0.5 * (B + B.T)
    ev, V = np.linalg.eigh(B)
    s = rng.uniform(0, 1, n)
    chi = (V * (np.cos(0.5 * np.pi * s))) @ V.T
    eta = (V * (np.sin(0.5 * np.pi * s) * rng.uniform(0.5, 1, n))) @ V.T
    return Pi, chi, eta, random_feasible(Pi, rng), random_feasible(Pi, rng)


def test_adding_lemma_random_instances():
    rng = np.random.default_rng(11)
    assert all(adding_lemma_check(*_random_instance(rng)) for _ in range(100))


def test_adding_lemma_rejects_violated_hypotheses():
    rng = np.random.default_rng(2)
    Pi, chi, eta, Q, Qp = _random_instance(rng)
    with pytest.raises(PreconditionError, match="projector"):
        adding_lemma_check(0.5 * Pi, chi, eta, Q, Qp)
    with pytest.raises(PreconditionError, match="exceeds"):
        adding_lemma_check(Pi, 2 * chi + np.eye(16), eta, Q, Qp)
    with pytest.raises(PreconditionError, match="violates"):
        adding_lemma_check(Pi, chi, eta, Q + 2 * np.eye(16), Qp)


def test_fit_slope_exact_on_power_laws():
    R = np.array([1.0, 2.0, 4.0, 8.0])
    assert fit_slope(R, 3 * R**-2) == pytest.approx(-2.0)
    assert np.isnan(fit_slope(R, np.zeros(4)))


def test_error_report_validation(small_crystal):
    c = small_crystal
    from polaron_lab.response import Perturbation

    Q = Perturbation.zero(c)
    with pytest.raises(ValueError):
        localization_error_report(Q, c, [0.1, 0.2])
    with pytest.raises(ValueError):
        localization_error_report(Q, c, [0.2, 0.1, 0.3])


def test_error_report_columns(small_crystal):
    c = small_crystal
    r = minimize_fcrys(bump(c.spec, c.spec.L / 2, 0.15), c, CoulombKernel(c.spec))
    rep = localization_error_report(r.minimizer, c, [0.1, 0.2, 0.4])
    assert [row["R"] for row in rep["rows"]] == [0.1, 0.2, 0.4]
    for row in rep["rows"]:
        assert row["feasible_X"] and row["feasible_Y"]
        assert row["e_rho"] >= 0 and row["e_kin"] >= 0
    assert np.isfinite(rep["slope_e_rho"])


def test_ims_defect_shrinks_under_refinement_on_a_fixed_band():
    band, full = [], []
    for n_c in (8, 16, 32):
        spec = LatticeSpec(1, 1.0, n_c, 8)
        pair = build_pair(0.5, spec.L / 2, spec)
        band.append(ims_defect(pair.chi, pair.eta, spec, k_cut=4 * np.pi))
        full.append(ims_defect(pair.chi, pair.eta, spec))
    assert band[0] > band[1] > band[2]
    # aliasing at the Nyquist modes makes the full-grid norm grow with n
    assert full[2] > full[0]


def test_ims_defect_vanishes_for_trivial_pair():
    from polaron_lab.grid import GridFunction

    spec = LatticeSpec(1, 1.0, 8, 4)
    one, zero = GridFunction(spec, np.ones(spec.n_pts)), GridFunction.zeros(spec)
    assert ims_defect(one, zero, spec) <= 1e-10
