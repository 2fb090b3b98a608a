import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from polaron_lab.coulomb import CoulombKernel, coulomb_norm, d_pair, potential_of
from polaron_lab.grid import GridError, GridFunction, LatticeSpec

from oracles import torus_coulomb_matrix

SPEC = LatticeSpec(1, 0.5, 8, 4)
vals = arrays(float, SPEC.n_pts, elements=st.floats(-5, 5, allow_nan=False))


def test_cosine_density_matches_closed_form():
    # rho = cos(kx): D = (1/L) * 2 * (4 pi / k^2) * (L/2)^2
    k = 2 * np.pi * 3 / SPEC.L
    rho = GridFunction.from_callable(SPEC, lambda x: np.cos(k * x))
    assert d_pair(rho, rho, CoulombKernel(SPEC)) == pytest.approx(2 * np.pi * SPEC.L / k**2, rel=1e-12)


def test_constant_density_is_neutralized_by_background():
    one = GridFunction(SPEC, np.ones(SPEC.n_pts))
    assert d_pair(one, one, CoulombKernel(SPEC)) == pytest.approx(0.0, abs=1e-12)
    mu = 1.3
    assert d_pair(one, one, CoulombKernel(SPEC, "yukawa", mu)) == pytest.approx(4 * np.pi * SPEC.L / mu**2)


def test_matches_mode_sum_oracle():
    rng = np.random.default_rng(3)
    f, g = rng.standard_normal(SPEC.n_pts), rng.standard_normal(SPEC.n_pts)
    W = torus_coulomb_matrix(SPEC.n, SPEC.L)
    expect = SPEC.h**2 * f @ W @ g
    got = d_pair(GridFunction(SPEC, f), GridFunction(SPEC, g), CoulombKernel(SPEC))
    assert got == pytest.approx(expect, rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(vals, vals, st.sampled_from(["bare", "yukawa"]))
def test_symmetric_and_positive(f, g, mode):
    w = CoulombKernel(SPEC, mode, 0.7 if mode == "yukawa" else 0.0)
    F, G = GridFunction(SPEC, f), GridFunction(SPEC, g)
    assert d_pair(F, G, w) == pytest.approx(d_pair(G, F, w), rel=1e-10, abs=1e-10)
    assert d_pair(F, F, w) >= -1e-10
    # Cauchy-Schwarz in the Coulomb norm
    assert abs(d_pair(F, G, w)) <= coulomb_norm(F, w) * coulomb_norm(G, w) * (1 + 1e-10) + 1e-10


@settings(max_examples=20, deadline=None)
@given(vals, vals)
def test_potential_represents_the_form(f, g):
    w = CoulombKernel(SPEC)
    F, G = GridFunction(SPEC, f), GridFunction(SPEC, g)
    assert potential_of(F, w).inner(G) == pytest.approx(d_pair(F, G, w), rel=1e-9, abs=1e-9)


def test_real_space_kernel_transforms_back():
    w = CoulombKernel(SPEC)
    W = w.real_space()
    np.testing.assert_allclose(np.fft.fftn(W) * SPEC.weight, w.symbol, atol=1e-9)
    # bare torus kernel in 1D: W(0) - W(L/2) = 2 pi L / 4 (quadratic potential with background)
    assert W[0] - W[SPEC.n // 2] == pytest.approx(np.pi * SPEC.L / 2, rel=3e-2)


def test_kernel_validation():
    with pytest.raises(GridError):
        CoulombKernel(SPEC, "yukawa", 0.0)
    with pytest.raises(GridError):
        CoulombKernel(SPEC, "debye")
    other = GridFunction.zeros(LatticeSpec(1, 0.5, 8, 2))
    with pytest.raises(GridError):
        d_pair(other, other, CoulombKernel(SPEC))
