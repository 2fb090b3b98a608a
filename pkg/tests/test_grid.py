import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from polaron_lab.grid import (GridError, GridFunction, LatticeSpec, fourier, fourier_matrix, gradient_norm_sq,
                              inverse_fourier, k_squared, laplacian_apply, load_grid_function,
                              multiplier_matrix, periodize, save_grid_function, translate)

SPEC = LatticeSpec(1, 0.5, 8, 4)
finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@pytest.mark.parametrize("kw", [dict(d=4), dict(a=0.0), dict(n_c=5), dict(n_c=2), dict(M=0)])
def test_lattice_spec_rejects_bad_input(kw):
    with pytest.raises(GridError):
        LatticeSpec(**kw)


def test_lattice_geometry():
    s = LatticeSpec(2, 0.5, 8, 3)
    assert s.n == 24 and s.shape == (24, 24) and s.n_pts == 576
    assert s.L == pytest.approx(1.5) and s.h == pytest.approx(0.0625)
    assert s.cell().M == 1 and s.with_M(5).L == pytest.approx(2.5)


def test_distance_uses_minimum_image():
    r = SPEC.distance_to(0.0)
    assert r.max() <= SPEC.L / 2 + 1e-12
    assert r[-1] == pytest.approx(SPEC.h)


def test_real_tag_rejects_imaginary_part():
    with pytest.raises(GridError):
        GridFunction(SPEC, np.full(SPEC.n_pts, 1j))
    with pytest.raises(GridError):
        GridFunction(SPEC, np.zeros(3))


def test_grid_function_is_immutable():
    f = GridFunction.zeros(SPEC)
    with pytest.raises(ValueError):
        f.values[0] = 1.0


@settings(max_examples=30, deadline=None)
@given(arrays(float, SPEC.n_pts, elements=finite), arrays(float, SPEC.n_pts, elements=finite))
def test_fourier_round_trip_and_parseval(re, im):
    f = GridFunction(SPEC, re + 1j * im, real=False)
    back = inverse_fourier(fourier(f))
    np.testing.assert_allclose(back.values, f.values, atol=1e-12)
    fh = fourier(f).values
    assert np.sum(np.abs(fh) ** 2) / SPEC.volume == pytest.approx(f.norm() ** 2, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("mode", [1, 3, 7])
def test_laplacian_of_plane_wave_is_exact(mode):
    k = 2 * np.pi * mode / SPEC.L
    f = GridFunction.from_callable(SPEC, lambda x: np.cos(k * x))
    np.testing.assert_allclose(laplacian_apply(f).values, k * k * f.values, atol=1e-10)


def test_gradient_norm_of_sine():
    k = 2 * np.pi * 2 / SPEC.L
    f = GridFunction.from_callable(SPEC, lambda x: np.sin(k * x))
    assert gradient_norm_sq(f) == pytest.approx(k * k * SPEC.L / 2, rel=1e-12)


def test_nyquist_mode_carries_its_magnitude():
    k2 = k_squared(SPEC)
    assert k2.max() == pytest.approx((np.pi / SPEC.h) ** 2)


@settings(max_examples=25, deadline=None)
@given(arrays(float, SPEC.n_pts, elements=finite), st.integers(-6, 6), st.integers(-6, 6))
def test_translation_is_isometric_and_additive(v, i, j):
    f = GridFunction(SPEC, v)
    a = SPEC.a
    tf = translate(f, i * a)
    assert tf.norm() == pytest.approx(f.norm(), rel=1e-14, abs=1e-14)
    np.testing.assert_array_equal(translate(tf, j * a).values, translate(f, (i + j) * a).values)
    np.testing.assert_array_equal(translate(tf, -i * a).values, f.values)


def test_translation_rejects_non_lattice_vectors():
    f = GridFunction.zeros(SPEC)
    with pytest.raises(GridError):
        translate(f, 0.3 * SPEC.a)
    with pytest.raises(GridError):
        translate(f, 0.3 * SPEC.h, lattice_only=False)
    translate(f, 3 * SPEC.h, lattice_only=False)


def test_bump_shifted_by_one_cell_is_permuted():
    v = np.zeros(SPEC.n_pts)
    v[3] = 1.0
    out = translate(GridFunction(SPEC, v), SPEC.a).values
    assert out[3 + SPEC.n_c] == 1.0 and out.sum() == 1.0


def test_periodize_tiles_cell():
    cell = np.arange(SPEC.n_c, dtype=float)
    tiled = periodize(cell, SPEC)
    np.testing.assert_array_equal(tiled[SPEC.n_c:2 * SPEC.n_c], cell)


def test_fourier_matrix_is_unitary_and_matches_fft():
    s = LatticeSpec(2, 1.0, 4, 2)
    F = fourier_matrix(s)
    np.testing.assert_allclose(F @ F.conj().T, np.eye(s.n_pts), atol=1e-12)
    rng = np.random.default_rng(0)
    x = rng.standard_normal(s.n_pts)
    np.testing.assert_allclose(F @ x, np.fft.fftn(x.reshape(s.shape), norm="ortho").reshape(-1), atol=1e-12)
    sym = k_squared(s)
    via_fft = np.fft.ifftn(sym * np.fft.fftn(x.reshape(s.shape))).reshape(-1)
    np.testing.assert_allclose(multiplier_matrix(s, sym) @ x, via_fft, atol=1e-10)


@pytest.mark.parametrize("real", [True, False])
def test_binary_sidecar_round_trip(tmp_path, real):
    rng = np.random.default_rng(1)
    s = LatticeSpec(2, 1.0, 4, 2)
    v = rng.standard_normal(s.n_pts) + (0 if real else 1j * rng.standard_normal(s.n_pts))
    f = GridFunction(s, v, real)
    save_grid_function(f, tmp_path / "f.bin")
    g = load_grid_function(tmp_path / "f.bin")
    assert g.spec == s and g.real == real
    np.testing.assert_array_equal(g.values, f.values)
    meta = json.loads((tmp_path / "f.bin.json").read_text())
    assert meta["tag"] == ("real" if real else "complex")


def test_sidecar_version_is_checked(tmp_path):
    save_grid_function(GridFunction.zeros(SPEC), tmp_path / "f.bin")
    meta = json.loads((tmp_path / "f.bin.json").read_text())
    meta["version"] = 99
    (tmp_path / "f.bin.json").write_text(json.dumps(meta))
    with pytest.raises(GridError):
        load_grid_function(tmp_path / "f.bin")
