"""Periodic reduced Hartree-Fock crystal: SCF, Bloch bands, insulator check, polaron band."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .coulomb import CoulombKernel, d_pair_values, potential_values
from .grid import GridFunction, LatticeSpec, fourier_matrix, periodize

log = logging.getLogger(__name__)



class InsulatorViolation(RuntimeError):
    """No gap between the Z-th and (Z+1)-st bands."""

    def __init__(self, msg, band_edges=None):
        super().__init__(msg)
        self.band_edges = band_edges


class SCFDiverged(RuntimeError):
    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace or []


@dataclass(frozen=True)
class GaussianSite:
    center: tuple
    width: float
    charge: float


@dataclass(frozen=True)
class NuclearDensity:
    sites: tuple
    Z: int

    def __post_init__(self):
        total = sum(s.charge for s in self.sites)
        if self.sites and abs(total - self.Z) > 1e-12:
            raise ValueError(f"site charges sum to {total}, expected Z={self.Z}")
        if self.Z < 1:
            raise ValueError("Z must be a positive integer")

    @classmethod
    def uniform(cls, Z: int) -> "NuclearDensity":
        return cls((), Z)

    def on_cell(self, spec: LatticeSpec) -> np.ndarray:
        """Periodized density on the unit cell, renormalized to integrate to Z."""
        cell = spec.cell()
        if not self.sites:
            return np.full(cell.shape, self.Z / spec.a**spec.d)
        mu = np.zeros(cell.shape)
        coords = cell.coords()
        for s in self.sites:
            c = np.broadcast_to(np.asarray(s.center, dtype=float), (spec.d,))
            g = np.ones(cell.shape)
            for x, cx in zip(coords, c):
                # sum a few periodic images per axis
                g1 = sum(np.exp(-((x - cx + j * spec.a) ** 2) / (2 * s.width**2)) for j in range(-3, 4))
                g = g * g1
            mu += s.charge * g
        mu *= self.Z / (mu.sum() * cell.weight)
        return mu

    def to_dict(self) -> dict:
        return {
            "Z": self.Z,
            "sites": [{"center": list(np.atleast_1d(s.center).astype(float)), "width": s.width,
                       "charge": s.charge} for s in self.sites],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NuclearDensity":
        sites = tuple(GaussianSite(tuple(s["center"]), float(s["width"]), float(s["charge"]))
                      for s in data.get("sites", []))
        return cls(sites, int(data["Z"]))


@dataclass(frozen=True)
class SCFParams:
    alpha: float = 0.5
    max_iter: int = 300
    tol: float = 1e-9
    gap_tol: float = 1e-6


def bloch_indices(spec: LatticeSpec) -> list[tuple[int, ...]]:
    """Supercell-commensurate Bloch indices j (k = 2 pi j / L) in the symmetric range."""
    js = [int(j) for j in np.fft.fftfreq(spec.M, 1.0 / spec.M)]
    return list(itertools.product(js, repeat=spec.d))


def fiber_kinetic(spec: LatticeSpec, j: tuple, mass: float) -> np.ndarray:
    """Symbol of -(grad + i k)^2 / (2 mass) on the unit-cell Fourier modes.

    Each cell mode g is labelled by the supercell mode m = j + M g reduced to the
    supercell's symmetric range, so the fibers tile the supercell spectrum exactly.
    """
    N = spec.n
    g_int = np.fft.fftfreq(spec.n_c, 1.0 / spec.n_c).astype(int)
    comps = []
    for ja in j:
        m = ja + spec.M * g_int
        m = (m + N // 2) % N - N // 2
        comps.append((2 * np.pi * m / spec.L) ** 2)
    grids = np.meshgrid(*comps, indexing="ij")
    return sum(grids) / (2 * mass)


def fiber_hamiltonian(spec: LatticeSpec, v_cell: np.ndarray, j: tuple, mass: float,
                      F: np.ndarray | None = None) -> np.ndarray:
    cell = spec.cell()
    if F is None:
        F = fourier_matrix(cell)
    T = (F.conj().T * fiber_kinetic(spec, j, mass).reshape(-1)) @ F
    return T + np.diag(np.asarray(v_cell, dtype=float).reshape(-1))


def band_structure(v_cell: np.ndarray, spec: LatticeSpec, mass: float = 1.0,
                   k_points=None, return_vectors: bool = False):
    """Sorted fiber eigenvalues per Bloch index; bands[i] belongs to k_points[i]."""
    if k_points is None:
        k_points = bloch_indices(spec)
    F = fourier_matrix(spec.cell())
    bands, vecs = [], []
    for j in k_points:
        e, u = np.linalg.eigh(fiber_hamiltonian(spec, v_cell, j, mass, F))
        bands.append(e)
        vecs.append(u)
    bands = np.array(bands)
    if return_vectors:
        return bands, vecs
    return bands


def insulator_check(bands: np.ndarray, Z: int, gap_tol: float = 1e-6) -> tuple[float, float]:
    """Return ``(gap, eps_F)`` with eps_F at midgap; raise on a closed gap."""
    top = float(np.max(bands[:, Z - 1]))
    bottom = float(np.min(bands[:, Z]))
    gap = bottom - top
    if gap <= gap_tol:
        raise InsulatorViolation(f"gap {gap:.3e} between bands {Z} and {Z + 1} is not open",
                                 band_edges={"band_Z_max": top, "band_Z1_min": bottom})
    return gap, 0.5 * (top + bottom)


def polaron_band(v_cell: np.ndarray, spec: LatticeSpec, m: float):
    """Bottom of the lowest band for mass ``m`` and its Bloch function on the unit cell.

    Returns ``(E_per, u_per, j_min)``; ``u_per`` is normalized so that
    ``int_cell |u_per|^2 = 1``.
    """
    ks = bloch_indices(spec)
    bands, vecs = band_structure(v_cell, spec, m, ks, return_vectors=True)
    i = int(np.argmin(bands[:, 0]))
    u = vecs[i][:, 0]
    # fix the global phase so the largest component is real positive
    u = u * np.exp(-1j * np.angle(u[np.argmax(np.abs(u))]))
    cell = spec.cell()
    u_vals = u.reshape(cell.shape) / np.sqrt(cell.weight)
    real = all(x == 0 for x in ks[i])
    return float(bands[i, 0]), GridFunction(cell, u_vals.real if real else u_vals, real), ks[i]


def _occupied_state(spec, v_cell, Z, gap_tol, F):
    """Occupy the lowest Z bands at every Bloch index."""
    ks = bloch_indices(spec)
    cell = spec.cell()
    Mtot = len(ks)
    rho = np.zeros(cell.n_pts)
    kin = 0.0
    projs = []
    bands = []
    for j in ks:
        T = (F.conj().T * fiber_kinetic(spec, j, 1.0).reshape(-1)) @ F
        e, u = np.linalg.eigh(T + np.diag(v_cell.reshape(-1)))
        bands.append(e)
        occ = u[:, :Z]
        rho += np.sum(np.abs(occ) ** 2, axis=1)
        kin += np.real(np.einsum("in,ij,jn->", occ.conj(), T, occ))
        projs.append(occ @ occ.conj().T)
    bands = np.array(bands)
    gap, eps_f = insulator_check(bands, Z, gap_tol)
    rho = rho.reshape(cell.shape) / (Mtot * cell.weight)
    return rho, kin / Mtot, projs, bands, gap, eps_f


@dataclass(eq=False)
class CrystalState:
    spec: LatticeSpec
    Z: int
    m: float
    v_cell: np.ndarray
    rho_cell: np.ndarray
    mu_cell: np.ndarray
    eps_F: float
    gap: float
    bands: np.ndarray
    E_per: float
    u_per: GridFunction
    E_per_k: tuple
    scf_residual: float
    energy_trace: list
    H0: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray
    gamma0: np.ndarray = field(repr=False)
    nuclei: dict = field(default_factory=dict)

    @property
    def n_occ(self) -> int:
        return self.Z * self.spec.M**self.spec.d

    @property
    def v_super(self) -> np.ndarray:
        return periodize(self.v_cell, self.spec)

    def V0(self) -> GridFunction:
        return GridFunction(self.spec, self.v_super)

    def rho0(self) -> GridFunction:
        return GridFunction(self.spec, periodize(self.rho_cell, self.spec))

    def polaron_hamiltonian(self, m: float | None = None) -> np.ndarray:
        """Dense ``-Laplacian/(2m) + V0`` on the supercell (orthonormal basis)."""
        m = self.m if m is None else m
        return kinetic_matrix(self.spec, m) + np.diag(self.v_super.reshape(-1))

    def u_per_super(self) -> GridFunction:
        """u_per tiled on the supercell and normalized there."""
        vals = periodize(self.u_per.values, self.spec) / np.sqrt(self.spec.M**self.spec.d)
        return GridFunction(self.spec, vals, self.u_per.real)

    def summary(self) -> dict:
        return {
            "spec": self.spec.to_dict(), "Z": self.Z, "m": self.m, "eps_F": self.eps_F,
            "gap": self.gap, "E_per": self.E_per, "E_per_k": list(self.E_per_k),
            "scf_residual": self.scf_residual,
            "band_Z_max": float(np.max(self.bands[:, self.Z - 1])),
            "band_Z1_min": float(np.min(self.bands[:, self.Z])),
        }


def kinetic_matrix(spec: LatticeSpec, mass: float = 1.0) -> np.ndarray:
    from .grid import k_squared, multiplier_matrix

    # .real is a strided view; a contiguous copy keeps matmul on BLAS
    return np.ascontiguousarray(multiplier_matrix(spec, k_squared(spec) / (2 * mass)).real)


def scf_solve(nuclei: NuclearDensity, spec: LatticeSpec, params: SCFParams = SCFParams(),
              m: float = 1.0) -> CrystalState:
    """Damped density mixing for the periodic rHF equations on the unit cell.

    The crystal electrons have mass 1.  The mixed iterate is a convex combination
    of projectors, so its energy is well defined; the mixing weight is halved
    whenever the energy would increase.
    """
    cell = spec.cell()
    kern = CoulombKernel(cell)
    F = fourier_matrix(cell)
    mu = nuclei.on_cell(spec)

    def energy(rho, kin):
        return kin + 0.5 * d_pair_values(rho - mu, rho - mu, kern)

    # start from the bare nuclear attraction
    rho = np.zeros(cell.shape)
    v = potential_values(rho - mu, kern)
    rho, kin, _, _, _, _ = _occupied_state(spec, v, nuclei.Z, params.gap_tol, F)
    e_cur = energy(rho, kin)
    trace = [e_cur]
    alpha = params.alpha
    converged = False
    for it in range(params.max_iter):
        v = potential_values(rho - mu, kern)
        rho_o, kin_o, _, _, _, _ = _occupied_state(spec, v, nuclei.Z, params.gap_tol, F)
        res = float(np.sqrt(np.sum((rho_o - rho) ** 2) * cell.weight))
        if res <= params.tol:
            rho, kin = rho_o, kin_o
            converged = True
            break
        while True:
            rho_t = (1 - alpha) * rho + alpha * rho_o
            kin_t = (1 - alpha) * kin + alpha * kin_o
            e_t = energy(rho_t, kin_t)
            if e_t <= e_cur + 1e-13 * max(1.0, abs(e_cur)) or alpha < 1e-6:
                break
            alpha *= 0.5
            log.debug("scf: energy increase, alpha -> %g", alpha)
        rho, kin, e_cur = rho_t, kin_t, e_t
        trace.append(e_cur)
    if not converged:
        raise SCFDiverged(f"SCF did not converge in {params.max_iter} iterations", trace)
    trace.append(energy(rho, kin))

    # gamma_out = 1(H[rho]); H0 is built from its density and the fixed-point
    # residual compares gamma_out with the spectral projector of H0
    v_in = potential_values(rho - mu, kern)
    rho_f, _, projs_out, _, _, _ = _occupied_state(spec, v_in, nuclei.Z, params.gap_tol, F)
    v0 = potential_values(rho_f - mu, kern)
    _, _, projs_h0, _, _, _ = _occupied_state(spec, v0, nuclei.Z, params.gap_tol, F)
    return build_crystal(spec, nuclei.Z, v0, rho_f, mu, m, params.gap_tol, trace,
                         nuclei=nuclei.to_dict(), residual_data=(projs_out, projs_h0))


def build_crystal(spec, Z, v0, rho, mu, m, gap_tol=1e-6, trace=None, nuclei=None,
                  residual_data=None, residual: float = 0.0) -> CrystalState:
    """Assemble a CrystalState from a converged unit-cell potential."""
    v0 = np.asarray(v0, dtype=float).reshape(spec.cell().shape)
    bands = band_structure(v0, spec, 1.0)
    gap, eps_f = insulator_check(bands, Z, gap_tol)
    H0 = kinetic_matrix(spec, 1.0) + np.diag(periodize(v0, spec).reshape(-1))
    w, U = np.linalg.eigh(H0)
    n_occ = int(np.sum(w < eps_f))
    if n_occ != Z * spec.M**spec.d:
        raise InsulatorViolation(f"{n_occ} supercell levels below eps_F, expected {Z * spec.M ** spec.d}")
    occ = U[:, :n_occ]
    gamma0 = occ @ occ.T
    if residual_data is not None:
        a, b = residual_data
        residual = float(np.sqrt(sum(np.linalg.norm(x - y) ** 2 for x, y in zip(a, b))))
    E_per, u_per, kmin = polaron_band(v0, spec, m)
    return CrystalState(spec=spec, Z=Z, m=m, v_cell=v0, rho_cell=np.asarray(rho).reshape(v0.shape),
                        mu_cell=np.asarray(mu).reshape(v0.shape), eps_F=eps_f, gap=gap, bands=bands,
                        E_per=E_per, u_per=u_per, E_per_k=kmin, scf_residual=residual,
                        energy_trace=list(trace or []), H0=H0, eigvals=w, eigvecs=U, gamma0=gamma0,
                        nuclei=nuclei or {})


def crystal_from_hamiltonian(spec: LatticeSpec, H0: np.ndarray, n_occ: int, m: float = 1.0) -> CrystalState:
    """Wrap a hand-built supercell Hamiltonian (toy models, tests) as a CrystalState.

    Bands are the supercell eigenvalues at a single Bloch point; E_per and u_per
    come from the same matrix.
    """
    H0 = np.asarray(H0, dtype=float)
    w, U = np.linalg.eigh(H0)
    if n_occ < 1 or n_occ >= len(w) or w[n_occ] - w[n_occ - 1] <= 0:
        raise InsulatorViolation("toy Hamiltonian has no gap at the requested filling")
    eps_f = 0.5 * (w[n_occ - 1] + w[n_occ])
    occ = U[:, :n_occ]
    u0 = U[:, 0] * np.sign(U[np.argmax(np.abs(U[:, 0])), 0])
    dummy = np.zeros(spec.cell().shape)
    return CrystalState(spec=spec, Z=n_occ // spec.M**spec.d, m=m, v_cell=dummy,
                        rho_cell=dummy, mu_cell=dummy, eps_F=float(eps_f), gap=float(w[n_occ] - w[n_occ - 1]),
                        bands=w[None, :], E_per=float(w[0]),
                        u_per=GridFunction(spec, u0 / np.sqrt(spec.weight)), E_per_k=(0,) * spec.d,
                        scf_residual=0.0, energy_trace=[], H0=H0, eigvals=w, eigvecs=U,
                        gamma0=occ @ occ.T)
