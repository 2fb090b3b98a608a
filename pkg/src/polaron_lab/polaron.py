"""Single- and few-polaron ground states, trial states and binding reports."""
from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigsh

from .coulomb import CoulombKernel, d_pair_values, potential_values
from .crystal import CrystalState
from .grid import GridError, GridFunction, LatticeSpec, gradient_norm_sq, k_squared, lattice_shift, laplacian_apply
from .localization import ramp
from .response import Perturbation, ResponseParams, ResponseResult, minimize_fcrys

log = logging.getLogger(__name__)

NORM_TOL = 1e-10
SYMMETRY_TOL = 1e-10


class PolaronDiverged(RuntimeError):
    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace or []


class MemoryBudgetExceeded(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SingleState:
    psi: GridFunction
    m: float = 1.0

    def __post_init__(self):
        nrm = self.psi.norm()
        if abs(nrm - 1) > NORM_TOL:
            raise ValueError(f"single-particle state not normalized (norm {nrm:.12f})")

    @classmethod
    def normalized(cls, psi: GridFunction, m: float = 1.0) -> "SingleState":
        nrm = psi.norm()
        if nrm == 0:
            raise ValueError("cannot normalize the zero function")
        return cls(GridFunction(psi.spec, psi.values / nrm, real=False), m)

    @property
    def spec(self) -> LatticeSpec:
        return self.psi.spec

    def density(self) -> GridFunction:
        return self.psi.abs2()


def _permutations(N: int):
    for perm in itertools.permutations(range(N)):
        inv = sum(1 for i in range(N) for j in range(i + 1, N) if perm[i] > perm[j])
        yield perm, (-1) ** inv


def symmetrize(T: np.ndarray, statistics: str = "fermion") -> np.ndarray:
    """Projection onto the antisymmetric (fermion) or symmetric (boson) subspace."""
    N = T.ndim
    out = np.zeros_like(T)
    for perm, sign in _permutations(N):
        out += (sign if statistics == "fermion" else 1) * np.transpose(T, perm)
    return out / math.factorial(N)


@dataclass(frozen=True, eq=False)
class ManyBodyState:
    """N-particle amplitude on (grid)^N in one dimension.

    ``values[i1, ..., iN]`` is the wavefunction at grid points ``x_i1, ..., x_iN``;
    normalization is ``sum |values|^2 h^N = 1``.
    """

    spec: LatticeSpec
    values: np.ndarray
    m: float = 1.0
    statistics: str = "fermion"

    def __post_init__(self):
        if self.spec.d != 1:
            raise ValueError("many-body states are restricted to d = 1")
        v = np.asarray(self.values)
        N = v.ndim
        if N < 1 or any(s != self.spec.n_pts for s in v.shape):
            raise ValueError(f"tensor shape {v.shape} does not match the grid")
        if self.statistics not in ("fermion", "boson"):
            raise ValueError(f"unknown statistics {self.statistics!r}")
        nrm = np.sqrt(np.sum(np.abs(v) ** 2) * self.spec.h**N)
        if abs(nrm - 1) > NORM_TOL:
            raise ValueError(f"many-body state not normalized (norm {nrm:.12f})")
        sign = -1 if self.statistics == "fermion" else 1
        scale = np.abs(v).max()
        for i, j in itertools.combinations(range(N), 2):
            err = np.abs(v - sign * np.swapaxes(v, i, j)).max()
            if err > SYMMETRY_TOL * max(scale, 1.0):
                raise ValueError(f"state is not {self.statistics}ic under exchange ({i},{j}): {err:.3e}")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def N(self) -> int:
        return self.values.ndim

    @classmethod
    def from_tensor(cls, spec: LatticeSpec, T: np.ndarray, m: float = 1.0, statistics: str = "fermion"
                    ) -> "ManyBodyState":
        """Symmetrize and normalize an arbitrary tensor."""
        S = symmetrize(np.asarray(T), statistics)
        nrm = np.sqrt(np.sum(np.abs(S) ** 2) * spec.h**S.ndim)
        if nrm == 0:
            raise ValueError(f"tensor has no {statistics}ic component")
        return cls(spec, S / nrm, m, statistics)

    @classmethod
    def slater(cls, orbitals: list[GridFunction], m: float = 1.0) -> "ManyBodyState":
        spec = orbitals[0].spec
        T = _outer([o.values.reshape(-1) for o in orbitals])
        return cls.from_tensor(spec, T, m)


def _outer(vectors) -> np.ndarray:
    T = np.asarray(vectors[0])
    for v in vectors[1:]:
        T = np.multiply.outer(T, v)
    return T


def density_many(state: ManyBodyState) -> GridFunction:
    """``rho(x) = N sum_{x2..xN} |Psi(x, x2, ...)|^2 h^(N-1)``."""
    N, h = state.N, state.spec.h
    p = np.abs(state.values) ** 2
    rho = N * p.reshape(p.shape[0], -1).sum(axis=1) * h ** (N - 1)
    return GridFunction(state.spec, rho)


# --- energies ---------------------------------------------------------------

def _hamiltonian_apply(psi: GridFunction, v: np.ndarray, m: float) -> GridFunction:
    return GridFunction(psi.spec, laplacian_apply(psi).values / (2 * m) + v * psi.values, real=False)


def _fcrys(nu: GridFunction, crystal: CrystalState, w: CoulombKernel, params: ResponseParams,
           Q0: Perturbation | None = None) -> ResponseResult:
    return minimize_fcrys(nu, crystal, w, replace(params, diagnostics=False), Q0)


def energy_single(psi: SingleState | GridFunction, crystal: CrystalState, w: CoulombKernel,
                  params: ResponseParams = ResponseParams(), m: float | None = None,
                  response: bool = True, return_response: bool = False):
    """``(2m)^-1 int |grad psi|^2 + int V0 |psi|^2 + F_crys[|psi|^2]``."""
    if isinstance(psi, SingleState):
        m = psi.m if m is None else m
        psi = psi.psi
    m = crystal.m if m is None else m
    rho = psi.abs2()
    base = gradient_norm_sq(psi) / (2 * m) + float(np.sum(crystal.v_super * rho.values) * psi.spec.weight)
    if not response:
        return (base, None) if return_response else base
    res = _fcrys(rho, crystal, w, params)
    return (base + res.value, res) if return_response else base + res.value


def energy_single_gradient(psi: SingleState, crystal: CrystalState, w: CoulombKernel,
                           params: ResponseParams = ResponseParams()) -> GridFunction:
    """L2 gradient ``2 (h + V_{rho_Q*}) psi``, so that ``dE[delta] = Re <delta, grad>``.

    The response contribution is the potential of the inner minimizer's density
    (envelope theorem; the minimizing density is unique).
    """
    res = _fcrys(psi.density(), crystal, w, params)
    v = crystal.v_super + potential_values(res.minimizer.rho_values, w)
    return 2 * _hamiltonian_apply(psi.psi, v, psi.m)


def _pair_kernel(spec: LatticeSpec, w: CoulombKernel) -> np.ndarray:
    """``W[i, j] = W(x_i - x_j)`` on the one-dimensional grid."""
    W = w.real_space().reshape(-1)
    n = spec.n_pts
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return W[idx]


def _axis_shape(N: int, axis: int, n: int) -> tuple:
    s = [1] * N
    s[axis] = n
    return tuple(s)


def _diag_potential(spec: LatticeSpec, N: int, v: np.ndarray, w: CoulombKernel | None) -> np.ndarray:
    """Sum of one-body potentials plus (optionally) pair interactions as an N-tensor."""
    n = spec.n_pts
    D = np.zeros((n,) * N)
    for i in range(N):
        D = D + v.reshape(_axis_shape(N, i, n))
    if w is not None and N > 1:
        Wm = _pair_kernel(spec, w)
        for i, j in itertools.combinations(range(N), 2):
            s = [1] * N
            s[i], s[j] = n, n
            D = D + Wm.reshape(s)
    return D


def _kinetic_apply(T: np.ndarray, spec: LatticeSpec, m: float) -> np.ndarray:
    k2 = k_squared(spec).reshape(-1) / (2 * m)
    out = np.zeros_like(T, dtype=float if np.isrealobj(T) else complex)
    for ax in range(T.ndim):
        f = np.fft.fft(T, axis=ax) * k2.reshape(_axis_shape(T.ndim, ax, len(k2)))
        g = np.fft.ifft(f, axis=ax)
        out = out + (g.real if np.isrealobj(T) else g)
    return out


def energy_many(state: ManyBodyState, crystal: CrystalState, w: CoulombKernel,
                params: ResponseParams = ResponseParams(), interaction: bool = True,
                response: bool = True, return_parts: bool = False):
    """Kinetic + pair interaction + ``int V0 rho`` + ``F_crys[rho]``.

    The pair interaction uses the real-space kernel whose Fourier symbol is the
    one used for every other Coulomb term.
    """
    spec, N = state.spec, state.N
    T = state.values
    hN = spec.h**N
    p = np.abs(T) ** 2
    kin = float(np.real(np.sum(np.conj(T) * _kinetic_apply(T, spec, state.m))) * hN)
    inter = 0.0
    if interaction and N > 1:
        inter = float(np.sum(p * _diag_potential(spec, N, np.zeros(spec.n_pts), w)) * hN)
    rho = density_many(state)
    ext = float(np.sum(crystal.v_super.reshape(-1) * rho.flat()) * spec.h)
    fc = _fcrys(rho, crystal, w, params).value if response else 0.0
    parts = {"kinetic": kin, "interaction": inter, "external": ext, "response": fc}
    total = kin + inter + ext + fc
    return (total, parts) if return_parts else total


# --- solvers ---------------------------------------------------------------

@dataclass(frozen=True)
class PolaronParams:
    outer_tol: float = 1e-9
    max_outer: int = 200
    init: str = "uper_bump"
    init_width: float | None = None
    residual_tol: float = 1e-6
    response: ResponseParams = field(default_factory=ResponseParams)
    seed: int = 0
    memory_budget: float = 2e9


@dataclass(eq=False)
class PolaronResult:
    energy: float
    state: SingleState | ManyBodyState
    Q: Perturbation | None
    rho: GridFunction
    trace: list
    gap_trace: list
    residual: float
    iterations: int
    flags: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {"E": self.energy, "iterations": self.iterations, "residual": self.residual,
                "trace": list(self.trace), "inner_gaps": list(self.gap_trace), "flags": dict(self.flags)}


def _gaussian(spec: LatticeSpec, center, width: float) -> np.ndarray:
    r = spec.distance_to(center)
    return np.exp(-0.5 * (r / width) ** 2)


def initial_state(crystal: CrystalState, m: float, params: PolaronParams,
                  psi0: SingleState | None = None) -> SingleState:
    spec = crystal.spec
    center = (spec.L / 2,) * spec.d
    width = params.init_width or spec.L / 8
    if params.init == "provided":
        if psi0 is None:
            raise ValueError("init='provided' needs an initial state")
        return psi0
    if params.init == "gaussian":
        vals = _gaussian(spec, center, width)
    elif params.init == "uper_bump":
        vals = crystal.u_per_super().values * _gaussian(spec, center, width)
    else:
        raise ValueError(f"unknown init {params.init!r}")
    return SingleState.normalized(GridFunction(spec, vals, real=False), m)


def _inner_params(params: PolaronParams) -> ResponseParams:
    """Inner tolerance: a tenth of outer_tol unless set, so outer decreases are resolved."""
    rp = params.response
    return rp if rp.gap_tol is not None else replace(rp, gap_tol=0.1 * params.outer_tol)


def _check_step(trace: list, value: float, slack: float, label: str) -> None:
    if value > trace[-1] + slack:
        raise PolaronDiverged(f"{label}: energy rose from {trace[-1]:.12g} to {value:.12g}", trace)


def minimize_e1(crystal: CrystalState, m: float | None = None, w: CoulombKernel | None = None,
                params: PolaronParams = PolaronParams(), psi0: SingleState | None = None,
                response: bool = True) -> PolaronResult:
    """Alternating minimization of the joint functional in (psi, Q).

    Step (i) replaces psi by the ground state of ``h + V_{rho_Q}``; step (ii)
    replaces Q by the response to ``|psi|^2``.  Neither step can raise the joint
    energy, so the recorded outer energies decrease up to the inner gap tolerance.
    """
    m = crystal.m if m is None else m
    w = CoulombKernel(crystal.spec) if w is None else w
    spec = crystal.spec
    hd = spec.weight
    h = crystal.polaron_hamiltonian(m)
    if not response:
        e, U = np.linalg.eigh(h)
        psi = SingleState.normalized(GridFunction(spec, U[:, 0] / np.sqrt(hd), real=False), m)
        return PolaronResult(float(e[0]), psi, None, psi.density(), [float(e[0])], [], 0.0, 0,
                             {"bound_vs_Eper": bool(e[0] < crystal.E_per - params.outer_tol)})

    rp = _inner_params(params)
    psi = initial_state(crystal, m, params, psi0)
    c = psi.psi.flat() * np.sqrt(hd)
    nu = psi.density()
    res = _fcrys(nu, crystal, w, rp)
    E = float(np.real(np.vdot(c, h @ c))) + res.value
    trace, gaps = [E], [res.gap]
    residual = np.inf
    it = 0
    for it in range(1, params.max_outer + 1):
        slack = 2 * res.gap_tol
        rq = res.minimizer.rho_values
        vq = potential_values(rq, w).reshape(-1)
        self_energy = res.value - d_pair_values(nu.values, rq, w)
        ev, U = np.linalg.eigh(h + np.diag(vq))
        c = U[:, 0]
        _check_step(trace, float(ev[0]) + self_energy, slack, "psi step")
        psi = SingleState.normalized(GridFunction(spec, c / np.sqrt(hd), real=False), m)
        nu = psi.density()
        res = _fcrys(nu, crystal, w, rp, Q0=res.minimizer)
        E_new = float(np.real(np.vdot(c, h @ c))) + res.value
        _check_step(trace, E_new, 2 * slack, "Q step")
        trace.append(E_new)
        gaps.append(res.gap)
        hv = h @ c + potential_values(res.minimizer.rho_values, w).reshape(-1) * c
        residual = float(np.linalg.norm(hv - np.vdot(c, hv) * c))
        if trace[-2] - E_new < params.outer_tol and residual <= params.residual_tol:
            break
    else:
        raise PolaronDiverged(f"E(1) alternation not converged after {params.max_outer} steps "
                              f"(residual {residual:.2e})", trace)
    E = trace[-1]
    flags = {"bound_vs_Eper": bool(E < crystal.E_per - params.outer_tol),
             "margin_vs_Eper": float(crystal.E_per - E)}
    return PolaronResult(E, psi, res.minimizer, nu, trace, gaps, residual, it, flags)


def _memory_check(n: int, N: int, budget: float) -> None:
    # Lanczos keeps ~25 work vectors, the diagonal and a few temporaries
    need = 30.0 * 8 * n**N
    if need > budget:
        raise MemoryBudgetExceeded(f"{N}-body tensor on {n} points needs ~{need / 1e9:.2f} GB "
                                   f"(budget {budget / 1e9:.2f} GB)")


def lowest_state(spec: LatticeSpec, N: int, v: np.ndarray, m: float, w: CoulombKernel | None,
                 statistics: str = "fermion", seed: int = 0) -> tuple[float, np.ndarray]:
    """Ground state of ``sum_i (-Lap_i/2m + v(x_i)) + sum_{i<j} W`` in the (anti)symmetric sector.

    Lanczos on ``P H P + sigma (1 - P)`` with sigma above the spectrum of H, so the
    lowest eigenpair lies in the range of the symmetrizer P.
    """
    n = spec.n_pts
    shape = (n,) * N
    D = _diag_potential(spec, N, np.asarray(v).reshape(-1), w)
    sigma = N * float(k_squared(spec).max()) / (2 * m) + float(np.abs(D).max()) + 1.0

    def matvec(x):
        T = x.reshape(shape)
        P = symmetrize(T, statistics)
        HP = _kinetic_apply(P, spec, m) + D * P
        return (symmetrize(HP, statistics) + sigma * (T - P)).reshape(-1)

    op = LinearOperator((n**N, n**N), matvec=matvec, dtype=float)
    rng = np.random.default_rng(seed)
    v0 = symmetrize(rng.standard_normal(shape), statistics).reshape(-1)
    vals, vecs = eigsh(op, k=1, which="SA", v0=v0, tol=1e-13, maxiter=20000)
    T = symmetrize(vecs[:, 0].reshape(shape), statistics)
    T = T / np.sqrt(np.sum(T * T) * spec.h**N)
    return float(vals[0]), T


def minimize_eN(N: int, crystal: CrystalState, m: float | None = None, w: CoulombKernel | None = None,
                params: PolaronParams = PolaronParams(), interaction: bool = True, response: bool = True,
                statistics: str = "fermion") -> PolaronResult:
    """N-polaron ground state in one dimension by alternating minimization."""
    spec = crystal.spec
    m = crystal.m if m is None else m
    w = CoulombKernel(spec) if w is None else w
    if spec.d != 1:
        raise ValueError("the N-polaron solver is restricted to d = 1")
    if N not in (2, 3):
        raise ValueError("N must be 2 or 3")
    if spec.n_pts > 64:
        raise MemoryBudgetExceeded(f"N-body solver supports at most 64 grid points, got {spec.n_pts}")
    _memory_check(spec.n_pts, N, params.memory_budget)
    pair = w if interaction else None
    v0 = crystal.v_super.reshape(-1)
    if not response:
        e, T = lowest_state(spec, N, v0, m, pair, statistics, params.seed)
        st = ManyBodyState(spec, T, m, statistics)
        return PolaronResult(e, st, None, density_many(st), [e], [], 0.0, 0, {})

    e, T = lowest_state(spec, N, v0, m, pair, statistics, params.seed)
    st = ManyBodyState(spec, T, m, statistics)
    nu = density_many(st)
    rp = _inner_params(params)
    res = _fcrys(nu, crystal, w, rp)
    E = e + res.value
    trace, gaps = [E], [res.gap]
    residual = np.inf
    it = 0
    for it in range(1, params.max_outer + 1):
        slack = 2 * res.gap_tol
        rq = res.minimizer.rho_values
        vq = potential_values(rq, w).reshape(-1)
        self_energy = res.value - d_pair_values(nu.values, rq, w)
        e, T = lowest_state(spec, N, v0 + vq, m, pair, statistics, params.seed)
        _check_step(trace, e + self_energy, slack, "Psi step")
        st = ManyBodyState(spec, T, m, statistics)
        nu = density_many(st)
        res_new = _fcrys(nu, crystal, w, rp, Q0=res.minimizer)
        # the bare energy of Psi without the response potential
        e_bare = e - float(np.sum(vq * nu.flat()) * spec.h)
        E_new = e_bare + res_new.value
        _check_step(trace, E_new, 2 * slack, "Q step")
        trace.append(E_new)
        gaps.append(res_new.gap)
        residual = _eig_residual(T, spec, v0 + potential_values(res_new.minimizer.rho_values, w).reshape(-1),
                                 m, pair)
        res = res_new
        if trace[-2] - E_new < params.outer_tol and residual <= params.residual_tol:
            break
    else:
        raise PolaronDiverged(f"E({N}) alternation not converged after {params.max_outer} steps "
                              f"(residual {residual:.2e})", trace)
    return PolaronResult(trace[-1], st, res.minimizer, nu, trace, gaps, residual, it, {})


def _eig_residual(T, spec, v, m, pair) -> float:
    N = T.ndim
    HT = _kinetic_apply(T, spec, m) + _diag_potential(spec, N, v, pair) * T
    hN = spec.h**N
    lam = float(np.sum(T * HT) * hN)
    return float(np.sqrt(np.sum((HT - lam * T) ** 2) * hN))


# --- trial states --------------------------------------------------------------

@dataclass(frozen=True)
class Profile:
    """Radial envelope chi; ``bump`` is the compactly supported C-infinity bump."""

    kind: str = "bump"
    width: float = 1.0

    def __post_init__(self):
        if self.kind not in ("bump", "gaussian"):
            raise ValueError(f"unknown profile {self.kind!r}")
        if self.width <= 0:
            raise ValueError("profile width must be positive")

    @property
    def radius(self) -> float:
        """Support radius (Gaussians are cut at 8 widths, below 1e-13)."""
        return self.width if self.kind == "bump" else 8 * self.width

    def __call__(self, r: np.ndarray) -> np.ndarray:
        s = np.asarray(r, dtype=float) / self.width
        if self.kind == "gaussian":
            return np.where(s < 8, np.exp(-0.5 * s * s), 0.0)
        out = np.zeros_like(s)
        inside = s < 1
        out[inside] = np.exp(1 - 1 / (1 - s[inside] ** 2))
        return out


def dilated_density(profile: Profile, lam: float, spec: LatticeSpec, center=None) -> GridFunction:
    """``|chi_lam|^2`` with ``chi_lam = lam^{-d/2} chi(./lam)``, normalized on the grid."""
    if lam * profile.radius >= spec.L / 2:
        raise ValueError(f"dilated support {lam * profile.radius} does not fit half the supercell")
    center = (spec.L / 2,) * spec.d if center is None else center
    chi = profile(spec.distance_to(center) / lam)
    rho = chi**2
    return GridFunction(spec, rho / (rho.sum() * spec.weight))


def trial_lambda(crystal: CrystalState, profile: Profile, lam: float, m: float | None = None,
                 center=None) -> SingleState:
    """Normalized ``u_per(x) chi_lam(x)`` centered in the supercell."""
    spec = crystal.spec
    m = crystal.m if m is None else m
    if lam * profile.radius >= spec.L / 2:
        raise ValueError(f"dilated support {lam * profile.radius} does not fit half the supercell")
    center = (spec.L / 2,) * spec.d if center is None else center
    chi = profile(spec.distance_to(center) / lam)
    return SingleState.normalized(GridFunction(spec, crystal.u_per_super().values * chi, real=False), m)


def truncate(state: SingleState, center, radius: float) -> SingleState:
    """Smoothly cut the state off outside a ball and renormalize.

    The window equals 1 up to radius/2 and vanishes beyond ``radius``.
    """
    mask, _ = ramp(state.spec.distance_to(center), radius / 2)
    return SingleState.normalized(GridFunction(state.spec, state.psi.values * mask, real=False), state.m)


def _as_tensor(s: SingleState | ManyBodyState) -> tuple[np.ndarray, LatticeSpec, float, str]:
    if isinstance(s, SingleState):
        return s.psi.values.reshape(-1), s.spec, s.m, "fermion"
    return s.values, s.spec, s.m, s.statistics


def wedge_trial(a: SingleState | ManyBodyState, b: SingleState | ManyBodyState, shift,
                support_tol: float = 1e-12) -> ManyBodyState:
    """Antisymmetrized product of ``a`` and ``b`` translated by a lattice vector."""
    Ta, spec, m, stat = _as_tensor(a)
    Tb, spec_b, _, _ = _as_tensor(b)
    if spec != spec_b:
        raise GridError("factors live on different lattices")
    if spec.d != 1:
        raise ValueError("wedge products are restricted to d = 1")
    k = lattice_shift(spec, shift)[0]
    Tb = np.roll(Tb, k, axis=tuple(range(Tb.ndim)))

    def density(T):
        p = np.abs(T) ** 2
        return p.reshape(p.shape[0], -1).sum(axis=1)

    ra, rb = density(Ta), density(Tb)
    if np.any((ra > support_tol * ra.max()) & (rb > support_tol * rb.max())):
        raise ValueError("factor densities overlap after the shift")
    return ManyBodyState.from_tensor(spec, np.multiply.outer(Ta, Tb), m, stat)


# --- binding ---------------------------------------------------------------

def binding_report(N: int, crystal: CrystalState, m: float | None = None, w: CoulombKernel | None = None,
                   params: PolaronParams = PolaronParams(), interaction: bool = True, response: bool = True,
                   tol: float | None = None, jobs: int = 1) -> dict:
    """Table of ``E(k) + E(N-k)`` against ``E(N)`` for k = 1..N-1.

    ``strict`` is measured, never asserted; ``large`` checks the non-strict
    direction up to ``tol``.
    """
    m = crystal.m if m is None else m
    w = CoulombKernel(crystal.spec) if w is None else w
    tol = 10 * params.outer_tol if tol is None else tol

    def solve(k):
        if k == 1:
            return minimize_e1(crystal, m, w, params, response=response)
        return minimize_eN(k, crystal, m, w, params, interaction=interaction, response=response)

    ks = list(range(1, N + 1))
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = dict(zip(ks, pool.map(solve, ks)))
    E = {k: results[k].energy for k in ks}
    rows = []
    for k in range(1, N):
        split = E[k] + E[N - k]
        rows.append({"k": k, "E_k": E[k], "E_N_minus_k": E[N - k], "split": split, "E_N": E[N],
                     "strict": bool(E[N] < split - tol), "large": bool(E[N] <= split + tol)})
    return {"N": N, "energies": E, "rows": rows, "results": results,
            "satisfied": all(r["strict"] for r in rows), "large_satisfied": all(r["large"] for r in rows)}
