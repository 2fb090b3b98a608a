"""Pekar's macroscopic functional and the dielectric constant fitted from F_crys scaling."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .coulomb import CoulombKernel
from .crystal import CrystalState
from .grid import GridFunction, LatticeSpec, gradient_norm_sq, k_squared, wavevectors
from .polaron import Profile, SingleState, dilated_density
from .response import ResponseParams, f_crys

EPS_MAX = 1e6
ROUNDOFF = 1e-14


class FitUnreliable(RuntimeError):
    def __init__(self, msg, table=None):
        super().__init__(msg)
        self.table = table or []


class ChoquardDiverged(RuntimeError):
    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace or []


@dataclass(frozen=True, eq=False)
class DielectricModel:
    """Static dielectric constant: a scalar, or a symmetric positive d x d matrix."""

    eps: float | np.ndarray

    def __post_init__(self):
        e = np.asarray(self.eps, dtype=float)
        if e.ndim == 0:
            if not e > 1:
                raise ValueError(f"dielectric constant must exceed 1, got {float(e)}")
            object.__setattr__(self, "eps", float(e))
            return
        if e.ndim != 2 or e.shape[0] != e.shape[1] or not np.allclose(e, e.T):
            raise ValueError("matrix dielectric model must be square and symmetric")
        if np.linalg.eigvalsh(e)[0] <= 1:
            raise ValueError("matrix dielectric model must exceed the identity")
        object.__setattr__(self, "eps", e)

    @property
    def is_scalar(self) -> bool:
        return np.ndim(self.eps) == 0

    def matrix(self, d: int) -> np.ndarray:
        return self.eps * np.eye(d) if self.is_scalar else np.asarray(self.eps)


def _eps_matrix(eps, d: int) -> np.ndarray:
    if isinstance(eps, DielectricModel):
        return eps.matrix(d)
    e = np.asarray(eps, dtype=float)
    return e * np.eye(d) if e.ndim == 0 else e


def pekar_multiplier(spec: LatticeSpec, eps, w: CoulombKernel | None = None) -> np.ndarray:
    """Fourier multiplier of the screened-minus-bare interaction.

    Bare kernel: ``4 pi (1/(k.eps.k) - 1/|k|^2)`` for k != 0.  Any other kernel with a
    scalar eps: ``(1/eps - 1) w(k)``.
    """
    E = _eps_matrix(eps, spec.d)
    if w is not None and w.mode != "bare":
        if not np.allclose(E, E[0, 0] * np.eye(spec.d)):
            raise ValueError("anisotropic dielectric models need the bare kernel")
        return (1 / E[0, 0] - 1) * w.symbol
    k = wavevectors(spec)
    k2 = np.sum(k * k, axis=1)
    kek = np.einsum("ni,ij,nj->n", k, E, k)
    out = np.zeros_like(k2)
    nz = k2 > 0
    out[nz] = 4 * np.pi * (1 / kek[nz] - 1 / k2[nz])
    return out.reshape(spec.shape)


def _quadratic(rho: np.ndarray, mult: np.ndarray, spec: LatticeSpec) -> float:
    rh = np.fft.fftn(np.reshape(rho, spec.shape)) * spec.weight
    return float(0.5 * np.sum(mult * np.abs(rh) ** 2) / spec.volume)


def fp_effective(rho: GridFunction, eps) -> float:
    """Pekar's effective interaction ``(1/2) sum_k (4pi/(k.eps.k) - 4pi/|k|^2) |rho_hat|^2 / L^d``."""
    return _quadratic(rho.values, pekar_multiplier(rho.spec, eps), rho.spec)


def pekar_energy(psi: SingleState | GridFunction, eps, w: CoulombKernel | None = None, m: float = 1.0) -> float:
    """``(2m)^-1 int |grad psi|^2 + ((1/eps - 1)/2) D(|psi|^2, |psi|^2)``."""
    f = psi.psi if isinstance(psi, SingleState) else psi
    return gradient_norm_sq(f) / (2 * m) + _quadratic(f.abs2().values, pekar_multiplier(f.spec, eps, w), f.spec)


def solve_scalar_eps(rho: GridFunction, target: float, eps_max: float = EPS_MAX) -> float:
    """Scalar eps with ``fp_effective(rho, eps) = target`` (fp decreases from 0 at eps = 1)."""
    lo_val = fp_effective(rho, eps_max)
    if not (lo_val < target < 0):
        raise FitUnreliable(f"target {target:.6g} outside the attainable range ({lo_val:.6g}, 0)")
    return float(brentq(lambda e: fp_effective(rho, e) - target, 1.0, eps_max, xtol=1e-14, rtol=1e-15,
                        maxiter=500))


@dataclass
class EpsilonFit:
    eps_fit: float
    c: float
    slope_fit: float
    exponent: float
    residuals: list
    table: list = field(default_factory=list)
    eps_per_lambda: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"eps_fit": self.eps_fit, "c": self.c, "slope_fit": self.slope_fit, "exponent": self.exponent,
                "residuals": list(self.residuals), "eps_per_lambda": list(self.eps_per_lambda)}


def fit_epsilon(lams, F, rho1: GridFunction, exponent: float = -1.0, monotone_tol: float = 1e-10,
                rho_lams: list[GridFunction] | None = None) -> EpsilonFit:
    """Fit ``F ~ c lam^exponent`` by least squares and invert ``fp_effective(rho1, eps) = c``.

    ``rho_lams`` (the dilated densities) adds a per-lambda eps obtained by solving
    ``fp_effective(rho_lam, eps) = F_lam`` directly, which needs no scaling law.
    """
    lams = np.asarray(lams, dtype=float)
    F = np.asarray(F, dtype=float)
    table = [{"lam": float(l), "F": float(f), "lam_F": float(l * f)} for l, f in zip(lams, F)]
    if len(lams) < 2 or np.any(np.diff(lams) <= 0):
        raise FitUnreliable("lambda values must be increasing and at least two", table)
    if np.any(F >= 0):
        raise FitUnreliable("response energies must be negative", table)
    if exponent < 0 and np.any(np.diff(np.abs(F)) > monotone_tol * np.abs(F).max()):
        raise FitUnreliable("|F| does not decrease with lambda", table)
    basis = lams**exponent
    c = float(np.dot(basis, F) / np.dot(basis, basis))
    residuals = (F - c * basis).tolist()
    slope = float(np.polyfit(np.log(lams), np.log(np.abs(F)), 1)[0])
    per = []
    for i, r in enumerate(rho_lams or []):
        try:
            per.append(solve_scalar_eps(r, float(F[i])))
        except FitUnreliable:
            per.append(float("nan"))
        table[i]["eps_lam"] = per[-1]
    try:
        eps = solve_scalar_eps(rho1, c)
    except FitUnreliable as err:
        raise FitUnreliable(f"{err} (fitted c = {c:.6g}, slope {slope:.4f})", table) from None
    return EpsilonFit(eps, c, slope, exponent, residuals, table, per)


def extract_epsilon(crystal: CrystalState, profile: Profile, lam_list, w: CoulombKernel | None = None,
                    params: ResponseParams = ResponseParams(diagnostics=False), center=None,
                    jobs: int = 1, exponent: float = -1.0) -> EpsilonFit:
    """Compute ``F_crys[|chi_lam|^2]`` per lambda and fit the macroscopic dielectric constant."""
    spec = crystal.spec
    w = CoulombKernel(spec) if w is None else w
    lam_list = [float(l) for l in lam_list]
    if any(b <= a for a, b in zip(lam_list, lam_list[1:])):
        raise ValueError("lambda values must be increasing")
    rhos = [dilated_density(profile, l, spec, center) for l in lam_list]
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        F = list(pool.map(lambda r: f_crys(r, crystal, w, params), rhos))
    rho1 = dilated_density(profile, 1.0, spec, center)
    return fit_epsilon(lam_list, F, rho1, exponent, rho_lams=rhos)


@dataclass(frozen=True)
class ChoquardParams:
    tol: float = 1e-7
    max_iter: int = 20000
    step: float = 1.0
    init_width: float | None = None


@dataclass(eq=False)
class ChoquardResult:
    state: SingleState
    energy: float
    trace: list
    iterations: int
    residual: float


def choquard_solve(eps, m: float, spec: LatticeSpec, params: ChoquardParams = ChoquardParams(),
                   w: CoulombKernel | None = None, psi0: SingleState | None = None) -> ChoquardResult:
    """Minimize the Pekar functional on the unit sphere by preconditioned projected descent.

    A trial step is halved until the energy does not increase, so the trace is
    monotone; the step grows again after each accepted move.
    """
    model = eps if isinstance(eps, DielectricModel) else DielectricModel(eps)
    mult = pekar_multiplier(spec, model, w)
    k2 = k_squared(spec) / (2 * m)
    precond = 1.0 / (1.0 + k2)
    if psi0 is None:
        width = params.init_width or spec.L / 8
        r = spec.distance_to((spec.L / 2,) * spec.d)
        psi = np.exp(-0.5 * (r / width) ** 2).astype(complex)
    else:
        psi = np.array(psi0.psi.values, dtype=complex)
    hd = spec.weight

    def normalize(f):
        return f / np.sqrt(np.sum(np.abs(f) ** 2) * hd)

    def energy_and_grad(f):
        fh = np.fft.fftn(f)
        kin = float(np.sum(k2 * np.abs(fh) ** 2) / f.size * hd)
        rho = np.abs(f) ** 2
        V = np.fft.ifftn(mult * np.fft.fftn(rho)).real
        inter = 0.5 * float(np.sum(V * rho) * hd)
        Hf = np.fft.ifftn(k2 * fh) + V * f
        mu = float(np.real(np.vdot(f, Hf)) * hd)
        return kin + inter, Hf - mu * f, kin + abs(inter)

    psi = normalize(psi)
    E, g, size = energy_and_grad(psi)
    trace = [E]
    tau = params.step
    res = float(np.sqrt(np.sum(np.abs(g) ** 2) * hd))
    it = 0
    for it in range(1, params.max_iter + 1):
        if res <= params.tol:
            break
        d = np.fft.ifftn(precond * np.fft.fftn(g))
        while True:
            trial = normalize(psi - tau * d)
            E_t, g_t, size_t = energy_and_grad(trial)
            if E_t <= E:
                break
            # below roundoff the energy cannot rank steps; fall back to the residual
            if E_t <= E + ROUNDOFF * max(size, size_t) and np.sum(np.abs(g_t) ** 2) * hd < res**2:
                break
            tau *= 0.5
            if tau < 1e-14:
                raise ChoquardDiverged("step size underflow in the Pekar descent", trace)
        psi, E, g, size = trial, E_t, g_t, size_t
        trace.append(E)
        res = float(np.sqrt(np.sum(np.abs(g) ** 2) * hd))
        tau = min(2 * tau, params.step)
    else:
        raise ChoquardDiverged(f"Pekar descent not converged (residual {res:.2e})", trace)
    state = SingleState(GridFunction(spec, psi, real=False), m)
    return ChoquardResult(state, E, trace, it, res)
