"""Localization operators that commute with the Fermi-sea projector.

``X = P chi P + (1-P) chi (1-P)`` and ``Y`` likewise with ``eta``, where
``chi**2 + eta**2 = 1``.  Conjugating an admissible perturbation by X or Y keeps
it admissible, and adding the two localized pieces does too.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coulomb import CoulombKernel, d_pair_values
from .crystal import CrystalState
from .grid import (GridFunction, LatticeSpec, fourier, fourier_matrix, inverse_fourier, k_squared,
                   multiplier_matrix, wavevector_components)
from .response import Perturbation, abs_grad_matrix, q_norm

ADDING_TOL = 1e-11


class PreconditionError(ValueError):
    pass


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10 - 15 * t + 6 * t * t)


@dataclass(frozen=True, eq=False)
class PartitionPair:
    R: float
    center: tuple
    chi: GridFunction
    eta: GridFunction
    grad_bound: float

    @property
    def spec(self) -> LatticeSpec:
        return self.chi.spec


def ramp(r: np.ndarray, R: float) -> tuple[np.ndarray, np.ndarray]:
    """chi = cos(pi/2 s), eta = sin(pi/2 s) with s a C2 step from r = R to r = 2R."""
    s = _smoothstep((r - R) / R)
    # cos(pi/2) is 6e-17 in floating point; pin the support exactly
    return np.where(s >= 1.0, 0.0, np.cos(0.5 * np.pi * s)), np.sin(0.5 * np.pi * s)


def build_pair(R: float, center, spec: LatticeSpec) -> PartitionPair:
    """Partition of unity around ``center``: chi = 1 on the R-ball, 0 beyond 2R."""
    if R <= 0:
        raise ValueError("R must be positive")
    if 2 * R >= spec.L / 2:
        raise ValueError(f"localization radius 2R = {2 * R} does not fit half the supercell ({spec.L / 2})")
    r = spec.distance_to(center)
    chi, eta = ramp(r, R)
    # max |d/dr cos(pi/2 s((r-R)/R))| = (pi/2) * max s' / R with max s' = 15/8
    grad_bound = 0.5 * np.pi * 15 / 8 / R
    return PartitionPair(R, tuple(np.atleast_1d(center).astype(float)), GridFunction(spec, chi),
                         GridFunction(spec, eta), grad_bound)


def localization_operator(f: np.ndarray, gamma0: np.ndarray) -> np.ndarray:
    """``P f P + (1-P) f (1-P)`` for a multiplication (or any Hermitian) operator f."""
    F = np.asarray(f) if np.ndim(f) == 2 else np.diag(np.ravel(f))
    P = gamma0
    Pp = np.eye(len(P)) - P
    return P @ F @ P + Pp @ F @ Pp


@dataclass(frozen=True, eq=False)
class LocalizationOps:
    X: np.ndarray
    Y: np.ndarray
    pair: PartitionPair | None = None

    @classmethod
    def build(cls, pair: PartitionPair, gamma0: np.ndarray) -> "LocalizationOps":
        return cls(localization_operator(pair.chi.flat(), gamma0),
                   localization_operator(pair.eta.flat(), gamma0), pair)

    def invariants(self, gamma0: np.ndarray) -> dict:
        comm = max(np.abs(self.X @ gamma0 - gamma0 @ self.X).max(), np.abs(self.Y @ gamma0 - gamma0 @ self.Y).max())
        S = self.X @ self.X + self.Y @ self.Y
        return {"commutator": float(comm), "norm_X": float(np.linalg.norm(self.X, 2)),
                "norm_Y": float(np.linalg.norm(self.Y, 2)),
                "max_eig_X2_Y2": float(np.linalg.eigvalsh(0.5 * (S + S.T))[-1])}


def localize(Q: Perturbation, A: np.ndarray) -> Perturbation:
    """``A Q A`` for a localization operator A (X or Y)."""
    return Perturbation(A @ Q.Q @ A, Q.gamma0, Q.spec)


def _admissible(Pi: np.ndarray, Q: np.ndarray, tol: float) -> bool:
    ev = np.linalg.eigvalsh(Pi + Q)
    return bool(ev[0] >= -tol and ev[-1] <= 1 + tol)


def adding_lemma_check(Pi: np.ndarray, chi: np.ndarray, eta: np.ndarray, Q: np.ndarray, Qp: np.ndarray,
                       tol: float = ADDING_TOL) -> bool:
    """True iff ``-Pi <= X Q X + Y Q' Y <= 1 - Pi`` up to ``tol``.

    Works in any finite dimension with arbitrary self-adjoint ``chi``, ``eta``
    satisfying ``chi^2 + eta^2 <= 1``.  Raises PreconditionError when an input
    violates the lemma's hypotheses.
    """
    n = len(Pi)
    if np.abs(Pi @ Pi - Pi).max() > 1e-10 or np.abs(Pi - Pi.conj().T).max() > 1e-12:
        raise PreconditionError("Pi is not an orthogonal projector")
    S = chi @ chi + eta @ eta
    if np.linalg.eigvalsh(0.5 * (S + S.conj().T))[-1] > 1 + tol:
        raise PreconditionError("chi^2 + eta^2 exceeds 1")
    for name, M in (("Q", Q), ("Q'", Qp)):
        if not _admissible(Pi, M, tol):
            raise PreconditionError(f"{name} violates -Pi <= {name} <= 1 - Pi")
    Pp = np.eye(n) - Pi
    X = Pi @ chi @ Pi + Pp @ chi @ Pp
    Y = Pi @ eta @ Pi + Pp @ eta @ Pp
    total = X @ Q @ X + Y @ Qp @ Y
    return _admissible(Pi, 0.5 * (total + total.conj().T), tol)


def _l2_coulomb(r: np.ndarray, spec: LatticeSpec, w: CoulombKernel) -> float:
    return float(np.sqrt(np.sum(r * r) * spec.weight) + np.sqrt(max(d_pair_values(r, r, w), 0.0)))


def fit_slope(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = y > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def localization_error_report(Q: Perturbation, crystal: CrystalState, R_list, center=None,
                              w: CoulombKernel | None = None) -> dict:
    """Per-R errors of the X/Y splitting and their log-log decay rates."""
    R_list = [float(R) for R in R_list]
    if len(R_list) < 3:
        raise ValueError("need at least 3 radii for a decay fit")
    if any(b <= a for a, b in zip(R_list, R_list[1:])):
        raise ValueError("R_list must be increasing")
    spec = crystal.spec
    w = CoulombKernel(spec) if w is None else w
    if center is None:
        center = (spec.L / 2,) * spec.d
    K = crystal.H0 - crystal.eps_F * np.eye(len(crystal.H0))
    G = abs_grad_matrix(spec)
    qn = q_norm(Q, spec, G)
    kin_Q = float(np.real(np.sum(K * Q.Q.T)))
    rho_Q = Q.rho_values
    rows = []
    for R in R_list:
        ops = LocalizationOps.build(build_pair(R, center, spec), crystal.gamma0)
        QX, QY = localize(Q, ops.X), localize(Q, ops.Y)
        e_rho = _l2_coulomb(rho_Q - QX.rho_values - QY.rho_values, spec, w)
        e_kin = abs(kin_Q - float(np.real(np.sum(K * QX.Q.T))) - float(np.real(np.sum(K * QY.Q.T))))
        nb = (q_norm(QX, spec, G) + q_norm(QY, spec, G)) / qn if qn > 0 else 0.0
        approx = q_norm(Q - QX, spec, G)
        rows.append({"R": R, "e_rho": e_rho, "e_kin": e_kin, "n_bound": nb, "q_approx": approx,
                     "feasible_X": QX.is_feasible(), "feasible_Y": QY.is_feasible()})
    R = [r["R"] for r in rows]
    return {"rows": rows, "q_norm": qn,
            "slope_e_rho": fit_slope(R, [r["e_rho"] for r in rows]),
            "slope_e_kin": fit_slope(R, [r["e_kin"] for r in rows])}


def ims_defect(chi: GridFunction, eta: GridFunction, spec: LatticeSpec | None = None,
               k_cut: float | None = None) -> float:
    """Operator-norm defect of the IMS identity for T = -Laplacian/2 on the grid.

    Continuum identity: T = chi T chi + eta T eta - |grad chi|^2/2 - |grad eta|^2/2.
    With ``k_cut`` the norm is taken on plane waves with |k| <= k_cut only; the full
    grid norm is dominated by aliasing near the Nyquist modes and grows with n.
    """
    spec = chi.spec if spec is None else spec
    T = np.ascontiguousarray(multiplier_matrix(spec, 0.5 * k_squared(spec)).real)

    def grad_sq(f: GridFunction) -> np.ndarray:
        kc = wavevector_components(spec)
        fh = fourier(f)
        total = np.zeros(spec.shape)
        for k in kc:
            g = inverse_fourier(GridFunction(spec, 1j * k * fh.values, real=False)).values.real
            total += g * g
        return total

    c, e = chi.flat(), eta.flat()
    D = T - (c[:, None] * T * c[None, :]) - (e[:, None] * T * e[None, :])
    D = D + np.diag(0.5 * (grad_sq(chi) + grad_sq(eta)).reshape(-1))
    if k_cut is not None:
        F = fourier_matrix(spec)
        keep = np.sqrt(k_squared(spec)).reshape(-1) <= k_cut
        B = F[keep]
        D = B @ D @ B.conj().T
    return float(np.abs(np.linalg.eigvalsh(0.5 * (D + D.conj().T))).max())
