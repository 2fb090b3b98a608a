"""Crystal response functional: constrained Fermi-sea perturbations and Frank-Wolfe minimization.

Operators are dense matrices in the orthonormal position basis of the supercell
grid (basis vector i is the grid delta normalized in L^2).  The density of an
operator is its diagonal divided by ``h**d``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import minimize

from .coulomb import CoulombKernel, d_pair_values, potential_values
from .crystal import CrystalState
from .grid import GridFunction, LatticeSpec, k_squared, multiplier_matrix, translate

log = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-9


class InfeasiblePerturbation(ValueError):
    pass


class ResponseDiverged(RuntimeError):
    def __init__(self, msg, gap_trace=None):
        super().__init__(msg)
        self.gap_trace = gap_trace or []


@dataclass(eq=False)
class Perturbation:
    """Hermitian Q with cached blocks Q^{--}, Q^{-+}, Q^{+-}, Q^{++} relative to gamma0."""

    Q: np.ndarray
    gamma0: np.ndarray = field(repr=False)
    spec: LatticeSpec

    @classmethod
    def zero(cls, crystal: CrystalState) -> "Perturbation":
        return cls(np.zeros_like(crystal.gamma0), crystal.gamma0, crystal.spec)

    @cached_property
    def _proj(self):
        P = self.gamma0
        return P, np.eye(len(P)) - P

    @cached_property
    def mm(self) -> np.ndarray:
        P, _ = self._proj
        return P @ self.Q @ P

    @cached_property
    def mp(self) -> np.ndarray:
        P, Pp = self._proj
        return P @ self.Q @ Pp

    @cached_property
    def pm(self) -> np.ndarray:
        P, Pp = self._proj
        return Pp @ self.Q @ P

    @cached_property
    def pp(self) -> np.ndarray:
        _, Pp = self._proj
        return Pp @ self.Q @ Pp

    @cached_property
    def rho_values(self) -> np.ndarray:
        return np.real(np.diag(self.Q)).reshape(self.spec.shape) / self.spec.weight

    @property
    def rho(self) -> GridFunction:
        return GridFunction(self.spec, self.rho_values)

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.Q - self.Q.conj().T), initial=0.0))

    def constraint_spectrum(self) -> np.ndarray:
        """Eigenvalues of gamma0 + Q; feasible iff all lie in [0, 1]."""
        G = self.gamma0 + self.Q
        return np.linalg.eigvalsh(0.5 * (G + G.conj().T))

    def is_feasible(self, tol: float = FEASIBILITY_TOL) -> bool:
        ev = self.constraint_spectrum()
        return bool(ev[0] >= -tol and ev[-1] <= 1 + tol)

    def require_feasible(self, tol: float = FEASIBILITY_TOL) -> None:
        ev = self.constraint_spectrum()
        if ev[0] < -tol or ev[-1] > 1 + tol:
            raise InfeasiblePerturbation(
                f"spectrum of gamma0 + Q spans [{ev[0]:.3e}, {ev[-1]:.3e}], outside [0, 1]")

    def conjugate(self, A: np.ndarray) -> "Perturbation":
        return Perturbation(A @ self.Q @ A.conj().T, self.gamma0, self.spec)

    def __add__(self, other: "Perturbation") -> "Perturbation":
        return Perturbation(self.Q + other.Q, self.gamma0, self.spec)

    def __sub__(self, other: "Perturbation") -> "Perturbation":
        return Perturbation(self.Q - other.Q, self.gamma0, self.spec)


def tr0(Q: Perturbation) -> float:
    """Generalized trace Tr Q^{++} + Tr Q^{--}."""
    return float(np.real(np.trace(Q.pp) + np.trace(Q.mm)))


def _shifted(crystal: CrystalState) -> np.ndarray:
    return crystal.H0 - crystal.eps_F * np.eye(len(crystal.H0))


def kinetic_energy(Q: Perturbation, crystal: CrystalState) -> float:
    """``Tr(|H0 - eF|^{1/2} (Q^{++} - Q^{--}) |H0 - eF|^{1/2})``."""
    U = crystal.eigvecs
    s = np.sqrt(np.abs(crystal.eigvals - crystal.eps_F))
    B = U.conj().T @ (Q.pp - Q.mm) @ U
    return float(np.real(np.sum(s * s * np.diag(B))))


def kinetic_energy_direct(Q: Perturbation, crystal: CrystalState) -> float:
    """``Tr((H0 - eF)(Q^{++} + Q^{--}))``; equals `kinetic_energy` for any Q."""
    K = _shifted(crystal)
    return float(np.real(np.sum(K * (Q.pp + Q.mm).T)))


def _trace_prod(A: np.ndarray, B: np.ndarray) -> float:
    return float(np.real(np.sum(A * B.T)))


def energy_of(nu: GridFunction, Q: Perturbation, crystal: CrystalState, w: CoulombKernel,
              check: bool = True) -> float:
    """``Tr0((H0 - eF) Q) + D(rho_Q, rho_Q) / 2 + D(nu, rho_Q)``."""
    if check:
        Q.require_feasible()
    rq = Q.rho_values
    return (_trace_prod(_shifted(crystal), Q.Q) + 0.5 * d_pair_values(rq, rq, w)
            + d_pair_values(nu.values, rq, w))


def lmo(A: np.ndarray, crystal: CrystalState) -> Perturbation:
    """Exact minimizer of Tr(A Q) over -gamma0 <= Q <= 1 - gamma0.

    Zero eigenvalues of A are left unoccupied.
    """
    w, U = np.linalg.eigh(A)
    neg = U[:, w < 0]
    return Perturbation(neg @ neg.conj().T - crystal.gamma0, crystal.gamma0, crystal.spec)


def default_gap_tol(nu: GridFunction, w: CoulombKernel) -> float:
    return 1e-7 * (1 + 0.5 * d_pair_values(nu.values, nu.values, w))


@dataclass(frozen=True)
class ResponseParams:
    gap_tol: float | None = None
    max_iter: int = 2000
    variant: str = "fw_corrective"
    diagnostics: bool = True


@dataclass(eq=False)
class ResponseResult:
    value: float
    minimizer: Perturbation
    gap: float
    gap_tol: float
    iterations: int
    trace: list
    gap_trace: list
    diagnostics: dict
    # retained vertices and weights of fw_corrective, kept only on request
    active: tuple | None = None

    def to_dict(self) -> dict:
        return {"F": self.value, "gap": self.gap, "gap_tol": self.gap_tol, "iters": self.iterations,
                "diagnostics": self.diagnostics}


VARIANTS = ("frank_wolfe", "fw_linesearch", "fw_anderson", "fw_corrective")
MAX_ATOMS = 24
TOGGLE_WINDOW = 0.05


def simplex_qp(G: np.ndarray, q: np.ndarray, c0: np.ndarray) -> np.ndarray:
    """Minimize ``c.q + c.G.c/2`` over the probability simplex (small dense problems)."""
    res = minimize(lambda c: c @ q + 0.5 * c @ G @ c, c0, jac=lambda c: q + G @ c, method="SLSQP",
                   bounds=[(0.0, 1.0)] * len(q),
                   constraints=[{"type": "eq", "fun": lambda c: c.sum() - 1.0, "jac": lambda c: np.ones_like(c)}],
                   options={"ftol": 1e-15, "maxiter": 500})
    c = np.clip(res.x, 0.0, None)
    c /= c.sum()
    # SLSQP stops at ftol in the value, i.e. ~sqrt(ftol) in the weights; polish by
    # solving the KKT system on the detected support
    support = c > 1e-12
    for _ in range(len(q)):
        idx = np.flatnonzero(support)
        k = len(idx)
        A = np.zeros((k + 1, k + 1))
        A[:k, :k] = G[np.ix_(idx, idx)]
        A[:k, k] = A[k, :k] = 1.0
        sol = np.linalg.lstsq(A, np.append(-q[idx], 1.0), rcond=None)[0]
        if np.all(sol[:k] >= 0):
            polished = np.zeros_like(c)
            polished[idx] = sol[:k]
            f = lambda x: x @ q + 0.5 * x @ G @ x
            # the two values agree to roundoff when SLSQP was already close
            return polished if f(polished) <= f(c) + 1e-12 * (1 + abs(f(c))) else c
        support[idx[np.argmin(sol[:k])]] = False
    return c


class _Anderson:
    """Type-II Anderson extrapolation for the fixed point x = G(x)."""

    def __init__(self, depth: int = 8):
        self.depth = depth
        self.xs: list[np.ndarray] = []
        self.fs: list[np.ndarray] = []

    def push(self, x: np.ndarray, gx: np.ndarray) -> np.ndarray:
        self.xs.append(x)
        self.fs.append(gx - x)
        if len(self.xs) > self.depth + 1:
            self.xs.pop(0)
            self.fs.pop(0)
        if len(self.xs) == 1:
            return gx
        dF = np.array([self.fs[i + 1] - self.fs[i] for i in range(len(self.fs) - 1)]).T
        dX = np.array([self.xs[i + 1] - self.xs[i] for i in range(len(self.xs) - 1)]).T
        coef, *_ = np.linalg.lstsq(dF, self.fs[-1], rcond=None)
        return self.xs[-1] + self.fs[-1] - (dX + dF) @ coef


def minimize_fcrys(nu: GridFunction, crystal: CrystalState, w: CoulombKernel,
                   params: ResponseParams = ResponseParams(), Q0: Perturbation | None = None,
                   active: tuple | None = None, keep_active: bool = False) -> ResponseResult:
    """Minimize ``F_crys[nu, Q]`` over the admissible set by Frank-Wolfe.

    Every iterate is a convex combination of admissible points, so feasibility
    holds throughout.  ``frank_wolfe`` uses the 2/(k+2) step; ``fw_linesearch``
    the exact minimizing step along the segment to the linear minimizer.
    ``fw_anderson`` also proposes the spectral projector of an Anderson-extrapolated
    potential and keeps whichever of the two segments decreases the objective more.
    ``fw_corrective`` re-optimizes the weights of all retained vertices after each
    step, which handles fractionally occupied levels at the Fermi energy.
    The returned duality gap bounds the suboptimality of the value.

    ``active`` (the ``active`` field of an earlier fw_corrective result, returned
    when ``keep_active`` is set) warm-starts the corrective variant from the
    previous vertices, reweighted for the new ``nu``; it supersedes ``Q0``.
    """
    if nu.spec != crystal.spec:
        raise ValueError("external density and crystal live on different lattices")
    if params.variant not in VARIANTS:
        raise ValueError(f"unknown Frank-Wolfe variant {params.variant!r}")
    gap_tol = default_gap_tol(nu, w) if params.gap_tol is None else params.gap_tol
    h_d = crystal.spec.weight
    K = _shifted(crystal)
    g0 = crystal.gamma0
    g0_diag = np.real(np.diag(g0))
    Q = np.zeros_like(g0) if Q0 is None else np.array(Q0.Q, dtype=g0.dtype, copy=True)
    rq = np.real(np.diag(Q)) / h_d
    kin = _trace_prod(K, Q)
    kin_g0 = _trace_prod(K, g0)
    nu_v = nu.values.reshape(-1)
    accel = _Anderson() if params.variant == "fw_anderson" else None

    def objective(kin, rq):
        return kin + 0.5 * d_pair_values(rq, rq, w) + d_pair_values(nu_v, rq, w)

    def vertex(V, toggle=False):
        ev, U = np.linalg.eigh(K + np.diag(V))
        neg = U[:, ev < 0]
        P = neg @ neg.conj().T
        rs = (np.sum(np.abs(neg) ** 2, axis=1) - g0_diag) / h_d
        best = (P, _trace_prod(K, P) - kin_g0, rs)
        if not toggle:
            return best
        # the same projector with the level nearest eF flipped; mixing the two
        # gives the fractional occupation of a level pinned at eF
        j = int(np.argmin(np.abs(ev)))
        if abs(ev[j]) > TOGGLE_WINDOW:
            return best, None
        phi = U[:, j]
        sign = -1.0 if ev[j] < 0 else 1.0
        Pt = P + sign * np.outer(phi, phi.conj())
        rt = rs + sign * np.abs(phi) ** 2 / h_d
        return best, (Pt, best[1] + sign * float(np.real(np.vdot(phi, K @ phi))), rt)

    corrective = params.variant == "fw_corrective"
    sym = w.symbol.reshape(-1)
    scale = h_d**2 / crystal.spec.volume
    nuh = np.fft.fftn(nu.values).reshape(-1)
    axes = tuple(range(1, crystal.spec.d + 1))

    def reweight(atoms, weights):
        """Optimal simplex weights of the retained vertices and their objective."""
        R = np.array([a[2] for a in atoms])
        Rh = np.fft.fftn(R.reshape((len(atoms),) + crystal.spec.shape), axes=axes).reshape(len(atoms), -1)
        Gm = np.real((Rh.conj() * sym) @ Rh.T) * scale
        qv = np.array([a[1] for a in atoms]) + np.real((Rh.conj() * sym) @ nuh) * scale
        c = simplex_qp(Gm, qv, weights)
        return c, float(c @ qv + 0.5 * c @ Gm @ c)

    def combine(atoms, c):
        keep = c > 1e-13
        atoms = [a for a, k in zip(atoms, keep) if k]
        weights = c[keep] / c[keep].sum()
        Q = sum(wj * a[0] for wj, a in zip(weights, atoms))
        kin = float(sum(wj * a[1] for wj, a in zip(weights, atoms)))
        rq = sum(wj * a[2] for wj, a in zip(weights, atoms))
        return atoms, weights, Q, kin, rq

    if corrective and active is not None:
        atoms, weights = list(active[0]), np.asarray(active[1], dtype=float)
        c, _ = reweight(atoms, weights)
        atoms, weights, Q, kin, rq = combine(atoms, c)
        Q = np.array(Q, copy=True)
    else:
        atoms = [(Q.copy(), kin, rq.copy())] if corrective else []
        weights = np.ones(1)
    f = objective(kin, rq)
    trace, gap_trace = [f], []
    gap = np.inf
    it = 0
    for it in range(1, params.max_iter + 1):
        V = potential_values(rq + nu_v, w).reshape(-1)
        if corrective:
            (P, kin_s, rs), toggled = vertex(V, toggle=True)
        else:
            P, kin_s, rs = vertex(V)
        # duality gap Tr(A (Q - S)) with A = H0 - eF + V
        gap = (kin - kin_s) + float(np.dot(V, rq - rs)) * h_d
        gap_trace.append(gap)
        if gap <= gap_tol:
            it -= 1
            break
        if params.variant == "frank_wolfe":
            t = 2.0 / (it + 2)
            best = (t, P, kin_s, rs)
        else:
            best, best_drop = None, -np.inf
            candidates = [(P, kin_s, rs, gap)]
            if accel is not None:
                v_new = accel.push(V, potential_values(rs + nu_v, w).reshape(-1))
                Pa, kin_a, ra = vertex(v_new)
                slope_a = (kin_a - kin) + float(np.dot(V, ra - rq)) * h_d
                if slope_a < 0:
                    candidates.append((Pa, kin_a, ra, -slope_a))
            for Ps, ks, rss, descent in candidates:
                dr = rss - rq
                curv = d_pair_values(dr, dr, w)
                t = 1.0 if curv <= 0 else min(1.0, descent / curv)
                drop = t * descent - 0.5 * t * t * curv
                if drop > best_drop:
                    best, best_drop = (t, Ps, ks, rss), drop
        t, Ps, ks, rss = best
        Q += t * (Ps - g0 - Q)
        kin += t * (ks - kin)
        rq = rq + t * (rss - rq)
        f = objective(kin, rq)
        if corrective:
            if len(atoms) >= MAX_ATOMS:
                atoms, weights = [(Q.copy(), kin, rq.copy())], np.ones(1)
            atoms.append((Ps - g0, ks, rss))
            weights = np.append((1 - t) * weights, t)
            if toggled is not None:
                atoms.append((toggled[0] - g0, toggled[1], toggled[2]))
                weights = np.append(weights, 0.0)
            c, f_c = reweight(atoms, weights)
            if f_c < f:
                atoms, weights, Q, kin, rq = combine(atoms, c)
                f = objective(kin, rq)
        trace.append(f)
    else:
        raise ResponseDiverged(f"Frank-Wolfe gap {gap:.3e} > {gap_tol:.3e} after {params.max_iter} iterations",
                               gap_trace)
    Q = 0.5 * (Q + Q.conj().T)
    pert = Perturbation(Q, g0, crystal.spec)
    diag = {}
    if params.diagnostics:
        r = pert.rho_values
        diag = {"tr0": tr0(pert), "D_rhoQ": d_pair_values(r, r, w),
                "q_norm": q_norm(pert, crystal.spec)}
    kept = (atoms, weights) if corrective and keep_active else None
    return ResponseResult(value=f, minimizer=pert, gap=float(gap), gap_tol=gap_tol, iterations=it,
                          trace=trace, gap_trace=gap_trace, diagnostics=diag, active=kept)


def f_crys(nu: GridFunction, crystal: CrystalState, w: CoulombKernel,
           params: ResponseParams = ResponseParams(diagnostics=False)) -> float:
    return minimize_fcrys(nu, crystal, w, params).value


def abs_grad_matrix(spec: LatticeSpec) -> np.ndarray:
    """The multiplier |k| as a dense matrix."""
    return np.ascontiguousarray(multiplier_matrix(spec, np.sqrt(k_squared(spec))).real)


def q_norm(Q: Perturbation, spec: LatticeSpec, G: np.ndarray | None = None) -> float:
    """Grid analogue of the natural norm: S2 and S1 pieces, with and without |grad|."""
    if G is None:
        G = abs_grad_matrix(spec)

    def s1(A):
        return float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (A + A.conj().T)))))

    return (np.linalg.norm(Q.Q) + s1(Q.pp) + s1(Q.mm) + np.linalg.norm(G @ Q.Q)
            + s1(G @ Q.pp @ G) + s1(G @ Q.mm @ G))


def decoupling_probe(rho1: GridFunction, rho2: GridFunction, separations, crystal: CrystalState,
                     w: CoulombKernel, params: ResponseParams = ResponseParams(diagnostics=False),
                     support_tol: float = 1e-12) -> list[dict]:
    """``delta(s) = |F[rho1 + T_s rho2] - F[rho1] - F[rho2]|`` for each lattice translation s."""
    spec = crystal.spec
    for s in separations:
        if np.max(np.abs(np.atleast_1d(s))) > spec.L / 2 + 1e-12:
            raise ValueError(f"separation {s} exceeds half the supercell")
    F1 = f_crys(rho1, crystal, w, params)
    F2 = f_crys(rho2, crystal, w, params)
    s1 = np.abs(rho1.values) > support_tol * max(np.abs(rho1.values).max(), 1e-300)
    rows = []
    for s in separations:
        shifted = translate(rho2, s)
        s2 = np.abs(shifted.values) > support_tol * max(np.abs(shifted.values).max(), 1e-300)
        if np.any(s1 & s2) and np.abs(rho2.values).max() > 0:
            raise ValueError(f"supports overlap at separation {s}")
        F12 = f_crys(rho1 + shifted, crystal, w, params)
        rows.append({"s": float(np.linalg.norm(np.atleast_1d(s))), "F_pair": F12, "F1": F1, "F2": F2,
                     "delta": abs(F12 - F1 - F2)})
    return rows
