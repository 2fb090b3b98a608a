"""Coulomb bilinear form, Coulomb norm and potential solves on the supercell."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridError, GridFunction, LatticeSpec, k_squared


@dataclass(frozen=True)
class CoulombKernel:
    """Fourier symbol ``4 pi / |k|^2`` (bare, zero mode dropped) or ``4 pi / (|k|^2 + mu^2)``."""

    spec: LatticeSpec
    mode: str = "bare"
    mu: float = 0.0

    def __post_init__(self):
        if self.mode not in ("bare", "yukawa"):
            raise GridError(f"unknown kernel mode {self.mode!r}")
        if self.mode == "yukawa" and self.mu <= 0:
            raise GridError("yukawa kernel needs mu > 0")

    @property
    def symbol(self) -> np.ndarray:
        k2 = k_squared(self.spec)
        if self.mode == "yukawa":
            return 4 * np.pi / (k2 + self.mu**2)
        w = np.zeros_like(k2)
        nz = k2 > 0
        w[nz] = 4 * np.pi / k2[nz]
        return w

    @property
    def w_max(self) -> float:
        return float(self.symbol.max())

    def real_space(self) -> np.ndarray:
        """Pair interaction ``W(x)`` whose Fourier symbol is the kernel symbol."""
        return np.fft.ifftn(self.symbol).real / self.spec.weight

    def describe(self) -> dict:
        out = {"mode": self.mode}
        if self.mode == "yukawa":
            out["mu"] = self.mu
        else:
            out["zero_mode"] = "dropped (uniform compensating background)"
        return out


def _check(f: GridFunction, w: CoulombKernel) -> None:
    if f.spec != w.spec:
        raise GridError("grid function and kernel live on different lattices")


def d_pair(f: GridFunction, g: GridFunction, w: CoulombKernel) -> float:
    """``D(f, g) = (1/L^d) sum_k w(k) conj(f_hat) g_hat``."""
    _check(f, w)
    _check(g, w)
    fh = np.fft.fftn(f.values)
    gh = np.fft.fftn(g.values)
    s = np.sum(w.symbol * (fh.conj() * gh)).real
    return float(s * f.spec.weight**2 / f.spec.volume)


def d_pair_values(f: np.ndarray, g: np.ndarray, w: CoulombKernel) -> float:
    """`d_pair` on raw value arrays shaped like the grid."""
    fh = np.fft.fftn(np.reshape(f, w.spec.shape))
    gh = np.fft.fftn(np.reshape(g, w.spec.shape))
    s = np.sum(w.symbol * (fh.conj() * gh)).real
    return float(s * w.spec.weight**2 / w.spec.volume)


def coulomb_norm(f: GridFunction, w: CoulombKernel) -> float:
    return float(np.sqrt(max(d_pair(f, f, w), 0.0)))


def potential_values(rho: np.ndarray, w: CoulombKernel) -> np.ndarray:
    return np.fft.ifftn(w.symbol * np.fft.fftn(np.reshape(rho, w.spec.shape))).real


def potential_of(rho: GridFunction, w: CoulombKernel) -> GridFunction:
    """Potential ``V`` with ``V_hat = w * rho_hat``, so that ``D(rho, s) = int V s``."""
    _check(rho, w)
    return GridFunction(rho.spec, potential_values(rho.values, w), True)
