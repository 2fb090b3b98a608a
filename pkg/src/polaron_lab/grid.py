"""Periodic supercell grids, spectral operators and lattice translations.

All integrals are weighted grid sums with weight ``h**d``.  Fourier
coefficients approximate the continuum transform
``f_hat(k) = sum_x f(x) exp(-i k.x) h**d`` so that Parseval reads
``sum_x |f|^2 h^d = (1 / L^d) sum_k |f_hat(k)|^2``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class LatticeSpec:
    """Cubic cell of side ``a`` with ``n_c`` points per axis, repeated ``M`` times."""

    d: int = 1
    a: float = 1.0
    n_c: int = 16
    M: int = 1

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise GridError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.a <= 0:
            raise GridError("cell side must be positive")
        if self.n_c < 4 or self.n_c % 2:
            raise GridError(f"n_c must be even and >= 4, got {self.n_c}")
        if self.M < 1:
            raise GridError("supercell multiplier must be >= 1")

    @property
    def n(self) -> int:
        """Points per axis on the supercell."""
        return self.n_c * self.M

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def n_pts(self) -> int:
        return self.n**self.d

    @property
    def L(self) -> float:
        return self.M * self.a

    @property
    def h(self) -> float:
        return self.a / self.n_c

    @property
    def weight(self) -> float:
        return self.h**self.d

    @property
    def volume(self) -> float:
        return self.L**self.d

    def cell(self) -> "LatticeSpec":
        """The unit-cell grid (M = 1)."""
        return LatticeSpec(self.d, self.a, self.n_c, 1)

    def with_M(self, M: int) -> "LatticeSpec":
        return LatticeSpec(self.d, self.a, self.n_c, M)

    def to_dict(self) -> dict:
        return {"d": self.d, "a": self.a, "n_c": self.n_c, "M": self.M}

    def coords(self) -> list[np.ndarray]:
        """Meshgrid of point coordinates, each array of shape ``self.shape``."""
        x = np.arange(self.n) * self.h
        return np.meshgrid(*([x] * self.d), indexing="ij")

    def distance_to(self, center) -> np.ndarray:
        """Minimum-image distance from every grid point to ``center``."""
        center = np.broadcast_to(np.asarray(center, dtype=float), (self.d,))
        r2 = np.zeros(self.shape)
        for x, c in zip(self.coords(), center):
            dx = (x - c + 0.5 * self.L) % self.L - 0.5 * self.L
            r2 += dx * dx
        return np.sqrt(r2)


@dataclass(frozen=True, eq=False)
class GridFunction:
    spec: LatticeSpec
    values: np.ndarray
    real: bool = True

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.size != self.spec.n_pts:
            raise GridError(f"expected {self.spec.n_pts} values, got {v.size}")
        v = v.reshape(self.spec.shape)
        if self.real:
            if np.iscomplexobj(v):
                if np.max(np.abs(v.imag), initial=0.0) > 1e-12:
                    raise GridError("real-tagged function has imaginary part")
                v = v.real
            v = v.astype(float)
        else:
            v = v.astype(complex)
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, spec: LatticeSpec, real: bool = True) -> "GridFunction":
        return cls(spec, np.zeros(spec.shape), real)

    @classmethod
    def from_callable(cls, spec: LatticeSpec, fn, real: bool = True) -> "GridFunction":
        return cls(spec, fn(*spec.coords()), real)

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def integral(self) -> complex | float:
        return self.values.sum() * self.spec.weight

    def inner(self, other: "GridFunction") -> complex | float:
        """``int conj(f) g``."""
        return np.vdot(self.values, other.values) * self.spec.weight

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.spec.weight))

    def _new(self, values, real=None) -> "GridFunction":
        return GridFunction(self.spec, values, self.real if real is None else real)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        _check_same(self, other)
        return self._new(self.values + other.values, self.real and other.real)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        _check_same(self, other)
        return self._new(self.values - other.values, self.real and other.real)

    def __mul__(self, c) -> "GridFunction":
        if isinstance(c, GridFunction):
            _check_same(self, c)
            return self._new(self.values * c.values, self.real and c.real)
        return self._new(self.values * c, self.real and np.isrealobj(c))

    __rmul__ = __mul__

    def __neg__(self) -> "GridFunction":
        return self._new(-self.values)

    def abs2(self) -> "GridFunction":
        return GridFunction(self.spec, np.abs(self.values) ** 2, True)

    def save(self, path: str | Path) -> None:
        save_grid_function(self, path)


def _check_same(f: GridFunction, g: GridFunction) -> None:
    if f.spec != g.spec:
        raise GridError("grid functions live on different lattices")


def wavevector_components(spec: LatticeSpec) -> list[np.ndarray]:
    """Per-axis k components as meshgrid arrays in FFT order."""
    k1 = 2 * np.pi * np.fft.fftfreq(spec.n, d=spec.h)
    return np.meshgrid(*([k1] * spec.d), indexing="ij")


def wavevectors(spec: LatticeSpec) -> np.ndarray:
    """All k-vectors, shape ``(n_pts, d)``, in row-major FFT order."""
    return np.stack([k.reshape(-1) for k in wavevector_components(spec)], axis=1)


def k_squared(spec: LatticeSpec) -> np.ndarray:
    return sum(k * k for k in wavevector_components(spec))


def fourier(f: GridFunction) -> GridFunction:
    return GridFunction(f.spec, np.fft.fftn(f.values) * f.spec.weight, real=False)


def inverse_fourier(fh: GridFunction, real: bool = False) -> GridFunction:
    return GridFunction(fh.spec, np.fft.ifftn(fh.values) / fh.spec.weight, real=real)


def laplacian_apply(f: GridFunction) -> GridFunction:
    """Return ``-Laplacian f`` (multiplication by |k|^2 in Fourier space)."""
    out = np.fft.ifftn(k_squared(f.spec) * np.fft.fftn(f.values))
    return GridFunction(f.spec, out.real if f.real else out, f.real)


def gradient_norm_sq(f: GridFunction) -> float:
    """``int |grad f|^2`` evaluated spectrally."""
    fh = np.fft.fftn(f.values) * f.spec.weight
    return float(np.sum(k_squared(f.spec) * np.abs(fh) ** 2) / f.spec.volume)


def lattice_shift(spec: LatticeSpec, tau) -> tuple[int, ...]:
    """Grid-index shift for a lattice vector; rejects non-lattice vectors."""
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (spec.d,))
    cells = tau / spec.a
    if not np.allclose(cells, np.round(cells), atol=1e-9):
        raise GridError(f"translation {tuple(tau)} is not a lattice vector")
    return tuple(int(round(c)) * spec.n_c for c in cells)


def grid_shift(spec: LatticeSpec, tau) -> tuple[int, ...]:
    """Grid-index shift for any grid-commensurate vector."""
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (spec.d,))
    steps = tau / spec.h
    if not np.allclose(steps, np.round(steps), atol=1e-9):
        raise GridError(f"translation {tuple(tau)} is not grid-commensurate")
    return tuple(int(round(s)) for s in steps)


def translate(f: GridFunction, tau, lattice_only: bool = True) -> GridFunction:
    """``f(. - tau)``: exact cyclic index roll."""
    shift = lattice_shift(f.spec, tau) if lattice_only else grid_shift(f.spec, tau)
    return GridFunction(f.spec, np.roll(f.values, shift, axis=tuple(range(f.spec.d))), f.real)


def periodize(cell_values: np.ndarray, spec: LatticeSpec) -> np.ndarray:
    """Tile a unit-cell array onto the supercell."""
    return np.tile(np.asarray(cell_values).reshape((spec.n_c,) * spec.d), (spec.M,) * spec.d)


def fourier_matrix(spec: LatticeSpec) -> np.ndarray:
    """Unitary DFT matrix acting on flattened grid vectors."""
    n = spec.n_pts
    eye = np.eye(n).reshape((n,) + spec.shape)
    F = np.fft.fftn(eye, axes=tuple(range(1, spec.d + 1)), norm="ortho")
    return F.reshape(n, n).T


def multiplier_matrix(spec: LatticeSpec, symbol: np.ndarray) -> np.ndarray:
    """Dense matrix of a Fourier multiplier in the orthonormal position basis."""
    F = fourier_matrix(spec)
    return (F.conj().T * np.asarray(symbol).reshape(-1)) @ F


def save_grid_function(f: GridFunction, path: str | Path) -> None:
    """Little-endian float64 payload plus a JSON sidecar."""
    path = Path(path)
    data = f.values.reshape(-1)
    if f.real:
        payload = data.astype("<f8")
    else:
        payload = np.empty(2 * data.size, dtype="<f8")
        payload[0::2], payload[1::2] = data.real, data.imag
    path.write_bytes(payload.tobytes())
    meta = dict(f.spec.to_dict(), tag="real" if f.real else "complex", version=FORMAT_VERSION)
    Path(str(path) + ".json").write_text(json.dumps(meta, sort_keys=True))


def load_grid_function(path: str | Path) -> GridFunction:
    path = Path(path)
    meta = json.loads(Path(str(path) + ".json").read_text())
    if meta.get("version") != FORMAT_VERSION:
        raise GridError(f"unsupported grid file version {meta.get('version')}")
    spec = LatticeSpec(meta["d"], meta["a"], meta["n_c"], meta["M"])
    raw = np.frombuffer(path.read_bytes(), dtype="<f8")
    if meta["tag"] == "real":
        return GridFunction(spec, raw, True)
    return GridFunction(spec, raw[0::2] + 1j * raw[1::2], False)
