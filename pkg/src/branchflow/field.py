"""Grid functions on a truncated periodic cube with spectral calculus.

DFT convention: the forward transform is unnormalized and the inverse carries
the 1/N^n factor (numpy/scipy ``norm="backward"``).  A constant field ``c``
therefore has zero-mode coefficient ``c * N**n``.  Spectral twins are stored
as real-to-complex half spectra (``rfftn`` layout, last axis halved).

Samples are held as n-d arrays indexed ``[i1, i2, ...]`` with axis 0 along
x1.  Flattening in Fortran order gives the axis-0-fastest layout used by the
snapshot format.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.fft as sfft

DFT_CONVENTION = "forward-unnormalized/inverse-1/N^n, rfftn half spectrum"
SNAPSHOT_VERSION = 1

_workers = 1


class ParameterError(ValueError):
    """Raised when a parameter violates its documented constraints."""


def set_threads(n: int) -> None:
    """Pin the FFT worker count (results are deterministic per count)."""
    global _workers
    _workers = max(1, int(n))


@dataclass(frozen=True)
class GridSpec:
    n: int
    N: int
    L: float

    def __post_init__(self):
        problems = []
        if self.n not in (2, 3):
            problems.append(f"dimension n={self.n} not in {{2, 3}}")
        if self.N % 2 or self.N < 8:
            problems.append(f"N={self.N} must be even and >= 8")
        if not self.L > 0:
            problems.append(f"L={self.L} must be positive")
        if problems:
            raise ParameterError("; ".join(problems))

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.n

    @property
    def spectral_shape(self) -> tuple[int, ...]:
        return (self.N,) * (self.n - 1) + (self.N // 2 + 1,)

    def axis(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.N)

    def coords(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays, one per axis."""
        x = self.axis()
        out = []
        for j in range(self.n):
            shp = [1] * self.n
            shp[j] = self.N
            out.append(x.reshape(shp))
        return out

    def mesh(self) -> list[np.ndarray]:
        return [np.broadcast_to(c, self.shape) for c in self.coords()]


def make_grid(n: int, N: int, L: float) -> GridSpec:
    return GridSpec(int(n), int(N), float(L))


@dataclass(frozen=True)
class TimeGrid:
    s_start: float
    T_end: float
    M: int

    def __post_init__(self):
        if not self.T_end > self.s_start:
            raise ParameterError(f"T_end={self.T_end} must exceed s_start={self.s_start}")
        if self.M < 2:
            raise ParameterError(f"M={self.M} must be >= 2")

    @property
    def dt(self) -> float:
        return (self.T_end - self.s_start) / (self.M - 1)

    def nodes(self) -> np.ndarray:
        return self.s_start + self.dt * np.arange(self.M)


class _Spectral:
    """Cached wavenumbers, multipliers and masks for one grid."""

    def __init__(self, grid: GridSpec):
        self.grid = grid
        N, n = grid.N, grid.n
        scale = np.pi / grid.L
        full = np.fft.fftfreq(N, 1.0 / N)  # integer mode numbers
        half = np.arange(N // 2 + 1, dtype=float)
        self.k_full = []
        self.k_odd = []
        self.modes = []
        for j in range(n):
            m = half if j == n - 1 else full
            shp = [1] * n
            shp[j] = m.size
            kf = (scale * m).reshape(shp)
            # odd-order derivatives drop the Nyquist mode so real fields stay real
            ko = np.where(np.abs(m) == N // 2, 0.0, scale * m).reshape(shp)
            self.k_full.append(kf)
            self.k_odd.append(ko)
            self.modes.append(np.abs(m).reshape(shp))
        self.k2_full = sum(k * k for k in self.k_full)
        self.k2_odd = sum(k * k for k in self.k_odd)
        keep = np.ones(grid.spectral_shape, dtype=bool)
        for m in self.modes:
            keep = keep & (3 * m < N)
        self.keep = keep
        inv = np.zeros(grid.spectral_shape)
        np.divide(1.0, self.k2_odd, out=inv, where=self.k2_odd > 0)
        self.inv_k2 = inv

    def multiplier(self, beta: tuple[int, ...]) -> np.ndarray | complex:
        mult: np.ndarray | complex = 1.0
        for j, b in enumerate(beta):
            if b == 1:
                mult = mult * (1j * self.k_odd[j])
            elif b == 2:
                mult = mult * (-self.k_full[j] ** 2)
        return mult


@lru_cache(maxsize=16)
def spectral_ops(grid: GridSpec) -> _Spectral:
    return _Spectral(grid)


def fwd(samples: np.ndarray, n: int) -> np.ndarray:
    """Unnormalized forward rfftn over the last ``n`` axes."""
    return sfft.rfftn(samples, axes=tuple(range(-n, 0)), workers=_workers)


def inv(spectrum: np.ndarray, grid: GridSpec) -> np.ndarray:
    return sfft.irfftn(spectrum, s=grid.shape, axes=tuple(range(-grid.n, 0)), workers=_workers)


def check_beta(beta, n: int) -> tuple[int, ...]:
    beta = tuple(int(b) for b in beta)
    if len(beta) != n or any(b < 0 for b in beta):
        raise ParameterError(f"multiindex {beta} invalid for n={n}")
    if sum(beta) > 2:
        raise ParameterError(f"|beta|={sum(beta)} > 2 is not supported")
    return beta


def multiindices(n: int, max_order: int = 2) -> list[tuple[int, ...]]:
    """All multiindices with |beta| <= max_order, ordered by order then lexicographically."""
    out = []
    for order in range(max_order + 1):
        for beta in np.ndindex(*(order + 1,) * n):
            if sum(beta) == order:
                out.append(tuple(int(b) for b in beta))
    return sorted(out, key=lambda b: (sum(b), tuple(-x for x in b)))


def _finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite samples in {what}")
    return arr


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: GridSpec
    samples: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=float)
        if arr.shape != self.grid.shape:
            arr = arr.reshape(self.grid.shape, order="F")
        object.__setattr__(self, "samples", _finite(arr, "ScalarField"))

    def spectral(self) -> np.ndarray:
        return fwd(self.samples, self.grid.n)

    @classmethod
    def from_spectral(cls, grid: GridSpec, spectrum: np.ndarray, t: float = 0.0) -> "ScalarField":
        return cls(grid, inv(spectrum, grid), t)

    def flat(self) -> np.ndarray:
        """Samples in axis-0-fastest order."""
        return self.samples.ravel(order="F")

    def __add__(self, other):
        return ScalarField(self.grid, self.samples + other.samples, self.t)

    def __sub__(self, other):
        return ScalarField(self.grid, self.samples - other.samples, self.t)

    def __mul__(self, c: float):
        return ScalarField(self.grid, c * self.samples, self.t)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: GridSpec
    data: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=float)
        if arr.shape != (self.grid.n,) + self.grid.shape:
            raise ParameterError(
                f"vector data shape {arr.shape} does not match {(self.grid.n,) + self.grid.shape}"
            )
        object.__setattr__(self, "data", _finite(arr, "VectorField"))

    @classmethod
    def from_components(cls, comps) -> "VectorField":
        comps = list(comps)
        grid = comps[0].grid
        if any(c.grid != grid for c in comps) or len(comps) != grid.n:
            raise ParameterError("components must share one grid and number grid.n")
        return cls(grid, np.stack([c.samples for c in comps]), comps[0].t)

    @classmethod
    def from_spectral(cls, grid: GridSpec, spectrum: np.ndarray, t: float = 0.0) -> "VectorField":
        return cls(grid, inv(spectrum, grid), t)

    @classmethod
    def zeros(cls, grid: GridSpec, t: float = 0.0) -> "VectorField":
        return cls(grid, np.zeros((grid.n,) + grid.shape), t)

    @property
    def components(self) -> tuple[ScalarField, ...]:
        return tuple(ScalarField(self.grid, c, self.t) for c in self.data)

    def spectral(self) -> np.ndarray:
        return fwd(self.data, self.grid.n)

    def with_time(self, t: float) -> "VectorField":
        return VectorField(self.grid, self.data, t)

    def __add__(self, other):
        return VectorField(self.grid, self.data + other.data, self.t)

    def __sub__(self, other):
        return VectorField(self.grid, self.data - other.data, self.t)

    def __neg__(self):
        return VectorField(self.grid, -self.data, self.t)

    def __mul__(self, c: float):
        return VectorField(self.grid, c * self.data, self.t)

    __rmul__ = __mul__


def spectral_roundtrip(f: ScalarField) -> ScalarField:
    return ScalarField.from_spectral(f.grid, f.spectral(), f.t)


def derivative(f, beta) -> "ScalarField | VectorField":
    """Spectral derivative D^beta for |beta| <= 2, applied componentwise to vectors."""
    beta = check_beta(beta, f.grid.n)
    if sum(beta) == 0:
        return f
    mult = spectral_ops(f.grid).multiplier(beta)
    return type(f).from_spectral(f.grid, mult * f.spectral(), f.t)


def laplacian(f):
    ops = spectral_ops(f.grid)
    return type(f).from_spectral(f.grid, -ops.k2_full * f.spectral(), f.t)


def dealias(f_hat: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Zero every mode with some |k_j| >= N/3 (2/3 rule); idempotent."""
    return np.where(spectral_ops(grid).keep, f_hat, 0.0)


def dealias_field(f):
    return type(f).from_spectral(f.grid, dealias(f.spectral(), f.grid), f.t)


def direct_dft(samples: np.ndarray) -> np.ndarray:
    """Full complex DFT by explicit summation; small grids only."""
    out = samples.astype(complex)
    for axis in range(samples.ndim):
        N = samples.shape[axis]
        j = np.arange(N)
        W = np.exp(-2j * np.pi * np.outer(j, j) / N)
        out = np.moveaxis(np.tensordot(W, np.moveaxis(out, axis, 0), axes=(1, 0)), 0, axis)
    return out


# ---------------------------------------------------------------- snapshots


def write_snapshot(f, directory, stem: str) -> list[Path]:
    """Write one raw little-endian float64 file per component plus a JSON sidecar each."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    comps = [f] if isinstance(f, ScalarField) else list(f.components)
    written = []
    for i, c in enumerate(comps):
        base = directory / f"{stem}_c{i}"
        c.flat().astype("<f8").tofile(base.with_suffix(".bin"))
        meta = {
            "n": c.grid.n,
            "N": c.grid.N,
            "L": c.grid.L,
            "t": float(c.t),
            "component": i,
            "dft_convention": DFT_CONVENTION,
            "version": SNAPSHOT_VERSION,
        }
        base.with_suffix(".json").write_text(json.dumps(meta, indent=2))
        written.append(base.with_suffix(".bin"))
    return written


def read_snapshot(directory, stem: str):
    """Inverse of :func:`write_snapshot`; returns a ScalarField or VectorField."""
    directory = Path(directory)
    comps = []
    i = 0
    while (directory / f"{stem}_c{i}.json").exists():
        meta = json.loads((directory / f"{stem}_c{i}.json").read_text())
        grid = make_grid(meta["n"], meta["N"], meta["L"])
        raw = np.fromfile(directory / f"{stem}_c{i}.bin", dtype="<f8")
        comps.append(ScalarField(grid, raw.reshape(grid.shape, order="F"), meta["t"]))
        i += 1
    if not comps:
        raise FileNotFoundError(f"no snapshot {stem!r} in {directory}")
    return comps[0] if len(comps) == 1 else VectorField.from_components(comps)
