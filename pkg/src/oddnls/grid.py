"""Uniform periodic grid on [-L, L) and sampled complex fields."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Symmetric periodic grid x_j = -L + j*dx, j = 0..N-1.

    The origin is the sample j = N/2 and -L is its own mirror image under
    periodicity, so x -> -x permutes the samples exactly.
    """

    n_points: int
    half_length: float

    def __post_init__(self):
        n = int(self.n_points)
        if n < 64 or n % 2:
            raise ValueError(f"n_points must be even and >= 64, got {self.n_points}")
        if not self.half_length > 0:
            raise ValueError(f"half_length must be positive, got {self.half_length}")
        object.__setattr__(self, "n_points", n)
        object.__setattr__(self, "half_length", float(self.half_length))

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_length / self.n_points

    @cached_property
    def x(self) -> np.ndarray:
        return -self.half_length + self.spacing * np.arange(self.n_points)

    @cached_property
    def k(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.spacing)

    @property
    def k_max(self) -> float:
        return np.pi / self.spacing

    @property
    def origin_index(self) -> int:
        return self.n_points // 2

    def reflect(self, values: np.ndarray) -> np.ndarray:
        """Samples of x -> values(-x)."""
        return np.roll(values[..., ::-1], 1, axis=-1)

    def integrate(self, values: np.ndarray) -> float | complex:
        """Trapezoidal rule on the periodic grid."""
        return self.spacing * np.sum(values, axis=-1)

    def deriv(self, values: np.ndarray, order: int = 1) -> np.ndarray:
        """Spectral derivative; the Nyquist mode is dropped for odd orders."""
        kk = (1j * self.k) ** order
        if order % 2:
            kk = kk.copy()
            kk[self.n_points // 2] = 0.0
        out = np.fft.ifft(kk * np.fft.fft(values, axis=-1), axis=-1)
        if np.isrealobj(values):
            return out.real
        return out

    def shift(self, values: np.ndarray, y: float) -> np.ndarray:
        """Spectral translation: samples of x -> values(x - y)."""
        phase = np.exp(-1j * self.k * y)
        phase[self.n_points // 2] = np.cos(self.k[self.n_points // 2] * y)
        out = np.fft.ifft(phase * np.fft.fft(values))
        if np.isrealobj(values):
            return out.real
        return out

    def checksum(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(np.int64(self.n_points).tobytes())
        h.update(np.float64(self.half_length).tobytes())
        return h.hexdigest()[:16]

    def to_dict(self) -> dict:
        return {"n_points": self.n_points, "half_length": self.half_length}


@dataclass(frozen=True)
class Field:
    """Complex samples on a Grid, optionally flagged as odd."""

    grid: Grid
    values: np.ndarray = field(repr=False)
    odd_sector: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if v.shape != (self.grid.n_points,):
            raise ValueError(
                f"values has shape {v.shape}, expected ({self.grid.n_points},)"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains NaN or Inf")
        if self.odd_sector:
            v = 0.5 * (v - self.grid.reflect(v))
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: Grid, odd_sector: bool = True) -> "Field":
        return cls(grid, np.zeros(grid.n_points, dtype=np.complex128), odd_sector)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def with_values(self, values: np.ndarray, odd_sector: bool | None = None) -> "Field":
        return Field(self.grid, values, self.odd_sector if odd_sector is None else odd_sector)

    def __mul__(self, c) -> "Field":
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def __add__(self, other: "Field") -> "Field":
        _same_grid(self, other)
        return Field(self.grid, self.values + other.values, self.odd_sector and other.odd_sector)

    def __sub__(self, other: "Field") -> "Field":
        _same_grid(self, other)
        return Field(self.grid, self.values - other.values, self.odd_sector and other.odd_sector)

    def conj(self) -> "Field":
        return self.with_values(np.conj(self.values))

    def odd_defect(self) -> float:
        """max |u(x) + u(-x)|; zero for an exactly odd field."""
        return float(np.max(np.abs(self.values + self.grid.reflect(self.values))))

    def is_odd(self, tol: float = 1e-10) -> bool:
        scale = max(float(np.max(np.abs(self.values))), 1e-300)
        return self.odd_defect() <= tol * scale

    def project_odd(self) -> "Field":
        return Field(self.grid, self.values, odd_sector=True)

    def deriv(self) -> np.ndarray:
        return self.grid.deriv(self.values)


def _same_grid(a: Field, b: Field) -> None:
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")


def symmetric_grid_check(grid: Grid) -> None:
    """Raise if the sample set is not closed under x -> -x."""
    x = grid.x
    if np.max(np.abs(grid.reflect(x)[1:] + x[1:])) > 1e-9 * grid.half_length:
        raise ValueError("grid is not symmetric about the origin")
