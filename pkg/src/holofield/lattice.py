"""Periodic Minkowski lattices and Fourier conventions.

Signature is (+, -, -, -).  The forward transform uses the kernel
``exp(+i p.x)`` with the Minkowski pairing ``p.x = p0 x0 - pvec . xvec``::

    fhat(p) = sum_x f(x) exp(+i p.x) dx^d
    f(x)    = (1/V) sum_p fhat(p) exp(-i p.x)

so that ``(1/V) sum_p`` plays the role of ``int d^dp / (2 pi)^d`` and the
continuum ``(2 pi)^d delta(p)`` becomes ``V`` times a Kronecker delta.
Momenta are stored in FFT order and take values in ``[-pi/dx, pi/dx)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "Grid",
    "Scales",
    "RegularizedDelta",
    "forward_ft",
    "inverse_ft",
    "nascent_delta",
    "sign_epsilon",
    "minkowski_dot",
    "minkowski_square",
]


def _as_tuple(value, n, cast):
    if np.ndim(value) == 0:
        return tuple(cast(value) for _ in range(n))
    out = tuple(cast(v) for v in value)
    if len(out) != n:
        raise ValueError(f"expected {n} entries, got {len(out)}")
    return out


@dataclass(frozen=True)
class Grid:
    """Periodic lattice with one time axis followed by spatial axes."""

    points: tuple
    spacing: tuple

    def __init__(self, points: Sequence[int] | int, spacing=1.0, dim: int | None = None):
        if np.ndim(points) == 0:
            if dim is None:
                raise ValueError("dim is required when points is a scalar")
            pts = _as_tuple(points, dim, int)
        else:
            pts = tuple(int(n) for n in points)
        if not 2 <= len(pts) <= 4:
            raise ValueError("spacetime dimension must be 2, 3 or 4")
        if any(n <= 0 or n % 2 for n in pts):
            raise ValueError(f"points per axis must be positive and even, got {pts}")
        sp = _as_tuple(spacing, len(pts), float)
        if any(s <= 0 for s in sp):
            raise ValueError("spacing must be positive")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "spacing", sp)

    @property
    def dim(self) -> int:
        return len(self.points)

    @property
    def shape(self) -> tuple:
        return self.points

    @property
    def size(self) -> int:
        return int(np.prod(self.points))

    @property
    def momentum_spacing(self) -> tuple:
        return tuple(2 * np.pi / (n * a) for n, a in zip(self.points, self.spacing))

    @property
    def extent(self) -> tuple:
        return tuple(n * a for n, a in zip(self.points, self.spacing))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extent))

    def axis_momenta(self, axis: int) -> np.ndarray:
        n, a = self.points[axis], self.spacing[axis]
        return 2 * np.pi * np.fft.fftfreq(n, d=a)

    def axis_positions(self, axis: int, centered: bool = True) -> np.ndarray:
        """Coordinates along one axis; ``centered`` wraps them into [-L/2, L/2)."""
        n, a = self.points[axis], self.spacing[axis]
        idx = np.fft.fftfreq(n, d=1.0 / n) if centered else np.arange(n)
        return idx * a

    def momenta(self) -> list:
        return np.meshgrid(*[self.axis_momenta(i) for i in range(self.dim)], indexing="ij")

    def positions(self, centered: bool = True) -> list:
        return np.meshgrid(
            *[self.axis_positions(i, centered) for i in range(self.dim)], indexing="ij"
        )

    def momentum_indices(self) -> np.ndarray:
        """Signed integer momentum labels, flattened in C order, shape (size, dim)."""
        axes = [np.fft.fftfreq(n, d=1.0 / n).astype(int) for n in self.points]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def momenta_flat(self) -> np.ndarray:
        idx = self.momentum_indices()
        return idx * np.asarray(self.momentum_spacing)

    def flat_index(self, index_vector) -> int:
        """Flat position of an integer momentum label (taken modulo the grid)."""
        iv = np.mod(np.asarray(index_vector, dtype=int), self.points)
        return int(np.ravel_multi_index(tuple(iv), self.points))

    def momentum_of(self, index_vector) -> np.ndarray:
        iv = np.asarray(index_vector, dtype=float)
        return iv * np.asarray(self.momentum_spacing)

    def wrap_index(self, index_vector) -> np.ndarray:
        """Map integer labels into the symmetric window [-n/2, n/2)."""
        n = np.asarray(self.points)
        iv = np.asarray(index_vector, dtype=int)
        return np.mod(iv + n // 2, n) - n // 2

    def check_field(self, field: np.ndarray) -> None:
        if tuple(np.shape(field)[: self.dim]) != self.points:
            raise ValueError(
                f"field shape {np.shape(field)} does not match grid {self.points}"
            )


def minkowski_dot(p, x) -> np.ndarray:
    """Minkowski pairing along the first axis of stacked component arrays."""
    p = np.asarray(p)
    x = np.asarray(x)
    return p[0] * x[0] - np.sum(p[1:] * x[1:], axis=0)


def minkowski_square(p) -> np.ndarray:
    return minkowski_dot(p, p)


def forward_ft(field: np.ndarray, grid: Grid) -> np.ndarray:
    """Lattice version of ``int f(x) exp(+i p.x) d^dx``."""
    field = np.asarray(field)
    if field.shape != grid.shape:
        raise ValueError(f"field shape {field.shape} does not match grid {grid.shape}")
    out = np.fft.ifft(field, axis=0, norm="forward")
    if grid.dim > 1:
        out = np.fft.fftn(out, axes=tuple(range(1, grid.dim)))
    return out * grid.cell_volume


def inverse_ft(field_hat: np.ndarray, grid: Grid) -> np.ndarray:
    """Lattice version of ``int d^dp/(2 pi)^d fhat(p) exp(-i p.x)``."""
    field_hat = np.asarray(field_hat)
    if field_hat.shape != grid.shape:
        raise ValueError(f"array shape {field_hat.shape} does not match grid {grid.shape}")
    out = np.fft.fft(field_hat, axis=0)
    if grid.dim > 1:
        out = np.fft.ifftn(out, axes=tuple(range(1, grid.dim)), norm="forward")
    return out / grid.volume


def nascent_delta(value, width: float, shape: str = "gaussian"):
    """Normalized approximation of the Dirac delta with the given width."""
    if not width > 0:
        raise ValueError(f"width must be positive, got {width}")
    v = np.asarray(value, dtype=float)
    if shape == "gaussian":
        out = np.exp(-0.5 * (v / width) ** 2) / (width * np.sqrt(2 * np.pi))
    elif shape == "triangular":
        out = np.clip(1.0 - np.abs(v) / width, 0.0, None) / width
    else:
        raise ValueError(f"unknown delta shape {shape!r}")
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class RegularizedDelta:
    width: float
    shape: str = "gaussian"

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f"width must be positive, got {self.width}")
        if self.shape not in ("gaussian", "triangular"):
            raise ValueError(f"unknown delta shape {self.shape!r}")

    def __call__(self, value):
        return nascent_delta(value, self.width, self.shape)

    @property
    def peak(self) -> float:
        return float(nascent_delta(0.0, self.width, self.shape))

    @classmethod
    def default_for(cls, grid: Grid) -> "RegularizedDelta":
        return cls(2.0 * min(grid.momentum_spacing))


def sign_epsilon(value):
    """Sign function with the convention sign(0) = 0."""
    out = np.sign(np.asarray(value, dtype=float))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class Scales:
    """Length scales of the construction; checked for the required ordering."""

    eps: float
    l_min: float
    l_lambda: float
    l_macro: float
    omega_min: float

    def __post_init__(self):
        if not (self.eps < self.l_min < self.l_macro):
            raise ValueError("require eps < l_min < l_macro")
        if not (self.eps < self.l_lambda < self.l_macro):
            raise ValueError("require eps < l_lambda < l_macro")
        lo, hi = 1.0 / self.l_min, 1.0 / self.eps
        if not (lo <= self.omega_min <= hi):
            raise ValueError(f"omega_min must lie in [{lo:g}, {hi:g}]")

    @property
    def theta(self) -> float:
        return 1.0 / np.sqrt(self.l_min * self.omega_min)
