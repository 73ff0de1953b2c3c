"""Grid and field containers shared across the package.

All quantities are dimensionless: lengths in units of the radial harmonic
oscillator length, energies in units of the radial trap quantum, times in
inverse trap frequencies.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid2D:
    """Cartesian grid centered on the origin, cell-centered sampling."""

    nx: int
    ny: int
    extent_x: float
    extent_y: float

    def __post_init__(self):
        if self.nx < 16 or self.ny < 16:
            raise GridError(f"grid too coarse: {self.nx}x{self.ny} (need >= 16)")
        if self.extent_x <= 0 or self.extent_y <= 0:
            raise GridError("grid extent must be positive")

    @property
    def dx(self) -> float:
        return self.extent_x / self.nx

    @property
    def dy(self) -> float:
        return self.extent_y / self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def x(self) -> np.ndarray:
        return -0.5 * self.extent_x + (np.arange(self.nx) + 0.5) * self.dx

    @property
    def y(self) -> np.ndarray:
        return -0.5 * self.extent_y + (np.arange(self.ny) + 0.5) * self.dy

    def meshgrid(self):
        return np.meshgrid(self.x, self.y, indexing="ij")

    def radius(self) -> np.ndarray:
        X, Y = self.meshgrid()
        return np.hypot(X, Y)

    def azimuth(self) -> np.ndarray:
        X, Y = self.meshgrid()
        return np.arctan2(Y, X)

    def check_encloses_ring(self, ring_radius: float, margin: float = 6.0):
        """The box must leave `margin` radial widths outside the ring."""
        half = 0.5 * min(self.extent_x, self.extent_y)
        if half <= ring_radius + margin:
            raise GridError(
                f"grid half-extent {half} does not enclose ring radius "
                f"{ring_radius} plus margin {margin}"
            )


@dataclass
class ComplexField2D:
    """Order parameter sampled on a Grid2D, normalized to unit total density."""

    grid: Grid2D
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.shape != (self.grid.nx, self.grid.ny):
            raise GridError(
                f"field shape {self.values.shape} does not match grid "
                f"({self.grid.nx}, {self.grid.ny})"
            )

    def norm_squared(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.cell_area)

    def normalized(self) -> "ComplexField2D":
        return ComplexField2D(
            self.grid, self.values / np.sqrt(self.norm_squared()), self.time
        )

    def density(self) -> "DensityImage":
        return DensityImage(self.grid, np.abs(self.values) ** 2, self.time)

    def copy(self) -> "ComplexField2D":
        return ComplexField2D(self.grid, self.values.copy(), self.time)


@dataclass
class DensityImage:
    """Fluorescence-like snapshot: nonnegative density integrating to 1."""

    grid: Grid2D
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.grid.nx, self.grid.ny):
            raise GridError("image shape does not match grid")

    def total(self) -> float:
        return float(np.sum(self.values) * self.grid.cell_area)


@dataclass
class RadialProfile:
    """Radial part f_l(r) of an OAM eigenstate, with 2*pi*int f^2 r dr = 1."""

    r: np.ndarray
    f: np.ndarray
    l: int
    mu: float
    g2d: float = 0.0
    ring_radius: float = 0.0
    residual: float = 0.0
    iterations: int = 0
    _spline: object = field(default=None, repr=False, compare=False)

    def norm_squared(self) -> float:
        return float(2.0 * np.pi * np.trapezoid(self.f**2 * self.r, self.r))

    def __call__(self, r):
        """Cubic-interpolated f(r); zero outside the tabulated range."""
        from scipy.interpolate import CubicSpline

        if self._spline is None:
            rr = np.concatenate(([0.0], self.r))
            ff = np.concatenate(([0.0 if self.l > 0 else self.f[0]], self.f))
            object.__setattr__(self, "_spline", CubicSpline(rr, ff, bc_type="natural"))
        r = np.asarray(r, dtype=float)
        out = np.where(r <= self.r[-1], self._spline(np.clip(r, 0.0, self.r[-1])), 0.0)
        return out
