"""Uniform box lattices, scalar fields, and second-order discrete calculus.

Everything downstream (solvers, Fourier operators, reconstruction) works on a
single geometry: a uniform lattice on the cube [-L, L]^3 that includes both
endpoints on every axis.  Arrays are indexed ``values[ix, iy, iz]``.
"""

from __future__ import annotations

import dataclasses
from functools import cached_property

import numpy as np

from .errors import ValidationError


@dataclasses.dataclass(frozen=True)
class Grid:
    """Uniform lattice on [-L, L]^3, identical on all three axes.

    Parameters
    ----------
    n_per_axis : int
        Number of nodes per axis, at least 8.
    box_halfwidth : float
        Half the box edge length L.
    """

    n_per_axis: int
    box_halfwidth: float

    def __post_init__(self):
        if self.n_per_axis < 8:
            raise ValidationError("n_per_axis must be at least 8")
        if not self.box_halfwidth > 0:
            raise ValidationError("box_halfwidth must be positive")

    @property
    def spacing(self) -> float:
        return 2.0 * self.box_halfwidth / (self.n_per_axis - 1)

    @property
    def shape(self):
        n = self.n_per_axis
        return (n, n, n)

    @property
    def node_count(self) -> int:
        return self.n_per_axis ** 3

    @property
    def cell_volume(self) -> float:
        return self.spacing ** 3

    @cached_property
    def axis(self) -> np.ndarray:
        """Node coordinates along one axis, from -L to L inclusive."""
        n, L = self.n_per_axis, self.box_halfwidth
        return -L + self.spacing * np.arange(n)

    @cached_property
    def xyz(self):
        """Three (n, n, n) coordinate arrays in ``ij`` indexing."""
        x, y, z = np.meshgrid(self.axis, self.axis, self.axis, indexing="ij")
        for a in (x, y, z):
            a.flags.writeable = False
        return x, y, z

    @cached_property
    def radius(self) -> np.ndarray:
        x, y, z = self.xyz
        r = np.sqrt(x * x + y * y + z * z)
        r.flags.writeable = False
        return r

    @cached_property
    def interior_mask(self) -> np.ndarray:
        """True away from the six box faces (where centered stencils apply)."""
        m = np.zeros(self.shape, dtype=bool)
        m[1:-1, 1:-1, 1:-1] = True
        m.flags.writeable = False
        return m


@dataclasses.dataclass(frozen=True)
class ScalarField:
    """A complex (or real) grid function.

    ``values`` has shape ``grid.shape`` and is frozen after construction;
    operations return new fields.  ``kind`` is carried into the serialized
    header (e.g. "conductivity", "potential", "generic").
    """

    grid: Grid
    values: np.ndarray
    kind: str = "generic"

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != self.grid.shape:
            raise ValidationError(
                f"field shape {v.shape} does not match grid {self.grid.shape}")
        if v.dtype not in (np.float64, np.complex128):
            v = v.astype(np.complex128)
        v = np.ascontiguousarray(v)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid, fn, kind: str = "generic") -> "ScalarField":
        x, y, z = grid.xyz
        return cls(grid, np.asarray(fn(x, y, z)), kind)

    @classmethod
    def zeros(cls, grid: Grid, kind: str = "generic") -> "ScalarField":
        return cls(grid, np.zeros(grid.shape), kind)

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values, self.kind)

    def l2_norm(self) -> float:
        """Discrete L2 norm with the cell-volume quadrature weight."""
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.cell_volume))


def validate_conductivity(field: ScalarField, ellipticity_c: float) -> np.ndarray:
    """Check 0 < c < gamma < 1/c everywhere and return the real values."""
    v = field.values
    if np.iscomplexobj(v):
        if np.max(np.abs(v.imag)) > 1e-12 * max(1.0, np.max(np.abs(v.real))):
            raise ValidationError("conductivity must be real valued")
        v = v.real
    if not (0.0 < ellipticity_c < 1.0):
        raise ValidationError("ellipticity constant must lie in (0, 1)")
    lo, hi = float(np.min(v)), float(np.max(v))
    if lo <= ellipticity_c or hi >= 1.0 / ellipticity_c:
        raise ValidationError(
            f"conductivity range [{lo:.4g}, {hi:.4g}] violates "
            f"c={ellipticity_c} < gamma < {1.0 / ellipticity_c:.4g}")
    return v


@dataclasses.dataclass(frozen=True)
class ComplexFrequency:
    """A vector zeta in C^3 with zeta . zeta = 0 and k = |zeta| >= 1."""

    zeta: np.ndarray
    k: float = None  # type: ignore[assignment]

    def __post_init__(self):
        z = np.asarray(self.zeta, dtype=np.complex128).reshape(3)
        z.flags.writeable = False
        object.__setattr__(self, "zeta", z)
        k = float(np.sqrt(np.sum(z.real ** 2) + np.sum(z.imag ** 2)))
        object.__setattr__(self, "k", k)
        if k < 1.0:
            raise ValidationError(f"|zeta| = {k:.4g} must be at least 1")
        iso = abs(np.sum(z * z))
        if iso > 1e-12 * k * k:
            raise ValidationError(
                f"zeta.zeta = {iso:.3e} violates isotropy bound 1e-12*k^2")

    @classmethod
    def from_orthogonal(cls, k: float, a_dir, b_dir) -> "ComplexFrequency":
        """Build zeta = (k/sqrt(2)) (a + i b) from two orthonormal directions."""
        a = np.asarray(a_dir, dtype=float)
        b = np.asarray(b_dir, dtype=float)
        return cls(k / np.sqrt(2.0) * (a + 1j * b))


def _second_derivative(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    """7-point style second derivative along one axis.

    Centered in the interior; second-order one-sided at the two box faces.
    """
    u = np.moveaxis(values, axis, 0)
    out = np.empty_like(u)
    out[1:-1] = u[2:] - 2.0 * u[1:-1] + u[:-2]
    out[0] = 2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]
    out[-1] = 2.0 * u[-1] - 5.0 * u[-2] + 4.0 * u[-3] - u[-4]
    out /= h * h
    return np.moveaxis(out, 0, axis)


def gradient(field: ScalarField):
    """Discrete gradient, one ScalarField per axis.

    Centered second-order differences in the interior and one-sided
    second-order stencils on the box faces.
    """
    h = field.grid.spacing
    comps = np.gradient(field.values, h, edge_order=2)
    return tuple(field.with_values(c) for c in comps)


def laplacian(field: ScalarField) -> ScalarField:
    """7-point Laplacian (one-sided second-order rows on the box faces)."""
    h = field.grid.spacing
    out = _second_derivative(field.values, h, 0)
    out = out + _second_derivative(field.values, h, 1)
    out = out + _second_derivative(field.values, h, 2)
    return field.with_values(out)


def conjugated_laplacian(field: ScalarField, zeta: ComplexFrequency) -> ScalarField:
    """Apply the conjugated operator v -> (Laplacian + 2 zeta . grad) v."""
    lap = laplacian(field).values.astype(np.complex128)
    grads = gradient(field)
    for j in range(3):
        lap = lap + 2.0 * zeta.zeta[j] * grads[j].values
    return field.with_values(lap)
