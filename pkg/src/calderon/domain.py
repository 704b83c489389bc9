"""The computational domain: a discrete ball inside the box, with a surface
quadrature on its staircase boundary.

Omega is the set of lattice nodes with |x| <= radius.  Interior nodes have all
six neighbors inside Omega; the remaining Omega nodes form the boundary layer.
Each boundary node carries the exact sphere normal x/|x| and a quadrature
weight derived from its exposed lattice faces: the faces of area h^2 are the
axis shadows of the local surface patch, so the patch area is estimated as
h^2 * (exposed face count) / (|nu_1| + |nu_2| + |nu_3|), then projected onto
the true sphere with the radial Jacobian (R/|x|)^2 (boundary nodes sit
slightly inside radius R; without the projection, quadratic surface moments
carry a persistent inset bias).
"""

from __future__ import annotations

import dataclasses
import hashlib

import numpy as np

from .errors import DomainMismatch, ValidationError
from .grid import Grid, ScalarField

_SHIFTS = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]


def _shifted(mask: np.ndarray, shift) -> np.ndarray:
    """Neighbor-membership mask; nodes outside the box count as outside."""
    out = np.zeros_like(mask)
    src = [slice(None)] * 3
    dst = [slice(None)] * 3
    for ax, s in enumerate(shift):
        if s == 1:
            src[ax] = slice(1, None)
            dst[ax] = slice(None, -1)
        elif s == -1:
            src[ax] = slice(None, -1)
            dst[ax] = slice(1, None)
    out[tuple(dst)] = mask[tuple(src)]
    return out


@dataclasses.dataclass(frozen=True)
class Domain:
    grid: Grid
    omega: np.ndarray            # (n,n,n) bool, all Omega nodes
    interior_flat: np.ndarray    # flat C-order indices of interior nodes
    boundary_flat: np.ndarray    # flat C-order indices of boundary nodes
    normals: np.ndarray          # (M, 3) outward unit normals
    weights: np.ndarray          # (M,) positive quadrature weights
    collar_width: float
    radius: float

    def __post_init__(self):
        for name in ("omega", "interior_flat", "boundary_flat", "normals", "weights"):
            arr = getattr(self, name)
            arr.flags.writeable = False
        if np.any(self.weights <= 0):
            raise ValidationError("boundary quadrature weights must be positive")
        margin = self.grid.box_halfwidth - self._max_abs_coord()
        if margin < self.collar_width - 1e-12:
            raise ValidationError(
                f"Omega comes within {margin:.4g} of the box boundary, "
                f"less than collar_width {self.collar_width:.4g}")

    def _max_abs_coord(self) -> float:
        ax = np.abs(self.grid.axis)
        idx = np.unravel_index(np.flatnonzero(self.omega.ravel()), self.grid.shape)
        return float(max(ax[idx[0]].max(), ax[idx[1]].max(), ax[idx[2]].max()))

    @property
    def n_boundary(self) -> int:
        return len(self.boundary_flat)

    @property
    def n_interior(self) -> int:
        return len(self.interior_flat)

    @property
    def surface_measure(self) -> float:
        return float(np.sum(self.weights))

    @property
    def boundary_points(self) -> np.ndarray:
        """(M, 3) coordinates of the boundary nodes."""
        ax = self.grid.axis
        ii = np.unravel_index(self.boundary_flat, self.grid.shape)
        return np.stack([ax[ii[0]], ax[ii[1]], ax[ii[2]]], axis=1)

    @property
    def interior_points(self) -> np.ndarray:
        ax = self.grid.axis
        ii = np.unravel_index(self.interior_flat, self.grid.shape)
        return np.stack([ax[ii[0]], ax[ii[1]], ax[ii[2]]], axis=1)

    @dataclasses.dataclass(frozen=True)
    class _Hash:
        value: str

    @property
    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.int64(self.grid.n_per_axis).tobytes())
        h.update(np.float64(self.grid.box_halfwidth).tobytes())
        h.update(np.float64(self.radius).tobytes())
        h.update(np.float64(self.collar_width).tobytes())
        h.update(self.boundary_flat.astype(np.int64).tobytes())
        return h.hexdigest()[:16]

    def collar_mask(self) -> np.ndarray:
        """Omega nodes within collar_width of the boundary sphere."""
        r = self.grid.radius
        return self.omega & (r >= self.radius - self.collar_width - 1e-12)


def ball_domain(grid: Grid, radius: float = None, collar_width: float = None) -> Domain:
    """Discrete ball of the given radius (default 0.7 L, collar 0.2 L)."""
    L = grid.box_halfwidth
    if radius is None:
        radius = 0.7 * L
    if collar_width is None:
        collar_width = 0.2 * L
    r = grid.radius
    omega = r <= radius * (1.0 + 1e-12)

    inside_count = np.zeros(grid.shape, dtype=np.int8)
    for s in _SHIFTS:
        inside_count += _shifted(omega, s)
    interior = omega & (inside_count == 6)
    boundary = omega & ~interior
    if not interior.any() or not boundary.any():
        raise ValidationError("degenerate domain: refine the grid or enlarge the ball")

    boundary_flat = np.flatnonzero(boundary.ravel())
    interior_flat = np.flatnonzero(interior.ravel())

    exposed = (6 - inside_count).astype(np.float64)
    e_bnd = exposed.ravel()[boundary_flat]

    ax = grid.axis
    ii = np.unravel_index(boundary_flat, grid.shape)
    pts = np.stack([ax[ii[0]], ax[ii[1]], ax[ii[2]]], axis=1)
    norms = np.linalg.norm(pts, axis=1)
    if np.any(norms < grid.spacing * 0.5):
        raise ValidationError("boundary node at the origin; enlarge the ball")
    normals = pts / norms[:, None]

    h = grid.spacing
    weights = h * h * e_bnd / np.sum(np.abs(normals), axis=1)
    weights = weights * (radius / norms) ** 2

    return Domain(grid, omega, interior_flat, boundary_flat,
                  normals, weights, collar_width, radius)


@dataclasses.dataclass(frozen=True)
class BoundaryFunction:
    """Complex nodal vector over the boundary nodes of a domain."""

    domain: Domain
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != (self.domain.n_boundary,):
            raise ValidationError(
                f"boundary function length {v.shape} does not match "
                f"{self.domain.n_boundary} boundary nodes")
        if v.dtype not in (np.float64, np.complex128):
            v = v.astype(np.complex128)
        v = np.ascontiguousarray(v)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, domain: Domain, fn) -> "BoundaryFunction":
        p = domain.boundary_points
        return cls(domain, np.asarray(fn(p[:, 0], p[:, 1], p[:, 2])))

    def norm(self) -> float:
        """Quadrature-weighted L2(boundary) norm."""
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2 * self.domain.weights)))


def check_same_domain(a, b):
    if a.domain.fingerprint != b.domain.fingerprint:
        raise DomainMismatch("objects live on different domains")


def boundary_pairing(f: BoundaryFunction, g: BoundaryFunction) -> complex:
    """Bilinear surface pairing sum_b f_b g_b w_b (no complex conjugation)."""
    check_same_domain(f, g)
    return complex(np.sum(f.values * g.values * f.domain.weights))


def trace(field: ScalarField, domain: Domain) -> BoundaryFunction:
    """Restrict a grid field to the boundary nodes."""
    if field.grid != domain.grid:
        raise DomainMismatch("field grid does not match domain grid")
    return BoundaryFunction(domain, field.values.ravel()[domain.boundary_flat])
