"""Named conductivity families used by the CLI and the test harness.

Every family is clamped to equal one on the collar: profiles are multiplied
by a smooth cutoff supported strictly inside radius (domain radius - collar).
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .grid import Grid, ScalarField


def smoothstep(t: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.maximum(1.0 - t, 1e-300)), 0.0)
    return a / (a + b)


def radial_cutoff(grid: Grid, r_stop: float, taper: float) -> np.ndarray:
    """1 inside r_stop - taper, 0 beyond r_stop."""
    return smoothstep((r_stop - grid.radius) / taper)


def compact_gaussian(grid: Grid, width: float = None, center=(0.0, 0.0, 0.0),
                     r_stop: float = None, taper: float = None) -> ScalarField:
    """A Gaussian profile with a smooth cutoff making the support compact
    (spectral operators require exact compact support inside the box)."""
    L = grid.box_halfwidth
    width = width if width is not None else 0.25 * L
    r_stop = r_stop if r_stop is not None else 0.85 * L
    taper = taper if taper is not None else 0.25 * L
    x, y, z = grid.xyz
    cx, cy, cz = center
    r2 = (x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2
    vals = np.exp(-r2 / width ** 2) * radial_cutoff(grid, r_stop, taper)
    return ScalarField(grid, vals)


def gaussian_bump(grid: Grid, amplitude: float = 0.3, width: float = None,
                  center=(0.0, 0.0, 0.0), r_stop: float = None,
                  taper: float = None) -> ScalarField:
    """gamma = (1 + a exp(-|x-x0|^2/w^2))^2, clamped to the collar."""
    L = grid.box_halfwidth
    width = width if width is not None else 0.25 * L
    r_stop = r_stop if r_stop is not None else 0.5 * L
    taper = taper if taper is not None else 0.1 * L
    x, y, z = grid.xyz
    cx, cy, cz = center
    r2 = (x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2
    profile = amplitude * np.exp(-r2 / width ** 2)
    profile *= radial_cutoff(grid, r_stop, taper)
    return ScalarField(grid, (1.0 + profile) ** 2, kind="conductivity")


def two_bumps(grid: Grid, amplitude: float = 0.25, width: float = None,
              separation: float = None, r_stop: float = None,
              taper: float = None) -> ScalarField:
    L = grid.box_halfwidth
    width = width if width is not None else 0.16 * L
    separation = separation if separation is not None else 0.22 * L
    r_stop = r_stop if r_stop is not None else 0.5 * L
    taper = taper if taper is not None else 0.1 * L
    x, y, z = grid.xyz
    p1 = amplitude * np.exp(-((x - separation) ** 2 + y ** 2 + z ** 2) / width ** 2)
    p2 = 0.6 * amplitude * np.exp(-((x + separation) ** 2 + y ** 2 + z ** 2) / width ** 2)
    profile = (p1 + p2) * radial_cutoff(grid, r_stop, taper)
    return ScalarField(grid, (1.0 + profile) ** 2, kind="conductivity")


def cusp(grid: Grid, amplitude: float = 0.3, width: float = None,
         center=(0.0, 0.0, 0.0), exponent: float = 1.6) -> ScalarField:
    """gamma = (1 + a max(0, 1 - |x-x0|/w)^1.6)^2: bounded but with a
    derivative kink, a rough profile that is not Lipschitz in its second
    derivatives."""
    L = grid.box_halfwidth
    width = width if width is not None else 0.35 * L
    x, y, z = grid.xyz
    cx, cy, cz = center
    r = np.sqrt((x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2)
    if np.linalg.norm(center) + width > 0.5 * L:
        raise ValidationError("cusp support must stay inside the collar")
    profile = amplitude * np.maximum(0.0, 1.0 - r / width) ** exponent
    return ScalarField(grid, (1.0 + profile) ** 2, kind="conductivity")


FAMILIES = {
    "bump": gaussian_bump,
    "two-bump": two_bumps,
    "cusp": cusp,
}


def build_conductivity(name: str, grid: Grid, params: dict = None) -> ScalarField:
    if name not in FAMILIES:
        raise ValidationError(f"unknown conductivity family {name!r}; "
                              f"choose from {sorted(FAMILIES)}")
    return FAMILIES[name](grid, **(params or {}))
