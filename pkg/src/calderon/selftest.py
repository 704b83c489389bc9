"""Fast invariant suite behind the ``selftest`` subcommand.

Runs a reduced-size version of the main consistency checks (calculus order,
pairing symmetry, reduction identity, Faddeev right inverse, CGO contraction,
zeta-pair algebra, serialization) and reports pass/fail per check.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np

from .config import RunConfig
from .domain import BoundaryFunction, ball_domain, boundary_pairing, trace
from .families import gaussian_bump
from .faddeev import gzeta_apply
from .forward import (assemble_dtn, conductivity_to_potential,
                      dtn_operator_norm, solve_schrodinger_dirichlet)
from .cgo import solve_cgo
from .grid import ComplexFrequency, Grid, ScalarField, conjugated_laplacian
from .recon import make_zeta_pair
from .stability import dtn_distance
from .storage import load_field, save_field


def run(cfg: RunConfig) -> dict:
    checks = {}

    def record(name, ok, detail):
        checks[name] = {"pass": bool(ok), "detail": detail}

    n = min(cfg.grid_n, 24)
    grid = Grid(n, cfg.box_halfwidth)
    L = cfg.box_halfwidth
    domain = ball_domain(grid, cfg.domain_radius_frac * L, cfg.collar_frac * L)
    gamma = gaussian_bump(grid)

    # calculus: linear fields are exact for the gradient
    f = ScalarField.from_function(grid, lambda x, y, z: x)
    from .grid import gradient
    gx = gradient(f)[0].values
    err = float(np.max(np.abs(gx - 1.0)))
    record("gradient_linear_exact", err < 1e-12, f"max dev {err:.2e}")

    # pairing symmetry on random boundary vectors
    rng = np.random.default_rng(cfg.seed)
    a = BoundaryFunction(domain, rng.standard_normal(domain.n_boundary))
    b = BoundaryFunction(domain, rng.standard_normal(domain.n_boundary))
    sym = abs(boundary_pairing(a, b) - boundary_pairing(b, a))
    record("pairing_symmetric", sym < 1e-12, f"asym {sym:.2e}")

    # reduction identity
    q = conductivity_to_potential(gamma, domain, cfg.ellipticity_c)
    Lg = assemble_dtn(gamma, "gamma", domain, cfg.ellipticity_c)
    Lq = assemble_dtn(q, "q", domain)
    L0 = assemble_dtn(None, "zero", domain)
    d = dtn_distance(Lg, Lq)
    bound = 1e-4 * dtn_operator_norm(L0)
    record("reduction_identity", d < bound, f"dist {d:.2e} vs bound {bound:.2e}")

    # sqrt(gamma) recovery through the Schrodinger solve
    ones = BoundaryFunction(domain, np.ones(domain.n_boundary))
    sol = solve_schrodinger_dirichlet(q, ones)
    uref = np.sqrt(gamma.values.real)
    dev = np.abs(sol.field.values - uref)[domain.omega]
    record("sqrt_gamma_recovery", float(np.max(dev)) < 1e-8,
           f"max dev {float(np.max(dev)):.2e}")

    # Faddeev right inverse at k = 4
    zeta = ComplexFrequency.from_orthogonal(4.0, (1, 0, 0), (0, 1, 0))
    bump = ScalarField.from_function(
        grid, lambda x, y, z: np.exp(-(x * x + y * y + z * z) / (0.25 * L) ** 2))
    g = gzeta_apply(bump, zeta)
    back = conjugated_laplacian(g, zeta).values
    interior = grid.interior_mask
    rel = float(np.linalg.norm((back - bump.values)[interior])
                / np.linalg.norm(bump.values[interior]))
    record("gzeta_right_inverse", rel < 1e-3, f"rel err {rel:.2e}")

    # CGO contraction at k = 8
    czeta = ComplexFrequency.from_orthogonal(8.0, (1, 0, 0), (0, 1, 0))
    cgo = solve_cgo(q, czeta, tol=cfg.cgo_tol, max_iter=cfg.cgo_max_iter)
    record("cgo_contraction", cgo.contraction_estimate < 1.0
           and cgo.residual < 1e-6,
           f"contraction {cgo.contraction_estimate:.3f}, "
           f"residual {cgo.residual:.2e}")

    # zeta pair algebra on seeded draws
    worst = 0.0
    for _ in range(200):
        xi = rng.standard_normal(3) * 3.0
        if np.linalg.norm(xi) < 1e-3:
            continue
        k = float(rng.uniform(1.0, 4.0)) + np.linalg.norm(xi)
        pair = make_zeta_pair(xi, k)
        worst = max(worst,
                    abs(np.sum(pair.zeta1.zeta ** 2)) / k ** 2,
                    float(np.max(np.abs(pair.zeta1.zeta + pair.zeta2.zeta
                                        + 1j * xi))) / k)
    record("zeta_pair_algebra", worst < 1e-12, f"worst dev {worst:.2e}")

    # serialization round trip
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "field.bin"
        save_field(gamma, path)
        gamma2 = load_field(path)
        identical = np.array_equal(gamma2.values, gamma.values.astype(complex))
    record("serialization_roundtrip", identical, "bit exact" if identical
           else "MISMATCH")

    all_pass = all(c["pass"] for c in checks.values())
    return {"all_pass": all_pass, "checks": checks}
